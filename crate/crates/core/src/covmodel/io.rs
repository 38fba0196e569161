//! `WERRMAT 1` matrix files and CSV export.
//!
//! Layout: one ASCII header line `WERRMAT 1 <rows> <cols>\n`, then
//! `rows * cols` little-endian IEEE-754 doubles in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "WERRMAT 1 {} {}", m.nrows(), m.ncols())?;
    write_payload(w, m)
}

/// Row-major little-endian payload without a header.
pub(crate) fn write_payload<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_payload<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf).map_err(|e| {
        Error::format(
            "WERRMAT payload",
            format!("expected {} values: {e}", rows * cols),
        )
    })?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub(crate) fn read_header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format("header", "missing newline"));
    }
    line.pop();
    String::from_utf8(line).map_err(|_| Error::format("header", "not UTF-8"))
}

pub fn read_matrix<R: BufRead>(r: &mut R) -> Result<DMatrix<f64>> {
    let header = read_header_line(r)?;
    let parts: Vec<&str> = header.split_ascii_whitespace().collect();
    match parts.as_slice() {
        ["WERRMAT", "1", rows, cols] => {
            let rows: usize = rows
                .parse()
                .map_err(|_| Error::format("WERRMAT header", header.clone()))?;
            let cols: usize = cols
                .parse()
                .map_err(|_| Error::format("WERRMAT header", header.clone()))?;
            read_payload(r, rows, cols)
        }
        _ => Err(Error::format("WERRMAT header", header)),
    }
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}

/// Writes the matrix as CSV with shortest round-trip decimal formatting.
pub fn write_csv<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for i in 0..m.nrows() {
        out.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(buf.starts_with(b"WERRMAT 1 2 3\n"));
        assert_eq!(buf.len(), 14 + 6 * 8);
        // Row-major: second value is m[(0, 1)].
        assert_eq!(&buf[14 + 8..14 + 16], &2.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_header_and_short_payload() {
        assert!(read_matrix(&mut &b"WERRMAT 2 1 1\n"[..]).is_err());
        assert!(read_matrix(&mut &b"WERRMAT 1 1 1\n\0\0"[..]).is_err());
    }

    #[test]
    fn csv_is_lossless() {
        let m = DMatrix::from_row_slice(1, 2, &[0.1 + 0.2, -1e-300]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let vals: Vec<f64> = text.trim().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals, vec![0.1 + 0.2, -1e-300]);
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let m = DMatrix::from_fn(rows, cols, |i, j| f64::from_bits(seed.wrapping_mul(31 + i as u64).wrapping_add(j as u64) >> 2));
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(&mut &buf[..]).unwrap();
            prop_assert_eq!(back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
