//! `WERRNN 1` checkpoints.
//!
//! ```text
//! WERRNN 1
//! dims <in> <h1> <h2> <h3> <out>
//! dropout <p>
//! ```
//! followed, layer by layer, by the weight matrix (`out x in`) and the bias
//! (`out x 1`) as row-major little-endian doubles.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::mlp::{Layer, MlpParams};
use crate::covmodel::io::{read_header_line, read_payload, write_payload};
use crate::error::{Error, Result};

pub fn write_checkpoint<W: Write>(w: &mut W, params: &MlpParams) -> Result<()> {
    let spec = params.spec();
    let dims: Vec<String> = spec.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "WERRNN 1")?;
    writeln!(w, "dims {}", dims.join(" "))?;
    writeln!(w, "dropout {}", params.dropout)?;
    for l in &params.layers {
        write_payload(w, &l.weights)?;
        write_payload(
            w,
            &DMatrix::from_column_slice(l.bias.len(), 1, l.bias.as_slice()),
        )?;
    }
    Ok(())
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("WERRNN header", detail)
}

pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<MlpParams> {
    if read_header_line(r)? != "WERRNN 1" {
        return Err(bad("missing magic"));
    }
    let dims_line = read_header_line(r)?;
    let dims: Vec<usize> = match dims_line.strip_prefix("dims ") {
        Some(rest) => rest
            .split_ascii_whitespace()
            .map(|t| t.parse().map_err(|_| bad(dims_line.clone())))
            .collect::<Result<_>>()?,
        None => return Err(bad(dims_line)),
    };
    if dims.len() < 2 || dims.contains(&0) {
        return Err(bad(dims_line));
    }
    let drop_line = read_header_line(r)?;
    let dropout: f64 = drop_line
        .strip_prefix("dropout ")
        .and_then(|t| t.parse().ok())
        .filter(|p| (0.0..1.0).contains(p))
        .ok_or_else(|| bad(drop_line.clone()))?;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let weights = read_payload(r, w[1], w[0])?;
        let bias = read_payload(r, w[1], 1)?.column(0).into_owned();
        layers.push(Layer { weights, bias });
    }
    let params = MlpParams { layers, dropout };
    if !params.is_finite() {
        return Err(Error::format("WERRNN payload", "non-finite parameter"));
    }
    Ok(params)
}

pub fn write_checkpoint_file(path: &Path, params: &MlpParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<MlpParams> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralerr::MlpSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let spec = MlpSpec::new(9, 7, 1);
        let p = MlpParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert!(buf.starts_with(b"WERRNN 1\ndims 9 7 7 7 1\ndropout 0.2\n"));
        let q = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(buf.len(), 36 + spec.param_count() * 8);
    }

    #[test]
    fn rejects_truncated_and_bad_headers() {
        let p = MlpParams::zeros(&MlpSpec::new(3, 2, 1));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert!(read_checkpoint(&mut &buf[..buf.len() - 1]).is_err());
        assert!(read_checkpoint(&mut &b"WERRNN 2\n"[..]).is_err());
        assert!(read_checkpoint(&mut &b"WERRNN 1\ndims 3 x\ndropout 0\n"[..]).is_err());
        assert!(read_checkpoint(&mut &b"WERRNN 1\ndims 3 1\ndropout 1.5\n"[..]).is_err());
    }
}
