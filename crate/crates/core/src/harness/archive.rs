//! Run archives.
//!
//! A run is a directory holding
//!
//! - `manifest.txt`: `key = value` lines (format, run name, mode, hashes,
//!   record count, completeness);
//! - `config.txt`: the canonical configuration;
//! - `records.bin`: header `WERRREC 1 <n> <m>\n`, then one frame per window:
//!   window and status as little-endian u64, then `xb, xa, etab, etaa`
//!   (`n` doubles each), `omb, oma` (`m` each) and [`COST_FIELDS`];
//! - `truth.bin`: truth at every sub-window boundary, one row per time, as a
//!   `WERRMAT 1` matrix.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::config::{CycleMode, ExperimentConfig};
use crate::covmodel::io::read_header_line;
use crate::covmodel::{read_matrix, write_matrix};
use crate::dynamics::StateVector;
use crate::error::{Error, Result};

pub const RUNS_DIR_ENV: &str = "WERR_RUNS_DIR";

/// Output root: `$WERR_RUNS_DIR`, or `./runs`.
pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Names of the per-window cost entries.
pub const COST_FIELDS: [&str; 8] = [
    "background_jb",
    "background_jo",
    "background_jq",
    "analysis_jb",
    "analysis_jo",
    "analysis_jq",
    "inner_iterations",
    "restarts",
];

#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub window: u64,
    /// 0 when the minimization converged, 1 otherwise.
    pub status: u64,
    pub xb: StateVector,
    pub xa: StateVector,
    pub etab: StateVector,
    pub etaa: StateVector,
    pub omb: Vec<f64>,
    pub oma: Vec<f64>,
    pub cost: [f64; 8],
}

impl WindowRecord {
    pub fn increment(&self) -> StateVector {
        &self.xa - &self.xb
    }

    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.window.to_le_bytes())?;
        w.write_all(&self.status.to_le_bytes())?;
        let vals = self
            .xb
            .iter()
            .chain(self.xa.iter())
            .chain(self.etab.iter())
            .chain(self.etaa.iter())
            .chain(&self.omb)
            .chain(&self.oma)
            .chain(&self.cost);
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn frame_len(n: usize, m: usize) -> usize {
        16 + 8 * (4 * n + 2 * m + COST_FIELDS.len())
    }

    fn parse(buf: &[u8], n: usize, m: usize) -> Self {
        let u = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
        let vals: Vec<f64> = buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let vec = |k: usize| DVector::from_column_slice(&vals[k * n..(k + 1) * n]);
        let o = 4 * n;
        WindowRecord {
            window: u(0),
            status: u(8),
            xb: vec(0),
            xa: vec(1),
            etab: vec(2),
            etaa: vec(3),
            omb: vals[o..o + m].to_vec(),
            oma: vals[o + m..o + 2 * m].to_vec(),
            cost: vals[o + 2 * m..].try_into().expect("cost fields"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArchive {
    pub config: ExperimentConfig,
    pub mode: CycleMode,
    /// SHA-256 of the Q matrix used for weak-constraint cycling.
    pub q_hash: Option<String>,
    /// Truth at sub-window boundaries, one row per time.
    pub truth: DMatrix<f64>,
    pub records: Vec<WindowRecord>,
    pub complete: bool,
    /// Window index and message when cycling aborted.
    pub failure: Option<(usize, String)>,
}

impl RunArchive {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn obs_per_window(&self) -> usize {
        self.config.obs_per_window()
    }

    pub fn truth_state(&self, t: usize) -> StateVector {
        self.truth.row(t).transpose()
    }

    /// Records after the configured spin-up.
    pub fn post_spinup(&self) -> &[WindowRecord] {
        &self.records[self.config.diag_spinup.min(self.records.len())..]
    }

    fn records_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "WERRREC 1 {} {}", self.n(), self.obs_per_window())?;
        for r in &self.records {
            Error::check_dim(self.n(), r.xb.len())?;
            Error::check_dim(self.obs_per_window(), r.omb.len())?;
            r.write(&mut buf)?;
        }
        Ok(buf)
    }

    fn truth_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &self.truth)?;
        Ok(buf)
    }

    fn hash_parts(&self, records: &[u8], truth: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(self.config.canonical().as_bytes());
        h.update(format!("mode={}\n", self.mode.as_str()));
        h.update(format!("q={}\n", self.q_hash.as_deref().unwrap_or("")));
        h.update(format!("complete={}\n", self.complete));
        h.update(records);
        h.update(truth);
        hex::encode(h.finalize())
    }

    /// SHA-256 over configuration, mode, records and truth. Contains no
    /// timestamps or paths, so identical runs hash identically.
    pub fn content_hash(&self) -> Result<String> {
        Ok(self.hash_parts(&self.records_bytes()?, &self.truth_bytes()?))
    }

    pub fn manifest(&self) -> Result<BTreeMap<&'static str, String>> {
        let mut m = BTreeMap::new();
        m.insert("format", "WERRRUN 1".to_string());
        m.insert("run", self.config.run_name.clone());
        m.insert("mode", self.mode.as_str().to_string());
        m.insert("q_hash", self.q_hash.clone().unwrap_or_default());
        m.insert("config_hash", self.config.hash());
        m.insert("content_hash", self.content_hash()?);
        m.insert("windows", self.records.len().to_string());
        m.insert("n", self.n().to_string());
        m.insert("obs_per_window", self.obs_per_window().to_string());
        m.insert("complete", self.complete.to_string());
        m.insert(
            "failure",
            self.failure
                .as_ref()
                .map(|(w, msg)| format!("{w}: {msg}"))
                .unwrap_or_default(),
        );
        m.insert("version", env!("CARGO_PKG_VERSION").to_string());
        Ok(m)
    }

    /// Writes the archive into `dir`, replacing any previous contents of
    /// the four archive files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let records = self.records_bytes()?;
        let truth = self.truth_bytes()?;
        fs::write(dir.join("config.txt"), self.config.canonical())?;
        fs::write(dir.join("records.bin"), &records)?;
        fs::write(dir.join("truth.bin"), &truth)?;
        let manifest: String = self
            .manifest()?
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = read_kv(&dir.join("manifest.txt"))?;
        let get = |k: &str| {
            manifest
                .get(k)
                .cloned()
                .ok_or_else(|| Error::format("run manifest", format!("missing {k}")))
        };
        if get("format")? != "WERRRUN 1" {
            return Err(Error::format("run manifest", "unsupported format"));
        }
        let config = ExperimentConfig::parse(&fs::read_to_string(dir.join("config.txt"))?)?;
        let mode = match get("mode")?.as_str() {
            "sc" => CycleMode::Strong,
            "wc" => CycleMode::Weak,
            other => return Err(Error::format("run manifest", format!("mode {other:?}"))),
        };
        let q_hash = Some(get("q_hash")?).filter(|s| !s.is_empty());
        let complete = get("complete")? == "true";
        let failure = Some(get("failure")?).filter(|s| !s.is_empty()).map(|s| {
            let (w, msg) = s.split_once(": ").unwrap_or(("0", s.as_str()));
            (w.parse().unwrap_or(0), msg.to_string())
        });

        let mut rec_reader = BufReader::new(fs::File::open(dir.join("records.bin"))?);
        let header = read_header_line(&mut rec_reader)?;
        let (n, m) = match header
            .split_ascii_whitespace()
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["WERRREC", "1", n, m] => (
                n.parse::<usize>()
                    .map_err(|_| Error::format("WERRREC header", header.clone()))?,
                m.parse::<usize>()
                    .map_err(|_| Error::format("WERRREC header", header.clone()))?,
            ),
            _ => return Err(Error::format("WERRREC header", header)),
        };
        Error::check_dim(config.n, n)?;
        Error::check_dim(config.obs_per_window(), m)?;
        let mut body = Vec::new();
        rec_reader.read_to_end(&mut body)?;
        let frame = WindowRecord::frame_len(n, m);
        if body.len() % frame != 0 {
            return Err(Error::format("records.bin", "truncated frame"));
        }
        let records: Vec<WindowRecord> = body
            .chunks_exact(frame)
            .map(|b| WindowRecord::parse(b, n, m))
            .collect();
        let truth = read_matrix(&mut BufReader::new(fs::File::open(dir.join("truth.bin"))?))?;

        let archive = RunArchive {
            config,
            mode,
            q_hash,
            truth,
            records,
            complete,
            failure,
        };
        if archive.records.len().to_string() != get("windows")? {
            return Err(Error::format(
                "run archive",
                "record count differs from manifest",
            ));
        }
        if archive.content_hash()? != get("content_hash")? {
            return Err(Error::format("run archive", "content hash mismatch"));
        }
        Ok(archive)
    }

    /// Reads only the manifest of a run directory.
    pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
        read_kv(&dir.join("manifest.txt"))
    }
}

pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut m = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .or_else(|| line.split_once('='))
            .ok_or_else(|| {
                Error::format(
                    "key = value file",
                    format!("{}: bad line {line:?}", path.display()),
                )
            })?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_archive() -> RunArchive {
        let config = ExperimentConfig {
            n: 6,
            obs_stride: 3,
            windows: 2,
            ..Default::default()
        };
        let m = config.obs_per_window();
        let rec = |w: u64| WindowRecord {
            window: w,
            status: w % 2,
            xb: DVector::from_fn(6, |i, _| i as f64 + w as f64),
            xa: DVector::from_fn(6, |i, _| i as f64 * 0.5),
            etab: DVector::zeros(6),
            etaa: DVector::from_element(6, 0.125),
            omb: (0..m).map(|j| j as f64 * 0.1).collect(),
            oma: (0..m).map(|j| -(j as f64)).collect(),
            cost: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0],
        };
        RunArchive {
            config,
            mode: CycleMode::Weak,
            q_hash: Some("abc".into()),
            truth: DMatrix::from_fn(9, 6, |i, j| (i * 6 + j) as f64),
            records: vec![rec(0), rec(1)],
            complete: true,
            failure: None,
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = tiny_archive();
        a.write(dir.path()).unwrap();
        let b = RunArchive::read(dir.path()).unwrap();
        assert_eq!(a, b);
        let manifest = RunArchive::read_manifest(dir.path()).unwrap();
        assert_eq!(manifest["content_hash"], a.content_hash().unwrap());
        assert_eq!(manifest["config_hash"], a.config.hash());
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_archive().write(dir.path()).unwrap();
        let path = dir.path().join("records.bin");
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(RunArchive::read(dir.path()).is_err());
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(RunArchive::read(dir.path()).is_err());
    }

    #[test]
    fn hash_ignores_nothing_that_matters() {
        let a = tiny_archive();
        let mut b = a.clone();
        b.records[1].oma[0] += 1e-12;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
        let mut c = a.clone();
        c.q_hash = None;
        assert_ne!(a.content_hash().unwrap(), c.content_hash().unwrap());
    }

    #[test]
    fn frame_size() {
        let a = tiny_archive();
        let bytes = a.records_bytes().unwrap();
        let header = "WERRREC 1 6 8\n".len();
        assert_eq!(bytes.len(), header + 2 * WindowRecord::frame_len(6, 8));
    }
}
