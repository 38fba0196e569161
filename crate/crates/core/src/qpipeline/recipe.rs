use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::covmodel::{
    read_matrix_file, write_matrix_file, CovarianceMatrix, TaperMode, TaperSpec,
};
use crate::error::{Error, Result};
use crate::harness::read_kv;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QKind {
    Pred,
    Oper,
    Ann,
    IncrementClimatology,
    Daley,
}

impl QKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QKind::Pred => "pred",
            QKind::Oper => "oper",
            QKind::Ann => "ann",
            QKind::IncrementClimatology => "increment_climatology",
            QKind::Daley => "daley",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pred" => QKind::Pred,
            "oper" => QKind::Oper,
            "ann" => QKind::Ann,
            "increment_climatology" | "incr" => QKind::IncrementClimatology,
            "daley" => QKind::Daley,
            other => return Err(Error::InvalidConfig(format!("unknown Q kind {other:?}"))),
        })
    }
}

/// How a Q matrix was made.
#[derive(Clone, Debug, PartialEq)]
pub struct QRecipe {
    pub kind: QKind,
    /// Runs, ensembles or checkpoints the matrix was built from.
    pub sources: Vec<String>,
    pub taper: Option<TaperSpec>,
    pub std_scale: f64,
    pub seed: u64,
    pub samples: usize,
}

impl QRecipe {
    pub fn new(kind: QKind) -> Self {
        QRecipe {
            kind,
            sources: Vec::new(),
            taper: None,
            std_scale: 1.0,
            seed: 0,
            samples: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std_scale > 0.0 && self.std_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "std_scale must be > 0, got {}",
                self.std_scale
            )));
        }
        if let Some(t) = &self.taper {
            t.validate()?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("kind", self.kind.as_str().to_string());
        m.insert("sources", self.sources.join(","));
        m.insert("std_scale", self.std_scale.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("samples", self.samples.to_string());
        if let Some(t) = &self.taper {
            m.insert("taper.d0", t.d0.to_string());
            m.insert("taper.d1", t.d1.to_string());
            m.insert("taper.vertical", t.vertical_halfwidth.to_string());
            m.insert("taper.mode", t.mode.as_str().to_string());
        }
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_kv(m: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            m.get(k)
                .ok_or_else(|| Error::format("Q recipe", format!("missing {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::format("Q recipe", format!("bad {k}")))
        };
        let taper = if m.contains_key("taper.d0") {
            Some(TaperSpec::new(
                num("taper.d0")?,
                num("taper.d1")?,
                num("taper.vertical")?,
                TaperMode::parse(get("taper.mode")?)?,
            )?)
        } else {
            None
        };
        let sources = get("sources")?;
        let r = QRecipe {
            kind: QKind::parse(get("kind")?)?,
            sources: if sources.is_empty() {
                Vec::new()
            } else {
                sources.split(',').map(String::from).collect()
            },
            taper,
            std_scale: num("std_scale")?,
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::format("Q recipe", "bad seed"))?,
            samples: get("samples")?
                .parse()
                .map_err(|_| Error::format("Q recipe", "bad samples"))?,
        };
        r.validate()?;
        Ok(r)
    }
}

/// `q.bin` → `q.bin.recipe`.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    let mut s = matrix_path.as_os_str().to_owned();
    s.push(".recipe");
    PathBuf::from(s)
}

/// Writes the matrix and its recipe sidecar.
pub fn write_q(path: &Path, q: &CovarianceMatrix, recipe: &QRecipe) -> Result<()> {
    write_matrix_file(path, q.entries())?;
    fs::write(sidecar_path(path), recipe.to_kv())?;
    Ok(())
}

pub fn read_q(path: &Path) -> Result<(CovarianceMatrix, QRecipe)> {
    let q = CovarianceMatrix::new(read_matrix_file(path)?)?;
    let recipe = QRecipe::from_kv(&read_kv(&sidecar_path(path))?)?;
    Ok((q, recipe))
}
