use nalgebra::DMatrix;

use super::{ensure_psd, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::util::grid_distance;

/// Distances on the periodic 1-D grid, in grid units scaled by `spacing`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridMetric {
    pub n: usize,
    pub spacing: f64,
}

impl GridMetric {
    pub fn periodic(n: usize) -> Self {
        GridMetric { n, spacing: 1.0 }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.spacing * grid_distance(i, j, self.n) as f64
    }

    pub fn max_distance(&self) -> f64 {
        self.spacing * (self.n / 2) as f64
    }
}

/// Raised-cosine taper: 1 up to `d0`, 0 from `d1`.
pub fn cosine_taper(d: f64, d0: f64, d1: f64) -> f64 {
    if d <= d0 {
        1.0
    } else if d >= d1 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (d - d0) / (d1 - d0)).cos())
    }
}

/// `max(0, 1 - (delta / l)^2)`.
pub fn quadratic_taper(delta: f64, l: f64) -> f64 {
    let r = delta / l;
    (1.0 - r * r).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaperMode {
    /// Cosine taper only.
    Horizontal,
    /// Quadratic taper only.
    Vertical,
    Both,
}

impl TaperMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TaperMode::Horizontal => "horizontal",
            TaperMode::Vertical => "vertical",
            TaperMode::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(TaperMode::Horizontal),
            "vertical" => Ok(TaperMode::Vertical),
            "both" => Ok(TaperMode::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown taper mode {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaperSpec {
    pub d0: f64,
    pub d1: f64,
    pub vertical_halfwidth: f64,
    pub mode: TaperMode,
}

impl TaperSpec {
    pub fn new(d0: f64, d1: f64, vertical_halfwidth: f64, mode: TaperMode) -> Result<Self> {
        let t = TaperSpec {
            d0,
            d1,
            vertical_halfwidth,
            mode,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.d0 && self.d0 < self.d1) {
            return Err(Error::InvalidConfig(format!(
                "taper needs 0 <= d0 < d1, got d0={} d1={}",
                self.d0, self.d1
            )));
        }
        if !(self.vertical_halfwidth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quadratic taper scale must be > 0, got {}",
                self.vertical_halfwidth
            )));
        }
        Ok(())
    }

    pub fn weight(&self, d: f64) -> f64 {
        let h = cosine_taper(d, self.d0, self.d1);
        let v = quadratic_taper(d, self.vertical_halfwidth);
        match self.mode {
            TaperMode::Horizontal => h,
            TaperMode::Vertical => v,
            TaperMode::Both => h * v,
        }
    }

    pub fn matrix(&self, metric: &GridMetric) -> DMatrix<f64> {
        DMatrix::from_fn(metric.n, metric.n, |i, j| {
            self.weight(metric.distance(i, j))
        })
    }
}

/// Schur-product localization followed by PSD repair.
///
/// When the repair has to clip eigenvalues, the result is rescaled by a
/// diagonal congruence so the variances of the tapered matrix are kept.
pub fn localize(
    c: &CovarianceMatrix,
    t: &TaperSpec,
    metric: &GridMetric,
) -> Result<CovarianceMatrix> {
    Error::check_dim(metric.n, c.dim())?;
    t.validate()?;
    let tapered = c.entries().component_mul(&t.matrix(metric));
    let target = tapered.diagonal();
    let raw = CovarianceMatrix::new(tapered)?;
    let repaired = ensure_psd(&raw, 0.0)?;
    if repaired == raw {
        return Ok(raw);
    }
    let got = repaired.variances();
    let scale = target.zip_map(&got, |want, have| {
        if have > 0.0 {
            (want / have).sqrt()
        } else {
            0.0
        }
    });
    let mut m = repaired.entries().clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] *= scale[i] * scale[j];
        }
        m[(i, i)] = target[i];
    }
    CovarianceMatrix::new(m)
}
