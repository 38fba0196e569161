//! Dense covariance algebra: estimation, localization, PSD repair, square
//! roots and correlation diagnostics.

pub(crate) mod io;
mod taper;

pub use io::{read_matrix, read_matrix_file, write_csv, write_matrix, write_matrix_file};
pub use taper::{cosine_taper, localize, quadratic_taper, GridMetric, TaperMode, TaperSpec};

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues within this fraction of the largest are treated as already
/// satisfying a floor, so that repaired matrices are left alone on re-entry.
const PSD_SLACK: f64 = 1e-13;

/// Symmetric covariance matrix with a lazily computed lower-triangular
/// square-root factor.
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    sqrt: OnceLock<DMatrix<f64>>,
}

impl Clone for CovarianceMatrix {
    fn clone(&self) -> Self {
        let sqrt = OnceLock::new();
        if let Some(l) = self.sqrt.get() {
            let _ = sqrt.set(l.clone());
        }
        CovarianceMatrix {
            entries: self.entries.clone(),
            sqrt,
        }
    }
}

impl fmt::Debug for CovarianceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceMatrix")
            .field("dim", &self.dim())
            .field("entries", &self.entries)
            .finish()
    }
}

impl PartialEq for CovarianceMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl CovarianceMatrix {
    /// Builds a covariance from a square matrix, symmetrizing it.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariance has non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self::from_symmetric(sym))
    }

    fn from_symmetric(entries: DMatrix<f64>) -> Self {
        CovarianceMatrix {
            entries,
            sqrt: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_symmetric(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_symmetric(DMatrix::zeros(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_symmetric(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `std^2 * exp(-d^2 / (2 length^2))` on the periodic grid.
    pub fn gaussian(metric: &GridMetric, std: f64, length: f64) -> Self {
        let n = metric.n;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let d = metric.distance(i, j);
            let rho = if length > 0.0 {
                (-d * d / (2.0 * length * length)).exp()
            } else if i == j {
                1.0
            } else {
                0.0
            };
            std * std * rho
        });
        Self::from_symmetric(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn variances(&self) -> DVector<f64> {
        self.entries.diagonal()
    }

    pub fn std_profile(&self) -> DVector<f64> {
        self.entries.diagonal().map(|v| v.max(0.0).sqrt())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        let eig = self.eigen()?;
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(DVector::from_vec(v))
    }

    fn eigen(&self) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
        self.entries
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "symmetric eigen-decomposition did not converge (dim {}, diag range [{:e}, {:e}])",
                    self.dim(),
                    self.entries.diagonal().min(),
                    self.entries.diagonal().max()
                ))
            })
    }

    /// Returns true when every eigenvalue is at least `-tol * lambda_max`.
    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        let ev = self.eigenvalues()?;
        let max = ev.max().max(0.0);
        Ok(ev.min() >= -tol * max)
    }

    /// Lower-triangular `L` with `L L^T = C`, computed once and cached.
    ///
    /// Positive-definite input uses a plain Cholesky factorization. For
    /// rank-deficient input a small diagonal jitter is added until the
    /// factorization succeeds while keeping the relative reconstruction
    /// error below 1e-8.
    pub fn sqrt_factor(&self) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.sqrt.get() {
            return Ok(l);
        }
        let l = self.compute_sqrt()?;
        Ok(self.sqrt.get_or_init(|| l))
    }

    fn compute_sqrt(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if self.is_zero() {
            return Ok(DMatrix::zeros(n, n));
        }
        if let Some(ch) = self.entries.clone().cholesky() {
            return Ok(ch.l());
        }
        let ev = self.eigenvalues()?;
        let lmax = ev.max();
        if ev.min() < -1e-12 * lmax {
            return Err(Error::NotPsd { min_eig: ev.min() });
        }
        let fro = self.entries.norm();
        let scale = self.entries.diagonal().max();
        for exp in (-15..=-9).map(|e| 10f64.powi(e)) {
            let mut shifted = self.entries.clone();
            for i in 0..n {
                shifted[(i, i)] += exp * scale;
            }
            if let Some(ch) = shifted.cholesky() {
                let l = ch.l();
                let err = (&l * l.transpose() - &self.entries).norm() / fro;
                if err < 1e-8 {
                    return Ok(l);
                }
            }
        }
        Err(Error::NotPsd { min_eig: ev.min() })
    }

    /// Draws `L z` with `z` standard normal.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let l = self.sqrt_factor()?;
        let z = DVector::from_fn(self.dim(), |_, _| crate::util::standard_normal(rng));
        Ok(l * z)
    }

    /// Principal sub-matrix on `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let m = DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.entries[(indices[a], indices[b])]
        });
        Self::from_symmetric(m)
    }
}

/// Provenance of a sample population.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleLabel {
    Pred,
    Eta,
    Ann,
    Increment,
}

impl SampleLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleLabel::Pred => "pred",
            SampleLabel::Eta => "eta",
            SampleLabel::Ann => "ann",
            SampleLabel::Increment => "increment",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<DVector<f64>>,
    pub label: SampleLabel,
}

impl SampleSet {
    pub fn new(samples: Vec<DVector<f64>>, label: SampleLabel) -> Result<Self> {
        if let Some(first) = samples.first() {
            let n = first.len();
            for s in &samples {
                Error::check_dim(n, s.len())?;
            }
        }
        Ok(SampleSet { samples, label })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for s in &self.samples {
            m += s;
        }
        m / self.len().max(1) as f64
    }
}

/// Unbiased sample covariance about the sample mean.
pub fn sample_covariance(s: &SampleSet) -> Result<CovarianceMatrix> {
    let m = s.len();
    if m < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: m,
        });
    }
    let n = s.dim();
    let mean = s.mean();
    let mut dev = DMatrix::zeros(n, m);
    for (j, x) in s.samples.iter().enumerate() {
        dev.set_column(j, &(x - &mean));
    }
    let mut c = &dev * dev.transpose() / (m - 1) as f64;
    // Exact symmetry: copy the upper triangle onto the lower.
    for i in 0..n {
        for j in 0..i {
            c[(i, j)] = c[(j, i)];
        }
    }
    Ok(CovarianceMatrix::from_symmetric(c))
}

/// Clips eigenvalues below `floor * lambda_max` up to that value.
pub fn ensure_psd(c: &CovarianceMatrix, floor: f64) -> Result<CovarianceMatrix> {
    if c.is_zero() {
        return Ok(c.clone());
    }
    let eig = c.eigen()?;
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 {
        return Ok(CovarianceMatrix::zeros(c.dim()));
    }
    let target = floor * lmax;
    if eig.eigenvalues.min() >= target - PSD_SLACK * lmax {
        return Ok(c.clone());
    }
    let clipped = eig.eigenvalues.map(|l| l.max(target));
    let v = &eig.eigenvectors;
    let m = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    CovarianceMatrix::new(m)
}

/// Scales every standard deviation by `factor`, leaving correlations intact.
pub fn scale_std(c: &CovarianceMatrix, factor: f64) -> Result<CovarianceMatrix> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "std scale factor must be > 0, got {factor}"
        )));
    }
    Ok(CovarianceMatrix::from_symmetric(
        c.entries() * (factor * factor),
    ))
}

/// Correlation matrix plus a per-row flag for zero-variance rows.
#[derive(Clone, Debug)]
pub struct Correlation {
    pub matrix: CovarianceMatrix,
    pub zero_variance: Vec<bool>,
}

/// Variances at or below this are treated as zero.
const ZERO_VARIANCE: f64 = 1e-300;

pub fn correlation_from_covariance(c: &CovarianceMatrix) -> Correlation {
    let n = c.dim();
    let d = c.variances();
    let zero_variance: Vec<bool> = d.iter().map(|&v| v <= ZERO_VARIANCE).collect();
    let e = c.entries();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if zero_variance[i] || zero_variance[j] {
            if i == j {
                1.0
            } else {
                0.0
            }
        } else if i == j {
            1.0
        } else {
            e[(i, j)] / (d[i] * d[j]).sqrt()
        }
    });
    Correlation {
        matrix: CovarianceMatrix::from_symmetric(m),
        zero_variance,
    }
}

/// Half-height distance of a correlation function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthScale {
    pub distance: f64,
    /// False when the correlation never drops below 0.5.
    pub crossed: bool,
}

/// First distance from `center` at which the correlation drops below 0.5.
///
/// The correlation at distance `d` is the average of the two grid points
/// at circular distance `d`, so the result is direction-independent.
pub fn length_scale(corr_row: &DVector<f64>, center: usize, metric: &GridMetric) -> LengthScale {
    let n = metric.n;
    let half = n / 2;
    let at = |d: usize| {
        let a = corr_row[(center + d) % n];
        let b = corr_row[(center + n - d % n) % n];
        0.5 * (a + b)
    };
    if half == 0 || at(1) < 0.5 {
        return LengthScale {
            distance: 0.0,
            crossed: true,
        };
    }
    let mut prev = at(1);
    for d in 2..=half {
        let cur = at(d);
        if cur < 0.5 {
            let frac = (prev - 0.5) / (prev - cur);
            return LengthScale {
                distance: metric.spacing * ((d - 1) as f64 + frac),
                crossed: true,
            };
        }
        prev = cur;
    }
    LengthScale {
        distance: metric.max_distance(),
        crossed: false,
    }
}

/// Length scale at every grid point of a covariance matrix.
pub fn length_scales(c: &CovarianceMatrix, metric: &GridMetric) -> Vec<LengthScale> {
    let corr = correlation_from_covariance(c);
    (0..c.dim())
        .map(|i| {
            if corr.zero_variance[i] {
                LengthScale {
                    distance: 0.0,
                    crossed: true,
                }
            } else {
                let row = corr.matrix.entries().row(i).transpose();
                length_scale(&row, i, metric)
            }
        })
        .collect()
}
