//! Strong- and weak-constraint 4D-Var in the forcing formulation.
//!
//! The control is `(x0, eta)`: the window's initial state and a constant
//! forcing added at every sub-window boundary. The cost is
//!
//! ```text
//! J = 1/2 |x0 - xb|^2_{B^-1} + 1/2 sum_k |H x_k - y_k|^2_{R_k^-1} + 1/2 |eta - etab|^2_{Q^-1}
//! ```
//!
//! with the trajectory driven by `mask ∘ eta`. Without a Q matrix the
//! problem is strong-constraint and `eta` is held at zero.

mod minimize;

pub use minimize::{minimize, MinimizeOptions, MinimizeReport};

use nalgebra::{DMatrix, DVector};

use crate::covmodel::{ensure_psd, CovarianceMatrix};
use crate::dynamics::{adjoint, integrate_forced, ModelSpec, StateVector, Trajectory};
use crate::error::{Error, Result};

/// Relative eigenvalue floor applied to B and Q before factorization.
pub const COV_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ControlVector {
    pub x0: StateVector,
    pub eta: StateVector,
}

impl ControlVector {
    pub fn new(x0: StateVector, eta: StateVector) -> Self {
        ControlVector { x0, eta }
    }

    pub fn norm(&self) -> f64 {
        (self.x0.norm_squared() + self.eta.norm_squared()).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Priors {
    pub xb: StateVector,
    pub etab: StateVector,
    pub b: CovarianceMatrix,
    /// Model-error covariance; `None` selects strong-constraint 4D-Var.
    pub q: Option<CovarianceMatrix>,
}

impl Priors {
    pub fn is_weak(&self) -> bool {
        self.q.is_some()
    }

    pub fn background(&self) -> ControlVector {
        ControlVector::new(self.xb.clone(), self.etab.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    /// Sub-window boundary, `0..=N`.
    pub k: usize,
    pub index: usize,
    pub value: f64,
    pub sigma: f64,
}

/// Point observations of the state within one window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObsSet {
    pub obs: Vec<Observation>,
}

impl ObsSet {
    pub fn new(obs: Vec<Observation>) -> Self {
        ObsSet { obs }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        for o in &self.obs {
            if o.k > spec.subwindows || o.index >= spec.n {
                return Err(Error::InvalidConfig(format!(
                    "observation at boundary {} index {} outside window/grid",
                    o.k, o.index
                )));
            }
            if !(o.sigma > 0.0) || !o.value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "observation at boundary {} index {} has sigma {} value {}",
                    o.k, o.index, o.sigma, o.value
                )));
            }
        }
        Ok(())
    }

    /// Observation minus model equivalent along `traj`.
    pub fn departures(&self, traj: &Trajectory) -> Vec<f64> {
        self.obs
            .iter()
            .map(|o| o.value - traj.states[o.k][o.index])
            .collect()
    }
}

/// Pointwise weights restricting where `eta` acts on the model.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaMask {
    pub active: DVector<f64>,
}

impl EtaMask {
    pub fn ones(n: usize) -> Self {
        EtaMask {
            active: DVector::from_element(n, 1.0),
        }
    }

    pub fn zeros(n: usize) -> Self {
        EtaMask {
            active: DVector::zeros(n),
        }
    }

    /// Zero below `start`, rising linearly over `ramp` points, one above.
    pub fn ramp(n: usize, start: usize, ramp: usize) -> Self {
        EtaMask {
            active: DVector::from_fn(n, |i, _| {
                if i < start {
                    0.0
                } else if i >= start + ramp {
                    1.0
                } else {
                    (i - start + 1) as f64 / (ramp + 1) as f64
                }
            }),
        }
    }

    pub fn new(active: DVector<f64>) -> Result<Self> {
        if active.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidConfig(
                "eta mask weights must lie in [0, 1]".into(),
            ));
        }
        Ok(EtaMask { active })
    }

    pub fn apply(&self, eta: &StateVector) -> StateVector {
        eta.component_mul(&self.active)
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len())
            .filter(|&i| self.active[i] > 0.0)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub jb: f64,
    pub jo: f64,
    pub jq: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.jb + self.jo + self.jq
    }
}

/// Lower Cholesky factor of a covariance after flooring its spectrum.
pub(crate) fn regularized_factor(
    c: &CovarianceMatrix,
    which: &'static str,
) -> Result<DMatrix<f64>> {
    if c.is_zero() {
        return Err(Error::RegularizationRequired { which });
    }
    let floored = ensure_psd(c, COV_FLOOR)?;
    floored
        .entries()
        .clone()
        .cholesky()
        .map(|ch| ch.l())
        .ok_or(Error::RegularizationRequired { which })
}

/// Half squared norm of `L^-1 d`.
pub(crate) fn half_norm_sq(l: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let y = l
        .solve_lower_triangular(d)
        .expect("factor has non-zero diagonal");
    0.5 * y.norm_squared()
}

/// `(L L^T)^-1 d`.
pub(crate) fn inverse_apply(l: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let y = l
        .solve_lower_triangular(d)
        .expect("factor has non-zero diagonal");
    l.tr_solve_lower_triangular(&y)
        .expect("factor has non-zero diagonal")
}

/// A 4D-Var problem for one window with factored B and Q.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub spec: &'a ModelSpec,
    pub priors: &'a Priors,
    pub obs: &'a ObsSet,
    pub mask: &'a EtaMask,
    pub(crate) lb: DMatrix<f64>,
    pub(crate) lq: Option<DMatrix<f64>>,
}

impl<'a> Problem<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        priors: &'a Priors,
        obs: &'a ObsSet,
        mask: &'a EtaMask,
    ) -> Result<Self> {
        let n = spec.n;
        Error::check_dim(n, priors.xb.len())?;
        Error::check_dim(n, priors.etab.len())?;
        Error::check_dim(n, priors.b.dim())?;
        Error::check_dim(n, mask.active.len())?;
        obs.validate(spec)?;
        let lb = regularized_factor(&priors.b, "background")?;
        let lq = match &priors.q {
            Some(q) => {
                Error::check_dim(n, q.dim())?;
                Some(regularized_factor(q, "model-error")?)
            }
            None => None,
        };
        Ok(Problem {
            spec,
            priors,
            obs,
            mask,
            lb,
            lq,
        })
    }

    /// Forcing actually applied to the model for a control.
    pub fn effective_eta(&self, c: &ControlVector) -> StateVector {
        if self.lq.is_some() {
            self.mask.apply(&c.eta)
        } else {
            DVector::zeros(self.spec.n)
        }
    }

    pub fn trajectory(&self, c: &ControlVector) -> Result<Trajectory> {
        integrate_forced(&c.x0, self.spec, &self.effective_eta(c), None)
    }

    pub(crate) fn jo(&self, traj: &Trajectory) -> f64 {
        self.obs
            .obs
            .iter()
            .map(|o| {
                let d = (traj.states[o.k][o.index] - o.value) / o.sigma;
                0.5 * d * d
            })
            .sum()
    }

    pub fn cost(&self, c: &ControlVector) -> Result<CostBreakdown> {
        Error::check_dim(self.spec.n, c.x0.len())?;
        Error::check_dim(self.spec.n, c.eta.len())?;
        let traj = self.trajectory(c)?;
        let jb = half_norm_sq(&self.lb, &(&c.x0 - &self.priors.xb));
        let jq = match &self.lq {
            Some(l) => half_norm_sq(l, &(&c.eta - &self.priors.etab)),
            None => 0.0,
        };
        Ok(CostBreakdown {
            jb,
            jo: self.jo(&traj),
            jq,
        })
    }

    /// Adjoint of the observation term: gradient w.r.t. `x0` and the
    /// applied forcing, for normalized weights `z_j / sigma_j` on each
    /// observation.
    pub(crate) fn obs_adjoint(
        &self,
        traj: &Trajectory,
        weights: &[f64],
    ) -> Result<(StateVector, StateVector)> {
        let n = self.spec.n;
        let mut forcing = vec![DVector::zeros(n); self.spec.subwindows];
        let mut at_start: StateVector = DVector::zeros(n);
        for (o, w) in self.obs.obs.iter().zip(weights) {
            if o.k == 0 {
                at_start[o.index] += w;
            } else {
                forcing[o.k - 1][o.index] += w;
            }
        }
        let (gx, ge) = adjoint(traj, &forcing)?;
        Ok((gx + at_start, ge))
    }

    pub fn gradient(&self, c: &ControlVector) -> Result<ControlVector> {
        let traj = self.trajectory(c)?;
        let weights: Vec<f64> = self
            .obs
            .obs
            .iter()
            .map(|o| (traj.states[o.k][o.index] - o.value) / (o.sigma * o.sigma))
            .collect();
        let (gx, ge) = self.obs_adjoint(&traj, &weights)?;
        let grad_x0 = inverse_apply(&self.lb, &(&c.x0 - &self.priors.xb)) + gx;
        let grad_eta = match &self.lq {
            Some(l) => inverse_apply(l, &(&c.eta - &self.priors.etab)) + self.mask.apply(&ge),
            None => DVector::zeros(self.spec.n),
        };
        Ok(ControlVector::new(grad_x0, grad_eta))
    }
}

pub fn cost(
    spec: &ModelSpec,
    c: &ControlVector,
    p: &Priors,
    obs: &ObsSet,
    mask: &EtaMask,
) -> Result<CostBreakdown> {
    Problem::new(spec, p, obs, mask)?.cost(c)
}

pub fn gradient(
    spec: &ModelSpec,
    c: &ControlVector,
    p: &Priors,
    obs: &ObsSet,
    mask: &EtaMask,
) -> Result<ControlVector> {
    Problem::new(spec, p, obs, mask)?.gradient(c)
}

/// Integrates the forecast model over one window from the analysis with
/// the masked analysis forcing. The end state is the next background.
pub fn debias_forecast(
    analysis: &ControlVector,
    spec: &ModelSpec,
    mask: &EtaMask,
) -> Result<Trajectory> {
    integrate_forced(&analysis.x0, spec, &mask.apply(&analysis.eta), None)
}
