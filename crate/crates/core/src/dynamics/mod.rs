//! Toy atmosphere: Lorenz-96 on a periodic grid with an optional additive
//! tendency bias, classical RK4 time stepping, a multiplicative stochastic
//! tendency perturbation scheme, and the tangent-linear / adjoint of the
//! forced window integration.

mod linear;
mod sppt;

pub use linear::{adjoint, jacobian_apply, jacobian_transpose_apply, tangent_linear};
pub use sppt::SpptPerturber;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;

/// Right-hand side used by [`tendency`].
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    /// dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F + b_i
    Lorenz96,
    /// Lorenz-96 with the quadratic advection term removed: dx_i/dt = -x_i + F + b_i.
    NoAdvection,
    /// dx/dt = A x + F + b. Used as a linear test system.
    Linear(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub forcing: f64,
    /// Systematic tendency bias, zero for the forecast model.
    pub bias: StateVector,
    pub dt: f64,
    pub steps_per_subwindow: usize,
    pub subwindows: usize,
    pub sppt_amplitude: f64,
    pub sppt_corr_len: f64,
    pub dynamics: Dynamics,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::forecast(40)
    }
}

impl ModelSpec {
    /// Unbiased forecast model with the standard window layout.
    pub fn forecast(n: usize) -> Self {
        ModelSpec {
            n,
            forcing: 8.0,
            bias: DVector::zeros(n),
            dt: 0.01,
            steps_per_subwindow: 5,
            subwindows: 4,
            sppt_amplitude: 0.0,
            sppt_corr_len: 0.0,
            dynamics: Dynamics::Lorenz96,
        }
    }

    /// Truth model: the forecast model plus `amplitude * sin(2 pi i / n)` tendency bias.
    pub fn truth(n: usize, amplitude: f64) -> Self {
        ModelSpec {
            bias: sine_bias(n, amplitude),
            ..Self::forecast(n)
        }
    }

    /// Linear test system dx/dt = A x with no forcing or bias.
    pub fn linear(a: DMatrix<f64>, dt: f64, steps_per_subwindow: usize, subwindows: usize) -> Self {
        let n = a.nrows();
        ModelSpec {
            n,
            forcing: 0.0,
            bias: DVector::zeros(n),
            dt,
            steps_per_subwindow,
            subwindows,
            sppt_amplitude: 0.0,
            sppt_corr_len: 0.0,
            dynamics: Dynamics::Linear(a),
        }
    }

    /// Zero-tendency hook: every sub-window map is the identity.
    pub fn zero_tendency(n: usize, subwindows: usize) -> Self {
        Self::linear(DMatrix::zeros(n, n), 0.01, 1, subwindows)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 4 {
            return bad(format!("grid size {} < 4", self.n));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.steps_per_subwindow == 0 || self.subwindows == 0 {
            return bad("step and sub-window counts must be >= 1".into());
        }
        if !(self.sppt_amplitude >= 0.0) || !(self.sppt_corr_len >= 0.0) {
            return bad("SPPT amplitude and correlation length must be >= 0".into());
        }
        Error::check_dim(self.n, self.bias.len())?;
        if let Dynamics::Linear(a) = &self.dynamics {
            if a.nrows() != self.n || a.ncols() != self.n {
                return bad(format!(
                    "linear operator is {}x{}, grid is {}",
                    a.nrows(),
                    a.ncols(),
                    self.n
                ));
            }
        }
        if self.bias.iter().any(|b| !b.is_finite()) || !self.forcing.is_finite() {
            return bad("forcing and bias must be finite".into());
        }
        Ok(())
    }

    pub fn steps_per_window(&self) -> usize {
        self.steps_per_subwindow * self.subwindows
    }

    /// Model time covered by one window.
    pub fn window_length(&self) -> f64 {
        self.dt * self.steps_per_window() as f64
    }

    pub fn with_bias(&self, bias: StateVector) -> Self {
        ModelSpec {
            bias,
            ..self.clone()
        }
    }

    pub fn without_noise(&self) -> Self {
        ModelSpec {
            sppt_amplitude: 0.0,
            ..self.clone()
        }
    }
}

pub fn sine_bias(n: usize, amplitude: f64) -> StateVector {
    DVector::from_fn(n, |i, _| {
        amplitude * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()
    })
}

#[inline]
pub fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

pub fn tendency(x: &StateVector, spec: &ModelSpec) -> Result<StateVector> {
    Error::check_dim(spec.n, x.len())?;
    Ok(raw_tendency(x, spec))
}

pub(crate) fn raw_tendency(x: &StateVector, spec: &ModelSpec) -> StateVector {
    let n = spec.n;
    let f = spec.forcing;
    match &spec.dynamics {
        Dynamics::Lorenz96 => DVector::from_fn(n, |i, _| {
            let ii = i as isize;
            (x[wrap(ii + 1, n)] - x[wrap(ii - 2, n)]) * x[wrap(ii - 1, n)] - x[i] + f + spec.bias[i]
        }),
        Dynamics::NoAdvection => DVector::from_fn(n, |i, _| -x[i] + f + spec.bias[i]),
        Dynamics::Linear(a) => {
            let mut t = a * x;
            for i in 0..n {
                t[i] += f + spec.bias[i];
            }
            t
        }
    }
}

#[inline]
pub(crate) fn scaled_tendency(
    x: &StateVector,
    spec: &ModelSpec,
    mult: Option<&StateVector>,
) -> StateVector {
    let t = raw_tendency(x, spec);
    match mult {
        Some(m) => t.component_mul(m),
        None => t,
    }
}

/// One classical RK4 step, with an optional per-step tendency multiplier.
pub(crate) fn rk4(x: &StateVector, spec: &ModelSpec, mult: Option<&StateVector>) -> StateVector {
    let h = spec.dt;
    let k1 = scaled_tendency(x, spec, mult);
    let k2 = scaled_tendency(&(x + &k1 * (0.5 * h)), spec, mult);
    let k3 = scaled_tendency(&(x + &k2 * (0.5 * h)), spec, mult);
    let k4 = scaled_tendency(&(x + &k3 * h), spec, mult);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Advances `x` by one time step. With a perturber, the physics part of the
/// tendency is multiplied by `1 + sigma * xi` where `xi` is drawn once for
/// the step.
pub fn step(
    x: &StateVector,
    spec: &ModelSpec,
    perturber: Option<&mut SpptPerturber>,
) -> Result<StateVector> {
    Error::check_dim(spec.n, x.len())?;
    let mult = perturber.and_then(|p| p.draw(spec));
    let out = rk4(x, spec, mult.as_ref());
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Blowup { step: 0 })
    }
}

/// States of a forced window integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Sub-window boundary states, `subwindows + 1` of them.
    pub states: Vec<StateVector>,
    /// State at the start of every RK4 step, in order.
    pub(crate) step_states: Vec<StateVector>,
    /// Realized SPPT multipliers, one per step, when a perturber was active.
    pub(crate) multipliers: Option<Vec<StateVector>>,
    pub spec: ModelSpec,
    pub eta: StateVector,
}

impl Trajectory {
    pub fn initial(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    fn check(&self, spec_n: usize) -> Result<()> {
        let s = &self.spec;
        if self.states.len() != s.subwindows + 1 || self.step_states.len() != s.steps_per_window() {
            return Err(Error::TrajectoryMismatch(format!(
                "{} boundary states / {} step states for {} sub-windows of {} steps",
                self.states.len(),
                self.step_states.len(),
                s.subwindows,
                s.steps_per_subwindow
            )));
        }
        Error::check_dim(s.n, spec_n)
    }
}

/// Integrates one window applying `x_k = M(x_{k-1}) + eta` at every
/// sub-window boundary.
pub fn integrate_forced(
    x0: &StateVector,
    spec: &ModelSpec,
    eta: &StateVector,
    mut perturber: Option<&mut SpptPerturber>,
) -> Result<Trajectory> {
    Error::check_dim(spec.n, x0.len())?;
    Error::check_dim(spec.n, eta.len())?;
    let mut states = Vec::with_capacity(spec.subwindows + 1);
    let mut step_states = Vec::with_capacity(spec.steps_per_window());
    let mut multipliers = perturber
        .as_ref()
        .filter(|_| spec.sppt_amplitude > 0.0)
        .map(|_| Vec::with_capacity(spec.steps_per_window()));
    let mut x = x0.clone();
    states.push(x.clone());
    let mut step_index = 0;
    for _ in 0..spec.subwindows {
        for _ in 0..spec.steps_per_subwindow {
            let mult = perturber.as_deref_mut().and_then(|p| p.draw(spec));
            step_states.push(x.clone());
            x = rk4(&x, spec, mult.as_ref());
            if let (Some(all), Some(m)) = (multipliers.as_mut(), mult) {
                all.push(m);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Blowup { step: step_index });
            }
            step_index += 1;
        }
        x += eta;
        states.push(x.clone());
    }
    Ok(Trajectory {
        states,
        step_states,
        multipliers,
        spec: spec.clone(),
        eta: eta.clone(),
    })
}

/// Runs `steps` unforced steps; used for spin-up and free forecasts.
pub fn run_steps(x0: &StateVector, spec: &ModelSpec, steps: usize) -> Result<StateVector> {
    Error::check_dim(spec.n, x0.len())?;
    let mut x = x0.clone();
    for s in 0..steps {
        x = rk4(&x, spec, None);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { step: s });
        }
    }
    Ok(x)
}
