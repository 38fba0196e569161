//! Tangent-linear and adjoint of the forced window integration.

use nalgebra::DVector;

use super::{scaled_tendency, wrap, Dynamics, ModelSpec, StateVector, Trajectory};
use crate::error::{Error, Result};

/// Jacobian of the (unscaled) tendency at `x`, applied to `dx`.
pub fn jacobian_apply(spec: &ModelSpec, x: &StateVector, dx: &StateVector) -> StateVector {
    let n = spec.n;
    match &spec.dynamics {
        Dynamics::Lorenz96 => DVector::from_fn(n, |i, _| {
            let ii = i as isize;
            let (ip1, im1, im2) = (wrap(ii + 1, n), wrap(ii - 1, n), wrap(ii - 2, n));
            (dx[ip1] - dx[im2]) * x[im1] + (x[ip1] - x[im2]) * dx[im1] - dx[i]
        }),
        Dynamics::NoAdvection => -dx,
        Dynamics::Linear(a) => a * dx,
    }
}

/// Transpose of [`jacobian_apply`].
pub fn jacobian_transpose_apply(
    spec: &ModelSpec,
    x: &StateVector,
    lam: &StateVector,
) -> StateVector {
    let n = spec.n;
    match &spec.dynamics {
        Dynamics::Lorenz96 => {
            let mut g = DVector::zeros(n);
            for i in 0..n {
                let ii = i as isize;
                let (ip1, im1, im2) = (wrap(ii + 1, n), wrap(ii - 1, n), wrap(ii - 2, n));
                let l = lam[i];
                g[ip1] += x[im1] * l;
                g[im2] -= x[im1] * l;
                g[im1] += (x[ip1] - x[im2]) * l;
                g[i] -= l;
            }
            g
        }
        Dynamics::NoAdvection => -lam,
        Dynamics::Linear(a) => a.tr_mul(lam),
    }
}

/// Jacobian of the perturbed tendency `m * f(x)`, applied to `dx`.
fn jac_scaled(
    spec: &ModelSpec,
    x: &StateVector,
    mult: Option<&StateVector>,
    dx: &StateVector,
) -> StateVector {
    let full = jacobian_apply(spec, x, dx);
    match mult {
        Some(m) => full.component_mul(m),
        None => full,
    }
}

fn jac_scaled_t(
    spec: &ModelSpec,
    x: &StateVector,
    mult: Option<&StateVector>,
    lam: &StateVector,
) -> StateVector {
    match mult {
        Some(m) => jacobian_transpose_apply(spec, x, &lam.component_mul(m)),
        None => jacobian_transpose_apply(spec, x, lam),
    }
}

/// RK4 stage inputs at a base state: (x1, x2, x3, x4) where x1 = x.
fn stage_points(x: &StateVector, spec: &ModelSpec, mult: Option<&StateVector>) -> [StateVector; 4] {
    let h = spec.dt;
    let k1 = scaled_tendency(x, spec, mult);
    let x2 = x + &k1 * (0.5 * h);
    let k2 = scaled_tendency(&x2, spec, mult);
    let x3 = x + &k2 * (0.5 * h);
    let k3 = scaled_tendency(&x3, spec, mult);
    let x4 = x + &k3 * h;
    [x.clone(), x2, x3, x4]
}

fn tl_step(
    spec: &ModelSpec,
    x: &StateVector,
    mult: Option<&StateVector>,
    dx: &StateVector,
) -> StateVector {
    let h = spec.dt;
    let p = stage_points(x, spec, mult);
    let jac = |i: usize, v: &StateVector| jac_scaled(spec, &p[i], mult, v);
    let dk1 = jac(0, dx);
    let dk2 = jac(1, &(dx + &dk1 * (0.5 * h)));
    let dk3 = jac(2, &(dx + &dk2 * (0.5 * h)));
    let dk4 = jac(3, &(dx + &dk3 * h));
    dx + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (h / 6.0)
}

fn adj_step(
    spec: &ModelSpec,
    x: &StateVector,
    mult: Option<&StateVector>,
    lam_out: &StateVector,
) -> StateVector {
    let h = spec.dt;
    let p = stage_points(x, spec, mult);
    let jac_t = |i: usize, v: &StateVector| jac_scaled_t(spec, &p[i], mult, v);
    let mut lam = lam_out.clone();
    let a_k4 = lam_out * (h / 6.0);
    let mut a_k3 = lam_out * (h / 3.0);
    let mut a_k2 = lam_out * (h / 3.0);
    let mut a_k1 = lam_out * (h / 6.0);

    let a_x4 = jac_t(3, &a_k4);
    lam += &a_x4;
    a_k3 += &a_x4 * h;

    let a_x3 = jac_t(2, &a_k3);
    lam += &a_x3;
    a_k2 += &a_x3 * (0.5 * h);

    let a_x2 = jac_t(1, &a_k2);
    lam += &a_x2;
    a_k1 += &a_x2 * (0.5 * h);

    lam += jac_t(0, &a_k1);
    lam
}

fn step_multiplier(traj: &Trajectory, s: usize) -> Option<&StateVector> {
    traj.multipliers.as_ref().map(|m| &m[s])
}

/// Propagates `(dx0, deta)` through the linearization about `traj`.
/// Returns the perturbation at sub-window boundaries `1..=N`.
pub fn tangent_linear(
    traj: &Trajectory,
    dx0: &StateVector,
    deta: &StateVector,
) -> Result<Vec<StateVector>> {
    traj.check(dx0.len())?;
    Error::check_dim(traj.spec.n, deta.len())?;
    let spec = &traj.spec;
    let mut out = Vec::with_capacity(spec.subwindows);
    let mut dx = dx0.clone();
    let mut s = 0;
    for _ in 0..spec.subwindows {
        for _ in 0..spec.steps_per_subwindow {
            dx = tl_step(spec, &traj.step_states[s], step_multiplier(traj, s), &dx);
            s += 1;
        }
        dx += deta;
        out.push(dx.clone());
    }
    Ok(out)
}

/// Applies the transpose of [`tangent_linear`] to one co-state per
/// boundary `1..=N`, returning the sensitivities to `x0` and `eta`.
pub fn adjoint(traj: &Trajectory, forcing: &[StateVector]) -> Result<(StateVector, StateVector)> {
    let spec = &traj.spec;
    traj.check(spec.n)?;
    Error::check_dim(spec.subwindows, forcing.len())?;
    for w in forcing {
        Error::check_dim(spec.n, w.len())?;
    }
    let mut lam: StateVector = DVector::zeros(spec.n);
    let mut grad_eta: StateVector = DVector::zeros(spec.n);
    let mut s = spec.steps_per_window();
    for k in (0..spec.subwindows).rev() {
        lam += &forcing[k];
        grad_eta += &lam;
        for _ in 0..spec.steps_per_subwindow {
            s -= 1;
            lam = adj_step(spec, &traj.step_states[s], step_multiplier(traj, s), &lam);
        }
    }
    Ok((lam, grad_eta))
}
