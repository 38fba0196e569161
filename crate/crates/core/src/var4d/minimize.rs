//! Incremental (Gauss-Newton) minimization with a control-variable
//! transform: `x0 = xb + L_B u`, `eta = etab + S L_Q v`, where `S`
//! scatters onto the grid points the mask leaves active. Forcing entries
//! with zero mask weight cannot influence the observations and stay at
//! their prior values. The inner quadratic problems are solved with
//! conjugate gradients on `(I + G^T G) dw = -(w + G^T d)`.

use nalgebra::{DMatrix, DVector};

use super::{ControlVector, CostBreakdown, Problem};
use crate::dynamics::{tangent_linear, StateVector, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub outer_loops: usize,
    pub inner_max_iter: usize,
    /// Stop CG once the residual norm drops by this factor.
    pub grad_reduction: f64,
    /// Step halvings tried when an outer update raises the cost.
    pub backtracking: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            outer_loops: 2,
            inner_max_iter: 100,
            grad_reduction: 1e-3,
            backtracking: 6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinimizeReport {
    /// Nonlinear cost at the background, then after each accepted outer update.
    pub outer_costs: Vec<CostBreakdown>,
    /// Quadratic cost after every CG iteration, one trace per outer loop.
    pub inner_traces: Vec<Vec<f64>>,
    pub inner_iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub message: Option<String>,
}

impl MinimizeReport {
    pub fn final_cost(&self) -> CostBreakdown {
        self.outer_costs.last().copied().unwrap_or_default()
    }
}

/// Control-variable transform for one problem.
struct Transform<'p, 'a> {
    problem: &'p Problem<'a>,
    active: Vec<usize>,
    /// Square root of the model-error covariance restricted to `active`.
    lq: Option<DMatrix<f64>>,
}

impl<'p, 'a> Transform<'p, 'a> {
    fn new(problem: &'p Problem<'a>) -> Result<Self> {
        let n = problem.spec.n;
        let (active, lq) = match &problem.lq {
            None => (Vec::new(), None),
            Some(l) => {
                let active = problem.mask.active_indices();
                if active.len() == n {
                    (active, Some(l.clone()))
                } else if active.is_empty() {
                    (active, None)
                } else {
                    let sub = restricted_factor(l, &active)?;
                    (active, Some(sub))
                }
            }
        };
        Ok(Transform {
            problem,
            active,
            lq,
        })
    }

    fn nu(&self) -> usize {
        self.problem.spec.n
    }

    fn nv(&self) -> usize {
        self.lq.as_ref().map_or(0, |l| l.nrows())
    }

    fn split<'w>(
        &self,
        w: &'w DVector<f64>,
    ) -> (
        nalgebra::DVectorView<'w, f64>,
        nalgebra::DVectorView<'w, f64>,
    ) {
        (w.rows(0, self.nu()), w.rows(self.nu(), self.nv()))
    }

    /// Forcing increment on the full grid for a transformed increment `v`.
    fn scatter_eta(&self, v: nalgebra::DVectorView<'_, f64>) -> StateVector {
        let mut out = DVector::zeros(self.nu());
        if let Some(l) = &self.lq {
            let e = l * v;
            for (a, &i) in self.active.iter().enumerate() {
                out[i] = e[a];
            }
        }
        out
    }

    fn control(&self, w: &DVector<f64>) -> ControlVector {
        let p = self.problem.priors;
        let (u, v) = self.split(w);
        let x0 = &p.xb + &self.problem.lb * u;
        let eta = &p.etab + self.scatter_eta(v);
        ControlVector::new(x0, eta)
    }

    fn cost(&self, w: &DVector<f64>) -> Result<(CostBreakdown, Trajectory)> {
        let c = self.control(w);
        let traj = self.problem.trajectory(&c)?;
        let (u, v) = self.split(w);
        let cost = CostBreakdown {
            jb: 0.5 * u.norm_squared(),
            jo: self.problem.jo(&traj),
            jq: 0.5 * v.norm_squared(),
        };
        Ok((cost, traj))
    }

    /// `G dw`: normalized observation-space response of an increment.
    fn forward(&self, traj: &Trajectory, dw: &DVector<f64>) -> Result<DVector<f64>> {
        let (du, dv) = self.split(dw);
        let dx0 = &self.problem.lb * du;
        let deta = self.problem.mask.apply(&self.scatter_eta(dv));
        let tl = tangent_linear(traj, &dx0, &deta)?;
        let obs = &self.problem.obs.obs;
        Ok(DVector::from_iterator(
            obs.len(),
            obs.iter().map(|o| {
                let dx = if o.k == 0 {
                    dx0[o.index]
                } else {
                    tl[o.k - 1][o.index]
                };
                dx / o.sigma
            }),
        ))
    }

    /// `G^T z`.
    fn backward(&self, traj: &Trajectory, z: &DVector<f64>) -> Result<DVector<f64>> {
        let weights: Vec<f64> = self
            .problem
            .obs
            .obs
            .iter()
            .zip(z.iter())
            .map(|(o, zj)| zj / o.sigma)
            .collect();
        let (gx, ge) = self.problem.obs_adjoint(traj, &weights)?;
        let mut out = DVector::zeros(self.nu() + self.nv());
        out.rows_mut(0, self.nu())
            .copy_from(&self.problem.lb.tr_mul(&gx));
        if let Some(l) = &self.lq {
            let ge = self.problem.mask.apply(&ge);
            let gathered =
                DVector::from_iterator(self.active.len(), self.active.iter().map(|&i| ge[i]));
            out.rows_mut(self.nu(), self.nv())
                .copy_from(&l.tr_mul(&gathered));
        }
        Ok(out)
    }
}

/// Square root of `((Q^-1)_AA)^-1` given the lower factor of `Q`.
///
/// Minimizing `(eta - etab)^T Q^-1 (eta - etab)` with the inactive entries
/// pinned to zero leaves exactly this quadratic form on the active block.
fn restricted_factor(lq: &DMatrix<f64>, active: &[usize]) -> Result<DMatrix<f64>> {
    let n = lq.nrows();
    let linv = lq
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("model-error factor is singular".into()))?;
    let qinv = linv.tr_mul(&linv);
    let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| {
        qinv[(active[a], active[b])]
    });
    let q_eff = sub
        .cholesky()
        .ok_or(Error::RegularizationRequired {
            which: "model-error",
        })?
        .inverse();
    let q_eff = (&q_eff + q_eff.transpose()) * 0.5;
    q_eff
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::RegularizationRequired {
            which: "model-error",
        })
}

struct CgOutcome {
    step: DVector<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    restarts: usize,
    breakdown: Option<String>,
}

fn conjugate_gradient(
    t: &Transform<'_, '_>,
    traj: &Trajectory,
    w: &DVector<f64>,
    d: &DVector<f64>,
    opts: &MinimizeOptions,
) -> Result<CgOutcome> {
    let dim = w.len();
    let quad = |x: &DVector<f64>, gx: &DVector<f64>| {
        0.5 * (w + x).norm_squared() + 0.5 * (d + gx).norm_squared()
    };
    let mut x = DVector::zeros(dim);
    let mut gx = DVector::zeros(d.len());
    let mut r = -(w + t.backward(traj, d)?);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let r0 = rr.sqrt();
    let mut trace = vec![quad(&x, &gx)];
    let mut out = CgOutcome {
        step: DVector::zeros(dim),
        trace: Vec::new(),
        iterations: 0,
        converged: false,
        restarts: 0,
        breakdown: None,
    };
    while out.iterations < opts.inner_max_iter {
        if rr.sqrt() <= opts.grad_reduction * r0 || rr == 0.0 {
            out.converged = true;
            break;
        }
        let gp = t.forward(traj, &p)?;
        let ap = &p + t.backward(traj, &gp)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) || !pap.is_finite() {
            if out.restarts == 0 {
                out.restarts += 1;
                p = r.clone();
                continue;
            }
            out.breakdown = Some(format!(
                "CG breakdown at iteration {} (p^T A p = {pap:e})",
                out.iterations
            ));
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        gx.axpy(alpha, &gp, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
        out.iterations += 1;
        trace.push(quad(&x, &gx));
    }
    if !out.converged
        && out.breakdown.is_none()
        && (rr.sqrt() <= opts.grad_reduction * r0 || rr == 0.0)
    {
        out.converged = true;
    }
    out.step = x;
    out.trace = trace;
    Ok(out)
}

/// Minimizes the window cost starting from the background.
///
/// Non-convergence is reported in the returned [`MinimizeReport`]; the best
/// iterate found is still returned.
pub fn minimize(
    problem: &Problem<'_>,
    opts: &MinimizeOptions,
) -> Result<(ControlVector, MinimizeReport)> {
    let t = Transform::new(problem)?;
    let mut w = DVector::zeros(t.nu() + t.nv());
    let (mut current, mut traj) = t.cost(&w)?;
    let mut report = MinimizeReport {
        outer_costs: vec![current],
        converged: true,
        ..Default::default()
    };
    for outer in 0..opts.outer_loops {
        let d = DVector::from_iterator(
            problem.obs.len(),
            problem
                .obs
                .obs
                .iter()
                .map(|o| (traj.states[o.k][o.index] - o.value) / o.sigma),
        );
        let cg = conjugate_gradient(&t, &traj, &w, &d, opts)?;
        report.inner_iterations += cg.iterations;
        report.restarts += cg.restarts;
        report.inner_traces.push(cg.trace);
        if !cg.converged {
            report.converged = false;
            report.message = Some(cg.breakdown.unwrap_or_else(|| {
                format!(
                    "inner loop {outer} hit the iteration cap ({})",
                    opts.inner_max_iter
                )
            }));
        }
        let mut step = cg.step;
        let mut accepted = None;
        for _ in 0..=opts.backtracking {
            let trial = &w + &step;
            if let Ok((cost, trial_traj)) = t.cost(&trial) {
                if cost.total() <= current.total() {
                    accepted = Some((trial, cost, trial_traj));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, cost, trial_traj)) => {
                w = trial;
                current = cost;
                traj = trial_traj;
                report.outer_costs.push(cost);
            }
            None => {
                report.message = Some(format!(
                    "outer loop {outer}: no cost decrease along the Gauss-Newton step"
                ));
                break;
            }
        }
    }
    Ok((t.control(&w), report))
}
