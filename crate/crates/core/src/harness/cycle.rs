use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::archive::{RunArchive, WindowRecord};
use super::config::{CycleMode, ExperimentConfig};
use super::truth::{generate_truth_and_obs, stream_rng, TwinData, STREAM_BACKGROUND};
use crate::covmodel::{ensure_psd, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::var4d::{debias_forecast, minimize, ControlVector, Priors, Problem};

/// Gaussian-correlated background covariance, repaired to be PSD on the
/// periodic grid.
pub fn background_covariance(cfg: &ExperimentConfig) -> Result<CovarianceMatrix> {
    let g = CovarianceMatrix::gaussian(&cfg.metric(), cfg.background_sigma, cfg.background_length);
    ensure_psd(&g, 0.0)
}

pub(crate) fn matrix_hash(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update(format!("{} {}\n", m.nrows(), m.ncols()));
    for v in m.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn run_cycle(cfg: &ExperimentConfig, q: Option<&CovarianceMatrix>) -> Result<RunArchive> {
    let twin = generate_truth_and_obs(cfg)?;
    run_cycle_with(cfg, &twin, q)
}

/// Cycles 4D-Var over every window of `twin`. With `q` the run is
/// weak-constraint and each analysis forcing de-biases the next background
/// and becomes the next forcing prior.
///
/// A window whose minimization does not converge is recorded with status 1
/// and cycling continues. Any other failure stops the run and returns the
/// records so far, marked incomplete.
pub fn run_cycle_with(
    cfg: &ExperimentConfig,
    twin: &TwinData,
    q: Option<&CovarianceMatrix>,
) -> Result<RunArchive> {
    cfg.validate()?;
    let mode = if q.is_some() {
        CycleMode::Weak
    } else {
        CycleMode::Strong
    };
    if mode != cfg.mode {
        return Err(Error::InvalidConfig(format!(
            "cycle.mode is {} but a Q matrix was {}",
            cfg.mode.as_str(),
            if q.is_some() {
                "supplied"
            } else {
                "not supplied"
            }
        )));
    }
    let n = cfg.n;
    let nsub = cfg.subwindows;
    if twin.obs.len() < cfg.windows || twin.truth.len() < cfg.windows * nsub + 1 {
        return Err(Error::InsufficientSamples {
            required: cfg.windows,
            actual: twin.obs.len(),
        });
    }
    let spec = cfg.forecast_spec();
    let mask = cfg.eta_mask();
    let b = background_covariance(cfg)?;
    let opts = cfg.minimize_options();

    let truth_rows = cfg.windows * nsub + 1;
    let truth = DMatrix::from_fn(truth_rows, n, |t, i| twin.truth[t][i]);
    let mut archive = RunArchive {
        config: cfg.clone(),
        mode,
        q_hash: q.map(|q| matrix_hash(q.entries())),
        truth,
        records: Vec::with_capacity(cfg.windows),
        complete: false,
        failure: None,
    };

    let mut rng = stream_rng(cfg.seed, STREAM_BACKGROUND);
    let mut xb = twin.truth[0].clone() + b.sample(&mut rng)?;
    let mut etab = DVector::zeros(n);
    for w in 0..cfg.windows {
        match cycle_window(w, cfg, &spec, &mask, &b, q, &opts, twin, &xb, &etab) {
            Ok((record, next_xb)) => {
                etab = if q.is_some() {
                    record.etaa.clone()
                } else {
                    DVector::zeros(n)
                };
                xb = next_xb;
                archive.records.push(record);
            }
            Err(e) => {
                log::warn!("cycling stopped at window {w}: {e}");
                archive.failure = Some((w, e.to_string()));
                return Ok(archive);
            }
        }
    }
    archive.complete = true;
    Ok(archive)
}

#[allow(clippy::too_many_arguments)]
fn cycle_window(
    w: usize,
    cfg: &ExperimentConfig,
    spec: &crate::dynamics::ModelSpec,
    mask: &crate::var4d::EtaMask,
    b: &CovarianceMatrix,
    q: Option<&CovarianceMatrix>,
    opts: &crate::var4d::MinimizeOptions,
    twin: &TwinData,
    xb: &DVector<f64>,
    etab: &DVector<f64>,
) -> Result<(WindowRecord, DVector<f64>)> {
    let priors = Priors {
        xb: xb.clone(),
        etab: etab.clone(),
        b: b.clone(),
        q: q.cloned(),
    };
    let obs = &twin.obs[w];
    let problem = Problem::new(spec, &priors, obs, mask)?;
    let background = priors.background();
    let bg_traj = problem.trajectory(&background)?;
    let omb = obs.departures(&bg_traj);
    let (analysis, report) = minimize(&problem, opts)?;
    let an_traj = problem.trajectory(&analysis)?;
    let oma = obs.departures(&an_traj);
    let bg_cost = report.outer_costs.first().copied().unwrap_or_default();
    let an_cost = report.final_cost();
    if !report.converged {
        log::debug!(
            "window {w}: {}",
            report.message.as_deref().unwrap_or("not converged")
        );
    }
    let applied = if q.is_some() {
        analysis.clone()
    } else {
        ControlVector::new(analysis.x0.clone(), DVector::zeros(cfg.n))
    };
    let next = debias_forecast(&applied, spec, mask)?;
    let record = WindowRecord {
        window: w as u64,
        status: u64::from(!report.converged),
        xb: xb.clone(),
        xa: analysis.x0,
        etab: etab.clone(),
        etaa: applied.eta,
        omb,
        oma,
        cost: [
            bg_cost.jb,
            bg_cost.jo,
            bg_cost.jq,
            an_cost.jb,
            an_cost.jo,
            an_cost.jq,
            report.inner_iterations as f64,
            report.restarts as f64,
        ],
    };
    Ok((record, next.last().clone()))
}
