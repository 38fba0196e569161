use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::dynamics::{run_steps, StateVector};
use crate::error::Result;
use crate::util::standard_normal;
use crate::var4d::{ObsSet, Observation};

/// Random streams derived from the experiment seed.
pub(crate) const STREAM_TRUTH: u64 = 1;
pub(crate) const STREAM_OBS: u64 = 2;
pub(crate) const STREAM_BACKGROUND: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwinData {
    /// Truth at every sub-window boundary: `windows * N + 1` states.
    pub truth: Vec<StateVector>,
    /// Observations of each window, boundaries `1..=N`.
    pub obs: Vec<ObsSet>,
}

impl TwinData {
    pub fn window_start(&self, w: usize, subwindows: usize) -> &StateVector {
        &self.truth[w * subwindows]
    }
}

pub fn generate_truth_and_obs(cfg: &ExperimentConfig) -> Result<TwinData> {
    cfg.validate()?;
    let n = cfg.n;
    let nsub = cfg.subwindows;
    let mut rng = stream_rng(cfg.seed, STREAM_TRUTH);
    let x0 = DVector::from_fn(n, |_, _| cfg.forcing + rng.gen_range(-1.0..1.0));
    let mut x = run_steps(&x0, &cfg.truth_spec(0), cfg.spinup_steps)?;

    let mut truth = Vec::with_capacity(cfg.windows * nsub + 1);
    truth.push(x.clone());
    for w in 0..cfg.windows {
        let spec = cfg.truth_spec(w);
        for _ in 0..nsub {
            x = run_steps(&x, &spec, cfg.steps_per_subwindow)?;
            truth.push(x.clone());
        }
    }

    let mut rng = stream_rng(cfg.seed, STREAM_OBS);
    let indices = cfg.obs_indices();
    let obs = (0..cfg.windows)
        .map(|w| {
            let mut v = Vec::with_capacity(cfg.obs_per_window());
            for k in 1..=nsub {
                let state = &truth[w * nsub + k];
                for &i in &indices {
                    v.push(Observation {
                        k,
                        index: i,
                        value: state[i] + cfg.obs_sigma * standard_normal(&mut rng),
                        sigma: cfg.obs_sigma,
                    });
                }
            }
            ObsSet::new(v)
        })
        .collect();
    Ok(TwinData { truth, obs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            windows: 30,
            spinup_steps: 200,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let cfg = small();
        let a = generate_truth_and_obs(&cfg).unwrap();
        let b = generate_truth_and_obs(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.truth.len(), 30 * 4 + 1);
        assert_eq!(a.obs.len(), 30);
        assert!(a.obs.iter().all(|o| o.len() == 80));
    }

    #[test]
    fn noiseless_obs_sample_truth() {
        let mut cfg = small();
        cfg.obs_sigma = 1e-300;
        let d = generate_truth_and_obs(&cfg).unwrap();
        for (w, set) in d.obs.iter().enumerate() {
            for o in &set.obs {
                assert_eq!(o.value, d.truth[w * 4 + o.k][o.index]);
            }
        }
    }

    #[test]
    fn obs_noise_has_configured_std() {
        let mut cfg = small();
        cfg.windows = 125; // 10^4 values
        let d = generate_truth_and_obs(&cfg).unwrap();
        let errs: Vec<f64> = d
            .obs
            .iter()
            .enumerate()
            .flat_map(|(w, s)| s.obs.iter().map(move |o| (w, *o)))
            .map(|(w, o)| o.value - d.truth[w * 4 + o.k][o.index])
            .collect();
        assert_eq!(errs.len(), 10_000);
        let sd = crate::util::rms(errs.iter().copied());
        assert!((sd / 0.2 - 1.0).abs() < 0.03, "{sd}");
    }
}
