use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{forward_batch, infer, MlpParams, Mode};
use crate::covmodel::{SampleLabel, SampleSet};
use crate::dynamics::{wrap, StateVector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorConfig {
    /// Background values from `i - halfwidth` to `i + halfwidth` are used.
    pub halfwidth: usize,
    /// State values enter as `(x - state_offset) / state_scale`.
    pub state_offset: f64,
    pub state_scale: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            halfwidth: 2,
            state_offset: 2.0,
            state_scale: 4.0,
        }
    }
}

impl PredictorConfig {
    pub fn feature_dim(&self) -> usize {
        4 + 2 * self.halfwidth + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.state_scale > 0.0
            && self.state_scale.is_finite()
            && self.state_offset.is_finite())
        {
            return Err(Error::InvalidConfig(
                "predictor state scaling must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    /// Location code, phase code, then the scaled background column.
    pub fn vector(&self, background: &StateVector, i: usize, phase: f64) -> Vec<f64> {
        let n = background.len();
        let loc = TAU * i as f64 / n as f64;
        let ph = TAU * phase;
        let mut v = Vec::with_capacity(self.feature_dim());
        v.extend([loc.sin(), loc.cos(), ph.sin(), ph.cos()]);
        let w = self.halfwidth as isize;
        for d in -w..=w {
            v.push((background[wrap(i as isize + d, n)] - self.state_offset) / self.state_scale);
        }
        v
    }

    /// All `n` predictor vectors of one background, one per column.
    pub fn frame_matrix(&self, frame: &Frame) -> DMatrix<f64> {
        let n = frame.background.len();
        let mut m = DMatrix::zeros(self.feature_dim(), n);
        for i in 0..n {
            m.set_column(
                i,
                &DVector::from_vec(self.vector(&frame.background, i, frame.phase)),
            );
        }
        m
    }
}

/// One background state together with its window phase in `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub background: StateVector,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tendency {
    /// Forcing added at each sub-window boundary.
    pub per_subwindow: StateVector,
    /// `delta / window_length`, for reporting.
    pub per_time: StateVector,
}

/// Spreads a cumulated window error over the `subwindows` boundary updates.
pub fn increments_to_tendency(
    delta: &StateVector,
    subwindows: usize,
    window_length: f64,
) -> Result<Tendency> {
    if subwindows == 0 {
        return Err(Error::InvalidConfig("need at least one sub-window".into()));
    }
    if !(window_length > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "window length must be > 0, got {window_length}"
        )));
    }
    Ok(Tendency {
        per_subwindow: delta / subwindows as f64,
        per_time: delta / window_length,
    })
}

/// Predicted cumulated error for every grid point of one frame.
pub fn predict_increment(
    params: &MlpParams,
    cfg: &PredictorConfig,
    frame: &Frame,
) -> Result<StateVector> {
    let y = infer(params, &cfg.frame_matrix(frame))?;
    Error::check_dim(1, y.nrows())?;
    Ok(y.row(0).transpose())
}

/// Runs the network over a stream of frames and returns one per-sub-window
/// error tendency per frame.
///
/// With `dropout_seed` set, dropout stays active and is driven by that seed;
/// otherwise the network runs in inference mode.
pub fn generate_error_samples(
    params: &MlpParams,
    cfg: &PredictorConfig,
    stream: &[Frame],
    subwindows: usize,
    dropout_seed: Option<u64>,
) -> Result<SampleSet> {
    if stream.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            actual: 0,
        });
    }
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let mut samples = Vec::with_capacity(stream.len());
    for frame in stream {
        let delta = match rng.as_mut() {
            None => predict_increment(params, cfg, frame)?,
            Some(r) => {
                let (y, _) = forward_batch(params, &cfg.frame_matrix(frame), Mode::Train, Some(r))?;
                y.row(0).transpose()
            }
        };
        samples.push(increments_to_tendency(&delta, subwindows, 1.0)?.per_subwindow);
    }
    SampleSet::new(samples, SampleLabel::Ann)
}
