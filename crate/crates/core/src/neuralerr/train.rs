use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{infer, loss_and_gradient, MlpParams, MlpSpec};
use super::predictors::{Frame, PredictorConfig};
use crate::dynamics::StateVector;
use crate::error::{Error, Result};

/// Predictor/target pairs, one per column, with a fixed train/validation split.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

impl TrainingSet {
    /// Shuffles the columns with `seed` and holds out `val_fraction` of them.
    /// A single pair is used for both training and validation.
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        val_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let m = inputs.ncols();
        if m == 0 {
            return Err(Error::InsufficientSamples {
                required: 1,
                actual: 0,
            });
        }
        Error::check_dim(m, targets.ncols())?;
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction {val_fraction} outside [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = if m == 1 {
            0
        } else {
            ((m as f64 * val_fraction).round() as usize).clamp(1, m - 1)
        };
        let val_idx = idx.split_off(m - n_val);
        let val_idx = if val_idx.is_empty() {
            idx.clone()
        } else {
            val_idx
        };
        Ok(TrainingSet {
            inputs,
            targets,
            train_idx: idx,
            val_idx,
        })
    }

    /// Pairs every grid point of every frame with its cumulated error.
    pub fn from_frames(
        cfg: &PredictorConfig,
        frames: &[Frame],
        deltas: &[StateVector],
        val_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        Error::check_dim(frames.len(), deltas.len())?;
        let Some(first) = frames.first() else {
            return Err(Error::InsufficientSamples {
                required: 1,
                actual: 0,
            });
        };
        let n = first.background.len();
        let mut inputs = DMatrix::zeros(cfg.feature_dim(), n * frames.len());
        let mut targets = DMatrix::zeros(1, n * frames.len());
        for (k, (frame, delta)) in frames.iter().zip(deltas).enumerate() {
            Error::check_dim(n, frame.background.len())?;
            Error::check_dim(n, delta.len())?;
            let block = cfg.frame_matrix(frame);
            inputs.columns_mut(k * n, n).copy_from(&block);
            for i in 0..n {
                targets[(0, k * n + i)] = delta[i];
            }
        }
        Self::new(inputs, targets, val_fraction, seed)
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }

    fn subset(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.inputs.select_columns(idx),
            self.targets.select_columns(idx),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub stopped_early: bool,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Mini-batch Adam on mean squared error with early stopping on the
/// validation loss. Returns the parameters of the best validation epoch.
pub fn train(
    spec: &MlpSpec,
    data: &TrainingSet,
    opts: &TrainOptions,
) -> Result<(MlpParams, TrainHistory)> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            actual: 0,
        });
    }
    Error::check_dim(spec.input_dim, data.inputs.nrows())?;
    Error::check_dim(spec.output_dim, data.targets.nrows())?;
    if opts.batch_size == 0 || !(opts.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(
            "batch size and learning rate must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = MlpParams::init(spec, &mut rng)?;
    let mut history = TrainHistory::default();
    if opts.epochs == 0 {
        return Ok((params, history));
    }

    let n_params = spec.param_count();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut t = 0i32;
    let (val_x, val_y) = data.subset(&data.val_idx);
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut order = data.train_idx.clone();

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let (x, y) = data.subset(chunk);
            let drop_rng = (spec.dropout > 0.0).then_some(&mut rng);
            let (mse, grads) = loss_and_gradient(&params, &x, &y, drop_rng)?;
            if !mse.is_finite() {
                history.train_mse.push(mse);
                return Err(Error::TrainingDiverged { epoch, history });
            }
            sum += mse * chunk.len() as f64;
            t += 1;
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            for (((p, g), a), b) in params
                .flat_mut()
                .into_iter()
                .zip(grads.flat())
                .zip(&mut m1)
                .zip(&mut m2)
            {
                *a = BETA1 * *a + (1.0 - BETA1) * g;
                *b = BETA2 * *b + (1.0 - BETA2) * g * g;
                *p -= opts.learning_rate * (*a / c1) / ((*b / c2).sqrt() + EPS);
            }
        }
        let val = {
            let pred = infer(&params, &val_x)?;
            (&pred - &val_y).norm_squared() / (val_y.len() as f64)
        };
        history.train_mse.push(sum / order.len() as f64);
        history.val_mse.push(val);
        if !val.is_finite() || !params.is_finite() {
            return Err(Error::TrainingDiverged { epoch, history });
        }
        if val < best_val {
            best_val = val;
            best = params.clone();
            history.best_epoch = Some(epoch);
            history.best_val_mse = Some(val);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                history.stopped_early = true;
                log::debug!("early stop at epoch {epoch}, best {best_val:.3e}");
                break;
            }
        }
    }
    Ok((best, history))
}
