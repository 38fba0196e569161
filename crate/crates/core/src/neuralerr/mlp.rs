use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    /// Dropout probability applied after every hidden layer in training.
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_widths: vec![hidden; 3],
            output_dim,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.iter().any(|&w| w == 0)
        {
            return Err(Error::InvalidConfig("network widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Layer sizes from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden_widths);
        d.push(self.output_dim);
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

impl MlpParams {
    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .dims()
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.gen_range(-limit..limit)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(MlpParams {
            layers,
            dropout: spec.dropout,
        })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        MlpParams {
            layers: spec
                .dims()
                .windows(2)
                .map(|w| Layer {
                    weights: DMatrix::zeros(w[1], w[0]),
                    bias: DVector::zeros(w[1]),
                })
                .collect(),
            dropout: spec.dropout,
        }
    }

    pub fn spec(&self) -> MlpSpec {
        let first = &self.layers[0].weights;
        MlpSpec {
            input_dim: first.ncols(),
            hidden_widths: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.bias.len())
                .collect(),
            output_dim: self.layers.last().map_or(0, |l| l.bias.len()),
            dropout: self.dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Same-shaped parameters filled with zeros.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
            dropout: self.dropout,
        }
    }

    /// Flat view of every parameter, layer by layer (weights column-major, then bias).
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn flat_mut(&mut self) -> Vec<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations kept for the backward pass.
pub(crate) struct Tape {
    /// Input to every layer; `inputs[0]` is the batch itself.
    inputs: Vec<DMatrix<f64>>,
    /// Hidden pre-activations.
    pre: Vec<DMatrix<f64>>,
    /// Scaled dropout masks, one per hidden layer.
    masks: Vec<Option<DMatrix<f64>>>,
}

fn affine(layer: &Layer, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.weights * a;
    for mut col in z.column_iter_mut() {
        col += &layer.bias;
    }
    z
}

/// Batched forward pass; columns of `x` are samples.
pub(crate) fn forward_batch<R: Rng + ?Sized>(
    params: &MlpParams,
    x: &DMatrix<f64>,
    mode: Mode,
    mut rng: Option<&mut R>,
) -> Result<(DMatrix<f64>, Tape)> {
    Error::check_dim(params.input_dim(), x.nrows())?;
    let p = params.dropout;
    let hidden = params.layers.len() - 1;
    let mut tape = Tape {
        inputs: Vec::with_capacity(params.layers.len()),
        pre: Vec::with_capacity(hidden),
        masks: Vec::with_capacity(hidden),
    };
    let mut a = x.clone();
    for layer in &params.layers[..hidden] {
        let z = affine(layer, &a);
        let mut h = z.map(|v| v.max(0.0));
        let mask = match (mode, rng.as_deref_mut()) {
            (Mode::Train, Some(r)) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let m = DMatrix::from_fn(h.nrows(), h.ncols(), |_, _| {
                    if r.gen::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                });
                h.component_mul_assign(&m);
                Some(m)
            }
            _ => None,
        };
        tape.inputs.push(a);
        tape.pre.push(z);
        tape.masks.push(mask);
        a = h;
    }
    let out = affine(params.layers.last().expect("at least one layer"), &a);
    tape.inputs.push(a);
    Ok((out, tape))
}

/// Forward pass for a single predictor vector.
///
/// Training mode applies inverted dropout (kept activations are divided by
/// `1 - p`); inference mode is deterministic.
pub fn forward<R: Rng + ?Sized>(
    params: &MlpParams,
    x: &[f64],
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<DVector<f64>> {
    let xm = DMatrix::from_column_slice(x.len(), 1, x);
    let (out, _) = forward_batch(params, &xm, mode, rng)?;
    Ok(out.column(0).into_owned())
}

pub fn infer(params: &MlpParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    forward_batch::<rand_chacha::ChaCha8Rng>(params, x, Mode::Infer, None).map(|(y, _)| y)
}

/// Mean squared error over a batch and its exact gradient under the
/// dropout masks realized in this call.
pub fn loss_and_gradient<R: Rng + ?Sized>(
    params: &MlpParams,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    rng: Option<&mut R>,
) -> Result<(f64, MlpParams)> {
    let batch = inputs.ncols();
    if batch == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            actual: 0,
        });
    }
    Error::check_dim(batch, targets.ncols())?;
    Error::check_dim(params.output_dim(), targets.nrows())?;
    let mode = if rng.is_some() {
        Mode::Train
    } else {
        Mode::Infer
    };
    let (out, tape) = forward_batch(params, inputs, mode, rng)?;
    let resid = &out - targets;
    let denom = (batch * targets.nrows()) as f64;
    let mse = resid.norm_squared() / denom;

    let mut grads = params.zeros_like();
    let mut delta = resid * (2.0 / denom);
    for l in (0..params.layers.len()).rev() {
        let a = &tape.inputs[l];
        grads.layers[l].weights = &delta * a.transpose();
        grads.layers[l].bias = delta.column_sum();
        if l == 0 {
            break;
        }
        let mut da = params.layers[l].weights.tr_mul(&delta);
        if let Some(m) = &tape.masks[l - 1] {
            da.component_mul_assign(m);
        }
        let z = &tape.pre[l - 1];
        da.zip_apply(z, |g, zv| {
            if zv <= 0.0 {
                *g = 0.0
            }
        });
        delta = da;
    }
    Ok((mse, grads))
}
