//! Model-error covariance recipes.
//!
//! Every matrix is in per-sub-window forcing units, the units `var4d`
//! consumes directly.

mod recipe;

pub use recipe::{read_q, sidecar_path, write_q, QKind, QRecipe};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::covmodel::{
    ensure_psd, localize, sample_covariance, scale_std, CovarianceMatrix, GridMetric, SampleLabel,
    SampleSet, TaperSpec,
};
use crate::dynamics::{integrate_forced, tangent_linear, ModelSpec, SpptPerturber, StateVector};
use crate::error::{Error, Result};
use crate::harness::{run_cycle_with, CycleMode, ExperimentConfig, RunArchive, TwinData};
use crate::neuralerr::{
    generate_error_samples, train, Frame, MlpParams, TrainHistory, TrainingSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QFlag {
    /// Every sample was identical; the matrix is zero.
    ZeroCovariance,
    /// Negative eigenvalues were clipped.
    PsdClipped,
    /// Fewer samples than the dimension.
    IllConditioned,
}

#[derive(Clone, Debug)]
pub struct QOutput {
    pub q: CovarianceMatrix,
    pub recipe: QRecipe,
    pub flags: Vec<QFlag>,
    /// Intermediate matrices, in order, named by stage.
    pub stages: Vec<(&'static str, CovarianceMatrix)>,
}

impl QOutput {
    fn new(q: CovarianceMatrix, recipe: QRecipe, samples: usize) -> Self {
        let mut flags = Vec::new();
        if q.is_zero() {
            flags.push(QFlag::ZeroCovariance);
        }
        if samples < q.dim() {
            flags.push(QFlag::IllConditioned);
        }
        QOutput {
            q,
            recipe,
            flags,
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&CovarianceMatrix> {
        self.stages.iter().find(|(s, _)| *s == name).map(|(_, c)| c)
    }

    pub fn has_flag(&self, f: QFlag) -> bool {
        self.flags.contains(&f)
    }
}

fn member_seed(seed: u64, member: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(member as u64 + 1)
}

/// Ensembles of one-window forecasts, one per start state, each member
/// differing only in its tendency noise. Member-minus-ensemble-mean end
/// states, divided by the number of sub-windows, are pooled over all starts.
pub fn build_q_pred(
    spec: &ModelSpec,
    starts: &[StateVector],
    ens_size: usize,
    seed: u64,
) -> Result<QOutput> {
    spec.validate()?;
    if ens_size < 2 || starts.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: ens_size * starts.len(),
        });
    }
    let zero = DVector::zeros(spec.n);
    let mut samples = Vec::with_capacity(ens_size * starts.len());
    for (s, x0) in starts.iter().enumerate() {
        let ends = (0..ens_size)
            .map(|m| {
                let mut p = SpptPerturber::new(spec, member_seed(seed, s * ens_size + m));
                integrate_forced(x0, spec, &zero, Some(&mut p)).map(|t| t.last().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = ends.iter().fold(DVector::zeros(spec.n), |a, e| a + e) / ens_size as f64;
        samples.extend(ends.iter().map(|e| (e - &mean) / spec.subwindows as f64));
    }
    let count = samples.len();
    let q = sample_covariance(&SampleSet::new(samples, SampleLabel::Pred)?)?;
    let mut recipe = QRecipe::new(QKind::Pred);
    recipe.seed = seed;
    recipe.samples = count;
    recipe.sources = vec![format!("ensemble:{ens_size}x{}", starts.len())];
    Ok(QOutput::new(q, recipe, count))
}

/// Q_pred for an experiment: ensembles start from the truth at the first
/// `sppt_starts` windows.
pub fn build_q_pred_for(cfg: &ExperimentConfig, twin: &TwinData) -> Result<QOutput> {
    let starts: Vec<StateVector> = (0..cfg.sppt_starts.min(cfg.windows).max(1))
        .map(|w| twin.truth[w * cfg.subwindows].clone())
        .collect();
    build_q_pred(&cfg.sppt_spec(), &starts, cfg.sppt_members, cfg.seed)
}

/// One bootstrap iteration: cycle weak-constraint 4D-Var with `q_pred`,
/// take the covariance of the analysed forcings, localize and scale.
pub fn build_q_oper(
    cfg: &ExperimentConfig,
    twin: &TwinData,
    q_pred: &CovarianceMatrix,
) -> Result<(QOutput, RunArchive)> {
    let wc = ExperimentConfig {
        mode: CycleMode::Weak,
        ..cfg.clone()
    };
    let archive = run_cycle_with(&wc, twin, Some(q_pred))?;
    if !archive.complete {
        let (window, msg) = archive
            .failure
            .clone()
            .unwrap_or((archive.records.len(), "incomplete".into()));
        return Err(Error::CyclingDiverged {
            window,
            source: Box::new(Error::Numerical(msg)),
        });
    }
    let samples: Vec<StateVector> = archive
        .post_spinup()
        .iter()
        .map(|r| r.etaa.clone())
        .collect();
    let taper = cfg.oper_taper()?;
    let mut out = covariance_pipeline(
        samples,
        SampleLabel::Eta,
        &taper,
        &cfg.metric(),
        cfg.oper_std_scale,
        QKind::Oper,
    )?;
    out.recipe.seed = cfg.seed;
    out.recipe.sources = vec![format!("run:{}", wc.run_name)];
    Ok((out, archive))
}

/// sample covariance → localize → PSD check → std scaling.
fn covariance_pipeline(
    samples: Vec<StateVector>,
    label: SampleLabel,
    taper: &TaperSpec,
    metric: &GridMetric,
    std_scale: f64,
    kind: QKind,
) -> Result<QOutput> {
    let count = samples.len();
    let raw = sample_covariance(&SampleSet::new(samples, label)?)?;
    let localized = localize(&raw, taper, metric)?;
    let repaired = ensure_psd(&localized, 0.0)?;
    let clipped = repaired != localized;
    let q = if std_scale == 1.0 {
        repaired.clone()
    } else {
        scale_std(&repaired, std_scale)?
    };
    let mut recipe = QRecipe::new(kind);
    recipe.taper = Some(*taper);
    recipe.std_scale = std_scale;
    recipe.samples = count;
    recipe.validate()?;
    let mut out = QOutput::new(q, recipe, count);
    if clipped {
        out.flags.push(QFlag::PsdClipped);
    }
    out.stages = vec![("sample", raw), ("localized", repaired)];
    Ok(out)
}

/// Predictor frames of an archived run after its spin-up.
pub fn frames_from_archive(archive: &RunArchive) -> Vec<Frame> {
    archive
        .post_spinup()
        .iter()
        .map(|r| Frame {
            background: r.xb.clone(),
            phase: archive.config.phase(r.window as usize),
        })
        .collect()
}

/// Fits the emulator to the analysis increments of an archived run.
pub fn train_ann(
    cfg: &ExperimentConfig,
    archive: &RunArchive,
) -> Result<(MlpParams, TrainHistory)> {
    let frames = frames_from_archive(archive);
    let deltas: Vec<StateVector> = archive
        .post_spinup()
        .iter()
        .map(|r| r.increment())
        .collect();
    let data = TrainingSet::from_frames(
        &cfg.predictor_config(),
        &frames,
        &deltas,
        cfg.ann_val_fraction,
        cfg.seed,
    )?;
    train(&cfg.mlp_spec(), &data, &cfg.train_options())
}

/// Runs the emulator over the backgrounds of `archive` and turns the
/// generated error tendencies into a localized covariance.
pub fn build_q_ann(
    cfg: &ExperimentConfig,
    params: &MlpParams,
    archive: &RunArchive,
    taper: &TaperSpec,
) -> Result<QOutput> {
    let frames = frames_from_archive(archive);
    if frames.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: frames.len(),
        });
    }
    let dropout_seed = cfg.ann_sampling_dropout.then_some(cfg.seed);
    let set = generate_error_samples(
        params,
        &cfg.predictor_config(),
        &frames,
        cfg.subwindows,
        dropout_seed,
    )?;
    let mut out = covariance_pipeline(
        set.samples,
        SampleLabel::Ann,
        taper,
        &cfg.metric(),
        1.0,
        QKind::Ann,
    )?;
    out.recipe.seed = cfg.seed;
    out.recipe.sources = vec![format!("run:{}", archive.config.run_name)];
    Ok(out)
}

/// Covariance of archived analysis increments in forcing units; the
/// negative control.
pub fn build_q_increment_climatology(archive: &RunArchive, taper: &TaperSpec) -> Result<QOutput> {
    let nsub = archive.config.subwindows as f64;
    let samples: Vec<StateVector> = archive
        .post_spinup()
        .iter()
        .map(|r| r.increment() / nsub)
        .collect();
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: samples.len(),
        });
    }
    let mut out = covariance_pipeline(
        samples,
        SampleLabel::Increment,
        taper,
        &GridMetric::periodic(archive.n()),
        1.0,
        QKind::IncrementClimatology,
    )?;
    out.recipe.seed = archive.config.seed;
    out.recipe.sources = vec![format!("run:{}", archive.config.run_name)];
    Ok(out)
}

/// Window propagator of a linear model, column by column.
pub fn window_propagator(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let n = spec.n;
    let zero = DVector::zeros(n);
    let traj = integrate_forced(&zero, spec, &zero, None)?;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let tl = tangent_linear(&traj, &e, &zero)?;
        m.set_column(j, tl.last().expect("at least one sub-window"));
    }
    Ok(m)
}

/// A stable linear test case for the Daley estimator: damped advection on
/// a periodic grid, a diagonal `Q_true` and the stationary analysis error
/// of a fixed-gain cycle that halves the background error each window.
pub fn daley_linear_case(n: usize) -> Result<(ModelSpec, CovarianceMatrix, CovarianceMatrix)> {
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -0.5
        } else if (i + 1) % n == j {
            0.2
        } else {
            0.0
        }
    });
    let spec = ModelSpec::linear(a, 0.1, 5, 2);
    let m = window_propagator(&spec)?;
    let q_true = CovarianceMatrix::diagonal(
        &(0..n)
            .map(|i| 0.2 + 0.1 * (i % 4) as f64)
            .collect::<Vec<_>>(),
    );
    let mut p = DMatrix::identity(n, n);
    for _ in 0..200 {
        p = (&m * &p * m.transpose() + q_true.entries()) * 0.5;
    }
    Ok((spec, CovarianceMatrix::new(p)?, q_true))
}

/// Residual estimate `Q = P^b - M P^a M^T` on a linear model: analysis
/// errors drawn from `pa` are propagated by the model, model errors drawn
/// from `q_true` are added at the end of the window, and `P^b` is their
/// sample covariance.
pub fn build_q_daley(
    spec: &ModelSpec,
    pa: &CovarianceMatrix,
    q_true: &CovarianceMatrix,
    sample_count: usize,
    seed: u64,
) -> Result<QOutput> {
    spec.validate()?;
    let n = spec.n;
    Error::check_dim(n, pa.dim())?;
    Error::check_dim(n, q_true.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = DVector::zeros(n);
    let xt = DVector::from_fn(n, |i, _| 0.5 + 0.1 * i as f64);
    let truth_end = integrate_forced(&xt, spec, &zero, None)?.last().clone();
    let mut errors = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let xa = &xt + pa.sample(&mut rng)?;
        let forecast = integrate_forced(&xa, spec, &zero, None)?.last().clone();
        let truth = &truth_end + q_true.sample(&mut rng)?;
        errors.push(forecast - truth);
    }
    let pb = sample_covariance(&SampleSet::new(errors, SampleLabel::Pred)?)?;
    let m = window_propagator(spec)?;
    let mpm = &m * pa.entries() * m.transpose();
    let raw = CovarianceMatrix::new(pb.entries() - mpm)?;
    let q = ensure_psd(&raw, 0.0)?;
    let clipped = q != raw;
    let mut recipe = QRecipe::new(QKind::Daley);
    recipe.seed = seed;
    recipe.samples = sample_count;
    recipe.sources = vec!["linear-model".into()];
    let mut out = QOutput::new(q, recipe, sample_count);
    if clipped {
        out.flags.push(QFlag::PsdClipped);
    }
    out.stages = vec![("background", pb), ("residual", raw)];
    Ok(out)
}
