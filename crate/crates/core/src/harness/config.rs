//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use dotted
//! section prefixes (`model.n = 40`). Unknown keys are rejected so typos
//! never silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::covmodel::{GridMetric, TaperMode, TaperSpec};
use crate::dynamics::{sine_bias, Dynamics, ModelSpec};
use crate::error::{Error, Result};
use crate::neuralerr::{MlpSpec, PredictorConfig, TrainOptions};
use crate::var4d::{EtaMask, MinimizeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleMode {
    Strong,
    Weak,
}

impl CycleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleMode::Strong => "sc",
            CycleMode::Weak => "wc",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub run_name: String,
    pub seed: u64,

    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
    pub steps_per_subwindow: usize,
    pub subwindows: usize,

    /// Amplitude of the sine-shaped forcing present only in the truth.
    pub bias_amplitude: f64,
    /// Relative amplitude of the periodic modulation of that forcing.
    pub bias_modulation: f64,
    /// Modulation period in windows.
    pub bias_period: usize,
    pub spinup_steps: usize,

    pub obs_stride: usize,
    pub obs_offset: usize,
    pub obs_sigma: f64,

    pub background_sigma: f64,
    pub background_length: f64,

    pub windows: usize,
    pub mode: CycleMode,
    /// Q matrix file for weak-constraint runs.
    pub q_path: Option<String>,
    pub mask: String,
    pub mask_start: usize,
    pub mask_ramp: usize,
    pub outer_loops: usize,
    pub inner_max_iter: usize,

    pub diag_spinup: usize,

    pub sppt_sigma: f64,
    pub sppt_corr_len: f64,
    pub sppt_members: usize,
    /// Number of start dates pooled into Q_pred.
    pub sppt_starts: usize,

    pub oper_d0: f64,
    pub oper_d1: f64,
    pub oper_std_scale: f64,

    pub ann_d0: f64,
    pub ann_d1: f64,
    pub ann_vertical: f64,
    pub ann_hidden: usize,
    pub ann_dropout: f64,
    pub ann_epochs: usize,
    pub ann_batch: usize,
    pub ann_lr: f64,
    pub ann_patience: usize,
    pub ann_halfwidth: usize,
    pub ann_val_fraction: f64,
    pub ann_sampling_dropout: bool,

    pub incr_d0: f64,
    pub incr_d1: f64,

    pub daley_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_name: "run".into(),
            seed: 42,
            n: 40,
            forcing: 8.0,
            dt: 0.01,
            steps_per_subwindow: 5,
            subwindows: 4,
            bias_amplitude: 0.8,
            bias_modulation: 0.45,
            bias_period: 16,
            spinup_steps: 1000,
            obs_stride: 2,
            obs_offset: 0,
            obs_sigma: 0.2,
            background_sigma: 0.4,
            background_length: 2.0,
            windows: 220,
            mode: CycleMode::Strong,
            q_path: None,
            mask: "ones".into(),
            mask_start: 0,
            mask_ramp: 0,
            outer_loops: 2,
            inner_max_iter: 100,
            diag_spinup: 20,
            sppt_sigma: 0.1,
            sppt_corr_len: 1.5,
            sppt_members: 50,
            sppt_starts: 1,
            oper_d0: 5.0,
            oper_d1: 10.0,
            oper_std_scale: 0.5,
            ann_d0: 8.0,
            ann_d1: 12.0,
            ann_vertical: 16.0,
            ann_hidden: 32,
            ann_dropout: 0.2,
            ann_epochs: 200,
            ann_batch: 64,
            ann_lr: 1e-3,
            ann_patience: 20,
            ann_halfwidth: 2,
            ann_val_fraction: 0.2,
            ann_sampling_dropout: false,
            incr_d0: 8.0,
            incr_d1: 12.0,
            daley_samples: 10_000,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

macro_rules! config_keys {
    ($($key:literal => $field:ident),* $(,)?) => {
        impl ExperimentConfig {
            /// Applies one `key = value` assignment.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    "cycle.mode" => {
                        self.mode = match value {
                            "sc" => CycleMode::Strong,
                            "wc" => CycleMode::Weak,
                            other => return Err(Error::InvalidConfig(format!("cycle.mode: {other:?} is not sc or wc"))),
                        }
                    }
                    "cycle.q" => self.q_path = (!value.is_empty()).then(|| value.to_string()),
                    $($key => self.$field = parse_value(key, value)?,)*
                    other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
                }
                Ok(())
            }

            /// Every key with its value, sorted by key.
            pub fn entries(&self) -> BTreeMap<&'static str, String> {
                let mut m = BTreeMap::new();
                m.insert("cycle.mode", self.mode.as_str().to_string());
                m.insert("cycle.q", self.q_path.clone().unwrap_or_default());
                $(m.insert($key, show(&self.$field));)*
                m
            }
        }
    };
}

fn show<T: Display>(v: &T) -> String {
    v.to_string()
}

config_keys! {
    "run.name" => run_name,
    "seed" => seed,
    "model.n" => n,
    "model.forcing" => forcing,
    "model.dt" => dt,
    "model.steps_per_subwindow" => steps_per_subwindow,
    "model.subwindows" => subwindows,
    "truth.bias_amplitude" => bias_amplitude,
    "truth.bias_modulation" => bias_modulation,
    "truth.bias_period" => bias_period,
    "truth.spinup_steps" => spinup_steps,
    "obs.stride" => obs_stride,
    "obs.offset" => obs_offset,
    "obs.sigma" => obs_sigma,
    "background.sigma" => background_sigma,
    "background.length" => background_length,
    "cycle.windows" => windows,
    "cycle.mask" => mask,
    "cycle.mask_start" => mask_start,
    "cycle.mask_ramp" => mask_ramp,
    "cycle.outer_loops" => outer_loops,
    "cycle.inner_max_iter" => inner_max_iter,
    "diag.spinup" => diag_spinup,
    "sppt.sigma" => sppt_sigma,
    "sppt.corr_len" => sppt_corr_len,
    "sppt.members" => sppt_members,
    "sppt.starts" => sppt_starts,
    "oper.d0" => oper_d0,
    "oper.d1" => oper_d1,
    "oper.std_scale" => oper_std_scale,
    "ann.d0" => ann_d0,
    "ann.d1" => ann_d1,
    "ann.vertical" => ann_vertical,
    "ann.hidden" => ann_hidden,
    "ann.dropout" => ann_dropout,
    "ann.epochs" => ann_epochs,
    "ann.batch" => ann_batch,
    "ann.lr" => ann_lr,
    "ann.patience" => ann_patience,
    "ann.halfwidth" => ann_halfwidth,
    "ann.val_fraction" => ann_val_fraction,
    "ann.sampling_dropout" => ann_sampling_dropout,
    "incr.d0" => incr_d0,
    "incr.d1" => incr_d1,
    "daley.samples" => daley_samples,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: every key, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.run_name.is_empty() || self.run_name.contains(['/', '\\']) {
            return bad(format!(
                "run.name {:?} must be a plain file name",
                self.run_name
            ));
        }
        self.forecast_spec().validate()?;
        if self.obs_stride == 0 || self.obs_offset >= self.n {
            return bad("obs.stride must be >= 1 and obs.offset < model.n".into());
        }
        for (name, v) in [
            ("obs.sigma", self.obs_sigma),
            ("background.sigma", self.background_sigma),
            ("background.length", self.background_length),
            ("oper.std_scale", self.oper_std_scale),
            ("ann.lr", self.ann_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.bias_period == 0 {
            return bad("truth.bias_period must be >= 1".into());
        }
        if self.sppt_members < 2 {
            return bad("sppt.members must be >= 2".into());
        }
        if !matches!(self.mask.as_str(), "ones" | "ramp") {
            return bad(format!("cycle.mask {:?} is not ones or ramp", self.mask));
        }
        self.oper_taper()?;
        self.ann_taper()?;
        self.incr_taper()?;
        self.mlp_spec().validate()?;
        Ok(())
    }

    fn model(&self, bias_amplitude: f64) -> ModelSpec {
        ModelSpec {
            n: self.n,
            forcing: self.forcing,
            bias: sine_bias(self.n, bias_amplitude),
            dt: self.dt,
            steps_per_subwindow: self.steps_per_subwindow,
            subwindows: self.subwindows,
            sppt_amplitude: 0.0,
            sppt_corr_len: self.sppt_corr_len,
            dynamics: Dynamics::Lorenz96,
        }
    }

    pub fn forecast_spec(&self) -> ModelSpec {
        self.model(0.0)
    }

    /// Truth model during window `w`.
    pub fn truth_spec(&self, w: usize) -> ModelSpec {
        self.model(self.bias_amplitude * (1.0 + self.bias_modulation * self.phase_angle(w).sin()))
    }

    /// Window phase within the truth modulation period, in `[0, 1)`.
    pub fn phase(&self, w: usize) -> f64 {
        (w % self.bias_period) as f64 / self.bias_period as f64
    }

    fn phase_angle(&self, w: usize) -> f64 {
        std::f64::consts::TAU * self.phase(w)
    }

    pub fn sppt_spec(&self) -> ModelSpec {
        ModelSpec {
            sppt_amplitude: self.sppt_sigma,
            ..self.forecast_spec()
        }
    }

    pub fn metric(&self) -> GridMetric {
        GridMetric::periodic(self.n)
    }

    pub fn eta_mask(&self) -> EtaMask {
        match self.mask.as_str() {
            "ramp" => EtaMask::ramp(self.n, self.mask_start, self.mask_ramp),
            _ => EtaMask::ones(self.n),
        }
    }

    pub fn obs_indices(&self) -> Vec<usize> {
        (self.obs_offset..self.n).step_by(self.obs_stride).collect()
    }

    pub fn obs_per_window(&self) -> usize {
        self.obs_indices().len() * self.subwindows
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            outer_loops: self.outer_loops,
            inner_max_iter: self.inner_max_iter,
            ..Default::default()
        }
    }

    pub fn oper_taper(&self) -> Result<TaperSpec> {
        TaperSpec::new(self.oper_d0, self.oper_d1, 1.0e6, TaperMode::Horizontal)
    }

    pub fn ann_taper(&self) -> Result<TaperSpec> {
        TaperSpec::new(self.ann_d0, self.ann_d1, self.ann_vertical, TaperMode::Both)
    }

    pub fn incr_taper(&self) -> Result<TaperSpec> {
        TaperSpec::new(self.incr_d0, self.incr_d1, 1.0e6, TaperMode::Horizontal)
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig {
            halfwidth: self.ann_halfwidth,
            ..PredictorConfig::default()
        }
    }

    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.predictor_config().feature_dim(),
            hidden_widths: vec![self.ann_hidden; 3],
            output_dim: 1,
            dropout: self.ann_dropout,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            learning_rate: self.ann_lr,
            batch_size: self.ann_batch,
            epochs: self.ann_epochs,
            patience: self.ann_patience,
            seed: self.seed,
        }
    }
}
