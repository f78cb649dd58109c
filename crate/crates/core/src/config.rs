//! Flat run configuration shared by the fit, rate and interpolation commands.
//!
//! Every key lives at the top level of one TOML table. Estimator keys are those of
//! [`TrainConfig`]; the rest choose the target, the initialization and the
//! experiment protocol. Missing keys take their defaults, unknown keys are rejected.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::EmpiricalMeasure;
use crate::synth::{make_target, Target, TargetKind};
use crate::train::{DensityInit, InitStrategy, TrainConfig};
use crate::wavelet::Wavelet;

/// The annotated example shipped with the repository; parses to [`RunConfig::default`].
pub const EXAMPLE_CONFIG: &str = include_str!("../../../configs/example.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Generator fit against the closed-form box IPM.
    Wgan,
    /// Density-adversarial fit (`p = d`).
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetName {
    Circle,
    Torus,
    PerturbedCircle,
    PerturbedTorus,
    ProductDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorInit {
    /// The target's base embedding.
    Embedding,
    /// A circle whose radius is the mean norm of the data.
    CircleFromData,
    Random,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Generator fit on manifold data.
    Manifold,
    /// Density-adversarial fit on full-dimensional data.
    Density,
    /// No fit: the empirical measure itself is scored.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Closed-form coefficients (densities) or a fine latent grid pushed through `g*`.
    Exact,
    /// One fresh i.i.d. sample of `g*`, shared by all runs of an experiment.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpMode {
    /// Perturbed embeddings `g* + t·v`.
    Manifold,
    /// Perturbed density coefficients `α* + t·v`.
    FullDim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: FitMode,
    pub target: TargetName,
    /// Circle radius, or torus tube radius.
    pub target_r: f64,
    /// Torus centre-line radius.
    pub target_big_r: f64,
    /// Support half-width of the product density.
    pub half_width: f64,
    pub perturb_amplitude: f64,
    pub perturb_level: u32,
    pub perturb_seed: u64,
    pub init: GeneratorInit,
    pub density_init: DensityInit,
    /// Write a model checkpoint every this many iterations (0: none).
    pub checkpoint_every: usize,
    pub experiment: Experiment,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub gammas: Vec<f64>,
    /// Logarithmic exponent of the ball IPM.
    pub b: f64,
    /// Finest discriminator level used for scoring.
    pub score_level: u32,
    pub reference: ReferenceKind,
    /// Reference size; defaults to `4·max(n)` latent points (exact) or `10·max(n)` draws (sample).
    pub reference_size: Option<usize>,
    /// Ladder `t = 2^{−1} .. 2^{−ladder}`.
    pub ladder: u32,
    pub interp_mode: InterpMode,
    /// Order of the stronger distance in full-dimensional interpolation checks.
    pub alpha: f64,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: FitMode::Wgan,
            target: TargetName::Circle,
            target_r: 1.0,
            target_big_r: 0.75,
            half_width: 0.55,
            perturb_amplitude: 0.0,
            perturb_level: 4,
            perturb_seed: 7,
            init: GeneratorInit::Embedding,
            density_init: DensityInit::MomentsClip,
            checkpoint_every: 0,
            experiment: Experiment::Manifold,
            n_grid: vec![128, 256, 512, 1024, 2048, 4096, 8192],
            trials: 5,
            gammas: vec![1.0],
            b: 0.0,
            score_level: 6,
            reference: ReferenceKind::Exact,
            reference_size: None,
            ladder: 8,
            interp_mode: InterpMode::Manifold,
            alpha: 2.0,
            train: TrainConfig::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parse the flat TOML form, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let parse_err = |e: toml::de::Error| Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let cfg: RunConfig = toml::from_str(text).map_err(parse_err)?;
        let known: BTreeSet<String> = match toml::Table::try_from(&cfg) {
            Ok(t) => t.keys().cloned().collect(),
            Err(e) => return Err(Error::InvalidParams(e.to_string())),
        };
        if let Some(key) = table.keys().find(|k| !known.contains(*k)) {
            let line = text.lines().position(|l| l.trim_start().starts_with(key.as_str())).map_or(0, |i| i + 1);
            return Err(Error::Parse { line, message: format!("unknown key {key:?}") });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g > 0.0)) {
            return bad("gammas must be a non-empty list of positive orders".into());
        }
        if !(self.b >= 0.0) {
            return bad(format!("b = {} must be non-negative", self.b));
        }
        if self.n_grid.contains(&0) {
            return bad("n_grid entries must be positive".into());
        }
        if self.reference_size == Some(0) {
            return bad("reference_size must be positive".into());
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive".into());
        }
        // TOML integers are signed.
        if self.train.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit in a signed 64-bit integer", self.train.seed));
        }
        Ok(())
    }

    pub fn target_kind(&self) -> TargetKind {
        let circle = TargetKind::Circle { r: self.target_r };
        let torus = TargetKind::Torus { big_r: self.target_big_r, r: self.target_r };
        let perturbed = |base: TargetKind| TargetKind::Perturbed {
            base: Box::new(base),
            amplitude: self.perturb_amplitude,
            level: self.perturb_level,
            beta: self.train.beta,
            seed: self.perturb_seed,
        };
        match self.target {
            TargetName::Circle => circle,
            TargetName::Torus => torus,
            TargetName::PerturbedCircle => perturbed(circle),
            TargetName::PerturbedTorus => perturbed(torus),
            TargetName::ProductDensity => TargetKind::ProductDensity { half_width: self.half_width, p: self.train.p },
        }
    }

    /// The target, checked against the model dimensions.
    pub fn build_target(&self, wavelet: Arc<Wavelet>) -> Result<Target> {
        let target = make_target(self.target_kind(), self.train.radius, Some(wavelet))?;
        if target.p() != self.train.p {
            return Err(Error::DimensionMismatch(format!(
                "target lives in dimension {} but p = {}",
                target.p(),
                self.train.p
            )));
        }
        Ok(target)
    }

    /// Initialization of the generator fit for data `x`.
    pub fn init_strategy(&self, x: &EmpiricalMeasure) -> InitStrategy {
        match self.init {
            GeneratorInit::Embedding => InitStrategy::Embedding(match self.target_kind() {
                TargetKind::Perturbed { base, .. } => *base,
                k => k,
            }),
            GeneratorInit::CircleFromData => {
                let mean = x.iter().map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>()
                    / x.weights().iter().sum::<f64>();
                InitStrategy::Embedding(TargetKind::Circle { r: mean })
            }
            GeneratorInit::Random => InitStrategy::Random,
            GeneratorInit::Zeros => InitStrategy::Zeros,
        }
    }
}
