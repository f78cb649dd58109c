//! Browser bindings for three small interactive views: Daubechies curves, the
//! closed-form ball IPM between two clicked point clouds, and a generator fit to a
//! noisy circle sample. Every function is plain Rust as well and runs natively.

use std::sync::Arc;

use wasm_bindgen::prelude::*;

use wavegan::basis::BasisSpec;
use wavegan::config::{GeneratorInit, RunConfig};
use wavegan::ipm::{empirical_moments, EmpiricalMeasure};
use wavegan::synth::{make_target, TargetKind};
use wavegan::train::{fit_wgan, init_generator, TrainConfig};
use wavegan::wavelet::{AxisKind, Wavelet};

/// Radius of the ambient domain used for clicked clouds (inputs live in `[-1, 1]²`).
const CLOUD_RADIUS: f64 = 1.25;

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `samples` points of φ (or ψ when `psi`) for `nv` vanishing moments, as interleaved `x, y`.
#[wasm_bindgen]
pub fn wavelet_curve(nv: usize, psi: bool, samples: usize) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    let wavelet = Wavelet::new(nv, 10, 0).map_err(msg)?;
    let kind = if psi { AxisKind::Wavelet } else { AxisKind::Scaling };
    let (lo, hi) = wavelet.support(kind);
    let step = (hi - lo) / (samples - 1) as f64;
    Ok((0..samples)
        .flat_map(|i| {
            let x = lo + i as f64 * step;
            [x, wavelet.eval(kind, x).0]
        })
        .collect())
}

fn cloud(coords: Vec<f64>) -> Result<EmpiricalMeasure, String> {
    if coords.is_empty() {
        return Err("each cloud needs at least one point".into());
    }
    EmpiricalMeasure::uniform(2, coords).map_err(msg)
}

/// Ball IPM of order `gamma` between two planar clouds given as interleaved `x, y`.
#[wasm_bindgen]
pub fn cloud_ipm(mu: Vec<f64>, nu: Vec<f64>, gamma: f64, level: u32) -> Result<f64, String> {
    if level > 7 {
        return Err("level above 7 is too slow for an interactive page".into());
    }
    let spec = BasisSpec::ambient(2, CLOUD_RADIUS, Arc::new(Wavelet::new(3, 10, 0).map_err(msg)?)).map_err(msg)?;
    let m = empirical_moments(&cloud(mu)?, &cloud(nu)?, &spec, level).map_err(msg)?;
    Ok(m.ball_ipm(gamma, 0.0))
}

/// Result of [`fit_circle`].
#[wasm_bindgen]
pub struct CircleFit {
    data: Vec<f64>,
    curve: Vec<f64>,
    loss: Vec<f64>,
}

#[wasm_bindgen]
impl CircleFit {
    /// The sample, interleaved `x, y`.
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// The fitted curve at 256 latent points, interleaved `x, y`.
    pub fn curve(&self) -> Vec<f64> {
        self.curve.clone()
    }

    /// Best objective value after each iteration.
    pub fn loss(&self) -> Vec<f64> {
        self.loss.clone()
    }
}

/// Fit a wavelet generator to `n` draws from the unit circle.
#[wasm_bindgen]
pub fn fit_circle(n: usize, iterations: usize, seed: u32) -> Result<CircleFit, String> {
    if !(16..=4096).contains(&n) {
        return Err("n must lie in 16..=4096".into());
    }
    let cfg = RunConfig {
        init: GeneratorInit::CircleFromData,
        train: TrainConfig { n, iterations, seed: seed as u64, ..TrainConfig::default() },
        ..RunConfig::default()
    };
    let tc = &cfg.train;
    let target = make_target(TargetKind::Circle { r: 1.0 }, tc.radius, None).map_err(msg)?;
    let x = target.sample(n, tc.seed).map_err(msg)?;
    let init = init_generator(tc, &cfg.init_strategy(&x), tc.wavelet().map_err(msg)?).map_err(msg)?;
    let (model, report) = fit_wgan(&x, tc, &init).map_err(msg)?;
    let curve = (0..=256).flat_map(|k| model.eval(&[k as f64 / 256.0])).collect();
    Ok(CircleFit { data: x.coords().to_vec(), curve, loss: report.best_loss })
}
