//! Estimators: the GAN fit over generator coefficients and the density-adversarial fit.
//!
//! The discriminator sup is taken in closed form (see [`crate::ipm`]), so each
//! estimator is a single projected-subgradient minimization over coefficients in
//! bound-scaled coordinates `θ = α / bound(j) ∈ [−1, 1]`.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Domain, Scratch, WaveletIndex};
use crate::besov::{analyze, BoundSchedule, CoefficientField, SampledFunction};
use crate::error::{Error, Result};
use crate::ipm::{EmpiricalMeasure, IpmMode, LevelLayout, LevelStore, MomentAccumulator};
use crate::models::{
    default_delta, default_delta_d, discriminator_eta, ipm_unchecked, level_for_delta, DesignRows, DiscriminatorSpec,
    GeneratorModel, GeneratorParams, LatentDesign, RegularityGrid,
};
use crate::synth::{make_target, TargetKind};
use crate::wavelet::Wavelet;

/// Step-size rule of the projected subgradient method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `c/√t` along the normalized subgradient.
    InvSqrt,
    /// Polyak step towards a target level `best − gap`; the gap grows when the
    /// level is reached and halves when the best value stalls for [`LEVEL_PATIENCE`] iterations.
    Level,
}

impl StepRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inv-sqrt" => Ok(StepRule::InvSqrt),
            "level" => Ok(StepRule::Level),
            other => Err(Error::InvalidParams(format!("unknown step rule {other:?}"))),
        }
    }
}

pub const LEVEL_PATIENCE: usize = 20;
/// Gap growth after an iterate reaches the target level.
pub const LEVEL_GROWTH: f64 = 1.25;

/// Everything an estimator run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n: usize,
    pub beta: f64,
    pub d: usize,
    pub p: usize,
    /// Class radius `K`.
    pub radius: f64,
    pub chi: f64,
    pub delta: Option<f64>,
    pub delta_d: Option<f64>,
    /// Generator (or density) box constant.
    pub c_eta: f64,
    /// Discriminator box constant.
    pub c_eta_d: f64,
    /// Latent (or uniform-ball) sample size; defaults to `n`.
    pub m_latent: Option<usize>,
    pub latent: String,
    pub iterations: usize,
    /// Step constant: `c` of the `c/√t` schedule, or the initial target gap (as a
    /// fraction of the first loss) of the level rule.
    pub step: f64,
    pub step_rule: StepRule,
    pub density_optimizer: DensityOptimizer,
    /// Smoothing of `|·|`.
    pub eps: f64,
    /// χ-penalty weight.
    pub lambda: f64,
    pub seed: u64,
    pub nv: usize,
    pub grid_cap: u64,
    pub coarse: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 512,
            beta: 1.0,
            d: 1,
            p: 2,
            radius: 1.25,
            chi: 1.5,
            delta: None,
            delta_d: None,
            c_eta: 3.0,
            c_eta_d: 1.0,
            m_latent: None,
            latent: "tensor-grid".into(),
            iterations: 200,
            step: 0.05,
            step_rule: StepRule::Level,
            density_optimizer: DensityOptimizer::PrimalDual,
            eps: 1e-6,
            lambda: 0.0,
            seed: 0,
            nv: 3,
            grid_cap: 1_000_000,
            coarse: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be non-negative");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.step >= 0.0) {
            return bad("step must be non-negative");
        }
        if self.d == 0 || self.p == 0 {
            return bad("dimensions must be positive");
        }
        if self.m_latent == Some(0) {
            return bad("m_latent must be at least 1");
        }
        LatentDesign::parse(&self.latent, self.seed)?;
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(self.n, self.beta, self.d))
    }

    pub fn delta_d(&self) -> f64 {
        self.delta_d.unwrap_or_else(|| default_delta_d(self.n, self.beta, self.d))
    }

    pub fn m(&self) -> usize {
        self.m_latent.unwrap_or(self.n)
    }

    pub fn design(&self) -> LatentDesign {
        LatentDesign::parse(&self.latent, self.seed).expect("validated")
    }

    pub fn generator_params(&self) -> GeneratorParams {
        GeneratorParams {
            d: self.d,
            p: self.p,
            beta: self.beta,
            delta: self.delta(),
            radius: self.radius,
            chi: self.chi,
            c_eta: self.c_eta,
            seed: self.seed,
        }
    }

    /// Wavelet with derivative tables as required for `β`.
    pub fn wavelet(&self) -> Result<Arc<Wavelet>> {
        Ok(Arc::new(Wavelet::for_smoothness(self.nv, self.beta)?))
    }

    pub fn discriminator(&self, wavelet: Arc<Wavelet>) -> Result<DiscriminatorSpec> {
        DiscriminatorSpec::new(self.p, self.radius, discriminator_eta(self.beta, self.d), self.delta_d(), self.c_eta_d, wavelet)
    }
}

/// Outcome of a fit. Wall time is kept out of the serialized form so reruns are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema: String,
    /// Objective at `α_0 .. α_T`.
    pub loss: Vec<f64>,
    pub best_loss: Vec<f64>,
    pub best_iteration: usize,
    pub final_box_ipm: f64,
    pub penalty: f64,
    pub regularity_passed: Option<bool>,
    pub regularity_advisory: bool,
    pub config: TrainConfig,
    pub checkpoints: Vec<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Starting point for the generator fit.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Analyze an embedding and clip to the box.
    Embedding(TargetKind),
    /// Uniform in the box.
    Random,
    Zeros,
}

/// Build the initial generator.
pub fn init_generator(cfg: &TrainConfig, strategy: &InitStrategy, wavelet: Arc<Wavelet>) -> Result<GeneratorModel> {
    let mut gm = GeneratorModel::zeros(cfg.generator_params(), wavelet.clone())?;
    match strategy {
        InitStrategy::Zeros => Ok(gm),
        InitStrategy::Random => Ok(crate::models::random_generator(&gm, cfg.seed, 1.0)),
        InitStrategy::Embedding(kind) => {
            let target = make_target(kind.clone(), cfg.radius, Some(wavelet))?;
            if target.d() != cfg.d || target.p() != cfg.p {
                return Err(Error::DimensionMismatch(format!(
                    "embedding maps {}→{} but the model is {}→{}",
                    target.d(),
                    target.p(),
                    cfg.d,
                    cfg.p
                )));
            }
            let j = gm.max_level();
            let resolution = (j + 6).max(if cfg.d == 1 { 12 } else { 8 });
            for i in 0..cfg.p {
                let f = SampledFunction::periodic(cfg.d, resolution, |u| target.eval(u)[i]);
                let cf = analyze(&f, gm.spec(), j)?;
                gm.set_field(i, cf)?;
            }
            Ok(gm.project_box())
        }
    }
}

#[inline]
fn smooth_abs(x: f64, eps: f64) -> (f64, f64) {
    if eps == 0.0 {
        (x.abs(), if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    } else {
        let r = (x * x + eps * eps).sqrt();
        (r - eps, x / r)
    }
}

/// `Σ_keys s_ε(data − model)` over one level, in key order.
fn level_loss(data: &LevelStore, model: &LevelStore, eps: f64) -> f64 {
    match (data, model) {
        (LevelStore::Dense(a), LevelStore::Dense(b)) => a.iter().zip(b).map(|(x, y)| smooth_abs(x - y, eps).0).sum(),
        _ => {
            let (a, b) = (data.sorted_entries(), model.sorted_entries());
            let mut keys: Vec<u64> = a.iter().chain(&b).map(|e| e.0).collect();
            keys.sort_unstable();
            keys.dedup();
            keys.iter().map(|&k| smooth_abs(data.get(k) - model.get(k), eps).0).sum()
        }
    }
}

/// Projected subgradient in `[−1, 1]^n` with a diagonal metric `precond`. Returns the best iterate, the objective
/// at every iterate, and the index of the best.
fn projected_subgradient<F>(
    theta0: Vec<f64>,
    iterations: usize,
    step: f64,
    rule: StepRule,
    precond: &[f64],
    mut eval: F,
    observe: &mut dyn FnMut(usize, &[f64]) -> Result<()>,
) -> Result<(Vec<f64>, Vec<f64>, usize)>
where
    F: FnMut(&[f64], bool) -> Result<(f64, Vec<f64>)>,
{
    let mut theta: Vec<f64> = theta0.into_iter().map(|t| t.clamp(-1.0, 1.0)).collect();
    let mut best = theta.clone();
    let mut trajectory: Vec<f64> = Vec::with_capacity(iterations + 1);
    let mut best_at = 0;
    let mut gap = 0.0;
    let mut stall = 0;
    for t in 0..=iterations {
        let (loss, grad) = eval(&theta, t < iterations)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        if t == 0 {
            gap = step * loss;
        }
        if t > 0 && loss <= trajectory[best_at] - gap {
            gap *= LEVEL_GROWTH;
        }
        if t == 0 || loss < trajectory[best_at] {
            best_at = t;
            best.clone_from(&theta);
            stall = 0;
        } else {
            stall += 1;
            if stall >= LEVEL_PATIENCE {
                gap *= 0.5;
                stall = 0;
            }
        }
        trajectory.push(loss);
        if t > 0 {
            observe(t, &best)?;
        }
        if t == iterations {
            break;
        }
        let norm2 = grad.iter().zip(precond).map(|(g, d)| g * g * d).sum::<f64>();
        if !norm2.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        if norm2 == 0.0 {
            for rest in t + 1..=iterations {
                trajectory.push(loss);
                observe(rest, &best)?;
            }
            break;
        }
        let s = match rule {
            StepRule::InvSqrt => step / ((t + 1) as f64).sqrt() / norm2.sqrt(),
            StepRule::Level => (loss - (trajectory[best_at] - gap)) / norm2,
        };
        for ((x, g), d) in theta.iter_mut().zip(&grad).zip(precond) {
            *x = (*x - s * d * g).clamp(-1.0, 1.0);
        }
    }
    Ok((best, trajectory, best_at))
}

fn best_so_far(traj: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut b = f64::INFINITY;
    for &v in traj {
        b = b.min(v);
        out.push(b);
    }
    out
}

/// The smoothed GAN objective as a function of generator coefficients.
pub struct WganObjective {
    disc: DiscriminatorSpec,
    layouts: Vec<LevelLayout>,
    data: Vec<LevelStore>,
    model: Vec<LevelStore>,
    rows: DesignRows,
    grid: Option<(RegularityGrid, DesignRows)>,
    p: usize,
    eps: f64,
    lambda: f64,
    scratch: Scratch,
    images: Vec<f64>,
    /// Active `(level, key)` pairs of every image point from the last gradient pass,
    /// with their spatial gradients in `active_grads`.
    active: Vec<(u32, u64)>,
    active_grads: Vec<f64>,
    active_start: Vec<usize>,
}

impl WganObjective {
    pub fn new(x: &EmpiricalMeasure, cfg: &TrainConfig, template: &GeneratorModel, disc: DiscriminatorSpec) -> Result<Self> {
        if x.dim() != cfg.p {
            return Err(Error::DimensionMismatch(format!("data in dim {} but p = {}", x.dim(), cfg.p)));
        }
        let mut data_acc = MomentAccumulator::new(&disc.spec, disc.max_level);
        data_acc.add_measure(x);
        let latent = cfg.design().points(cfg.d, cfg.m());
        let rows = DesignRows::new(template.spec(), &template.layout(), &latent);
        let grid = if cfg.lambda > 0.0 {
            let g = RegularityGrid::new(cfg.d, cfg.radius, cfg.chi, cfg.grid_cap as u128, cfg.coarse)?;
            let r = DesignRows::new(template.spec(), &template.layout(), &g.points);
            Some((g, r))
        } else {
            None
        };
        Ok(WganObjective {
            layouts: data_acc.layouts().to_vec(),
            data: data_acc.stores().to_vec(),
            model: data_acc.layouts().iter().map(LevelStore::for_layout).collect(),
            disc,
            rows,
            grid,
            p: cfg.p,
            eps: cfg.eps,
            lambda: cfg.lambda,
            scratch: Scratch::default(),
            images: Vec::new(),
            active: Vec::new(),
            active_grads: Vec::new(),
            active_start: Vec::new(),
        })
    }

    /// Objective and (optionally) its gradient with respect to `params[i][position]`.
    pub fn evaluate(&mut self, params: &[Vec<f64>], want_grad: bool) -> (f64, Vec<Vec<f64>>, f64) {
        let p = self.p;
        let mut images = std::mem::take(&mut self.images);
        self.rows.apply(params, &mut images);
        let m_pts = self.rows.rows.len();
        let w = 1.0 / m_pts as f64;
        self.model.iter_mut().for_each(LevelStore::clear);
        // One basis pass per point: moments always, spatial gradients cached when needed.
        self.active.clear();
        self.active_grads.clear();
        self.active_start.clear();
        for k in 0..m_pts {
            self.active_start.push(self.active.len());
            let x = &images[k * p..(k + 1) * p];
            for (li, (layout, store)) in self.layouts.iter().zip(self.model.iter_mut()).enumerate() {
                let (active, grads) = (&mut self.active, &mut self.active_grads);
                self.disc.spec.for_each_active(x, layout.j, want_grad, &mut self.scratch, |l, wv, v, g| {
                    if let Some(key) = layout.key(l, wv) {
                        store.add(key, w * v);
                        if want_grad {
                            active.push((li as u32, key));
                            grads.extend_from_slice(g);
                        }
                    }
                });
            }
        }
        self.active_start.push(self.active.len());
        let sched = self.disc.schedule;
        let mut loss = 0.0;
        for (j, (d, m)) in self.data.iter().zip(&self.model).enumerate() {
            loss += sched.bound(j as u32) * level_loss(d, m, self.eps);
        }
        let mut grad: Vec<Vec<f64>> = if want_grad { vec![vec![0.0; params[0].len()]; p] } else { Vec::new() };
        if want_grad {
            // Slope of the smoothed |data − model| per active index, weighted by level bound.
            let mut gk = vec![0.0; p];
            for k in 0..m_pts {
                gk.iter_mut().for_each(|g| *g = 0.0);
                for a in self.active_start[k]..self.active_start[k + 1] {
                    let (li, key) = self.active[a];
                    let li = li as usize;
                    let (_, s) = smooth_abs(self.data[li].get(key) - self.model[li].get(key), self.eps);
                    if s != 0.0 {
                        let c = -w * sched.bound(self.layouts[li].j) * s;
                        let g = &self.active_grads[a * p..(a + 1) * p];
                        gk.iter_mut().zip(g).for_each(|(o, gi)| *o += c * gi);
                    }
                }
                for &(pos, v) in &self.rows.rows[k] {
                    for i in 0..p {
                        grad[i][pos as usize] += gk[i] * v;
                    }
                }
            }
        }
        let mut penalty = 0.0;
        if let Some((grid, rows)) = &self.grid {
            let mut gi = Vec::new();
            rows.apply(params, &mut gi);
            let out = grid.evaluate(&gi, p, want_grad);
            penalty = out.penalty;
            loss += self.lambda * penalty;
            if want_grad {
                for (k, row) in rows.rows.iter().enumerate() {
                    for &(pos, v) in row {
                        for i in 0..p {
                            grad[i][pos as usize] += self.lambda * out.grad[k * p + i] * v;
                        }
                    }
                }
            }
        }
        self.images = images;
        (loss, grad, penalty)
    }
}

/// Bound of every dense position, for the change to `θ` coordinates.
fn position_bounds(gm: &GeneratorModel) -> Vec<f64> {
    let layout = gm.layout();
    (0..layout.len()).map(|pos| gm.schedule().bound(layout.index(pos).j)).collect()
}

/// Called with the best model so far every `every` iterations; returns where it was stored.
pub struct Checkpointer<'a, M> {
    pub every: usize,
    pub save: &'a mut dyn FnMut(usize, &M) -> Result<String>,
}

/// Fit a generator to `x` from `init`.
pub fn fit_wgan(x: &EmpiricalMeasure, cfg: &TrainConfig, init: &GeneratorModel) -> Result<(GeneratorModel, TrainReport)> {
    fit_wgan_with(x, cfg, init, None)
}

/// [`fit_wgan`] with optional checkpoints, whose locations are listed in the report.
pub fn fit_wgan_with(
    x: &EmpiricalMeasure,
    cfg: &TrainConfig,
    init: &GeneratorModel,
    mut checkpoints: Option<Checkpointer<'_, GeneratorModel>>,
) -> Result<(GeneratorModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let wavelet = init.spec().wavelet().clone();
    let disc = cfg.discriminator(wavelet)?;
    let mut obj = WganObjective::new(x, cfg, init, disc.clone())?;
    let init = init.project_box();
    let bounds = position_bounds(&init);
    let p = cfg.p;
    let len = bounds.len();
    let theta0: Vec<f64> = init.to_params().iter().flat_map(|a| a.iter().zip(&bounds).map(|(v, b)| v / b)).collect();
    let unpack = |theta: &[f64]| -> Vec<Vec<f64>> {
        (0..p).map(|i| theta[i * len..(i + 1) * len].iter().zip(&bounds).map(|(t, b)| t * b).collect()).collect()
    };
    let ones = vec![1.0; p * len];
    let mut saved = Vec::new();
    let mut observe = |t: usize, theta: &[f64]| -> Result<()> {
        if let Some(c) = checkpoints.as_mut() {
            if c.every > 0 && t % c.every == 0 {
                saved.push((c.save)(t, &init.with_params(&unpack(theta)).project_box())?);
            }
        }
        Ok(())
    };
    let (best, trajectory, best_at) = projected_subgradient(
        theta0,
        cfg.iterations,
        cfg.step,
        cfg.step_rule,
        &ones,
        |theta, want_grad| {
            let (loss, grad, _) = obj.evaluate(&unpack(theta), want_grad);
            let g: Vec<f64> = grad.iter().flat_map(|gi| gi.iter().zip(&bounds).map(|(v, b)| v * b)).collect();
            Ok((loss, g))
        },
        &mut observe,
    )?;
    let model = init.with_params(&unpack(&best)).project_box();
    let latent = cfg.design().points(cfg.d, cfg.m());
    let pushed = model.push_forward(&latent)?;
    let final_box_ipm = ipm_unchecked(x, &pushed, &disc, &IpmMode::Box(disc.schedule));
    let (penalty, passed, advisory) = match crate::models::check_generator(&model, cfg.grid_cap as u128, cfg.coarse) {
        Ok(out) => (out.penalty, Some(out.passed), out.advisory),
        Err(Error::GridTooLarge { .. }) => (f64::NAN, None, false),
        Err(e) => return Err(e),
    };
    let report = TrainReport {
        schema: "wavegan-train-report v1".into(),
        best_loss: best_so_far(&trajectory),
        loss: trajectory,
        best_iteration: best_at,
        final_box_ipm,
        penalty,
        regularity_passed: passed,
        regularity_advisory: advisory,
        config: cfg.clone(),
        checkpoints: saved,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Volume of the Euclidean ball of radius `r` in `ℝ^p`.
pub fn ball_volume(p: usize, r: f64) -> f64 {
    // V_p = π^{p/2} / Γ(p/2 + 1), via the two-step recursion V_p = 2π/p · V_{p−2}.
    let mut v = if p % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if p % 2 == 0 { 2 } else { 3 };
    while k <= p {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v * r.powi(p as i32)
}

/// Points uniform on `B^p(0, K)`: the latent design mapped to the cube, outside points discarded.
pub fn ball_points(design: LatentDesign, p: usize, radius: f64, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * p);
    let mut ask = m * 2 + 16;
    loop {
        out.clear();
        let raw = match design {
            LatentDesign::Grid => {
                let per = ((ask as f64).powf(1.0 / p as f64)).ceil() as usize;
                LatentDesign::Grid.points(p, per.pow(p as u32))
            }
            other => other.points(p, ask),
        };
        for u in raw.chunks_exact(p) {
            let x: Vec<f64> = u.iter().map(|t| radius * (2.0 * t - 1.0)).collect();
            if x.iter().map(|c| c * c).sum::<f64>() <= radius * radius {
                out.extend_from_slice(&x);
                if out.len() == m * p && !matches!(design, LatentDesign::Grid) {
                    return out;
                }
            }
        }
        if matches!(design, LatentDesign::Grid) && out.len() >= m * p {
            return out;
        }
        ask *= 2;
    }
}

/// Starting point for the density fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityInit {
    Zeros,
    /// Empirical coefficients of the data, clipped to the box.
    MomentsClip,
    Random,
}

/// The smoothed density-adversarial objective. Writing `G_{da} = (vol/M) Σ_k ψ_d(U_k) ψ_a(U_k)`
/// and `m` for the data moments, it is `Σ_d w_d s_ε(m_d − (Gα)_d)` with `w_d` the
/// discriminator bound of `d`'s level.
pub struct DensityObjective {
    spec: BasisSpec,
    /// Layouts of levels `0..=max(J, J_D)`; both sides share one basis.
    layouts: Vec<LevelLayout>,
    level: u32,
    level_d: u32,
    /// Dense data moments per discriminator level.
    data: Vec<Vec<f64>>,
    weights: Vec<f64>,
    u: Vec<f64>,
    factor: f64,
    eps: f64,
    scratch: Scratch,
    active: Vec<(u32, u64, f64)>,
    /// Density coefficients whose basis function is nonzero at some `U_k`; the rest
    /// cannot affect the objective and are held at zero.
    touched: Vec<Vec<bool>>,
}

impl DensityObjective {
    pub fn new(x: &EmpiricalMeasure, cfg: &TrainConfig, spec: &BasisSpec, level: u32, level_d: u32) -> Result<Self> {
        let eta_d = cfg.beta.min(cfg.p as f64 / 2.0);
        let disc_schedule = BoundSchedule::new(eta_d, 1.0, cfg.c_eta_d, cfg.p)?;
        let layouts: Vec<LevelLayout> = (0..=level.max(level_d)).map(|j| LevelLayout::new(spec, j)).collect();
        for l in &layouts {
            if l.size() > DENSE_DENSITY_LIMIT {
                return Err(Error::InvalidParams(format!("level {} has {} coefficients; lower the cutoff", l.j, l.size())));
            }
        }
        let mut acc = MomentAccumulator::new(spec, level_d);
        acc.add_measure(x);
        let data = acc
            .stores()
            .iter()
            .zip(acc.layouts())
            .map(|(store, l)| {
                let mut v = vec![0.0; l.size() as usize];
                for (k, m) in store.sorted_entries() {
                    v[k as usize] = m;
                }
                v
            })
            .collect();
        let u = ball_points(cfg.design(), cfg.p, cfg.radius, cfg.m());
        let count = u.len() / cfg.p;
        let mut obj = DensityObjective {
            spec: spec.clone(),
            level,
            level_d,
            data,
            weights: (0..=level_d).map(|j| disc_schedule.bound(j)).collect(),
            layouts,
            u,
            factor: ball_volume(cfg.p, cfg.radius) / count as f64,
            eps: cfg.eps,
            scratch: Scratch::default(),
            active: Vec::new(),
            touched: Vec::new(),
        };
        let mut touched: Vec<Vec<bool>> = obj.layouts().iter().map(|l| vec![false; l.size() as usize]).collect();
        for k in 0..count {
            obj.collect_active(k);
            for &(j, key, v) in obj.active.iter().filter(|a| a.0 <= level) {
                if v != 0.0 {
                    touched[j as usize][key as usize] = true;
                }
            }
        }
        obj.touched = touched;
        Ok(obj)
    }

    /// Zero every coefficient outside the touched set.
    pub fn restrict(&self, alpha: &mut [Vec<f64>]) {
        for (a, t) in alpha.iter_mut().zip(&self.touched) {
            a.iter_mut().zip(t).for_each(|(x, &on)| {
                if !on {
                    *x = 0.0
                }
            });
        }
    }

    /// Layouts of the density's levels `0..=J`.
    pub fn layouts(&self) -> &[LevelLayout] {
        &self.layouts[..=self.level as usize]
    }

    /// Layouts of the discriminator's levels `0..=J_D`.
    pub fn disc_layouts(&self) -> &[LevelLayout] {
        &self.layouts[..=self.level_d as usize]
    }

    /// Discriminator bound per level.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Empirical coefficients of the data at the density's levels (zero beyond the discriminator cutoff).
    pub fn data_coefficients(&self) -> Vec<Vec<f64>> {
        self.layouts()
            .iter()
            .map(|l| self.data.get(l.j as usize).cloned().unwrap_or_else(|| vec![0.0; l.size() as usize]))
            .collect()
    }

    /// Collect `(j, key, ψ(U_k))` for every in-box index active at `U_k`.
    fn collect_active(&mut self, k: usize) {
        let p = self.spec.dim();
        let x = &self.u[k * p..(k + 1) * p];
        self.active.clear();
        for layout in &self.layouts {
            let active = &mut self.active;
            self.spec.for_each_active(x, layout.j, false, &mut self.scratch, |l, w, v, _| {
                if let Some(key) = layout.key(l, w) {
                    active.push((layout.j, key, v));
                }
            });
        }
    }

    fn count(&self) -> usize {
        self.u.len() / self.spec.dim()
    }

    /// `Gα`, per discriminator level.
    pub fn forward(&mut self, alpha: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (level, level_d) = (self.level, self.level_d);
        let mut z: Vec<Vec<f64>> = self.disc_layouts().iter().map(|l| vec![0.0; l.size() as usize]).collect();
        for k in 0..self.count() {
            self.collect_active(k);
            let f: f64 = self.active.iter().filter(|a| a.0 <= level).map(|&(j, key, v)| alpha[j as usize][key as usize] * v).sum();
            let c = self.factor * f;
            if c == 0.0 {
                continue;
            }
            for &(j, key, v) in self.active.iter().filter(|a| a.0 <= level_d) {
                z[j as usize][key as usize] += c * v;
            }
        }
        z
    }

    /// `Gᵀy`, per density level.
    pub fn adjoint(&mut self, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (level, level_d) = (self.level, self.level_d);
        let mut out: Vec<Vec<f64>> = self.layouts().iter().map(|l| vec![0.0; l.size() as usize]).collect();
        for k in 0..self.count() {
            self.collect_active(k);
            let h: f64 = self.active.iter().filter(|a| a.0 <= level_d).map(|&(j, key, v)| y[j as usize][key as usize] * v).sum();
            let c = self.factor * h;
            if c == 0.0 {
                continue;
            }
            for &(j, key, v) in self.active.iter().filter(|a| a.0 <= level) {
                out[j as usize][key as usize] += c * v;
            }
        }
        out
    }

    /// Objective value at model moments `z = Gα`.
    pub fn loss_at(&self, z: &[Vec<f64>]) -> f64 {
        self.data
            .iter()
            .zip(z)
            .zip(&self.weights)
            .map(|((d, m), w)| w * d.iter().zip(m).map(|(a, b)| smooth_abs(a - b, self.eps).0).sum::<f64>())
            .sum()
    }

    /// Objective and (optionally) its gradient with respect to the dense coefficients.
    pub fn evaluate(&mut self, alpha: &[Vec<f64>], want_grad: bool) -> (f64, Vec<Vec<f64>>) {
        let z = self.forward(alpha);
        let loss = self.loss_at(&z);
        if !want_grad {
            return (loss, Vec::new());
        }
        let y: Vec<Vec<f64>> = self
            .data
            .iter()
            .zip(&z)
            .zip(&self.weights)
            .map(|((d, m), w)| d.iter().zip(m).map(|(a, b)| -w * smooth_abs(a - b, self.eps).1).collect())
            .collect();
        (loss, self.adjoint(&y))
    }
}

/// Largest per-level layout the density fit stores densely.
pub const DENSE_DENSITY_LIMIT: u128 = 1 << 24;

/// Power-iteration steps used to size the primal-dual steps.
pub const POWER_STEPS: usize = 12;

/// How the density fit is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityOptimizer {
    /// Projected subgradient with a per-level diagonal metric.
    Subgradient,
    /// Chambolle–Pock iteration on the unsmoothed objective, with diagonal step sizes.
    PrimalDual,
}

impl DensityOptimizer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subgradient" => Ok(DensityOptimizer::Subgradient),
            "primal-dual" => Ok(DensityOptimizer::PrimalDual),
            other => Err(Error::InvalidParams(format!("unknown density optimizer {other:?}"))),
        }
    }
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

/// Chambolle–Pock for `min_{α ∈ box} Σ_d w_d |(Gα)_d − m_d|`.
///
/// Step sizes are diagonal by level, `τ = t·b_j/w_j` and `σ = t·w_j/b_j`, with `t`
/// chosen from a power-iteration estimate of `‖Σ^{1/2} G T^{1/2}‖` so the iteration converges.
fn primal_dual(
    obj: &mut DensityObjective,
    alpha0: Vec<Vec<f64>>,
    box_bounds: &BoundSchedule,
    iterations: usize,
    seed: u64,
    observe: &mut dyn FnMut(usize, &[Vec<f64>]) -> Result<()>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    let mut tau: Vec<Vec<f64>> = obj
        .layouts()
        .iter()
        .map(|l| vec![box_bounds.bound(l.j) / obj.weights[l.j.min(obj.level_d) as usize]; l.size() as usize])
        .collect();
    obj.restrict(&mut tau);
    let sigma: Vec<f64> = obj.disc_layouts().iter().map(|l| obj.weights[l.j as usize] / box_bounds.bound(l.j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Vec<f64>> = obj.layouts().iter().map(|l| (0..l.size()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut rho2: f64 = 0.0;
    for _ in 0..POWER_STEPS {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            break;
        }
        let scaled: Vec<Vec<f64>> =
            v.iter().zip(&tau).map(|(a, t)| a.iter().zip(t).map(|(x, t)| x * t.sqrt() / norm).collect()).collect();
        let mut z = obj.forward(&scaled);
        z.iter_mut().zip(&sigma).for_each(|(a, s)| a.iter_mut().for_each(|x| *x *= s));
        let back = obj.adjoint(&z);
        v = back.iter().zip(&tau).map(|(a, t)| a.iter().zip(t).map(|(x, t)| x * t.sqrt()).collect()).collect();
        rho2 = dot(&v, &v).sqrt();
    }
    // Power iteration approaches ‖·‖² from below; leave headroom.
    let t = 0.9 / (1.1 * rho2.max(1e-300)).sqrt();
    let clip_box = |alpha: &mut Vec<Vec<f64>>, layouts: &[LevelLayout]| {
        for (a, l) in alpha.iter_mut().zip(layouts) {
            let b = box_bounds.bound(l.j);
            a.iter_mut().for_each(|x| *x = x.clamp(-b, b));
        }
    };
    let layouts: Vec<LevelLayout> = obj.layouts().to_vec();
    let mut alpha = alpha0;
    clip_box(&mut alpha, &layouts);
    let mut z = obj.forward(&alpha);
    let mut trajectory = vec![obj.loss_at(&z)];
    let mut best = alpha.clone();
    let mut best_at = 0;
    let mut y: Vec<Vec<f64>> = z.iter().map(|l| vec![0.0; l.len()]).collect();
    for it in 1..=iterations {
        let g = obj.adjoint(&y);
        for ((a, gl), ta) in alpha.iter_mut().zip(&g).zip(&tau) {
            a.iter_mut().zip(gl).zip(ta).for_each(|((x, gv), tv)| *x -= t * tv * gv);
        }
        clip_box(&mut alpha, &layouts);
        let z_new = obj.forward(&alpha);
        for (j, yl) in y.iter_mut().enumerate() {
            let (w, s) = (obj.weights[j], t * sigma[j]);
            for (k, yv) in yl.iter_mut().enumerate() {
                let bar = 2.0 * z_new[j][k] - z[j][k];
                *yv = (*yv + s * (bar - obj.data[j][k])).clamp(-w, w);
            }
        }
        z = z_new;
        let loss = obj.loss_at(&z);
        if loss < trajectory[best_at] {
            best_at = it;
            best.clone_from(&alpha);
        }
        trajectory.push(loss);
        observe(it, &best)?;
    }
    Ok((best, trajectory, best_at))
}

/// Fit a density on `ℝ^p` (`p = d`) to `x`.
pub fn fit_density_adversarial(
    x: &EmpiricalMeasure,
    cfg: &TrainConfig,
    init: DensityInit,
    wavelet: Arc<Wavelet>,
) -> Result<(CoefficientField, TrainReport)> {
    fit_density_with(x, cfg, init, wavelet, None)
}

/// Coefficient field of a dense parameter vector, projected onto the box.
fn density_field(obj: &DensityObjective, alpha: &[Vec<f64>], level: u32, schedule: &BoundSchedule) -> Result<CoefficientField> {
    let p = obj.spec.dim();
    let Domain::Ambient { radius } = obj.spec.domain() else { unreachable!("density basis is ambient") };
    let mut field = CoefficientField::new(p, Domain::Ambient { radius }, level, schedule.eta, radius);
    for (layout, a) in obj.layouts().iter().zip(alpha) {
        for (k, &v) in a.iter().enumerate() {
            if v != 0.0 {
                let (l, w) = layout.decode(k as u64);
                if l == obj.spec.scaling_type() && layout.j != 0 {
                    continue;
                }
                field.set(WaveletIndex { j: layout.j, l, w }, v)?;
            }
        }
    }
    Ok(field.project_box(schedule))
}

/// [`fit_density_adversarial`] with optional checkpoints.
pub fn fit_density_with(
    x: &EmpiricalMeasure,
    cfg: &TrainConfig,
    init: DensityInit,
    wavelet: Arc<Wavelet>,
    mut checkpoints: Option<Checkpointer<'_, CoefficientField>>,
) -> Result<(CoefficientField, TrainReport)> {
    cfg.validate()?;
    if cfg.p != cfg.d {
        return Err(Error::DimensionMismatch(format!("density mode needs p = d (p = {}, d = {})", cfg.p, cfg.d)));
    }
    if x.dim() != cfg.p {
        return Err(Error::DimensionMismatch(format!("data in dim {} but p = {}", x.dim(), cfg.p)));
    }
    let start = Instant::now();
    let spec = BasisSpec::ambient(cfg.p, cfg.radius, wavelet)?;
    let eta = cfg.beta;
    let delta = cfg.delta.unwrap_or_else(|| default_delta(cfg.n, cfg.beta, cfg.p));
    let eta_d = cfg.beta.min(cfg.p as f64 / 2.0);
    let delta_d = cfg.delta_d.unwrap_or_else(|| default_delta(cfg.n, eta_d, cfg.p));
    let (level, level_d) = (level_for_delta(delta), level_for_delta(delta_d));
    let schedule = BoundSchedule::new(eta, cfg.radius, cfg.c_eta, cfg.p)?;
    let mut obj = DensityObjective::new(x, cfg, &spec, level, level_d)?;
    let bounds: Vec<f64> = obj.layouts().iter().map(|l| schedule.bound(l.j)).collect();
    let sizes: Vec<usize> = obj.layouts().iter().map(|l| l.size() as usize).collect();
    let mut alpha0: Vec<Vec<f64>> = match init {
        DensityInit::Zeros => sizes.iter().map(|&s| vec![0.0; s]).collect(),
        DensityInit::MomentsClip => obj.data_coefficients(),
        DensityInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sizes.iter().zip(&bounds).map(|(&s, b)| (0..s).map(|_| b * rng.random_range(-1.0..1.0)).collect()).collect()
        }
    };
    obj.restrict(&mut alpha0);
    // The objective is borrowed by the optimizer, so snapshots become fields afterwards.
    let every = checkpoints.as_ref().map_or(0, |c| c.every);
    let mut snapshots: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    let (alpha, trajectory, best_at) = match cfg.density_optimizer {
        DensityOptimizer::PrimalDual => {
            let mut snap = |t: usize, alpha: &[Vec<f64>]| -> Result<()> {
                if every > 0 && t % every == 0 {
                    snapshots.push((t, alpha.to_vec()));
                }
                Ok(())
            };
            primal_dual(&mut obj, alpha0, &schedule, cfg.iterations, cfg.seed, &mut snap)?
        }
        DensityOptimizer::Subgradient => {
            let theta0: Vec<f64> = alpha0.iter().zip(&bounds).flat_map(|(a, b)| a.iter().map(move |v| v / b)).collect();
            let unpack = |theta: &[f64]| -> Vec<Vec<f64>> {
                let mut out = Vec::with_capacity(sizes.len());
                let mut at = 0;
                for (&s, b) in sizes.iter().zip(&bounds) {
                    out.push(theta[at..at + s].iter().map(|t| t * b).collect());
                    at += s;
                }
                out
            };
            // Near the optimum G is close to the identity, so level j of the θ-gradient
            // carries a factor bound(j)·w(j); the metric undoes it.
            let mut metric: Vec<Vec<f64>> = obj
                .layouts()
                .iter()
                .map(|l| vec![1.0 / (schedule.bound(l.j) * obj.weights()[l.j.min(level_d) as usize]); l.size() as usize])
                .collect();
            obj.restrict(&mut metric);
            let precond: Vec<f64> = metric.concat();
            let mut snap = |t: usize, theta: &[f64]| -> Result<()> {
                if every > 0 && t % every == 0 {
                    snapshots.push((t, unpack(theta)));
                }
                Ok(())
            };
            let (best, traj, at) = projected_subgradient(
                theta0,
                cfg.iterations,
                cfg.step,
                cfg.step_rule,
                &precond,
                |theta, want_grad| {
                    let (loss, grad) = obj.evaluate(&unpack(theta), want_grad);
                    let g: Vec<f64> = grad.iter().zip(&bounds).flat_map(|(gl, b)| gl.iter().map(move |v| v * b)).collect();
                    Ok((loss, g))
                },
                &mut snap,
            )?;
            (unpack(&best), traj, at)
        }
    };
    if let Some(t) = trajectory.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { iteration: t });
    }
    let field = density_field(&obj, &alpha, level, &schedule)?;
    let mut saved = Vec::new();
    if let Some(c) = checkpoints.as_mut() {
        for (t, a) in &snapshots {
            saved.push((c.save)(*t, &density_field(&obj, a, level, &schedule)?)?);
        }
    }
    let report = TrainReport {
        schema: "wavegan-train-report v1".into(),
        best_loss: best_so_far(&trajectory),
        final_box_ipm: trajectory[best_at],
        loss: trajectory,
        best_iteration: best_at,
        penalty: 0.0,
        regularity_passed: None,
        regularity_advisory: false,
        config: cfg.clone(),
        checkpoints: saved,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((field, report))
}
