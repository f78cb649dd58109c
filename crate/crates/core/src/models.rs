//! Generator and discriminator classes, latent designs and the computable
//! regularity conditions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::basis::{BasisSpec, Domain, Scratch, WaveletIndex};
use crate::besov::{synthesize, synthesize_gradient, BoundSchedule, CoefficientField};
use crate::error::{Error, Result};
use crate::ipm::{EmpiricalMeasure, IpmMode, MomentAccumulator, MomentField};
use crate::wavelet::Wavelet;

/// Default cap on the number of χ-grid points.
pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

/// `n^{−1/(2β+d)}`.
pub fn default_delta(n: usize, beta: f64, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (2.0 * beta + d as f64))
}

/// `⌈log₂(1/δ)⌉`, at least 0.
pub fn level_for_delta(delta: f64) -> u32 {
    (1.0 / delta).log2().ceil().max(0.0) as u32
}

/// Discriminator smoothness `(β+1) ∧ d/2` for the manifold setting.
pub fn discriminator_eta(beta: f64, d: usize) -> f64 {
    (beta + 1.0).min(d as f64 / 2.0)
}

/// `n^{−1/(2β̃+d)}` with `β̃ = η_D − 1`; falls back to the generator cutoff when
/// `2β̃ + d ≤ 0` (the exponent is then undefined).
pub fn default_delta_d(n: usize, beta: f64, d: usize) -> f64 {
    let tilde = discriminator_eta(beta, d) - 1.0;
    let denom = 2.0 * tilde + d as f64;
    if denom <= 1e-12 {
        default_delta(n, beta, d)
    } else {
        (n as f64).powf(-1.0 / denom)
    }
}

/// How latent points are placed on `𝕋^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentDesign {
    Iid { seed: u64 },
    Grid,
    Halton,
}

impl LatentDesign {
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        match s {
            "fixed-iid" | "iid" => Ok(LatentDesign::Iid { seed }),
            "tensor-grid" | "grid" => Ok(LatentDesign::Grid),
            "low-discrepancy" | "halton" => Ok(LatentDesign::Halton),
            other => Err(Error::InvalidParams(format!("unknown latent design {other:?}"))),
        }
    }

    /// Row-major points. The grid design uses `⌈M^{1/d}⌉^d` cell midpoints.
    pub fn points(&self, d: usize, m: usize) -> Vec<f64> {
        match *self {
            LatentDesign::Iid { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..m * d).map(|_| rng.random::<f64>()).collect()
            }
            LatentDesign::Grid => {
                let mut k = (m as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
                while k.pow(d as u32) < m {
                    k += 1;
                }
                let total = k.pow(d as u32);
                let mut out = Vec::with_capacity(total * d);
                for code in 0..total {
                    let mut c = code;
                    for _ in 0..d {
                        out.push(((c % k) as f64 + 0.5) / k as f64);
                        c /= k;
                    }
                }
                out
            }
            LatentDesign::Halton => halton(d, m),
        }
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// First `m` Halton points in `[0,1)^d` (index 0 skipped).
pub fn halton(d: usize, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * d);
    for i in 1..=m as u64 {
        for &b in &PRIMES[..d] {
            out.push(radical_inverse(i, b));
        }
    }
    out
}

/// Class parameters of a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub d: usize,
    pub p: usize,
    pub beta: f64,
    pub delta: f64,
    pub radius: f64,
    pub chi: f64,
    pub c_eta: f64,
    pub seed: u64,
}

/// `𝕋^d → ℝ^p`, one periodic coefficient field per output coordinate.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    spec: BasisSpec,
    params: GeneratorParams,
    schedule: BoundSchedule,
    max_level: u32,
    fields: Vec<CoefficientField>,
}

/// Dense numbering of all periodic indices up to a level.
#[derive(Debug, Clone)]
pub struct PeriodicLayout {
    dim: usize,
    offsets: Vec<usize>,
}

impl PeriodicLayout {
    pub fn new(dim: usize, max_level: u32) -> Self {
        let mut offsets = vec![0, 1 << dim];
        for j in 1..=max_level {
            let last = *offsets.last().unwrap();
            offsets.push(last + ((1usize << dim) - 1) * (1usize << (j as usize * dim)));
        }
        PeriodicLayout { dim, offsets }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_level(&self) -> u32 {
        self.offsets.len() as u32 - 2
    }

    #[inline]
    pub fn position(&self, j: u32, l: u32, z: &[i64]) -> usize {
        let shift = j as usize * self.dim;
        let mut code = 0usize;
        for &zi in z.iter().rev() {
            code = (code << j) + zi as usize;
        }
        self.offsets[j as usize] + (((l - 1) as usize) << shift) + code
    }

    pub fn index(&self, pos: usize) -> WaveletIndex {
        let j = self.offsets.iter().rposition(|&o| o <= pos).unwrap().min(self.offsets.len() - 2);
        let rel = pos - self.offsets[j];
        let shift = j * self.dim;
        let l = (rel >> shift) as u32 + 1;
        let mut code = rel & ((1usize << shift) - 1);
        let mask = (1usize << j) - 1;
        let w: Vec<i64> = (0..self.dim)
            .map(|_| {
                let z = (code & mask) as i64;
                code >>= j;
                z
            })
            .collect();
        WaveletIndex::new(j as u32, l, &w)
    }
}

/// Sparse rows `(position, ψ^per(u))` of the synthesis map at a set of latent points.
#[derive(Debug, Clone)]
pub struct DesignRows {
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl DesignRows {
    pub fn new(spec: &BasisSpec, layout: &PeriodicLayout, points: &[f64]) -> Self {
        let d = spec.dim();
        let mut scratch = Scratch::default();
        let rows = points
            .chunks_exact(d)
            .map(|u| {
                let mut row = Vec::new();
                for j in 0..=layout.max_level() {
                    spec.for_each_active(u, j, false, &mut scratch, |l, z, v, _| {
                        if v != 0.0 {
                            row.push((layout.position(j, l, z) as u32, v));
                        }
                    });
                }
                row
            })
            .collect();
        DesignRows { rows }
    }

    /// `out[k·p + i] = Σ row_k · params_i`, params laid out `[i][position]`.
    pub fn apply(&self, params: &[Vec<f64>], out: &mut Vec<f64>) {
        let p = params.len();
        out.clear();
        out.resize(self.rows.len() * p, 0.0);
        for (k, row) in self.rows.iter().enumerate() {
            for (i, a) in params.iter().enumerate() {
                out[k * p + i] = row.iter().map(|&(pos, v)| a[pos as usize] * v).sum();
            }
        }
    }
}

impl GeneratorModel {
    /// All-zero generator of the class.
    pub fn zeros(params: GeneratorParams, wavelet: Arc<Wavelet>) -> Result<Self> {
        if !(params.delta > 0.0 && params.delta <= 1.0) {
            return Err(Error::InvalidParams(format!("cutoff delta must lie in (0, 1], got {}", params.delta)));
        }
        if params.p == 0 {
            return Err(Error::InvalidParams("output dimension p must be positive".into()));
        }
        let spec = BasisSpec::periodic(params.d, wavelet)?;
        let schedule = BoundSchedule::new(params.beta + 1.0, params.radius, params.c_eta, params.d)?;
        let max_level = level_for_delta(params.delta);
        let field = CoefficientField::new(params.d, Domain::Periodic, max_level, params.beta + 1.0, params.radius);
        let fields = vec![field; params.p];
        Ok(GeneratorModel { spec, params, schedule, max_level, fields })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn schedule(&self) -> &BoundSchedule {
        &self.schedule
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    pub fn eta(&self) -> f64 {
        self.params.beta + 1.0
    }

    pub fn fields(&self) -> &[CoefficientField] {
        &self.fields
    }

    pub fn set_field(&mut self, i: usize, cf: CoefficientField) -> Result<()> {
        if cf.dim() != self.params.d || cf.max_level() > self.max_level || !cf.iter().all(|(k, _)| self.spec.is_valid(k)) {
            return Err(Error::DimensionMismatch("field does not fit the generator's basis".into()));
        }
        let mut cf = cf;
        cf = CoefficientField::new(self.params.d, Domain::Periodic, self.max_level, self.eta(), self.params.radius)
            .axpy(0.0, &cf)?;
        self.fields[i] = cf;
        Ok(())
    }

    pub fn layout(&self) -> PeriodicLayout {
        PeriodicLayout::new(self.params.d, self.max_level)
    }

    /// Dense coefficients `[i][position]`.
    pub fn to_params(&self) -> Vec<Vec<f64>> {
        let layout = self.layout();
        self.fields
            .iter()
            .map(|f| {
                let mut v = vec![0.0; layout.len()];
                for (idx, a) in f.iter() {
                    v[layout.position(idx.j, idx.l, &idx.w)] = *a;
                }
                v
            })
            .collect()
    }

    /// Inverse of [`GeneratorModel::to_params`]; zero coefficients are not stored.
    pub fn with_params(&self, params: &[Vec<f64>]) -> GeneratorModel {
        let layout = self.layout();
        let mut out = self.clone();
        for (field, vals) in out.fields.iter_mut().zip(params) {
            *field = field.empty_like();
            for (pos, &a) in vals.iter().enumerate() {
                if a != 0.0 {
                    field.set(layout.index(pos), a).expect("layout index is valid");
                }
            }
        }
        out
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        self.fields.iter().map(|f| synthesize(&self.spec, f, u)).collect()
    }

    /// `p × d` Jacobian, row-major.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        self.fields.iter().flat_map(|f| synthesize_gradient(&self.spec, f, u)).collect()
    }

    /// Entrywise clip of every field to the class box.
    pub fn project_box(&self) -> GeneratorModel {
        let mut out = self.clone();
        for f in out.fields.iter_mut() {
            *f = f.project_box(&self.schedule);
        }
        out
    }

    pub fn in_box(&self) -> bool {
        self.fields.iter().all(|f| f.in_box(&self.schedule))
    }

    /// Push a latent point set (row-major, equal weights) through the model.
    pub fn push_forward(&self, latent: &[f64]) -> Result<EmpiricalMeasure> {
        let layout = self.layout();
        let rows = DesignRows::new(&self.spec, &layout, latent);
        let mut out = Vec::new();
        rows.apply(&self.to_params(), &mut out);
        EmpiricalMeasure::uniform(self.params.p, out)
    }

    /// Text form: a metadata line, then one coefficient-field block per output coordinate.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let w = self.spec.wavelet();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# wavegan generator v1 d={} p={} beta={:?} eta={:?} delta={:?} J={} K={:?} chi={:?} c_eta={:?} seed={} nv={} grid_level={} max_derivative={}",
            p.d,
            p.p,
            p.beta,
            self.eta(),
            p.delta,
            self.max_level,
            p.radius,
            p.chi,
            p.c_eta,
            p.seed,
            w.vanishing_moments(),
            w.grid_level(),
            w.max_derivative()
        );
        for f in &self.fields {
            out.push_str(&f.to_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, m: &str| Error::Parse { line, message: m.into() };
        let head = lines.first().ok_or_else(|| err(1, "empty model file"))?;
        if !head.starts_with("# wavegan generator v1") {
            return Err(err(1, "not a generator model header"));
        }
        let meta: HashMap<&str, &str> = head.split_whitespace().skip(4).filter_map(|t| t.split_once('=')).collect();
        let num = |k: &str| -> Result<f64> {
            meta.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| err(1, &format!("header lacks numeric {k}")))
        };
        let params = GeneratorParams {
            d: num("d")? as usize,
            p: num("p")? as usize,
            beta: num("beta")?,
            delta: num("delta")?,
            radius: num("K")?,
            chi: num("chi")?,
            c_eta: num("c_eta")?,
            seed: meta.get("seed").and_then(|v| v.parse().ok()).ok_or_else(|| err(1, "bad seed"))?,
        };
        let wavelet = Wavelet::new(num("nv")? as usize, num("grid_level")? as u32, num("max_derivative")? as usize)?;
        let mut model = GeneratorModel::zeros(params, Arc::new(wavelet))?;
        if model.max_level != num("J")? as u32 {
            return Err(err(1, "J inconsistent with delta"));
        }
        let mut at = 1;
        for i in 0..model.p() {
            let (f, used) = CoefficientField::from_text_prefix(&lines[at..], at)?;
            model.set_field(i, f)?;
            at += used;
        }
        if lines[at..].iter().any(|l| !l.trim().is_empty()) {
            return Err(err(at + 1, "trailing content"));
        }
        Ok(model)
    }
}

/// Discriminator class: ambient basis on `B^p(0,K)`, cutoff and bound schedule (with unit radius).
#[derive(Debug, Clone)]
pub struct DiscriminatorSpec {
    pub spec: BasisSpec,
    pub eta: f64,
    pub delta: f64,
    pub max_level: u32,
    pub schedule: BoundSchedule,
}

impl DiscriminatorSpec {
    pub fn new(p: usize, radius: f64, eta: f64, delta: f64, c_eta: f64, wavelet: Arc<Wavelet>) -> Result<Self> {
        let spec = BasisSpec::ambient(p, radius, wavelet)?;
        let schedule = BoundSchedule::new(eta, 1.0, c_eta, p)?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParams(format!("cutoff delta must lie in (0, 1], got {delta}")));
        }
        Ok(DiscriminatorSpec { spec, eta, delta, max_level: level_for_delta(delta), schedule })
    }
}

/// Moment-based IPM between the model's push-forward of `latent` and `x`.
pub fn ipm_model_vs_sample(
    gm: &GeneratorModel,
    x: &EmpiricalMeasure,
    disc: &DiscriminatorSpec,
    mode: &IpmMode,
    latent: &[f64],
) -> Result<f64> {
    if latent.is_empty() {
        return Err(Error::InvalidParams("need at least one latent point".into()));
    }
    let pushed = gm.push_forward(latent)?;
    let m: MomentField = crate::ipm::empirical_moments(x, &pushed, &disc.spec, disc.max_level)?;
    Ok(mode.evaluate(&m))
}

/// Same as [`ipm_model_vs_sample`] but tolerant of push-forward points outside the ball.
pub fn ipm_unchecked(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, disc: &DiscriminatorSpec, mode: &IpmMode) -> f64 {
    let mut a = MomentAccumulator::new(&disc.spec, disc.max_level);
    a.add_measure(mu);
    let mut b = MomentAccumulator::new(&disc.spec, disc.max_level);
    b.add_measure(nu);
    mode.evaluate(&MomentField::difference(&a, &b))
}

/// The χ-grid `{z / c : z ∈ {0..⌊c⌋}^d}` with `c = 2^5 √d K² χ²`.
#[derive(Debug, Clone)]
pub struct RegularityGrid {
    pub d: usize,
    pub radius: f64,
    pub chi: f64,
    pub scale: f64,
    /// Points per axis actually used.
    pub per_axis: usize,
    pub stride: usize,
    pub advisory: bool,
    pub points: Vec<f64>,
    /// Multi-index `z` of each point, row-major.
    pub codes: Vec<u64>,
}

impl RegularityGrid {
    pub fn new(d: usize, radius: f64, chi: f64, cap: u128, coarse: bool) -> Result<Self> {
        if !(chi > radius) {
            return Err(Error::InvalidParams(format!("chi must exceed K (chi={chi}, K={radius})")));
        }
        let scale = 32.0 * (d as f64).sqrt() * radius * radius * chi * chi;
        let full = scale.floor() as u128 + 1;
        let required = full.checked_pow(d as u32).unwrap_or(u128::MAX);
        let mut stride = 1usize;
        let mut advisory = false;
        if required > cap {
            if !coarse {
                return Err(Error::GridTooLarge { required, cap });
            }
            advisory = true;
            while (full.div_ceil(stride as u128)).pow(d as u32) > cap {
                stride += 1;
            }
        }
        let axis: Vec<u64> = (0..full as u64).step_by(stride).collect();
        let per_axis = axis.len();
        let total = per_axis.pow(d as u32);
        let mut points = Vec::with_capacity(total * d);
        let mut codes = Vec::with_capacity(total * d);
        for code in 0..total {
            let mut c = code;
            for _ in 0..d {
                let z = axis[c % per_axis];
                codes.push(z);
                points.push(z as f64 / scale);
                c /= per_axis;
            }
        }
        Ok(RegularityGrid { d, radius, chi, scale, per_axis, stride, advisory, points, codes })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Image-distance threshold `1/(8Kχ²)`.
    pub fn image_threshold(&self) -> f64 {
        1.0 / (8.0 * self.radius * self.chi * self.chi)
    }

    /// Torus-distance threshold `1/(4χ²)` defining far pairs.
    pub fn far_threshold(&self) -> f64 {
        1.0 / (4.0 * self.chi * self.chi)
    }

    fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            let t = (self.points[a * d + i] - self.points[b * d + i]).rem_euclid(1.0);
            let t = t.min(1.0 - t);
            s += t * t;
        }
        s.sqrt()
    }

    /// Number of ordered far pairs.
    pub fn far_pair_count(&self) -> usize {
        let n = self.len();
        let far = self.far_threshold();
        let mut count = 0;
        for a in 0..n {
            for b in 0..n {
                if a != b && self.torus_distance(a, b) >= far {
                    count += 1;
                }
            }
        }
        count
    }

    /// Check and penalty for images `g(z)` (row-major, `p` per point).
    pub fn evaluate(&self, images: &[f64], p: usize, want_grad: bool) -> RegularityOutcome {
        let n = self.len();
        let r = self.image_threshold();
        let r2 = r * r;
        let far = self.far_threshold();
        let mut cells: HashMap<SmallVec<[i64; 4]>, Vec<usize>> = HashMap::new();
        let cell_of = |k: usize| -> SmallVec<[i64; 4]> {
            images[k * p..(k + 1) * p].iter().map(|x| (x / r).floor() as i64).collect()
        };
        for k in 0..n {
            cells.entry(cell_of(k)).or_default().push(k);
        }
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        let neighbours = 3usize.pow(p as u32);
        for a in 0..n {
            let base = cell_of(a);
            for code in 0..neighbours {
                let mut c = code;
                let key: SmallVec<[i64; 4]> = base
                    .iter()
                    .map(|&x| {
                        let o = (c % 3) as i64 - 1;
                        c /= 3;
                        x + o
                    })
                    .collect();
                let Some(list) = cells.get(&key) else { continue };
                for &b in list {
                    if b <= a {
                        continue;
                    }
                    let d2: f64 = (0..p).map(|i| (images[a * p + i] - images[b * p + i]).powi(2)).sum();
                    if d2 <= r2 && self.torus_distance(a, b) >= far {
                        pairs.push((a, b, d2.sqrt()));
                    }
                }
            }
        }
        pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut penalty = 0.0;
        let mut grad = if want_grad { vec![0.0; n * p] } else { Vec::new() };
        for &(a, b, dist) in &pairs {
            // Both orders (a, b) and (b, a) appear in the paper's sum.
            penalty += 2.0 * (r2 - dist * dist);
            if want_grad {
                for i in 0..p {
                    let diff = images[a * p + i] - images[b * p + i];
                    grad[a * p + i] -= 4.0 * diff;
                    grad[b * p + i] += 4.0 * diff;
                }
            }
        }
        let witness = pairs
            .iter()
            .min_by(|x, y| x.2.total_cmp(&y.2).then((x.0, x.1).cmp(&(y.0, y.1))))
            .map(|&(a, b, dist)| Violation {
                first: self.codes[a * self.d..(a + 1) * self.d].to_vec(),
                second: self.codes[b * self.d..(b + 1) * self.d].to_vec(),
                image_distance: dist,
            });
        RegularityOutcome {
            passed: pairs.is_empty(),
            violating_pairs: 2 * pairs.len(),
            witness,
            penalty,
            grad,
            advisory: self.advisory,
        }
    }
}

/// A far grid pair whose images are too close.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub first: Vec<u64>,
    pub second: Vec<u64>,
    pub image_distance: f64,
}

#[derive(Debug, Clone)]
pub struct RegularityOutcome {
    pub passed: bool,
    /// Ordered pairs counted.
    pub violating_pairs: usize,
    /// The violating pair with the smallest image distance.
    pub witness: Option<Violation>,
    pub penalty: f64,
    /// `∂penalty/∂g(z)` (row-major), when requested.
    pub grad: Vec<f64>,
    pub advisory: bool,
}

/// Evaluate `g` on the χ-grid and test the far-pair condition.
pub fn numerical_regularity_check<G: Fn(&[f64]) -> Vec<f64>>(
    g: G,
    d: usize,
    p: usize,
    radius: f64,
    chi: f64,
    cap: u128,
    coarse: bool,
) -> Result<RegularityOutcome> {
    let grid = RegularityGrid::new(d, radius, chi, cap, coarse)?;
    let images: Vec<f64> = grid.points.chunks_exact(d).flat_map(&g).collect();
    Ok(grid.evaluate(&images, p, false))
}

/// [`numerical_regularity_check`] for a generator at its own `(K, χ)`.
pub fn check_generator(gm: &GeneratorModel, cap: u128, coarse: bool) -> Result<RegularityOutcome> {
    let grid = RegularityGrid::new(gm.d(), gm.params.radius, gm.params.chi, cap, coarse)?;
    let rows = DesignRows::new(&gm.spec, &gm.layout(), &grid.points);
    let mut images = Vec::new();
    rows.apply(&gm.to_params(), &mut images);
    Ok(grid.evaluate(&images, gm.p(), false))
}

/// The χ-penalty of a generator.
pub fn regularity_penalty(gm: &GeneratorModel, cap: u128, coarse: bool) -> Result<f64> {
    Ok(check_generator(gm, cap, coarse)?.penalty)
}

/// Smallest singular value of `∇g` over the grid `{z/2^k}`.
pub fn min_singular_estimate<J: Fn(&[f64]) -> Vec<f64>>(jacobian: J, d: usize, p: usize, level: u32) -> f64 {
    let per = 1usize << level;
    let mut best = f64::INFINITY;
    let mut u = vec![0.0; d];
    for code in 0..per.pow(d as u32) {
        let mut c = code;
        for x in u.iter_mut() {
            *x = (c % per) as f64 / per as f64;
            c /= per;
        }
        let jm = DMatrix::from_row_slice(p, d, &jacobian(&u));
        let gram = jm.transpose() * jm;
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let s = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt();
        best = best.min(s);
    }
    best
}

/// Uniformly random coefficients inside the box on every index up to the cutoff.
pub fn random_generator(template: &GeneratorModel, seed: u64, fraction: f64) -> GeneratorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = template.layout();
    let params: Vec<Vec<f64>> = (0..template.p())
        .map(|_| {
            (0..layout.len())
                .map(|pos| rng.random_range(-1.0..1.0) * template.schedule.bound(layout.index(pos).j) * fraction)
                .collect()
        })
        .collect();
    template.with_params(&params)
}
