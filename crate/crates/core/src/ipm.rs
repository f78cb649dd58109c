//! Closed-form IPMs over coefficient-box and Besov-ball discriminator classes.
//!
//! Both classes are described by linear constraints on wavelet coefficients, so the
//! supremum of `∫D dμ − ∫D dν` is a weighted ℓ¹ (box) or mixed ℓ¹/ℓ∞ (ball) norm of
//! the moment field `m(j,l,w) = ∫ψ_{jlw} d(μ − ν)`. For the ball, the level-`j`
//! budget `2^{−j(γ+D/2)}(1+j)^{−b}` bounds `Σ_l sup_w |α|`; the sup of `Σ α m` under
//! that is reached by putting the whole budget on the type with the largest
//! `Σ_w |m|` and matching signs there.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Domain, Scratch, Translation, WaveletIndex};
use crate::besov::{level_weight, BoundSchedule, CoefficientField};
use crate::error::{Error, Result};

/// Points may sit this far outside the ball before moments are refused.
pub const DOMAIN_MARGIN: f64 = 0.5;

/// Per-level translation boxes at most this large are accumulated densely.
const DENSE_LIMIT: u128 = 1 << 20;

/// Weighted point cloud in `ℝ^D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} weights in dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParams("empty measure".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParams("negative or NaN weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        Ok(EmpiricalMeasure { dim, coords, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        Self::new(dim, coords, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.coords.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// CSV with a header line `x1,..,xD,weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        out.push_str(&head.join(","));
        out.push_str(",weight\n");
        for (p, w) in self.iter() {
            for c in p {
                out.push_str(&format!("{c:.16e},"));
            }
            out.push_str(&format!("{w:.16e}\n"));
        }
        out
    }

    /// Inverse of [`Self::to_csv`]. The weight column is optional (uniform weights when
    /// absent); lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let (_, head) = lines.next().ok_or(Error::Parse { line: 1, message: "empty input".into() })?;
        let cols: Vec<&str> = head.split(',').map(str::trim).collect();
        let weighted = cols.last() == Some(&"weight");
        let dim = cols.len() - usize::from(weighted);
        if dim == 0 {
            return Err(Error::Parse { line: 1, message: "no coordinate columns".into() });
        }
        let (mut coords, mut weights) = (Vec::new(), Vec::new());
        for (no, line) in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: no + 1, message: e.to_string() })?;
            if vals.len() != cols.len() {
                return Err(Error::Parse { line: no + 1, message: format!("expected {} columns", cols.len()) });
            }
            coords.extend_from_slice(&vals[..dim]);
            if weighted {
                weights.push(vals[dim]);
            }
        }
        if coords.is_empty() {
            return Err(Error::Parse { line: 2, message: "no rows".into() });
        }
        if weighted {
            EmpiricalMeasure::new(dim, coords, weights)
        } else {
            EmpiricalMeasure::uniform(dim, coords)
        }
    }
}

/// Linear layout of `(l, w)` at one level: type slot major, then axis `D−1` down to axis 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelLayout {
    pub j: u32,
    dim: usize,
    lo: i64,
    span: u64,
}

impl LevelLayout {
    pub fn new(spec: &BasisSpec, j: u32) -> Self {
        let (lo, hi) = spec.translation_range(j);
        LevelLayout { j, dim: spec.dim(), lo, span: (hi - lo + 1) as u64 }
    }

    /// Number of keys (types × translations).
    pub fn size(&self) -> u128 {
        (self.span as u128).pow(self.dim as u32) << self.dim
    }

    #[inline]
    pub fn key(&self, l: u32, w: &[i64]) -> Option<u64> {
        let mut k = 0u64;
        for &wi in w.iter().rev() {
            let o = wi - self.lo;
            if o < 0 || o as u64 >= self.span {
                return None;
            }
            k = k * self.span + o as u64;
        }
        Some((l as u64 - 1) * self.span.pow(self.dim as u32) + k)
    }

    pub fn decode(&self, key: u64) -> (u32, Translation) {
        let per_type = self.span.pow(self.dim as u32);
        let l = (key / per_type) as u32 + 1;
        let mut rest = key % per_type;
        let w = (0..self.dim)
            .map(|_| {
                let o = rest % self.span;
                rest /= self.span;
                self.lo + o as i64
            })
            .collect();
        (l, w)
    }

    #[inline]
    pub fn type_of(&self, key: u64) -> u32 {
        (key / self.span.pow(self.dim as u32)) as u32 + 1
    }
}

/// Accumulator for one level: dense when the translation box is small.
#[derive(Debug, Clone)]
pub enum LevelStore {
    Dense(Vec<f64>),
    Sparse(HashMap<u64, f64>),
}

impl LevelStore {
    pub fn for_layout(layout: &LevelLayout) -> Self {
        if layout.size() <= DENSE_LIMIT {
            LevelStore::Dense(vec![0.0; layout.size() as usize])
        } else {
            LevelStore::Sparse(HashMap::new())
        }
    }

    #[inline]
    pub fn add(&mut self, key: u64, v: f64) {
        match self {
            LevelStore::Dense(d) => d[key as usize] += v,
            LevelStore::Sparse(m) => *m.entry(key).or_insert(0.0) += v,
        }
    }

    #[inline]
    pub fn get(&self, key: u64) -> f64 {
        match self {
            LevelStore::Dense(d) => d[key as usize],
            LevelStore::Sparse(m) => m.get(&key).copied().unwrap_or(0.0),
        }
    }

    pub fn clear(&mut self) {
        match self {
            LevelStore::Dense(d) => d.iter_mut().for_each(|v| *v = 0.0),
            LevelStore::Sparse(m) => m.clear(),
        }
    }

    /// Nonzero entries sorted by key.
    pub fn sorted_entries(&self) -> Vec<(u64, f64)> {
        match self {
            LevelStore::Dense(d) => {
                d.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k as u64, *v)).collect()
            }
            LevelStore::Sparse(m) => {
                let mut e: Vec<(u64, f64)> = m.iter().filter(|(_, v)| **v != 0.0).map(|(k, v)| (*k, *v)).collect();
                e.sort_unstable_by_key(|(k, _)| *k);
                e
            }
        }
    }
}

/// `∫ψ_{jlw} dμ` for one measure, levels `0..=max_level`.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    spec: BasisSpec,
    layouts: Vec<LevelLayout>,
    stores: Vec<LevelStore>,
    scratch: Scratch,
}

impl MomentAccumulator {
    pub fn new(spec: &BasisSpec, max_level: u32) -> Self {
        let layouts: Vec<LevelLayout> = (0..=max_level).map(|j| LevelLayout::new(spec, j)).collect();
        let stores = layouts.iter().map(LevelStore::for_layout).collect();
        MomentAccumulator { spec: spec.clone(), layouts, stores, scratch: Scratch::default() }
    }

    pub fn layouts(&self) -> &[LevelLayout] {
        &self.layouts
    }

    pub fn stores(&self) -> &[LevelStore] {
        &self.stores
    }

    pub fn clear(&mut self) {
        self.stores.iter_mut().for_each(LevelStore::clear);
    }

    /// Add `weight·ψ(x)` for every class index active at `x`; indices outside the
    /// class translation box are skipped.
    pub fn add_point(&mut self, x: &[f64], weight: f64) {
        for (layout, store) in self.layouts.iter().zip(self.stores.iter_mut()) {
            self.spec.for_each_active(x, layout.j, false, &mut self.scratch, |l, w, v, _| {
                if let Some(k) = layout.key(l, w) {
                    store.add(k, weight * v);
                }
            });
        }
    }

    pub fn add_measure(&mut self, mu: &EmpiricalMeasure) {
        for (p, w) in mu.iter() {
            self.add_point(p, w);
        }
    }
}

/// `m(j,l,w) = ∫ψ_{jlw} dμ − ∫ψ_{jlw} dν`, stored per level as sorted `(key, value)` pairs.
#[derive(Debug, Clone)]
pub struct MomentField {
    spec: BasisSpec,
    levels: Vec<(LevelLayout, Vec<(u64, f64)>)>,
}

fn check_domain(spec: &BasisSpec, mu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!("measure in dim {} vs basis dim {}", mu.dim(), spec.dim())));
    }
    if let Domain::Ambient { radius } = spec.domain() {
        let limit = radius + DOMAIN_MARGIN;
        for (i, (p, _)) in mu.iter().enumerate() {
            let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > limit {
                return Err(Error::PointOutOfDomain { index: i, norm, limit });
            }
        }
    }
    Ok(())
}

/// Moment field of `μ − ν` over levels `0..=max_level`.
pub fn empirical_moments(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    spec: &BasisSpec,
    max_level: u32,
) -> Result<MomentField> {
    check_domain(spec, mu)?;
    check_domain(spec, nu)?;
    let mut a = MomentAccumulator::new(spec, max_level);
    a.add_measure(mu);
    let mut b = MomentAccumulator::new(spec, max_level);
    b.add_measure(nu);
    Ok(MomentField::difference(&a, &b))
}

/// Moments of a single measure (`ν = 0`).
pub fn measure_moments(mu: &EmpiricalMeasure, spec: &BasisSpec, max_level: u32) -> Result<MomentField> {
    check_domain(spec, mu)?;
    let mut a = MomentAccumulator::new(spec, max_level);
    a.add_measure(mu);
    Ok(MomentField::from_accumulator(&a))
}

fn merge_difference(a: &[(u64, f64)], b: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut i, mut k) = (0, 0);
    while i < a.len() || k < b.len() {
        let take_a = k == b.len() || (i < a.len() && a[i].0 < b[k].0);
        let take_b = i == a.len() || (k < b.len() && b[k].0 < a[i].0);
        if take_a {
            out.push(a[i]);
            i += 1;
        } else if take_b {
            out.push((b[k].0, 0.0 - b[k].1));
            k += 1;
        } else {
            out.push((a[i].0, a[i].1 - b[k].1));
            i += 1;
            k += 1;
        }
    }
    out
}

impl MomentField {
    pub fn from_accumulator(a: &MomentAccumulator) -> Self {
        let levels = a.layouts.iter().zip(&a.stores).map(|(l, s)| (*l, s.sorted_entries())).collect();
        MomentField { spec: a.spec.clone(), levels }
    }

    /// Entrywise `a − b`; swapping the arguments negates every entry exactly.
    pub fn difference(a: &MomentAccumulator, b: &MomentAccumulator) -> Self {
        let levels = a
            .layouts
            .iter()
            .zip(a.stores.iter().zip(&b.stores))
            .map(|(l, (sa, sb))| (*l, merge_difference(&sa.sorted_entries(), &sb.sorted_entries())))
            .collect();
        MomentField { spec: a.spec.clone(), levels }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|(_, e)| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, idx: &WaveletIndex) -> f64 {
        let Some((layout, entries)) = self.levels.get(idx.j as usize) else { return 0.0 };
        let Some(key) = layout.key(idx.l, &idx.w) else { return 0.0 };
        entries.binary_search_by_key(&key, |(k, _)| *k).map(|p| entries[p].1).unwrap_or(0.0)
    }

    /// Visit `(j, l, w, m)` in key order.
    pub fn for_each(&self, mut f: impl FnMut(u32, u32, &[i64], f64)) {
        for (layout, entries) in &self.levels {
            for &(k, v) in entries {
                let (l, w) = layout.decode(k);
                f(layout.j, l, &w, v);
            }
        }
    }

    /// `Σ_w |m(j,l,w)|` for every type slot `l − 1` at each level.
    pub fn level_sums(&self) -> LevelSums {
        let dim = self.spec.dim();
        let per_level = self
            .levels
            .iter()
            .map(|(layout, entries)| {
                let mut s = vec![0.0; 1 << dim];
                for &(k, v) in entries {
                    s[layout.type_of(k) as usize - 1] += v.abs();
                }
                s
            })
            .collect();
        LevelSums { dim, per_level }
    }

    pub fn box_ipm(&self, schedule: &BoundSchedule) -> f64 {
        self.level_sums().box_value(schedule)
    }

    pub fn ball_ipm(&self, gamma: f64, b: f64) -> f64 {
        self.level_sums().ball_value(gamma, b)
    }

    fn empty_field(&self, eta: f64) -> CoefficientField {
        let radius = match self.spec.domain() {
            Domain::Periodic => 1.0,
            Domain::Ambient { radius } => radius,
        };
        CoefficientField::new(self.spec.dim(), self.spec.domain(), self.max_level(), eta, radius)
    }

    /// `α = bound(j)·sign(m)`: attains [`MomentField::box_ipm`].
    pub fn box_maximizer(&self, schedule: &BoundSchedule) -> CoefficientField {
        let mut cf = self.empty_field(schedule.eta);
        self.for_each(|j, l, w, m| {
            if m != 0.0 {
                let _ = cf.set(WaveletIndex::new(j, l, w), schedule.bound(j).copysign(m));
            }
        });
        cf
    }

    /// Per level, the whole budget on the type with the largest `Σ_w |m|`, signs matched.
    pub fn ball_maximizer(&self, gamma: f64, b: f64) -> CoefficientField {
        let sums = self.level_sums();
        let best: Vec<u32> = sums
            .per_level
            .iter()
            .map(|s| {
                let mut arg = 0;
                for (i, v) in s.iter().enumerate() {
                    if *v > s[arg] {
                        arg = i;
                    }
                }
                arg as u32 + 1
            })
            .collect();
        let dim = self.spec.dim() as f64;
        let mut cf = self.empty_field(gamma);
        self.for_each(|j, l, w, m| {
            if l == best[j as usize] && m != 0.0 {
                let a = level_weight(j, -(gamma + dim / 2.0), -b);
                let _ = cf.set(WaveletIndex::new(j, l, w), a.copysign(m));
            }
        });
        cf
    }

    /// `Σ α·m`: the discrepancy of the discriminator with coefficients `α`.
    pub fn pair(&self, cf: &CoefficientField) -> f64 {
        let mut total = 0.0;
        for (idx, a) in cf.iter() {
            total += a * self.get(idx);
        }
        total
    }

    /// Export in the coefficient-field text format.
    pub fn to_field(&self) -> CoefficientField {
        let mut cf = self.empty_field(0.0);
        self.for_each(|j, l, w, m| {
            let _ = cf.set(WaveletIndex::new(j, l, w), m);
        });
        cf
    }
}

/// `Σ_w |m(j,l,w)|` per level and type slot; every IPM is a function of these.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSums {
    pub dim: usize,
    pub per_level: Vec<Vec<f64>>,
}

impl LevelSums {
    pub fn box_value(&self, schedule: &BoundSchedule) -> f64 {
        self.per_level
            .iter()
            .enumerate()
            .map(|(j, s)| schedule.bound(j as u32) * s.iter().sum::<f64>())
            .sum()
    }

    pub fn ball_value(&self, gamma: f64, b: f64) -> f64 {
        let half = self.dim as f64 / 2.0;
        self.per_level
            .iter()
            .enumerate()
            .map(|(j, s)| level_weight(j as u32, -(gamma + half), -b) * s.iter().copied().fold(0.0, f64::max))
            .sum()
    }
}

/// Coefficients of a reference measure known in closed form.
pub trait ReferenceMoments {
    /// `∫ψ_{jlw} dν`.
    fn coefficient(&self, j: u32, l: u32, w: &[i64]) -> f64;
    /// `Σ_w |∫ψ_{jlw} dν|` over all translations of the class.
    fn type_total(&self, j: u32, l: u32) -> f64;
}

/// Level sums of `sample − reference`, where the sample's coefficients are given
/// sparsely: `Σ_w |s − r| = Σ_{w∈S} (|s_w − r_w| − |r_w|) + Σ_w |r_w|`.
pub fn sums_against_reference(
    dim: usize,
    max_level: u32,
    visit_sample: impl FnOnce(&mut dyn FnMut(u32, u32, &[i64], f64)),
    reference: &dyn ReferenceMoments,
) -> LevelSums {
    let types = 1usize << dim;
    let mut per_level = vec![vec![0.0; types]; max_level as usize + 1];
    visit_sample(&mut |j, l, w, s| {
        if j <= max_level {
            let r = reference.coefficient(j, l, w);
            per_level[j as usize][l as usize - 1] += (s - r).abs() - r.abs();
        }
    });
    for (j, sums) in per_level.iter_mut().enumerate() {
        let last = if j == 0 { types } else { types - 1 };
        for l in 1..=last {
            sums[l - 1] = (sums[l - 1] + reference.type_total(j as u32, l as u32)).max(0.0);
        }
    }
    LevelSums { dim, per_level }
}

/// Which closed-form IPM to report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IpmMode {
    Box(BoundSchedule),
    Ball { gamma: f64, b: f64 },
}

/// JSON record for a reported IPM value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmRecord {
    pub mode: String,
    pub gamma: f64,
    pub b: f64,
    pub j_d: u32,
    pub value: f64,
}

impl IpmRecord {
    pub fn new(mode: &IpmMode, j_d: u32, value: f64) -> Self {
        match *mode {
            IpmMode::Box(s) => IpmRecord { mode: "box".into(), gamma: s.eta, b: 0.0, j_d, value },
            IpmMode::Ball { gamma, b } => IpmRecord { mode: "ball".into(), gamma, b, j_d, value },
        }
    }
}

impl IpmMode {
    pub fn evaluate(&self, m: &MomentField) -> f64 {
        match *self {
            IpmMode::Box(s) => m.box_ipm(&s),
            IpmMode::Ball { gamma, b } => m.ball_ipm(gamma, b),
        }
    }
}

/// Box IPM between two measures.
pub fn box_ipm(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    spec: &BasisSpec,
    schedule: &BoundSchedule,
    max_level: u32,
) -> Result<f64> {
    Ok(empirical_moments(mu, nu, spec, max_level)?.box_ipm(schedule))
}

/// Ball IPM between two measures.
pub fn ball_ipm(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, spec: &BasisSpec, gamma: f64, b: f64, max_level: u32) -> Result<f64> {
    Ok(empirical_moments(mu, nu, spec, max_level)?.ball_ipm(gamma, b))
}

/// Discrepancy `Σ μ_i D(x_i) − Σ ν_k D(y_k)` by direct synthesis.
pub fn discrepancy(spec: &BasisSpec, cf: &CoefficientField, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let side = |m: &EmpiricalMeasure| -> f64 {
        m.iter().map(|(p, w)| w * crate::besov::synthesize(spec, cf, p)).sum()
    };
    side(mu) - side(nu)
}
