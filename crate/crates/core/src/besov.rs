//! Sparse wavelet coefficient fields, `B^{s,b}_{∞,∞}` norms and the Γ rescaling.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::basis::{BasisSpec, Domain, Scratch, Translation, WaveletIndex};
use crate::error::{Error, Result};

/// Coefficients whose magnitude falls below this after analysis are treated as
/// quadrature noise and dropped.
pub const ANALYSIS_DROP_TOLERANCE: f64 = 1e-10;

/// Per-level coefficient bound `C_η·K·2^{−j(η + D/2)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSchedule {
    pub eta: f64,
    pub radius: f64,
    pub c_eta: f64,
    pub dim: usize,
}

impl BoundSchedule {
    pub fn new(eta: f64, radius: f64, c_eta: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && c_eta > 0.0 && eta + dim as f64 / 2.0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "bound schedule needs K > 0, C_eta > 0, eta + D/2 > 0 (got K={radius}, C={c_eta}, eta={eta})"
            )));
        }
        Ok(BoundSchedule { eta, radius, c_eta, dim })
    }

    pub fn bound(&self, j: u32) -> f64 {
        self.c_eta * self.radius * (-(j as f64) * (self.eta + self.dim as f64 / 2.0)).exp2()
    }

    /// Same schedule with every bound multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        BoundSchedule { c_eta: self.c_eta * factor, ..*self }
    }
}

/// Sparse map `(j, l, w) → α`, absent entries being zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    dim: usize,
    domain: Domain,
    max_level: u32,
    eta: f64,
    radius: f64,
    entries: BTreeMap<WaveletIndex, f64>,
}

impl CoefficientField {
    /// Empty field. `eta` and `radius` are class metadata carried through serialization.
    pub fn new(dim: usize, domain: Domain, max_level: u32, eta: f64, radius: f64) -> Self {
        CoefficientField { dim, domain, max_level, eta, radius, entries: BTreeMap::new() }
    }

    /// Empty field sharing the metadata of `self`.
    pub fn empty_like(&self) -> Self {
        CoefficientField { entries: BTreeMap::new(), ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: &WaveletIndex) -> f64 {
        self.entries.get(idx).copied().unwrap_or(0.0)
    }

    /// Look up without building an owned index.
    pub fn get_parts(&self, j: u32, l: u32, w: &[i64]) -> f64 {
        let key = WaveletIndex { j, l, w: Translation::from_slice(w) };
        self.get(&key)
    }

    /// Insert or overwrite; rejects levels beyond the field's cutoff.
    pub fn set(&mut self, idx: WaveletIndex, value: f64) -> Result<()> {
        if idx.j > self.max_level {
            return Err(Error::InvalidParams(format!("level {} beyond cutoff {}", idx.j, self.max_level)));
        }
        if idx.w.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("index of dim {} in field of dim {}", idx.w.len(), self.dim)));
        }
        self.entries.insert(idx, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WaveletIndex, &f64)> {
        self.entries.iter()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = (&WaveletIndex, &mut f64)> {
        self.entries.iter_mut()
    }

    /// `a·self + other`, over the union of stored indices.
    pub fn axpy(&self, a: f64, other: &CoefficientField) -> Result<CoefficientField> {
        if self.dim != other.dim || self.domain != other.domain {
            return Err(Error::DimensionMismatch("fields over different bases".into()));
        }
        let mut out = CoefficientField { max_level: self.max_level.max(other.max_level), ..self.clone() };
        out.entries.values_mut().for_each(|v| *v *= a);
        for (k, v) in &other.entries {
            *out.entries.entry(k.clone()).or_insert(0.0) += v;
        }
        Ok(out)
    }

    /// Entrywise clip to `±bound(j)`.
    pub fn project_box(&self, schedule: &BoundSchedule) -> CoefficientField {
        let mut out = self.clone();
        for (idx, v) in out.entries.iter_mut() {
            let b = schedule.bound(idx.j);
            *v = v.clamp(-b, b);
        }
        out
    }

    /// Whether every entry satisfies `|α| ≤ bound(j)`.
    pub fn in_box(&self, schedule: &BoundSchedule) -> bool {
        self.entries.iter().all(|(idx, v)| v.abs() <= schedule.bound(idx.j))
    }

    /// Drop entries with `|α| < tol`.
    pub fn pruned(&self, tol: f64) -> CoefficientField {
        let mut out = self.clone();
        out.entries.retain(|_, v| v.abs() >= tol);
        out
    }

    /// Text export: a version/metadata line, then `j l w_1 .. w_D value` per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let domain = match self.domain {
            Domain::Periodic => "periodic".to_string(),
            Domain::Ambient { radius } => format!("ambient:{radius:?}"),
        };
        let _ = writeln!(
            out,
            "# wavegan coefficient-field v1 D={} domain={} J={} eta={:?} K={:?} entries={}",
            self.dim,
            domain,
            self.max_level,
            self.eta,
            self.radius,
            self.entries.len()
        );
        for (idx, v) in &self.entries {
            let _ = write!(out, "{} {}", idx.j, idx.l);
            for w in &idx.w {
                let _ = write!(out, " {w}");
            }
            let _ = writeln!(out, " {v:.16e}");
        }
        out
    }

    /// Parse one field; returns the field and the number of lines consumed.
    pub fn from_text_prefix(lines: &[&str], first_line_no: usize) -> Result<(Self, usize)> {
        let err = |off: usize, m: &str| Error::Parse { line: first_line_no + off + 1, message: m.into() };
        let head = lines.first().ok_or_else(|| err(0, "missing header"))?;
        if !head.starts_with("# wavegan coefficient-field v1") {
            return Err(err(0, "not a coefficient-field header"));
        }
        let mut meta: HashMap<&str, &str> = HashMap::new();
        for tok in head.split_whitespace().skip(4) {
            let (k, v) = tok.split_once('=').ok_or_else(|| err(0, "bad header token"))?;
            meta.insert(k, v);
        }
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| err(0, &format!("header lacks {k}")));
        let dim: usize = get("D")?.parse().map_err(|_| err(0, "bad D"))?;
        let max_level: u32 = get("J")?.parse().map_err(|_| err(0, "bad J"))?;
        let eta: f64 = get("eta")?.parse().map_err(|_| err(0, "bad eta"))?;
        let radius: f64 = get("K")?.parse().map_err(|_| err(0, "bad K"))?;
        let count: usize = get("entries")?.parse().map_err(|_| err(0, "bad entries"))?;
        let domain = match get("domain")? {
            "periodic" => Domain::Periodic,
            other => {
                let r = other
                    .strip_prefix("ambient:")
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| err(0, "bad domain"))?;
                Domain::Ambient { radius: r }
            }
        };
        let mut field = CoefficientField::new(dim, domain, max_level, eta, radius);
        if lines.len() < count + 1 {
            return Err(err(lines.len(), "truncated field"));
        }
        for (off, line) in lines[1..=count].iter().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != dim + 3 {
                return Err(err(off + 1, "wrong number of columns"));
            }
            let j: u32 = toks[0].parse().map_err(|_| err(off + 1, "bad level"))?;
            let l: u32 = toks[1].parse().map_err(|_| err(off + 1, "bad type"))?;
            let w = toks[2..2 + dim]
                .iter()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<Translation, _>>()
                .map_err(|_| err(off + 1, "bad translation"))?;
            let v: f64 = toks[2 + dim].parse().map_err(|_| err(off + 1, "bad value"))?;
            field.set(WaveletIndex { j, l, w }, v).map_err(|e| err(off + 1, &e.to_string()))?;
        }
        Ok((field, count + 1))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let (field, used) = Self::from_text_prefix(&lines, 0)?;
        if lines[used..].iter().any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse { line: used + 1, message: "trailing content".into() });
        }
        Ok(field)
    }
}

/// `sup_j 2^{j(s + D/2)} (1 + j)^b Σ_l sup_w |α(j, l, w)|` over stored entries.
pub fn besov_norm(cf: &CoefficientField, s: f64, b: f64) -> f64 {
    let mut per_level: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for (idx, v) in cf.iter() {
        let m = per_level.entry(idx.j).or_default().entry(idx.l).or_insert(0.0);
        *m = m.max(v.abs());
    }
    per_level
        .iter()
        .map(|(&j, types)| {
            let sum: f64 = types.values().sum();
            level_weight(j, s + cf.dim as f64 / 2.0, b) * sum
        })
        .fold(0.0, f64::max)
}

/// `2^{j·a} (1 + j)^c`.
#[inline]
pub fn level_weight(j: u32, a: f64, c: f64) -> f64 {
    (j as f64 * a).exp2() * (1.0 + j as f64).powf(c)
}

/// Entrywise `α ↦ 2^{jγ}(1 + j)^c α`.
pub fn gamma_op(cf: &CoefficientField, gamma: f64, c: f64) -> CoefficientField {
    let mut out = cf.clone();
    for (idx, v) in out.entries.iter_mut() {
        *v *= level_weight(idx.j, gamma, c);
    }
    out
}

/// A function sampled at the midpoints of a dyadic grid.
///
/// Periodic grids cover `[0,1)^D`; ambient grids cover `[−R, R)^D` with
/// `R·2^r` cells per half-axis.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub dim: usize,
    pub resolution: u32,
    pub half_width: f64,
    pub periodic: bool,
    pub values: Vec<f64>,
}

impl SampledFunction {
    fn cells_per_axis(&self) -> usize {
        if self.periodic {
            1usize << self.resolution
        } else {
            (2.0 * self.half_width * (1u64 << self.resolution) as f64).round() as usize
        }
    }

    fn origin(&self) -> f64 {
        if self.periodic {
            0.0
        } else {
            -self.half_width
        }
    }

    /// Midpoint of cell `code` (axis 0 varies fastest).
    pub fn point(&self, mut code: usize, out: &mut [f64]) {
        let per = self.cells_per_axis();
        let h = 0.5_f64.powi(self.resolution as i32);
        for x in out.iter_mut() {
            *x = self.origin() + ((code % per) as f64 + 0.5) * h;
            code /= per;
        }
    }

    /// Sample `f` on the periodic grid of level `resolution`.
    pub fn periodic<F: Fn(&[f64]) -> f64>(dim: usize, resolution: u32, f: F) -> Self {
        Self::build(dim, resolution, 0.5, true, f)
    }

    /// Sample `f` on the ambient grid over `[−half_width, half_width)^D`.
    pub fn ambient<F: Fn(&[f64]) -> f64>(dim: usize, resolution: u32, half_width: f64, f: F) -> Self {
        Self::build(dim, resolution, half_width, false, f)
    }

    fn build<F: Fn(&[f64]) -> f64>(dim: usize, resolution: u32, half_width: f64, periodic: bool, f: F) -> Self {
        let mut s = SampledFunction { dim, resolution, half_width, periodic, values: Vec::new() };
        let total = s.cells_per_axis().pow(dim as u32);
        let mut p = vec![0.0; dim];
        s.values = (0..total)
            .map(|code| {
                s.point(code, &mut p);
                f(&p)
            })
            .collect();
        s
    }
}

/// Wavelet coefficients of a sampled function up to level `max_level`, by midpoint quadrature.
pub fn analyze(f: &SampledFunction, spec: &BasisSpec, max_level: u32) -> Result<CoefficientField> {
    if f.dim != spec.dim() || f.periodic != spec.is_periodic() {
        return Err(Error::DimensionMismatch("sampled function does not match the basis".into()));
    }
    let required = max_level + 6;
    if f.resolution < required {
        return Err(Error::GridTooCoarse { resolution: f.resolution, required });
    }
    let radius = match spec.domain() {
        Domain::Periodic => 1.0,
        Domain::Ambient { radius } => radius,
    };
    let cell = 0.5_f64.powi((f.resolution * f.dim as u32) as i32);
    let mut acc: HashMap<WaveletIndex, f64> = HashMap::new();
    let mut scratch = Scratch::default();
    let mut p = vec![0.0; f.dim];
    for (code, &fv) in f.values.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        f.point(code, &mut p);
        for j in 0..=max_level {
            spec.for_each_active(&p, j, false, &mut scratch, |l, w, v, _| {
                *acc.entry(WaveletIndex { j, l, w: Translation::from_slice(w) }).or_insert(0.0) += fv * v * cell;
            });
        }
    }
    let mut field = CoefficientField::new(spec.dim(), spec.domain(), max_level, 0.0, radius);
    field.entries = acc.into_iter().filter(|(_, v)| v.abs() >= ANALYSIS_DROP_TOLERANCE).collect();
    Ok(field)
}

/// `Σ α·ψ` at `point` over the indices active there.
pub fn synthesize(spec: &BasisSpec, cf: &CoefficientField, point: &[f64]) -> f64 {
    let mut scratch = Scratch::default();
    let mut total = 0.0;
    for j in 0..=cf.max_level() {
        spec.for_each_active(point, j, false, &mut scratch, |l, w, v, _| {
            total += cf.get_parts(j, l, w) * v;
        });
    }
    total
}

/// Gradient of [`synthesize`] with respect to the point.
pub fn synthesize_gradient(spec: &BasisSpec, cf: &CoefficientField, point: &[f64]) -> Vec<f64> {
    let mut scratch = Scratch::default();
    let mut grad = vec![0.0; spec.dim()];
    for j in 0..=cf.max_level() {
        spec.for_each_active(point, j, true, &mut scratch, |l, w, _, g| {
            let a = cf.get_parts(j, l, w);
            if a != 0.0 {
                grad.iter_mut().zip(g).for_each(|(o, gi)| *o += a * gi);
            }
        });
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::Wavelet;
    use std::sync::Arc;

    fn periodic_spec(dim: usize) -> BasisSpec {
        BasisSpec::periodic(dim, Arc::new(Wavelet::new(3, 12, 1).unwrap())).unwrap()
    }

    fn sample_field() -> CoefficientField {
        let mut cf = CoefficientField::new(2, Domain::Periodic, 3, 2.0, 1.0);
        cf.set(WaveletIndex::new(0, 4, &[0, 0]), 0.7).unwrap();
        cf.set(WaveletIndex::new(1, 1, &[1, 0]), -0.25).unwrap();
        cf.set(WaveletIndex::new(2, 3, &[3, 2]), 0.125).unwrap();
        cf.set(WaveletIndex::new(3, 2, &[7, 5]), -1.0 / 3.0).unwrap();
        cf
    }

    #[test]
    fn norm_of_zero_and_single_entry() {
        let zero = CoefficientField::new(1, Domain::Periodic, 4, 1.0, 1.0);
        assert_eq!(besov_norm(&zero, 1.0, 0.0), 0.0);
        let mut one = zero.clone();
        one.set(WaveletIndex::new(3, 1, &[2]), -0.5).unwrap();
        let expected = (3.0_f64 * 1.5).exp2() * 4f64.powf(2.0) * 0.5;
        assert!((besov_norm(&one, 1.0, 2.0) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn unit_per_level_gives_unit_norm() {
        let (s, b) = (0.75, 1.0);
        let mut cf = CoefficientField::new(1, Domain::Periodic, 6, 1.0, 1.0);
        for j in 0..=6 {
            cf.set(WaveletIndex::new(j, 1, &[0]), 1.0 / level_weight(j, s + 0.5, b)).unwrap();
        }
        assert!((besov_norm(&cf, s, b) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_identities() {
        let cf = sample_field();
        assert_eq!(gamma_op(&cf, 0.0, 0.0), cf);
        let twice = gamma_op(&gamma_op(&cf, 0.5, 1.0), 0.25, -2.0);
        let once = gamma_op(&cf, 0.75, -1.0);
        for ((_, a), (_, b)) in twice.iter().zip(once.iter()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
        }
        let lhs = besov_norm(&gamma_op(&cf, 0.6, 1.5), 1.0, 0.5);
        let rhs = besov_norm(&cf, 1.6, 2.0);
        assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut cf = sample_field();
        cf.set(WaveletIndex::new(2, 1, &[0, 1]), std::f64::consts::PI * 1e-7).unwrap();
        let back = CoefficientField::from_text(&cf.to_text()).unwrap();
        assert_eq!(back, cf);
        let amb = CoefficientField::new(3, Domain::Ambient { radius: 1.5 }, 2, 1.0, 1.5);
        assert_eq!(CoefficientField::from_text(&amb.to_text()).unwrap(), amb);
    }

    #[test]
    fn analyze_constant() {
        let spec = periodic_spec(2);
        let f = SampledFunction::periodic(2, 8, |_| 1.0);
        let cf = analyze(&f, &spec, 2).unwrap();
        assert_eq!(cf.len(), 1, "{:?}", cf.iter().take(5).collect::<Vec<_>>());
        assert!((cf.get(&WaveletIndex::new(0, 4, &[0, 0])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analyze_single_basis_function() {
        let spec = periodic_spec(1);
        let target = WaveletIndex::new(2, 1, &[1]);
        let f = SampledFunction::periodic(1, 14, |u| spec.eval_basis(&target, u));
        let cf = analyze(&f, &spec, 4).unwrap();
        for (idx, v) in cf.iter() {
            if *idx == target {
                assert!((v - 1.0).abs() < 1e-4);
            } else {
                assert!(v.abs() < 1e-4, "{idx:?} {v}");
            }
        }
    }

    #[test]
    fn analyze_rejects_coarse_grid() {
        let spec = periodic_spec(1);
        let f = SampledFunction::periodic(1, 8, |_| 1.0);
        assert!(matches!(analyze(&f, &spec, 3), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn parseval_and_round_trip() {
        let spec = periodic_spec(1);
        // Band-limited: a combination of basis functions at levels ≤ 2.
        let mut truth = CoefficientField::new(1, Domain::Periodic, 2, 1.0, 1.0);
        truth.set(WaveletIndex::new(0, 2, &[0]), 0.3).unwrap();
        truth.set(WaveletIndex::new(0, 1, &[0]), -0.8).unwrap();
        truth.set(WaveletIndex::new(1, 1, &[1]), 0.5).unwrap();
        truth.set(WaveletIndex::new(2, 1, &[3]), 0.25).unwrap();
        let f = SampledFunction::periodic(1, 14, |u| synthesize(&spec, &truth, u));
        let cf = analyze(&f, &spec, 4).unwrap();
        let energy: f64 = cf.iter().map(|(_, v)| v * v).sum();
        let integral: f64 = f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64;
        assert!((energy - integral).abs() < 1e-3);
        for (idx, v) in cf.iter() {
            assert!((v - truth.get(idx)).abs() < 1e-4, "{idx:?}");
        }
        for u in [0.1, 0.42, 0.9] {
            assert!((synthesize(&spec, &cf, &[u]) - synthesize(&spec, &truth, &[u])).abs() < 1e-3);
        }
    }

    #[test]
    fn synthesize_linear_and_empty() {
        let spec = periodic_spec(2);
        let a = sample_field();
        let mut b = a.empty_like();
        b.set(WaveletIndex::new(1, 2, &[0, 1]), 0.4).unwrap();
        b.set(WaveletIndex::new(1, 1, &[1, 0]), 0.1).unwrap();
        let combo = a.axpy(-1.7, &b).unwrap();
        for p in [[0.1, 0.2], [0.77, 0.35]] {
            let lhs = synthesize(&spec, &combo, &p);
            let rhs = -1.7 * synthesize(&spec, &a, &p) + synthesize(&spec, &b, &p);
            assert!((lhs - rhs).abs() < 1e-12);
            assert_eq!(synthesize(&spec, &a.empty_like(), &p), 0.0);
        }
    }

    #[test]
    fn synthesize_gradient_matches_differences() {
        let spec = periodic_spec(2);
        let cf = sample_field();
        let p = [0.31, 0.58];
        let g = synthesize_gradient(&spec, &cf, &p);
        let h = 1e-7;
        for i in 0..2 {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (synthesize(&spec, &cf, &a) - synthesize(&spec, &cf, &b)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-4 * fd.abs().max(1.0), "{} {}", g[i], fd);
        }
    }

    #[test]
    fn projection() {
        let sched = BoundSchedule::new(2.0, 1.0, 1.0, 2).unwrap();
        let mut cf = sample_field();
        cf.set(WaveletIndex::new(1, 1, &[0, 0]), 10.0 * sched.bound(1)).unwrap();
        let p = cf.project_box(&sched);
        assert_eq!(p.get(&WaveletIndex::new(1, 1, &[0, 0])), sched.bound(1));
        assert_eq!(p.project_box(&sched), p);
        assert!(p.in_box(&sched));
    }
}
