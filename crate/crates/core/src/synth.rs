//! Analytic targets with known constants, and sampling from them.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::basis::{BasisSpec, Domain, WaveletIndex};
use crate::besov::{synthesize, synthesize_gradient, BoundSchedule, CoefficientField};
use crate::error::{Error, Result};
use crate::ipm::{EmpiricalMeasure, ReferenceMoments};
use crate::models::min_singular_estimate;
use crate::wavelet::{AxisKind, Wavelet};

/// Which target to build.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// `u ↦ r(cos 2πu, sin 2πu)`.
    Circle { r: f64 },
    /// Torus of revolution in `ℝ^3` with tube radius `r` around a circle of radius `big_r`.
    Torus { big_r: f64, r: f64 },
    /// Circle or torus plus a random periodic field of sup-norm `amplitude`.
    Perturbed { base: Box<TargetKind>, amplitude: f64, level: u32, beta: f64, seed: u64 },
    /// Product density `∏ c(1 − (x_i/a)²)^3` on `[−a, a]^p`.
    ProductDensity { half_width: f64, p: usize },
}

/// An embedding `𝕋^d → ℝ^p` (or a density on `ℝ^p`) with declared radius `K`.
#[derive(Debug, Clone)]
pub struct Target {
    kind: TargetKind,
    radius: f64,
    d: usize,
    p: usize,
    perturbation: Option<(BasisSpec, Vec<CoefficientField>)>,
}

fn base_dims(kind: &TargetKind) -> (usize, usize) {
    match kind {
        TargetKind::Circle { .. } => (1, 2),
        TargetKind::Torus { .. } => (2, 3),
        TargetKind::Perturbed { base, .. } => base_dims(base),
        TargetKind::ProductDensity { p, .. } => (*p, *p),
    }
}

fn base_eval(kind: &TargetKind, u: &[f64]) -> Vec<f64> {
    match *kind {
        TargetKind::Circle { r } => {
            let t = 2.0 * PI * u[0];
            vec![r * t.cos(), r * t.sin()]
        }
        TargetKind::Torus { big_r, r } => {
            let (a, b) = (2.0 * PI * u[0], 2.0 * PI * u[1]);
            let rho = big_r + r * b.cos();
            vec![rho * a.cos(), rho * a.sin(), r * b.sin()]
        }
        _ => unreachable!("base must be an embedding"),
    }
}

fn base_jacobian(kind: &TargetKind, u: &[f64]) -> Vec<f64> {
    match *kind {
        TargetKind::Circle { r } => {
            let t = 2.0 * PI * u[0];
            vec![-2.0 * PI * r * t.sin(), 2.0 * PI * r * t.cos()]
        }
        TargetKind::Torus { big_r, r } => {
            let (a, b) = (2.0 * PI * u[0], 2.0 * PI * u[1]);
            let rho = big_r + r * b.cos();
            let tau = 2.0 * PI;
            vec![
                -tau * rho * a.sin(),
                -tau * r * b.sin() * a.cos(),
                tau * rho * a.cos(),
                -tau * r * b.sin() * a.sin(),
                0.0,
                tau * r * b.cos(),
            ]
        }
        _ => unreachable!("base must be an embedding"),
    }
}

/// Tube radius of the base embedding.
fn base_radius(kind: &TargetKind) -> f64 {
    match *kind {
        TargetKind::Circle { r } => r,
        TargetKind::Torus { r, .. } => r,
        _ => 0.0,
    }
}

/// Build and validate a target. Image bound and the singular-value floor `1/K` are
/// checked on a grid.
pub fn make_target(kind: TargetKind, radius: f64, wavelet: Option<Arc<Wavelet>>) -> Result<Target> {
    let (d, p) = base_dims(&kind);
    let invalid = |m: String| Err(Error::InvalidParams(m));
    match &kind {
        TargetKind::Circle { r } if !(*r > 0.0) => return invalid(format!("circle radius {r} must be positive")),
        TargetKind::Torus { big_r, r } if !(*r > 0.0 && big_r > r) => {
            return invalid(format!("torus needs 0 < r < R (r={r}, R={big_r})"))
        }
        TargetKind::ProductDensity { half_width, p: dims } => {
            if !(*half_width > 0.0) || *dims == 0 {
                return invalid("density needs a > 0 and p ≥ 1".into());
            }
            if half_width * (*dims as f64).sqrt() > radius {
                return invalid(format!("support [−a,a]^p leaves the ball of radius {radius}"));
            }
            return Ok(Target { kind, radius, d, p, perturbation: None });
        }
        _ => {}
    }
    let mut perturbation = None;
    if let TargetKind::Perturbed { base, amplitude, level, beta, seed } = &kind {
        if matches!(**base, TargetKind::Perturbed { .. } | TargetKind::ProductDensity { .. }) {
            return invalid("perturbations apply to the circle or torus only".into());
        }
        let cap = base_radius(base) / 4.0;
        if !(*amplitude >= 0.0 && *amplitude <= cap) {
            return invalid(format!("perturbation amplitude {amplitude} outside [0, {cap}]"));
        }
        if *amplitude > 0.0 {
            let wavelet = wavelet.ok_or_else(|| Error::InvalidParams("perturbation needs a wavelet".into()))?;
            let spec = BasisSpec::periodic(d, wavelet)?;
            perturbation = Some((spec.clone(), random_perturbation(&spec, p, *level, *beta, *amplitude, *seed)));
        }
    }
    let target = Target { kind, radius, d, p, perturbation };
    let level = if d == 1 { 12 } else { 6 };
    let per = 1usize << level;
    let mut u = vec![0.0; d];
    let mut max_norm: f64 = 0.0;
    for code in 0..per.pow(d as u32) {
        let mut c = code;
        for x in u.iter_mut() {
            *x = (c % per) as f64 / per as f64;
            c /= per;
        }
        max_norm = max_norm.max(target.eval(&u).iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    if max_norm > radius {
        return invalid(format!("image reaches norm {max_norm} beyond K = {radius}"));
    }
    let sigma = min_singular_estimate(|u| target.jacobian(u), d, p, level.min(8));
    if sigma < 1.0 / radius {
        return invalid(format!("smallest singular value {sigma} below 1/K"));
    }
    Ok(target)
}

/// Random coefficients in the `B^{β+1}` box on levels `1..=level`, scaled to sup-norm `amplitude`.
fn random_perturbation(spec: &BasisSpec, p: usize, level: u32, beta: f64, amplitude: f64, seed: u64) -> Vec<CoefficientField> {
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = BoundSchedule { eta: beta + 1.0, radius: 1.0, c_eta: 1.0, dim: d };
    let mut fields: Vec<CoefficientField> = (0..p)
        .map(|_| {
            let mut cf = CoefficientField::new(d, Domain::Periodic, level, beta + 1.0, 1.0);
            for idx in spec.periodic_indices(level) {
                if idx.j >= 1 {
                    let v = schedule.bound(idx.j) * rng.random_range(-1.0..1.0);
                    cf.set(idx, v).expect("periodic index");
                }
            }
            cf
        })
        .collect();
    let per = if d == 1 { 1usize << 12 } else { 1 << 6 };
    let mut sup: f64 = 0.0;
    let mut u = vec![0.0; d];
    for code in 0..per.pow(d as u32) {
        let mut c = code;
        for x in u.iter_mut() {
            *x = (c % per) as f64 / per as f64;
            c /= per;
        }
        let n2: f64 = fields.iter().map(|f| synthesize(spec, f, &u).powi(2)).sum();
        sup = sup.max(n2.sqrt());
    }
    let scale = if sup > 0.0 { amplitude / sup } else { 0.0 };
    for f in fields.iter_mut() {
        for (_, v) in f.values_mut() {
            *v *= scale;
        }
    }
    fields
}

impl Target {
    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_density(&self) -> bool {
        matches!(self.kind, TargetKind::ProductDensity { .. })
    }

    /// `g*(u)`. For a density target this is the identity.
    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            TargetKind::Perturbed { base, .. } => {
                let mut x = base_eval(base, u);
                if let Some((spec, fields)) = &self.perturbation {
                    for (xi, f) in x.iter_mut().zip(fields) {
                        *xi += synthesize(spec, f, u);
                    }
                }
                x
            }
            TargetKind::ProductDensity { .. } => u.to_vec(),
            k => base_eval(k, u),
        }
    }

    /// `p × d` Jacobian, row-major.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            TargetKind::Perturbed { base, .. } => {
                let mut jac = base_jacobian(base, u);
                if let Some((spec, fields)) = &self.perturbation {
                    for (i, f) in fields.iter().enumerate() {
                        for (k, g) in synthesize_gradient(spec, f, u).into_iter().enumerate() {
                            jac[i * self.d + k] += g;
                        }
                    }
                }
                jac
            }
            TargetKind::ProductDensity { p, .. } => {
                let mut jac = vec![0.0; p * p];
                (0..*p).for_each(|i| jac[i * p + i] = 1.0);
                jac
            }
            k => base_jacobian(k, u),
        }
    }

    /// Push a latent point set through `g*`.
    pub fn push_forward(&self, latent: &[f64]) -> Result<EmpiricalMeasure> {
        let coords: Vec<f64> = latent.chunks_exact(self.d).flat_map(|u| self.eval(u)).collect();
        EmpiricalMeasure::uniform(self.p, coords)
    }

    /// `n` i.i.d. draws with equal weights: uniforms pushed through `g*`, or draws from the density.
    pub fn sample(&self, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(Error::InvalidParams("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.kind {
            TargetKind::ProductDensity { half_width, p } => {
                let beta = Beta::new(4.0, 4.0).expect("valid shape");
                let coords: Vec<f64> = (0..n * p).map(|_| half_width * (2.0 * beta.sample(&mut rng) - 1.0)).collect();
                EmpiricalMeasure::uniform(p, coords)
            }
            _ => {
                let latent: Vec<f64> = (0..n * self.d).map(|_| rng.random::<f64>()).collect();
                self.push_forward(&latent)
            }
        }
    }

    /// Density value (density targets only; zero otherwise).
    pub fn density(&self, x: &[f64]) -> f64 {
        match self.kind {
            TargetKind::ProductDensity { half_width, .. } => x.iter().map(|&t| bump(t, half_width)).product(),
            _ => 0.0,
        }
    }
}

/// `35/(32a)·(1 − (x/a)²)^3` on `[−a, a]`.
pub fn bump(x: f64, a: f64) -> f64 {
    let s = x / a;
    if s.abs() >= 1.0 {
        0.0
    } else {
        35.0 / (32.0 * a) * (1.0 - s * s).powi(3)
    }
}

/// Exact wavelet coefficients of the product bump density, via per-axis quadrature
/// against the dyadic tables.
#[derive(Debug, Clone)]
pub struct ProductDensityReference {
    dim: usize,
    half_width: f64,
    radius: f64,
    /// `[j][kind] → (first w, coefficients)`.
    axes: Vec<[(i64, Vec<f64>); 2]>,
}

impl ProductDensityReference {
    pub fn new(spec: &BasisSpec, half_width: f64, max_level: u32) -> Result<Self> {
        let Domain::Ambient { radius } = spec.domain() else {
            return Err(Error::InvalidParams("density reference needs an ambient basis".into()));
        };
        let wavelet = spec.wavelet();
        let axes = (0..=max_level)
            .map(|j| {
                let one = |kind: AxisKind| {
                    let table = wavelet.table(kind);
                    let (s0, s1) = wavelet.support(kind);
                    let scale = (1u64 << j) as f64;
                    let first = (-half_width * scale - s1).ceil() as i64;
                    let last = (half_width * scale - s0).floor() as i64;
                    let vals = table.order(0);
                    let h = table.spacing();
                    let coeffs = (first..=last)
                        .map(|w| {
                            let mut acc = 0.0;
                            for (m, &v) in vals.iter().enumerate() {
                                let t = s0 + m as f64 * h;
                                let weight = if m == 0 || m + 1 == vals.len() { 0.5 } else { 1.0 };
                                acc += weight * v * bump((t + w as f64) / scale, half_width);
                            }
                            acc * h / scale.sqrt()
                        })
                        .collect();
                    (first, coeffs)
                };
                [one(AxisKind::Scaling), one(AxisKind::Wavelet)]
            })
            .collect();
        Ok(ProductDensityReference { dim: spec.dim(), half_width, radius, axes })
    }

    pub fn max_level(&self) -> u32 {
        self.axes.len() as u32 - 1
    }

    fn axis(&self, j: u32, bit: u32, w: i64) -> f64 {
        let (first, ref c) = self.axes[j as usize][bit as usize];
        let k = w - first;
        if k < 0 || k as usize >= c.len() {
            0.0
        } else {
            c[k as usize]
        }
    }

    /// All nonzero coefficients up to `max_level` as a field.
    pub fn field(&self, max_level: u32, eta: f64) -> CoefficientField {
        let d = self.dim;
        let mut cf = CoefficientField::new(d, Domain::Ambient { radius: self.radius }, max_level, eta, self.radius);
        for j in 0..=max_level.min(self.max_level()) {
            let last = if j == 0 { 1u32 << d } else { (1u32 << d) - 1 };
            for l in 1..=last {
                let ranges: Vec<(i64, usize)> = (0..d)
                    .map(|i| {
                        let (first, ref c) = self.axes[j as usize][((l >> i) & 1) as usize];
                        (first, c.len())
                    })
                    .collect();
                let total: usize = ranges.iter().map(|r| r.1).product();
                let mut w = vec![0i64; d];
                for code in 0..total {
                    let mut c = code;
                    for (i, r) in ranges.iter().enumerate() {
                        w[i] = r.0 + (c % r.1) as i64;
                        c /= r.1;
                    }
                    let v = self.coefficient(j, l, &w);
                    if v != 0.0 {
                        cf.set(WaveletIndex::new(j, l, &w), v).expect("valid index");
                    }
                }
            }
        }
        cf
    }

    /// Smallest `C` with `|α*(j,l,w)| ≤ C·K·2^{−j(η+D/2)}` for all stored levels.
    pub fn box_constant(&self, eta: f64) -> f64 {
        let d = self.dim;
        let mut best: f64 = 0.0;
        for j in 0..=self.max_level() {
            let last = if j == 0 { 1u32 << d } else { (1u32 << d) - 1 };
            let maxes: [f64; 2] =
                [0, 1].map(|b| self.axes[j as usize][b].1.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
            for l in 1..=last {
                let m: f64 = (0..d).map(|i| maxes[((l >> i) & 1) as usize]).product();
                best = best.max(m * (j as f64 * (eta + d as f64 / 2.0)).exp2() / self.radius);
            }
        }
        best
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
}

impl ReferenceMoments for ProductDensityReference {
    fn coefficient(&self, j: u32, l: u32, w: &[i64]) -> f64 {
        if j > self.max_level() {
            return 0.0;
        }
        let mut v = 1.0;
        for (i, &wi) in w.iter().enumerate() {
            v *= self.axis(j, (l >> i) & 1, wi);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    fn type_total(&self, j: u32, l: u32) -> f64 {
        if j > self.max_level() {
            return 0.0;
        }
        (0..self.dim)
            .map(|i| self.axes[j as usize][((l >> i) & 1) as usize].1.iter().map(|v| v.abs()).sum::<f64>())
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::{analyze, SampledFunction};

    fn wavelet() -> Arc<Wavelet> {
        Arc::new(Wavelet::new(3, 12, 1).unwrap())
    }

    #[test]
    fn circle_constants() {
        let t = make_target(TargetKind::Circle { r: 0.5 }, 1.25, None).unwrap();
        let s = min_singular_estimate(|u| t.jacobian(u), 1, 2, 7);
        assert!((s - PI).abs() < 1e-12);
        assert!(make_target(TargetKind::Circle { r: 1.5 }, 1.25, None).is_err());
        assert!(make_target(TargetKind::Circle { r: 0.05 }, 1.25, None).is_err());
    }

    #[test]
    fn zero_perturbation_is_the_base() {
        let base = TargetKind::Circle { r: 0.5 };
        let t = make_target(base.clone(), 1.25, None).unwrap();
        let kind = TargetKind::Perturbed { base: Box::new(base), amplitude: 0.0, level: 3, beta: 1.0, seed: 1 };
        let p = make_target(kind, 1.25, Some(wavelet())).unwrap();
        for u in [0.0, 0.3, 0.77] {
            assert_eq!(t.eval(&[u]), p.eval(&[u]));
        }
    }

    #[test]
    fn perturbation_amplitude_and_bound() {
        let base = TargetKind::Circle { r: 0.5 };
        let kind = TargetKind::Perturbed { base: Box::new(base.clone()), amplitude: 0.1, level: 3, beta: 1.0, seed: 4 };
        let p = make_target(kind, 1.25, Some(wavelet())).unwrap();
        let mut sup: f64 = 0.0;
        for k in 0..4096 {
            let u = [k as f64 / 4096.0];
            let (a, b) = (p.eval(&u), base_eval(&base, &u));
            sup = sup.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
        assert!((sup - 0.1).abs() < 1e-12);
        let too_big = TargetKind::Perturbed { base: Box::new(base), amplitude: 0.2, level: 3, beta: 1.0, seed: 4 };
        assert!(make_target(too_big, 1.25, Some(wavelet())).is_err());
    }

    #[test]
    fn torus_jacobian_matches_differences() {
        let t = make_target(TargetKind::Torus { big_r: 0.7, r: 0.25 }, 1.25, None).unwrap();
        let u = [0.31, 0.83];
        let jac = t.jacobian(&u);
        let h = 1e-6;
        for k in 0..2 {
            let (mut a, mut b) = (u, u);
            a[k] += h;
            b[k] -= h;
            let (ea, eb) = (t.eval(&a), t.eval(&b));
            for i in 0..3 {
                assert!((jac[i * 2 + k] - (ea[i] - eb[i]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn circle_sample_mean() {
        let t = make_target(TargetKind::Circle { r: 0.5 }, 1.25, None).unwrap();
        let s = t.sample(10_000, 3).unwrap();
        let mut mean = [0.0; 2];
        for (p, w) in s.iter() {
            mean[0] += w * p[0];
            mean[1] += w * p[1];
        }
        assert!((mean[0].hypot(mean[1])) <= 3.0 * 0.5 / 100.0);
        assert_eq!(s, t.sample(10_000, 3).unwrap());
        assert_eq!(t.sample(1, 9).unwrap().weights(), &[1.0]);
    }

    #[test]
    fn density_sampling_moments() {
        let t = make_target(TargetKind::ProductDensity { half_width: 0.55, p: 2 }, 1.01, None).unwrap();
        let s = t.sample(20_000, 1).unwrap();
        // Var of a(2B−1) with B ~ Beta(4,4) is a²/9.
        let var: f64 = s.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((var - 0.55f64.powi(2) / 9.0).abs() < 2e-3);
        assert!(s.coords().iter().all(|x| x.abs() <= 0.55));
    }

    #[test]
    fn reference_coefficients_match_analysis() {
        let spec = BasisSpec::ambient(1, 1.01, wavelet()).unwrap();
        let reference = ProductDensityReference::new(&spec, 0.55, 3).unwrap();
        let f = SampledFunction::ambient(1, 12, 2.0, |x| bump(x[0], 0.55));
        let spec_wide = BasisSpec::ambient(1, 1.01, wavelet()).unwrap();
        let cf = analyze(&f, &spec_wide, 3).unwrap();
        for (idx, v) in cf.iter() {
            let r = reference.coefficient(idx.j, idx.l, &idx.w);
            assert!((v - r).abs() < 1e-6, "{idx:?} {v} {r}");
        }
        // Totals agree with the field.
        let field = reference.field(3, 1.0);
        for j in 0..=3 {
            let s: f64 = field.iter().filter(|(i, _)| i.j == j && i.l == 1).map(|(_, v)| v.abs()).sum();
            assert!((s - reference.type_total(j, 1)).abs() < 1e-12);
        }
        let c = reference.box_constant(1.0);
        let sched = BoundSchedule::new(1.0, 1.01, c * (1.0 + 1e-12), 1).unwrap();
        assert!(field.in_box(&sched));
    }
}
