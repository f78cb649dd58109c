//! Exact dyadic values of φ and its derivatives, and the cascade approximant `V^j f₀`.
//!
//! Integer-point values come from the eigenproblem `T v = 2^{−l} v` with
//! `T_{i,m} = h_{2i−m}`; every other dyadic point is then filled level by level
//! from the refinement relation, so the tables are exact up to rounding.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::FilterBank;

/// Default resolution of dyadic tables.
pub const DEFAULT_GRID_LEVEL: u32 = 12;

/// Grid level used to pin the scale of derivative eigenvectors.
const NORMALIZATION_LEVEL: u32 = 14;

/// Default number of derivative tables for smoothness `beta`, capped by regularity.
pub fn default_max_derivative(fb: &FilterBank, beta: f64) -> usize {
    let wanted = beta.max(0.0).floor() as usize + 2;
    wanted.min(fb.vanishing_moments() - 1).min(fb.max_derivative())
}

fn raw_eigenvector(fb: &FilterBank, l: usize) -> Result<Vec<f64>> {
    let n = fb.support_len();
    let target = 0.5_f64.powi(l as i32);
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        for m in 0..=n {
            a[(i, m)] = fb.h(2 * i as i64 - m as i64);
        }
        a[(i, i)] -= target;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (idx, smallest) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty spectrum");
    if smallest > 1e-9 {
        return Err(Error::EigenSolveFailure { target, residual: smallest });
    }
    let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    // The boundary values vanish for continuous φ^{(l)}; clear rounding noise.
    v[0] = 0.0;
    v[n] = 0.0;
    Ok(v)
}

/// Values on the full dyadic grid of level `level`, from integer values of order `l`.
fn fill_levels(fb: &FilterBank, integer: &[f64], l: usize, level: u32) -> Vec<f64> {
    let n = fb.support_len();
    let scale = 1usize << level;
    let mut t = vec![0.0; n * scale + 1];
    for (k, v) in integer.iter().enumerate() {
        t[k * scale] = *v;
    }
    let gain = (1u64 << l) as f64;
    for s in 1..=level {
        let stride = 1usize << (level - s);
        // Odd multiples of `stride` are the new points at refinement level s.
        let mut m = stride;
        while m < n * scale {
            let mut acc = 0.0;
            for (k, hk) in fb.coeffs().iter().enumerate() {
                let idx = 2 * m as i64 - (k * scale) as i64;
                if idx >= 0 && (idx as usize) <= n * scale {
                    acc += hk * t[idx as usize];
                }
            }
            t[m] = gain * acc;
            m += 2 * stride;
        }
    }
    t
}

/// Values `φ^{(l)}(0..=N)`.
///
/// Order 0 is normalized by `Σ_k φ(k) = 1`. Higher orders are scaled so that
/// central differences of the (already normalized) order-`l−1` table match the
/// order-`l` table in least squares on a fine grid.
pub fn integer_values(fb: &FilterBank, l: usize) -> Result<Vec<f64>> {
    let max = fb.max_derivative();
    if l > max {
        return Err(Error::RegularityExceeded { order: l, max });
    }
    if fb.vanishing_moments() == 1 {
        return Ok(vec![1.0, 0.0]);
    }
    let mut v = raw_eigenvector(fb, l)?;
    if l == 0 {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        return Ok(v);
    }
    let lower = integer_values(fb, l - 1)?;
    let lo = fill_levels(fb, &lower, l - 1, NORMALIZATION_LEVEL);
    let hi = fill_levels(fb, &v, l, NORMALIZATION_LEVEL);
    let h = 0.5_f64.powi(NORMALIZATION_LEVEL as i32);
    let (mut num, mut den) = (0.0, 0.0);
    for m in 1..lo.len() - 1 {
        let d = (lo[m + 1] - lo[m - 1]) / (2.0 * h);
        num += d * hi[m];
        den += hi[m] * hi[m];
    }
    let c = num / den;
    v.iter_mut().for_each(|x| *x *= c);
    Ok(v)
}

/// Values of a compactly supported function and its derivatives on a dyadic grid.
///
/// The grid is `start + m·2^{−J}` for `m = 0..=N·2^J`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicTable {
    grid_level: u32,
    support_start: f64,
    support_len: usize,
    piecewise_constant: bool,
    values: Vec<Vec<f64>>,
}

impl DyadicTable {
    pub fn grid_level(&self) -> u32 {
        self.grid_level
    }

    pub fn support_start(&self) -> f64 {
        self.support_start
    }

    pub fn support_end(&self) -> f64 {
        self.support_start + self.support_len as f64
    }

    pub fn support_len(&self) -> usize {
        self.support_len
    }

    /// Highest derivative order stored.
    pub fn max_derivative(&self) -> usize {
        self.values.len() - 1
    }

    /// Raw table of order `l`.
    pub fn order(&self, l: usize) -> &[f64] {
        &self.values[l]
    }

    /// Grid spacing `2^{−J}`.
    pub fn spacing(&self) -> f64 {
        0.5_f64.powi(self.grid_level as i32)
    }

    /// Value of order `l` at grid point `m` (zero off the grid range).
    pub fn at(&self, l: usize, m: i64) -> f64 {
        let t = &self.values[l];
        if m < 0 || m as usize >= t.len() {
            0.0
        } else {
            t[m as usize]
        }
    }

    /// Interpolated value of the `l`-th derivative at `x`.
    pub fn evaluate(&self, x: f64, l: usize) -> Result<f64> {
        if l > self.max_derivative() {
            return Err(Error::DerivativeUnavailable { order: l, max: self.max_derivative() });
        }
        Ok(self.value_and_slope(x, l).0)
    }

    /// Interpolant of order `l` at `x` together with its exact derivative.
    ///
    /// Cubic Hermite using the order-`l+1` table as slopes when available,
    /// linear otherwise; Haar tables use left-closed steps. The slope returned is
    /// the derivative of the same interpolant, so values and slopes stay consistent.
    #[inline]
    pub fn value_and_slope(&self, x: f64, l: usize) -> (f64, f64) {
        let rel = x - self.support_start;
        let n = self.support_len as f64;
        if !(0.0..=n).contains(&rel) {
            return (0.0, 0.0);
        }
        let scale = (1u64 << self.grid_level) as f64;
        let t = rel * scale;
        let cells = self.values[l].len() - 1;
        let m = (t.floor() as usize).min(cells - 1);
        let theta = t - m as f64;
        let f = &self.values[l];
        if self.piecewise_constant {
            let idx = if theta >= 1.0 { m + 1 } else { m };
            return (f[idx], 0.0);
        }
        let (f0, f1) = (f[m], f[m + 1]);
        if l + 1 < self.values.len() {
            let h = 1.0 / scale;
            let d = &self.values[l + 1];
            let (d0, d1) = (d[m] * h, d[m + 1] * h);
            let th2 = theta * theta;
            let th3 = th2 * theta;
            let value = (2.0 * th3 - 3.0 * th2 + 1.0) * f0
                + (th3 - 2.0 * th2 + theta) * d0
                + (-2.0 * th3 + 3.0 * th2) * f1
                + (th3 - th2) * d1;
            let slope = ((6.0 * th2 - 6.0 * theta) * f0
                + (3.0 * th2 - 4.0 * theta + 1.0) * d0
                + (-6.0 * th2 + 6.0 * theta) * f1
                + (3.0 * th2 - 2.0 * theta) * d1)
                * scale;
            (value, slope)
        } else {
            (f0 + theta * (f1 - f0), (f1 - f0) * scale)
        }
    }

    /// Largest violation of `φ^{(l)}(x) = 2^l Σ_k h_k φ^{(l)}(2x − k)` over the grid.
    ///
    /// Only meaningful for scaling-function tables (support starting at 0).
    pub fn two_scale_residual(&self, fb: &FilterBank) -> f64 {
        let scale = 1i64 << self.grid_level;
        let mut worst = 0.0_f64;
        for (l, t) in self.values.iter().enumerate() {
            let gain = (1u64 << l) as f64;
            for (m, v) in t.iter().enumerate() {
                let mut acc = 0.0;
                for (k, hk) in fb.coeffs().iter().enumerate() {
                    acc += hk * self.at(l, 2 * m as i64 - k as i64 * scale);
                }
                worst = worst.max((v - gain * acc).abs());
            }
        }
        worst
    }

    /// `max_x |Σ_k φ(x − k) − 1|` over the grid points of `[0, 1)`.
    pub fn partition_of_unity_residual(&self) -> f64 {
        let scale = 1usize << self.grid_level;
        let t = &self.values[0];
        (0..scale)
            .map(|m| {
                let s: f64 = (0..self.support_len).map(|k| t[m + k * scale]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Text export: a version line, a column header, then `order,index,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# wavegan dyadic-table v1 grid_level={} support_start={} support_len={} piecewise_constant={}",
            self.grid_level, self.support_start, self.support_len, self.piecewise_constant
        );
        out.push_str("order,index,value\n");
        for (l, t) in self.values.iter().enumerate() {
            for (m, v) in t.iter().enumerate() {
                let _ = writeln!(out, "{l},{m},{v:.16e}");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: &str| Error::Parse { line: line + 1, message: message.into() };
        let (_, head) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let mut grid_level = None;
        let mut support_start = None;
        let mut support_len = None;
        let mut piecewise_constant = None;
        for token in head.split_whitespace().skip(4) {
            let (key, value) = token.split_once('=').ok_or_else(|| parse_err(0, "bad header field"))?;
            match key {
                "grid_level" => grid_level = value.parse().ok(),
                "support_start" => support_start = value.parse().ok(),
                "support_len" => support_len = value.parse().ok(),
                "piecewise_constant" => piecewise_constant = value.parse().ok(),
                _ => return Err(parse_err(0, "unknown header field")),
            }
        }
        let (Some(grid_level), Some(support_start), Some(support_len), Some(piecewise_constant)) =
            (grid_level, support_start, support_len, piecewise_constant)
        else {
            return Err(parse_err(0, "incomplete header"));
        };
        let len = support_len * (1usize << grid_level) + 1;
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (no, line) in lines.skip(1) {
            let mut parts = line.split(',');
            let (Some(l), Some(m), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(parse_err(no, "expected three columns"));
            };
            let l: usize = l.parse().map_err(|_| parse_err(no, "bad order"))?;
            let m: usize = m.parse().map_err(|_| parse_err(no, "bad index"))?;
            let v: f64 = v.parse().map_err(|_| parse_err(no, "bad value"))?;
            while values.len() <= l {
                values.push(vec![0.0; len]);
            }
            *values[l].get_mut(m).ok_or_else(|| parse_err(no, "index out of range"))? = v;
        }
        if values.is_empty() {
            return Err(parse_err(1, "no rows"));
        }
        Ok(DyadicTable { grid_level, support_start, support_len, piecewise_constant, values })
    }
}

/// Exact tables of φ, φ', …, φ^{(L)} on the dyadic grid of level `grid_level`.
pub fn cascade_table(fb: &FilterBank, grid_level: u32, max_derivative: usize) -> Result<DyadicTable> {
    let mut values = Vec::with_capacity(max_derivative + 1);
    for l in 0..=max_derivative {
        let ints = integer_values(fb, l)?;
        values.push(fill_levels(fb, &ints, l, grid_level));
    }
    Ok(DyadicTable {
        grid_level,
        support_start: 0.0,
        support_len: fb.support_len(),
        piecewise_constant: fb.vanishing_moments() == 1,
        values,
    })
}

/// Tables of ψ^{(l)} on the same grid level, from `ψ(x) = Σ_k λ_k φ(2x − k)`,
/// `λ_k = (−1)^{k+1} h_{1−k}`, `k = 1−N..=1`. The support is `[(1−N)/2, (1+N)/2]`.
pub fn wavelet_from_scaling(fb: &FilterBank, phi: &DyadicTable) -> DyadicTable {
    let n = fb.support_len() as i64;
    let level = phi.grid_level();
    let scale = 1i64 << level;
    let len = (n * scale + 1) as usize;
    let values = (0..=phi.max_derivative())
        .map(|l| {
            let gain = (1u64 << l) as f64;
            (0..len)
                .map(|m| {
                    let mut acc = 0.0;
                    for k in (1 - n)..=1 {
                        let lambda = if (k + 1).rem_euclid(2) == 0 { 1.0 } else { -1.0 } * fb.h(1 - k);
                        // 2x − k with x = (1−N)/2 + m/2^J.
                        let idx = (1 - n - k) * scale + 2 * m as i64;
                        acc += lambda * phi.at(l, idx);
                    }
                    gain * acc
                })
                .collect()
        })
        .collect();
    DyadicTable {
        grid_level: level,
        support_start: (1 - n) as f64 / 2.0,
        support_len: n as usize,
        piecewise_constant: phi.piecewise_constant,
        values,
    }
}

/// Starting function for the cascade, living on `[0, N]`.
pub trait SmoothBase: Send + Sync {
    fn support_len(&self) -> usize;
    fn max_derivative(&self) -> usize;
    /// `l`-th derivative at `x`; zero outside the support.
    fn eval(&self, x: f64, l: usize) -> f64;
}

/// Indicator of `[0, 1)`: the Haar fixed point.
#[derive(Debug, Clone, Copy, Default)]
pub struct IndicatorBase;

impl SmoothBase for IndicatorBase {
    fn support_len(&self) -> usize {
        1
    }
    fn max_derivative(&self) -> usize {
        0
    }
    fn eval(&self, x: f64, l: usize) -> f64 {
        if l == 0 && (0.0..1.0).contains(&x) {
            1.0
        } else {
            0.0
        }
    }
}

/// Piecewise polynomial of degree `2L+1` matching `φ^{(l)}(k)` for `l ≤ L` at every integer.
#[derive(Debug, Clone)]
pub struct HermiteBase {
    order: usize,
    pieces: Vec<Vec<f64>>,
}

impl HermiteBase {
    /// Build from given integer values `values[l][k]`.
    pub fn from_integer_values(values: &[Vec<f64>]) -> Result<Self> {
        let order = values.len() - 1;
        let n = values[0].len() - 1;
        let deg = 2 * order + 1;
        let fact = |k: usize| (1..=k).fold(1.0, |a, b| a * b as f64);
        let falling = |i: usize, l: usize| if i < l { 0.0 } else { fact(i) / fact(i - l) };
        let mut sys = DMatrix::<f64>::zeros(deg + 1, deg + 1);
        for l in 0..=order {
            sys[(l, l)] = fact(l);
            for i in 0..=deg {
                sys[(order + 1 + l, i)] = falling(i, l);
            }
        }
        let lu = sys.lu();
        let mut pieces = Vec::with_capacity(n);
        for k in 0..n {
            let mut rhs = DVector::<f64>::zeros(deg + 1);
            for l in 0..=order {
                rhs[l] = values[l][k];
                rhs[order + 1 + l] = values[l][k + 1];
            }
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidParams("singular Hermite system".into()))?;
            pieces.push(sol.iter().copied().collect());
        }
        Ok(HermiteBase { order, pieces })
    }

    /// Hermite base for φ using derivative orders `0..=order`.
    pub fn for_filter(fb: &FilterBank, order: usize) -> Result<Self> {
        let values = (0..=order).map(|l| integer_values(fb, l)).collect::<Result<Vec<_>>>()?;
        Self::from_integer_values(&values)
    }
}

impl SmoothBase for HermiteBase {
    fn support_len(&self) -> usize {
        self.pieces.len()
    }
    fn max_derivative(&self) -> usize {
        self.order
    }
    fn eval(&self, x: f64, l: usize) -> f64 {
        let n = self.pieces.len();
        if !(0.0..=n as f64).contains(&x) {
            return 0.0;
        }
        let k = (x.floor() as usize).min(n - 1);
        let t = x - k as f64;
        let a = &self.pieces[k];
        let mut acc = 0.0;
        for i in (l..a.len()).rev() {
            let coef = ((i - l + 1)..=i).fold(a[i], |c, f| c * f as f64);
            acc = acc * t + coef;
        }
        acc
    }
}

/// `V^j f₀(x) = Σ_n c_j[n] f₀(2^j x − n)` for a base `f₀`.
#[derive(Debug, Clone)]
pub struct CascadeApproximant<B> {
    base: B,
    level: u32,
    coeffs: Vec<f64>,
}

impl<B: SmoothBase> CascadeApproximant<B> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn subdivision_coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    /// `l`-th derivative of the approximant at `x`.
    pub fn eval(&self, x: f64, l: usize) -> f64 {
        let scale = (1u64 << self.level) as f64;
        let y = scale * x;
        let n = self.base.support_len() as f64;
        let lo = (y - n).ceil().max(0.0) as i64;
        let hi = (y.floor() as i64).min(self.coeffs.len() as i64 - 1);
        let mut acc = 0.0;
        for idx in lo..=hi {
            acc += self.coeffs[idx as usize] * self.base.eval(y - idx as f64, l);
        }
        acc * scale.powi(l as i32)
    }

    /// Sup-distance of order `l` to an exact table, over the table's grid.
    pub fn sup_error(&self, table: &DyadicTable, l: usize) -> f64 {
        let h = table.spacing();
        table
            .order(l)
            .iter()
            .enumerate()
            .map(|(m, v)| (self.eval(table.support_start() + m as f64 * h, l) - v).abs())
            .fold(0.0, f64::max)
    }
}

/// Run `j` steps of the cascade from `base`.
///
/// The base must reproduce `φ^{(l)}(k)` for every stored order within `tolerance`.
pub fn cascade_iterate<B: SmoothBase>(
    fb: &FilterBank,
    base: B,
    j: u32,
    tolerance: f64,
) -> Result<CascadeApproximant<B>> {
    let n = fb.support_len();
    if base.support_len() != n {
        return Err(Error::DimensionMismatch(format!(
            "base support {} differs from filter support {n}",
            base.support_len()
        )));
    }
    let mut residual = 0.0_f64;
    for l in 0..=base.max_derivative() {
        let target = integer_values(fb, l)?;
        for (k, v) in target.iter().enumerate() {
            residual = residual.max((base.eval(k as f64, l) - v).abs());
        }
    }
    if residual > tolerance {
        return Err(Error::BaseFitTooLoose { residual, tolerance });
    }
    let mut coeffs = vec![1.0];
    for s in 0..j {
        let shift = 1usize << s;
        let mut next = vec![0.0; n * (2 * shift - 1) + 1];
        for (k, hk) in fb.coeffs().iter().enumerate() {
            for (i, c) in coeffs.iter().enumerate() {
                next[i + k * shift] += hk * c;
            }
        }
        coeffs = next;
    }
    Ok(CascadeApproximant { base, level: j, coeffs })
}

/// Running minimum of sup-errors of `V^j f₀` for `j = 0..=j_max` against `table`.
pub fn cascade_error_profile<B: SmoothBase + Clone>(
    fb: &FilterBank,
    base: &B,
    j_max: u32,
    table: &DyadicTable,
    tolerance: f64,
) -> Result<Vec<f64>> {
    let mut best = f64::INFINITY;
    let mut out = Vec::with_capacity(j_max as usize + 1);
    for j in 0..=j_max {
        let approx = cascade_iterate(fb, base.clone(), j, tolerance)?;
        best = best.min(approx.sup_error(table, 0));
        out.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::daubechies_filter;

    fn quad_inner(a: &DyadicTable, b: &DyadicTable, shift: f64, level: u32) -> f64 {
        // Midpoint rule at resolution 2^{-level} over the union of supports.
        let lo = a.support_start().min(b.support_start() + shift);
        let hi = a.support_end().max(b.support_end() + shift);
        let h = 0.5_f64.powi(level as i32);
        let steps = ((hi - lo) / h).ceil() as usize;
        (0..steps)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                a.value_and_slope(x, 0).0 * b.value_and_slope(x - shift, 0).0 * h
            })
            .sum()
    }

    #[test]
    fn haar_integer_values() {
        let fb = daubechies_filter(1).unwrap();
        assert_eq!(integer_values(&fb, 0).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(integer_values(&fb, 1), Err(Error::RegularityExceeded { .. })));
    }

    #[test]
    fn d4_integer_values() {
        let fb = daubechies_filter(2).unwrap();
        let v = integer_values(&fb, 0).unwrap();
        let s3 = 3f64.sqrt();
        let expected = [0.0, (1.0 + s3) / 2.0, (1.0 - s3) / 2.0, 0.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn integer_values_are_eigenvectors() {
        for nv in 2..=8 {
            let fb = daubechies_filter(nv).unwrap();
            let n = fb.support_len();
            for l in 0..=fb.max_derivative() {
                let v = integer_values(&fb, l).unwrap();
                let lambda = 0.5_f64.powi(l as i32);
                let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                for i in 0..=n {
                    let tv: f64 = (0..=n).map(|m| fb.h(2 * i as i64 - m as i64) * v[m]).sum();
                    assert!((tv - lambda * v[i]).abs() < 1e-11 * scale, "nv={nv} l={l} i={i}");
                }
            }
        }
    }

    #[test]
    fn derivative_scale_matches_moment_identity() {
        // Independent check of the finite-difference normalization:
        // Σ_m (−m)^l φ^{(l)}(m) = l! follows from polynomial reproduction.
        for nv in [3, 4, 5, 6, 8] {
            let fb = daubechies_filter(nv).unwrap();
            for l in 1..=fb.max_derivative() {
                let v = integer_values(&fb, l).unwrap();
                let s: f64 =
                    v.iter().enumerate().map(|(m, x)| (-(m as f64)).powi(l as i32) * x).sum();
                let fact = (1..=l).fold(1.0, |a, b| a * b as f64);
                let rel = (s - fact).abs() / fact;
                assert!(rel < 2e-3, "nv={nv} l={l}: {s} vs {fact} (rel {rel:e})");
            }
        }
    }

    #[test]
    fn haar_table_is_indicator() {
        let fb = daubechies_filter(1).unwrap();
        let t = cascade_table(&fb, 3, 0).unwrap();
        let v = t.order(0);
        assert!(v[..8].iter().all(|&x| x == 1.0));
        assert_eq!(v[8], 0.0);
        assert_eq!(t.evaluate(0.999, 0).unwrap(), 1.0);
        assert_eq!(t.evaluate(1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn residuals_small() {
        for nv in 1..=4 {
            let fb = daubechies_filter(nv).unwrap();
            let t = cascade_table(&fb, 10, fb.max_derivative()).unwrap();
            assert!(t.two_scale_residual(&fb) <= 1e-10, "nv={nv}");
            assert!(t.partition_of_unity_residual() <= 1e-8, "nv={nv}");
        }
    }

    fn difference_errors(nv: usize, level: u32) -> (f64, f64) {
        let fb = daubechies_filter(nv).unwrap();
        let t = cascade_table(&fb, level, 1).unwrap();
        let h = t.spacing();
        let (v0, v1) = (t.order(0), t.order(1));
        let errs: Vec<f64> =
            (1..v0.len() - 1).map(|m| (v0[m + 1] - v0[m - 1]) / (2.0 * h) - v1[m]).collect();
        let sup = errs.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
        let l2 = (errs.iter().map(|e| e * e).sum::<f64>() * h).sqrt();
        (sup, l2)
    }

    #[test]
    fn derivative_table_matches_differences() {
        // φ' of the 3-moment filter is only Hölder-0.09, so its differences converge
        // in L² but not uniformly; from 5 moments on the uniform error is O(h).
        let (_, coarse) = difference_errors(3, 10);
        let (_, fine) = difference_errors(3, 14);
        assert!(fine < 0.5 * coarse && fine < 0.05, "{coarse} {fine}");
        let (a, _) = difference_errors(4, 10);
        let (b, _) = difference_errors(4, 14);
        assert!(b < 0.25 * a, "{a} {b}");
        for nv in [5, 6] {
            let (a, _) = difference_errors(nv, 10);
            let (b, _) = difference_errors(nv, 12);
            assert!(b < 0.3 * a, "nv={nv}: {a} {b}");
            assert!(b < 1e-3, "nv={nv}: {b}");
        }
    }

    #[test]
    fn evaluate_on_grid_is_exact_and_zero_outside() {
        let fb = daubechies_filter(3).unwrap();
        let t = cascade_table(&fb, 8, 1).unwrap();
        for m in [0usize, 1, 17, 300, 1279] {
            let x = m as f64 / 256.0;
            assert_eq!(t.evaluate(x, 0).unwrap(), t.order(0)[m]);
        }
        assert_eq!(t.evaluate(-0.1, 0).unwrap(), 0.0);
        assert_eq!(t.evaluate(5.2, 0).unwrap(), 0.0);
        assert!(matches!(t.evaluate(1.0, 2), Err(Error::DerivativeUnavailable { .. })));
    }

    #[test]
    fn midpoints_match_finer_table() {
        let fb = daubechies_filter(3).unwrap();
        // Hermite error scales like h^{1.09} here; 2^-18 is the first level below 1e-6.
        let coarse = cascade_table(&fb, 18, 1).unwrap();
        let fine = cascade_table(&fb, 20, 1).unwrap();
        let h = coarse.spacing();
        let worst = (0..coarse.order(0).len() - 1)
            .map(|m| {
                let x = (m as f64 + 0.5) * h;
                (coarse.evaluate(x, 0).unwrap() - fine.order(0)[4 * m + 2]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn csv_round_trip() {
        let fb = daubechies_filter(3).unwrap();
        let t = cascade_table(&fb, 4, 1).unwrap();
        let back = DyadicTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        let psi = wavelet_from_scaling(&fb, &t);
        assert_eq!(DyadicTable::from_csv(&psi.to_csv()).unwrap(), psi);
    }

    #[test]
    fn haar_wavelet_signs() {
        let fb = daubechies_filter(1).unwrap();
        let phi = cascade_table(&fb, 4, 0).unwrap();
        let psi = wavelet_from_scaling(&fb, &phi);
        assert_eq!(psi.evaluate(0.25, 0).unwrap(), -1.0);
        assert_eq!(psi.evaluate(0.75, 0).unwrap(), 1.0);
        assert_eq!(psi.evaluate(1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn wavelet_moments_and_orthogonality() {
        let fb = daubechies_filter(3).unwrap();
        let phi = cascade_table(&fb, 12, 1).unwrap();
        let psi = wavelet_from_scaling(&fb, &phi);
        assert_eq!(psi.support_start(), -2.0);
        let h = 0.5_f64.powi(16);
        let steps = (5.0 / h) as usize;
        let integral: f64 =
            (0..steps).map(|i| psi.evaluate(-2.0 + (i as f64 + 0.5) * h, 0).unwrap() * h).sum();
        assert!(integral.abs() < 1e-8, "{integral}");
        assert!(quad_inner(&psi, &phi, 0.0, 16).abs() < 1e-6);
        assert!((quad_inner(&psi, &psi, 0.0, 16) - 1.0).abs() < 1e-6);
        assert!((quad_inner(&phi, &phi, 0.0, 16) - 1.0).abs() < 1e-6);
        assert!(quad_inner(&phi, &phi, 1.0, 16).abs() < 1e-6);
    }

    #[test]
    fn cascade_level_zero_is_base() {
        let fb = daubechies_filter(3).unwrap();
        let base = HermiteBase::for_filter(&fb, 1).unwrap();
        let approx = cascade_iterate(&fb, base.clone(), 0, 1e-10).unwrap();
        for x in [0.0, 0.3, 1.7, 4.99] {
            assert_eq!(approx.eval(x, 0), base.eval(x, 0));
        }
    }

    #[test]
    fn haar_indicator_is_fixed_point() {
        let fb = daubechies_filter(1).unwrap();
        let approx = cascade_iterate(&fb, IndicatorBase, 3, 1e-12).unwrap();
        for i in 0..64 {
            let x = -0.5 + i as f64 / 32.0;
            assert_eq!(approx.eval(x, 0), IndicatorBase.eval(x, 0), "x={x}");
        }
    }

    #[test]
    fn cascade_converges_for_d6() {
        let fb = daubechies_filter(3).unwrap();
        let table = cascade_table(&fb, 10, 1).unwrap();
        let base = HermiteBase::for_filter(&fb, 1).unwrap();
        let profile = cascade_error_profile(&fb, &base, 10, &table, 1e-10).unwrap();
        assert!(profile.windows(2).all(|w| w[1] <= w[0]));
        assert!(profile[10] < 1e-3, "{profile:?}");
    }

    #[test]
    fn loose_base_rejected() {
        let fb = daubechies_filter(3).unwrap();
        let mut vals = vec![integer_values(&fb, 0).unwrap(), integer_values(&fb, 1).unwrap()];
        vals[0][2] += 1e-3;
        let base = HermiteBase::from_integer_values(&vals).unwrap();
        assert!(matches!(cascade_iterate(&fb, base, 2, 1e-8), Err(Error::BaseFitTooLoose { .. })));
    }
}
