//! Tensor-product Daubechies bases on the torus `𝕋^D` and on `ℝ^D`.
//!
//! Type index `l` is read bitwise: bit `i` set means axis `i` uses ψ, clear means φ.
//! Genuine wavelet types are `1..2^D`; `l = 2^D` (all bits clear) is the pure
//! scaling type and only exists at level 0. On the torus that index is the
//! constant function 1.

use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::wavelet::{AxisKind, Wavelet};

pub type Translation = SmallVec<[i64; 4]>;

/// `(j, l, w)`: level, type, translation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WaveletIndex {
    pub j: u32,
    pub l: u32,
    pub w: Translation,
}

impl WaveletIndex {
    pub fn new(j: u32, l: u32, w: &[i64]) -> Self {
        WaveletIndex { j, l, w: w.iter().copied().collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The unit torus `[0,1)^D`.
    Periodic,
    /// `ℝ^D`, with translations restricted to those meeting the ball of this radius.
    Ambient { radius: f64 },
}

/// One axis of a separable evaluation: a run of consecutive translations with
/// their 1-d values and derivatives (derivative taken with respect to the coordinate).
#[derive(Debug, Clone, Default)]
pub struct AxisWindow {
    /// First translation (periodic windows are unwrapped; wrap modulo `2^j`).
    pub start: i64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl AxisWindow {
    fn clear(&mut self, start: i64) {
        self.start = start;
        self.values.clear();
        self.slopes.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reusable buffers for [`BasisSpec::for_each_active`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    windows: Vec<[AxisWindow; 2]>,
    w: Vec<i64>,
    grad: Vec<f64>,
    counters: Vec<usize>,
}

/// Domain, dimension and wavelet of a tensor basis.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    dim: usize,
    domain: Domain,
    wavelet: Arc<Wavelet>,
}

#[inline]
fn kind_of(l: u32, axis: usize) -> AxisKind {
    if (l >> axis) & 1 == 1 {
        AxisKind::Wavelet
    } else {
        AxisKind::Scaling
    }
}

impl BasisSpec {
    pub fn periodic(dim: usize, wavelet: Arc<Wavelet>) -> Result<Self> {
        Self::new(dim, Domain::Periodic, wavelet)
    }

    pub fn ambient(dim: usize, radius: f64, wavelet: Arc<Wavelet>) -> Result<Self> {
        Self::new(dim, Domain::Ambient { radius }, wavelet)
    }

    pub fn new(dim: usize, domain: Domain, wavelet: Arc<Wavelet>) -> Result<Self> {
        if dim == 0 || dim > 16 {
            return Err(Error::InvalidParams(format!("dimension {dim} outside 1..=16")));
        }
        if let Domain::Ambient { radius } = domain {
            if !(radius > 1.0) || !radius.is_finite() {
                return Err(Error::InvalidParams(format!("ambient radius must exceed 1, got {radius}")));
            }
        }
        Ok(BasisSpec { dim, domain, wavelet })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn wavelet(&self) -> &Arc<Wavelet> {
        &self.wavelet
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.domain, Domain::Periodic)
    }

    /// `2^D`, the pure scaling type.
    pub fn scaling_type(&self) -> u32 {
        1 << self.dim
    }

    /// Types present at level `j`: genuine wavelets, plus the scaling type at `j = 0`.
    pub fn types(&self, j: u32) -> impl Iterator<Item = u32> {
        let top = self.scaling_type();
        let last = if j == 0 { top } else { top - 1 };
        1..=last
    }

    /// Inclusive translation range per axis at level `j`.
    pub fn translation_range(&self, j: u32) -> (i64, i64) {
        match self.domain {
            Domain::Periodic => (0, (1i64 << j) - 1),
            Domain::Ambient { radius } => {
                let n = self.wavelet.support_len() as i64;
                let r = (radius * (1u64 << j) as f64).ceil() as i64;
                (-r - n, r + n)
            }
        }
    }

    /// Whether `idx` names a basis function of this spec.
    pub fn is_valid(&self, idx: &WaveletIndex) -> bool {
        if idx.w.len() != self.dim || idx.l == 0 || idx.l > self.scaling_type() {
            return false;
        }
        if idx.l == self.scaling_type() && idx.j != 0 {
            return false;
        }
        let (lo, hi) = self.translation_range(idx.j);
        idx.w.iter().all(|&w| (lo..=hi).contains(&w))
    }

    fn is_constant(&self, l: u32) -> bool {
        self.is_periodic() && l == self.scaling_type()
    }

    /// 1-d factor (value, d/dx) at coordinate `x` for translation `w`.
    fn axis_eval(&self, kind: AxisKind, j: u32, x: f64, w: i64) -> (f64, f64) {
        let scale = (1u64 << j) as f64;
        let norm = scale.sqrt();
        match self.domain {
            Domain::Ambient { .. } => {
                let (v, s) = self.wavelet.eval(kind, scale * x - w as f64);
                (norm * v, norm * scale * s)
            }
            Domain::Periodic => {
                let (a, b) = self.wavelet.support(kind);
                let y = scale * x - w as f64;
                let k_lo = ((y - b) / scale).ceil() as i64;
                let k_hi = ((y - a) / scale).floor() as i64;
                let (mut v, mut s) = (0.0, 0.0);
                for k in k_lo..=k_hi {
                    let (fv, fs) = self.wavelet.eval(kind, y - scale * k as f64);
                    v += fv;
                    s += fs;
                }
                (norm * v, norm * scale * s)
            }
        }
    }

    /// Value of basis function `idx` at `point`.
    pub fn eval_basis(&self, idx: &WaveletIndex, point: &[f64]) -> f64 {
        debug_assert!(self.is_valid(idx));
        if self.is_constant(idx.l) {
            return 1.0;
        }
        (0..self.dim).map(|i| self.axis_eval(kind_of(idx.l, i), idx.j, point[i], idx.w[i]).0).product()
    }

    /// Gradient of basis function `idx` at `point`.
    pub fn eval_basis_gradient(&self, idx: &WaveletIndex, point: &[f64]) -> Result<Vec<f64>> {
        if self.wavelet.max_derivative() == 0 {
            return Err(Error::DerivativeUnavailable { order: 1, max: 0 });
        }
        if self.is_constant(idx.l) {
            return Ok(vec![0.0; self.dim]);
        }
        let factors: Vec<(f64, f64)> =
            (0..self.dim).map(|i| self.axis_eval(kind_of(idx.l, i), idx.j, point[i], idx.w[i])).collect();
        Ok((0..self.dim)
            .map(|i| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(k, f)| if k == i { f.1 } else { f.0 })
                    .product()
            })
            .collect())
    }

    /// Indices whose support box `⊗[2^{−j}(w_i − N), 2^{−j}(w_i + N)]` contains `point`.
    ///
    /// Periodic boxes are taken modulo 1. A superset of the indices that are
    /// nonzero at `point`; hot paths use the tighter [`Self::for_each_active`].
    pub fn active_indices(&self, point: &[f64], j: u32) -> Vec<(u32, Translation)> {
        let n = self.wavelet.support_len() as f64;
        let scale = (1u64 << j) as f64;
        let (lo, hi) = self.translation_range(j);
        let per_axis: Vec<Vec<i64>> = point
            .iter()
            .map(|&x| {
                let y = scale * x;
                let a = (y - n).ceil() as i64;
                let b = (y + n).floor() as i64;
                match self.domain {
                    Domain::Ambient { .. } => (a.max(lo)..=b.min(hi)).collect(),
                    Domain::Periodic => {
                        let period = 1i64 << j;
                        if b - a + 1 >= period {
                            (0..period).collect()
                        } else {
                            let mut v: Vec<i64> = (a..=b).map(|z| z.rem_euclid(period)).collect();
                            v.sort_unstable();
                            v
                        }
                    }
                }
            })
            .collect();
        let mut out = Vec::new();
        for l in self.types(j) {
            if self.is_constant(l) {
                out.push((l, std::iter::repeat_n(0, self.dim).collect()));
                continue;
            }
            let mut counters = vec![0usize; self.dim];
            if per_axis.iter().any(|v| v.is_empty()) {
                continue;
            }
            loop {
                out.push((l, (0..self.dim).map(|i| per_axis[i][counters[i]]).collect()));
                let mut axis = 0;
                while axis < self.dim {
                    counters[axis] += 1;
                    if counters[axis] < per_axis[axis].len() {
                        break;
                    }
                    counters[axis] = 0;
                    axis += 1;
                }
                if axis == self.dim {
                    break;
                }
            }
        }
        out
    }

    /// Fill `win` with the translations of one axis whose 1-d factor can be nonzero at `x`.
    pub fn axis_window(&self, kind: AxisKind, j: u32, x: f64, with_slopes: bool, win: &mut AxisWindow) {
        let scale = (1u64 << j) as f64;
        let norm = scale.sqrt();
        let (a, b) = self.wavelet.support(kind);
        match self.domain {
            Domain::Ambient { .. } => {
                let (lo, hi) = self.translation_range(j);
                let y = scale * x;
                let start = ((y - b).ceil() as i64).max(lo);
                let end = ((y - a).floor() as i64).min(hi);
                win.clear(start);
                for w in start..=end {
                    let (v, s) = self.wavelet.eval(kind, y - w as f64);
                    win.values.push(norm * v);
                    if with_slopes {
                        win.slopes.push(norm * scale * s);
                    }
                }
            }
            Domain::Periodic => {
                let period = 1i64 << j;
                if (period as f64) <= b - a {
                    // Short periods: every translation, with the full folding sum.
                    win.clear(0);
                    for z in 0..period {
                        let (v, s) = self.axis_eval(kind, j, x, z);
                        win.values.push(v);
                        if with_slopes {
                            win.slopes.push(s);
                        }
                    }
                } else {
                    let y = scale * (x - x.floor());
                    let start = (y - b).ceil() as i64;
                    let end = (y - a).floor() as i64;
                    win.clear(start);
                    for z in start..=end {
                        let (v, s) = self.wavelet.eval(kind, y - z as f64);
                        win.values.push(norm * v);
                        if with_slopes {
                            win.slopes.push(norm * scale * s);
                        }
                    }
                }
            }
        }
    }

    /// Visit every index at level `j` whose basis function can be nonzero at `point`.
    ///
    /// The visitor receives `(l, w, value, gradient)`; the gradient slice is empty
    /// unless `with_grad`. Periodic translations are reduced modulo `2^j`.
    /// Visiting order is deterministic: types ascending, then translations with
    /// axis 0 varying fastest.
    pub fn for_each_active<F>(&self, point: &[f64], j: u32, with_grad: bool, scratch: &mut Scratch, mut visit: F)
    where
        F: FnMut(u32, &[i64], f64, &[f64]),
    {
        let d = self.dim;
        if scratch.windows.len() < d {
            scratch.windows.resize_with(d, Default::default);
        }
        scratch.w.resize(d, 0);
        scratch.counters.resize(d, 0);
        scratch.grad.resize(if with_grad { d } else { 0 }, 0.0);
        for (i, &x) in point.iter().enumerate() {
            let [phi_win, psi_win] = &mut scratch.windows[i];
            self.axis_window(AxisKind::Scaling, j, x, with_grad, phi_win);
            self.axis_window(AxisKind::Wavelet, j, x, with_grad, psi_win);
        }
        let period = 1i64 << j;
        for l in self.types(j) {
            if self.is_constant(l) {
                scratch.w.iter_mut().for_each(|w| *w = 0);
                scratch.grad.iter_mut().for_each(|g| *g = 0.0);
                visit(l, &scratch.w, 1.0, &scratch.grad);
                continue;
            }
            let wins: SmallVec<[&AxisWindow; 4]> =
                (0..d).map(|i| &scratch.windows[i][(l as usize >> i) & 1]).collect();
            if wins.iter().any(|w| w.is_empty()) {
                continue;
            }
            scratch.counters.iter_mut().for_each(|c| *c = 0);
            loop {
                let mut value = 1.0;
                for i in 0..d {
                    let c = scratch.counters[i];
                    value *= wins[i].values[c];
                    let w = wins[i].start + c as i64;
                    scratch.w[i] = if self.is_periodic() { w.rem_euclid(period) } else { w };
                }
                if with_grad {
                    for i in 0..d {
                        let mut g = wins[i].slopes[scratch.counters[i]];
                        for k in 0..d {
                            if k != i {
                                g *= wins[k].values[scratch.counters[k]];
                            }
                        }
                        scratch.grad[i] = g;
                    }
                }
                visit(l, &scratch.w, value, &scratch.grad);
                let mut axis = 0;
                while axis < d {
                    scratch.counters[axis] += 1;
                    if scratch.counters[axis] < wins[axis].len() {
                        break;
                    }
                    scratch.counters[axis] = 0;
                    axis += 1;
                }
                if axis == d {
                    break;
                }
            }
        }
    }

    /// Every index at levels `0..=max_level` (periodic domain only; ambient sets are unbounded
    /// in practice and are enumerated from data instead).
    pub fn periodic_indices(&self, max_level: u32) -> Vec<WaveletIndex> {
        assert!(self.is_periodic());
        let mut out = Vec::new();
        for j in 0..=max_level {
            let period = 1i64 << j;
            for l in self.types(j) {
                if self.is_constant(l) {
                    out.push(WaveletIndex::new(0, l, &vec![0; self.dim]));
                    continue;
                }
                let total = (period as u64).pow(self.dim as u32);
                for code in 0..total {
                    let mut c = code;
                    let w: Translation = (0..self.dim)
                        .map(|_| {
                            let z = (c % period as u64) as i64;
                            c /= period as u64;
                            z
                        })
                        .collect();
                    out.push(WaveletIndex { j, l, w });
                }
            }
        }
        out
    }
}
