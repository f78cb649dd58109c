//! A Daubechies scaling/wavelet pair ready for evaluation.

use crate::cascade::{cascade_table, default_max_derivative, wavelet_from_scaling, DyadicTable, DEFAULT_GRID_LEVEL};
use crate::error::Result;
use crate::filters::{daubechies_filter, FilterBank};

/// Which 1-d factor an axis of a tensor index uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Scaling,
    Wavelet,
}

/// Filter plus exact dyadic tables of φ and ψ (with derivative tables).
#[derive(Debug, Clone)]
pub struct Wavelet {
    filter: FilterBank,
    phi: DyadicTable,
    psi: DyadicTable,
}

impl Wavelet {
    pub fn new(vanishing_moments: usize, grid_level: u32, max_derivative: usize) -> Result<Self> {
        let filter = daubechies_filter(vanishing_moments)?;
        let phi = cascade_table(&filter, grid_level, max_derivative)?;
        let psi = wavelet_from_scaling(&filter, &phi);
        Ok(Wavelet { filter, phi, psi })
    }

    /// Default grid level, derivative tables as needed for smoothness `beta`.
    pub fn for_smoothness(vanishing_moments: usize, beta: f64) -> Result<Self> {
        let filter = daubechies_filter(vanishing_moments)?;
        let l = default_max_derivative(&filter, beta);
        Self::new(vanishing_moments, DEFAULT_GRID_LEVEL, l)
    }

    pub fn filter(&self) -> &FilterBank {
        &self.filter
    }

    pub fn vanishing_moments(&self) -> usize {
        self.filter.vanishing_moments()
    }

    pub fn grid_level(&self) -> u32 {
        self.phi.grid_level()
    }

    pub fn max_derivative(&self) -> usize {
        self.phi.max_derivative()
    }

    /// Support length `N`.
    pub fn support_len(&self) -> usize {
        self.filter.support_len()
    }

    pub fn phi_table(&self) -> &DyadicTable {
        &self.phi
    }

    pub fn psi_table(&self) -> &DyadicTable {
        &self.psi
    }

    pub fn table(&self, kind: AxisKind) -> &DyadicTable {
        match kind {
            AxisKind::Scaling => &self.phi,
            AxisKind::Wavelet => &self.psi,
        }
    }

    /// Support interval `[a, b]` of the 1-d factor.
    pub fn support(&self, kind: AxisKind) -> (f64, f64) {
        let t = self.table(kind);
        (t.support_start(), t.support_end())
    }

    /// Value and derivative of φ or ψ at `x`.
    #[inline]
    pub fn eval(&self, kind: AxisKind, x: f64) -> (f64, f64) {
        self.table(kind).value_and_slope(x, 0)
    }
}
