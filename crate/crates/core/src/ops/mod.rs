//! Monotone discrete operators.
//!
//! Every operator is stored in difference form: row `i` holds nonnegative
//! weights `c_m` and applies as `Σ_m c_m (U_m - U_i)`. Weight that lands on
//! node `i` itself is kept separately (it cancels) so that mass identities can
//! still be checked. Targets outside the grid carry their exact landing point
//! and are evaluated through the exterior extension.

mod flux;
mod local;
mod nonlocal;

pub use flux::{lf_flux, FluxParams};
pub use local::{apply_a, build_local, LocalStencil};
pub use nonlocal::{apply_b, apply_k1, build_nonlocal, ExteriorLoad, NonlocalStencil};

use crate::grid::SpaceTimeGrid;

/// Compressed sparse rows with an interior part (node targets) and an exterior
/// part (landing points outside the grid).
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseRows {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub ext_ptr: Vec<usize>,
    pub ext_landing: Vec<f64>,
}

impl SparseRows {
    pub fn with_rows(n: usize) -> Self {
        SparseRows {
            row_ptr: Vec::with_capacity(n + 1),
            cols: Vec::new(),
            ext_ptr: Vec::with_capacity(n + 1),
            ext_landing: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len().saturating_sub(1)
    }
}

/// Dense per-row accumulator reused across rows.
pub(crate) struct RowScratch {
    pub acc: Vec<f64>,
    pub acc2: Vec<f64>,
    pub touched: Vec<usize>,
}

impl RowScratch {
    pub fn new(n: usize) -> Self {
        RowScratch {
            acc: vec![0.0; n],
            acc2: vec![0.0; n],
            touched: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, m: usize, a: f64, b: f64) {
        if self.acc[m] == 0.0 && self.acc2[m] == 0.0 {
            self.touched.push(m);
        }
        self.acc[m] += a;
        self.acc2[m] += b;
    }

    /// Drains touched entries in ascending node order.
    pub fn drain_sorted(&mut self) -> Vec<(usize, f64, f64)> {
        self.touched.sort_unstable();
        self.touched.dedup();
        let out = self
            .touched
            .iter()
            .map(|&m| (m, self.acc[m], self.acc2[m]))
            .collect();
        for &m in &self.touched {
            self.acc[m] = 0.0;
            self.acc2[m] = 0.0;
        }
        self.touched.clear();
        out
    }
}

pub(crate) fn check_len(u: &[f64], grid: &SpaceTimeGrid) {
    assert_eq!(u.len(), grid.len(), "node array does not match the grid");
}
