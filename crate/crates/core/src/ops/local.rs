use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};
use crate::grid::{tent_weights, ExteriorExtension, NodeRef, SpaceTimeGrid};

use super::{check_len, RowScratch, SparseRows};

/// Semi-Lagrangian stencil for `½σ̃²∂²_x + b̃∂_x`.
///
/// Row `i` interpolates at `x_i ± k σ̃(x_i)` (weight `1/(2k²)` each) and at
/// `x_i + k² b̃(x_i)` (weight `1/k²`).
#[derive(Clone, Debug)]
pub struct LocalStencil {
    k_sl: f64,
    rows: SparseRows,
    d: Vec<f64>,
    self_d: Vec<f64>,
    ext_d: Vec<f64>,
    sigma_tilde: Vec<f64>,
    b_tilde: Vec<f64>,
}

pub fn build_local(
    sigma_tilde: &[f64],
    b_tilde: &[f64],
    grid: &SpaceTimeGrid,
    k_sl: f64,
) -> Result<LocalStencil> {
    if !(k_sl > 0.0 && k_sl.is_finite()) {
        return Err(Error::config(format!(
            "semi-Lagrangian step must be positive, got {k_sl}"
        )));
    }
    check_len(sigma_tilde, grid);
    check_len(b_tilde, grid);
    let n = grid.len();
    let k2 = k_sl * k_sl;
    let mut st = LocalStencil {
        k_sl,
        rows: SparseRows::with_rows(n),
        d: Vec::new(),
        self_d: Vec::with_capacity(n),
        ext_d: Vec::new(),
        sigma_tilde: sigma_tilde.to_vec(),
        b_tilde: b_tilde.to_vec(),
    };
    st.rows.row_ptr.push(0);
    st.rows.ext_ptr.push(0);
    let mut scratch = RowScratch::new(n);
    for i in 0..n {
        let x = grid.node(i);
        let s = sigma_tilde[i];
        let b = b_tilde[i];
        if !(s.is_finite() && b.is_finite()) {
            return Err(Error::config(format!("non-finite coefficients at x = {x}")));
        }
        let mut self_w = 0.0;
        let mut ext: Vec<(f64, f64)> = Vec::new();
        let displaced = [
            (x + k_sl * s, 0.5 / k2),
            (x - k_sl * s, 0.5 / k2),
            (x + k2 * b, 1.0 / k2),
        ];
        for (p, factor) in displaced {
            for (target, om) in tent_weights(p, grid) {
                match target {
                    NodeRef::Node(m) if m == i => self_w += factor * om,
                    NodeRef::Node(m) => scratch.add(m, factor * om, 0.0),
                    NodeRef::Exterior => ext.push((p, factor * om)),
                }
            }
        }
        for (m, w, _) in scratch.drain_sorted() {
            if w != 0.0 {
                st.rows.cols.push(m as u32);
                st.d.push(w);
            }
        }
        for (p, w) in ext {
            st.rows.ext_landing.push(p);
            st.ext_d.push(w);
        }
        st.rows.row_ptr.push(st.rows.cols.len());
        st.rows.ext_ptr.push(st.rows.ext_landing.len());
        st.self_d.push(self_w);
    }
    Ok(st)
}

impl LocalStencil {
    pub fn k_sl(&self) -> f64 {
        self.k_sl
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn sigma_tilde(&self) -> &[f64] {
        &self.sigma_tilde
    }

    pub fn b_tilde(&self) -> &[f64] {
        &self.b_tilde
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.rows.row_ptr[i]..self.rows.row_ptr[i + 1])
            .map(move |k| (self.rows.cols[k] as usize, self.d[k]))
    }

    pub fn exterior_row(&self, i: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        (self.rows.ext_ptr[i]..self.rows.ext_ptr[i + 1])
            .map(move |k| (self.rows.ext_landing[k], self.ext_d[k]))
    }

    /// Every landing point outside the grid, over all rows.
    pub fn exterior_landings(&self) -> &[f64] {
        &self.rows.ext_landing
    }

    pub fn self_weight(&self, i: usize) -> f64 {
        self.self_d[i]
    }

    /// Σ d over all entries of row `i` (self and exterior included).
    pub fn d_total(&self, i: usize) -> f64 {
        self.row(i).map(|(_, d)| d).sum::<f64>()
            + self.exterior_row(i).map(|(_, d)| d).sum::<f64>()
            + self.self_d[i]
    }

    pub fn apply_row(&self, i: usize, u: &[f64], ext: &ExteriorExtension, t: f64) -> f64 {
        let ui = u[i];
        let mut s = 0.0;
        for (m, d) in self.row(i) {
            s += d * (u[m] - ui);
        }
        for (p, d) in self.exterior_row(i) {
            s += d * (ext.eval(t, p) - ui);
        }
        s
    }

    /// Assembles and factors `I - Δt·A` on the interior nodes `1..N-1`.
    ///
    /// Couplings to the two boundary nodes and to exterior points are left out;
    /// [`LocalStencil::dirichlet_rhs`] supplies them.
    pub fn implicit_system(&self, dt: f64, grid: &SpaceTimeGrid) -> Result<BandedLu> {
        let n_int = grid.len() - 2;
        let (mut lower, mut upper) = (0usize, 0usize);
        for i in 1..=n_int {
            for (m, _) in self.row(i) {
                if (1..=n_int).contains(&m) {
                    lower = lower.max(i.saturating_sub(m));
                    upper = upper.max(m.saturating_sub(i));
                }
            }
        }
        let mut mat = BandedMatrix::zeros(n_int, lower, upper);
        for i in 1..=n_int {
            let r = i - 1;
            let mut diag = 1.0;
            for (m, d) in self.row(i) {
                diag += dt * d;
                if (1..=n_int).contains(&m) {
                    mat.add(r, m - 1, -dt * d);
                }
            }
            for (_, d) in self.exterior_row(i) {
                diag += dt * d;
            }
            mat.add(r, r, diag);
        }
        mat.factor()
    }

    /// `Δt·Σ d·value` over boundary-node and exterior targets of interior row `i`.
    pub fn dirichlet_rhs(
        &self,
        i: usize,
        u_boundary: (f64, f64),
        dt: f64,
        ext: &ExteriorExtension,
        t: f64,
        grid: &SpaceTimeGrid,
    ) -> f64 {
        let last = grid.last();
        let mut s = 0.0;
        for (m, d) in self.row(i) {
            if m == 0 {
                s += d * u_boundary.0;
            } else if m == last {
                s += d * u_boundary.1;
            }
        }
        for (p, d) in self.exterior_row(i) {
            s += d * ext.eval(t, p);
        }
        dt * s
    }
}

/// `(A_h U)_i = Σ_m d_{m,i}[U_m - U_i]`.
pub fn apply_a(st: &LocalStencil, u: &[f64], ext: &ExteriorExtension, t: f64) -> Vec<f64> {
    assert_eq!(u.len(), st.n_rows());
    (0..u.len()).map(|i| st.apply_row(i, u, ext, t)).collect()
}
