use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::grid::{tent_weights, ExteriorExtension, NodeRef, SpaceTimeGrid};
use crate::levy::QuadratureSet;

use super::{RowScratch, SparseRows};

/// Jump operator `K^{α,1}` and driver operator `B^α` for one control value,
/// sharing the sparsity pattern (both are built from the same landing points).
#[derive(Clone, Debug)]
pub struct NonlocalStencil {
    alpha: f64,
    rows: SparseRows,
    kappa: Vec<f64>,
    beta: Vec<f64>,
    self_kappa: Vec<f64>,
    self_beta: Vec<f64>,
    ext_kappa: Vec<f64>,
    ext_beta: Vec<f64>,
    ext_kappa_mass: Vec<f64>,
    ext_beta_mass: Vec<f64>,
    has_beta: bool,
}

/// Per-row weighted means of the exterior extension at the landing points,
/// for one time level.
#[derive(Clone, Debug)]
pub struct ExteriorLoad {
    kappa_mean: Vec<f64>,
    beta_mean: Vec<f64>,
}

struct RowBuild {
    entries: Vec<(usize, f64, f64)>,
    self_k: f64,
    self_b: f64,
    ext: Vec<(f64, f64, f64)>,
}

/// κ_{m,i} = Σ_q w_q ω_m(x_i + η(x_i, e_q)), β likewise with the extra factor γ(x_i, e_q).
///
/// `eta(x, e)` and `gamma(x, e)` are the jump amplitude and driver weight for
/// the fixed control `alpha`.
pub fn build_nonlocal<E, G>(
    quad: &QuadratureSet,
    eta: E,
    gamma: G,
    grid: &SpaceTimeGrid,
    alpha: f64,
    mode: ExecMode,
) -> Result<NonlocalStencil>
where
    E: Fn(f64, f64) -> f64 + Sync + Send,
    G: Fn(f64, f64) -> f64 + Sync + Send,
{
    if quad.nodes.len() != quad.weights.len() {
        return Err(Error::config(
            "quadrature nodes and weights differ in length",
        ));
    }
    if quad
        .points()
        .any(|(e, w)| !(w >= 0.0 && w.is_finite() && e.is_finite()))
    {
        return Err(Error::config(
            "quadrature weights must be finite and nonnegative",
        ));
    }
    let points: Vec<(f64, f64)> = quad.points().filter(|&(_, w)| w > 0.0).collect();
    let n = grid.len();

    let built: Vec<RowBuild> = exec::map_indices_init(
        mode,
        n,
        || RowScratch::new(n),
        |scratch, i| {
            let x = grid.node(i);
            let mut self_k = 0.0;
            let mut self_b = 0.0;
            let mut ext = Vec::new();
            for &(e, w) in &points {
                let jump = eta(x, e);
                let g = gamma(x, e);
                let wb = w * g;
                for (target, om) in tent_weights(x + jump, grid) {
                    match target {
                        NodeRef::Node(m) if m == i => {
                            self_k += w * om;
                            self_b += wb * om;
                        }
                        NodeRef::Node(m) => scratch.add(m, w * om, wb * om),
                        NodeRef::Exterior => ext.push((x + jump, w, wb)),
                    }
                }
            }
            ext.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(ext.len());
            for (l, k, b) in ext {
                match merged.last_mut() {
                    Some(last) if last.0 == l => {
                        last.1 += k;
                        last.2 += b;
                    }
                    _ => merged.push((l, k, b)),
                }
            }
            RowBuild {
                entries: scratch.drain_sorted(),
                self_k,
                self_b,
                ext: merged,
            }
        },
    );

    let mut st = NonlocalStencil {
        alpha,
        rows: SparseRows::with_rows(n),
        kappa: Vec::new(),
        beta: Vec::new(),
        self_kappa: Vec::with_capacity(n),
        self_beta: Vec::with_capacity(n),
        ext_kappa: Vec::new(),
        ext_beta: Vec::new(),
        ext_kappa_mass: Vec::with_capacity(n),
        ext_beta_mass: Vec::with_capacity(n),
        has_beta: false,
    };
    st.rows.row_ptr.push(0);
    st.rows.ext_ptr.push(0);
    for row in built {
        for (m, k, b) in row.entries {
            if k == 0.0 && b == 0.0 {
                continue;
            }
            st.rows.cols.push(m as u32);
            st.kappa.push(k);
            st.beta.push(b);
        }
        let mut km = 0.0;
        let mut bm = 0.0;
        for (l, k, b) in row.ext {
            st.rows.ext_landing.push(l);
            st.ext_kappa.push(k);
            st.ext_beta.push(b);
            km += k;
            bm += b;
        }
        st.rows.row_ptr.push(st.rows.cols.len());
        st.rows.ext_ptr.push(st.rows.ext_landing.len());
        st.self_kappa.push(row.self_k);
        st.self_beta.push(row.self_b);
        st.ext_kappa_mass.push(km);
        st.ext_beta_mass.push(bm);
    }
    st.has_beta = st.beta.iter().chain(&st.ext_beta).any(|&b| b != 0.0);
    Ok(st)
}

/// `Σ c_e v_e / Σ c_e`, computed relative to the first value so that a
/// constant `v` is reproduced bit for bit.
fn weighted_mean(coef: &[f64], values: impl Iterator<Item = f64>, mass: f64) -> f64 {
    let mut reference = None;
    let mut acc = 0.0;
    for (c, v) in coef.iter().zip(values) {
        let r = *reference.get_or_insert(v);
        acc += c * (v - r);
    }
    match reference {
        Some(r) if mass > 0.0 => r + acc / mass,
        _ => 0.0,
    }
}

impl ExteriorLoad {
    /// Largest magnitude among the per-row means.
    pub fn sup_abs(&self) -> f64 {
        self.kappa_mean
            .iter()
            .chain(&self.beta_mean)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl NonlocalStencil {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    /// Stored node entries plus exterior entries.
    pub fn nnz(&self) -> usize {
        self.rows.cols.len() + self.rows.ext_landing.len()
    }

    pub fn has_beta(&self) -> bool {
        self.has_beta
    }

    /// `(target node, κ, β)` for the non-self node entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (self.rows.row_ptr[i]..self.rows.row_ptr[i + 1])
            .map(move |k| (self.rows.cols[k] as usize, self.kappa[k], self.beta[k]))
    }

    /// `(landing point, κ, β)` for jumps of row `i` leaving the grid.
    pub fn exterior_row(&self, i: usize) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (self.rows.ext_ptr[i]..self.rows.ext_ptr[i + 1]).map(move |k| {
            (
                self.rows.ext_landing[k],
                self.ext_kappa[k],
                self.ext_beta[k],
            )
        })
    }

    pub fn self_weights(&self, i: usize) -> (f64, f64) {
        (self.self_kappa[i], self.self_beta[i])
    }

    /// Σ κ over node, self and exterior entries of row `i`.
    pub fn kappa_total(&self, i: usize) -> f64 {
        self.kappa_off_self(i) + self.self_kappa[i]
    }

    /// Σ κ over every entry of row `i` except the self entry.
    pub fn kappa_off_self(&self, i: usize) -> f64 {
        self.row(i).map(|(_, k, _)| k).sum::<f64>() + self.ext_kappa_mass[i]
    }

    pub fn beta_total(&self, i: usize) -> f64 {
        self.beta_off_self(i) + self.self_beta[i]
    }

    pub fn beta_off_self(&self, i: usize) -> f64 {
        self.row(i).map(|(_, _, b)| b).sum::<f64>() + self.ext_beta_mass[i]
    }

    pub fn max_kappa_off_self(&self) -> f64 {
        (0..self.n_rows())
            .map(|i| self.kappa_off_self(i))
            .fold(0.0, f64::max)
    }

    pub fn max_beta_off_self(&self) -> f64 {
        (0..self.n_rows())
            .map(|i| self.beta_off_self(i))
            .fold(0.0, f64::max)
    }

    pub fn exterior_load(&self, ext: &ExteriorExtension, t: f64) -> ExteriorLoad {
        let n = self.n_rows();
        let mut kappa_mean = vec![0.0; n];
        let mut beta_mean = vec![0.0; n];
        for i in 0..n {
            let r = self.rows.ext_ptr[i]..self.rows.ext_ptr[i + 1];
            if r.is_empty() {
                continue;
            }
            let values: Vec<f64> = self.rows.ext_landing[r.clone()]
                .iter()
                .map(|&l| ext.eval(t, l))
                .collect();
            kappa_mean[i] = weighted_mean(
                &self.ext_kappa[r.clone()],
                values.iter().copied(),
                self.ext_kappa_mass[i],
            );
            if self.has_beta {
                beta_mean[i] = weighted_mean(
                    &self.ext_beta[r],
                    values.iter().copied(),
                    self.ext_beta_mass[i],
                );
            }
        }
        ExteriorLoad {
            kappa_mean,
            beta_mean,
        }
    }

    #[inline]
    fn row_apply(&self, i: usize, u: &[f64], coef: &[f64], ext_mass: f64, ext_mean: f64) -> f64 {
        let ui = u[i];
        let mut s = 0.0;
        for k in self.rows.row_ptr[i]..self.rows.row_ptr[i + 1] {
            s += coef[k] * (u[self.rows.cols[k] as usize] - ui);
        }
        if ext_mass > 0.0 {
            s += ext_mass * (ext_mean - ui);
        }
        s
    }

    pub fn apply_k1_row(&self, i: usize, u: &[f64], load: &ExteriorLoad) -> f64 {
        self.row_apply(
            i,
            u,
            &self.kappa,
            self.ext_kappa_mass[i],
            load.kappa_mean[i],
        )
    }

    pub fn apply_b_row(&self, i: usize, u: &[f64], load: &ExteriorLoad) -> f64 {
        if !self.has_beta {
            return 0.0;
        }
        self.row_apply(i, u, &self.beta, self.ext_beta_mass[i], load.beta_mean[i])
    }

    pub fn apply_k1_into(&self, u: &[f64], load: &ExteriorLoad, out: &mut [f64], mode: ExecMode) {
        exec::fill_rows(mode, out, |i| self.apply_k1_row(i, u, load));
    }

    pub fn apply_b_into(&self, u: &[f64], load: &ExteriorLoad, out: &mut [f64], mode: ExecMode) {
        if !self.has_beta {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        exec::fill_rows(mode, out, |i| self.apply_b_row(i, u, load));
    }
}

/// `(K^{α,1}_h U)_i = Σ_m κ_{m,i}[U_m - U_i]`, exterior landings read from `ext` at time `t`.
pub fn apply_k1(st: &NonlocalStencil, u: &[f64], ext: &ExteriorExtension, t: f64) -> Vec<f64> {
    assert_eq!(u.len(), st.n_rows());
    let load = st.exterior_load(ext, t);
    let mut out = vec![0.0; u.len()];
    st.apply_k1_into(u, &load, &mut out, ExecMode::Serial);
    out
}

/// `(B^α_h U)_i = Σ_m β_{m,i}[U_m - U_i]`.
pub fn apply_b(st: &NonlocalStencil, u: &[f64], ext: &ExteriorExtension, t: f64) -> Vec<f64> {
    assert_eq!(u.len(), st.n_rows());
    let load = st.exterior_load(ext, t);
    let mut out = vec![0.0; u.len()];
    st.apply_b_into(u, &load, &mut out, ExecMode::Serial);
    out
}
