//! Switching-system time marching with piecewise constant policies.
//!
//! Each step first enforces the obstacle and switching constraints nodewise,
//! then advances every component by one fully implicit step. The implicit step
//! is the fixed point of a map that only needs a banded solve with the local
//! operator; jumps and the driver are handled explicitly inside the map.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::grid::SpaceTimeGrid;
use crate::levy::{build_quadrature, LevyMeasure};
use crate::model::{ControlGrid, ProblemSpec};
use crate::ops::{
    build_local, build_nonlocal, lf_flux, ExteriorLoad, FluxParams, LocalStencil, NonlocalStencil,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    pub h: f64,
    pub dt: f64,
    /// Semi-Lagrangian step; `√h` when absent.
    #[serde(default)]
    pub k_sl: Option<f64>,
    /// Jump truncation level.
    pub epsilon: f64,
    /// Lax–Friedrichs viscosity.
    pub theta: f64,
    /// Switching cost.
    pub cost: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    #[serde(default)]
    pub record_policy: bool,
    #[serde(default = "default_true")]
    pub parallel_components: bool,
    /// Store all components every this many steps (0: final slice only).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Evaluate the scheme residual after every step.
    #[serde(default)]
    pub check_residual: bool,
}

fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max() -> usize {
    200
}
fn default_true() -> bool {
    true
}

impl SchemeParams {
    /// Reference scheme: `ε = h`, `Δt = h/15`, `θ = 1/40`.
    pub fn reference(h: f64, cost: f64) -> Self {
        SchemeParams {
            h,
            dt: h / 15.0,
            k_sl: None,
            epsilon: h,
            theta: 1.0 / 40.0,
            cost,
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
            record_policy: false,
            parallel_components: true,
            snapshot_every: 0,
            check_residual: false,
        }
    }

    pub fn k_sl(&self) -> f64 {
        self.k_sl.unwrap_or_else(|| self.h.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        pos(self.h, "h")?;
        pos(self.dt, "dt")?;
        pos(self.epsilon, "epsilon")?;
        pos(self.cost, "cost")?;
        pos(self.picard_tol, "picard_tol")?;
        pos(self.k_sl(), "k_sl")?;
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::config(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        if self.picard_max == 0 {
            return Err(Error::config("picard_max must be at least 1"));
        }
        Ok(())
    }
}

/// Per-control operators, built once.
#[derive(Clone, Debug)]
struct Component {
    alpha: f64,
    local: LocalStencil,
    lu: BandedLu,
    nonlocal: NonlocalStencil,
    ext_sup: f64,
    load: Option<ExteriorLoad>,
}

/// A problem discretized on one grid for one control set.
#[derive(Clone, Debug)]
pub struct Discretization {
    spec: ProblemSpec,
    controls: ControlGrid,
    params: SchemeParams,
    grid: SpaceTimeGrid,
    flux: FluxParams,
    comps: Vec<Component>,
    c_p: f64,
    contraction_bound: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PicardStats {
    pub iterations: usize,
    /// Largest ratio of successive increments seen above rounding level.
    pub max_ratio: f64,
    pub last_increment: f64,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, controls: &ControlGrid, params: &SchemeParams) -> Result<Self> {
        params.validate()?;
        if controls.is_empty() {
            return Err(Error::config("control grid is empty"));
        }
        let (a_lo, a_hi) = spec.control_interval;
        if controls.values().iter().any(|&a| a < a_lo || a > a_hi) {
            return Err(Error::config(
                "control values lie outside the control interval",
            ));
        }
        let grid = SpaceTimeGrid::new(
            spec.domain.0,
            spec.domain.1,
            params.h,
            spec.horizon,
            params.dt,
        )?;
        spec.validate_on(&grid)?;
        let nu: LevyMeasure = spec.measure.with_epsilon(params.epsilon)?;
        let quad = build_quadrature(&nu)?;
        let mode = ExecMode::from_flag(params.parallel_components);
        let k_sl = params.k_sl();

        let built: Vec<Result<Component>> = exec::map_indices(mode, controls.len(), |j| {
            let alpha = controls.values()[j];
            let (sig, drift) = spec.modified_coefficients(alpha, &grid, &nu)?;
            let local = build_local(&sig, &drift, &grid, k_sl)?;
            let lu = local.implicit_system(params.dt, &grid)?;
            let jump = &spec.jump_amplitude;
            let weight = &spec.driver_weight;
            let nonlocal = build_nonlocal(
                &quad,
                |x, e| jump(alpha, x, e),
                |x, e| weight(x, e),
                &grid,
                alpha,
                ExecMode::Serial,
            )?;
            let ext = &spec.extension;
            let load = ext
                .is_time_homogeneous()
                .then(|| nonlocal.exterior_load(ext, 0.0));
            let ext_sup = if ext.is_time_homogeneous() {
                local
                    .exterior_landings()
                    .iter()
                    .map(|&p| ext.eval(0.0, p).abs())
                    .fold(load.as_ref().map_or(0.0, |l| l.sup_abs()), f64::max)
            } else {
                0.0
            };
            Ok(Component {
                alpha,
                local,
                lu,
                nonlocal,
                ext_sup,
                load,
            })
        });
        let comps = built.into_iter().collect::<Result<Vec<_>>>()?;

        let sig_max = comps
            .iter()
            .flat_map(|c| c.local.sigma_tilde().iter())
            .fold(0.0f64, |m, s| m.max(s.abs()));
        let c_p = spec.constants.lip_z * sig_max;
        let flux = FluxParams::new(params.theta, params.dt, params.h);
        if !flux.is_monotone_for(c_p) {
            return Err(Error::config(format!(
                "Lax-Friedrichs flux is not monotone: theta = {} must exceed C_p * dt/h = {}",
                params.theta,
                c_p * flux.lambda
            )));
        }
        let k_sum = comps
            .iter()
            .map(|c| c.nonlocal.max_kappa_off_self())
            .fold(0.0, f64::max);
        let b_sum = comps
            .iter()
            .map(|c| c.nonlocal.max_beta_off_self())
            .fold(0.0, f64::max);
        let consts = spec.constants;
        let contraction_bound = params.dt
            * (2.0 * k_sum + consts.lip_y.abs() + 2.0 * consts.lip_k.abs() * b_sum)
            + 4.0 * params.theta;
        if contraction_bound >= 1.0 {
            return Err(Error::config(format!(
                "fixed-point map is not a contraction (bound {contraction_bound:.4}); reduce dt or theta"
            )));
        }
        Ok(Discretization {
            spec: spec.clone(),
            controls: controls.clone(),
            params: params.clone(),
            grid,
            flux,
            comps,
            c_p,
            contraction_bound,
        })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }
    pub fn controls(&self) -> &ControlGrid {
        &self.controls
    }
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }
    /// Gradient Lipschitz constant of the driver used in the flux check.
    pub fn c_p(&self) -> f64 {
        self.c_p
    }
    /// A priori Lipschitz bound of the fixed-point map in the sup norm.
    pub fn contraction_bound(&self) -> f64 {
        self.contraction_bound
    }
    pub fn local_stencil(&self, j: usize) -> &LocalStencil {
        &self.comps[j].local
    }
    pub fn nonlocal_stencil(&self, j: usize) -> &NonlocalStencil {
        &self.comps[j].nonlocal
    }

    fn component_mode(&self) -> ExecMode {
        ExecMode::from_flag(self.params.parallel_components)
    }

    /// Rows are split across threads only when there is a single component.
    fn row_mode(&self) -> ExecMode {
        if self.comps.len() == 1 {
            self.component_mode()
        } else {
            ExecMode::Serial
        }
    }

    fn load(&self, j: usize, t: f64) -> std::borrow::Cow<'_, ExteriorLoad> {
        match &self.comps[j].load {
            Some(l) => std::borrow::Cow::Borrowed(l),
            None => std::borrow::Cow::Owned(
                self.comps[j]
                    .nonlocal
                    .exterior_load(&self.spec.extension, t),
            ),
        }
    }

    fn boundary_values(&self, t: f64) -> (f64, f64) {
        let ext = &self.spec.extension;
        (ext.eval(t, self.grid.x_lo()), ext.eval(t, self.grid.x_hi()))
    }

    /// Nodal obstacle `ζ(t, x_i)`.
    pub fn obstacle_at(&self, t: f64) -> Vec<f64> {
        self.grid
            .nodes()
            .into_iter()
            .map(|x| (self.spec.obstacle)(t, x))
            .collect()
    }

    /// Initial data `U⁰_j = g` for every component.
    pub fn initial_state(&self) -> Vec<Vec<f64>> {
        let g: Vec<f64> = self
            .grid
            .nodes()
            .into_iter()
            .map(|x| (self.spec.payoff)(x))
            .collect();
        vec![g; self.comps.len()]
    }

    fn dirichlet(&self, j: usize, bnd: (f64, f64), t: f64) -> Vec<f64> {
        let c = &self.comps[j];
        (1..self.grid.last())
            .map(|i| {
                c.local
                    .dirichlet_rhs(i, bnd, self.params.dt, &self.spec.extension, t, &self.grid)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn map_into(
        &self,
        j: usize,
        guess: &[f64],
        half: &[f64],
        t: f64,
        load: &ExteriorLoad,
        dirichlet: &[f64],
        bnd: (f64, f64),
        out: &mut [f64],
    ) {
        let c = &self.comps[j];
        let dt = self.params.dt;
        let sig = c.local.sigma_tilde();
        let driver = &*self.spec.driver;
        let last = self.grid.last();
        let grid = &self.grid;
        let flux = &self.flux;
        exec::fill_rows(self.row_mode(), &mut out[1..last], |r| {
            let i = r + 1;
            let k1 = c.nonlocal.apply_k1_row(i, guess, load);
            let kb = c.nonlocal.apply_b_row(i, guess, load);
            let nb = [guess[i - 1], guess[i], guess[i + 1]];
            let f = lf_flux(
                driver,
                c.alpha,
                t,
                grid.node(i),
                guess[i],
                nb,
                kb,
                sig[i],
                flux,
            );
            dt * (k1 + f) + half[i] + dirichlet[r]
        });
        c.lu.solve_in_place(&mut out[1..last]);
        out[0] = bnd.0;
        out[last] = bnd.1;
    }

    /// One application of the fixed-point map for component `j` at time `t`.
    pub fn picard_map(&self, j: usize, guess: &[f64], half: &[f64], t: f64) -> Vec<f64> {
        let bnd = self.boundary_values(t);
        let dir = self.dirichlet(j, bnd, t);
        let load = self.load(j, t);
        let mut out = vec![0.0; self.grid.len()];
        self.map_into(j, guess, half, t, &load, &dir, bnd, &mut out);
        out
    }

    /// Iterates the fixed-point map from `half` until the sup-norm increment
    /// drops below `picard_tol`.
    pub fn implicit_step(&self, j: usize, half: &[f64], t: f64) -> Result<(Vec<f64>, PicardStats)> {
        self.implicit_step_capped(j, half, t, self.params.picard_max, false)
    }

    fn implicit_step_capped(
        &self,
        j: usize,
        half: &[f64],
        t: f64,
        max_iter: usize,
        allow_unconverged: bool,
    ) -> Result<(Vec<f64>, PicardStats)> {
        let bnd = self.boundary_values(t);
        let dir = self.dirichlet(j, bnd, t);
        let load = self.load(j, t);
        let mut cur = half.to_vec();
        cur[0] = bnd.0;
        let last = self.grid.last();
        cur[last] = bnd.1;
        let mut next = vec![0.0; cur.len()];
        let mut stats = PicardStats::default();
        let mut prev_inc = f64::NAN;
        let tol = self.params.picard_tol;
        loop {
            self.map_into(j, &cur, half, t, &load, &dir, bnd, &mut next);
            stats.iterations += 1;
            let (inc, scale) = cur
                .iter()
                .zip(&next)
                .fold((0.0f64, 0.0f64), |(d, s), (a, b)| {
                    (d.max((a - b).abs()), s.max(b.abs()))
                });
            if !inc.is_finite() {
                return Err(Error::PicardDivergence {
                    iterations: stats.iterations,
                    last_increment: inc,
                    ratio: stats.max_ratio,
                });
            }
            if prev_inc > 1e-13 * scale.max(1.0) {
                stats.max_ratio = stats.max_ratio.max(inc / prev_inc);
            }
            stats.last_increment = inc;
            std::mem::swap(&mut cur, &mut next);
            let threshold = if scale > 10.0 { tol * scale } else { tol };
            if inc < threshold {
                return Ok((cur, stats));
            }
            if stats.iterations >= max_iter {
                if allow_unconverged {
                    return Ok((cur, stats));
                }
                return Err(Error::PicardDivergence {
                    iterations: stats.iterations,
                    last_increment: inc,
                    ratio: stats.max_ratio,
                });
            }
            prev_inc = inc;
        }
    }

    /// `U - Δt(A U + K U + f̃[U])` at the interior nodes of component `j`.
    fn implicit_operator(&self, j: usize, u: &[f64], t: f64) -> Vec<f64> {
        let c = &self.comps[j];
        let load = self.load(j, t);
        let ext = &self.spec.extension;
        let dt = self.params.dt;
        let sig = c.local.sigma_tilde();
        (1..self.grid.last())
            .map(|i| {
                let a = c.local.apply_row(i, u, ext, t);
                let k1 = c.nonlocal.apply_k1_row(i, u, &load);
                let kb = c.nonlocal.apply_b_row(i, u, &load);
                let nb = [u[i - 1], u[i], u[i + 1]];
                let f = lf_flux(
                    &*self.spec.driver,
                    c.alpha,
                    t,
                    self.grid.node(i),
                    u[i],
                    nb,
                    kb,
                    sig[i],
                    &self.flux,
                );
                u[i] - dt * (a + k1 + f)
            })
            .collect()
    }

    /// Residual of the min-form scheme at interior nodes of component `j`,
    /// with `u_next` the computed step-`n+1` values and `prev` all components at
    /// step `n`. The time-derivative branch is scaled by `Δt`.
    pub fn scheme_residual(
        &self,
        j: usize,
        u_next: &[f64],
        prev: &[Vec<f64>],
        t_next: f64,
    ) -> Vec<f64> {
        let x_op = self.implicit_operator(j, u_next, t_next);
        let cost = self.params.cost;
        x_op.iter()
            .enumerate()
            .map(|(r, &x)| {
                let i = r + 1;
                let zeta = (self.spec.obstacle)(t_next, self.grid.node(i));
                let switch = prev
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, u)| u[i] - cost)
                    .fold(f64::NEG_INFINITY, f64::max);
                (x - zeta).min(x - prev[j][i]).min(x - switch)
            })
            .collect()
    }

    /// Like [`Discretization::implicit_step`] but stops after `max_iter` maps
    /// whether or not the increment is small.
    pub fn truncated_implicit_step(
        &self,
        j: usize,
        half: &[f64],
        t: f64,
        max_iter: usize,
    ) -> Vec<f64> {
        self.implicit_step_capped(j, half, t, max_iter.max(1), true)
            .map(|(u, _)| u)
            .unwrap_or_else(|_| vec![f64::NAN; half.len()])
    }

    /// Runs all steps from `initial` (one array per component).
    pub fn run_from(&self, initial: Vec<Vec<f64>>) -> Result<SolveResult> {
        let start = Instant::now();
        let j_count = self.comps.len();
        let n_len = self.grid.len();
        if initial.len() != j_count || initial.iter().any(|u| u.len() != n_len) {
            return Err(Error::config(
                "initial data do not match the discretization",
            ));
        }
        let p = &self.params;
        let mut u = initial;
        let mut zeta = self.obstacle_at(0.0);

        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let c_mono = self.spec.constants.monotonicity;
        if !(1.0 + p.dt * c_mono > 0.0) {
            return Err(Error::config(
                "dt too large for the declared driver monotonicity",
            ));
        }
        let static_ext = self.comps.iter().map(|c| c.ext_sup).fold(0.0, f64::max);
        let b0 = self.boundary_values(0.0);
        let mut data_sup = sup(&zeta).max(static_ext).max(b0.0.abs()).max(b0.1.abs());
        let mut f0_sup = 0.0f64;
        let mut a_n = u.iter().map(|v| sup(v)).fold(data_sup, f64::max);

        let mut stats = SolveStats {
            n_steps: self.grid.n_steps(),
            contraction_bound: self.contraction_bound,
            c_p: self.c_p,
            stability_bound: a_n,
            max_stability_excess: u.iter().map(|v| sup(v)).fold(f64::NEG_INFINITY, f64::max) - a_n,
            ..SolveStats::default()
        };

        let mut policy = p.record_policy.then(|| PolicyField {
            times: Vec::new(),
            alpha: Vec::new(),
            stopped: Vec::new(),
        });
        let record = |pol: &mut Option<PolicyField>, n: usize, u: &[Vec<f64>], z: &[f64]| {
            if let Some(pf) = pol {
                let (a, s) = extract_policy(u, z, &self.controls);
                pf.times.push(self.grid.time(n));
                pf.alpha.push(a);
                pf.stopped.push(s);
            }
        };
        record(&mut policy, 0, &u, &zeta);

        let mut snapshots = Vec::new();
        if p.snapshot_every > 0 {
            snapshots.push(Snapshot {
                step: 0,
                t: 0.0,
                values: u.clone(),
            });
        }

        let mode = self.component_mode();
        let x_nodes = self.grid.nodes();
        for n in 0..self.grid.n_steps() {
            let t_next = self.grid.time(n + 1);
            let zeta_next = self.obstacle_at(t_next);
            let halves = switching_step(&u, &zeta_next, p.cost);
            let outcomes: Vec<Result<(Vec<f64>, PicardStats, f64)>> =
                exec::map_indices(mode, j_count, |j| {
                    let (v, st) =
                        self.implicit_step(j, &halves[j], t_next)
                            .map_err(|e| Error::Step {
                                step: n + 1,
                                component: j,
                                source: Box::new(e),
                            })?;
                    let alpha = self.comps[j].alpha;
                    let f0 = x_nodes
                        .iter()
                        .map(|&x| self.spec.driver.eval(alpha, t_next, x, 0.0, 0.0, 0.0).abs())
                        .fold(0.0, f64::max);
                    Ok((v, st, f0))
                });
            let mut next = Vec::with_capacity(j_count);
            for o in outcomes {
                let (v, st, f0) = o?;
                stats.picard_total += st.iterations as u64;
                stats.picard_max = stats.picard_max.max(st.iterations);
                stats.max_contraction_ratio = stats.max_contraction_ratio.max(st.max_ratio);
                f0_sup = f0_sup.max(f0);
                next.push(v);
            }

            if p.check_residual {
                let res = exec::map_indices(mode, j_count, |j| {
                    sup(&self.scheme_residual(j, &next[j], &u, t_next))
                });
                let worst = res.into_iter().fold(0.0, f64::max);
                stats.max_residual = Some(stats.max_residual.unwrap_or(0.0).max(worst));
            }

            let bnd = self.boundary_values(t_next);
            let mut ext_sup = bnd.0.abs().max(bnd.1.abs());
            if !self.spec.extension.is_time_homogeneous() {
                for (j, c) in self.comps.iter().enumerate() {
                    let load = self.load(j, t_next);
                    ext_sup = c
                        .local
                        .exterior_landings()
                        .iter()
                        .map(|&q| self.spec.extension.eval(t_next, q).abs())
                        .fold(ext_sup.max(load.sup_abs()), f64::max);
                }
            }
            data_sup = data_sup.max(sup(&zeta_next)).max(ext_sup);
            let c1 = c_mono.max(0.0) * data_sup + f0_sup;
            a_n = a_n / (1.0 + p.dt * c_mono) + p.dt * c1;
            a_n = a_n.max(data_sup);
            let norm = next.iter().map(|v| sup(v)).fold(0.0, f64::max);
            stats.max_stability_excess = stats.max_stability_excess.max(norm - a_n);
            stats.stability_bound = a_n;

            u = next;
            zeta = zeta_next;
            record(&mut policy, n + 1, &u, &zeta);
            if p.snapshot_every > 0
                && ((n + 1) % p.snapshot_every == 0 || n + 1 == self.grid.n_steps())
            {
                snapshots.push(Snapshot {
                    step: n + 1,
                    t: t_next,
                    values: u.clone(),
                });
            }
        }
        let solves = (self.grid.n_steps() * j_count).max(1);
        stats.picard_mean = stats.picard_total as f64 / solves as f64;
        stats.wall_time = start.elapsed();
        Ok(SolveResult {
            grid: self.grid.clone(),
            controls: self.controls.clone(),
            x0: self.spec.x0,
            values: u,
            final_obstacle: zeta,
            policy,
            snapshots,
            stats,
        })
    }

    pub fn run(&self) -> Result<SolveResult> {
        self.run_from(self.initial_state())
    }
}

/// `U^{n+½}_j = max(ζ^{n+1}, U^n_j, max_{k≠j}(U^n_k - c))` at every node.
pub fn switching_step(u: &[Vec<f64>], zeta_next: &[f64], cost: f64) -> Vec<Vec<f64>> {
    let j_count = u.len();
    let n = zeta_next.len();
    let mut out = vec![vec![0.0; n]; j_count];
    for i in 0..n {
        // top two values across components give max over k ≠ j in O(J)
        let (mut best, mut best_k, mut second) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
        for (k, uk) in u.iter().enumerate() {
            let v = uk[i];
            if v > best {
                second = best;
                best = v;
                best_k = k;
            } else if v > second {
                second = v;
            }
        }
        for j in 0..j_count {
            let other = if j == best_k { second } else { best };
            out[j][i] = zeta_next[i].max(u[j][i]).max(other - cost);
        }
    }
    out
}

/// Policy `α_{argmax_k U_k}` (ties to the lowest index) and stopping flags
/// `max_k U_k ≤ ζ` at every node.
pub fn extract_policy(
    u: &[Vec<f64>],
    zeta: &[f64],
    controls: &ControlGrid,
) -> (Vec<f64>, Vec<bool>) {
    let mut alpha = Vec::with_capacity(zeta.len());
    let mut stopped = Vec::with_capacity(zeta.len());
    for (i, &z) in zeta.iter().enumerate() {
        let mut best = 0;
        for k in 1..u.len() {
            if u[k][i] > u[best][i] {
                best = k;
            }
        }
        alpha.push(controls.values()[best]);
        stopped.push(u[best][i] <= z);
    }
    (alpha, stopped)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub n_steps: usize,
    pub picard_total: u64,
    pub picard_max: usize,
    pub picard_mean: f64,
    pub max_contraction_ratio: f64,
    pub contraction_bound: f64,
    pub c_p: f64,
    /// Final value of the sup-norm stability recursion.
    pub stability_bound: f64,
    /// Largest `‖Uⁿ‖ - aₙ` over all steps; nonpositive when the bound holds.
    pub max_stability_excess: f64,
    pub max_residual: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyField {
    pub times: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub stopped: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub grid: SpaceTimeGrid,
    pub controls: ControlGrid,
    pub x0: f64,
    /// Final arrays, one per component.
    pub values: Vec<Vec<f64>>,
    pub final_obstacle: Vec<f64>,
    pub policy: Option<PolicyField>,
    pub snapshots: Vec<Snapshot>,
    pub stats: SolveStats,
}

fn sample(u: &[f64], grid: &SpaceTimeGrid, x: f64) -> Option<f64> {
    if let Some(i) = grid.index_of(x) {
        return Some(u[i]);
    }
    if !(x > grid.x_lo() && x < grid.x_hi()) {
        return None;
    }
    let s = (x - grid.x_lo()) / grid.h();
    let i = (s.floor() as usize).min(grid.last() - 1);
    let w = s - i as f64;
    Some((1.0 - w) * u[i] + w * u[i + 1])
}

impl SolveResult {
    /// Final-time value of component `j` at `x`; linear interpolation off-grid.
    pub fn value(&self, j: usize, x: f64) -> Option<f64> {
        sample(self.values.get(j)?, &self.grid, x)
    }

    /// Final-time value of the last component at the report point.
    pub fn reported_value(&self) -> Option<f64> {
        self.value(self.values.len() - 1, self.x0)
    }

    /// Value of component `j` at `(t, x)` from the stored snapshots.
    pub fn value_at(&self, j: usize, t: f64, x: f64) -> Option<f64> {
        let tol = 1e-9 * self.grid.dt();
        if (t - self.grid.horizon()).abs() <= tol {
            return self.value(j, x);
        }
        let snap = self.snapshots.iter().find(|s| (s.t - t).abs() <= tol)?;
        sample(snap.values.get(j)?, &self.grid, x)
    }

    /// Final-time policy and stopping mask.
    pub fn final_policy(&self) -> (Vec<f64>, Vec<bool>) {
        extract_policy(&self.values, &self.final_obstacle, &self.controls)
    }
}

/// Discretizes and runs the switching scheme.
pub fn solve(
    spec: &ProblemSpec,
    controls: &ControlGrid,
    params: &SchemeParams,
) -> Result<SolveResult> {
    Discretization::new(spec, controls, params)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize_controls, linear_ode_spec, LinearOdeParams};
    use approx::assert_relative_eq;

    #[test]
    fn switching_examples() {
        let u = vec![vec![0.4], vec![0.47]];
        assert_eq!(switching_step(&u, &[0.5], 0.02)[0][0], 0.5);
        assert_relative_eq!(
            switching_step(&u, &[0.1], 0.02)[0][0],
            0.45,
            epsilon = 1e-15
        );
        assert_eq!(switching_step(&u, &[0.1], 0.02)[1][0], 0.47);
        let single = vec![vec![0.4, -1.0]];
        assert_eq!(
            switching_step(&single, &[0.3, -0.5], 0.01),
            vec![vec![0.4, -0.5]]
        );
    }

    #[test]
    fn switching_with_ties() {
        let u = vec![vec![0.6], vec![0.6], vec![0.1]];
        let out = switching_step(&u, &[0.0], 0.1);
        assert_eq!(out[0][0], 0.6);
        assert_eq!(out[1][0], 0.6);
        assert_relative_eq!(out[2][0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn policy_examples() {
        let controls = discretize_controls((0.0, 1.0), 2).unwrap();
        let (a, s) = extract_policy(&[vec![0.3], vec![0.5]], &[0.2], &controls);
        assert_eq!((a[0], s[0]), (1.0, false));
        let (a, s) = extract_policy(&[vec![0.2], vec![0.2]], &[0.2], &controls);
        assert_eq!((a[0], s[0]), (0.0, true));
    }

    fn ode(g0: f64, c0: f64, beta: f64, zeta: f64) -> ProblemSpec {
        linear_ode_spec(&LinearOdeParams {
            g0,
            c0,
            beta,
            zeta,
            horizon: 1.0,
            x0: 1.0,
            domain: (0.0, 2.0),
        })
        .unwrap()
    }

    fn params(dt: f64) -> SchemeParams {
        SchemeParams {
            h: 0.1,
            dt,
            epsilon: 0.1,
            theta: 0.0,
            cost: 0.01,
            ..SchemeParams::reference(0.1, 0.01)
        }
    }

    #[test]
    fn picard_map_examples() {
        let controls = discretize_controls((0.0, 0.0), 1).unwrap();
        let flat = ode(0.3, 0.0, 0.0, -10.0);
        let d = Discretization::new(&flat, &controls, &params(0.01)).unwrap();
        let c = vec![0.3; d.grid().len()];
        assert_eq!(d.picard_map(0, &c, &c, 0.5), c);

        let decay = ode(0.5, 0.0, 0.2, -10.0);
        let d = Discretization::new(&decay, &controls, &params(0.01)).unwrap();
        let guess = vec![0.7; d.grid().len()];
        let half = vec![0.5; d.grid().len()];
        let out = d.picard_map(0, &guess, &half, 0.01);
        assert_relative_eq!(out[5], 0.5 - 0.01 * 0.2 * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn implicit_step_scalar_fixed_point() {
        let controls = discretize_controls((0.0, 0.0), 1).unwrap();
        let spec = ode(0.5, 0.2, 0.2, -10.0);
        let d = Discretization::new(&spec, &controls, &params(0.01)).unwrap();
        let half = vec![0.5; d.grid().len()];
        let (u, st) = d.implicit_step(0, &half, 0.01).unwrap();
        assert_relative_eq!(
            u[7],
            (0.5 + 0.01 * 0.2) / (1.0 + 0.01 * 0.2),
            epsilon = 1e-12
        );
        assert!(st.iterations <= 8);

        let still = ode(0.5, 0.0, 0.0, -10.0);
        let d = Discretization::new(&still, &controls, &params(0.01)).unwrap();
        let (u, st) = d.implicit_step(0, &half, 0.01).unwrap();
        assert_eq!(u, half);
        assert_eq!(st.iterations, 1);
    }

    #[test]
    fn linear_oracle() {
        let controls = discretize_controls((0.0, 1.0), 2).unwrap();
        let spec = ode(0.5, 0.2, 0.2, -10.0);
        for dt in [1e-2, 1e-3] {
            let r = solve(&spec, &controls, &params(dt)).unwrap();
            let v = r.reported_value().unwrap();
            assert!(
                (v - 0.590_634_623_461_009_1).abs() < 2.0 * dt,
                "dt {dt}: {v}"
            );
        }
    }

    #[test]
    fn binding_obstacle_is_exact() {
        let controls = discretize_controls((0.0, 1.0), 3).unwrap();
        let spec = ode(1.0, 0.2, 0.2, 1.0);
        let mut p = params(0.01);
        p.snapshot_every = 1;
        p.record_policy = true;
        p.check_residual = true;
        let r = solve(&spec, &controls, &p).unwrap();
        for s in &r.snapshots {
            assert!(
                s.values.iter().flatten().all(|&v| v == 1.0),
                "step {}",
                s.step
            );
        }
        assert_eq!(r.stats.max_residual, Some(0.0));
        assert!(r.policy.unwrap().stopped.iter().flatten().all(|&s| s));
    }

    #[test]
    fn rejects_non_monotone_flux() {
        let controls = discretize_controls((0.0, 1.0), 2).unwrap();
        let spec = crate::model::recursive_utility_spec(&Default::default()).unwrap();
        let mut p = SchemeParams::reference(0.1, 0.01);
        p.theta = 0.001;
        assert!(Discretization::new(&spec, &controls, &p)
            .unwrap_err()
            .is_config());
    }
}
