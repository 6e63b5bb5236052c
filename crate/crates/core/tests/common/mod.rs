#![allow(
    dead_code,
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord
)]

use std::sync::Arc;

use hjbvi::grid::ExteriorExtension;
use hjbvi::levy::{build_quadrature, LevyMeasure};
use hjbvi::model::{DriverConstants, ProblemSpec};
use hjbvi::{Discretization, Error, SchemeParams};
use rand::Rng;

/// Coefficients of a randomized model on `(0, 1)`.
#[derive(Clone, Debug)]
pub struct RandomModel {
    pub b0: f64,
    pub b1: f64,
    pub s0: f64,
    pub s1: f64,
    pub jump: f64,
    pub mu: f64,
    pub gamma: f64,
    pub psi: f64,
    pub beta: f64,
    pub kappa: f64,
    pub rho: f64,
    pub level: f64,
}

impl RandomModel {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        RandomModel {
            b0: rng.gen_range(-0.5..0.5),
            b1: rng.gen_range(-0.5..0.5),
            s0: rng.gen_range(0.0..0.4),
            s1: rng.gen_range(0.0..0.4),
            jump: rng.gen_range(0.0..0.5),
            mu: rng.gen_range(2.0..8.0),
            gamma: if rng.gen_bool(0.5) {
                rng.gen_range(0.0..0.5)
            } else {
                0.0
            },
            psi: rng.gen_range(-1.0..1.0),
            beta: rng.gen_range(0.0..0.5),
            kappa: rng.gen_range(0.0..1.0),
            rho: rng.gen_range(0.0..0.5),
            level: rng.gen_range(0.0..0.4),
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        let m = self.clone();
        let g = move |x: f64| 0.5 + 0.3 * (3.0 * x).sin();
        let level = m.level;
        let measure = LevyMeasure::tempered_stable(m.mu, 0.05, 2.0, 200).unwrap();
        let (b0, b1, s0, s1, jump, gamma) = (m.b0, m.b1, m.s0, m.s1, m.jump, m.gamma);
        let (psi, beta, kappa, rho) = (m.psi, m.beta, m.kappa, m.rho);
        ProblemSpec {
            name: "random".into(),
            drift: Arc::new(move |a, x| b0 + b1 * a * x),
            diffusion: Arc::new(move |a, x| s0 + s1 * a * x),
            jump_amplitude: Arc::new(move |a, x, e| {
                jump * (0.5 + a) * (1.0 + x) * e.abs().min(1.0) * e.signum()
            }),
            driver_weight: Arc::new(move |x, e| gamma * (1.0 + x) * e.abs().min(1.0)),
            driver: Arc::new(move |a: f64, t: f64, x: f64, y: f64, z: f64, k: f64| {
                psi * (x + a - t).sin() - beta * y - kappa * z.abs() + rho * k
            }),
            constants: DriverConstants {
                monotonicity: beta,
                lip_y: beta,
                lip_z: kappa,
                lip_k: rho,
            },
            obstacle: Arc::new(move |t, x| level + 0.1 * (x - t).cos()),
            payoff: Arc::new(move |x| g(x).max(level + 0.1 * x.cos())),
            control_interval: (0.0, 1.0),
            measure,
            domain: (0.0, 1.0),
            horizon: 1.0,
            extension: ExteriorExtension::stationary(g),
            x0: 0.5,
        }
    }
}

/// Discretizes `spec` with `h = 1/n`, halving `dt` until the flux and
/// contraction conditions hold.
pub fn small_discretization(
    spec: &ProblemSpec,
    n: usize,
    steps: usize,
    j: usize,
    cost: f64,
) -> Discretization {
    let interval = if j == 1 {
        (spec.control_interval.1, spec.control_interval.1)
    } else {
        spec.control_interval
    };
    let controls = hjbvi::discretize_controls(interval, j).unwrap();
    let h = 1.0 / n as f64;
    let mut spec = spec.clone();
    let mut dt = 0.02;
    loop {
        spec.horizon = dt * steps as f64;
        let p = SchemeParams {
            h,
            dt,
            k_sl: None,
            epsilon: h,
            theta: 0.05,
            cost,
            picard_tol: 1e-11,
            picard_max: 400,
            record_policy: false,
            parallel_components: true,
            snapshot_every: 0,
            check_residual: true,
        };
        match Discretization::new(&spec, &controls, &p) {
            Ok(d) => return d,
            Err(Error::InvalidConfig(msg))
                if msg.contains("monotone") || msg.contains("contraction") =>
            {
                dt *= 0.5;
                assert!(dt > 1e-7, "could not satisfy scheme conditions");
            }
            Err(e) => panic!("{e}"),
        }
    }
}

/// Interpolant of node values on a uniform grid, with `ext` outside `[lo, hi]`.
pub fn oracle_interp(u: &[f64], lo: f64, hi: f64, x: f64, ext: &dyn Fn(f64) -> f64) -> f64 {
    let n = u.len() - 1;
    let h = (hi - lo) / n as f64;
    let s = (x - lo) / h;
    if s < -1e-9 || s > n as f64 + 1e-9 {
        return ext(x);
    }
    let s = s.clamp(0.0, n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let w = s - i as f64;
    (1.0 - w) * u[i] + w * u[i + 1]
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for c in k..n {
                a[i][c] -= f * a[k][c];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Solves `U - Δt(A U + K U + f̃[U]) = half` on the interior nodes from the
/// operator definitions, with `A + K` implicit in a dense matrix and only the
/// driver iterated. Boundary nodes take the extension.
pub fn oracle_implicit_step(d: &Discretization, j: usize, half: &[f64], t: f64) -> Vec<f64> {
    let spec = d.spec();
    let grid = d.grid();
    let p = d.params();
    let (lo, hi, h, dt) = (grid.x_lo(), grid.x_hi(), grid.h(), p.dt);
    let n = grid.len();
    let alpha = d.controls().values()[j];
    let local = d.local_stencil(j);
    let (sig, drift) = (local.sigma_tilde(), local.b_tilde());
    let k = p.k_sl();
    let nu = spec.measure.with_epsilon(p.epsilon).unwrap();
    let quad = build_quadrature(&nu).unwrap();
    let ext = |x: f64| spec.extension.eval(t, x);

    // Linear part L U = (A + K) U as an affine map: row coefficients plus a constant.
    let unit = |m: usize| {
        let mut e = vec![0.0; n];
        e[m] = 1.0;
        e
    };
    let zero_ext = |_: f64| 0.0;
    let linear = |u: &[f64], ext: &dyn Fn(f64) -> f64, i: usize| -> f64 {
        let x = grid.node(i);
        let k2 = k * k;
        let mut s = 0.0;
        for (pt, w) in [
            (x + k * sig[i], 0.5 / k2),
            (x - k * sig[i], 0.5 / k2),
            (x + k2 * drift[i], 1.0 / k2),
        ] {
            s += w * (oracle_interp(u, lo, hi, pt, ext) - u[i]);
        }
        for (e, w) in quad.points() {
            let y = x + (spec.jump_amplitude)(alpha, x, e);
            s += w * (oracle_interp(u, lo, hi, y, ext) - u[i]);
        }
        s
    };
    let nonlocal_b = |u: &[f64], i: usize| -> f64 {
        let x = grid.node(i);
        quad.points()
            .map(|(e, w)| {
                let y = x + (spec.jump_amplitude)(alpha, x, e);
                w * (spec.driver_weight)(x, e) * (oracle_interp(u, lo, hi, y, &ext) - u[i])
            })
            .sum()
    };
    let flux = |u: &[f64], i: usize| -> f64 {
        let lam = dt / h;
        let grad = (u[i + 1] - u[i - 1]) / (2.0 * h);
        spec.driver.eval(
            alpha,
            t,
            grid.node(i),
            u[i],
            sig[i] * grad,
            nonlocal_b(u, i),
        ) + p.theta / lam * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h
    };

    let bnd = (ext(lo), ext(hi));
    let mut base = vec![0.0; n];
    base[0] = bnd.0;
    base[n - 1] = bnd.1;
    let interior = n - 2;
    let mut mat = vec![vec![0.0; interior]; interior];
    let mut affine = vec![0.0; interior];
    for r in 0..interior {
        let i = r + 1;
        affine[r] = linear(&base, &ext, i);
        for c in 0..interior {
            mat[r][c] = -dt * linear(&unit(c + 1), &zero_ext, i);
        }
        mat[r][r] += 1.0;
    }
    let mut u = half.to_vec();
    u[0] = bnd.0;
    u[n - 1] = bnd.1;
    for _ in 0..500 {
        let rhs: Vec<f64> = (0..interior)
            .map(|r| half[r + 1] + dt * (affine[r] + flux(&u, r + 1)))
            .collect();
        let v = dense_solve(mat.clone(), rhs);
        let mut inc = 0.0f64;
        for r in 0..interior {
            inc = inc.max((v[r] - u[r + 1]).abs());
            u[r + 1] = v[r];
        }
        if inc < 1e-14 {
            break;
        }
    }
    u
}

pub type Check = Result<String, String>;

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Every local, jump and driver-jump weight is nonnegative.
pub fn check_nonnegative_weights(models: usize) -> Check {
    let mut r = rng(11);
    let mut entries = 0usize;
    for _ in 0..models {
        let spec = RandomModel::draw(&mut r).spec();
        let d = small_discretization(&spec, r.gen_range(8..=30), 1, 3, 0.01);
        for j in 0..3 {
            let (l, nl) = (d.local_stencil(j), d.nonlocal_stencil(j));
            for i in 0..d.grid().len() {
                for (_, w) in l.row(i) {
                    entries += 1;
                    if !(w >= 0.0) {
                        return Err(format!("local weight {w} in row {i}"));
                    }
                }
                for (_, w) in l.exterior_row(i) {
                    if !(w >= 0.0) {
                        return Err(format!("local exterior weight {w} in row {i}"));
                    }
                }
                for (_, k, b) in nl.row(i) {
                    entries += 1;
                    if !(k >= 0.0 && b >= 0.0) {
                        return Err(format!("jump weights ({k}, {b}) in row {i}"));
                    }
                }
                for (_, k, b) in nl.exterior_row(i) {
                    if !(k >= 0.0 && b >= 0.0) {
                        return Err(format!("exterior jump weights ({k}, {b}) in row {i}"));
                    }
                }
                let (sk, sb) = nl.self_weights(i);
                if !(sk >= 0.0 && sb >= 0.0) {
                    return Err(format!("self weights ({sk}, {sb}) in row {i}"));
                }
            }
        }
    }
    Ok(format!("{models} models, {entries} weights"))
}

/// Row mass of the jump operator equals the truncated measure mass.
pub fn check_mass_identity(models: usize) -> Check {
    let mut r = rng(12);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let spec = RandomModel::draw(&mut r).spec();
        let d = small_discretization(&spec, r.gen_range(8..=30), 1, 2, 0.01);
        let nu = spec.measure.with_epsilon(d.params().epsilon).unwrap();
        let exact =
            hjbvi::levy::truncated_mass(&nu).unwrap() + nu.tail_masses().0 + nu.tail_masses().1;
        for j in 0..2 {
            let st = d.nonlocal_stencil(j);
            for i in 0..d.grid().len() {
                worst = worst.max((st.kappa_total(i) - exact).abs() / exact);
            }
        }
    }
    if worst < 1e-2 {
        Ok(format!("worst relative mass error {worst:.2e}"))
    } else {
        Err(format!("relative mass error {worst:.3e}"))
    }
}

/// Tent weights are nonnegative and sum to one.
pub fn check_partition(cases: usize) -> Check {
    let mut r = rng(13);
    for _ in 0..cases {
        let n = r.gen_range(1..200);
        let lo = r.gen_range(-2.0..2.0);
        let h = r.gen_range(0.001..0.5);
        let grid = hjbvi::SpaceTimeGrid::new(lo, lo + n as f64 * h, h, 1.0, 0.1);
        let Ok(grid) = grid else { continue };
        let x = r.gen_range(lo - 1.0..lo + n as f64 * h + 1.0);
        let w = hjbvi::grid::tent_weights(x, &grid);
        let total: f64 = w.iter().map(|e| e.1).sum();
        if w.iter().any(|e| e.1 < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(format!("weights {w:?} at x = {x}"));
        }
    }
    Ok(format!("{cases} points"))
}

/// With `θ > C λ`, `Δt f̃ + 2θU_i` is nondecreasing in the neighbours and
/// `2θ`-Lipschitz in the sup norm.
pub fn check_flux(cases: usize) -> Check {
    use hjbvi::ops::{lf_flux, FluxParams};
    let mut r = rng(14);
    for case in 0..cases {
        let kappa = r.gen_range(0.0..2.0);
        let a: f64 = r.gen_range(-1.0..1.0);
        let sig = r.gen_range(0.0..1.0);
        let h = r.gen_range(0.001..0.1);
        let c = (kappa + a.abs()) * sig;
        let lam = r.gen_range(0.01..1.0);
        let theta = c * lam * r.gen_range(1.0001..3.0) + 1e-6;
        let p = FluxParams::new(theta, lam * h, h);
        let drv =
            move |_: f64, _: f64, _: f64, y: f64, z: f64, _: f64| a * z - kappa * z.abs() - 0.3 * y;
        let y = r.gen_range(-1.0..1.0);
        let u: [f64; 3] = [
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
        ];
        let bump: [f64; 3] = [
            r.gen_range(0.0..0.1),
            r.gen_range(0.0..0.1),
            r.gen_range(0.0..0.1),
        ];
        let v = [u[0] + bump[0], u[1] + bump[1], u[2] + bump[2]];
        let g = |w: [f64; 3]| {
            lam * h * lf_flux(&drv, 0.0, 0.0, 0.0, y, w, 0.0, sig, &p) + 2.0 * theta * w[1]
        };
        let (gu, gv) = (g(u), g(v));
        let dist = bump.iter().fold(0.0f64, |m, b| m.max(*b));
        if gv < gu - 1e-14 {
            return Err(format!("case {case}: flux decreased ({gu} -> {gv})"));
        }
        if (gv - gu).abs() > 2.0 * theta * dist * (1.0 + 1e-12) + 1e-15 {
            return Err(format!(
                "case {case}: |{gv} - {gu}| exceeds 2θ|U - V| = {}",
                2.0 * theta * dist
            ));
        }
    }
    Ok(format!("{cases} perturbations"))
}

/// Small randomized solves; returns the statistics of each.
pub fn random_solves(models: usize, seed: u64) -> Vec<(Discretization, hjbvi::SolveResult)> {
    let mut r = rng(seed);
    (0..models)
        .map(|_| {
            let spec = RandomModel::draw(&mut r).spec();
            let d = small_discretization(
                &spec,
                r.gen_range(8..=40),
                20,
                r.gen_range(1..=4),
                r.gen_range(0.001..0.05),
            );
            let res = d.run().unwrap();
            (d, res)
        })
        .collect()
}

pub fn check_picard_ratio(runs: &[(Discretization, hjbvi::SolveResult)]) -> Check {
    let mut worst = 0.0f64;
    for (d, res) in runs {
        let (q, bound) = (res.stats.max_contraction_ratio, d.contraction_bound());
        if q > bound {
            return Err(format!("observed ratio {q} above bound {bound}"));
        }
        worst = worst.max(q / bound);
    }
    Ok(format!(
        "{} runs, largest ratio/bound {worst:.3}",
        runs.len()
    ))
}

pub fn check_residual(runs: &[(Discretization, hjbvi::SolveResult)]) -> Check {
    let mut worst = 0.0f64;
    for (d, res) in runs {
        let rmax = res.stats.max_residual.ok_or("residual not recorded")?;
        let tol = d.params().picard_tol;
        if rmax > 10.0 * tol {
            return Err(format!("residual {rmax:e} above {:e}", 10.0 * tol));
        }
        worst = worst.max(rmax);
    }
    Ok(format!("{} runs, largest residual {worst:.2e}", runs.len()))
}

pub fn check_stability(runs: &[(Discretization, hjbvi::SolveResult)]) -> Check {
    let mut worst = f64::NEG_INFINITY;
    for (_, res) in runs {
        if res.stats.max_stability_excess > 1e-12 {
            return Err(format!(
                "sup norm exceeds the bound by {}",
                res.stats.max_stability_excess
            ));
        }
        worst = worst.max(res.stats.max_stability_excess);
    }
    Ok(format!(
        "{} runs, largest |U| - a_n = {worst:.3e}",
        runs.len()
    ))
}

/// Ordered initial data stay ordered.
pub fn check_comparison(instances: usize) -> Check {
    let mut r = rng(15);
    for case in 0..instances {
        let spec = RandomModel::draw(&mut r).spec();
        let d = small_discretization(
            &spec,
            r.gen_range(6..=40),
            20,
            r.gen_range(1..=3),
            r.gen_range(0.001..0.05),
        );
        let low = d.initial_state();
        let high: Vec<Vec<f64>> = low
            .iter()
            .map(|u| u.iter().map(|v| v + r.gen_range(0.0..0.2)).collect())
            .collect();
        let mut low = low;
        for u in low.iter_mut() {
            for v in u.iter_mut() {
                *v -= r.gen_range(0.0..0.2);
            }
        }
        let a = d.run_from(low).unwrap();
        let b = d.run_from(high).unwrap();
        for (ua, ub) in a.values.iter().zip(&b.values) {
            if let Some(i) = (0..ua.len()).find(|&i| ua[i] > ub[i] + 1e-12) {
                return Err(format!(
                    "case {case}: order lost at node {i} ({} > {})",
                    ua[i], ub[i]
                ));
            }
        }
    }
    Ok(format!("{instances} instances"))
}

/// Identical bits in serial mode and on rayon pools of several sizes.
pub fn check_determinism() -> Check {
    let mut r = rng(16);
    let spec = RandomModel::draw(&mut r).spec();
    let d = small_discretization(&spec, 32, 20, 4, 0.01);
    let reference = {
        let mut p = d.params().clone();
        p.parallel_components = false;
        let controls = d.controls().clone();
        let mut s = d.spec().clone();
        s.horizon = d.grid().horizon();
        hjbvi::solve(&s, &controls, &p).unwrap().values
    };
    let bits = |v: &[Vec<f64>]| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    for threads in [1usize, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let out = pool.install(|| d.run().unwrap().values);
        if bits(&out) != bits(&reference) {
            return Err(format!("{threads} threads differ from the serial run"));
        }
    }
    Ok("serial and 1, 2, 4 threads agree bitwise".into())
}
