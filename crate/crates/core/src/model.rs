//! Continuous problem data and the recursive-utility benchmark.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ExteriorExtension, SpaceTimeGrid};
use crate::levy::{self, LevyMeasure};

/// BSDE driver `f(α, t, x, y, z, k)`. The `z` slot receives `σ̃·∂ₓu`, the `k`
/// slot the nonlocal term `B^α u`.
pub trait Driver: Send + Sync {
    fn eval(&self, alpha: f64, t: f64, x: f64, y: f64, z: f64, k: f64) -> f64;
}

impl<F> Driver for F
where
    F: Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync,
{
    #[inline]
    fn eval(&self, alpha: f64, t: f64, x: f64, y: f64, z: f64, k: f64) -> f64 {
        self(alpha, t, x, y, z, k)
    }
}

/// Declared structural constants of the driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConstants {
    /// Rate `C` with `f(v) - f(u) ≥ C(u - v)` for `u ≥ v`.
    pub monotonicity: f64,
    pub lip_y: f64,
    pub lip_z: f64,
    pub lip_k: f64,
}

pub type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type MarkFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type TimeStateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type PayoffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One-dimensional controlled jump-diffusion with obstacle and nonlinear driver.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// `b(α, x)`
    pub drift: StateFn,
    /// `σ(α, x)`
    pub diffusion: StateFn,
    /// `η(α, x, e)`
    pub jump_amplitude: JumpFn,
    /// `γ(x, e) ≥ 0`
    pub driver_weight: MarkFn,
    pub driver: Arc<dyn Driver>,
    pub constants: DriverConstants,
    /// `ζ(t, x)`
    pub obstacle: TimeStateFn,
    /// `g(x)`
    pub payoff: PayoffFn,
    pub control_interval: (f64, f64),
    pub measure: LevyMeasure,
    pub domain: (f64, f64),
    pub horizon: f64,
    pub extension: ExteriorExtension,
    /// State at which summary values are reported.
    pub x0: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .field("control_interval", &self.control_interval)
            .field("measure", &self.measure)
            .field("domain", &self.domain)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Checks `g ≥ ζ(0, ·)` and boundedness at the grid nodes.
    pub fn validate_on(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let (lo, hi) = self.control_interval;
        if !(lo <= hi) {
            return Err(Error::config(format!(
                "empty control interval [{lo}, {hi}]"
            )));
        }
        for x in grid.nodes() {
            let g = (self.payoff)(x);
            let z = (self.obstacle)(0.0, x);
            if !(g.is_finite() && z.is_finite()) {
                return Err(Error::config(format!(
                    "payoff or obstacle not finite at x = {x}"
                )));
            }
            if g < z {
                return Err(Error::config(format!(
                    "payoff {g} lies below the initial obstacle {z} at x = {x}"
                )));
            }
        }
        Ok(())
    }

    /// `σ̃(α, x)` and `b̃(α, x) = b + b_ε` at every node for the truncated measure `nu`.
    pub fn modified_coefficients(
        &self,
        alpha: f64,
        grid: &SpaceTimeGrid,
        nu: &LevyMeasure,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut sig = Vec::with_capacity(grid.len());
        let mut drift = Vec::with_capacity(grid.len());
        for x in grid.nodes() {
            let amp = |e: f64| (self.jump_amplitude)(alpha, x, e);
            let v = levy::small_jump_variance(nu, amp)?;
            let s = (self.diffusion)(alpha, x);
            sig.push((s * s + v).sqrt());
            drift.push((self.drift)(alpha, x) + levy::drift_correction(nu, amp)?);
        }
        Ok((sig, drift))
    }
}

/// Finite subset of the control interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    values: Vec<f64>,
    delta: f64,
}

impl ControlGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `J` equispaced controls on `[a_lo, a_hi]`, endpoints included.
pub fn discretize_controls(interval: (f64, f64), count: usize) -> Result<ControlGrid> {
    let (lo, hi) = interval;
    if count == 0 {
        return Err(Error::config("control grid needs at least one value"));
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config(format!(
            "invalid control interval [{lo}, {hi}]"
        )));
    }
    if count == 1 {
        if lo != hi {
            return Err(Error::config(
                "a single control value needs a degenerate interval [a, a]",
            ));
        }
        return Ok(ControlGrid {
            values: vec![lo],
            delta: 0.0,
        });
    }
    let span = hi - lo;
    let values = (0..count)
        .map(|j| {
            if j == count - 1 {
                hi
            } else {
                lo + span * j as f64 / (count - 1) as f64
            }
        })
        .collect();
    Ok(ControlGrid {
        values,
        delta: span / (count - 1) as f64,
    })
}

/// Parameters of the recursive-utility portfolio problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    /// Discount rate in the driver.
    pub beta: f64,
    /// Ambiguity aversion.
    pub kappa: f64,
    /// Drift of the risky asset.
    pub b: f64,
    pub sigma: f64,
    /// Tempering rate of the jump measure.
    pub mu: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "default_psi_scale")]
    pub psi_scale: f64,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default = "default_e_max")]
    pub e_max: f64,
    #[serde(default = "default_bins")]
    pub bins_per_unit: usize,
}

fn default_psi_scale() -> f64 {
    0.8
}
fn default_domain() -> (f64, f64) {
    (0.0, 2.0)
}
fn default_e_max() -> f64 {
    levy::DEFAULT_E_MAX
}
fn default_bins() -> usize {
    levy::DEFAULT_BINS_PER_UNIT
}

impl Default for BenchmarkParams {
    /// Reference parameter set: β = 0.2, κ = 1, b = 0.1, σ = 0.15, μ = 6, T = 1, x₀ = 1.
    fn default() -> Self {
        BenchmarkParams {
            beta: 0.2,
            kappa: 1.0,
            b: 0.1,
            sigma: 0.15,
            mu: 6.0,
            horizon: 1.0,
            x0: 1.0,
            r: 0.0,
            psi_scale: default_psi_scale(),
            domain: default_domain(),
            e_max: default_e_max(),
            bins_per_unit: default_bins(),
        }
    }
}

impl BenchmarkParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.beta,
            self.kappa,
            self.b,
            self.sigma,
            self.mu,
            self.horizon,
            self.x0,
            self.r,
            self.psi_scale,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("benchmark parameters must be finite"));
        }
        if !(self.sigma > 0.0 && self.mu > 0.0 && self.horizon > 0.0) {
            return Err(Error::config("need sigma > 0, mu > 0 and T > 0"));
        }
        if self.kappa < 0.0 {
            return Err(Error::config("ambiguity aversion must be nonnegative"));
        }
        Ok(())
    }
}

fn exp_utility(x: f64) -> f64 {
    (1.0 - (-x).exp()).max(0.0)
}

/// Portfolio fraction `α ∈ [0, 1]` in a risky asset with tempered-stable jumps,
/// valued by the recursive utility with driver `ψ - βy - κ|z|`, obstacle and
/// payoff `(1 - e^{-x})⁺`, localized to `domain` with the payoff outside.
pub fn recursive_utility_spec(p: &BenchmarkParams) -> Result<ProblemSpec> {
    p.validate()?;
    let (b, r, sigma) = (p.b, p.r, p.sigma);
    let (beta, kappa, scale, horizon) = (p.beta, p.kappa, p.psi_scale, p.horizon);
    let measure = LevyMeasure::tempered_stable(p.mu, 0.01, p.e_max, p.bins_per_unit)?;
    Ok(ProblemSpec {
        name: "recursive_utility".into(),
        drift: Arc::new(move |a, x| (a * b + (1.0 - a) * r) * x),
        diffusion: Arc::new(move |a, x| a * sigma * x),
        jump_amplitude: Arc::new(|a, x, e| a * x * e.abs().min(1.0)),
        driver_weight: Arc::new(|_, _| 0.0),
        driver: Arc::new(move |_a: f64, t: f64, x: f64, y: f64, z: f64, _k: f64| {
            scale * (-(horizon - t)).exp() * (-0.5 * x).exp() - beta * y - kappa * z.abs()
        }),
        constants: DriverConstants {
            monotonicity: beta,
            lip_y: beta,
            lip_z: kappa,
            lip_k: 0.0,
        },
        obstacle: Arc::new(|_, x| exp_utility(x)),
        payoff: Arc::new(exp_utility),
        control_interval: (0.0, 1.0),
        measure,
        domain: p.domain,
        horizon,
        extension: ExteriorExtension::stationary(exp_utility),
        x0: p.x0,
    })
}

/// Parameters of the zero-dynamics problem `u' = c₀ - βu`, `u(0) = g₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearOdeParams {
    pub g0: f64,
    pub c0: f64,
    pub beta: f64,
    /// Constant obstacle level.
    pub zeta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
}

fn default_x0() -> f64 {
    1.0
}

impl LinearOdeParams {
    /// `g₀e^{-βt} + (c₀/β)(1 - e^{-βt})`, written so that `g₀ = c₀/β` is reproduced exactly.
    pub fn exact(&self, t: f64) -> f64 {
        if self.beta == 0.0 {
            self.g0 + self.c0 * t
        } else {
            let fixed = self.c0 / self.beta;
            fixed + (self.g0 - fixed) * (-self.beta * t).exp()
        }
    }
}

/// No diffusion, drift or jumps; the driver `c₀ - βy` alone moves the value.
/// The exterior carries the closed-form solution.
pub fn linear_ode_spec(p: &LinearOdeParams) -> Result<ProblemSpec> {
    if !(p.horizon > 0.0) || !p.beta.is_finite() || !p.c0.is_finite() || !p.g0.is_finite() {
        return Err(Error::config(
            "linear ODE parameters must be finite with T > 0",
        ));
    }
    let (g0, c0, beta, zeta) = (p.g0, p.c0, p.beta, p.zeta);
    let exact = p.clone();
    Ok(ProblemSpec {
        name: "linear_ode".into(),
        drift: Arc::new(|_, _| 0.0),
        diffusion: Arc::new(|_, _| 0.0),
        jump_amplitude: Arc::new(|_, _, _| 0.0),
        driver_weight: Arc::new(|_, _| 0.0),
        driver: Arc::new(move |_a: f64, _t: f64, _x: f64, y: f64, _z: f64, _k: f64| c0 - beta * y),
        constants: DriverConstants {
            monotonicity: beta,
            lip_y: beta.abs(),
            lip_z: 0.0,
            lip_k: 0.0,
        },
        obstacle: Arc::new(move |_, _| zeta),
        payoff: Arc::new(move |_| g0),
        control_interval: (0.0, 1.0),
        measure: LevyMeasure::zero(),
        domain: p.domain,
        horizon: p.horizon,
        extension: ExteriorExtension::new(move |t, _| exact.exact(t)),
        x0: p.x0,
    })
}

/// Upper bound of the gradient Lipschitz constant of `p ↦ f(α, t, x, y, σ̃ p, k)`
/// over the control grid and the grid nodes.
pub fn driver_lipschitz_in_p(
    spec: &ProblemSpec,
    controls: &ControlGrid,
    grid: &SpaceTimeGrid,
    nu: &LevyMeasure,
) -> Result<f64> {
    if spec.constants.lip_z == 0.0 {
        return Ok(0.0);
    }
    let mut sup = 0.0f64;
    for &a in controls.values() {
        let (sig, _) = spec.modified_coefficients(a, grid, nu)?;
        sup = sig.iter().fold(sup, |m, s| m.max(s.abs()));
    }
    Ok(spec.constants.lip_z * sup)
}
