//! Lévy measure on one-dimensional jump marks and the quantities derived from
//! truncating it at a small-jump level ε.
//!
//! Jumps with `|e| < ε` are removed from the nonlocal operator and folded into
//! the diffusion ([`small_jump_variance`]). The compensator of the remaining
//! jumps becomes a drift shift ([`drift_correction`]). Marks beyond `e_max`
//! are lumped into two point masses at `±e_max`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

pub type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_E_MAX: f64 = 5.0;
pub const DEFAULT_BINS_PER_UNIT: usize = 400;

#[derive(Clone)]
pub struct LevyMeasure {
    density: Density,
    epsilon: f64,
    e_max: f64,
    bins_per_unit: usize,
    tail_mass_plus: f64,
    tail_mass_minus: f64,
    label: String,
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyMeasure")
            .field("label", &self.label)
            .field("epsilon", &self.epsilon)
            .field("e_max", &self.e_max)
            .field("bins_per_unit", &self.bins_per_unit)
            .field("tail_mass_plus", &self.tail_mass_plus)
            .field("tail_mass_minus", &self.tail_mass_minus)
            .finish()
    }
}

impl LevyMeasure {
    pub fn new(
        density: Density,
        epsilon: f64,
        e_max: f64,
        bins_per_unit: usize,
        tail_mass_plus: f64,
        tail_mass_minus: f64,
    ) -> Result<Self> {
        let m = LevyMeasure {
            density,
            epsilon,
            e_max,
            bins_per_unit,
            tail_mass_plus,
            tail_mass_minus,
            label: "custom".into(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Symmetric tempered-stable density `e^{-μ|e|}/|e|`. The tail masses beyond
    /// `e_max` are `E₁(μ·e_max)` per side.
    pub fn tempered_stable(
        mu: f64,
        epsilon: f64,
        e_max: f64,
        bins_per_unit: usize,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config(format!(
                "tempering rate must be positive, got {mu}"
            )));
        }
        let tail = exp_integral_e1(mu * e_max)?;
        let mut m = LevyMeasure::new(
            Arc::new(move |e: f64| {
                let a = e.abs();
                (-mu * a).exp() / a
            }),
            epsilon,
            e_max,
            bins_per_unit,
            tail,
            tail,
        )?;
        m.label = format!("tempered_stable(mu={mu})");
        Ok(m)
    }

    /// The zero measure (no jumps).
    pub fn zero() -> Self {
        LevyMeasure {
            density: Arc::new(|_| 0.0),
            epsilon: 1.0,
            e_max: DEFAULT_E_MAX,
            bins_per_unit: 1,
            tail_mass_plus: 0.0,
            tail_mass_minus: 0.0,
            label: "zero".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "truncation level must be positive, got {}",
                self.epsilon
            ));
        }
        if !(self.e_max.is_finite() && self.e_max >= 1.0) {
            return bad(format!(
                "outer radius must be finite and >= 1, got {}",
                self.e_max
            ));
        }
        if self.epsilon >= self.e_max {
            return bad(format!(
                "truncation level {} must be below the outer radius {}",
                self.epsilon, self.e_max
            ));
        }
        if self.bins_per_unit == 0 {
            return bad("bins_per_unit must be at least 1".into());
        }
        if !(self.tail_mass_plus >= 0.0 && self.tail_mass_minus >= 0.0)
            || !self.tail_mass_plus.is_finite()
            || !self.tail_mass_minus.is_finite()
        {
            return bad("tail masses must be finite and nonnegative".into());
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut m = self.clone();
        m.epsilon = epsilon;
        m.validate()?;
        Ok(m)
    }

    pub fn with_bins_per_unit(&self, bins_per_unit: usize) -> Result<Self> {
        let mut m = self.clone();
        m.bins_per_unit = bins_per_unit;
        m.validate()?;
        Ok(m)
    }

    pub fn density(&self, e: f64) -> f64 {
        (self.density)(e)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn bins_per_unit(&self) -> usize {
        self.bins_per_unit
    }

    pub fn tail_masses(&self) -> (f64, f64) {
        (self.tail_mass_plus, self.tail_mass_minus)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `∫_{a<|e|<b} φ(e) ν(de)`, both signs of the mark.
    fn integrate_shell<F>(&self, phi: F, a: f64, b: f64, what: &'static str) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let tol = Tolerance::default();
        let mut total = 0.0;
        // split at 1 so kinks of amplitudes like 1 ∧ |e| sit on a boundary
        let mut cuts = vec![a];
        if a < 1.0 && 1.0 < b {
            cuts.push(1.0);
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            for sign in [1.0, -1.0] {
                let f = |s: f64| {
                    let e = sign * s;
                    let rho = (self.density)(e);
                    if rho == 0.0 {
                        0.0
                    } else {
                        phi(e) * rho
                    }
                };
                let est =
                    quad::integrate(f, w[0], w[1], tol).map_err(|est| Error::Integration {
                        what,
                        detail: format!(
                            "no convergence on [{}, {}] (estimate {:e} ± {:e})",
                            w[0], w[1], est.value, est.error
                        ),
                    })?;
                total += est.value;
            }
        }
        if !total.is_finite() {
            return Err(Error::Integration {
                what,
                detail: "non-finite integral".into(),
            });
        }
        Ok(total)
    }
}

/// Exponential integral `E₁(z) = ∫_z^∞ e^{-t}/t dt` for `z > 0`, by adaptive quadrature.
pub fn exp_integral_e1(z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::config(format!(
            "E1 needs a positive argument, got {z}"
        )));
    }
    // the remainder beyond z + 60 is below e^{-60} relative to E1(z)
    let est = quad::integrate(
        |t: f64| (-t).exp() / t,
        z,
        z + 60.0,
        Tolerance {
            abs: 0.0,
            rel: 1e-13,
            max_intervals: 4000,
        },
    )
    .map_err(|est| Error::Integration {
        what: "exponential integral",
        detail: format!("estimate {:e} ± {:e}", est.value, est.error),
    })?;
    Ok(est.value)
}

/// `ν({|e| ≥ ε})`, including the lumped tails beyond `e_max`.
pub fn truncated_mass(nu: &LevyMeasure) -> Result<f64> {
    let body = nu.integrate_shell(|_| 1.0, nu.epsilon, nu.e_max, "truncated mass")?;
    Ok(body + nu.tail_mass_plus + nu.tail_mass_minus)
}

/// `∫_{|e|<ε} |η(e)|² ν(de)`: the variance of the removed small jumps.
pub fn small_jump_variance<F>(nu: &LevyMeasure, jump_amp: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let v = nu.integrate_shell(
        |e| {
            let a = jump_amp(e);
            a * a
        },
        0.0,
        nu.epsilon,
        "small-jump variance",
    )?;
    Ok(v.max(0.0))
}

/// `b_ε = -∫_{|e|≥ε} η(e) ν(de)`, the compensator drift of the retained jumps.
pub fn drift_correction<F>(nu: &LevyMeasure, jump_amp: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let body = nu.integrate_shell(&jump_amp, nu.epsilon, nu.e_max, "drift correction")?;
    let tails = nu.tail_mass_plus * jump_amp(nu.e_max) + nu.tail_mass_minus * jump_amp(-nu.e_max);
    Ok(-(body + tails))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailMass {
    pub mass: f64,
    /// Representative mark where the lumped mass is placed.
    pub mark: f64,
}

/// Midpoint rule on `[-e_max, -ε] ∪ [ε, e_max]` plus the two lumped tails.
#[derive(Clone, Debug, Default)]
pub struct QuadratureSet {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub tails: Vec<TailMass>,
}

impl QuadratureSet {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.tails.iter().map(|t| t.mass).sum::<f64>()
    }

    /// Every `(mark, weight)` pair, tails included.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .chain(self.tails.iter().map(|t| (t.mark, t.mass)))
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_quadrature(nu: &LevyMeasure) -> Result<QuadratureSet> {
    if nu.epsilon >= nu.e_max {
        return Err(Error::config(format!(
            "truncation level {} must be below the outer radius {}",
            nu.epsilon, nu.e_max
        )));
    }
    let span = nu.e_max - nu.epsilon;
    let n_bins = ((span * nu.bins_per_unit as f64) - 1e-9).ceil().max(1.0) as usize;
    let width = span / n_bins as f64;
    let mut set = QuadratureSet {
        nodes: Vec::with_capacity(2 * n_bins),
        weights: Vec::with_capacity(2 * n_bins),
        tails: Vec::with_capacity(2),
    };
    for sign in [1.0, -1.0] {
        for k in 0..n_bins {
            let e = sign * (nu.epsilon + (k as f64 + 0.5) * width);
            let w = (nu.density)(e) * width;
            if !w.is_finite() {
                return Err(Error::Integration {
                    what: "quadrature weights",
                    detail: format!("weight overflow at mark {e}"),
                });
            }
            if w < 0.0 {
                return Err(Error::config(format!("negative density {w} at mark {e}")));
            }
            set.nodes.push(e);
            set.weights.push(w);
        }
    }
    set.tails.push(TailMass {
        mass: nu.tail_mass_plus,
        mark: nu.e_max,
    });
    set.tails.push(TailMass {
        mass: nu.tail_mass_minus,
        mark: -nu.e_max,
    });
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// Series `E₁(z) = -γ - ln z - Σ_{k≥1} (-z)^k / (k·k!)`, independent of the quadrature.
    fn e1_series(z: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -z / k as f64;
            sum += term / k as f64;
        }
        -EULER_GAMMA - z.ln() - sum
    }

    fn ts(mu: f64, eps: f64) -> LevyMeasure {
        LevyMeasure::tempered_stable(mu, eps, DEFAULT_E_MAX, DEFAULT_BINS_PER_UNIT).unwrap()
    }

    fn saturating(e: f64) -> f64 {
        e.abs().min(1.0)
    }

    #[test]
    fn e1_matches_series() {
        for z in [0.01, 0.06, 0.5, 1.0, 3.0, 6.0] {
            assert_relative_eq!(
                exp_integral_e1(z).unwrap(),
                e1_series(z),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn truncated_mass_examples() {
        // 2·E₁(0.06) and 2·E₁(6)
        assert_relative_eq!(
            truncated_mass(&ts(6.0, 0.01)).unwrap(),
            4.590_613_836_287_565,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            truncated_mass(&ts(6.0, 1.0)).unwrap(),
            7.201_649_043_253_173e-4,
            max_relative = 1e-8
        );
        let zero = LevyMeasure::new(Arc::new(|_| 0.0), 0.1, 5.0, 10, 0.0, 0.0).unwrap();
        assert_eq!(truncated_mass(&zero).unwrap(), 0.0);
    }

    #[test]
    fn small_jump_variance_examples() {
        let mu: f64 = 6.0;
        let eps: f64 = 0.01;
        // closed form of 2∫_0^ε s e^{-μs} ds
        let exact = 2.0 * (1.0 - (-mu * eps).exp() * (1.0 + mu * eps)) / (mu * mu);
        let v = small_jump_variance(&ts(mu, eps), saturating).unwrap();
        assert_relative_eq!(v, exact, max_relative = 1e-9);
        assert_relative_eq!(v, 9.608_857_781_646_169e-5, max_relative = 1e-9);
        assert_eq!(small_jump_variance(&ts(mu, eps), |_| 0.0).unwrap(), 0.0);
        assert!(small_jump_variance(&ts(mu, 1e-12), saturating).unwrap() < 1e-20);
    }

    #[test]
    fn drift_correction_examples() {
        let b = drift_correction(&ts(6.0, 0.01), saturating).unwrap();
        let exact = -2.0 * (((-0.06f64).exp() - (-6.0f64).exp()) / 6.0 + e1_series(6.0));
        assert_relative_eq!(b, exact, max_relative = 1e-9);
        assert_relative_eq!(b, -0.313_815_425_373_519_4, max_relative = 1e-9);
        assert_eq!(drift_correction(&ts(6.0, 0.01), |_| 0.0).unwrap(), 0.0);
        let odd =
            drift_correction(&ts(6.0, 0.01), |e| if e.abs() <= 1.0 { e } else { 0.0 }).unwrap();
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn divergent_small_jump_integrand_fails() {
        let err = small_jump_variance(&ts(6.0, 0.5), |_| 1.0).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }), "{err}");
    }

    #[test]
    fn quadrature_hand_example() {
        let nu = LevyMeasure::tempered_stable(6.0, 0.5, 1.0, 2).unwrap();
        let q = build_quadrature(&nu).unwrap();
        assert_eq!(q.nodes, vec![0.75, -0.75]);
        let w = (-4.5f64).exp() / 0.75 * 0.5;
        assert_relative_eq!(q.weights[0], w, max_relative = 1e-14);
        assert_relative_eq!(q.weights[1], w, max_relative = 1e-14);
        assert_eq!(q.tails.len(), 2);
        assert_relative_eq!(
            q.tails[0].mass,
            3.600_824_521_626_587e-4,
            max_relative = 1e-9
        );
        assert_eq!(q.tails[0].mark, 1.0);
        assert_eq!(q.tails[1].mark, -1.0);
    }

    #[test]
    fn quadrature_matches_adaptive_mass() {
        for bins in [200, 400] {
            let nu = LevyMeasure::tempered_stable(6.0, 0.01, 5.0, bins).unwrap();
            let q = build_quadrature(&nu).unwrap();
            let m = truncated_mass(&nu).unwrap();
            assert!(((q.total_mass() - m) / m).abs() < 0.01);
            assert!(q.weights.iter().all(|&w| w >= 0.0));
        }
        let zero = LevyMeasure::new(Arc::new(|_| 0.0), 0.1, 5.0, 10, 0.0, 0.0).unwrap();
        assert!(build_quadrature(&zero)
            .unwrap()
            .weights
            .iter()
            .all(|&w| w == 0.0));
    }

    #[test]
    fn midpoint_refinement_is_second_order() {
        let err = |bins: usize| {
            let nu = LevyMeasure::tempered_stable(6.0, 0.1, 5.0, bins).unwrap();
            let q = build_quadrature(&nu).unwrap();
            (q.total_mass() - truncated_mass(&nu).unwrap()).abs()
        };
        let ratio = err(100) / err(200);
        assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn monotone_in_epsilon() {
        let mut prev_mass = f64::INFINITY;
        let mut prev_var = 0.0;
        for eps in [0.001, 0.01, 0.05, 0.2, 0.8] {
            let nu = ts(6.0, eps);
            let m = truncated_mass(&nu).unwrap();
            let v = small_jump_variance(&nu, saturating).unwrap();
            assert!(m <= prev_mass);
            assert!(v >= prev_var);
            prev_mass = m;
            prev_var = v;
        }
    }

    #[test]
    fn invalid_configurations() {
        assert!(LevyMeasure::tempered_stable(6.0, 0.0, 5.0, 10).is_err());
        assert!(LevyMeasure::tempered_stable(6.0, 5.0, 5.0, 10).is_err());
        assert!(LevyMeasure::tempered_stable(6.0, 0.1, 5.0, 0).is_err());
        assert!(LevyMeasure::tempered_stable(-1.0, 0.1, 5.0, 10).is_err());
    }
}
