use crate::model::Driver;

/// Lax–Friedrichs parameters: artificial viscosity `θ`, `λ = Δt/h`, and `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxParams {
    pub theta: f64,
    pub lambda: f64,
    pub h: f64,
}

impl FluxParams {
    pub fn new(theta: f64, dt: f64, h: f64) -> Self {
        FluxParams {
            theta,
            lambda: dt / h,
            h,
        }
    }

    /// Monotonicity of the flux needs `θ > C_p λ` with `C_p` the gradient
    /// Lipschitz constant of the Hamiltonian.
    pub fn is_monotone_for(&self, c_p: f64) -> bool {
        if c_p == 0.0 {
            self.theta >= 0.0
        } else {
            self.theta > c_p * self.lambda
        }
    }
}

/// Lax–Friedrichs numerical flux at one node:
///
/// `f(α, t, x, u, σ̃·(U₊ - U₋)/(2h), k) + (θ/λ)(U₊ - 2U₀ + U₋)/h`
///
/// `nbhd` holds `[U_{i-1}, U_i, U_{i+1}]`.
#[allow(clippy::too_many_arguments)]
pub fn lf_flux(
    driver: &dyn Driver,
    alpha: f64,
    t: f64,
    x: f64,
    u: f64,
    nbhd: [f64; 3],
    k_val: f64,
    sigma_tilde: f64,
    p: &FluxParams,
) -> f64 {
    let grad = (nbhd[2] - nbhd[0]) / (2.0 * p.h);
    let curv = nbhd[2] - 2.0 * nbhd[1] + nbhd[0];
    driver.eval(alpha, t, x, u, sigma_tilde * grad, k_val) + p.theta / p.lambda * curv / p.h
}
