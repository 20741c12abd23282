//! Energy, action and gradients on the unit mass sphere.
//!
//! For `u` on the sphere `∫u² = 1` the energy is
//! `E(u) = ½∫|∇u|² − (μ/p)∫|u|^p` and the Lagrange multiplier of a critical
//! point is `λ = ∫|∇u|² − μ∫|u|^p`. Descent directions use the H¹₀ metric
//! `⟨a, b⟩ = aᵀKb`, while the constraint is the L² sphere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, RadialGrid};

/// Tolerance on `‖u‖₂ − 1` for operations defined only on the sphere.
pub const SPHERE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub mu: f64,
    pub exponent: f64,
}

/// `2N/(N−2)`.
pub fn critical_exponent(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

impl EnergyParams {
    /// Critical exponent `p = 2*`. `mu = 0` gives the linear problem.
    pub fn critical(dim: usize, mu: f64) -> Result<Self> {
        if dim < 3 {
            return Err(invalid(format!("dimension must be at least 3, got {dim}")));
        }
        Self::with_exponent(dim, mu, critical_exponent(dim))
    }

    /// Exponent in the mass-supercritical range `2 + 4/N < p ≤ 2*`.
    pub fn with_exponent(dim: usize, mu: f64, exponent: f64) -> Result<Self> {
        if dim < 3 {
            return Err(invalid(format!("dimension must be at least 3, got {dim}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid(format!(
                "mu must be nonnegative and finite, got {mu}"
            )));
        }
        let lo = 2.0 + 4.0 / dim as f64;
        let hi = critical_exponent(dim);
        if !(exponent > lo && exponent <= hi * (1.0 + 1e-15)) {
            return Err(invalid(format!(
                "exponent {exponent} outside ({lo}, {hi}] for dimension {dim}"
            )));
        }
        Ok(Self { mu, exponent })
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }
}

/// `|x|^p`, using integer powers where possible.
#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 6.0 {
        let y = x * x;
        y * y * y
    } else if p == 4.0 {
        let y = x * x;
        y * y
    } else {
        x.abs().powf(p)
    }
}

/// `|x|^{p−2} x`.
#[inline]
pub(crate) fn nonlinearity(x: f64, p: f64) -> f64 {
    if p == 6.0 {
        let y = x * x;
        y * y * x
    } else if p == 4.0 {
        x * x * x
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

/// Scalar pieces of the energy at a point, computed together.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Parts {
    pub grad_sq: f64,
    pub pow_p: f64,
    pub mass: f64,
}

impl Parts {
    pub fn of(g: &RadialGrid, u: &[f64], p: f64) -> Self {
        let grad_sq = g.dirichlet_raw(u);
        let mut pow_p = 0.0;
        let mut mass = 0.0;
        for (x, w) in u.iter().zip(g.weights()) {
            pow_p += w * abs_pow(*x, p);
            mass += w * x * x;
        }
        Self {
            grad_sq,
            pow_p,
            mass,
        }
    }

    pub fn energy(&self, params: &EnergyParams) -> f64 {
        0.5 * self.grad_sq - params.mu / params.exponent * self.pow_p
    }

    pub fn multiplier(&self, params: &EnergyParams) -> f64 {
        self.grad_sq - params.mu * self.pow_p
    }
}

pub fn energy(g: &RadialGrid, u: &Field, params: &EnergyParams) -> Result<f64> {
    g.check(u)?;
    Ok(Parts::of(g, u.values(), params.exponent).energy(params))
}

/// `I(u) = E(u) − (λ/2)∫u²`.
pub fn action(g: &RadialGrid, u: &Field, lambda: f64, params: &EnergyParams) -> Result<f64> {
    g.check(u)?;
    let parts = Parts::of(g, u.values(), params.exponent);
    Ok(parts.energy(params) - 0.5 * lambda * parts.mass)
}

pub fn grad_norm_sq(g: &RadialGrid, u: &Field) -> Result<f64> {
    g.dirichlet_form(u)
}

pub(crate) fn require_unit(g: &RadialGrid, u: &Field) -> Result<()> {
    let norm = g.norm(u)?;
    if (norm - 1.0).abs() > SPHERE_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// `λ = ∫|∇u|² − μ∫|u|^p`; defined only on the sphere.
pub fn multiplier(g: &RadialGrid, u: &Field, params: &EnergyParams) -> Result<f64> {
    require_unit(g, u)?;
    Ok(Parts::of(g, u.values(), params.exponent).multiplier(params))
}

/// L² representative of the action gradient, `−Δu − λu − μ|u|^{p−2}u`.
pub fn free_gradient(
    g: &RadialGrid,
    u: &Field,
    lambda: f64,
    params: &EnergyParams,
) -> Result<Field> {
    g.check(u)?;
    let ku = g.stiffness_apply(u.values());
    let v = ku
        .iter()
        .zip(u.values())
        .zip(g.weights())
        .map(|((k, x), w)| k / w - lambda * x - params.mu * nonlinearity(*x, params.exponent))
        .collect();
    Ok(Field::new(g.id(), v))
}

/// H¹₀ representative of the action gradient, `(−Δ)⁻¹` applied to
/// [`free_gradient`]; computed as `u − K⁻¹W(λu + μ|u|^{p−2}u)`.
pub fn preconditioned_gradient(
    g: &RadialGrid,
    u: &Field,
    lambda: f64,
    params: &EnergyParams,
) -> Result<Field> {
    g.check(u)?;
    let src: Vec<f64> = u
        .values()
        .iter()
        .map(|&x| lambda * x + params.mu * nonlinearity(x, params.exponent))
        .collect();
    let y = g.riesz_raw(&src);
    let v = u.values().iter().zip(&y).map(|(a, b)| a - b).collect();
    Ok(Field::new(g.id(), v))
}

/// `v − ⟨v, u⟩₂ u`.
pub fn tangent_project(g: &RadialGrid, v: &Field, u: &Field) -> Result<Field> {
    require_unit(g, u)?;
    let c = g.dot(v, u)?;
    v.add_scaled(-c, u)
}

/// `u/‖u‖₂`.
pub fn retract(g: &RadialGrid, u: &Field) -> Result<Field> {
    let n = g.norm(u)?;
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroField);
    }
    Ok(u.scale(1.0 / n))
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    /// L² action gradient at the multiplier `λ(u)`.
    pub free_grad: Field,
    /// Its projection onto the L² tangent space at `u`.
    pub tangential_grad: Field,
    pub multiplier: f64,
    /// H¹₀ norm of the Riemannian gradient in the H¹₀ metric.
    pub residual_norm: f64,
}

pub fn gradient_report(g: &RadialGrid, u: &Field, params: &EnergyParams) -> Result<GradientReport> {
    let lambda = multiplier(g, u, params)?;
    let free_grad = free_gradient(g, u, lambda, params)?;
    let tangential_grad = tangent_project(g, &free_grad, u)?;
    let (sg, _) = sobolev_gradient_raw(g, u.values(), params);
    let residual_norm = g.dirichlet_raw(&sg).sqrt();
    Ok(GradientReport {
        free_grad,
        tangential_grad,
        multiplier: lambda,
        residual_norm,
    })
}

/// Riemannian gradient of `E` on the L² sphere in the H¹₀ metric.
///
/// Returns `(G, θ)` with `G = K⁻¹W(∇E − θu)` and `θ` chosen so that
/// `⟨G, u⟩₂ = 0`. At a critical point `G = 0` and `θ = λ`.
pub fn sobolev_gradient(g: &RadialGrid, u: &Field, params: &EnergyParams) -> Result<(Field, f64)> {
    g.check(u)?;
    let (v, theta) = sobolev_gradient_raw(g, u.values(), params);
    Ok((Field::new(g.id(), v), theta))
}

pub(crate) fn sobolev_gradient_raw(
    g: &RadialGrid,
    u: &[f64],
    params: &EnergyParams,
) -> (Vec<f64>, f64) {
    let nl: Vec<f64> = u
        .iter()
        .map(|&x| params.mu * nonlinearity(x, params.exponent))
        .collect();
    let y = g.riesz_raw(&nl);
    let z = g.riesz_raw(u);
    let g0: Vec<f64> = u.iter().zip(&y).map(|(a, b)| a - b).collect();
    let theta = g.dot_raw(&g0, u) / g.dot_raw(&z, u);
    let out = g0.iter().zip(&z).map(|(a, b)| a - theta * b).collect();
    (out, theta)
}
