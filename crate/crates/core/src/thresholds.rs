//! Closed-form thresholds and level bounds.
//!
//! With `S` the Sobolev constant and `λ₁` the principal Dirichlet eigenvalue:
//!
//! * `μ* = (2S^{N/2}/(Nλ₁))^{2/(N−2)}` and `ρ* = (2S^{N/2}/(Nλ₁))^{1/2}`;
//! * `ᾱ(μ) = S^{N/2}μ^{1−N/2}`, the gradient-norm radius of the trapping ball;
//! * `quantum(μ) = ᾱ(μ)/N`, the energy carried by one concentrating bubble;
//! * `g(μ) = quantum(μ) + h(μ)`, an upper bound for the mountain-pass level.

use serde::{Deserialize, Serialize};

use crate::bubbles::sobolev_constant;
use crate::energy::{require_unit, EnergyParams};
use crate::error::{invalid, Result};
use crate::grid::{principal_eigenpair, Field, RadialGrid};

/// Relative width of the band classified as the boundary of the trapping ball.
pub const BOUNDARY_BAND: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub dim: usize,
    pub sobolev: f64,
    pub lambda1: f64,
    pub mu_star: f64,
    pub rho_star: f64,
    /// `λ₁` of the inscribed ball; enters `h(μ)` in three dimensions.
    pub lambda1_inner_ball: Option<f64>,
}

impl ThresholdSet {
    pub fn new(dim: usize, lambda1: f64) -> Result<Self> {
        if dim < 3 {
            return Err(invalid(format!("dimension must be at least 3, got {dim}")));
        }
        if !(lambda1 > 0.0) {
            return Err(invalid(format!("lambda1 must be positive, got {lambda1}")));
        }
        let sobolev = sobolev_constant(dim)?;
        let nf = dim as f64;
        let base = 2.0 * sobolev.powf(nf / 2.0) / (nf * lambda1);
        Ok(Self {
            dim,
            sobolev,
            lambda1,
            mu_star: base.powf(2.0 / (nf - 2.0)),
            rho_star: base.sqrt(),
            lambda1_inner_ball: None,
        })
    }

    /// Thresholds of the ball carried by `g`; the inscribed ball is the domain itself.
    pub fn for_grid(g: &RadialGrid) -> Result<Self> {
        let e = principal_eigenpair(g)?;
        let mut t = Self::new(g.dim(), e.lambda1)?;
        if g.dim() == 3 {
            t.lambda1_inner_ball = Some(e.lambda1);
        }
        Ok(t)
    }

    pub fn alpha_bar(&self, mu: f64) -> f64 {
        alpha_bar(self.sobolev, mu, self.dim)
    }

    pub fn quantum(&self, mu: f64) -> f64 {
        mp_quantum(self.sobolev, mu, self.dim)
    }

    /// Default upper end of the mountain-pass range.
    pub fn mu_double_star(&self) -> f64 {
        0.5 * self.mu_star
    }

    pub fn g_upper(&self, mu: f64, c: f64) -> Result<f64> {
        g_upper(self, mu, c)
    }
}

/// `S^{N/2} μ^{1−N/2}`.
pub fn alpha_bar(sobolev: f64, mu: f64, dim: usize) -> f64 {
    let nf = dim as f64;
    sobolev.powf(nf / 2.0) * mu.powf(1.0 - nf / 2.0)
}

/// `(1/N) S^{N/2} μ^{1−N/2}`.
pub fn mp_quantum(sobolev: f64, mu: f64, dim: usize) -> f64 {
    alpha_bar(sobolev, mu, dim) / dim as f64
}

/// Maximizer and maximum of `s ↦ As/2 − B s^{2*/2}/2*` over `s > 0`.
pub fn fmax(a: f64, b: f64, dim: usize) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid(format!("fmax needs A, B > 0, got ({a}, {b})")));
    }
    if dim < 3 {
        return Err(invalid(format!("dimension must be at least 3, got {dim}")));
    }
    let nf = dim as f64;
    let s_bar = (a / b).powf(nf / 2.0 - 1.0);
    let value = a.powf(nf / 2.0) / b.powf(nf / 2.0 - 1.0) / nf;
    Ok((s_bar, value))
}

/// The lower-order correction `h(μ)`.
pub fn h_term(dim: usize, mu: f64, c: f64, lambda1_inner: Option<f64>) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    let nf = dim as f64;
    match dim {
        3 => {
            let l = lambda1_inner
                .ok_or_else(|| invalid("N = 3 needs the eigenvalue of the inscribed ball"))?;
            Ok(0.25 * l + c * mu.sqrt())
        }
        4 => {
            if mu >= 1.0 {
                return Err(invalid(format!("N = 4 bound needs mu < 1, got {mu}")));
            }
            Ok(c / mu.ln().abs())
        }
        _ => Ok(c * mu.powf((nf - 2.0) * (nf - 4.0) / 4.0)),
    }
}

/// `dh/dμ`.
pub fn h_derivative(dim: usize, mu: f64, c: f64) -> f64 {
    let nf = dim as f64;
    match dim {
        3 => 0.5 * c / mu.sqrt(),
        4 => c / (mu * mu.ln().powi(2)),
        _ => {
            let k = (nf - 2.0) * (nf - 4.0) / 4.0;
            c * k * mu.powf(k - 1.0)
        }
    }
}

/// `g(μ) = quantum(μ) + h(μ)`.
pub fn g_upper(t: &ThresholdSet, mu: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid(format!(
            "the constant in h must be positive, got {c}"
        )));
    }
    Ok(t.quantum(mu) + h_term(t.dim, mu, c, t.lambda1_inner_ball)?)
}

/// `g′(μ)`.
pub fn g_derivative(t: &ThresholdSet, mu: f64, c: f64) -> f64 {
    let nf = t.dim as f64;
    let dq = (1.0 - nf / 2.0) / nf * t.sobolev.powf(nf / 2.0) * mu.powf(-nf / 2.0);
    dq + h_derivative(t.dim, mu, c)
}

/// Relative slack `δ(μ)` in the derivative bound `|c′_μ| ≤ (1 + δ(μ))|g′(μ)|`.
pub fn delta_mu(t: &ThresholdSet, mu: f64) -> f64 {
    let nf = t.dim as f64;
    match t.dim {
        3 => delta0_n3(t) * mu.sqrt(),
        4 => mu / mu.ln().abs().sqrt(),
        _ => mu.powf(nf / 2.0 - 0.5),
    }
}

/// `δ₀` for three dimensions: 10% above the smallest value with
/// `(1/3) S^{3/2} δ₀ > λ₁(B_R)/4`.
pub fn delta0_n3(t: &ThresholdSet) -> f64 {
    let l = t.lambda1_inner_ball.unwrap_or(t.lambda1);
    1.1 * 0.75 * l / t.sobolev.powf(1.5)
}

/// Frozen constants `C` of `h(μ)` for the unit ball, one per dimension.
///
/// Each is the smallest `C` for which the sup of the plateau bubble arc stays
/// below `g(μ)` for `μ*/128 ≤ μ < μ*/2` (and `μ < 1` when `N = 4`), rounded
/// up. See [`crate::mountainpass::calibrate_g_constant`].
pub fn frozen_g_constant(dim: usize) -> Option<f64> {
    match dim {
        3 => Some(G_CONSTANT_N3),
        4 => Some(G_CONSTANT_N4),
        5 => Some(G_CONSTANT_N5),
        _ => None,
    }
}

/// In three dimensions the arc never exceeds `quantum + λ₁/4`; the floor
/// of the calibration is used.
pub const G_CONSTANT_N3: f64 = 1e-3;
/// Grows with resolution at the small end of the range; extrapolates to about 1.65.
pub const G_CONSTANT_N4: f64 = 1.7;
pub const G_CONSTANT_N5: f64 = 0.21;

/// Absolute slack allowed on top of `g(μ)` when auditing computed levels.
pub const G_FIT_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `‖∇u‖² < ᾱ(μ)`.
    InsideB,
    /// `‖∇u‖² = ᾱ(μ)` up to the band.
    OnU,
    Outside,
}

pub fn classify(
    g: &RadialGrid,
    u: &Field,
    params: &EnergyParams,
    t: &ThresholdSet,
) -> Result<Geometry> {
    require_unit(g, u)?;
    let a = t.alpha_bar(params.mu);
    Ok(classify_value(g.dirichlet_form(u)?, a))
}

pub fn classify_value(grad_norm_sq: f64, alpha: f64) -> Geometry {
    let d = (grad_norm_sq - alpha) / alpha;
    if d.abs() <= BOUNDARY_BAND {
        Geometry::OnU
    } else if d < 0.0 {
        Geometry::InsideB
    } else {
        Geometry::Outside
    }
}

/// `μ = ρ^{4/(N−2)}`.
pub fn mu_from_rho(rho: f64, dim: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(match dim {
        3 => rho.powi(4),
        4 => rho * rho,
        6 => rho,
        _ => rho.powf(4.0 / (dim as f64 - 2.0)),
    })
}

/// `ρ = μ^{(N−2)/4}`.
pub fn rho_from_mu(mu: f64, dim: usize) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    Ok(match dim {
        3 => mu.sqrt().sqrt(),
        4 => mu.sqrt(),
        6 => mu,
        _ => mu.powf((dim as f64 - 2.0) / 4.0),
    })
}

/// Maps a unit-mass solution `u` of the `μ`-problem to `U = ρu`, a solution
/// with mass `ρ²` of the problem with unit coupling and the same `λ`.
pub fn rescale_solution(u: &Field, rho: f64) -> Field {
    u.scale(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_algebra() {
        let s = 3.7;
        for dim in [3, 4, 5, 6] {
            assert!((alpha_bar(s, s, dim) - s).abs() < 1e-12);
            assert!((mp_quantum(s, 0.3, dim) - alpha_bar(s, 0.3, dim) / dim as f64).abs() < 1e-14);
        }
        let a = alpha_bar(s, 0.8, 4);
        assert!((alpha_bar(s, 0.4, 4) - 2.0 * a).abs() < 1e-12);
        let q = mp_quantum(s, 1.0, 4);
        assert!((q - s * s / 4.0).abs() < 1e-14);
    }

    #[test]
    fn fmax_unit_case() {
        let (s, v) = fmax(1.0, 1.0, 4).unwrap();
        assert_eq!((s, v), (1.0, 0.25));
        assert!(fmax(0.0, 1.0, 3).is_err());
        assert!(fmax(1.0, -1.0, 3).is_err());
    }

    #[test]
    fn fmax_reproduces_quantum() {
        let t = ThresholdSet::new(5, 20.0).unwrap();
        let mu = 0.37;
        let b = mu * t.sobolev.powf(-critical(5) / 2.0);
        let (s, v) = fmax(1.0, b, 5).unwrap();
        assert!((s / t.alpha_bar(mu) - 1.0).abs() < 1e-12);
        assert!((v / t.quantum(mu) - 1.0).abs() < 1e-12);
    }

    fn critical(dim: usize) -> f64 {
        crate::energy::critical_exponent(dim)
    }

    #[test]
    fn star_constants_consistent() {
        for dim in [3, 4, 5, 6] {
            let t = ThresholdSet::new(dim, 9.0).unwrap();
            let mu = mu_from_rho(t.rho_star, dim).unwrap();
            assert!((mu / t.mu_star - 1.0).abs() < 1e-13, "N={dim}");
        }
    }

    #[test]
    fn h_branches() {
        assert!((h_term(5, 0.16, 2.0, None).unwrap() - 2.0 * 0.16f64.powf(0.75)).abs() < 1e-14);
        assert!((h_term(4, 0.5, 1.0, None).unwrap() - 1.0 / 2f64.ln()).abs() < 1e-14);
        assert!(h_term(4, 1.5, 1.0, None).is_err());
        assert!(h_term(3, 0.1, 1.0, None).is_err());
        let pi2 = std::f64::consts::PI.powi(2);
        let h = h_term(3, 1e-30, 1.0, Some(pi2)).unwrap();
        assert!((h - pi2 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn g_derivative_matches_difference_quotient() {
        let mut t = ThresholdSet::new(3, 9.87).unwrap();
        t.lambda1_inner_ball = Some(9.87);
        for dim_t in [
            t,
            ThresholdSet::new(4, 5.0).unwrap(),
            ThresholdSet::new(5, 20.0).unwrap(),
        ] {
            let mu = 0.2;
            let c = 1.3;
            let d = 1e-6;
            let fd = (g_upper(&dim_t, mu + d, c).unwrap() - g_upper(&dim_t, mu - d, c).unwrap())
                / (2.0 * d);
            let an = g_derivative(&dim_t, mu, c);
            assert!((fd / an - 1.0).abs() < 1e-6, "N={}", dim_t.dim);
        }
    }

    #[test]
    fn g_rejects_nonpositive_constant() {
        let t = ThresholdSet::new(5, 20.0).unwrap();
        assert!(g_upper(&t, 0.5, 0.0).is_err());
    }

    #[test]
    fn classify_band() {
        assert_eq!(classify_value(1.0, 2.0), Geometry::InsideB);
        assert_eq!(classify_value(2.0, 2.0), Geometry::OnU);
        assert_eq!(classify_value(2.0 * (1.0 + 5e-9), 2.0), Geometry::OnU);
        assert_eq!(classify_value(3.0, 2.0), Geometry::Outside);
    }

    #[test]
    fn change_of_variables() {
        assert_eq!(mu_from_rho(1.0, 3).unwrap(), 1.0);
        assert_eq!(mu_from_rho(2.0, 4).unwrap(), 4.0);
        assert!(mu_from_rho(0.0, 3).is_err());
        assert!(rho_from_mu(-1.0, 3).is_err());
    }

    #[test]
    fn delta0_admissible() {
        let mut t = ThresholdSet::new(3, 9.87).unwrap();
        t.lambda1_inner_ball = Some(9.87);
        let d0 = delta0_n3(&t);
        assert!(t.sobolev.powf(1.5) * d0 / 3.0 > 9.87 / 4.0);
    }
}
