//! Cell-centred finite-volume discretization of radial functions on a ball.
//!
//! The ball `B_R ⊂ R^N` is cut into `n` spherical shells of width `h = R/n`.
//! Unknowns live at the shell midpoints `r_i = (i + 1/2) h`; the Dirichlet
//! condition sits on the outer face `r = R`. Mass weights are exact shell
//! volumes and the stiffness matrix `K` is assembled from face fluxes, so that
//! `uᵀKu` is the discrete Dirichlet integral and `-Δ = W⁻¹K` holds exactly
//! (summation by parts is built in).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::tridiag::{LdlFactor, SymTridiag};

/// Identity of a grid, used to reject arithmetic between unrelated fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridId {
    pub dim: usize,
    radius_bits: u64,
    pub n: usize,
}

impl GridId {
    pub fn radius(&self) -> f64 {
        f64::from_bits(self.radius_bits)
    }
}

#[derive(Debug)]
struct GridData {
    id: GridId,
    h: f64,
    omega: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Areas of the faces `r = k h`, `k = 0..=n`.
    faces: Vec<f64>,
    stiffness: SymTridiag,
    factor: LdlFactor,
}

/// Immutable radial grid; cheap to clone and safe to share across threads.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    inner: Arc<GridData>,
}

/// Surface measure of the unit sphere in `R^dim`, `2π^{N/2}/Γ(N/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// `Γ(k/2)` for a positive integer `k`, by the exact half-integer recursion.
pub fn gamma_half(k: usize) -> f64 {
    assert!(k >= 1);
    let (mut x, mut g) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while x < k as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Default node count: 4096 in three dimensions, 2048 otherwise.
pub fn default_nodes(dim: usize) -> usize {
    if dim == 3 {
        4096
    } else {
        2048
    }
}

pub fn make_radial_grid(dim: usize, radius: f64, n: usize) -> Result<RadialGrid> {
    RadialGrid::new(dim, radius, n)
}

impl RadialGrid {
    pub fn new(dim: usize, radius: f64, n: usize) -> Result<Self> {
        if dim < 3 {
            return Err(invalid(format!("dimension must be at least 3, got {dim}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        if n < 16 {
            return Err(invalid(format!("need at least 16 nodes, got {n}")));
        }
        let nf = dim as f64;
        let h = radius / n as f64;
        let omega = unit_sphere_area(dim);
        let faces: Vec<f64> = (0..=n)
            .map(|k| omega * (k as f64 * h).powi(dim as i32 - 1))
            .collect();
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let a = i as f64 * h;
                let b = a + h;
                omega * (b.powi(dim as i32) - a.powi(dim as i32)) / nf
            })
            .collect();

        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n {
            let outer = if i + 1 == n {
                2.0 * faces[n]
            } else {
                faces[i + 1]
            };
            diag[i] = (faces[i] + outer) / h;
            if i + 1 < n {
                off[i] = -faces[i + 1] / h;
            }
        }
        let stiffness = SymTridiag::new(diag, off);
        let factor = stiffness.factor_spd()?;
        let id = GridId {
            dim,
            radius_bits: radius.to_bits(),
            n,
        };
        Ok(Self {
            inner: Arc::new(GridData {
                id,
                h,
                omega,
                nodes,
                weights,
                faces,
                stiffness,
                factor,
            }),
        })
    }

    pub fn id(&self) -> GridId {
        self.inner.id
    }

    pub fn dim(&self) -> usize {
        self.inner.id.dim
    }

    pub fn radius(&self) -> f64 {
        self.inner.id.radius()
    }

    pub fn n(&self) -> usize {
        self.inner.id.n
    }

    pub fn spacing(&self) -> f64 {
        self.inner.h
    }

    pub fn omega(&self) -> f64 {
        self.inner.omega
    }

    pub fn nodes(&self) -> &[f64] {
        &self.inner.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.inner.stiffness
    }

    /// Volume of the ball, `ω R^N / N`.
    pub fn volume(&self) -> f64 {
        self.omega() * self.radius().powi(self.dim() as i32) / self.dim() as f64
    }

    pub fn zeros(&self) -> Field {
        Field::new(self.id(), vec![0.0; self.n()])
    }

    /// Samples a radial profile at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.id(), self.nodes().iter().map(|&r| f(r)).collect())
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        if f.grid == self.id() && f.values.len() == self.n() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `Σ w_i |f_i|^power`.
    pub fn integrate(&self, f: &Field, power: f64) -> Result<f64> {
        self.check(f)?;
        if !(power >= 1.0) {
            return Err(invalid(format!("power must be at least 1, got {power}")));
        }
        Ok(self.integrate_abs_pow(&f.values, power))
    }

    pub(crate) fn integrate_abs_pow(&self, v: &[f64], power: f64) -> f64 {
        let w = self.weights();
        if power == 2.0 {
            v.iter().zip(w).map(|(x, w)| w * x * x).sum()
        } else {
            v.iter().zip(w).map(|(x, w)| w * x.abs().powf(power)).sum()
        }
    }

    /// Weighted L² inner product.
    pub fn dot(&self, a: &Field, b: &Field) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dot_raw(&a.values, &b.values))
    }

    pub(crate) fn dot_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.weights())
            .map(|((x, y), w)| w * x * y)
            .sum()
    }

    pub fn norm(&self, f: &Field) -> Result<f64> {
        Ok(self.dot(f, f)?.sqrt())
    }

    /// Discrete Dirichlet integral `∫|∇u|²`, summed over faces.
    pub fn dirichlet_form(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        Ok(self.dirichlet_raw(&f.values))
    }

    pub(crate) fn dirichlet_raw(&self, u: &[f64]) -> f64 {
        let h = self.spacing();
        let faces = &self.inner.faces;
        let n = u.len();
        let mut s = 0.0;
        for i in 0..n - 1 {
            let d = u[i + 1] - u[i];
            s += faces[i + 1] * d * d;
        }
        s += 2.0 * faces[n] * u[n - 1] * u[n - 1];
        s / h
    }

    /// Bilinear form `aᵀ K b`, the H¹₀ inner product.
    pub(crate) fn dirichlet_inner_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        let h = self.spacing();
        let faces = &self.inner.faces;
        let n = a.len();
        let mut s = 0.0;
        for i in 0..n - 1 {
            s += faces[i + 1] * (a[i + 1] - a[i]) * (b[i + 1] - b[i]);
        }
        s += 2.0 * faces[n] * a[n - 1] * b[n - 1];
        s / h
    }

    /// `K u` evaluated in flux form.
    pub(crate) fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        let faces = &self.inner.faces;
        let n = u.len();
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            let flux = faces[i + 1] * (u[i + 1] - u[i]) / h;
            out[i] -= flux;
            out[i + 1] += flux;
        }
        out[n - 1] += 2.0 * faces[n] * u[n - 1] / h;
        out
    }

    /// Discrete Laplacian `Δf = -W⁻¹ K f` with the Dirichlet condition at `R`.
    pub fn apply_laplacian(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        let mut v = self.stiffness_apply(&f.values);
        for (x, w) in v.iter_mut().zip(self.weights()) {
            *x = -*x / w;
        }
        Ok(Field::new(self.id(), v))
    }

    /// Solves `K y = W g`: the H¹₀ Riesz representative of an L² gradient.
    pub fn riesz(&self, g: &Field) -> Result<Field> {
        self.check(g)?;
        Ok(Field::new(self.id(), self.riesz_raw(&g.values)))
    }

    pub(crate) fn riesz_raw(&self, g: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = g.iter().zip(self.weights()).map(|(x, w)| x * w).collect();
        self.inner.factor.solve_in_place(&mut y);
        y
    }

    /// Outward normal derivative magnitude at `r = R`, from the flux through
    /// the boundary face used by the stiffness matrix.
    pub fn boundary_slope(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        Ok(2.0 * f.values[self.n() - 1] / self.spacing())
    }

    /// `∫_{B_R} f(|x|) dx` for a radial profile, by Gauss–Legendre on every cell.
    pub fn integrate_profile(&self, order: usize, f: impl Fn(f64) -> f64) -> f64 {
        let rule = GaussLegendre::new(order);
        let h = self.spacing();
        let k = self.dim() as i32 - 1;
        let mut total = 0.0;
        for i in 0..self.n() {
            let a = i as f64 * h;
            total += rule.integrate(a, a + h, |r| f(r) * r.powi(k));
        }
        total * self.omega()
    }
}

/// Free-function form of [`RadialGrid::integrate`].
pub fn integrate(g: &RadialGrid, f: &Field, power: f64) -> Result<f64> {
    g.integrate(f, power)
}

/// Free-function form of [`RadialGrid::apply_laplacian`].
pub fn apply_laplacian(g: &RadialGrid, f: &Field) -> Result<Field> {
    g.apply_laplacian(f)
}

/// A grid function. Values are the cell averages at the shell midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridId,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridId, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n, "field length must match the grid");
        Self { grid, values }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, c: f64) -> Field {
        Field::new(self.grid, self.values.iter().map(|x| c * x).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let v = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Field::new(self.grid, v))
    }

    pub fn abs(&self) -> Field {
        Field::new(self.grid, self.values.iter().map(|x| x.abs()).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi1: Field,
    pub iterations: usize,
    pub residual: f64,
}

const EIGEN_TOL: f64 = 1e-10;
const EIGEN_MAX_ITERS: usize = 500;

/// Principal Dirichlet eigenpair by inverse power iteration on `K x = λ W x`.
///
/// The reported residual is `‖φ − λ K⁻¹Wφ‖₂`, which stays at roundoff level
/// on fine grids where the forward residual `‖Kφ − λWφ‖` does not.
pub fn principal_eigenpair(g: &RadialGrid) -> Result<EigenPair> {
    let mut phi: Vec<f64> = g
        .nodes()
        .iter()
        .map(|&r| 1.0 - (r / g.radius()).powi(2))
        .collect();
    normalize_raw(g, &mut phi);
    let mut residual = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITERS {
        let mut next = g.riesz_raw(&phi);
        let lambda = 1.0 / g.dot_raw(&next, &phi);
        // residual of the current iterate against the inverse map
        let r: Vec<f64> = phi.iter().zip(&next).map(|(p, y)| p - lambda * y).collect();
        residual = g.dot_raw(&r, &r).sqrt();
        normalize_raw(g, &mut next);
        phi = next;
        if residual < EIGEN_TOL {
            let lambda1 = g.dirichlet_raw(&phi);
            if phi.iter().any(|&x| x <= 0.0) {
                return Err(Error::NoConvergence {
                    what: "principal eigenpair (lost positivity)",
                    iterations: it,
                    residual,
                });
            }
            return Ok(EigenPair {
                lambda1,
                phi1: Field::new(g.id(), phi),
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "principal eigenpair",
        iterations: EIGEN_MAX_ITERS,
        residual,
    })
}

fn normalize_raw(g: &RadialGrid, v: &mut [f64]) {
    let n = g.dot_raw(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_arguments() {
        assert!(RadialGrid::new(2, 1.0, 64).is_err());
        assert!(RadialGrid::new(3, 0.0, 64).is_err());
        assert!(RadialGrid::new(3, -1.0, 64).is_err());
        assert!(RadialGrid::new(3, 1.0, 15).is_err());
        assert!(RadialGrid::new(3, f64::NAN, 64).is_err());
    }

    #[test]
    fn gamma_half_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(8), 6.0);
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn volumes() {
        let g = RadialGrid::new(3, 1.0, 1024).unwrap();
        let one = g.sample(|_| 1.0);
        let v = g.integrate(&one, 1.0).unwrap();
        assert!((v / (4.0 * PI / 3.0) - 1.0).abs() < 1e-4);
        let g = RadialGrid::new(4, 1.0, 1024).unwrap();
        let v = g.integrate(&g.sample(|_| 1.0), 1.0).unwrap();
        assert!((v / (PI * PI / 2.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn spacing_and_positive_weights() {
        let g = RadialGrid::new(3, 2.0, 512).unwrap();
        assert!((g.spacing() - 2.0 / 512.0).abs() < 1e-15);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.nodes().windows(2).all(|p| p[1] > p[0]));
        assert!(g.nodes()[0] > 0.0 && *g.nodes().last().unwrap() <= 2.0);
    }

    #[test]
    fn laplacian_of_quadratic() {
        let g = RadialGrid::new(3, 1.0, 256).unwrap();
        let f = g.sample(|r| 1.0 - r * r);
        let lap = g.apply_laplacian(&f).unwrap();
        // the last cell carries the boundary closure; its error is O(1)
        for &v in &lap.values()[..g.n() - 1] {
            assert!((v + 6.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn laplacian_of_zero() {
        let g = RadialGrid::new(4, 1.0, 64).unwrap();
        let lap = g.apply_laplacian(&g.zeros()).unwrap();
        assert_eq!(lap.max_abs(), 0.0);
    }

    #[test]
    fn dirichlet_form_matches_stiffness() {
        let g = RadialGrid::new(5, 1.3, 100).unwrap();
        let f = g.sample(|r| (1.0 - r).exp() * (1.3 - r));
        let kf = g.stiffness().mul(f.values());
        let quad: f64 = kf.iter().zip(f.values()).map(|(a, b)| a * b).sum();
        let d = g.dirichlet_form(&f).unwrap();
        assert!((quad - d).abs() < 1e-10 * d);
    }

    #[test]
    fn eigenvalue_unit_ball_n3() {
        let g = RadialGrid::new(3, 1.0, 4096).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        assert!((e.lambda1 - PI * PI).abs() < 1e-3);
        assert!((g.norm(&e.phi1).unwrap() - 1.0).abs() < 1e-12);
        assert!(e.phi1.values().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn eigenvalue_scaling() {
        let g = RadialGrid::new(3, 2.0, 2048).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        assert!((e.lambda1 - PI * PI / 4.0).abs() < 1e-4);
    }

    #[test]
    fn eigen_relation_through_laplacian() {
        let g = RadialGrid::new(3, 1.0, 4096).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        let lap = g.apply_laplacian(&e.phi1).unwrap();
        let r = lap.add_scaled(e.lambda1, &e.phi1).unwrap();
        assert!(g.norm(&r).unwrap() < 1e-6);
    }

    #[test]
    fn mismatched_grids() {
        let a = RadialGrid::new(3, 1.0, 32).unwrap();
        let b = RadialGrid::new(3, 1.0, 64).unwrap();
        let c = RadialGrid::new(3, 2.0, 32).unwrap();
        assert!(matches!(
            a.integrate(&b.zeros(), 2.0),
            Err(Error::GridMismatch)
        ));
        assert!(matches!(
            a.dot(&c.zeros(), &a.zeros()),
            Err(Error::GridMismatch)
        ));
        assert!(a.zeros().add_scaled(1.0, &c.zeros()).is_err());
    }

    #[test]
    fn rejects_power_below_one() {
        let g = RadialGrid::new(3, 1.0, 32).unwrap();
        assert!(g.integrate(&g.zeros(), 0.5).is_err());
    }

    #[test]
    fn profile_quadrature_is_exact_for_polynomials() {
        let g = RadialGrid::new(3, 1.0, 16).unwrap();
        // ∫_{B_1} r² dx = 4π/5
        let v = g.integrate_profile(4, |r| r * r);
        assert!((v - 4.0 * PI / 5.0).abs() < 1e-13);
    }
}
