//! Tridiagonal linear algebra.
//!
//! The radial stiffness matrix is symmetric positive definite and is
//! factored once per grid (LDLᵀ). Newton Jacobians are symmetric but
//! indefinite and go through Gaussian elimination with partial pivoting.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// LDLᵀ factorization; fails unless every pivot is positive.
    pub fn factor_spd(&self) -> Result<LdlFactor> {
        let n = self.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        for i in 1..n {
            if d[i - 1] <= 0.0 {
                return Err(Error::Singular {
                    what: "stiffness factorization",
                    condition: f64::INFINITY,
                });
            }
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
        }
        if d[n - 1] <= 0.0 {
            return Err(Error::Singular {
                what: "stiffness factorization",
                condition: f64::INFINITY,
            });
        }
        Ok(LdlFactor { d, l })
    }
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

/// Solves `A x_k = b_k` for every right-hand side, `A` given by its
/// sub-, main and super-diagonals. Partial pivoting as in LAPACK `gtsv`.
///
/// Returns the largest ratio of row scale to final pivot magnitude as a
/// cheap condition estimate, invariant under row scaling.
pub fn solve_pivoted(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [Vec<f64>],
) -> Result<f64> {
    let n = diag.len();
    assert!(n >= 2 && lower.len() == n - 1 && upper.len() == n - 1);
    let mut d = diag.to_vec();
    let dl = lower.to_vec();
    let mut du = upper.to_vec();
    // second superdiagonal created by row interchanges
    let mut du2 = vec![0.0; n.saturating_sub(2)];

    let singular = |cond: f64| Error::Singular {
        what: "tridiagonal solve",
        condition: cond,
    };

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(singular(f64::INFINITY));
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            for b in rhs.iter_mut() {
                b[i + 1] -= fact * b[i];
            }
            if i < n - 2 {
                du2[i] = 0.0;
            }
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i < n - 2 {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            for b in rhs.iter_mut() {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - fact * b[i + 1];
            }
        }
    }

    // row interchanges only swap neighbours, so pivot i is compared with
    // the scale of original rows i and i + 1
    let row = |i: usize| {
        let mut m = diag[i].abs();
        if i > 0 {
            m = m.max(lower[i - 1].abs());
        }
        if i + 1 < n {
            m = m.max(upper[i].abs());
        }
        m
    };
    let mut cond = 0.0f64;
    for (i, &p) in d.iter().enumerate() {
        let scale = if i + 1 < n {
            row(i).max(row(i + 1))
        } else {
            row(i)
        };
        cond = cond.max(if p != 0.0 {
            scale / p.abs()
        } else {
            f64::INFINITY
        });
    }
    if !(cond < 1e14) {
        return Err(singular(cond));
    }

    for b in rhs.iter_mut() {
        b[n - 1] /= d[n - 1];
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    }
    Ok(cond)
}
