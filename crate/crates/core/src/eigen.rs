//! Generalized tridiagonal eigenproblems `A x = lambda M x` with diagonal `M`.
//!
//! Eigenvalues are located by Sturm-count bisection on `M^{-1/2} A M^{-1/2}`
//! and eigenvectors by shift-invert inverse iteration.

use std::sync::Arc;

use crate::banded::{dot, SymTridiag};
use crate::domain::{Domain, Field};
use crate::error::{MassflowError, Result};

/// Lowest eigenpairs, vectors orthonormal in the weighted inner product.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// `A x = lambda diag(w) x`, reduced to a standard symmetric problem.
#[derive(Clone, Debug)]
pub struct GeneralizedTridiag {
    scaled: SymTridiag,
    inv_sqrt_w: Vec<f64>,
}

impl GeneralizedTridiag {
    pub fn new(a: &SymTridiag, w: &[f64]) -> Self {
        let inv_sqrt_w: Vec<f64> = w.iter().map(|x| 1.0 / x.sqrt()).collect();
        let diag = a
            .diag
            .iter()
            .zip(&inv_sqrt_w)
            .map(|(d, s)| d * s * s)
            .collect();
        let off = a
            .off
            .iter()
            .enumerate()
            .map(|(i, e)| e * inv_sqrt_w[i] * inv_sqrt_w[i + 1])
            .collect();
        Self {
            scaled: SymTridiag::new(diag, off),
            inv_sqrt_w,
        }
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        self.scaled.count_below(sigma)
    }

    /// The `j`-th eigenvalue (0-based), bisected to near machine precision.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.scaled.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Lowest `m` eigenpairs.
    pub fn lowest(&self, m: usize) -> Result<EigenPairs> {
        let n = self.len();
        if m > n {
            return Err(MassflowError::InvalidInput(format!(
                "asked for {m} eigenpairs of a size-{n} problem"
            )));
        }
        let mut values = Vec::with_capacity(m);
        let mut ys: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let lam = self.eigenvalue(j);
            let y = self.inverse_iteration(lam, &ys)?;
            values.push(lam);
            ys.push(y);
        }
        let vectors = ys
            .into_iter()
            .map(|y| {
                let mut x: Vec<f64> = y.iter().zip(&self.inv_sqrt_w).map(|(a, b)| a * b).collect();
                fix_sign(&mut x);
                x
            })
            .collect();
        Ok(EigenPairs { values, vectors })
    }

    fn inverse_iteration(&self, lam: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.len();
        let (glo, ghi) = self.scaled.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(lam.abs()).max(1.0);
        let mut shift = lam;
        let lu = loop {
            let shifted = self.scaled.plus_diag(&vec![-shift; n]);
            match shifted.factor() {
                Ok(lu) => break lu,
                Err(_) => shift -= 1e-12 * scale,
            }
        };
        let mut y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).sin())
            .collect();
        let mut residual = f64::INFINITY;
        let max_iter = 30;
        for it in 0..max_iter {
            lu.solve_in_place(&mut y);
            for q in previous {
                let c = dot(q, &y);
                y.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let nrm = dot(&y, &y).sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(MassflowError::NoConvergence {
                    what: "inverse iteration",
                    iterations: it + 1,
                    residual,
                });
            }
            y.iter_mut().for_each(|a| *a /= nrm);
            let sy = self.scaled.matvec(&y);
            residual = sy
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - lam * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if it >= 1 && residual <= 1e-12 * scale {
                return Ok(y);
            }
        }
        Err(MassflowError::NoConvergence {
            what: "inverse iteration",
            iterations: max_iter,
            residual,
        })
    }
}

/// Make the first clearly nonzero entry positive.
fn fix_sign(x: &mut [f64]) {
    let m = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-3 * m) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Lowest `m` Dirichlet eigenpairs of the domain, as fields with unit mass.
pub fn dirichlet_eigenpairs(domain: &Arc<Domain>, m: usize) -> Result<(Vec<f64>, Vec<Field>)> {
    let g = GeneralizedTridiag::new(domain.stiffness(), domain.weights());
    let pairs = g.lowest(m)?;
    let fields = pairs
        .vectors
        .into_iter()
        .map(|v| Field {
            domain: domain.clone(),
            values: v,
        })
        .collect();
    Ok((pairs.values, fields))
}

/// The `k`-th (1-based) Dirichlet eigenvalue.
pub fn dirichlet_eigenvalue(domain: &Domain, k: usize) -> f64 {
    GeneralizedTridiag::new(domain.stiffness(), domain.weights()).eigenvalue(k - 1)
}
