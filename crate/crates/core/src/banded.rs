//! Symmetric tridiagonal matrices: factorization, inertia and solves.

use crate::error::{MassflowError, Result};

/// Symmetric tridiagonal matrix with `diag.len() == n` and `off.len() == n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
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
    }

    /// `x^T A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for i in 0..n {
            s += self.diag[i] * x[i] * x[i];
            if i + 1 < n {
                s += 2.0 * self.off[i] * x[i] * x[i + 1];
            }
        }
        s
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for i in 0..n {
            s += self.diag[i] * x[i] * y[i];
            if i + 1 < n {
                s += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
            }
        }
        s
    }

    /// `A + D` for a diagonal `D`.
    pub fn plus_diag(&self, d: &[f64]) -> SymTridiag {
        let diag = self.diag.iter().zip(d).map(|(a, b)| a + b).collect();
        SymTridiag {
            diag,
            off: self.off.clone(),
        }
    }

    /// `a * A + D` for scalar `a` and diagonal `D`.
    pub fn scaled_plus_diag(&self, a: f64, d: &[f64]) -> SymTridiag {
        let diag = self.diag.iter().zip(d).map(|(x, y)| a * x + y).collect();
        let off = self.off.iter().map(|x| a * x).collect();
        SymTridiag { diag, off }
    }

    /// Number of eigenvalues strictly below `sigma`, via the pivots of
    /// `A - sigma I = L D L^T`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let mut count = 0;
        let mut d = 0.0f64;
        for i in 0..n {
            let prev = if i == 0 {
                0.0
            } else {
                self.off[i - 1] * self.off[i - 1] / d
            };
            d = self.diag[i] - sigma - prev;
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + sigma.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `(negative, non-negative)` eigenvalue counts.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.count_below(0.0);
        (neg, self.len() - neg)
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn factor(&self) -> Result<TridiagLu> {
        TridiagLu::new(self)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }
}

/// LU factorization with partial pivoting of a tridiagonal matrix
/// (works for indefinite systems). The upper factor has two superdiagonals.
#[derive(Clone, Debug)]
pub struct TridiagLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    pub fn new(a: &SymTridiag) -> Result<Self> {
        let n = a.len();
        let mut dl: Vec<f64> = a.off.clone();
        let mut d: Vec<f64> = a.diag.clone();
        let mut du: Vec<f64> = a.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let scale = d
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(MassflowError::Singular("tridiagonal LU"));
                }
                let f = dl[i] / d[i];
                l[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                // swap rows i and i+1
                swapped[i] = true;
                let f = d[i] / dl[i];
                l[i] = f;
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - f * tmp;
                du[i] = tmp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
            }
            dl[i] = 0.0;
        }
        if n > 0 && d[n - 1].abs() <= 1e-300 * scale {
            return Err(MassflowError::Singular("tridiagonal LU"));
        }
        Ok(Self {
            u0: d,
            u1: du,
            u2: du2,
            l,
            swapped,
        })
    }

    pub fn len(&self) -> usize {
        self.u0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u0.is_empty()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.l[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
    }
}

/// Solve the bordered system `[[A, b], [c^T, 0]] [x; y] = [f; g]`.
pub fn bordered_solve(
    lu: &TridiagLu,
    b: &[f64],
    c: &[f64],
    f: &[f64],
    g: f64,
) -> Result<(Vec<f64>, f64)> {
    let yf = lu.solve(f);
    let zb = lu.solve(b);
    let denom = dot(c, &zb);
    if denom == 0.0 || !denom.is_finite() {
        return Err(MassflowError::Singular("bordered system"));
    }
    let y = (dot(c, &yf) - g) / denom;
    let x = yf.iter().zip(&zb).map(|(a, z)| a - y * z).collect();
    Ok((x, y))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tridiag(n: usize, seed: u64) -> SymTridiag {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let diag = (0..n).map(|_| next()).collect();
        let off = (0..n - 1).map(|_| next()).collect();
        SymTridiag::new(diag, off)
    }

    #[test]
    fn lu_solves_indefinite_systems() {
        for seed in 0..20 {
            let a = random_tridiag(50, seed);
            let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
            let b = a.matvec(&x);
            let y = a.solve(&b).unwrap();
            let err = x
                .iter()
                .zip(&y)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "seed {seed}: err {err}");
        }
    }

    #[test]
    fn sturm_count_matches_dense_spectrum_of_laplacian() {
        // -u'' on n interior nodes with unit spacing: eigenvalues 2 - 2 cos(k pi / (n+1)).
        let n = 30;
        let a = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]);
        for k in 1..=n {
            let ev = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert_eq!(a.count_below(ev - 1e-9), k - 1);
            assert_eq!(a.count_below(ev + 1e-9), k);
        }
    }

    #[test]
    fn bordered_solve_roundtrip() {
        let a = random_tridiag(40, 7);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + (i as f64).cos()).collect();
        let c: Vec<f64> = (0..40).map(|i| 0.5 + (i as f64 * 0.3).sin()).collect();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.1).exp().recip()).collect();
        let y = 0.7;
        let mut f = a.matvec(&x);
        for i in 0..40 {
            f[i] += b[i] * y;
        }
        let g = dot(&c, &x);
        let (xs, ys) = bordered_solve(&a.factor().unwrap(), &b, &c, &f, g).unwrap();
        assert!((ys - y).abs() < 1e-9);
        for i in 0..40 {
            assert!((xs[i] - x[i]).abs() < 1e-9);
        }
    }
}
