//! The mass-constrained linear solve `w = G(u)`:
//! `-Lap w + lambda_bar w = tau |u|^{p-2} u + omega u` with `int w u = mu`,
//! its multiplier `omega`, the pseudogradient `V = u - w` and cone geometry.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::banded::{dot, SymTridiag, TridiagLu};
use crate::domain::{cone_distances as raw_cone_distances, Domain, Field};
use crate::error::{MassflowError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub tau: f64,
    pub lambda_bar: f64,
    pub rho: f64,
    pub mu: f64,
    pub p: f64,
}

#[derive(Clone, Debug)]
pub struct GResult {
    pub w: Vec<f64>,
    pub omega: f64,
    /// Dual-norm residual of the linear system.
    pub residual: f64,
    pub constraint_err: f64,
}

/// Factorized `A = K + lambda_bar M`, shared read-only by all solves with the
/// same configuration.
#[derive(Clone, Debug)]
pub struct ConstrainedOperator {
    domain: Arc<Domain>,
    cfg: OperatorConfig,
    a: SymTridiag,
    lu: TridiagLu,
}

impl ConstrainedOperator {
    pub fn new(domain: Arc<Domain>, cfg: OperatorConfig) -> Result<Self> {
        if !(cfg.mu > 0.0) || !(cfg.p > 2.0) || !(cfg.tau >= 0.0) {
            return Err(MassflowError::InvalidInput(format!(
                "bad operator config {cfg:?}"
            )));
        }
        let a = domain
            .stiffness()
            .plus_diag(&domain.apply_mass(&vec![cfg.lambda_bar; domain.len()]));
        if a.count_below(0.0) > 0 {
            return Err(MassflowError::Singular(
                "K + lambda_bar M is not positive definite (lambda_bar <= -lambda_1)",
            ));
        }
        let lu = a.factor()?;
        Ok(Self { domain, cfg, a, lu })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.cfg
    }

    /// The metric matrix `K + lambda_bar M`.
    pub fn metric(&self) -> &SymTridiag {
        &self.a
    }

    /// Same factorization, different `tau`.
    pub fn with_tau(&self, tau: f64) -> Self {
        let mut op = self.clone();
        op.cfg.tau = tau;
        op
    }

    /// Load vector `tau M |u|^{p-2} u`.
    pub fn nonlinear_load(&self, u: &[f64]) -> Vec<f64> {
        let (tau, p) = (self.cfg.tau, self.cfg.p);
        self.domain
            .weights()
            .iter()
            .zip(u)
            .map(|(w, x)| tau * w * x.abs().powf(p - 2.0) * x)
            .collect()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        energy(&self.domain, u, self.cfg.tau, self.cfg.p)
    }

    pub fn check_mass(&self, u: &[f64]) -> Result<()> {
        let drift = (self.domain.mass(u) - self.cfg.mu).abs() / self.cfg.mu;
        if drift > 1e-10 {
            return Err(MassflowError::ConstraintViolated { drift });
        }
        Ok(())
    }

    /// Solve for `w = G(u)` by two solves with one factorization.
    pub fn solve_g(&self, u: &[f64]) -> Result<GResult> {
        self.check_mass(u)?;
        self.solve_g_unchecked(u)
    }

    pub(crate) fn solve_g_unchecked(&self, u: &[f64]) -> Result<GResult> {
        let mu = self.cfg.mu;
        let b = self.nonlinear_load(u);
        let mu_vec = self.domain.apply_mass(u);
        let y_b = self.lu.solve(&b);
        let y_u = self.lu.solve(&mu_vec);
        let denom = dot(&y_u, &mu_vec);
        if !(denom > 0.0) {
            return Err(MassflowError::Singular(
                "constraint pairing <A^-1 u, u> is not positive",
            ));
        }
        let omega = (mu - dot(&y_b, &mu_vec)) / denom;
        let w: Vec<f64> = y_b.iter().zip(&y_u).map(|(a, c)| a + omega * c).collect();
        let aw = self.a.matvec(&w);
        let r: Vec<f64> = aw
            .iter()
            .zip(&b)
            .zip(&mu_vec)
            .map(|((x, y), z)| x - y - omega * z)
            .collect();
        let residual = self.domain.dual_norm(&r);
        let constraint_err = (dot(&w, &mu_vec) - mu).abs();
        Ok(GResult {
            w,
            omega,
            residual,
            constraint_err,
        })
    }

    /// `V = u - G(u)` and its H^1_0 norm.
    pub fn pseudogradient(&self, u: &[f64]) -> Result<(Vec<f64>, f64, GResult)> {
        let g = self.solve_g(u)?;
        let v: Vec<f64> = u.iter().zip(&g.w).map(|(a, b)| a - b).collect();
        let nv = self.domain.h1_norm(&v);
        Ok((v, nv, g))
    }
}

/// `E_tau(u) = 1/2 int |grad u|^2 - tau/p int |u|^p`.
pub fn energy(domain: &Domain, u: &[f64], tau: f64, p: f64) -> f64 {
    0.5 * domain.dirichlet(u) - tau / p * domain.lp_integral(u, p)
}

/// Multiplier read off from a field: `(tau int |u|^p - int |grad u|^2) / mu`.
pub fn multiplier_of(domain: &Domain, u: &[f64], tau: f64, p: f64) -> f64 {
    (tau * domain.lp_integral(u, p) - domain.dirichlet(u)) / domain.mass(u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeDistances {
    pub d_plus: f64,
    pub d_minus: f64,
    pub delta: f64,
    pub in_sstar: bool,
}

impl ConeDistances {
    pub fn near_positive(&self) -> bool {
        self.d_plus <= self.delta
    }

    pub fn near_negative(&self) -> bool {
        self.d_minus <= self.delta
    }
}

pub fn cone_distances(domain: &Domain, u: &[f64], delta: f64) -> ConeDistances {
    let (d_plus, d_minus) = raw_cone_distances(domain, u);
    ConeDistances {
        d_plus,
        d_minus,
        delta,
        in_sstar: d_plus.min(d_minus) > delta,
    }
}

/// Upper limit for cone widths: below it the two cone neighbourhoods cannot
/// meet on the mass sphere.
pub fn cone_separation_bound(lambda1: f64, mu: f64) -> f64 {
    (lambda1 * mu / 2.0).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaHatReport {
    /// Largest tested width passing the contraction test.
    pub delta_hat: f64,
    /// `2 * max omega` over the samples.
    pub omega_star: f64,
    /// Largest `|{G < 0}|` seen at the accepted width.
    pub negative_measure: f64,
    /// Worst ratio `d_plus(G(u)) / d_plus(u)` at the accepted width.
    pub worst_contraction: f64,
    pub samples: usize,
}

/// Empirical cone-contraction width: the largest `delta` on a halving grid
/// such that every sampled `u` near the positive cone, inside the gradient
/// ball, is mapped by `G` to within `delta / 2` of the cone.
pub fn delta_hat_probe<R: Rng>(
    op: &ConstrainedOperator,
    lambda1: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<DeltaHatReport> {
    let domain = op.domain().clone();
    let cfg = *op.config();
    let delta_max = 0.999 * cone_separation_bound(lambda1, cfg.mu);
    let basis = crate::sampling::RandomFields::new(&domain, 16)?;
    let mut omega_max = f64::NEG_INFINITY;
    for j in 0..40 {
        let delta = delta_max * 0.5f64.powi(j);
        let mut ok = true;
        let mut neg_measure = 0.0f64;
        let mut worst = 0.0f64;
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < n_samples && attempts < 50 * n_samples {
            attempts += 1;
            let target = delta * rng.random_range(0.05..1.0);
            let Some(u) = basis.near_positive_cone(rng, cfg.mu, target) else {
                continue;
            };
            if domain.dirichlet(&u) >= cfg.rho {
                continue;
            }
            accepted += 1;
            let g = op.solve_g(&u)?;
            omega_max = omega_max.max(g.omega);
            let (dp_u, _) = raw_cone_distances(&domain, &u);
            let (dp_g, _) = raw_cone_distances(&domain, &g.w);
            neg_measure = neg_measure.max(domain.negative_measure(&g.w));
            if dp_u > 0.0 {
                worst = worst.max(dp_g / dp_u);
            }
            if dp_g > 0.5 * delta {
                ok = false;
                break;
            }
        }
        if accepted == 0 {
            continue;
        }
        if ok {
            return Ok(DeltaHatReport {
                delta_hat: delta,
                omega_star: 2.0 * omega_max.max(0.0),
                negative_measure: neg_measure,
                worst_contraction: worst,
                samples: accepted,
            });
        }
    }
    Err(MassflowError::NoConvergence {
        what: "delta_hat probe",
        iterations: 40,
        residual: f64::NAN,
    })
}

/// Convenience: a field version of `solve_g`.
pub fn solve_g(op: &ConstrainedOperator, u: &Field) -> Result<(Field, GResult)> {
    let g = op.solve_g(&u.values)?;
    Ok((
        Field {
            domain: u.domain.clone(),
            values: g.w.clone(),
        },
        g,
    ))
}
