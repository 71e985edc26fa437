//! Random smooth fields built from low Dirichlet modes.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{cone_distances, normalize_mass, Domain};
use crate::eigen::dirichlet_eigenpairs;
use crate::error::Result;

pub struct RandomFields {
    domain: Arc<Domain>,
    modes: Vec<Vec<f64>>,
}

impl RandomFields {
    pub fn new(domain: &Arc<Domain>, n_modes: usize) -> Result<Self> {
        let (_, fields) = dirichlet_eigenpairs(domain, n_modes)?;
        Ok(Self {
            domain: domain.clone(),
            modes: fields.into_iter().map(|f| f.values).collect(),
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// Gaussian coefficients with a random algebraic decay, normalized to mass `mu`.
    pub fn sample<R: Rng>(&self, rng: &mut R, mu: f64) -> Vec<f64> {
        let decay: f64 = rng.random_range(0.5..2.5);
        let mut u = vec![0.0; self.domain.len()];
        loop {
            for (j, m) in self.modes.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                let c = z / ((j + 1) as f64).powf(decay);
                u.iter_mut().zip(m).for_each(|(a, b)| *a += c * b);
            }
            if self.domain.mass(&u) > 0.0 {
                break;
            }
        }
        normalize_mass(&self.domain, &mut u, mu).expect("nonzero sample");
        u
    }

    /// A sample with `int |grad u|^2 < rho`, if one is found in a few tries.
    pub fn sample_in_ball<R: Rng>(&self, rng: &mut R, mu: f64, rho: f64) -> Option<Vec<f64>> {
        (0..100)
            .map(|_| self.sample(rng, mu))
            .find(|u| self.domain.dirichlet(u) < rho)
    }

    /// A field of mass `mu` whose negative part has gradient norm `target`
    /// (or less when even the raw sample is closer to the cone).
    pub fn near_positive_cone<R: Rng>(
        &self,
        rng: &mut R,
        mu: f64,
        target: f64,
    ) -> Option<Vec<f64>> {
        let base = self.sample(rng, mu);
        let pos: Vec<f64> = base.iter().map(|x| x.max(0.0)).collect();
        let neg: Vec<f64> = base.iter().map(|x| x.min(0.0)).collect();
        if self.domain.mass(&pos) == 0.0 {
            return None;
        }
        let build = |c: f64| -> Vec<f64> {
            let mut u: Vec<f64> = pos.iter().zip(&neg).map(|(a, b)| a + c * b).collect();
            normalize_mass(&self.domain, &mut u, mu).expect("positive part nonzero");
            u
        };
        let dplus = |c: f64| cone_distances(&self.domain, &build(c)).0;
        if dplus(1.0) <= target {
            return Some(build(1.0));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dplus(mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(build(lo))
    }
}
