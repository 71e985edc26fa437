//! Experiment configuration: a JSON file, validated before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{exponents, Regime};
use crate::domain::{DomainSpec, MIN_NODES};
use crate::error::{MassflowError, Result};
use crate::record::sha256_hex;

/// How the cone width is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaPolicy {
    /// Half the smaller of the cone separation bound and the probed width.
    Auto,
    Fixed {
        value: f64,
    },
}

impl DeltaPolicy {
    pub fn fixed(&self) -> Option<f64> {
        match *self {
            DeltaPolicy::Auto => None,
            DeltaPolicy::Fixed { value } => Some(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowTolerances {
    /// Flow steps per trajectory.
    pub max_steps: usize,
    /// Stopping pseudogradient norm relative to `sqrt(lambda_1 mu)`.
    pub tol_pg_rel: f64,
    /// Smallest-pseudogradient iterates handed to Newton in genus searches.
    pub candidates: usize,
    /// Iteration budget of the saddle climb.
    pub climb_iterations: usize,
}

impl Default for FlowTolerances {
    fn default() -> Self {
        Self {
            max_steps: 4000,
            tol_pg_rel: 1e-8,
            candidates: 8,
            climb_iterations: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id stored with every record.
    pub id: String,
    pub domain: DomainSpec,
    pub p: f64,
    /// Masses, strictly decreasing.
    pub mu_list: Vec<f64>,
    /// Couplings in `[1/2, 1]`, strictly increasing.
    pub tau_grid: Vec<f64>,
    pub k_list: Vec<usize>,
    pub delta: DeltaPolicy,
    pub flow: FlowTolerances,
    /// Points of the multiplier grid for mass curves.
    pub curve_points: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads for sweeps; 1 runs sequentially.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "run".into(),
            domain: DomainSpec::Interval {
                a: 0.0,
                b: 1.0,
                n: 255,
            },
            p: 3.0,
            mu_list: vec![1e-2, 1e-3, 1e-4],
            tau_grid: vec![1.0],
            k_list: vec![2],
            delta: DeltaPolicy::Auto,
            flow: FlowTolerances::default(),
            curve_points: 72,
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MassflowError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| MassflowError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Spatial dimension of the domain.
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Mass-criticality regime, derived from `p` and the dimension.
    pub fn regime(&self) -> Result<Regime> {
        Ok(exponents(self.p, self.dim())?.regime)
    }

    /// Hex SHA-256 of the canonical JSON form, without the fields that
    /// cannot change results (output directory and worker count).
    pub fn sha256(&self) -> Result<String> {
        let canonical = Self {
            output_dir: PathBuf::new(),
            workers: 1,
            ..self.clone()
        };
        Ok(sha256_hex(serde_json::to_string(&canonical)?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MassflowError::Config(m));
        if self.id.is_empty() || self.id.contains('|') || self.id.contains('\n') {
            return bad(format!(
                "id {:?} must be nonempty without '|' or newlines",
                self.id
            ));
        }
        match self.domain {
            DomainSpec::Interval { a, b, n } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad(format!("interval ({a}, {b}) is empty or not finite"));
                }
                if n < MIN_NODES {
                    return bad(format!("interval needs n >= {MIN_NODES}, got {n}"));
                }
            }
            DomainSpec::Ball { dim, radius, n } => {
                if dim == 0 || !(radius.is_finite() && radius > 0.0) {
                    return bad(format!(
                        "ball of dimension {dim} and radius {radius} is invalid"
                    ));
                }
                if n < MIN_NODES {
                    return bad(format!("ball needs n >= {MIN_NODES}, got {n}"));
                }
            }
        }
        if !(self.p.is_finite() && self.p > 2.0) {
            return bad(format!("p = {} must exceed 2", self.p));
        }
        let dim = self.dim();
        if dim > 2 && self.p >= 2.0 * dim as f64 / (dim as f64 - 2.0) {
            return bad(format!(
                "p = {} is not Sobolev-subcritical in dimension {dim}",
                self.p
            ));
        }
        if self.mu_list.is_empty() || self.mu_list.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("mu_list must be nonempty and positive".into());
        }
        if self.mu_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("mu_list must be strictly decreasing".into());
        }
        if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(0.5..=1.0).contains(t)) {
            return bad("tau_grid must be nonempty with values in [0.5, 1]".into());
        }
        if self.tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("tau_grid must be strictly increasing".into());
        }
        if self.k_list.is_empty() || self.k_list.iter().any(|k| *k == 0 || *k >= 64) {
            return bad("k_list entries must lie in 1..64".into());
        }
        if let DeltaPolicy::Fixed { value } = self.delta {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("fixed delta {value} must be positive"));
            }
        }
        let f = &self.flow;
        if f.max_steps == 0 || f.candidates == 0 || f.climb_iterations == 0 {
            return bad("flow budgets must be positive".into());
        }
        if !(f.tol_pg_rel.is_finite() && f.tol_pg_rel > 0.0) {
            return bad("flow.tol_pg_rel must be positive".into());
        }
        if self.curve_points < 8 {
            return bad("curve_points must be at least 8".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    /// Output directory: the environment variable `MASSFLOW_OUT` wins over
    /// the configured value.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os("MASSFLOW_OUT") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256().unwrap(), c.sha256().unwrap());
    }

    #[test]
    fn hash_ignores_output_dir_and_workers_only() {
        let c = ExperimentConfig::default();
        let moved = ExperimentConfig {
            output_dir: "elsewhere".into(),
            workers: 8,
            ..c.clone()
        };
        assert_eq!(moved.sha256().unwrap(), c.sha256().unwrap());
        let reseeded = ExperimentConfig {
            seed: 1,
            ..c.clone()
        };
        assert_ne!(reseeded.sha256().unwrap(), c.sha256().unwrap());
    }

    #[test]
    fn malformed_and_invalid_configs_are_rejected() {
        for text in [
            "{",
            r#"{"id": "x"}"#,
            &ExperimentConfig::default()
                .to_json()
                .unwrap()
                .replace("\"p\": 3.0", "\"p\": 1.5"),
            &ExperimentConfig::default()
                .to_json()
                .unwrap()
                .replace("\"seed\"", "\"sed\""),
        ] {
            assert!(
                matches!(
                    ExperimentConfig::from_json(text),
                    Err(MassflowError::Config(_))
                ),
                "{text}"
            );
        }
        let c = ExperimentConfig {
            mu_list: vec![1e-3, 1e-2],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            tau_grid: vec![0.4, 1.0],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_floats_round_trip_losslessly(
            p in 2.0001f64..6.0,
            mus in proptest::collection::vec(1e-8f64..1e3, 1..5),
            seed in any::<u64>(),
            a in -10.0f64..0.0,
            len in 1e-3f64..10.0,
        ) {
            let mut mu_list = mus.clone();
            mu_list.sort_by(|x, y| y.partial_cmp(x).unwrap());
            mu_list.dedup();
            let c = ExperimentConfig {
                p,
                mu_list,
                seed,
                domain: DomainSpec::Interval { a, b: a + len, n: 31 },
                ..ExperimentConfig::default()
            };
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
