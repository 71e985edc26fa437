//! Persistent result records: one JSON object per line, floats written with
//! 17 significant digits.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::domain::{sign_changes, sup_norm, DomainSpec, Field};
use crate::error::{MassflowError, Result};

/// Format a float with 17 significant digits (round-trip exact, stable
/// across runs).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Serde adapter writing floats with [`fmt17`]; non-finite values become
/// `null` and read back as NaN.
pub mod f17 {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            let raw = RawValue::from_string(fmt17(*x)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    /// Positive solution on the low branch of the mass curve.
    PositiveLow,
    /// Positive solution on the high (concentrating) branch.
    PositiveHigh,
    /// Sign-changing solution from the genus search.
    Genus,
    /// Sign-changing solution from the saddle search.
    Saddle,
    /// Plain flow limit.
    Flow,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: String,
    #[serde(with = "f17")]
    pub mu: f64,
    #[serde(with = "f17")]
    pub tau: f64,
    #[serde(with = "f17")]
    pub p: f64,
    #[serde(rename = "N")]
    pub dim: usize,
    pub k: Option<usize>,
    #[serde(with = "f17")]
    pub lambda: f64,
    #[serde(with = "f17")]
    pub energy: f64,
    pub morse: Option<usize>,
    pub constrained_morse: Option<usize>,
    pub sign_changes: usize,
    #[serde(with = "f17")]
    pub residual: f64,
    #[serde(with = "f17")]
    pub mass_err: f64,
    pub kind: SolutionKind,
    #[serde(with = "f17")]
    pub sup_norm: f64,
    pub domain: DomainSpec,
    pub morse_degenerate: bool,
    pub config_sha256: Option<String>,
    pub version: String,
    #[serde(skip)]
    pub u: Option<Field>,
}

impl SolutionRecord {
    /// Build a record from a solution; the Morse fields start empty.
    #[allow(clippy::too_many_arguments)]
    pub fn from_solution(
        id: impl Into<String>,
        kind: SolutionKind,
        u: &Field,
        lambda: f64,
        mu: f64,
        tau: f64,
        p: f64,
        residual: f64,
    ) -> Self {
        let d = &u.domain;
        Self {
            id: id.into(),
            mu,
            tau,
            p,
            dim: d.dim(),
            k: None,
            lambda,
            energy: crate::operator::energy(d, &u.values, tau, p),
            morse: None,
            constrained_morse: None,
            sign_changes: sign_changes(&u.values),
            residual,
            mass_err: (d.mass(&u.values) - mu).abs(),
            kind,
            sup_norm: sup_norm(&u.values),
            domain: d.spec().clone(),
            morse_degenerate: false,
            config_sha256: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            u: Some(u.clone()),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    /// Store key: id, mass, coupling and genus index.
    pub fn key(&self) -> String {
        let k = self.k.map_or("-".to_string(), |k| k.to_string());
        format!("{}|{}|{}|{}", self.id, fmt17(self.mu), fmt17(self.tau), k)
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Hex SHA-256 of a byte string (used for config provenance).
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Append-only JSON-lines store keyed by [`SolutionRecord::key`].
#[derive(Debug)]
pub struct ResultStore {
    path: PathBuf,
    keys: HashSet<String>,
}

impl ResultStore {
    /// Open (or create lazily on first append) the store at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut keys = HashSet::new();
        if path.exists() {
            for rec in read_records(&path)? {
                keys.insert(rec.key());
            }
        }
        Ok(Self { path, keys })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, rec: &SolutionRecord) -> bool {
        self.keys.contains(&rec.key())
    }

    pub fn append(&mut self, rec: &SolutionRecord) -> Result<()> {
        let key = rec.key();
        if self.keys.contains(&key) {
            return Err(MassflowError::DuplicateRecord(key));
        }
        let mut line = rec.to_json_line()?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        self.keys.insert(key);
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<SolutionRecord>> {
    read_json_lines(path)
}

/// Append one value as a JSON line.
pub fn append_json_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

/// Read every nonblank line of a JSON-lines file.
pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;

    fn sample() -> SolutionRecord {
        let d = Domain::interval(0.0, 1.0, 63).unwrap();
        let u = Field::from_fn(d, |x| (std::f64::consts::PI * x).sin());
        SolutionRecord::from_solution(
            "t",
            SolutionKind::Flow,
            &u,
            -1.0 / 3.0,
            0.5,
            1.0,
            3.0,
            1e-12,
        )
    }

    #[test]
    fn seventeen_digits_round_trip() {
        let r = sample();
        let line = r.to_json_line().unwrap();
        assert!(line.contains("\"lambda\":-3.3333333333333331e-1"), "{line}");
        assert!(line.contains("\"N\":1"));
        let back: SolutionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.lambda, r.lambda);
        assert_eq!(back.energy, r.energy);
        assert_eq!(back.to_json_line().unwrap(), line);
    }

    #[test]
    fn non_finite_becomes_null() {
        let mut r = sample();
        r.residual = f64::NAN;
        let line = r.to_json_line().unwrap();
        assert!(line.contains("\"residual\":null"));
        let back: SolutionRecord = serde_json::from_str(&line).unwrap();
        assert!(back.residual.is_nan());
    }

    #[test]
    fn store_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut st = ResultStore::open(&path).unwrap();
        let r = sample();
        st.append(&r).unwrap();
        assert!(matches!(
            st.append(&r),
            Err(MassflowError::DuplicateRecord(_))
        ));
        st.append(&r.clone().with_k(2)).unwrap();
        let reopened = ResultStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(read_records(&path).unwrap().len(), 2);
    }
}
