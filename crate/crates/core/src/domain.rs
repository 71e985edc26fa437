//! Discretized domains and fields living on them.
//!
//! Every domain is represented by a symmetric tridiagonal stiffness matrix
//! `K` (the Dirichlet form) and a diagonal mass matrix `M` (quadrature
//! weights), so that `u^T K u` is the squared H^1_0 norm and `sum M u^2` the
//! squared L^2 norm.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{SymTridiag, TridiagLu};
use crate::error::{MassflowError, Result};

/// Smallest admissible number of unknowns.
pub const MIN_NODES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Open interval `(a, b)` with `n` interior nodes.
    Interval {
        #[serde(with = "crate::record::f17")]
        a: f64,
        #[serde(with = "crate::record::f17")]
        b: f64,
        n: usize,
    },
    /// Ball of radius `radius` in dimension `dim`, radial functions only,
    /// `n` nodes from the centre (inclusive) to the boundary (exclusive).
    Ball {
        dim: usize,
        #[serde(with = "crate::record::f17")]
        radius: f64,
        n: usize,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Arc<Domain>> {
        match *self {
            DomainSpec::Interval { a, b, n } => Domain::interval(a, b, n),
            DomainSpec::Ball { dim, radius, n } => Domain::ball(dim, radius, n),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Ball { dim, .. } => dim,
        }
    }

    /// Same geometry with the mesh width halved.
    pub fn refined(&self) -> DomainSpec {
        match *self {
            DomainSpec::Interval { a, b, n } => DomainSpec::Interval { a, b, n: 2 * n + 1 },
            DomainSpec::Ball { dim, radius, n } => DomainSpec::Ball {
                dim,
                radius,
                n: 2 * n,
            },
        }
    }
}

#[derive(Debug)]
pub struct Domain {
    spec: DomainSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    stiffness: SymTridiag,
    stiffness_lu: TridiagLu,
    h: f64,
    measure: f64,
}

/// Surface measure of the unit sphere in dimension `dim`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        d => {
            let d = d as f64;
            2.0 * PI.powf(d / 2.0) / libm::tgamma(d / 2.0)
        }
    }
}

impl Domain {
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Arc<Domain>> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(MassflowError::InvalidInput(format!(
                "empty interval ({a}, {b})"
            )));
        }
        if n < MIN_NODES {
            return Err(MassflowError::InvalidInput(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let h = (b - a) / (n as f64 + 1.0);
        let nodes = (0..n).map(|i| a + (i as f64 + 1.0) * h).collect();
        let weights = vec![h; n];
        let stiffness = SymTridiag::new(vec![2.0 / h; n], vec![-1.0 / h; n - 1]);
        Self::assemble(
            DomainSpec::Interval { a, b, n },
            nodes,
            weights,
            stiffness,
            h,
            b - a,
        )
    }

    pub fn ball(dim: usize, radius: f64, n: usize) -> Result<Arc<Domain>> {
        if dim == 0 || dim > 3 {
            return Err(MassflowError::InvalidInput(format!(
                "ball dimension {dim} not in 1..=3"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(MassflowError::InvalidInput(format!("ball radius {radius}")));
        }
        if n < MIN_NODES {
            return Err(MassflowError::InvalidInput(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let h = radius / n as f64;
        let area = sphere_area(dim);
        let d = dim as i32;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let weights = nodes
            .iter()
            .map(|&r| {
                let lo = (r - 0.5 * h).max(0.0);
                area / dim as f64 * ((r + 0.5 * h).powi(d) - lo.powi(d))
            })
            .collect();
        // conductance across the face at r_{i+1/2}
        let face: Vec<f64> = (0..n)
            .map(|i| area * ((i as f64 + 0.5) * h).powi(d - 1) / h)
            .collect();
        let diag = (0..n)
            .map(|i| face[i] + if i > 0 { face[i - 1] } else { 0.0 })
            .collect();
        let off = face[..n - 1].iter().map(|c| -c).collect();
        let stiffness = SymTridiag::new(diag, off);
        let measure = area / dim as f64 * radius.powi(d);
        Self::assemble(
            DomainSpec::Ball { dim, radius, n },
            nodes,
            weights,
            stiffness,
            h,
            measure,
        )
    }

    fn assemble(
        spec: DomainSpec,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        stiffness: SymTridiag,
        h: f64,
        measure: f64,
    ) -> Result<Arc<Domain>> {
        let stiffness_lu = stiffness.factor()?;
        Ok(Arc::new(Domain {
            spec,
            nodes,
            weights,
            stiffness,
            stiffness_lu,
            h,
            measure,
        }))
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn is_interval(&self) -> bool {
        matches!(self.spec, DomainSpec::Interval { .. })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node coordinates (radius for balls).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.stiffness
    }

    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Distance from a node to the nearest boundary point (interval) or the
    /// radius of the boundary (ball).
    pub fn extent(&self) -> f64 {
        match self.spec {
            DomainSpec::Interval { a, b, .. } => b - a,
            DomainSpec::Ball { radius, .. } => radius,
        }
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, x)| w * x * x).sum()
    }

    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, x), y)| w * x * y)
            .sum()
    }

    /// `sum M |u|^p`.
    pub fn lp_integral(&self, u: &[f64], p: f64) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .map(|(w, x)| w * x.abs().powf(p))
            .sum()
    }

    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        self.lp_integral(u, p).powf(1.0 / p)
    }

    /// Squared H^1_0 norm `u^T K u`.
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.stiffness.quad(u)
    }

    pub fn h1_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.stiffness.bilinear(u, v)
    }

    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        self.dirichlet(u).max(0.0).sqrt()
    }

    /// `M u`.
    pub fn apply_mass(&self, u: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(u).map(|(w, x)| w * x).collect()
    }

    /// `K^{-1} b`.
    pub fn solve_stiffness(&self, b: &[f64]) -> Vec<f64> {
        self.stiffness_lu.solve(b)
    }

    /// Dual H^{-1} norm of a load vector `f` (already integrated against the
    /// basis, i.e. of the form `M r`): `sqrt(f^T K^{-1} f)`.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        let y = self.solve_stiffness(f);
        crate::banded::dot(f, &y).max(0.0).sqrt()
    }

    /// Volume of `{x : u(x) < 0}` as a sum of quadrature weights.
    pub fn negative_measure(&self, u: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .filter(|(_, x)| **x < 0.0)
            .map(|(w, _)| *w)
            .sum()
    }
}

/// Values on the nodes of a shared domain.
#[derive(Clone, Debug)]
pub struct Field {
    pub domain: Arc<Domain>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(MassflowError::InvalidInput(format!(
                "field has {} values, domain has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(MassflowError::InvalidInput("non-finite field value".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Arc<Domain>, f: impl Fn(f64) -> f64) -> Self {
        let values = domain.nodes().iter().map(|&x| f(x)).collect();
        Self { domain, values }
    }

    pub fn zeros(domain: Arc<Domain>) -> Self {
        let n = domain.len();
        Self {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn mass(&self) -> f64 {
        self.domain.mass(&self.values)
    }

    pub fn dirichlet(&self) -> f64 {
        self.domain.dirichlet(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// Rescale so that `mass == mu`.
    pub fn normalized(&self, mu: f64) -> Result<Field> {
        let mut v = self.values.clone();
        normalize_mass(&self.domain, &mut v, mu)?;
        Ok(Field {
            domain: self.domain.clone(),
            values: v,
        })
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || self.domain.spec() == other.domain.spec()
    }

    pub fn negated(&self) -> Field {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(|x| -x).collect(),
        }
    }
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn normalize_mass(domain: &Domain, u: &mut [f64], mu: f64) -> Result<()> {
    let m = domain.mass(u);
    if !(m > 0.0) || !m.is_finite() {
        return Err(MassflowError::InvalidInput(
            "cannot normalize a zero field".into(),
        ));
    }
    let s = (mu / m).sqrt();
    u.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

/// Number of sign changes along the node ordering, ignoring values below a
/// small fraction of the sup norm.
pub fn sign_changes(u: &[f64]) -> usize {
    let tol = 1e-10 * sup_norm(u);
    let mut count = 0;
    let mut last = 0i8;
    for &x in u {
        let s = if x > tol {
            1
        } else if x < -tol {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

/// `(d_plus, d_minus) = (||grad u^-||, ||grad u^+||)`: H^1_0 distances from
/// `u` to the cones of nonnegative and nonpositive functions are bounded by
/// these.
pub fn cone_distances(domain: &Domain, u: &[f64]) -> (f64, f64) {
    let neg: Vec<f64> = u.iter().map(|x| x.min(0.0)).collect();
    let pos: Vec<f64> = u.iter().map(|x| x.max(0.0)).collect();
    (domain.h1_norm(&neg), domain.h1_norm(&pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_weights_sum_to_volume_up_to_last_half_cell() {
        for dim in 1..=3 {
            let d = Domain::ball(dim, 1.0, 400).unwrap();
            let total: f64 = d.weights().iter().sum();
            let h = d.mesh_width();
            let expected = sphere_area(dim) / dim as f64 * (1.0 - 0.5 * h).powi(dim as i32);
            assert!((total - expected).abs() < 1e-12, "dim {dim}");
        }
    }

    #[test]
    fn stiffness_annihilates_nothing_and_is_positive() {
        let d = Domain::ball(2, 1.0, 50).unwrap();
        assert_eq!(d.stiffness().count_below(0.0), 0);
        let d = Domain::interval(0.0, 1.0, 50).unwrap();
        assert_eq!(d.stiffness().count_below(0.0), 0);
    }

    #[test]
    fn sign_change_count() {
        assert_eq!(sign_changes(&[1.0, 2.0, -1.0, 0.0, -3.0, 4.0]), 2);
        assert_eq!(sign_changes(&[0.0, 1.0, 1e-20, 1.0]), 0);
    }

    #[test]
    fn cone_distance_zero_on_positive_fields() {
        let d = Domain::interval(0.0, 1.0, 31).unwrap();
        let u = Field::from_fn(d.clone(), |x| (std::f64::consts::PI * x).sin());
        let (dp, dm) = cone_distances(&d, &u.values);
        assert_eq!(dp, 0.0);
        assert!(dm > 0.0);
    }

    #[test]
    fn dual_norm_of_stiffness_image_is_h1_norm() {
        let d = Domain::interval(-1.0, 1.0, 101).unwrap();
        let u = Field::from_fn(d.clone(), |x| (1.0 - x * x) * (3.0 * x).cos());
        let f = d.stiffness().matvec(&u.values);
        assert!((d.dual_norm(&f) - d.h1_norm(&u.values)).abs() < 1e-10);
    }
}
