//! Morse indices of solutions, the constrained index on the tangent space
//! of the mass sphere, and blow-up diagnostics for solution families.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{dot, SymTridiag};
use crate::domain::{Domain, Field};
use crate::eigen::GeneralizedTridiag;
use crate::error::{MassflowError, Result};
use crate::flow::{equation_residual, newton_polish};
use crate::record::SolutionRecord;

/// Eigenvalues within this distance of zero are reported, not counted.
pub const DEAD_BAND: f64 = 1e-9;
/// Multiple of `eps * ||M^{-1} L||` below which eigenvalues are rounding noise.
pub const ROUNDING_BAND_FACTOR: f64 = 64.0;

/// Dead band for the pencil `(l, diag w)`: [`DEAD_BAND`], widened to the
/// rounding floor of the operator on fine grids. The floor uses the row-wise
/// Gershgorin bound of `w^{-1} l`, since radial weights vanish at the origin
/// while the largest stiffness rows sit at the boundary.
pub fn dead_band(l: &SymTridiag, w: &[f64]) -> f64 {
    let n = l.diag.len();
    let norm = (0..n)
        .map(|i| {
            let left = if i > 0 { l.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { l.off[i].abs() } else { 0.0 };
            (l.diag[i].abs() + left + right) / w[i]
        })
        .fold(0.0, f64::max);
    DEAD_BAND.max(ROUNDING_BAND_FACTOR * f64::EPSILON * norm)
}

/// Largest equation residual accepted as "a solution".
pub const SOLUTION_RESIDUAL: f64 = 1e-9;
/// Number of eigenvalues reported.
pub const REPORTED_EIGENVALUES: usize = 8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizationSpectrum {
    pub lambda: f64,
    pub tau: f64,
    pub p: f64,
    /// Lowest eigenvalues of the linearized operator (L2-normalized).
    pub eigvals: Vec<f64>,
    pub morse_index: usize,
    pub constrained_index: usize,
    /// Some eigenvalue lies in the dead band.
    pub degenerate: bool,
    pub near_zero: Vec<f64>,
    /// Half-width of the band of uncounted eigenvalues.
    pub dead_band: f64,
}

/// Stiffness plus the diagonal `w * (lambda - (p-1) tau |u|^{p-2})`.
pub fn linearization(domain: &Domain, u: &[f64], lambda: f64, tau: f64, p: f64) -> SymTridiag {
    let pot: Vec<f64> = u
        .iter()
        .map(|x| (p - 1.0) * tau * x.abs().powf(p - 2.0))
        .collect();
    shifted_schrodinger(domain, lambda, &pot)
}

/// Stiffness plus `w * (lambda - potential)`.
pub fn shifted_schrodinger(domain: &Domain, lambda: f64, potential: &[f64]) -> SymTridiag {
    let w = domain.weights();
    let d: Vec<f64> = potential
        .iter()
        .zip(w)
        .map(|(v, wi)| wi * (lambda - v))
        .collect();
    domain.stiffness().plus_diag(&d)
}

fn require_solution(u: &Field, lambda: f64, tau: f64, p: f64) -> Result<()> {
    let r = equation_residual(&u.domain, &u.values, lambda, tau, p);
    if !(r < SOLUTION_RESIDUAL) {
        return Err(MassflowError::Hypothesis(format!(
            "field is not a solution: relative residual {r:.3e} >= {SOLUTION_RESIDUAL:e}"
        )));
    }
    Ok(())
}

/// Spectrum of the linearized operator at a polished solution.
pub fn morse_index(u: &Field, lambda: f64, tau: f64, p: f64) -> Result<LinearizationSpectrum> {
    require_solution(u, lambda, tau, p)?;
    let domain = &u.domain;
    let l = linearization(domain, &u.values, lambda, tau, p);
    let g = GeneralizedTridiag::new(&l, domain.weights());
    let m = REPORTED_EIGENVALUES.min(g.len());
    let eigvals: Vec<f64> = (0..m).map(|j| g.eigenvalue(j)).collect();
    let band = dead_band(&l, domain.weights());
    let morse = g.count_below(-band);
    let degenerate = g.count_below(band) > morse;
    let near_zero = eigvals.iter().copied().filter(|e| e.abs() < band).collect();
    let constrained = restricted_negative_count(domain, &l, &u.values, band)?;
    Ok(LinearizationSpectrum {
        lambda,
        tau,
        p,
        eigvals,
        morse_index: morse,
        constrained_index: constrained,
        degenerate,
        near_zero,
        dead_band: band,
    })
}

/// Number of directions `w` with `int w u = 0` on which the second
/// variation is below `-theta ||w||_2^2`.
pub fn constrained_index(u: &Field, lambda: f64, tau: f64, p: f64, theta: f64) -> Result<usize> {
    if !(theta >= 0.0) {
        return Err(MassflowError::InvalidInput(format!(
            "theta = {theta} must be >= 0"
        )));
    }
    require_solution(u, lambda, tau, p)?;
    let l = linearization(&u.domain, &u.values, lambda, tau, p);
    restricted_negative_count(&u.domain, &l, &u.values, theta)
}

/// Negative inertia of `(L + theta M)` restricted to the M-orthogonal
/// complement of `u`, from the bordered-matrix inertia identity
/// `n_-(Q|b^perp) = n_-(Q) + [b^T Q^{-1} b > 0] - 1` with `b = M u`.
fn restricted_negative_count(
    domain: &Domain,
    l: &SymTridiag,
    u: &[f64],
    theta: f64,
) -> Result<usize> {
    let w = domain.weights();
    let b = domain.apply_mass(u);
    let scale = l.gershgorin().1.abs().max(1.0);
    let mut shift = theta;
    for _ in 0..8 {
        let q = l.plus_diag(&w.iter().map(|wi| shift * wi).collect::<Vec<_>>());
        if let Ok(lu) = q.factor() {
            let z = lu.solve(&b);
            let s = dot(&b, &z);
            if s.is_finite() && s != 0.0 {
                let neg = q.count_below(0.0);
                return Ok((neg + usize::from(s > 0.0)).saturating_sub(1));
            }
        }
        // Exactly singular: nudge the shift, which only moves eigenvalues
        // sitting on the threshold.
        shift += 1e-13 * scale;
    }
    Err(MassflowError::Singular("constrained index"))
}

/// Negative directions of `-Delta + lambda - V` with Dirichlet conditions.
pub fn negative_directions(domain: &Domain, lambda: f64, potential: &[f64]) -> usize {
    let l = shifted_schrodinger(domain, lambda, potential);
    GeneralizedTridiag::new(&l, domain.weights()).count_below(0.0)
}

/// Linear interpolation of `u` onto another grid of the same geometry.
pub fn transfer(u: &Field, target: &Arc<Domain>) -> Result<Field> {
    let src = &u.domain;
    if src.spec().dim() != target.spec().dim() || src.is_interval() != target.is_interval() {
        return Err(MassflowError::DomainMismatch);
    }
    let mut xs: Vec<f64> = Vec::with_capacity(src.len() + 2);
    let mut ys: Vec<f64> = Vec::with_capacity(src.len() + 2);
    let (lo, hi) = match *src.spec() {
        crate::domain::DomainSpec::Interval { a, b, .. } => (Some(a), b),
        crate::domain::DomainSpec::Ball { radius, .. } => (None, radius),
    };
    if let Some(a) = lo {
        xs.push(a);
        ys.push(0.0);
    }
    xs.extend_from_slice(src.nodes());
    ys.extend_from_slice(&u.values);
    xs.push(hi);
    ys.push(0.0);
    let values = target
        .nodes()
        .iter()
        .map(|&x| {
            let j = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1);
            let (x0, x1) = (xs[j - 1], xs[j]);
            let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
            ys[j - 1] + t * (ys[j] - ys[j - 1])
        })
        .collect();
    Field::new(target.clone(), values)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub coarse: LinearizationSpectrum,
    pub fine: LinearizationSpectrum,
    pub stable: bool,
}

/// Re-solve on the grid with half the mesh width and compare indices.
pub fn index_under_refinement(u: &Field, lambda: f64, tau: f64, p: f64) -> Result<RefinementCheck> {
    let coarse = morse_index(u, lambda, tau, p)?;
    let fine_domain = u.domain.spec().refined().build()?;
    let mu = u.mass();
    let guess = transfer(u, &fine_domain)?;
    let polished = newton_polish(&guess, Some(lambda), mu, tau, p)?;
    if !polished.converged {
        return Err(MassflowError::NoConvergence {
            what: "refined Newton polish",
            iterations: polished.iterations,
            residual: polished.residual,
        });
    }
    let fine = morse_index(&polished.u, polished.lambda, tau, p)?;
    let stable = fine.morse_index == coarse.morse_index
        && fine.constrained_index == coarse.constrained_index;
    Ok(RefinementCheck {
        coarse,
        fine,
        stable,
    })
}

/// Fill the Morse fields of a record that carries its solution.
pub fn annotate(rec: &mut SolutionRecord) -> Result<LinearizationSpectrum> {
    let u = rec
        .u
        .as_ref()
        .ok_or_else(|| MassflowError::InvalidInput(format!("record {} has no profile", rec.id)))?;
    let s = morse_index(u, rec.lambda, rec.tau, rec.p)?;
    rec.morse = Some(s.morse_index);
    rec.constrained_morse = Some(s.constrained_index);
    rec.morse_degenerate = s.degenerate;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTrend {
    Bounded,
    /// Multiplier unbounded and energy to minus infinity.
    BlowUpEnergyDown,
    /// Multiplier unbounded and energy to plus infinity.
    BlowUpEnergyUp,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BridgeOptions {
    /// Growth factor of |lambda| (relative to `lambda_scale`) taken as
    /// evidence of blow-up.
    pub growth: f64,
    /// Reference multiplier size, usually the first Dirichlet eigenvalue.
    pub lambda_scale: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            growth: 10.0,
            lambda_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BridgeReport {
    pub trend: FamilyTrend,
    pub lambda_unbounded: bool,
    pub energy_unbounded: bool,
    pub sup_unbounded: bool,
    /// Sup-norm and multiplier agree on boundedness.
    pub sup_consistent: bool,
    /// Log-log slope of |E| against lambda over the upper half of the family.
    pub fitted_exponent: Option<f64>,
    pub predicted_exponent: f64,
    /// `tau^{2/(p-2)} lambda^{N/2 - p/(p-2)} E` at the largest multiplier.
    pub scaled_energy: Option<f64>,
    pub morse_bound: Option<usize>,
    pub notes: Vec<String>,
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Classify a family of solutions (in family order, e.g. increasing mass)
/// by the joint behaviour of multiplier, energy and sup-norm.
pub fn multiplier_energy_bridge(
    records: &[SolutionRecord],
    opts: BridgeOptions,
) -> Result<BridgeReport> {
    if records.len() < 3 {
        return Err(MassflowError::InvalidInput(
            "bridge needs at least 3 records".into(),
        ));
    }
    let p = records[0].p;
    let dim = records[0].dim;
    let tau = records[0].tau;
    if records.iter().any(|r| r.p != p || r.dim != dim) {
        return Err(MassflowError::InvalidInput(
            "records mix exponents or dimensions".into(),
        ));
    }
    let mut notes = Vec::new();
    let morse_bound = records
        .iter()
        .map(|r| r.morse)
        .collect::<Option<Vec<_>>>()
        .and_then(|v| v.into_iter().max());
    if morse_bound.is_none() {
        notes.push("some records lack a Morse index".into());
    }
    let first = &records[0];
    let last = &records[records.len() - 1];
    let lam_ref = first.lambda.abs().max(opts.lambda_scale);
    let lambda_unbounded = last.lambda.abs() >= opts.growth * lam_ref;
    let e_ref = first.energy.abs().max(f64::MIN_POSITIVE);
    let energy_unbounded = last.energy.abs() >= opts.growth * e_ref;
    let sup_unbounded = last.sup_norm >= 0.9 * opts.growth.powf(1.0 / (p - 2.0)) * first.sup_norm;
    let sup_consistent = sup_unbounded == lambda_unbounded;
    if !sup_consistent {
        notes.push("sup-norm and multiplier disagree on boundedness".into());
    }

    let mut tail: Vec<&SolutionRecord> = records
        .iter()
        .filter(|r| r.lambda > 0.0 && r.energy != 0.0)
        .collect();
    tail.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    let tail = &tail[tail.len() / 2..];
    let fitted_exponent = if tail.len() >= 2 {
        let x: Vec<f64> = tail.iter().map(|r| r.lambda.ln()).collect();
        let y: Vec<f64> = tail.iter().map(|r| r.energy.abs().ln()).collect();
        slope(&x, &y)
    } else {
        None
    };
    let predicted_exponent = p / (p - 2.0) - dim as f64 / 2.0;
    let scaled_energy = tail.last().map(|r| {
        tau.powf(2.0 / (p - 2.0)) * r.lambda.powf(dim as f64 / 2.0 - p / (p - 2.0)) * r.energy
    });

    // Energy direction over the upper half of the family.
    let half = &records[records.len() / 2..];
    let e_trend = slope(
        &(0..half.len()).map(|i| i as f64).collect::<Vec<_>>(),
        &half.iter().map(|r| r.energy).collect::<Vec<_>>(),
    );
    let trend = match (lambda_unbounded, energy_unbounded) {
        (false, false) => FamilyTrend::Bounded,
        (true, true) if last.energy < 0.0 && e_trend.is_some_and(|s| s < 0.0) => {
            FamilyTrend::BlowUpEnergyDown
        }
        (true, true) if last.energy > 0.0 && e_trend.is_some_and(|s| s > 0.0) => {
            FamilyTrend::BlowUpEnergyUp
        }
        _ => {
            notes.push("multiplier and energy trends disagree".into());
            FamilyTrend::Inconclusive
        }
    };
    Ok(BridgeReport {
        trend,
        lambda_unbounded,
        energy_unbounded,
        sup_unbounded,
        sup_consistent,
        fitted_exponent,
        predicted_exponent,
        scaled_energy,
        morse_bound,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dirichlet_eigenvalue;
    use crate::flow::newton_polish;
    use proptest::prelude::*;

    /// Ground state of the p=3 problem on (0,1) with mass `mu`.
    fn ground_state(n: usize, mu: f64) -> (Field, f64) {
        let d = Domain::interval(0.0, 1.0, n).unwrap();
        let u0 = Field::from_fn(d, |x| (std::f64::consts::PI * x).sin())
            .normalized(mu)
            .unwrap();
        let nr = newton_polish(&u0, None, mu, 1.0, 3.0).unwrap();
        assert!(nr.converged);
        (nr.u, nr.lambda)
    }

    /// Eigenvalues of a small dense symmetric matrix by cyclic Jacobi.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j].powi(2))
                .sum();
            if off < 1e-24 {
                break;
            }
            for pi in 0..n {
                for q in pi + 1..n {
                    if a[pi][q].abs() < 1e-300 {
                        continue;
                    }
                    let th = (a[q][q] - a[pi][pi]) / (2.0 * a[pi][q]);
                    let t = th.signum() / (th.abs() + (th * th + 1.0).sqrt());
                    let t = if th == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][pi], a[k][q]);
                        a[k][pi] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[pi][k], a[q][k]);
                        a[pi][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    /// Projected dense oracle: eigenvalues of M^{-1/2} L M^{-1/2} on the
    /// complement of M^{1/2} u.
    fn projected_count(domain: &Domain, l: &SymTridiag, u: &[f64], theta: f64) -> usize {
        let n = u.len();
        let s: Vec<f64> = domain.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = l.diag[i] * s[i] * s[i];
            if i + 1 < n {
                a[i][i + 1] = l.off[i] * s[i] * s[i + 1];
                a[i + 1][i] = a[i][i + 1];
            }
        }
        let mut c: Vec<f64> = u
            .iter()
            .zip(domain.weights())
            .map(|(x, w)| x * w.sqrt())
            .collect();
        let nc = dot(&c, &c).sqrt();
        c.iter_mut().for_each(|x| *x /= nc);
        // P A P + big * c c^T pushes the constraint direction out of the count.
        let ac: Vec<f64> = (0..n).map(|i| dot(&a[i], &c)).collect();
        let cac = dot(&c, &ac);
        let big = 1e6
            * (1.0
                + a.iter()
                    .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                    .fold(0.0, f64::max));
        let mut pap = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                pap[i][j] =
                    a[i][j] - c[i] * ac[j] - ac[i] * c[j] + c[i] * c[j] * cac + big * c[i] * c[j];
            }
        }
        jacobi_eigenvalues(pap)
            .into_iter()
            .filter(|e| *e < -theta)
            .count()
    }

    #[test]
    fn ground_state_indices() {
        let (u, lambda) = ground_state(255, 0.2);
        let s = morse_index(&u, lambda, 1.0, 3.0).unwrap();
        assert_eq!(s.morse_index, 1);
        assert_eq!(s.constrained_index, 0);
        assert!(!s.degenerate);
        assert_eq!(s.eigvals.len(), REPORTED_EIGENVALUES);
        assert!(s.eigvals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constrained_index_matches_dense_projection() {
        // Second mode: a sign-changing solution with nontrivial indices.
        let d = Domain::interval(0.0, 1.0, 40).unwrap();
        let mu = 3.0;
        let u0 = Field::from_fn(d.clone(), |x| (2.0 * std::f64::consts::PI * x).sin())
            .normalized(mu)
            .unwrap();
        let nr = newton_polish(&u0, None, mu, 1.0, 3.0).unwrap();
        assert!(nr.converged);
        let l = linearization(&d, &nr.u.values, nr.lambda, 1.0, 3.0);
        for theta in [0.0, 1.0, 30.0] {
            let fast = constrained_index(&nr.u, nr.lambda, 1.0, 3.0, theta).unwrap();
            assert_eq!(
                fast,
                projected_count(&d, &l, &nr.u.values, theta),
                "theta {theta}"
            );
        }
        let s = morse_index(&nr.u, nr.lambda, 1.0, 3.0).unwrap();
        assert!(s.constrained_index <= s.morse_index && s.morse_index <= s.constrained_index + 1);
        assert!(s.morse_index >= 2);
    }

    #[test]
    fn positive_radial_solutions_have_a_negative_direction() {
        // <L u, u> = -(p - 2) tau int |u|^p < 0, so every nontrivial solution
        // has Morse index at least 1, also where radial weights vanish.
        for dim in [1, 2, 3] {
            let d = Domain::ball(dim, 1.0, 2048).unwrap();
            let s = crate::shooting::shoot(&d, 20.0, 1.0, 4.0).unwrap();
            let m = morse_index(s.u.as_ref().unwrap(), s.lambda, 1.0, 4.0).unwrap();
            assert!(m.morse_index >= 1, "dim {dim}: {m:?}");
            assert!(m.dead_band < 1e-3, "dim {dim}: band {}", m.dead_band);
        }
    }

    #[test]
    fn large_theta_gives_zero() {
        let (u, lambda) = ground_state(63, 0.2);
        let l = linearization(&u.domain, &u.values, lambda, 1.0, 3.0);
        let radius = l.gershgorin().0.abs().max(l.gershgorin().1.abs()) / u.domain.mesh_width();
        assert_eq!(constrained_index(&u, lambda, 1.0, 3.0, radius).unwrap(), 0);
    }

    #[test]
    fn non_solution_is_rejected() {
        let (u, lambda) = ground_state(63, 0.2);
        let scaled =
            Field::new(u.domain.clone(), u.values.iter().map(|x| 1.5 * x).collect()).unwrap();
        assert!(matches!(
            morse_index(&scaled, lambda, 1.0, 3.0),
            Err(MassflowError::Hypothesis(_))
        ));
    }

    #[test]
    fn index_stable_under_refinement() {
        let (u, lambda) = ground_state(127, 0.5);
        let chk = index_under_refinement(&u, lambda, 1.0, 3.0).unwrap();
        assert!(chk.stable);
        assert_eq!(chk.fine.morse_index, 1);
    }

    #[test]
    fn transfer_preserves_shared_nodes() {
        let (u, _) = ground_state(63, 0.2);
        let fine = u.domain.spec().refined().build().unwrap();
        let v = transfer(&u, &fine).unwrap();
        for i in 0..u.values.len() {
            assert_eq!(v.values[2 * i + 1], u.values[i]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        /// Pushing the multiplier below minus the K-th Dirichlet eigenvalue
        /// forces at least K negative directions, whatever the
        /// nonnegative potential.
        #[test]
        fn multiplier_below_eigenvalue_forces_negative_directions(
            k in 1usize..6,
            extra in 0.0f64..50.0,
            amp in proptest::collection::vec(0.0f64..200.0, 4),
        ) {
            let d = Domain::interval(0.0, 1.0, 127).unwrap();
            let lambda = -dirichlet_eigenvalue(&d, k) - extra - 1e-6;
            let pot: Vec<f64> = d.nodes().iter().map(|x| {
                amp.iter().enumerate().map(|(j, a)| a * ((j + 1) as f64 * 3.1 * x).sin().powi(2)).sum()
            }).collect();
            prop_assert!(negative_directions(&d, lambda, &pot) >= k);
        }
    }
}
