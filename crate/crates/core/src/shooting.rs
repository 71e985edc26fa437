//! Positive radial solutions of `-u'' - (N-1)/r u' + lambda u = tau u^{p-1}`
//! on a ball by shooting on the centre value, the mass curve
//! `lambda -> int u^2`, the two-solution finder and blow-up diagnostics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{
    exponents, soliton_1d_profile, soliton_integrals, Regime, SolitonIntegrals,
};
use crate::domain::{Domain, DomainSpec, Field};
use crate::eigen::dirichlet_eigenvalue;
use crate::error::{MassflowError, Result};
use crate::ode::{integrate, Stop, Tolerance};
use crate::operator::energy;
use crate::record::{SolutionKind, SolutionRecord};

/// Where a branch point comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSource {
    /// Shooting plus discrete Newton on the grid.
    Shot,
    /// Blow-up power law continued past the last resolvable multiplier.
    SolitonTail,
}

#[derive(Clone, Debug)]
pub struct ShootResult {
    /// `None` for soliton-tail points too narrow for the grid.
    pub u: Option<Field>,
    pub lambda: f64,
    pub tau: f64,
    pub p: f64,
    pub center_value: f64,
    pub mass: f64,
    pub energy: f64,
    pub positive: bool,
    /// Relative dual-norm residual of the discrete equation.
    pub ode_residual: f64,
    pub source: BranchSource,
}

impl ShootResult {
    /// Store record for this branch point at target mass `mu`. Tail points
    /// carry no profile: sign changes are 0 and the residual is NaN.
    pub fn to_record(
        &self,
        id: &str,
        kind: SolutionKind,
        mu: f64,
        domain: &Domain,
    ) -> SolutionRecord {
        if let Some(u) = &self.u {
            return SolutionRecord::from_solution(
                id,
                kind,
                u,
                self.lambda,
                mu,
                self.tau,
                self.p,
                self.ode_residual,
            );
        }
        SolutionRecord {
            id: id.to_string(),
            mu,
            tau: self.tau,
            p: self.p,
            dim: domain.dim(),
            k: None,
            lambda: self.lambda,
            energy: self.energy,
            morse: None,
            constrained_morse: None,
            sign_changes: 0,
            residual: self.ode_residual,
            mass_err: (self.mass - mu).abs(),
            kind,
            sup_norm: self.center_value.abs(),
            domain: domain.spec().clone(),
            morse_degenerate: false,
            config_sha256: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            u: None,
        }
    }
}

fn radial_parts(domain: &Domain) -> Result<(usize, f64)> {
    match *domain.spec() {
        DomainSpec::Ball { dim, radius, .. } => Ok((dim, radius)),
        DomainSpec::Interval { .. } => Err(MassflowError::InvalidInput(
            "shooting needs a radial ball domain".into(),
        )),
    }
}

#[derive(Clone, Copy)]
struct RadialIvp {
    dim: f64,
    lambda: f64,
    tau: f64,
    p: f64,
}

impl RadialIvp {
    fn rhs(&self, r: f64, y: &[f64; 2]) -> [f64; 2] {
        let nl = self.tau * y[0].abs().powf(self.p - 2.0) * y[0];
        let damp = if self.dim > 1.0 {
            (self.dim - 1.0) / r * y[1]
        } else {
            0.0
        };
        [y[1], self.lambda * y[0] - nl - damp]
    }

    fn curvature_at_center(&self, a: f64) -> f64 {
        (self.lambda * a - self.tau * a.powf(self.p - 1.0)) / self.dim
    }

    /// Small-radius Taylor start `(r_s, [u, u'])`.
    fn start(&self, a: f64, h: f64) -> (f64, [f64; 2]) {
        let c = self.curvature_at_center(a);
        let scale = (self.lambda.abs() + self.tau * a.powf(self.p - 2.0) + 1.0).sqrt();
        let rs = 1e-6 * h.min(1.0 / scale);
        (rs, [a + 0.5 * c * rs * rs, c * rs])
    }

    fn tol(a: f64) -> Tolerance {
        Tolerance {
            rtol: 1e-12,
            atol: 1e-15 * a.max(1e-300),
        }
    }

    /// Does the trajectory from `u(0) = a` vanish before `radius`?
    fn crosses(&self, a: f64, radius: f64) -> bool {
        let f = |r: f64, y: &[f64; 2]| self.rhs(r, y);
        let (rs, y0) = self.start(a, radius);
        let mut h = 1e-3 * radius.min(1.0 / (self.lambda.abs() + 1.0).sqrt());
        let mut crossed = false;
        let (_, y, stop) = integrate(&f, rs, y0, radius, &mut h, Self::tol(a), &mut |_, y| {
            if y[0] <= 0.0 {
                crossed = true;
                true
            } else {
                y[1] > 0.0
            }
        });
        crossed || (stop == Stop::End && y[0] <= 0.0)
    }

    /// Node values of the trajectory; entries after a crossing or an upturn are `None`.
    fn sample(&self, a: f64, nodes: &[f64], radius: f64) -> Vec<Option<f64>> {
        let f = |r: f64, y: &[f64; 2]| self.rhs(r, y);
        let h_nodes = if nodes.len() > 1 {
            nodes[1] - nodes[0]
        } else {
            radius
        };
        let (rs, mut y) = self.start(a, h_nodes);
        let mut out = vec![None; nodes.len()];
        let mut r = rs;
        let mut h = 1e-3 * h_nodes;
        let mut alive = true;
        for (i, &ri) in nodes.iter().enumerate() {
            if ri <= r {
                out[i] = Some(if ri == 0.0 { a } else { y[0] });
                continue;
            }
            if !alive {
                break;
            }
            let mut bad = false;
            let (r_new, y_new, _) = integrate(&f, r, y, ri, &mut h, Self::tol(a), &mut |_, y| {
                bad = y[0] <= 0.0 || y[1] > 0.0;
                bad
            });
            if bad {
                alive = false;
                continue;
            }
            r = r_new;
            y = y_new;
            out[i] = Some(y[0]);
        }
        out
    }
}

/// Newton iteration for `K u + lambda M u = tau M |u|^{p-2} u` at fixed `lambda`.
/// Returns the relative dual residual and the iteration count.
pub fn polish_fixed_lambda(
    domain: &Domain,
    u: &mut [f64],
    lambda: f64,
    tau: f64,
    p: f64,
) -> Result<(f64, usize)> {
    let w = domain.weights();
    let residual_vec = |u: &[f64]| -> Vec<f64> {
        let mut f = domain.stiffness().matvec(u);
        for i in 0..u.len() {
            f[i] += w[i] * (lambda * u[i] - tau * u[i].abs().powf(p - 2.0) * u[i]);
        }
        f
    };
    let rel = |u: &[f64], f: &[f64]| domain.dual_norm(f) / domain.h1_norm(u).max(f64::MIN_POSITIVE);
    let mut f = residual_vec(u);
    let mut res = rel(u, &f);
    let mut it = 0;
    let mut stalls = 0;
    while it < 60 && res > 1e-15 {
        it += 1;
        let d: Vec<f64> = (0..u.len())
            .map(|i| w[i] * (lambda - (p - 1.0) * tau * u[i].abs().powf(p - 2.0)))
            .collect();
        let jac = domain.stiffness().plus_diag(&d);
        let delta = jac.solve(&f)?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a - t * b).collect();
            let ft = residual_vec(&trial);
            let rt = rel(&trial, &ft);
            if rt < res || (t == 1.0 && rt <= 1e-13) {
                if rt > 0.5 * res {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                u.copy_from_slice(&trial);
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (stalls >= 3 && res < 1e-11) {
            break;
        }
    }
    Ok((res, it))
}

/// Positive radial solution at multiplier `lambda` on the ball `domain`.
pub fn shoot(domain: &Arc<Domain>, lambda: f64, tau: f64, p: f64) -> Result<ShootResult> {
    let (dim, radius) = radial_parts(domain)?;
    exponents(p, dim)?;
    if !(tau > 0.0) {
        return Err(MassflowError::InvalidInput(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let lambda1 = dirichlet_eigenvalue(domain, 1);
    if lambda <= -lambda1 {
        return Err(MassflowError::InvalidInput(format!(
            "lambda = {lambda} is not above -lambda_1 = {}",
            -lambda1
        )));
    }
    let ivp = RadialIvp {
        dim: dim as f64,
        lambda,
        tau,
        p,
    };
    let (a_lo, a_hi) = center_bracket(&ivp, radius)?;
    let nodes = domain.nodes();
    let lo = ivp.sample(a_lo, nodes, radius);
    let hi = ivp.sample(a_hi, nodes, radius);
    let mut u = splice_profile(&lo, &hi, nodes, radius, lambda, dim, a_lo);
    let (res, _) = polish_fixed_lambda(domain, &mut u, lambda, tau, p)?;
    let field = Field {
        domain: domain.clone(),
        values: u,
    };
    let max = field.sup_norm();
    let min = field.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 1e-6 * a_lo) {
        return Err(MassflowError::NoConvergence {
            what: "shooting polish (collapsed to zero)",
            iterations: 60,
            residual: res,
        });
    }
    Ok(ShootResult {
        center_value: field.values[0],
        mass: field.mass(),
        energy: energy(domain, &field.values, tau, p),
        positive: min > -1e-10 * max,
        ode_residual: res,
        u: Some(field),
        lambda,
        tau,
        p,
        source: BranchSource::Shot,
    })
}

/// Bracket `[lo, hi]` around the centre value of the positive solution,
/// bisected until adjacent floats.
fn center_bracket(ivp: &RadialIvp, radius: f64) -> Result<(f64, f64)> {
    let floor = if ivp.lambda > 0.0 {
        (ivp.lambda / ivp.tau).powf(1.0 / (ivp.p - 2.0))
    } else {
        0.0
    };
    let mut lo = floor;
    let mut hi = (2.0 * floor).max(1.0);
    let mut doublings = 0;
    while !ivp.crosses(hi, radius) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1000 || !hi.is_finite() {
            return Err(MassflowError::NoConvergence {
                what: "shooting bracket (no sign change for any centre value)",
                iterations: doublings,
                residual: f64::NAN,
            });
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ivp.crosses(mid, radius) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Combine the under- and overshooting trajectories; past the point where
/// they separate, continue with the decaying linear tail.
fn splice_profile(
    lo: &[Option<f64>],
    hi: &[Option<f64>],
    nodes: &[f64],
    radius: f64,
    lambda: f64,
    dim: usize,
    a: f64,
) -> Vec<f64> {
    let n = nodes.len();
    let mut c = 0;
    for i in 0..n {
        match (lo[i], hi[i]) {
            (Some(x), Some(y)) if (x - y).abs() <= 1e-7 * a && x > 0.0 => c = i,
            _ => break,
        }
    }
    let mut u = vec![0.0; n];
    for i in 0..=c {
        u[i] = 0.5 * (lo[i].unwrap() + hi[i].unwrap());
    }
    let (uc, rc) = (u[c], nodes[c]);
    for i in c + 1..n {
        let r = nodes[i];
        u[i] = if lambda > 0.0 {
            let k = lambda.sqrt();
            let geom = if dim > 1 && rc > 0.0 {
                (rc / r).powf((dim as f64 - 1.0) / 2.0)
            } else {
                1.0
            };
            let num = 1.0 - (-2.0 * k * (radius - r)).exp();
            let den = 1.0 - (-2.0 * k * (radius - rc)).exp();
            uc * geom * (-k * (r - rc)).exp() * num / den
        } else {
            uc * (radius - r) / (radius - rc)
        };
    }
    u
}

/// Integrals of the whole-space soliton in dimension `n >= 2` from a
/// radial solve on a ball of radius 30.
pub fn radial_soliton_integrals(p: f64, n: usize) -> Result<SolitonIntegrals> {
    let domain = Domain::ball(n, 30.0, 16_000)?;
    let s = shoot(&domain, 1.0, 1.0, p)?;
    let u = s.u.expect("shot solution has a field");
    Ok(SolitonIntegrals {
        mass: u.mass(),
        dirichlet: u.dirichlet(),
        lp: domain.lp_integral(&u.values, p),
        center: u.values[0],
    })
}

/// Largest multiplier the grid resolves: rescaled mesh width `h sqrt(lambda) <= 0.05`.
pub fn resolution_limit(domain: &Domain) -> f64 {
    (0.05 / domain.mesh_width()).powi(2)
}

/// Relative deviation of the blow-up rescaled solution from the soliton:
/// sup-norm profile error in one dimension, rescaled-mass error otherwise.
pub fn soliton_mismatch(s: &ShootResult) -> Result<f64> {
    let u =
        s.u.as_ref()
            .ok_or_else(|| MassflowError::InvalidInput("no field to compare".into()))?;
    let dim = u.domain.dim();
    let q = soliton_integrals(s.p, dim)?;
    let scale = (s.tau / s.lambda).powf(1.0 / (s.p - 2.0));
    if dim == 1 {
        let k = s.lambda.sqrt();
        let err = u
            .domain
            .nodes()
            .iter()
            .zip(&u.values)
            .map(|(r, v)| (scale * v - soliton_1d_profile(s.p, k * r)).abs())
            .fold(0.0, f64::max);
        Ok(err / q.center)
    } else {
        let m = rescaled_mass(s.mass, s.lambda, s.tau, s.p, dim);
        Ok((m - q.mass).abs() / q.mass)
    }
}

/// `tau^{2/(p-2)} lambda^{N/2 - 2/(p-2)} M`: tends to the soliton mass.
pub fn rescaled_mass(mass: f64, lambda: f64, tau: f64, p: f64, dim: usize) -> f64 {
    tau.powf(2.0 / (p - 2.0)) * lambda.powf(dim as f64 / 2.0 - 2.0 / (p - 2.0)) * mass
}

/// `tau^{2/(p-2)} lambda^{N/2 - p/(p-2)} E`: tends to the soliton energy.
pub fn rescaled_energy(energy: f64, lambda: f64, tau: f64, p: f64, dim: usize) -> f64 {
    tau.powf(2.0 / (p - 2.0)) * lambda.powf(dim as f64 / 2.0 - p / (p - 2.0)) * energy
}

/// First multiplier on a doubling ladder where the rescaled solution is
/// within 1% of the soliton.
pub fn soliton_match_lambda(domain: &Arc<Domain>, tau: f64, p: f64) -> Result<f64> {
    let limit = resolution_limit(domain);
    let mut lambda = (4.0 * dirichlet_eigenvalue(domain, 1)).max(16.0);
    while lambda <= limit {
        let s = shoot(domain, lambda, tau, p)?;
        if soliton_mismatch(&s)? <= 0.01 {
            return Ok(lambda);
        }
        lambda *= 2.0;
    }
    Err(MassflowError::Unresolvable(format!(
        "rescaled profile never within 1% of the soliton below lambda = {limit:.3e}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub lambda: f64,
    pub mass: f64,
    pub energy: f64,
    pub center: f64,
    pub residual: f64,
    pub source: BranchSource,
}

/// Power-law continuation anchored at the last computed sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonTail {
    pub anchor: CurveSample,
    /// `M ~ lambda^{2/(p-2) - N/2}`.
    pub mass_exponent: f64,
    /// `E ~ lambda^{p/(p-2) - N/2}`.
    pub energy_exponent: f64,
    /// `u(0) ~ lambda^{1/(p-2)}`.
    pub center_exponent: f64,
}

impl SolitonTail {
    pub fn new(anchor: CurveSample, p: f64, dim: usize) -> Self {
        let n2 = dim as f64 / 2.0;
        Self {
            anchor,
            mass_exponent: 2.0 / (p - 2.0) - n2,
            energy_exponent: p / (p - 2.0) - n2,
            center_exponent: 1.0 / (p - 2.0),
        }
    }

    pub fn at(&self, lambda: f64) -> CurveSample {
        let r = lambda / self.anchor.lambda;
        CurveSample {
            lambda,
            mass: self.anchor.mass * r.powf(self.mass_exponent),
            energy: self.anchor.energy * r.powf(self.energy_exponent),
            center: self.anchor.center * r.powf(self.center_exponent),
            residual: f64::NAN,
            source: BranchSource::SolitonTail,
        }
    }

    /// Multiplier with tail mass `mu`.
    pub fn lambda_for_mass(&self, mu: f64) -> f64 {
        self.anchor.lambda * (mu / self.anchor.mass).powf(1.0 / self.mass_exponent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub increasing: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassCurve {
    pub tau: f64,
    pub p: f64,
    pub dim: usize,
    /// Computed samples followed by soliton-tail samples (supercritical only).
    pub samples: Vec<CurveSample>,
    /// Multipliers whose shots failed.
    pub gaps: Vec<f64>,
    pub monotone_segments: Vec<Segment>,
    pub tail: Option<SolitonTail>,
    /// Largest resolvable multiplier on the grid.
    pub lambda_resolved: f64,
}

impl MassCurve {
    pub fn computed(&self) -> impl Iterator<Item = &CurveSample> {
        self.samples
            .iter()
            .filter(|s| s.source == BranchSource::Shot)
    }

    pub fn max_mass(&self) -> f64 {
        self.computed().map(|s| s.mass).fold(0.0, f64::max)
    }

    /// CSV with columns `lambda,M,E,u0,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,M,E,u0,residual\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::record::fmt17(s.lambda),
                crate::record::fmt17(s.mass),
                crate::record::fmt17(s.energy),
                crate::record::fmt17(s.center),
                crate::record::fmt17(s.residual)
            ));
        }
        out
    }
}

/// Default multiplier grid: logarithmic in `lambda + lambda_1` from just
/// above `-lambda_1` to `lambda_end`.
pub fn default_lambda_grid(lambda1: f64, lambda_end: f64, points: usize) -> Vec<f64> {
    let s0 = 1e-6 * lambda1;
    let s1 = lambda_end + lambda1;
    (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            -lambda1 + s0 * (s1 / s0).powf(t)
        })
        .collect()
}

/// Grid end used by default: well past the 1% soliton match, capped by resolution.
pub fn default_lambda_end(domain: &Arc<Domain>, tau: f64, p: f64) -> Result<f64> {
    let matched = soliton_match_lambda(domain, tau, p)?;
    Ok((256.0 * matched).min(resolution_limit(domain)).max(matched))
}

pub fn mass_curve(
    domain: &Arc<Domain>,
    tau: f64,
    p: f64,
    lambda_grid: &[f64],
) -> Result<MassCurve> {
    let (dim, _) = radial_parts(domain)?;
    let ex = exponents(p, dim)?;
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MassflowError::InvalidInput(
            "lambda grid must be strictly increasing".into(),
        ));
    }
    let shots: Vec<(f64, Result<ShootResult>)> = lambda_grid
        .par_iter()
        .map(|&l| (l, shoot(domain, l, tau, p)))
        .collect();
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    for (l, r) in shots {
        match r {
            Ok(s) => samples.push(CurveSample {
                lambda: l,
                mass: s.mass,
                energy: s.energy,
                center: s.center_value,
                residual: s.ode_residual,
                source: BranchSource::Shot,
            }),
            Err(_) => gaps.push(l),
        }
    }
    if samples.len() < 2 {
        return Err(MassflowError::NoConvergence {
            what: "mass curve",
            iterations: lambda_grid.len(),
            residual: f64::NAN,
        });
    }
    let monotone_segments = segments(&samples);
    let last = *samples.last().unwrap();
    let t = SolitonTail::new(last, p, dim);
    let tail = Some(t);
    if ex.regime == Regime::Supercritical {
        let max_m = samples.iter().map(|s| s.mass).fold(0.0, f64::max);
        let mut l = last.lambda;
        while t.at(l).mass > 1e-3 * max_m {
            l *= 4.0;
            samples.push(t.at(l));
        }
    }
    Ok(MassCurve {
        tau,
        p,
        dim,
        samples,
        gaps,
        monotone_segments,
        tail,
        lambda_resolved: resolution_limit(domain),
    })
}

fn segments(samples: &[CurveSample]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for i in 0..samples.len() - 1 {
        let inc = samples[i + 1].mass > samples[i].mass;
        match out.last_mut() {
            Some(seg) if seg.increasing == inc && seg.end == i => seg.end = i + 1,
            _ => out.push(Segment {
                start: i,
                end: i + 1,
                increasing: inc,
            }),
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TwoSolutions {
    pub u_low: ShootResult,
    pub u_high: ShootResult,
    pub mu: f64,
    pub count_verified: usize,
}

/// Number of sign changes of `M - mu` along the computed samples, plus the
/// soliton-tail crossing when the last computed mass is above `mu`.
pub fn crossing_count(curve: &MassCurve, mu: f64) -> usize {
    let comp: Vec<&CurveSample> = curve.computed().collect();
    let mut count = comp
        .windows(2)
        .filter(|w| (w[0].mass - mu) * (w[1].mass - mu) < 0.0)
        .count();
    let supercritical = 2.0 / (curve.p - 2.0) < curve.dim as f64 / 2.0;
    if supercritical && comp.last().map(|s| s.mass > mu).unwrap_or(false) {
        count += 1;
    }
    count
}

/// The two positive solutions of mass `mu` on a supercritical curve.
pub fn find_two_positive(domain: &Arc<Domain>, curve: &MassCurve, mu: f64) -> Result<TwoSolutions> {
    let ex = exponents(curve.p, curve.dim)?;
    if ex.regime != Regime::Supercritical {
        return Err(MassflowError::Hypothesis(
            "two positive solutions need a mass-supercritical exponent".into(),
        ));
    }
    let count = crossing_count(curve, mu);
    let max_m = curve.max_mass();
    if mu >= max_m || count < 2 {
        return Err(MassflowError::InvalidInput(format!(
            "mass {mu} has {count} crossing(s); curve maximum is {max_m}"
        )));
    }
    let (tau, p) = (curve.tau, curve.p);
    let comp: Vec<&CurveSample> = curve.computed().collect();
    let mut roots = Vec::new();
    for w in comp.windows(2) {
        if (w[0].mass - mu) * (w[1].mass - mu) < 0.0 {
            roots.push(root_on_bracket(domain, tau, p, mu, *w[0], *w[1])?);
        }
    }
    let last = **comp.last().unwrap();
    if last.mass > mu {
        let tail = curve.tail.expect("curve has a tail model");
        let guess = tail.lambda_for_mass(mu);
        if guess <= curve.lambda_resolved {
            let mut hi = guess.max(last.lambda * 1.5);
            let mut s_hi = shoot(domain, hi, tau, p)?;
            while s_hi.mass > mu && hi * 2.0 <= curve.lambda_resolved {
                hi *= 2.0;
                s_hi = shoot(domain, hi, tau, p)?;
            }
            let hi_sample = CurveSample {
                lambda: hi,
                mass: s_hi.mass,
                energy: s_hi.energy,
                center: s_hi.center_value,
                residual: s_hi.ode_residual,
                source: BranchSource::Shot,
            };
            if s_hi.mass < mu {
                roots.push(root_on_bracket(domain, tau, p, mu, last, hi_sample)?);
            } else {
                roots.push(tail_result(&tail, guess, tau, p));
            }
        } else {
            roots.push(tail_result(&tail, guess, tau, p));
        }
    }
    roots.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    let u_high = roots.pop().unwrap();
    let u_low = roots.swap_remove(0);
    Ok(TwoSolutions {
        u_low,
        u_high,
        mu,
        count_verified: count,
    })
}

fn tail_result(tail: &SolitonTail, lambda: f64, tau: f64, p: f64) -> ShootResult {
    let s = tail.at(lambda);
    ShootResult {
        u: None,
        lambda,
        tau,
        p,
        center_value: s.center,
        mass: s.mass,
        energy: s.energy,
        positive: true,
        ode_residual: f64::NAN,
        source: BranchSource::SolitonTail,
    }
}

/// Illinois false position on `M(lambda) = mu`.
fn root_on_bracket(
    domain: &Arc<Domain>,
    tau: f64,
    p: f64,
    mu: f64,
    a: CurveSample,
    b: CurveSample,
) -> Result<ShootResult> {
    let (mut la, mut fa) = (a.lambda, a.mass - mu);
    let (mut lb, mut fb) = (b.lambda, b.mass - mu);
    let mut best: Option<ShootResult> = None;
    for _ in 0..200 {
        let lc = if fa != fb {
            (la * fb - lb * fa) / (fb - fa)
        } else {
            0.5 * (la + lb)
        };
        let lc = if lc > la.min(lb) && lc < la.max(lb) {
            lc
        } else {
            0.5 * (la + lb)
        };
        let s = shoot(domain, lc, tau, p)?;
        let fc = s.mass - mu;
        let done = fc.abs() <= 1e-11 * mu || (lb - la).abs() <= 1e-15 * la.abs().max(lb.abs());
        if best
            .as_ref()
            .map(|b| (b.mass - mu).abs() > fc.abs())
            .unwrap_or(true)
        {
            best = Some(s);
        }
        if done {
            break;
        }
        if fc * fb < 0.0 {
            la = lb;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        lb = lc;
        fb = fc;
    }
    best.ok_or(MassflowError::NoConvergence {
        what: "mass root",
        iterations: 200,
        residual: f64::NAN,
    })
}

/// `|((N-2)/2) D + (N/2) M - (N/p) P| / P` for the integrals of a
/// whole-space solution of `-Lap V + V = V^{p-1}`.
pub fn pohozaev_residual(mass: f64, dirichlet: f64, lp: f64, p: f64, dim: usize) -> f64 {
    let n = dim as f64;
    ((n - 2.0) / 2.0 * dirichlet + n / 2.0 * mass - n / p * lp).abs() / lp
}

/// Pohozaev residual of a decayed profile on a large domain.
pub fn pohozaev_check(v: &Field, p: f64) -> Result<f64> {
    let edge = v.values.last().copied().unwrap_or(0.0).abs();
    if edge > 1e-8 * v.sup_norm() {
        return Err(MassflowError::InvalidInput(format!(
            "profile has not decayed at the boundary ({edge:.3e})"
        )));
    }
    let d = &v.domain;
    Ok(pohozaev_residual(
        d.mass(&v.values),
        d.dirichlet(&v.values),
        d.lp_integral(&v.values, p),
        p,
        d.dim(),
    ))
}

/// Blow-up rescaling `V(y) = (tau/lambda)^{1/(p-2)} u(y / sqrt(lambda))` on
/// the dilated ball.
pub fn rescaled_profile(s: &ShootResult) -> Result<Field> {
    let u =
        s.u.as_ref()
            .ok_or_else(|| MassflowError::InvalidInput("tail points carry no profile".into()))?;
    let (dim, radius) = radial_parts(&u.domain)?;
    let dom = Domain::ball(dim, radius * s.lambda.sqrt(), u.domain.len())?;
    let scale = (s.tau / s.lambda).powf(1.0 / (s.p - 2.0));
    Ok(Field {
        domain: dom,
        values: u.values.iter().map(|x| scale * x).collect(),
    })
}

/// Outcome of the boundary-hit test over a list of centre values (true when
/// the trajectory vanishes inside the ball).
pub fn boundary_hits(
    domain: &Domain,
    lambda: f64,
    tau: f64,
    p: f64,
    centers: &[f64],
) -> Result<Vec<bool>> {
    let (dim, radius) = radial_parts(domain)?;
    let ivp = RadialIvp {
        dim: dim as f64,
        lambda,
        tau,
        p,
    };
    Ok(centers.iter().map(|&a| ivp.crosses(a, radius)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoot_one_dimension_matches_closed_form_at_zero_multiplier() {
        // -u'' = u^2 on (-1,1): u(x) = A sech-free; compare to a fine independent shot instead
        let d = Domain::ball(1, 1.0, 2000).unwrap();
        let s = shoot(&d, 0.0, 1.0, 3.0).unwrap();
        assert!(s.positive);
        assert!(s.ode_residual < 1e-11, "{}", s.ode_residual);
        // multiply the equation by u: int u'^2 = int u^3 at lambda = 0
        let u = s.u.unwrap();
        let lhs = u.dirichlet();
        let rhs = d.lp_integral(&u.values, 3.0);
        assert!((lhs - rhs).abs() < 1e-9 * rhs);
    }

    #[test]
    fn tau_scaling_is_exact() {
        let d = Domain::ball(1, 1.0, 1000).unwrap();
        let p = 7.0;
        let a = shoot(&d, 30.0, 1.0, p).unwrap().u.unwrap();
        let b = shoot(&d, 30.0, 0.5, p).unwrap().u.unwrap();
        let f = 0.5f64.powf(-1.0 / (p - 2.0));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((f * x - y).abs() < 1e-9, "{} vs {}", f * x, y);
        }
    }

    #[test]
    fn radial_soliton_in_one_dimension_reproduces_closed_form() {
        let s = radial_soliton_integrals(3.0, 1).unwrap();
        let exact = crate::constants::soliton_1d(3.0);
        assert!(
            (s.mass - exact.mass).abs() / exact.mass < 1e-5,
            "{} {}",
            s.mass,
            exact.mass
        );
        assert!((s.lp - exact.lp).abs() / exact.lp < 1e-5);
    }

    #[test]
    fn pohozaev_closed_form_and_negative_control() {
        for p in [3.0, 6.0, 7.0] {
            let q = crate::constants::soliton_1d(p);
            assert!(pohozaev_residual(q.mass, q.dirichlet, q.lp, p, 1) < 1e-12);
            // equivalent form
            assert!((q.dirichlet - (0.5 - 1.0 / p) * q.lp).abs() < 1e-12 * q.lp);
        }
        let d = Domain::ball(1, 20.0, 2000).unwrap();
        let bump = Field::from_fn(d, |r| if r < 1.0 { (1.0 - r * r).powi(2) } else { 0.0 });
        assert!(pohozaev_check(&bump, 3.0).unwrap() > 0.1);
    }
}
