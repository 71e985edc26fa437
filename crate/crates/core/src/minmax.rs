//! Min-max searches on the mass sphere.
//!
//! Genus levels: the sphere spanned by the first `k` Dirichlet modes is
//! deformed member-wise by the descending flow, and the level is the
//! smallest (over deformation time) largest energy among members that stay
//! away from both cones.
//!
//! Saddle levels: a path of odd families joins the eigenfunction sphere to a
//! sphere of disjoint concentrated bumps. Its maximal slice seeds an
//! index-`k` climbing iteration finished by Newton, and continuation in the
//! coupling `tau` carries the result to `tau = 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{bordered_solve, dot, SymTridiag};
use crate::constants::{
    exponents, genus_lower_bound, gn_constant, mu_bar, select_lambda_bar,
    supercritical_genus_radius, theta_set_and_rho, Regime, ThetaSet,
};
use crate::dense::sym_eigen;
use crate::domain::{normalize_mass, sign_changes, Domain, DomainSpec, Field};
use crate::eigen::dirichlet_eigenpairs;
use crate::error::{MassflowError, Result};
use crate::flow::{
    near_null_modes, near_null_threshold, newton_polish, project_out, run_flow_observed,
    FlowConfig, NewtonResult,
};
use crate::morse::{annotate, linearization};
use crate::operator::{
    cone_distances, cone_separation_bound, delta_hat_probe, energy, multiplier_of,
    ConstrainedOperator, OperatorConfig,
};
use crate::record::{f17, SolutionKind, SolutionRecord};

// ---------------------------------------------------------------------------
// Sphere samples

/// Antipodally symmetric samples of the unit sphere in `R^k`: the second
/// half of the list is the exact negation of the first half.
pub fn sphere_points(k: usize) -> Vec<Vec<f64>> {
    let half: Vec<Vec<f64>> = match k {
        0 => Vec::new(),
        1 => vec![vec![1.0]],
        2 => (0..64)
            .map(|j| {
                let a = PI * j as f64 / 64.0;
                clean(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => icosahedral_half(2),
        _ => axis_pairs(k),
    };
    let mut out = half.clone();
    out.extend(half.iter().map(|v| v.iter().map(|x| -x).collect()));
    out
}

fn clean(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        if x.abs() < 1e-14 {
            *x = 0.0;
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn canonical(v: &[f64]) -> bool {
    v.iter().find(|x| **x != 0.0).is_some_and(|x| *x > 0.0)
}

/// Half of the vertex set of a `levels`-times refined icosahedron.
fn icosahedral_half(levels: usize) -> Vec<Vec<f64>> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = Vec::new();
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            verts.push([0.0, s1, s2 * g]);
            verts.push([s1, s2 * g, 0.0]);
            verts.push([s2 * g, 0.0, s1]);
        }
    }
    let d2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let mut faces = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if [(i, j), (j, k), (i, k)]
                    .iter()
                    .all(|&(a, b)| (d2(&verts[a], &verts[b]) - 4.0).abs() < 1e-9)
                {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    let norm = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let mut pts: Vec<[f64; 3]> = verts.iter().map(|v| norm(*v)).collect();
    let index_of = |pts: &mut Vec<[f64; 3]>, v: [f64; 3]| -> usize {
        if let Some(i) = pts.iter().position(|q| d2(q, &v) < 1e-18) {
            i
        } else {
            pts.push(v);
            pts.len() - 1
        }
    };
    for _ in 0..levels {
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let [a, b, c] = *f;
            let mid = |x: usize, y: usize, pts: &Vec<[f64; 3]>| {
                norm([
                    pts[x][0] + pts[y][0],
                    pts[x][1] + pts[y][1],
                    pts[x][2] + pts[y][2],
                ])
            };
            let ab = mid(a, b, &pts);
            let bc = mid(b, c, &pts);
            let ca = mid(c, a, &pts);
            let ab = index_of(&mut pts, ab);
            let bc = index_of(&mut pts, bc);
            let ca = index_of(&mut pts, ca);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let mut half: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| clean(p.to_vec()))
        .filter(|p| canonical(p))
        .collect();
    half.sort_by(|a, b| a.partial_cmp(b).unwrap());
    half
}

/// Coordinate axes and diagonal pairs `(e_i +- e_j)/sqrt 2`.
fn axis_pairs(k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..k {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        out.push(v);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..k {
        for j in i + 1..k {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; k];
                v[i] = r;
                v[j] = s * r;
                out.push(v);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Eigenfunction spheres

/// The sphere `{sum a_i sqrt(mu) phi_i : |a| = 1}` of the first `k`
/// Dirichlet modes, sampled on [`sphere_points`].
#[derive(Clone, Debug)]
pub struct GenusSet {
    pub k: usize,
    pub mu: f64,
    pub coords: Vec<Vec<f64>>,
    /// `sqrt(mu) phi_i`, mass `mu` each.
    pub basis: Vec<Field>,
    pub eigenvalues: Vec<f64>,
    pub members: Vec<Field>,
    pub sup_energy_on_sstar: Option<f64>,
}

impl GenusSet {
    pub fn member(&self, a: &[f64]) -> Result<Field> {
        let domain = self.basis[0].domain.clone();
        let mut v = vec![0.0; domain.len()];
        for (ai, b) in a.iter().zip(&self.basis) {
            v.iter_mut().zip(&b.values).for_each(|(x, y)| *x += ai * y);
        }
        normalize_mass(&domain, &mut v, self.mu)?;
        Field::new(domain, v)
    }

    /// Number of members in the canonical half.
    pub fn half(&self) -> usize {
        self.coords.len() / 2
    }

    /// Largest energy among members outside both cone neighbourhoods.
    pub fn evaluate_sup_on_sstar(&mut self, tau: f64, p: f64, delta: f64) -> Option<f64> {
        let sup = self
            .members
            .iter()
            .filter(|u| cone_distances(&u.domain, &u.values, delta).in_sstar)
            .map(|u| energy(&u.domain, &u.values, tau, p))
            .fold(None, |acc: Option<f64>, e| {
                Some(acc.map_or(e, |a| a.max(e)))
            });
        self.sup_energy_on_sstar = sup;
        sup
    }
}

pub fn build_m_k(k: usize, mu: f64, domain: &Arc<Domain>) -> Result<GenusSet> {
    if k == 0 || k >= domain.len() {
        return Err(MassflowError::InvalidInput(format!(
            "k = {k} modes not available"
        )));
    }
    if !(mu > 0.0) {
        return Err(MassflowError::InvalidInput(format!(
            "mass {mu} must be positive"
        )));
    }
    let (eigenvalues, phis) = dirichlet_eigenpairs(domain, k)?;
    let s = mu.sqrt();
    let basis: Vec<Field> = phis
        .into_iter()
        .map(|f| Field {
            domain: f.domain.clone(),
            values: f.values.iter().map(|x| s * x).collect(),
        })
        .collect();
    let coords = sphere_points(k);
    let mut set = GenusSet {
        k,
        mu,
        coords,
        basis,
        eigenvalues,
        members: Vec::new(),
        sup_energy_on_sstar: None,
    };
    set.members = set
        .coords
        .iter()
        .map(|a| set.member(a))
        .collect::<Result<_>>()?;
    Ok(set)
}

/// `0.5 * min(sqrt(lambda_1 mu / 2), delta_hat)` with `delta_hat` from the
/// contraction probe.
pub fn default_delta(op: &ConstrainedOperator, lambda1: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = delta_hat_probe(op, lambda1, 48, &mut rng)?;
    Ok(0.5 * cone_separation_bound(lambda1, op.config().mu).min(probe.delta_hat))
}

// ---------------------------------------------------------------------------
// Levels

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Genus,
    Saddle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinmaxLevel {
    pub kind: LevelKind,
    pub k: usize,
    #[serde(with = "f17")]
    pub tau: f64,
    #[serde(with = "f17")]
    pub mu: f64,
    #[serde(with = "f17")]
    pub delta: f64,
    #[serde(with = "f17")]
    pub value: f64,
    #[serde(with = "f17")]
    pub upper: f64,
    #[serde(with = "f17")]
    pub lower: f64,
    /// The value comes from an optimized family and a certified critical
    /// point rather than from the initial path alone.
    pub optimized: bool,
}

impl MinmaxLevel {
    /// `lower <= value <= upper` up to rounding.
    pub fn is_ordered(&self) -> bool {
        let slack = 1e-9 * self.value.abs().max(1e-300);
        self.lower <= self.value + slack && self.value <= self.upper + slack
    }
}

// ---------------------------------------------------------------------------
// Genus search

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenusOptions {
    /// Cone width; `None` uses [`default_delta`].
    pub delta: Option<f64>,
    /// Flow step budget per member.
    pub max_steps: usize,
    /// Number of smallest-pseudogradient iterates handed to Newton.
    pub candidates: usize,
    pub seed: u64,
    pub id: String,
}

impl Default for GenusOptions {
    fn default() -> Self {
        Self {
            delta: None,
            max_steps: 4000,
            candidates: 8,
            seed: 0,
            id: "genus".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenusRun {
    pub level: MinmaxLevel,
    /// Same level computed with half the cone width.
    pub fine_delta_level: Option<f64>,
    pub record: SolutionRecord,
    pub newton: NewtonResult,
    /// Relative distance to the nearest reflection-(anti)symmetric field
    /// on symmetric intervals.
    pub symmetry_defect: Option<f64>,
    pub members_flowed: usize,
    pub candidates_converged: usize,
}

/// Energy and smallest cone distance along one member's trajectory.
#[derive(Clone, Debug, Default)]
pub struct MemberTrace {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub cone_gap: Vec<f64>,
}

/// Neighbour lists of a sphere sample: points closer (in angle) than 1.5
/// times the largest nearest-neighbour angle.
pub fn sphere_adjacency(coords: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let angle = |a: &[f64], b: &[f64]| dot(a, b).clamp(-1.0, 1.0).acos();
    let n = coords.len();
    let nearest = (0..n)
        .map(|i| {
            (0..n)
                .filter(|j| *j != i)
                .map(|j| angle(&coords[i], &coords[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let cut = 1.5 * nearest;
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|j| *j != i && angle(&coords[i], &coords[*j]) <= cut)
                .collect()
        })
        .collect()
}

/// Combinatorial genus proxy for the surviving part of a sampled sphere
/// (antipode of `i` is `(i + n/2) mod n`). Genus at least 1 needs a
/// survivor; genus at least 2 needs a connected component of survivors
/// that contains an antipodal pair.
pub fn survivors_keep_genus(alive: &[bool], adjacency: &[Vec<usize>], needed: usize) -> bool {
    if needed == 0 {
        return true;
    }
    if needed == 1 {
        return alive.iter().any(|a| *a);
    }
    let n = alive.len();
    let half = n / 2;
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if !alive[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = s;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if alive[j] && comp[j] == usize::MAX {
                    comp[j] = s;
                    stack.push(j);
                }
            }
        }
    }
    (0..half).any(|i| alive[i] && comp[i] == comp[i + half])
}

/// Genus requirement on the deformed sample: the adjacency of the full
/// antipodal sample and the genus the surviving part must keep.
#[derive(Clone, Debug)]
pub struct GenusProbe {
    pub adjacency: Vec<Vec<usize>>,
    pub needed: usize,
}

/// Deformation level and the time at which it is attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelAtTime {
    pub value: f64,
    pub time: f64,
}

/// `min_T max { E_i(T) : member i outside both delta-cones at time T }`.
/// `traces` cover the canonical half of an antipodal sample; each member is
/// frozen after its last recorded time. With a probe, `T` ranges only over
/// times at which the survivors keep the required genus.
pub fn deformation_level(
    traces: &[MemberTrace],
    delta: f64,
    probe: Option<&GenusProbe>,
) -> Option<LevelAtTime> {
    let mut times: Vec<f64> = traces.iter().flat_map(|tr| tr.t.iter().copied()).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut best: Option<LevelAtTime> = None;
    for &t in &times {
        let mut sup: Option<f64> = None;
        let mut alive = vec![false; traces.len()];
        for (i, tr) in traces.iter().enumerate() {
            let idx = tr.t.partition_point(|x| *x <= t);
            if idx == 0 {
                continue;
            }
            if tr.cone_gap[idx - 1] > delta {
                alive[i] = true;
                let e = tr.energy[idx - 1];
                sup = Some(sup.map_or(e, |s: f64| s.max(e)));
            }
        }
        let Some(s) = sup else { break };
        if let Some(pr) = probe {
            let full: Vec<bool> = alive.iter().chain(alive.iter()).copied().collect();
            if !survivors_keep_genus(&full, &pr.adjacency, pr.needed) {
                break;
            }
        }
        if best.is_none_or(|b| s < b.value) {
            best = Some(LevelAtTime { value: s, time: t });
        }
    }
    best
}

struct MemberRun {
    trace: MemberTrace,
    best: Option<(Vec<f64>, f64)>,
}

fn flow_member(op: &ConstrainedOperator, u0: &Field, cfg: &FlowConfig) -> Result<MemberRun> {
    let domain = op.domain().clone();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let out = run_flow_observed(op, u0, cfg, |_, st| {
        if cone_distances(&domain, &st.u, cfg.delta).in_sstar
            && best.as_ref().is_none_or(|b| st.norm_v < b.1)
        {
            best = Some((st.u.clone(), st.norm_v));
        }
    })?;
    let trace = MemberTrace {
        t: out.trace.points.iter().map(|p| p.t).collect(),
        energy: out.trace.points.iter().map(|p| p.energy).collect(),
        cone_gap: out
            .trace
            .points
            .iter()
            .map(|p| p.d_plus.min(p.d_minus))
            .collect(),
    };
    Ok(MemberRun { trace, best })
}

/// Relative distance of `u` to the nearest field that is even or odd
/// under reflection of the (symmetric) interval.
pub fn reflection_defect(u: &Field) -> Option<f64> {
    match *u.domain.spec() {
        DomainSpec::Interval { .. } => {
            let v = &u.values;
            let n = v.len();
            let norm = dot(v, v).sqrt();
            let (mut odd, mut even) = (0.0, 0.0);
            for i in 0..n {
                odd += (v[i] + v[n - 1 - i]).powi(2);
                even += (v[i] - v[n - 1 - i]).powi(2);
            }
            Some(odd.min(even).sqrt() / (2.0 * norm))
        }
        DomainSpec::Ball { .. } => None,
    }
}

/// Deform the `k`-th eigenfunction sphere by the flow and localize a
/// sign-changing critical point at the resulting level.
pub fn estimate_genus_level(
    domain: &Arc<Domain>,
    k: usize,
    mu: f64,
    tau: f64,
    p: f64,
    opts: &GenusOptions,
) -> Result<GenusRun> {
    if k < 2 {
        return Err(MassflowError::InvalidInput(
            "genus search needs k >= 2".into(),
        ));
    }
    let dim = domain.dim();
    let ex = exponents(p, dim)?;
    let c = gn_constant(p, dim)?;
    let set = build_m_k(k, mu, domain)?;
    let (lambda1, lambda_k) = (set.eigenvalues[0], set.eigenvalues[k - 1]);
    let (rho, truncate) = match ex.regime {
        Regime::Subcritical => (4.0 * lambda_k * mu, false),
        Regime::Critical => {
            let mb = mu_bar(dim)?;
            if mu >= mb {
                return Err(MassflowError::Hypothesis(format!(
                    "at the mass-critical exponent the genus search needs mu < mu_bar = {mb:.10}, got mu = {mu}"
                )));
            }
            (4.0 * lambda_k * mu, false)
        }
        Regime::Supercritical => {
            match supercritical_genus_radius(mu, lambda_k, domain.measure(), c, &ex) {
                Some(r) => (r, true),
                None => {
                    return Err(MassflowError::Hypothesis(format!(
                        "supercritical genus condition fails at mu = {mu} for k = {k}"
                    )))
                }
            }
        }
    };
    let lambda_bar = select_lambda_bar(rho, mu, p, domain)?;
    let op = ConstrainedOperator::new(
        domain.clone(),
        OperatorConfig {
            tau,
            lambda_bar,
            rho,
            mu,
            p,
        },
    )?;
    let delta = match opts.delta {
        Some(d) => d,
        None => default_delta(&op, lambda1, opts.seed)?,
    };
    let mut cfg = FlowConfig::defaults(lambda1, mu, delta, rho);
    cfg.max_steps = opts.max_steps;
    cfg.stop_on_cone_entry = true;
    cfg.freeze_outside_ball = truncate;

    // The flow is odd, so the mirrored half carries no new information.
    let half = set.half();
    let runs: Vec<MemberRun> = (0..half)
        .into_par_iter()
        .map(|i| flow_member(&op, &set.members[i], &cfg))
        .collect::<Result<_>>()?;
    let traces: Vec<MemberTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    let probe = GenusProbe {
        adjacency: sphere_adjacency(&set.coords),
        needed: k - 1,
    };
    let at = deformation_level(&traces, delta, Some(&probe)).ok_or_else(|| {
        MassflowError::Hypothesis(
            "no member of the eigenfunction sphere lies outside the cone neighbourhoods".into(),
        )
    })?;
    let value = at.value;
    let fine_delta_level = deformation_level(&traces, 0.5 * delta, Some(&probe)).map(|l| l.value);
    let upper = traces
        .iter()
        .filter(|t| t.cone_gap[0] > delta)
        .map(|t| t.energy[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let lower = genus_lower_bound(mu, lambda_k, c, &ex);

    // Members carrying the sup at the level time, replayed up to that time.
    let mut top: Vec<(usize, usize, f64)> = traces
        .iter()
        .enumerate()
        .filter_map(|(i, tr)| {
            let idx = tr.t.partition_point(|x| *x <= at.time);
            (idx > 0 && tr.cone_gap[idx - 1] > delta).then(|| (i, idx - 1, tr.energy[idx - 1]))
        })
        .collect();
    top.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    top.truncate(opts.candidates);
    let replayed: Vec<Vec<f64>> = top
        .par_iter()
        .map(|&(i, steps, _)| {
            let mut c = cfg;
            c.max_steps = steps;
            c.stop_on_cone_entry = false;
            run_flow_observed(&op, &set.members[i], &c, |_, _| {}).map(|o| o.terminal.values)
        })
        .collect::<Result<_>>()?;
    let mut best_iterates: Vec<(Vec<f64>, f64)> = runs.into_iter().filter_map(|r| r.best).collect();
    best_iterates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    best_iterates.truncate(opts.candidates);
    let cands: Vec<(Vec<f64>, f64)> = replayed
        .into_iter()
        .map(|u| (u, f64::NAN))
        .chain(best_iterates)
        .collect();
    let polished: Vec<NewtonResult> = cands
        .par_iter()
        .map(|(u, _)| {
            newton_polish(
                &Field {
                    domain: domain.clone(),
                    values: u.clone(),
                },
                None,
                mu,
                tau,
                p,
            )
        })
        .collect::<Result<_>>()?;
    let good: Vec<NewtonResult> = polished
        .into_iter()
        .filter(|nr| {
            nr.converged
                && sign_changes(&nr.u.values) >= 1
                && cone_distances(domain, &nr.u.values, delta).in_sstar
        })
        .collect();
    let candidates_converged = good.len();
    // A level below the analytic bound means the sample lost its genus
    // before the deformation reached the true level; aim at the bound then.
    let target = value.max(lower).min(upper);
    let newton = good
        .into_iter()
        .min_by(|a, b| {
            let ea = (energy(domain, &a.u.values, tau, p) - target).abs();
            let eb = (energy(domain, &b.u.values, tau, p) - target).abs();
            ea.partial_cmp(&eb).unwrap()
        })
        .ok_or(MassflowError::NoConvergence {
            what: "genus candidate polish",
            iterations: opts.candidates,
            residual: f64::NAN,
        })?;

    let mut record = SolutionRecord::from_solution(
        opts.id.clone(),
        SolutionKind::Genus,
        &newton.u,
        newton.lambda,
        mu,
        tau,
        p,
        newton.residual,
    )
    .with_k(k);
    annotate(&mut record)?;
    Ok(GenusRun {
        level: MinmaxLevel {
            kind: LevelKind::Genus,
            k,
            tau,
            mu,
            delta,
            value,
            upper,
            lower,
            optimized: true,
        },
        fine_delta_level,
        symmetry_defect: reflection_defect(&newton.u),
        record,
        newton,
        members_flowed: half,
        candidates_converged,
    })
}

// ---------------------------------------------------------------------------
// Bump spheres

/// `cos^2(pi x / w)` on `|x| < w/2`, scaled to mass `mu`; the scaled copy
/// is `t^{1/2} v(t x)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Bump {
    pub width: f64,
    pub amplitude: f64,
    pub mu: f64,
    pub p: f64,
    /// `int |v'|^2` at scale 1.
    pub dirichlet: f64,
    /// `int |v|^p` at scale 1.
    pub lp: f64,
}

impl Bump {
    pub fn new(width: f64, mu: f64, p: f64) -> Self {
        let amplitude = (8.0 * mu / (3.0 * width)).sqrt();
        let dirichlet = amplitude * amplitude * PI * PI / (2.0 * width);
        let lp = amplitude.powf(p) * width * (libm::lgamma(p + 0.5) - libm::lgamma(p + 1.0)).exp()
            / PI.sqrt();
        Self {
            width,
            amplitude,
            mu,
            p,
            dirichlet,
            lp,
        }
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        let y = t * x;
        if y.abs() >= 0.5 * self.width {
            0.0
        } else {
            t.sqrt() * self.amplitude * (PI * y / self.width).cos().powi(2)
        }
    }

    /// Energy of `sum a_i v_{i,t}` for disjoint copies.
    pub fn sphere_energy(&self, a: &[f64], t: f64, tau: f64) -> f64 {
        let q = (self.p - 2.0) / 2.0;
        a.iter()
            .map(|ai| {
                0.5 * ai * ai * t * t * self.dirichlet
                    - tau * ai.abs().powf(self.p) * t.powf(q) * self.lp / self.p
            })
            .sum()
    }

    /// Scale maximizing [`Bump::sphere_energy`] over `[t_lo, t_hi]`.
    pub fn argmax_scale(&self, a: &[f64], tau: f64, t_lo: f64, t_hi: f64) -> f64 {
        let q = (self.p - 2.0) / 2.0;
        let alpha = 0.5 * self.dirichlet * a.iter().map(|x| x * x).sum::<f64>();
        let beta = tau * self.lp * a.iter().map(|x| x.abs().powf(self.p)).sum::<f64>() / self.p;
        if beta <= 0.0 || q <= 2.0 {
            return t_hi;
        }
        ((2.0 * alpha / (q * beta)).powf(1.0 / (q - 2.0))).clamp(t_lo, t_hi)
    }
}

fn bump_layout(domain: &Domain, k: usize) -> Result<(f64, Vec<f64>)> {
    match *domain.spec() {
        DomainSpec::Interval { a, b, .. } => {
            let len = b - a;
            let centers = (0..k)
                .map(|i| a + (i as f64 + 0.5) * len / k as f64)
                .collect();
            Ok((len / (2.0 * k as f64), centers))
        }
        DomainSpec::Ball { .. } => Err(MassflowError::InvalidInput(
            "bump spheres are built on intervals only".into(),
        )),
    }
}

fn bump_member(
    domain: &Arc<Domain>,
    bump: &Bump,
    centers: &[f64],
    a: &[f64],
    t: f64,
) -> Result<Field> {
    let mut v: Vec<f64> = domain
        .nodes()
        .iter()
        .map(|&x| {
            a.iter()
                .zip(centers)
                .map(|(ai, c)| ai * bump.value(x - c, t))
                .sum()
        })
        .collect();
    normalize_mass(domain, &mut v, bump.mu)?;
    Field::new(domain.clone(), v)
}

/// Nodes across one scaled bump.
fn nodes_per_bump(domain: &Domain, bump: &Bump, t: f64) -> f64 {
    bump.width / t / domain.mesh_width()
}

/// Sphere of `k` disjoint bumps scaled by `t`, sampled on [`sphere_points`].
pub fn build_gamma1(
    k: usize,
    mu: f64,
    p: f64,
    domain: &Arc<Domain>,
    t_scale: f64,
) -> Result<Vec<Field>> {
    let (width, centers) = bump_layout(domain, k)?;
    let bump = Bump::new(width, mu, p);
    if nodes_per_bump(domain, &bump, t_scale) < 8.0 {
        return Err(MassflowError::Unresolvable(format!(
            "bumps at scale {t_scale} span fewer than 8 nodes"
        )));
    }
    sphere_points(k)
        .iter()
        .map(|a| bump_member(domain, &bump, &centers, a, t_scale))
        .collect()
}

// ---------------------------------------------------------------------------
// Saddle paths

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "segment", rename_all = "snake_case")]
pub enum SliceRef {
    /// Rotation from the eigenfunction sphere (fraction 0) to the bump
    /// sphere at scale 1 (fraction 1).
    Rotation { index: usize },
    /// Bump sphere at scale `t >= 1`.
    Scaling { t: f64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathMax {
    pub value: f64,
    pub slice: SliceRef,
    pub s_index: usize,
}

/// Odd family `gamma(., s)` from the eigenfunction sphere to the bump
/// sphere at scale `t1`. Fields are rebuilt on demand; only their Dirichlet
/// and `L^p` integrals are stored, so energies are available for any `tau`.
#[derive(Clone, Debug)]
pub struct SaddlePath {
    pub k: usize,
    pub mu: f64,
    pub p: f64,
    pub s_grid: Vec<Vec<f64>>,
    pub theta_grid: Vec<f64>,
    pub t1: f64,
    pub bump: Bump,
    pub centers: Vec<f64>,
    pub genus: GenusSet,
    rot_dirichlet: Vec<Vec<f64>>,
    rot_lp: Vec<Vec<f64>>,
}

impl SaddlePath {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.genus.basis[0].domain
    }

    /// Field at rotation fraction `theta` in `[0, 1]`.
    pub fn rotation_field(&self, theta: f64, s: usize) -> Result<Field> {
        let d = self.domain().clone();
        let ua = &self.genus.members[s].values;
        let ub = bump_member(&d, &self.bump, &self.centers, &self.s_grid[s], 1.0)?.values;
        let c = (d.l2_inner(ua, &ub) / self.mu).clamp(-1.0, 1.0);
        let mut perp: Vec<f64> = ub.iter().zip(ua).map(|(b, a)| b - c * a).collect();
        let angle = c.acos();
        let pm = d.mass(&perp);
        let values: Vec<f64> = if pm <= 1e-28 * self.mu {
            ua.clone()
        } else {
            let scale = (self.mu / pm).sqrt();
            perp.iter_mut().for_each(|x| *x *= scale);
            let (sn, cs) = (theta * angle).sin_cos();
            ua.iter().zip(&perp).map(|(a, b)| cs * a + sn * b).collect()
        };
        let mut values = values;
        normalize_mass(&d, &mut values, self.mu)?;
        Field::new(d, values)
    }

    /// Discrete bump-sphere field at scale `t`.
    pub fn scaled_field(&self, t: f64, s: usize) -> Result<Field> {
        bump_member(self.domain(), &self.bump, &self.centers, &self.s_grid[s], t)
    }

    pub fn rotation_energy(&self, i: usize, s: usize, tau: f64) -> f64 {
        0.5 * self.rot_dirichlet[i][s] - tau / self.p * self.rot_lp[i][s]
    }

    pub fn gamma0_max(&self, tau: f64) -> f64 {
        (0..self.s_grid.len())
            .map(|s| self.rotation_energy(0, s, tau))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn gamma1_max(&self, tau: f64) -> f64 {
        self.s_grid
            .iter()
            .map(|a| self.bump.sphere_energy(a, self.t1, tau))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cone distances of the bump-sphere member `s` at scale `t`.
    fn scaled_cone_gap(&self, s: usize, t: f64) -> f64 {
        let a = &self.s_grid[s];
        let neg: f64 = a.iter().filter(|x| **x < 0.0).map(|x| x * x).sum();
        let pos: f64 = a.iter().filter(|x| **x > 0.0).map(|x| x * x).sum();
        t * self.bump.dirichlet.sqrt() * neg.min(pos).sqrt()
    }

    /// Largest energy on the path. Ties (within `1e-9` relative) are broken
    /// in favour of slices farthest from both cones.
    pub fn path_max(&self, tau: f64) -> PathMax {
        let mut cands: Vec<(f64, SliceRef, usize, f64)> = Vec::new();
        let d = self.domain();
        for (i, _) in self.theta_grid.iter().enumerate() {
            for s in 0..self.s_grid.len() {
                cands.push((
                    self.rotation_energy(i, s, tau),
                    SliceRef::Rotation { index: i },
                    s,
                    f64::NAN,
                ));
            }
        }
        for (s, a) in self.s_grid.iter().enumerate() {
            let t = self.bump.argmax_scale(a, tau, 1.0, self.t1);
            cands.push((
                self.bump.sphere_energy(a, t, tau),
                SliceRef::Scaling { t },
                s,
                self.scaled_cone_gap(s, t),
            ));
        }
        let top = cands.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * top.abs();
        let gap = |c: &(f64, SliceRef, usize, f64)| -> f64 {
            match c.1 {
                SliceRef::Scaling { .. } => c.3,
                SliceRef::Rotation { index } => self
                    .rotation_field(self.theta_grid[index], c.2)
                    .map(|f| {
                        let cd = cone_distances(d, &f.values, 0.0);
                        cd.d_plus.min(cd.d_minus)
                    })
                    .unwrap_or(0.0),
            }
        };
        let best = cands
            .iter()
            .filter(|c| c.0 >= top - tol)
            .map(|c| (gap(c), c))
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .map(|(_, c)| *c)
            .expect("nonempty path");
        PathMax {
            value: best.0,
            slice: best.1,
            s_index: best.2,
        }
    }

    /// Field of a slice (discrete).
    pub fn slice_field(&self, slice: SliceRef, s: usize) -> Result<Field> {
        match slice {
            SliceRef::Rotation { index } => self.rotation_field(self.theta_grid[index], s),
            SliceRef::Scaling { t } => self.scaled_field(t, s),
        }
    }

    /// Whether a slice can be represented on the grid.
    pub fn resolvable(&self, slice: SliceRef, min_nodes: f64) -> bool {
        match slice {
            SliceRef::Rotation { .. } => true,
            SliceRef::Scaling { t } => nodes_per_bump(self.domain(), &self.bump, t) >= min_nodes,
        }
    }

    /// Per-slice maximal energies: CSV with columns `segment,param,E`.
    pub fn profile_csv(&self, tau: f64, scale_points: usize) -> String {
        use crate::record::fmt17;
        let mut s = String::from("segment,param,E\n");
        for (i, th) in self.theta_grid.iter().enumerate() {
            let e = (0..self.s_grid.len())
                .map(|j| self.rotation_energy(i, j, tau))
                .fold(f64::NEG_INFINITY, f64::max);
            s.push_str(&format!("rotation,{},{}\n", fmt17(*th), fmt17(e)));
        }
        let n = scale_points.max(2);
        for j in 0..n {
            let t = self.t1.powf(j as f64 / (n - 1) as f64);
            let e = self
                .s_grid
                .iter()
                .map(|a| self.bump.sphere_energy(a, t, tau))
                .fold(f64::NEG_INFINITY, f64::max);
            s.push_str(&format!("scaling,{},{}\n", fmt17(t), fmt17(e)));
        }
        s
    }
}

/// Build the rotation-plus-scaling path. `t1` is doubled until the bump
/// sphere has energy below the eigenfunction sphere for `tau` in
/// `{1/2, 1}` and lies outside the gradient ball of radius `rho_out`.
pub fn build_saddle_path(
    domain: &Arc<Domain>,
    k: usize,
    mu: f64,
    p: f64,
    rho_out: f64,
) -> Result<SaddlePath> {
    let (width, centers) = bump_layout(domain, k)?;
    let bump = Bump::new(width, mu, p);
    let genus = build_m_k(k, mu, domain)?;
    let s_grid = genus.coords.clone();
    let theta_grid: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
    let mut path = SaddlePath {
        k,
        mu,
        p,
        s_grid,
        theta_grid,
        t1: 1.0,
        bump,
        centers,
        genus,
        rot_dirichlet: Vec::new(),
        rot_lp: Vec::new(),
    };
    let ns = path.s_grid.len();
    let per_s: Vec<Vec<(f64, f64)>> = (0..ns)
        .into_par_iter()
        .map(|s| {
            path.theta_grid
                .iter()
                .map(|&th| {
                    let f = path.rotation_field(th, s)?;
                    Ok((
                        domain.dirichlet(&f.values),
                        domain.lp_integral(&f.values, p),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    path.rot_dirichlet = (0..path.theta_grid.len())
        .map(|i| per_s.iter().map(|v| v[i].0).collect())
        .collect();
    path.rot_lp = (0..path.theta_grid.len())
        .map(|i| per_s.iter().map(|v| v[i].1).collect())
        .collect();

    let mut t1 = 2.0;
    loop {
        path.t1 = t1;
        let below = [0.5, 1.0]
            .iter()
            .all(|&tau| path.gamma1_max(tau) < path.gamma0_max(tau));
        let outside = t1 * t1 * bump.dirichlet > rho_out;
        if below && outside {
            break;
        }
        t1 *= 2.0;
        if !t1.is_finite() {
            return Err(MassflowError::Hypothesis(
                "no bump scale puts the far end below the start".into(),
            ));
        }
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Index-k climbing

/// `l - sigma a`.
fn pencil(l: &SymTridiag, a: &SymTridiag, sigma: f64) -> SymTridiag {
    SymTridiag::new(
        l.diag
            .iter()
            .zip(&a.diag)
            .map(|(x, y)| x - sigma * y)
            .collect(),
        l.off
            .iter()
            .zip(&a.off)
            .map(|(x, y)| x - sigma * y)
            .collect(),
    )
}

/// Lowest `m` eigenpairs of `l e = nu a e` restricted to `{e : b^T e = 0}`,
/// by shift-inverted subspace iteration with Rayleigh-Ritz. `warm` carries
/// the subspace between calls. Vectors are `a`-orthonormal.
pub fn constrained_low_modes(
    l: &SymTridiag,
    a: &SymTridiag,
    b: &[f64],
    m: usize,
    warm: &mut Vec<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = l.len();
    let q = (m + 2).min(n - 1);
    let count = |s: f64| pencil(l, a, s).count_below(0.0);
    let mut lo = -1.0;
    while count(lo) > 0 {
        lo *= 2.0;
        if !lo.is_finite() {
            return Err(MassflowError::Singular("pencil lower bound"));
        }
    }
    let mut hi = 1.0;
    while count(hi) == 0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(MassflowError::Singular("pencil upper bound"));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma = lo - 1e-2 * (lo.abs() + 1e-3);
    let lu = pencil(l, a, sigma).factor()?;
    let cold = warm.len() != q;
    if cold {
        *warm = (0..q)
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let x = (i + 1) as f64 / (n + 1) as f64;
                        (PI * (j + 1) as f64 * x).sin()
                            + 0.3 * (PI * (j + 2) as f64 * x + 0.7).sin()
                    })
                    .collect()
            })
            .collect();
    }
    let max_iters = if cold { 400 } else { 100 };
    let mut vals: Vec<f64> = Vec::new();
    for it in 0..max_iters {
        let mut xs: Vec<Vec<f64>> = warm
            .iter()
            .map(|z| bordered_solve(&lu, b, b, &a.matvec(z), 0.0).map(|r| r.0))
            .collect::<Result<_>>()?;
        // a-orthonormalize
        for j in 0..xs.len() {
            for i in 0..j {
                let c = a.bilinear(&xs[i], &xs[j]);
                let (head, tail) = xs.split_at_mut(j);
                tail[0]
                    .iter_mut()
                    .zip(&head[i])
                    .for_each(|(x, y)| *x -= c * y);
            }
            let nrm = a.quad(&xs[j]).sqrt();
            if !(nrm > 0.0) {
                return Err(MassflowError::Singular("subspace collapse"));
            }
            xs[j].iter_mut().for_each(|x| *x /= nrm);
        }
        let h: Vec<Vec<f64>> = (0..xs.len())
            .map(|i| (0..xs.len()).map(|j| l.bilinear(&xs[i], &xs[j])).collect())
            .collect();
        let (v, vecs) = sym_eigen(&h);
        let settled = it > 0
            && v[..m]
                .iter()
                .zip(&vals)
                .all(|(a, b)| (a - b).abs() <= 1e-11 * (a.abs() + (sigma - a).abs()));
        vals = v;
        *warm = vecs
            .iter()
            .map(|c| {
                let mut z = vec![0.0; n];
                for (ci, x) in c.iter().zip(&xs) {
                    z.iter_mut().zip(x).for_each(|(a, b)| *a += ci * b);
                }
                z
            })
            .collect();
        if settled {
            break;
        }
    }
    Ok((vals[..m].to_vec(), warm[..m].to_vec()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClimbOptions {
    pub max_iterations: usize,
    /// Try Newton when `||V|| < switch * ||u||`.
    pub newton_switch: f64,
    /// Also try Newton every this many iterations.
    pub newton_every: usize,
}

impl Default for ClimbOptions {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            newton_switch: 1e-3,
            newton_every: 25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClimbOutcome {
    pub newton: NewtonResult,
    pub iterations: usize,
    /// `||V|| / ||u||` per iteration.
    pub history: Vec<f64>,
}

/// Climb from `start` to a critical point with `m` unstable directions:
/// the pseudogradient is reflected along the `m` lowest constrained modes
/// of the linearization, and Newton finishes once `accept` agrees.
pub fn climb_to_saddle(
    start: &Field,
    m: usize,
    mu: f64,
    tau: f64,
    p: f64,
    opts: &ClimbOptions,
    accept: impl Fn(&NewtonResult) -> bool,
) -> Result<ClimbOutcome> {
    let domain = start.domain.clone();
    let mut u = start.values.clone();
    normalize_mass(&domain, &mut u, mu)?;
    let lambda_bar = multiplier_of(&domain, &u, tau, p).max(0.0);
    let op = ConstrainedOperator::new(
        domain.clone(),
        OperatorConfig {
            tau,
            lambda_bar,
            rho: f64::INFINITY,
            mu,
            p,
        },
    )?;
    let metric = op.metric().clone();
    let mut warm = Vec::new();
    let mut alpha: f64 = 0.5;
    let mut history = Vec::new();
    let (mut v, mut nv, _) = op.pseudogradient(&u)?;
    for it in 0..opts.max_iterations {
        let scale = domain.h1_norm(&u);
        history.push(nv / scale);
        if nv < opts.newton_switch * scale || (it > 0 && it % opts.newton_every == 0) {
            let nr = newton_polish(
                &Field {
                    domain: domain.clone(),
                    values: u.clone(),
                },
                None,
                mu,
                tau,
                p,
            )?;
            if nr.converged && accept(&nr) {
                return Ok(ClimbOutcome {
                    newton: nr,
                    iterations: it,
                    history,
                });
            }
        }
        let lam = multiplier_of(&domain, &u, tau, p);
        let lin = linearization(&domain, &u, lam, tau, p);
        let mu_vec = domain.apply_mass(&u);
        let (_, modes) = constrained_low_modes(&lin, &metric, &mu_vec, m, &mut warm)?;
        let mut dir = v.clone();
        for e in &modes {
            let c = metric.bilinear(e, &v);
            dir.iter_mut().zip(e).for_each(|(d, x)| *d -= 2.0 * c * x);
        }
        loop {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a - alpha * d).collect();
            normalize_mass(&domain, &mut trial, mu)?;
            let (vt, nvt, _) = op.pseudogradient(&trial)?;
            if nvt <= 1.2 * nv {
                u = trial;
                v = vt;
                nv = nvt;
                alpha = (alpha * 1.25).min(1.0);
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                return Err(MassflowError::StepUnderflow {
                    step: it,
                    dt: alpha,
                });
            }
        }
    }
    let nr = newton_polish(
        &Field {
            domain: domain.clone(),
            values: u,
        },
        None,
        mu,
        tau,
        p,
    )?;
    if nr.converged && accept(&nr) {
        let iterations = opts.max_iterations;
        return Ok(ClimbOutcome {
            newton: nr,
            iterations,
            history,
        });
    }
    Err(MassflowError::NoConvergence {
        what: "saddle climb",
        iterations: opts.max_iterations,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

// ---------------------------------------------------------------------------
// Saddle search

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleOptions {
    pub delta: Option<f64>,
    pub seed: u64,
    pub id: String,
    /// Smallest number of grid nodes across a bump for the maximal slice to
    /// count as resolved.
    pub min_nodes_per_bump: f64,
    pub climb: ClimbOptions,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self {
            delta: None,
            seed: 0,
            id: "saddle".into(),
            min_nodes_per_bump: 32.0,
            climb: ClimbOptions::default(),
        }
    }
}

/// Everything a saddle search needs that does not depend on `tau`.
#[derive(Clone, Debug)]
pub struct SaddleSetup {
    pub path: SaddlePath,
    pub theta: ThetaSet,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SaddleRun {
    pub level: MinmaxLevel,
    pub path_max: PathMax,
    pub endpoint_max: f64,
    pub record: Option<SolutionRecord>,
    pub newton: Option<NewtonResult>,
    pub climb_iterations: usize,
    pub notes: Vec<String>,
}

pub fn prepare_saddle(
    domain: &Arc<Domain>,
    k: usize,
    mu: f64,
    p: f64,
    opts: &SaddleOptions,
) -> Result<SaddleSetup> {
    if k == 0 {
        return Err(MassflowError::InvalidInput(
            "saddle search needs k >= 1".into(),
        ));
    }
    let dim = domain.dim();
    let ex = exponents(p, dim)?;
    let c = gn_constant(p, dim)?;
    let (eigs, _) = dirichlet_eigenpairs(domain, k.max(2))?;
    let theta = theta_set_and_rho(mu, eigs[k - 1], c, &ex)?;
    let Some((_, rho_hi)) = theta.interval else {
        return Err(MassflowError::Hypothesis(format!(
            "saddle search needs a nonempty lower-bound set of radii; it is empty at mu = {mu}"
        )));
    };
    let path = build_saddle_path(domain, k, mu, p, rho_hi)?;
    let mut notes = Vec::new();
    let delta = match opts.delta {
        Some(d) => d,
        None => {
            let op = ConstrainedOperator::new(
                domain.clone(),
                OperatorConfig {
                    tau: 1.0,
                    lambda_bar: 0.0,
                    rho: f64::INFINITY,
                    mu,
                    p,
                },
            )?;
            match default_delta(&op, eigs[0], opts.seed) {
                Ok(d) => d,
                Err(_) => {
                    notes.push(
                        "cone-width probe failed; using 1e-2 of the cone separation bound".into(),
                    );
                    1e-2 * cone_separation_bound(eigs[0], mu)
                }
            }
        }
    };
    Ok(SaddleSetup {
        path,
        theta,
        delta,
        lambda1: eigs[0],
        lambda2: eigs[1],
        notes,
    })
}

fn saddle_accept(k: usize, delta: f64) -> impl Fn(&NewtonResult) -> bool {
    move |nr: &NewtonResult| {
        let d = &nr.u.domain;
        if k == 1 {
            let sup = nr.u.sup_norm();
            let tol = 1e-8 * sup;
            nr.u.values.iter().all(|x| *x >= -tol) || nr.u.values.iter().all(|x| *x <= tol)
        } else {
            sign_changes(&nr.u.values) >= 1 && cone_distances(d, &nr.u.values, delta).in_sstar
        }
    }
}

fn saddle_record(
    setup: &SaddleSetup,
    id: &str,
    nr: &NewtonResult,
    tau: f64,
) -> Result<SolutionRecord> {
    let path = &setup.path;
    let mut rec = SolutionRecord::from_solution(
        id,
        SolutionKind::Saddle,
        &nr.u,
        nr.lambda,
        path.mu,
        tau,
        path.p,
        nr.residual,
    )
    .with_k(path.k);
    annotate(&mut rec)?;
    Ok(rec)
}

/// Saddle level at one `tau` from a prepared setup.
pub fn estimate_saddle_level_with(
    setup: &SaddleSetup,
    tau: f64,
    opts: &SaddleOptions,
) -> Result<SaddleRun> {
    let path = &setup.path;
    let pm = path.path_max(tau);
    let endpoint_max = path.gamma0_max(tau).max(path.gamma1_max(tau));
    if !(endpoint_max < pm.value - 1e-6 * pm.value.abs()) {
        return Err(MassflowError::Hypothesis(format!(
            "path maximum {} is not above the endpoint maximum {endpoint_max}",
            pm.value
        )));
    }
    let mut level = MinmaxLevel {
        kind: LevelKind::Saddle,
        k: path.k,
        tau,
        mu: path.mu,
        delta: setup.delta,
        value: pm.value,
        upper: pm.value,
        lower: setup.theta.f_max,
        optimized: false,
    };
    let mut notes = setup.notes.clone();
    if !path.resolvable(pm.slice, opts.min_nodes_per_bump) {
        notes.push(format!(
            "maximal slice {:?} is below grid resolution; level is the path maximum",
            pm.slice
        ));
        return Ok(SaddleRun {
            level,
            path_max: pm,
            endpoint_max,
            record: None,
            newton: None,
            climb_iterations: 0,
            notes,
        });
    }
    let start = path.slice_field(pm.slice, pm.s_index)?;
    let mut out = climb_to_saddle(
        &start,
        path.k,
        path.mu,
        tau,
        path.p,
        &opts.climb,
        saddle_accept(path.k, setup.delta),
    )?;
    if path.k == 1 && out.newton.u.values.iter().sum::<f64>() < 0.0 {
        out.newton.u = out.newton.u.negated();
    }
    let rec = saddle_record(setup, &opts.id, &out.newton, tau)?;
    level.value = rec.energy;
    level.optimized = true;
    if !level.is_ordered() {
        notes.push(format!(
            "level {} outside [{}, {}]",
            level.value, level.lower, level.upper
        ));
    }
    if out.newton.lambda > crate::shooting::resolution_limit(&out.newton.u.domain) {
        notes.push(format!(
            "multiplier {} exceeds the grid resolution limit",
            out.newton.lambda
        ));
    }
    Ok(SaddleRun {
        level,
        path_max: pm,
        endpoint_max,
        record: Some(rec),
        newton: Some(out.newton),
        climb_iterations: out.iterations,
        notes,
    })
}

/// Saddle level `c_tau^k` for mass `mu` on an interval.
pub fn estimate_saddle_level(
    domain: &Arc<Domain>,
    k: usize,
    mu: f64,
    tau: f64,
    p: f64,
    opts: &SaddleOptions,
) -> Result<SaddleRun> {
    let setup = prepare_saddle(domain, k, mu, p, opts)?;
    estimate_saddle_level_with(&setup, tau, opts)
}

/// Follow a solution from `tau0` to `tau1` (either direction) by tangent
/// prediction and Newton correction, halving the step whenever the
/// corrector fails or the acceptance test rejects the result.
pub fn continue_in_tau(
    start: &NewtonResult,
    tau0: f64,
    tau1: f64,
    p: f64,
    accept: &dyn Fn(&NewtonResult) -> bool,
) -> Result<(NewtonResult, usize)> {
    let domain = start.u.domain.clone();
    let mu = start.u.mass();
    let span = tau1 - tau0;
    let mut cur = start.clone();
    let mut done = 0.0;
    let mut step: f64 = 1.0;
    let mut substeps = 0;
    while done < 1.0 {
        let s = step.min(1.0 - done);
        let tau = tau0 + done * span;
        let lin = linearization(&domain, &cur.u.values, cur.lambda, tau, p);
        let mu_vec = domain.apply_mass(&cur.u.values);
        let rhs: Vec<f64> = cur
            .u
            .values
            .iter()
            .zip(domain.weights())
            .map(|(x, w)| w * x.abs().powf(p - 2.0) * x)
            .collect();
        let lu = lin.factor()?;
        let (mut du, dl) = bordered_solve(&lu, &mu_vec, &mu_vec, &rhs, 0.0)?;
        let modes = near_null_modes(
            &lin,
            &lu,
            domain.weights(),
            &mu_vec,
            near_null_threshold(cur.lambda),
        );
        project_out(&mut du, &modes, domain.weights());
        let dtau = s * span;
        let mut guess: Vec<f64> = cur
            .u
            .values
            .iter()
            .zip(&du)
            .map(|(a, b)| a + dtau * b)
            .collect();
        normalize_mass(&domain, &mut guess, mu)?;
        let next_done = if s == 1.0 - done { 1.0 } else { done + s };
        let next_tau = if next_done == 1.0 {
            tau1
        } else {
            tau0 + next_done * span
        };
        let nr = newton_polish(
            &Field {
                domain: domain.clone(),
                values: guess,
            },
            Some(cur.lambda + dtau * dl),
            mu,
            next_tau,
            p,
        )?;
        if nr.converged && accept(&nr) {
            cur = nr;
            done = next_done;
            step = (2.0 * s).min(1.0);
            substeps += 1;
        } else {
            step = 0.5 * s;
            if step < 1e-6 {
                return Err(MassflowError::NoConvergence {
                    what: "tau continuation",
                    iterations: substeps,
                    residual: nr.residual,
                });
            }
        }
    }
    Ok((cur, substeps))
}

#[derive(Clone, Debug)]
pub struct TauContinuation {
    pub runs: Vec<SaddleRun>,
    /// Level values nonincreasing along the grid.
    pub monotone: bool,
    pub min_lambda: f64,
    /// `min_lambda > -10 lambda_2`.
    pub lambda_bounded_below: bool,
}

/// Saddle search at the largest grid value, where the solution is least
/// concentrated, then continuation down through the rest of the grid.
/// Runs are returned in increasing `tau`.
pub fn tau_continuation(
    domain: &Arc<Domain>,
    k: usize,
    mu: f64,
    p: f64,
    tau_grid: &[f64],
    opts: &SaddleOptions,
) -> Result<TauContinuation> {
    if tau_grid.is_empty() || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MassflowError::InvalidInput(
            "tau grid must be nonempty and increasing".into(),
        ));
    }
    let setup = prepare_saddle(domain, k, mu, p, opts)?;
    let top = *tau_grid.last().unwrap();
    let first = estimate_saddle_level_with(&setup, top, opts)?;
    let Some(mut prev) = first.newton.clone() else {
        return Err(MassflowError::Unresolvable(format!(
            "saddle at tau = {top} is not resolved on this grid"
        )));
    };
    let accept = saddle_accept(k, setup.delta);
    let mut runs = vec![first];
    for w in tau_grid.windows(2).rev() {
        let (from, to) = (w[1], w[0]);
        let (mut nr, substeps) = continue_in_tau(&prev, from, to, p, &accept)?;
        if k == 1 && nr.u.values.iter().sum::<f64>() < 0.0 {
            nr.u = nr.u.negated();
        }
        let rec = saddle_record(&setup, &opts.id, &nr, to)?;
        let pm = setup.path.path_max(to);
        let level = MinmaxLevel {
            kind: LevelKind::Saddle,
            k,
            tau: to,
            mu,
            delta: setup.delta,
            value: rec.energy,
            upper: pm.value,
            lower: setup.theta.f_max,
            optimized: true,
        };
        let mut notes = vec![format!("continued from tau = {from} in {substeps} steps")];
        if !level.is_ordered() {
            notes.push(format!(
                "level {} outside [{}, {}]",
                level.value, level.lower, level.upper
            ));
        }
        if nr.lambda > crate::shooting::resolution_limit(domain) {
            notes.push(format!(
                "multiplier {} exceeds the grid resolution limit",
                nr.lambda
            ));
        }
        runs.push(SaddleRun {
            level,
            path_max: pm,
            endpoint_max: setup.path.gamma0_max(to).max(setup.path.gamma1_max(to)),
            record: Some(rec),
            newton: Some(nr.clone()),
            climb_iterations: 0,
            notes,
        });
        prev = nr;
    }
    runs.reverse();
    let monotone = runs
        .windows(2)
        .all(|w| w[1].level.value <= w[0].level.value * (1.0 + 1e-12));
    let min_lambda = runs
        .iter()
        .filter_map(|r| r.newton.as_ref().map(|n| n.lambda))
        .fold(f64::INFINITY, f64::min);
    Ok(TauContinuation {
        monotone,
        min_lambda,
        lambda_bounded_below: min_lambda > -10.0 * setup.lambda2,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shooting::{default_lambda_end, default_lambda_grid, find_two_positive, mass_curve};

    fn unit() -> Arc<Domain> {
        Domain::interval(0.0, 1.0, 255).unwrap()
    }

    #[test]
    fn sphere_points_are_antipodal_unit_vectors() {
        for k in 1..=4 {
            let pts = sphere_points(k);
            let half = pts.len() / 2;
            assert_eq!(pts.len(), 2 * half);
            for (i, p) in pts.iter().enumerate() {
                assert_eq!(p.len(), k);
                assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
                if i < half {
                    let q: Vec<f64> = p.iter().map(|x| -x).collect();
                    assert_eq!(pts[i + half], q);
                }
            }
        }
        assert_eq!(sphere_points(2).len(), 128);
        assert_eq!(sphere_points(3).len(), 162);
    }

    #[test]
    fn eigenfunction_sphere_mass_oddness_and_dirichlet_sup() {
        let d = unit();
        let mu = 0.3;
        for k in [2, 3] {
            let set = build_m_k(k, mu, &d).unwrap();
            let half = set.half();
            for (i, m) in set.members.iter().enumerate() {
                assert!((m.mass() - mu).abs() < 1e-12 * mu);
                if i < half {
                    assert_eq!(set.members[i + half].values, m.negated().values);
                }
            }
            let sup = set
                .members
                .iter()
                .map(|m| m.dirichlet())
                .fold(0.0, f64::max);
            let target = set.eigenvalues[k - 1] * mu;
            assert!((sup - target).abs() < 1e-9 * target, "{sup} vs {target}");
        }
    }

    #[test]
    fn second_mode_members_change_sign_first_mode_members_do_not() {
        let set = build_m_k(2, 0.1, &unit()).unwrap();
        let a2 = set.member(&[0.0, 1.0]).unwrap();
        let a1 = set.member(&[1.0, 0.0]).unwrap();
        assert!(sign_changes(&a2.values) >= 1);
        assert_eq!(sign_changes(&a1.values), 0);
    }

    #[test]
    fn deformation_level_takes_inf_over_time_of_sup_outside_cones() {
        let a = MemberTrace {
            t: vec![0.0, 1.0, 2.0],
            energy: vec![5.0, 3.0, 1.0],
            cone_gap: vec![1.0, 1.0, 0.0],
        };
        let b = MemberTrace {
            t: vec![0.0, 0.5],
            energy: vec![4.0, 3.5],
            cone_gap: vec![1.0, 1.0],
        };
        // t=0: max(5,4)=5; t=0.5: max(5,3.5)=5; t=1: max(3,3.5)=3.5; t=2: only b -> 3.5
        let lvl = |tr: &[MemberTrace]| deformation_level(tr, 0.5, None).map(|l| (l.value, l.time));
        assert_eq!(lvl(&[a.clone(), b]), Some((3.5, 1.0)));
        let none = MemberTrace {
            t: vec![0.0],
            energy: vec![1.0],
            cone_gap: vec![0.1],
        };
        assert_eq!(lvl(&[none]), None);
        assert_eq!(lvl(&[a]), Some((3.0, 1.0)));
    }

    #[test]
    fn genus_probe_stops_the_deformation_when_survivors_lose_antipodal_pairs() {
        // Four points on a circle, each with one antipodal partner.
        let coords: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_2;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let adj = sphere_adjacency(&coords);
        assert!(adj.iter().all(|n| n.len() == 2));
        assert!(survivors_keep_genus(&[true, true, true, false], &adj, 2));
        assert!(!survivors_keep_genus(&[true, true, false, false], &adj, 2));
        assert!(survivors_keep_genus(&[true, false, false, false], &adj, 1));
        assert!(!survivors_keep_genus(&[false; 4], &adj, 1));
        // Half traces: member 1 enters the cone at t=1, which breaks every
        // antipodal chain, so the level is taken at t=0 only.
        let a = MemberTrace {
            t: vec![0.0, 1.0],
            energy: vec![5.0, 2.0],
            cone_gap: vec![1.0, 1.0],
        };
        let b = MemberTrace {
            t: vec![0.0, 1.0],
            energy: vec![4.0, 1.0],
            cone_gap: vec![1.0, 0.0],
        };
        let probe = GenusProbe {
            adjacency: adj,
            needed: 2,
        };
        let l = deformation_level(&[a.clone(), b.clone()], 0.5, Some(&probe)).unwrap();
        assert_eq!((l.value, l.time), (5.0, 0.0));
        let l = deformation_level(&[a, b], 0.5, None).unwrap();
        assert_eq!((l.value, l.time), (2.0, 1.0));
    }

    #[test]
    fn bump_integrals_match_grid_quadrature() {
        let d = Domain::interval(-1.0, 1.0, 8191).unwrap();
        let (mu, p) = (0.7, 7.0);
        let (w, centers) = bump_layout(&d, 2).unwrap();
        let bump = Bump::new(w, mu, p);
        let a = [0.6, -0.8];
        for t in [1.0, 3.0] {
            let f = bump_member(&d, &bump, &centers, &a, t).unwrap();
            let analytic = bump.sphere_energy(&a, t, 1.0);
            let grid = energy(&d, &f.values, 1.0, p);
            assert!(
                (analytic - grid).abs() < 1e-4 * analytic.abs(),
                "t={t}: {analytic} vs {grid}"
            );
        }
        let members = build_gamma1(2, mu, p, &d, 2.0).unwrap();
        assert!(members.iter().all(|m| (m.mass() - mu).abs() < 1e-12 * mu));
        let e = |t: f64| bump.sphere_energy(&a, t, 0.5);
        assert!(e(1e8) < e(1e7) && e(1e7) < 0.0);
    }

    #[test]
    fn saddle_path_is_odd_and_has_an_endpoint_gap() {
        let d = Domain::interval(-1.0, 1.0, 2047).unwrap();
        let path = build_saddle_path(&d, 2, 1.5, 7.0, 1e3).unwrap();
        let half = path.s_grid.len() / 2;
        for th in [0.25, 0.5, 1.0] {
            for s in [0, 7, 40] {
                let f = path.rotation_field(th, s).unwrap();
                let g = path.rotation_field(th, s + half).unwrap();
                assert_eq!(g.values, f.negated().values);
                assert!((f.mass() - 1.5).abs() < 1e-12 * 1.5);
            }
        }
        for tau in [0.5, 1.0] {
            let pm = path.path_max(tau);
            assert!(pm.value > path.gamma0_max(tau).max(path.gamma1_max(tau)));
            assert!(path.gamma1_max(tau) < path.gamma0_max(tau));
        }
        let csv = path.profile_csv(1.0, 5);
        assert!(csv.starts_with("segment,param,E\n"));
        assert_eq!(csv.lines().count(), 1 + 17 + 5);
    }

    /// Dense oracle: eigenvalues of `l` on `b^perp` in the `a` metric.
    fn dense_constrained(l: &SymTridiag, a: &SymTridiag, b: &[f64]) -> Vec<f64> {
        let n = l.len();
        let full = |m: &SymTridiag| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    m.matvec(&e)
                })
                .collect()
        };
        let (lf, af) = (full(l), full(a));
        let bn = dot(b, b).sqrt();
        let mut z: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            let c = b[i] / (bn * bn);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            for q in &z {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            let nv = dot(&v, &v).sqrt();
            if nv > 1e-8 {
                z.push(v.iter().map(|x| x / nv).collect());
            }
        }
        let proj = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let mz: Vec<Vec<f64>> = z
                .iter()
                .map(|q| (0..n).map(|i| dot(&m[i], q)).collect())
                .collect();
            z.iter()
                .map(|p| mz.iter().map(|q| dot(p, q)).collect())
                .collect()
        };
        let (lr, ar) = (proj(&lf), proj(&af));
        let (ad, av) = sym_eigen(&ar);
        let r = ad.len();
        let half: Vec<Vec<f64>> = (0..r)
            .map(|i| {
                (0..r)
                    .map(|j| (0..r).map(|m| av[m][i] * av[m][j] / ad[m].sqrt()).sum())
                    .collect()
            })
            .collect();
        let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..r)
                .map(|i| {
                    (0..r)
                        .map(|j| (0..r).map(|m| x[i][m] * y[m][j]).sum())
                        .collect()
                })
                .collect()
        };
        sym_eigen(&mul(&mul(&half, &lr), &half)).0
    }

    #[test]
    fn constrained_low_modes_match_dense_projection() {
        let d = Domain::interval(0.0, 1.0, 39).unwrap();
        let x = d.nodes().to_vec();
        let u: Vec<f64> = x.iter().map(|x| (PI * x).sin() * (1.0 + 0.5 * x)).collect();
        let pot: Vec<f64> = x
            .iter()
            .map(|x| -400.0 * (-(x - 0.3) * (x - 0.3) * 40.0).exp())
            .collect();
        let l = crate::morse::shifted_schrodinger(&d, -30.0, &pot);
        let a = d
            .stiffness()
            .plus_diag(&d.weights().iter().map(|w| 5.0 * w).collect::<Vec<_>>());
        let b = d.apply_mass(&u);
        let mut warm = Vec::new();
        let (vals, vecs) = constrained_low_modes(&l, &a, &b, 2, &mut warm).unwrap();
        let oracle = dense_constrained(&l, &a, &b);
        for j in 0..2 {
            assert!(
                (vals[j] - oracle[j]).abs() < 1e-8 * oracle[j].abs().max(1.0),
                "{vals:?} vs {oracle:?}"
            );
            assert!(
                dot(&b, &vecs[j]).abs()
                    < 1e-10 * dot(&b, &b).sqrt() * dot(&vecs[j], &vecs[j]).sqrt()
            );
            assert!((a.quad(&vecs[j]) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn genus_terminal_approaches_minus_second_eigenvalue_at_small_mass() {
        let d = unit();
        let run = estimate_genus_level(&d, 2, 1e-3, 1.0, 3.0, &GenusOptions::default()).unwrap();
        let l2 = 4.0 * PI * PI;
        assert!(
            (run.newton.lambda + l2).abs() < 0.01 * l2,
            "lambda {}",
            run.newton.lambda
        );
        assert!(run.record.sign_changes >= 1);
        let lv = &run.level;
        assert!(lv.is_ordered(), "{lv:?}");
        assert!(lv.value <= 0.5 * 4.0 * PI * PI * 1e-3 * (1.0 + 1e-2));
        assert!(run.record.constrained_morse.unwrap() <= 2);
        let fine = run.fine_delta_level.unwrap();
        assert!((fine - lv.value).abs() <= 0.05 * lv.value.abs());
    }

    #[test]
    fn third_genus_terminal_approaches_minus_third_eigenvalue() {
        let run =
            estimate_genus_level(&unit(), 3, 1e-3, 1.0, 3.0, &GenusOptions::default()).unwrap();
        let l3 = 9.0 * PI * PI;
        assert!(
            (run.newton.lambda + l3).abs() < 0.02 * l3,
            "lambda {}",
            run.newton.lambda
        );
        assert_eq!(run.record.sign_changes, 2);
        assert!(run.record.constrained_morse.unwrap() <= 3);
        assert!(run.record.morse.unwrap() <= 4);
    }

    #[test]
    fn critical_exponent_gate_refuses_large_mass() {
        let d = unit();
        let mb = mu_bar(1).unwrap();
        let err = estimate_genus_level(&d, 2, mb, 1.0, 6.0, &GenusOptions::default()).unwrap_err();
        assert!(
            matches!(err, MassflowError::Hypothesis(ref m) if m.contains("mu_bar")),
            "{err}"
        );
    }

    #[test]
    fn one_mode_saddle_matches_high_positive_solution_and_levels_are_ordered() {
        let (mu, p) = (1.5, 7.0);
        let di = Domain::interval(-1.0, 1.0, 8191).unwrap();
        let c1 = estimate_saddle_level(&di, 1, mu, 1.0, p, &SaddleOptions::default()).unwrap();
        let nr = c1.newton.as_ref().expect("resolved");
        assert!(nr.u.values.iter().all(|x| *x >= -1e-8 * nr.u.sup_norm()));

        let db = Domain::ball(1, 1.0, 4096).unwrap();
        let l1 = crate::eigen::dirichlet_eigenvalue(&db, 1);
        let end = default_lambda_end(&db, 1.0, p).unwrap();
        let curve = mass_curve(&db, 1.0, p, &default_lambda_grid(l1, end, 72)).unwrap();
        let two = find_two_positive(&db, &curve, mu).unwrap();
        let (lh, eh) = (two.u_high.lambda, two.u_high.energy);
        assert!(
            (nr.lambda - lh).abs() < 0.01 * lh.abs(),
            "{} vs {lh}",
            nr.lambda
        );
        assert!(
            (c1.level.value - eh).abs() < 0.01 * eh.abs(),
            "{} vs {eh}",
            c1.level.value
        );

        let c2 = estimate_saddle_level(&di, 2, mu, 1.0, p, &SaddleOptions::default()).unwrap();
        assert!(c1.level.value <= c2.level.value);
        assert!(c2.level.is_ordered());
    }

    #[test]
    fn tau_continuation_round_trip_is_consistent() {
        let (mu, p) = (1.5, 7.0);
        let di = Domain::interval(-1.0, 1.0, 4095).unwrap();
        let run = estimate_saddle_level(&di, 1, mu, 1.0, p, &SaddleOptions::default()).unwrap();
        let start = run.newton.unwrap();
        let pos = |nr: &NewtonResult| {
            nr.u.values.iter().all(|x| x.abs() < 1e-8 || *x > 0.0)
                || nr.u.values.iter().all(|x| *x < 1e-8)
        };
        let (down, _) = continue_in_tau(&start, 1.0, 0.8, p, &pos).unwrap();
        assert!(down.converged);
        assert!(energy(&di, &down.u.values, 0.8, p) > energy(&di, &start.u.values, 1.0, p));
        let (back, _) = continue_in_tau(&down, 0.8, 1.0, p, &pos).unwrap();
        assert!((back.lambda - start.lambda).abs() < 1e-8 * start.lambda.abs());
    }
}
