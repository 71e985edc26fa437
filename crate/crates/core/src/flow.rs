//! Normalized descending flow on the mass sphere and the bordered Newton
//! polish that certifies its limits.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{bordered_solve, dot, SymTridiag, TridiagLu};
use crate::dense::sym_eigen;
use crate::domain::{normalize_mass, Domain, Field};
use crate::error::{MassflowError, Result};
use crate::operator::{cone_distances, multiplier_of, ConstrainedOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt0: f64,
    pub dt_max: f64,
    pub tol_pg: f64,
    pub max_steps: usize,
    /// Cone-neighbourhood width used for classification.
    pub delta: f64,
    /// Gradient-ball radius; with `freeze_outside_ball` the flow stops
    /// instead of leaving it.
    pub rho: f64,
    pub freeze_outside_ball: bool,
    /// Energy band outside which the flow is frozen.
    pub cutoff: Option<(f64, f64)>,
    /// Stop as soon as the iterate is within `delta` of either cone.
    #[serde(default)]
    pub stop_on_cone_entry: bool,
}

impl FlowConfig {
    /// Defaults for a problem with first eigenvalue `lambda1` and mass `mu`.
    pub fn defaults(lambda1: f64, mu: f64, delta: f64, rho: f64) -> Self {
        Self {
            dt0: 1e-3 * (lambda1 * mu).sqrt(),
            dt_max: f64::INFINITY,
            tol_pg: 1e-8 * (lambda1 * mu).sqrt(),
            max_steps: 200_000,
            delta,
            rho,
            freeze_outside_ball: false,
            cutoff: None,
            stop_on_cone_entry: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0) || !(self.dt0 <= self.dt_max) || !(self.tol_pg > 0.0) {
            return Err(MassflowError::InvalidInput(format!(
                "bad flow config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub energy: f64,
    pub norm_v: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub mass_err: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FlowTrace {
    pub points: Vec<TracePoint>,
}

impl FlowTrace {
    /// CSV with columns `t,E,normV,d_plus,d_minus,mass_err`.
    pub fn to_csv(&self) -> String {
        use crate::record::fmt17;
        let mut s = String::from("t,E,normV,d_plus,d_minus,mass_err\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(p.t),
                fmt17(p.energy),
                fmt17(p.norm_v),
                fmt17(p.d_plus),
                fmt17(p.d_minus),
                fmt17(p.mass_err)
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    /// Backtracking could not find a descent step: a near-critical point.
    StepUnderflow,
    /// Stopped by the energy band or the gradient ball.
    Frozen,
    /// Entered a cone neighbourhood with `stop_on_cone_entry` set.
    EnteredCone,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub trace: FlowTrace,
    pub terminal: Field,
    /// Iterate with the smallest pseudogradient norm.
    pub best: Field,
    pub best_norm_v: f64,
    pub status: FlowStatus,
    pub steps: usize,
    pub left_dstar: bool,
    pub entered_dstar: bool,
}

/// State carried between steps.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub energy: f64,
    pub v: Vec<f64>,
    pub norm_v: f64,
    pub dt: f64,
    pub t: f64,
}

impl FlowState {
    pub fn new(op: &ConstrainedOperator, u0: &[f64], dt0: f64) -> Result<Self> {
        let (v, norm_v, _) = op.pseudogradient(u0)?;
        Ok(Self {
            u: u0.to_vec(),
            energy: op.energy(u0),
            v,
            norm_v,
            dt: dt0,
            t: 0.0,
        })
    }
}

const ARMIJO: f64 = 1e-4;
const DT_MIN: f64 = 1e-14;

/// One normalized Euler step along `-V/||V||` with backtracking on the
/// energy and a scalar mass rescale. Returns the step used, or `None` when
/// the state is already below the stopping tolerance.
pub fn flow_step(
    op: &ConstrainedOperator,
    st: &mut FlowState,
    cfg: &FlowConfig,
    step: usize,
) -> Result<Option<f64>> {
    if st.norm_v <= cfg.tol_pg {
        return Ok(None);
    }
    let domain = op.domain();
    let mu = op.config().mu;
    let mut dt = (2.0 * st.dt).min(cfg.dt_max).min(st.norm_v);
    loop {
        if dt < DT_MIN * (1.0 + st.norm_v) {
            return Err(MassflowError::StepUnderflow { step, dt });
        }
        let s = dt / st.norm_v;
        let mut trial: Vec<f64> = st.u.iter().zip(&st.v).map(|(a, b)| a - s * b).collect();
        normalize_mass(domain, &mut trial, mu)?;
        let e = op.energy(&trial);
        let scale = st.energy.abs().max(domain.dirichlet(&st.u));
        let slack = 8.0 * f64::EPSILON * scale;
        let accept = if e <= st.energy - ARMIJO * dt * st.norm_v + slack {
            Some(op.pseudogradient(&trial)?)
        } else if dt * st.norm_v < 1e3 * f64::EPSILON * scale {
            // Energy decrease is below rounding: accept on pseudogradient decrease.
            let pg = op.pseudogradient(&trial)?;
            (pg.1 < st.norm_v).then_some(pg)
        } else {
            None
        };
        if let Some((v, nv, _)) = accept {
            st.u = trial;
            st.energy = e;
            st.v = v;
            st.norm_v = nv;
            st.dt = dt;
            st.t += dt;
            return Ok(Some(dt));
        }
        dt *= 0.5;
    }
}

fn trace_point(domain: &Domain, st: &FlowState, mu: f64) -> TracePoint {
    let (d_plus, d_minus) = crate::domain::cone_distances(domain, &st.u);
    TracePoint {
        t: st.t,
        energy: st.energy,
        norm_v: st.norm_v,
        d_plus,
        d_minus,
        mass_err: (domain.mass(&st.u) - mu).abs(),
    }
}

/// Run the flow from `u0` until the pseudogradient norm drops below
/// `tol_pg`, the step budget is used up, or the flow freezes.
pub fn run_flow(op: &ConstrainedOperator, u0: &Field, cfg: &FlowConfig) -> Result<FlowOutcome> {
    run_flow_observed(op, u0, cfg, |_, _| {})
}

/// As [`run_flow`], calling `observe(step, state)` after every accepted step
/// (and once for the initial state with step 0).
pub fn run_flow_observed(
    op: &ConstrainedOperator,
    u0: &Field,
    cfg: &FlowConfig,
    mut observe: impl FnMut(usize, &FlowState),
) -> Result<FlowOutcome> {
    cfg.validate()?;
    let domain = op.domain().clone();
    let mu = op.config().mu;
    let mut st = FlowState::new(op, &u0.values, cfg.dt0 / 2.0)?;
    let mut trace = FlowTrace::default();
    trace.points.push(trace_point(&domain, &st, mu));
    observe(0, &st);
    let in_dstar = |u: &[f64]| !cone_distances(&domain, u, cfg.delta).in_sstar;
    let started_in = in_dstar(&st.u);
    let (mut left, mut entered) = (false, false);
    let mut best = st.u.clone();
    let mut best_nv = st.norm_v;
    let mut status = FlowStatus::MaxSteps;
    let mut steps = 0;
    while steps < cfg.max_steps {
        if st.norm_v <= cfg.tol_pg {
            status = FlowStatus::Converged;
            break;
        }
        if let Some((lo, hi)) = cfg.cutoff {
            if st.energy < lo || st.energy > hi {
                status = FlowStatus::Frozen;
                break;
            }
        }
        let before = st.clone();
        match flow_step(op, &mut st, cfg, steps) {
            Ok(_) => {}
            Err(MassflowError::StepUnderflow { .. }) => {
                status = FlowStatus::StepUnderflow;
                break;
            }
            Err(e) => return Err(e),
        }
        if cfg.freeze_outside_ball && domain.dirichlet(&st.u) >= cfg.rho {
            st = before;
            status = FlowStatus::Frozen;
            break;
        }
        steps += 1;
        let now_in = in_dstar(&st.u);
        if started_in && !now_in {
            left = true;
        }
        if !started_in && now_in {
            entered = true;
        }
        let stop_here = cfg.stop_on_cone_entry && now_in;
        if st.norm_v < best_nv {
            best_nv = st.norm_v;
            best.clone_from(&st.u);
        }
        trace.points.push(trace_point(&domain, &st, mu));
        observe(steps, &st);
        if stop_here {
            status = FlowStatus::EnteredCone;
            break;
        }
    }
    if st.norm_v <= cfg.tol_pg && status != FlowStatus::EnteredCone {
        status = FlowStatus::Converged;
    }
    Ok(FlowOutcome {
        trace,
        terminal: Field {
            domain: domain.clone(),
            values: st.u,
        },
        best: Field {
            domain,
            values: best,
        },
        best_norm_v: best_nv,
        status,
        steps,
        left_dstar: left,
        entered_dstar: entered,
    })
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub u: Field,
    pub lambda: f64,
    /// `||K u + lambda M u - tau M |u|^{p-2} u||_{H^-1} / ||u||_{H^1_0}`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual before each iteration and after the last.
    pub history: Vec<f64>,
}

/// Number of vectors carried when searching for near-null modes.
const NULL_SEARCH_BLOCK: usize = 3;

/// Eigenvectors of `jac e = nu diag(w) e` with `|nu| < threshold` that are
/// `w`-orthogonal to `border` (to relative accuracy `1e-3`). These are
/// approximate symmetries, such as translations of a concentrated bump, along
/// which Newton steps are dominated by rounding.
pub fn near_null_modes(
    jac: &SymTridiag,
    lu: &TridiagLu,
    w: &[f64],
    border: &[f64],
    threshold: f64,
) -> Vec<Vec<f64>> {
    let n = jac.len();
    if n <= NULL_SEARCH_BLOCK {
        return Vec::new();
    }
    let mut block: Vec<Vec<f64>> = (0..NULL_SEARCH_BLOCK)
        .map(|j| {
            (0..n)
                .map(|i| ((i * (2 * j + 3) + 7 * j) as f64 * 0.618_033_988_749_895).fract() - 0.5)
                .collect()
        })
        .collect();
    let mut ritz = Vec::new();
    for _ in 0..6 {
        for v in &mut block {
            let rhs: Vec<f64> = v.iter().zip(w).map(|(x, wi)| x * wi).collect();
            *v = lu.solve(&rhs);
        }
        // w-orthonormalize
        for j in 0..block.len() {
            for i in 0..j {
                let c: f64 = block[i]
                    .iter()
                    .zip(&block[j])
                    .zip(w)
                    .map(|((a, b), wi)| a * b * wi)
                    .sum();
                let (head, tail) = block.split_at_mut(j);
                tail[0]
                    .iter_mut()
                    .zip(&head[i])
                    .for_each(|(x, y)| *x -= c * y);
            }
            let nrm = block[j]
                .iter()
                .zip(w)
                .map(|(a, wi)| a * a * wi)
                .sum::<f64>()
                .sqrt();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Vec::new();
            }
            block[j].iter_mut().for_each(|x| *x /= nrm);
        }
        let h: Vec<Vec<f64>> = block
            .iter()
            .map(|a| block.iter().map(|b| jac.bilinear(a, b)).collect())
            .collect();
        let (vals, vecs) = sym_eigen(&h);
        block = vecs
            .iter()
            .map(|c| {
                let mut z = vec![0.0; n];
                for (ci, x) in c.iter().zip(&block) {
                    z.iter_mut().zip(x).for_each(|(a, b)| *a += ci * b);
                }
                z
            })
            .collect();
        ritz = vals;
    }
    let bnorm = border
        .iter()
        .zip(w)
        .map(|(b, wi)| b * b / wi)
        .sum::<f64>()
        .sqrt();
    block
        .into_iter()
        .zip(ritz)
        .filter(|(v, nu)| nu.abs() < threshold && dot(v, border).abs() < 1e-3 * bnorm)
        .map(|(v, _)| v)
        .collect()
}

/// Remove the `w`-projections of `x` onto `w`-orthonormal `modes`.
pub fn project_out(x: &mut [f64], modes: &[Vec<f64>], w: &[f64]) {
    for m in modes {
        let c: f64 = x.iter().zip(m).zip(w).map(|((a, b), wi)| a * b * wi).sum();
        x.iter_mut().zip(m).for_each(|(a, b)| *a -= c * b);
    }
}

/// Threshold below which Jacobian eigenvalues count as near-null.
pub fn near_null_threshold(lambda: f64) -> f64 {
    1e-6 * lambda.abs().max(1.0)
}

/// Equation residual (relative dual norm) of `(u, lambda)`.
pub fn equation_residual(domain: &Domain, u: &[f64], lambda: f64, tau: f64, p: f64) -> f64 {
    let f = equation_load(domain, u, lambda, tau, p);
    domain.dual_norm(&f) / domain.h1_norm(u).max(f64::MIN_POSITIVE)
}

fn equation_load(domain: &Domain, u: &[f64], lambda: f64, tau: f64, p: f64) -> Vec<f64> {
    let w = domain.weights();
    let mut f = domain.stiffness().matvec(u);
    for i in 0..u.len() {
        f[i] += w[i] * (lambda * u[i] - tau * u[i].abs().powf(p - 2.0) * u[i]);
    }
    f
}

/// Newton on `(u, lambda)` for the equation plus the mass constraint, with
/// the bordered tridiagonal Jacobian. Never errors on non-convergence: the
/// best iterate is returned flagged.
pub fn newton_polish(
    u: &Field,
    lambda_guess: Option<f64>,
    mu: f64,
    tau: f64,
    p: f64,
) -> Result<NewtonResult> {
    let domain: Arc<Domain> = u.domain.clone();
    let w = domain.weights().to_vec();
    let mut x = u.values.clone();
    normalize_mass(&domain, &mut x, mu)?;
    let mut lambda = lambda_guess.unwrap_or_else(|| multiplier_of(&domain, &x, tau, p));
    let merit = |x: &[f64], l: f64| -> f64 {
        equation_residual(&domain, x, l, tau, p) + (domain.mass(x) - mu).abs() / mu
    };
    let mut m = merit(&x, lambda);
    let mut history = vec![equation_residual(&domain, &x, lambda, tau, p)];
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < 50 {
        if iterations > 0 && m < 5e-14 {
            break;
        }
        iterations += 1;
        let f1 = equation_load(&domain, &x, lambda, tau, p);
        let f2 = 0.5 * (domain.mass(&x) - mu);
        let d: Vec<f64> = (0..x.len())
            .map(|i| w[i] * (lambda - (p - 1.0) * tau * x[i].abs().powf(p - 2.0)))
            .collect();
        let jac = domain.stiffness().plus_diag(&d);
        let mx = domain.apply_mass(&x);
        let step = jac.factor().and_then(|lu| {
            let (mut du, dl) = bordered_solve(&lu, &mx, &mx, &f1, f2)?;
            let modes = near_null_modes(&jac, &lu, &w, &mx, near_null_threshold(lambda));
            project_out(&mut du, &modes, &w);
            Ok((du, dl))
        });
        let Ok((du, dl)) = step else { break };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-4 {
            let xt: Vec<f64> = x.iter().zip(&du).map(|(a, b)| a - t * b).collect();
            let lt = lambda - t * dl;
            let mt = merit(&xt, lt);
            if mt < m || (t == 1.0 && mt < 1e-13) {
                stalls = if mt > 0.5 * m { stalls + 1 } else { 0 };
                x = xt;
                lambda = lt;
                m = mt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(equation_residual(&domain, &x, lambda, tau, p));
        if !accepted || (stalls >= 3 && m < 1e-11) {
            break;
        }
    }
    let residual = equation_residual(&domain, &x, lambda, tau, p);
    let mass_err = (domain.mass(&x) - mu).abs();
    let converged = residual < 1e-10 && mass_err < 1e-12 * mu;
    Ok(NewtonResult {
        u: Field { domain, values: x },
        lambda,
        residual,
        iterations,
        converged,
        history,
    })
}

/// Candidates for localized critical points along a path: indices of
/// fields inside the energy band and outside both cone neighbourhoods,
/// sorted by pseudogradient norm.
pub fn ps_localize(
    op: &ConstrainedOperator,
    path: &[Field],
    band: (f64, f64),
    delta: f64,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (i, f) in path.iter().enumerate() {
        let e = op.energy(&f.values);
        if e < band.0 || e > band.1 {
            continue;
        }
        if !cone_distances(op.domain(), &f.values, delta).in_sstar {
            continue;
        }
        let (_, nv, _) = op.pseudogradient(&f.values)?;
        out.push((i, nv));
    }
    out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dirichlet_eigenpairs;
    use crate::operator::OperatorConfig;

    fn problem(mu: f64) -> (Arc<Domain>, ConstrainedOperator, Vec<f64>, Vec<Field>) {
        let d = Domain::interval(0.0, 1.0, 255).unwrap();
        let (vals, phis) = dirichlet_eigenpairs(&d, 3).unwrap();
        let rho = 4.0 * vals[2] * mu + 1.0;
        let lb = crate::constants::select_lambda_bar(rho, mu, 3.0, &d).unwrap();
        let op = ConstrainedOperator::new(
            d.clone(),
            OperatorConfig {
                tau: 1.0,
                lambda_bar: lb,
                rho,
                mu,
                p: 3.0,
            },
        )
        .unwrap();
        (d, op, vals, phis)
    }

    #[test]
    fn ground_state_from_first_mode() {
        let mu = 0.1;
        let (_, op, vals, phis) = problem(mu);
        let cfg = FlowConfig::defaults(vals[0], mu, 0.1, 1e6);
        let u0 = phis[0].normalized(mu).unwrap();
        let out = run_flow(&op, &u0, &cfg).unwrap();
        assert_eq!(
            out.status,
            FlowStatus::Converged,
            "{} {}",
            out.best_norm_v,
            cfg.tol_pg
        );
        for w in out.trace.points.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-9 * (1.0 + w[0].energy.abs()));
        }
        assert!(out.trace.points.iter().all(|p| p.mass_err < 1e-10 * mu));
        let nr = newton_polish(&out.terminal, None, mu, 1.0, 3.0).unwrap();
        assert!(nr.converged, "{:?}", nr.history);
        assert!(nr.lambda < 0.0 && nr.lambda > -vals[0]);
        assert!(nr.u.values.iter().all(|x| *x > 0.0));
        let lu = multiplier_of(&nr.u.domain, &nr.u.values, 1.0, 3.0);
        assert!((lu - nr.lambda).abs() < 1e-10 * nr.lambda.abs());
    }

    #[test]
    fn flow_is_odd() {
        let mu = 0.1;
        let (_, op, vals, phis) = problem(mu);
        let mut cfg = FlowConfig::defaults(vals[0], mu, 0.1, 1e6);
        cfg.max_steps = 40;
        let mix: Vec<f64> = phis[0]
            .values
            .iter()
            .zip(&phis[1].values)
            .map(|(a, b)| 0.3 * a + b)
            .collect();
        let u0 = Field::new(phis[0].domain.clone(), mix)
            .unwrap()
            .normalized(mu)
            .unwrap();
        let a = run_flow(&op, &u0, &cfg).unwrap();
        let b = run_flow(&op, &u0.negated(), &cfg).unwrap();
        assert!(a
            .terminal
            .values
            .iter()
            .zip(&b.terminal.values)
            .all(|(x, y)| *x == -*y));
    }

    #[test]
    fn newton_from_exact_and_perturbed_solutions() {
        let mu = 0.1;
        let (_, op, vals, phis) = problem(mu);
        let cfg = FlowConfig::defaults(vals[0], mu, 0.1, 1e6);
        let out = run_flow(&op, &phis[0].normalized(mu).unwrap(), &cfg).unwrap();
        let exact = newton_polish(&out.terminal, None, mu, 1.0, 3.0).unwrap();
        let again = newton_polish(&exact.u, Some(exact.lambda), mu, 1.0, 3.0).unwrap();
        assert!(
            again.iterations <= 1,
            "{:?} {}",
            again.history,
            exact.residual
        );
        assert!(again.residual < 1e-13);
        let bumped: Vec<f64> = exact
            .u
            .values
            .iter()
            .zip(exact.u.domain.nodes())
            .map(|(v, x)| v * (1.0 + 1e-3 * (7.0 * x).sin()))
            .collect();
        let pert = Field::new(exact.u.domain.clone(), bumped).unwrap();
        let nr = newton_polish(&pert, None, mu, 1.0, 3.0).unwrap();
        assert!(nr.converged);
        assert!(nr.iterations <= 6, "{:?}", nr.history);
    }
}
