//! Normalized descending flow, followed by a Newton polish. From the second
//! Dirichlet mode the flow settles on the nearby sign-changing solution.
//! From a perturbed mode it leaves that saddle and descends to the positive
//! ground state, which is why sign-changing solutions need the min-max search.

use anyhow::Result;
use massflow::constants::select_lambda_bar;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::flow::{newton_polish, run_flow, FlowConfig};
use massflow::morse::morse_index;
use massflow::operator::{
    cone_separation_bound, multiplier_of, ConstrainedOperator, OperatorConfig,
};
use massflow::{Domain, Field};

fn main() -> Result<()> {
    let d = Domain::interval(0.0, 1.0, 511)?;
    let (mu, tau, p) = (1e-2, 1.0, 3.0);
    let (eigs, modes) = dirichlet_eigenpairs(&d, 4)?;
    let rho = 4.0 * eigs[1] * mu;
    let lambda_bar = select_lambda_bar(rho, mu, p, &d)?;
    let op = ConstrainedOperator::new(
        d.clone(),
        OperatorConfig {
            tau,
            lambda_bar,
            rho,
            mu,
            p,
        },
    )?;

    let mut cfg = FlowConfig::defaults(eigs[0], mu, 0.5 * cone_separation_bound(eigs[0], mu), rho);
    cfg.max_steps = 2000;
    let perturbed: Vec<f64> = modes[1]
        .values
        .iter()
        .zip(&modes[3].values)
        .map(|(a, b)| a + 0.3 * b)
        .collect();
    for (name, start) in [
        ("second mode", modes[1].values.clone()),
        ("perturbed second mode", perturbed),
    ] {
        let u0 = Field::new(d.clone(), start)?.normalized(mu)?;
        let out = run_flow(&op, &u0, &cfg)?;
        println!(
            "{name}: {:?} after {} steps, smallest ||V|| {:.3e}",
            out.status, out.steps, out.best_norm_v
        );
        for pt in out
            .trace
            .points
            .iter()
            .step_by((out.trace.points.len() / 6).max(1))
        {
            println!(
                "  t = {:.4e}  E = {:.10e}  ||V|| = {:.3e}",
                pt.t, pt.energy, pt.norm_v
            );
        }
        let nr = newton_polish(
            &out.best,
            Some(multiplier_of(&d, &out.best.values, tau, p)),
            mu,
            tau,
            p,
        )?;
        let s = morse_index(&nr.u, nr.lambda, tau, p)?;
        println!(
            "  Newton: converged {}, residual {:.2e}, lambda = {:.8}, Morse {} (constrained {})",
            nr.converged, nr.residual, nr.lambda, s.morse_index, s.constrained_index
        );
    }
    println!("-lambda_1 = {:.8}, -lambda_2 = {:.8}", -eigs[0], -eigs[1]);
    Ok(())
}
