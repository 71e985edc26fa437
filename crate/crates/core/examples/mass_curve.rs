//! Mass curve of positive radial solutions on the unit ball in three
//! dimensions, for a subcritical and a supercritical exponent.

use anyhow::Result;
use massflow::eigen::dirichlet_eigenvalue;
use massflow::shooting::{default_lambda_end, default_lambda_grid, mass_curve};
use massflow::Domain;

fn main() -> Result<()> {
    let d = Domain::ball(3, 1.0, 2048)?;
    let l1 = dirichlet_eigenvalue(&d, 1);
    println!(
        "lambda_1 = {l1:.8} (pi^2 = {:.8})",
        std::f64::consts::PI.powi(2)
    );
    for p in [3.0, 4.0] {
        let end = default_lambda_end(&d, 1.0, p)?;
        let curve = mass_curve(&d, 1.0, p, &default_lambda_grid(l1, end, 40))?;
        println!(
            "\np = {p}: {} samples, max mass {:.6}, monotone segments {:?}",
            curve.samples.len(),
            curve.max_mass(),
            curve.monotone_segments
        );
        for s in curve.samples.iter().step_by(5) {
            println!(
                "  lambda = {:>14.6e}  M = {:>12.6e}  E = {:>13.6e}  u(0) = {:>11.4e}  {:?}",
                s.lambda, s.mass, s.energy, s.center, s.source
            );
        }
    }
    Ok(())
}
