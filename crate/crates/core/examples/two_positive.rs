//! Two positive radial solutions of the same mass in the mass-supercritical
//! regime: a low-energy one near the first eigenfunction and a concentrated
//! high-energy one. Both are checked with the Morse analyzer.

use anyhow::Result;
use massflow::eigen::dirichlet_eigenvalue;
use massflow::morse::morse_index;
use massflow::shooting::{default_lambda_end, default_lambda_grid, find_two_positive, mass_curve};
use massflow::Domain;

fn main() -> Result<()> {
    let (p, tau) = (4.0, 1.0);
    let d = Domain::ball(3, 1.0, 4096)?;
    let l1 = dirichlet_eigenvalue(&d, 1);
    let curve = mass_curve(
        &d,
        tau,
        p,
        &default_lambda_grid(l1, default_lambda_end(&d, tau, p)?, 72),
    )?;
    let mu = 0.5 * curve.max_mass();
    let two = find_two_positive(&d, &curve, mu)?;
    println!("mass {mu:.6} ({} crossings verified)", two.count_verified);
    for (name, s) in [("low", &two.u_low), ("high", &two.u_high)] {
        print!(
            "{name:>4}: lambda = {:>14.6e}, E = {:>12.6e}, u(0) = {:.4e}, residual {:.1e}",
            s.lambda, s.energy, s.center_value, s.ode_residual
        );
        if let Some(u) = &s.u {
            let m = morse_index(u, s.lambda, tau, p)?;
            print!(
                ", Morse {} (constrained {})",
                m.morse_index, m.constrained_index
            );
        }
        println!();
    }
    Ok(())
}
