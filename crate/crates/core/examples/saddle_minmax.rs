//! Saddle search in the mass-supercritical regime: a two-bump path from the
//! second eigenfunction, an index-2 climb from its maximum, and a short
//! continuation in the coupling. Needs a fine grid; takes about 20 seconds in release mode.

use anyhow::Result;
use massflow::minmax::{estimate_saddle_level, tau_continuation, SaddleOptions};
use massflow::Domain;

fn main() -> Result<()> {
    let d = Domain::interval(-1.0, 1.0, 16383)?;
    let (k, mu, p) = (2, 1.5, 7.0);
    let opts = SaddleOptions {
        id: "saddle".into(),
        ..SaddleOptions::default()
    };

    let run = estimate_saddle_level(&d, k, mu, 1.0, p, &opts)?;
    println!(
        "tau = 1: level {:.6e}, path maximum {:.6e}, lower bound {:.6e}, climb iterations {}",
        run.level.value, run.path_max.value, run.level.lower, run.climb_iterations
    );
    for n in &run.notes {
        println!("  note: {n}");
    }
    if let Some(r) = &run.record {
        println!(
            "  lambda = {:.6e}, sign changes {}, Morse {:?}/{:?}, residual {:.1e}",
            r.lambda, r.sign_changes, r.morse, r.constrained_morse, r.residual
        );
    }

    let cont = tau_continuation(&d, k, mu, p, &[0.9, 0.95, 1.0], &opts)?;
    for r in &cont.runs {
        println!("tau = {:.2}: level {:.6e}", r.level.tau, r.level.value);
    }
    println!(
        "levels nonincreasing in tau: {}, smallest multiplier {:.6e}",
        cont.monotone, cont.min_lambda
    );
    Ok(())
}
