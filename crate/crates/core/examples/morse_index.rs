//! Morse and constrained Morse indices of the genus solutions for k = 2..4,
//! and the multiplier/energy classification of a family of masses.

use anyhow::Result;
use massflow::eigen::dirichlet_eigenvalue;
use massflow::minmax::{estimate_genus_level, GenusOptions};
use massflow::morse::{morse_index, multiplier_energy_bridge, BridgeOptions};
use massflow::Domain;

fn main() -> Result<()> {
    let d = Domain::interval(0.0, 1.0, 255)?;
    let (tau, p) = (1.0, 3.0);
    for k in 2..=4 {
        let run = estimate_genus_level(&d, k, 1e-3, tau, p, &GenusOptions::default())?;
        let s = morse_index(&run.newton.u, run.newton.lambda, tau, p)?;
        let lowest: Vec<String> = s
            .eigvals
            .iter()
            .take(k + 1)
            .map(|e| format!("{e:.3}"))
            .collect();
        println!(
            "k = {k}: Morse {}, constrained {}, degenerate {}, lowest eigenvalues [{}], dead band {:.1e}",
            s.morse_index,
            s.constrained_index,
            s.degenerate,
            lowest.join(", "),
            s.dead_band
        );
    }

    let family = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|mu| Ok(estimate_genus_level(&d, 2, *mu, tau, p, &GenusOptions::default())?.record))
        .collect::<Result<Vec<_>>>()?;
    let report = multiplier_energy_bridge(
        &family,
        BridgeOptions {
            lambda_scale: dirichlet_eigenvalue(&d, 1),
            ..BridgeOptions::default()
        },
    )?;
    println!(
        "k = 2 family over mu: {}",
        serde_json::to_string_pretty(&report)?
    );
    Ok(())
}
