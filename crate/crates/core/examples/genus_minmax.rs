//! Genus min-max levels for k = 2 and 3 on (0, 1): deformed symmetric sphere
//! samples, the resulting sign-changing solutions and the level bounds.

use anyhow::Result;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::minmax::{estimate_genus_level, GenusOptions};
use massflow::Domain;

fn main() -> Result<()> {
    let d = Domain::interval(0.0, 1.0, 255)?;
    let (eigs, _) = dirichlet_eigenpairs(&d, 3)?;
    let (tau, p) = (1.0, 3.0);
    for k in [2, 3] {
        for mu in [1e-2, 1e-3] {
            let run = estimate_genus_level(
                &d,
                k,
                mu,
                tau,
                p,
                &GenusOptions {
                    id: format!("genus-k{k}"),
                    ..GenusOptions::default()
                },
            )?;
            let (l, r) = (&run.level, &run.record);
            println!(
                "k = {k}, mu = {mu:.0e}: level {:.6e} in [{:.6e}, {:.6e}], ordered {}; lambda = {:.5} (-lambda_k = {:.5}), sign changes {}, Morse {:?}/{:?}",
                l.value,
                l.lower,
                l.upper,
                l.is_ordered(),
                r.lambda,
                -eigs[k - 1],
                r.sign_changes,
                r.morse,
                r.constrained_morse
            );
        }
    }
    Ok(())
}
