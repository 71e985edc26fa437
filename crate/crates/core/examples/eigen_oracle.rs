//! Dirichlet eigenvalues of the discrete Laplacian on (0, 1) against
//! (k pi)^2, with the observed convergence order under grid refinement.

use anyhow::Result;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::Domain;

fn main() -> Result<()> {
    let exact: Vec<f64> = (1..=4)
        .map(|k| (k as f64 * std::f64::consts::PI).powi(2))
        .collect();
    let mut previous: Option<Vec<f64>> = None;
    println!(
        "{:>6} {:>4} {:>22} {:>12} {:>7}",
        "n", "k", "lambda_k", "rel error", "order"
    );
    for n in [127, 255, 511, 1023] {
        let (eigs, modes) = dirichlet_eigenpairs(&Domain::interval(0.0, 1.0, n)?, 4)?;
        for (k, (l, e)) in eigs.iter().zip(&exact).enumerate() {
            let err = (l - e).abs() / e;
            let order = previous
                .as_ref()
                .map(|prev| ((prev[k] - e).abs() / (l - e).abs()).log2());
            let order = order.map_or(String::from("-"), |o| format!("{o:.3}"));
            println!("{n:>6} {:>4} {l:>22.15} {err:>12.3e} {order:>7}", k + 1);
        }
        println!(
            "{:>6} mode masses: {:?}",
            "",
            modes
                .iter()
                .map(|m| format!("{:.3}", m.mass()))
                .collect::<Vec<_>>()
        );
        previous = Some(eigs);
    }
    Ok(())
}
