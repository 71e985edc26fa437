//! The constrained linear solve behind the descending flow: w = G(u), the
//! pseudogradient V = u - w, its multiplier and the cone distances.

use anyhow::Result;
use massflow::constants::select_lambda_bar;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::operator::{
    cone_distances, cone_separation_bound, ConstrainedOperator, OperatorConfig,
};
use massflow::sampling::RandomFields;
use massflow::Domain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let d = Domain::interval(0.0, 1.0, 511)?;
    let (mu, p) = (1e-2, 3.0);
    let (eigs, _) = dirichlet_eigenpairs(&d, 2)?;
    let rho = 4.0 * eigs[1] * mu;
    let lambda_bar = select_lambda_bar(rho, mu, p, &d)?;
    let op = ConstrainedOperator::new(
        d.clone(),
        OperatorConfig {
            tau: 1.0,
            lambda_bar,
            rho,
            mu,
            p,
        },
    )?;
    let delta = 0.5 * cone_separation_bound(eigs[0], mu);
    println!(
        "lambda_1 = {:.6}, rho = {rho:.6}, lambda_bar = {lambda_bar:.6}, delta = {delta:.6}",
        eigs[0]
    );

    let fields = RandomFields::new(&d, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let Some(u) = fields.sample_in_ball(&mut rng, mu, rho) else {
            continue;
        };
        let (v, norm_v, g) = op.pseudogradient(&u)?;
        let cd = cone_distances(&d, &u, delta);
        println!(
            "E = {:.6e}, ||V|| = {norm_v:.4e}, omega = {:+.4e}, solve residual {:.1e}, mass error {:.1e}, d+ = {:.4}, d- = {:.4}, in S* = {}",
            op.energy(&u),
            g.omega,
            g.residual,
            g.constraint_err,
            cd.d_plus,
            cd.d_minus,
            cd.in_sstar
        );
        debug_assert_eq!(v.len(), u.len());
    }
    Ok(())
}
