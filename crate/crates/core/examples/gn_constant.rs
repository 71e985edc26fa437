//! Exponent data, the sharp Gagliardo-Nirenberg constant and the critical
//! mass across the three regimes, plus the constant attained by a soliton
//! truncated to a bounded interval.

use anyhow::Result;
use massflow::constants::{exponents, gn_constant, gn_ratio, mu_bar, soliton_1d_profile};
use massflow::{Domain, Field};

fn main() -> Result<()> {
    for (p, n) in [(3.0, 1), (6.0, 1), (7.0, 1), (3.0, 3), (4.0, 3)] {
        let ex = exponents(p, n)?;
        println!(
            "p = {p}, N = {n}: gamma = {:.4}, p_c = {:.4}, regime {:?}, C = {:.10}",
            ex.gamma,
            ex.p_c,
            ex.regime,
            gn_constant(p, n)?
        );
    }
    println!("critical mass in 1D: {:.10}", mu_bar(1)?);

    let d = Domain::interval(-1.0, 1.0, 4095)?;
    for p in [3.0, 7.0] {
        for scale in [5.0, 20.0, 80.0] {
            let edge = soliton_1d_profile(p, scale);
            let u = Field::from_fn(d.clone(), |x| soliton_1d_profile(p, scale * x) - edge);
            let ratio = gn_ratio(u.mass(), u.dirichlet(), d.lp_integral(&u.values, p), p, 1)
                / gn_constant(p, 1)?;
            println!("p = {p}, soliton scale {scale:>4}: ratio to the sharp constant {ratio:.9}");
        }
    }
    Ok(())
}
