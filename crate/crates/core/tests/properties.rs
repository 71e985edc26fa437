//! Invariants of the discretization, the constrained operator, the flow and
//! the record format, checked on random inputs.

use std::sync::Arc;

use massflow::constants::select_lambda_bar;
use massflow::eigen::dirichlet_eigenpairs;
use massflow::flow::{flow_step, newton_polish, run_flow, FlowConfig, FlowState};
use massflow::morse::morse_index;
use massflow::operator::{cone_distances, ConstrainedOperator, OperatorConfig};
use massflow::record::{SolutionKind, SolutionRecord};
use massflow::sampling::RandomFields;
use massflow::{Domain, Field};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn operator(n: usize, mu: f64, p: f64) -> (Arc<Domain>, ConstrainedOperator, f64) {
    let d = Domain::interval(0.0, 1.0, n).unwrap();
    let (eigs, _) = dirichlet_eigenpairs(&d, 2).unwrap();
    let rho = 4.0 * eigs[1] * mu;
    let lambda_bar = select_lambda_bar(rho, mu, p, &d).unwrap();
    let op = ConstrainedOperator::new(
        d.clone(),
        OperatorConfig {
            tau: 1.0,
            lambda_bar,
            rho,
            mu,
            p,
        },
    )
    .unwrap();
    (d, op, eigs[0])
}

fn random_field(d: &Arc<Domain>, seed: u64, mu: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RandomFields::new(d, 12).unwrap().sample(&mut rng, mu)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn discrete_eigenvalues_lie_below_and_converge_to_the_continuum(n in 31usize..400, k in 1usize..5) {
        let exact = (k as f64 * std::f64::consts::PI).powi(2);
        let coarse = dirichlet_eigenpairs(&Domain::interval(0.0, 1.0, n).unwrap(), k).unwrap().0[k - 1];
        let fine = dirichlet_eigenpairs(&Domain::interval(0.0, 1.0, 2 * n + 1).unwrap(), k).unwrap().0[k - 1];
        prop_assert!(coarse < fine && fine < exact, "{coarse} {fine} {exact}");
    }

    #[test]
    fn flow_steps_conserve_mass_and_decrease_energy(seed in any::<u64>(), mu in 1e-4f64..1.0, p in 2.5f64..7.0) {
        let (d, op, l1) = operator(127, mu, p);
        let u0 = random_field(&d, seed, mu);
        let cfg = FlowConfig::defaults(l1, mu, 0.1, op.config().rho);
        let mut st = FlowState::new(&op, &u0, cfg.dt0).unwrap();
        for step in 1..=20 {
            let before = st.energy;
            // Steps whose energy change is below rounding are accepted on a
            // pseudogradient decrease, so allow rounding-level increases.
            let slack = 1e3 * f64::EPSILON * before.abs().max(d.dirichlet(&st.u));
            if flow_step(&op, &mut st, &cfg, step).unwrap().is_none() {
                break;
            }
            prop_assert!((d.mass(&st.u) - mu).abs() <= 1e-12 * mu);
            prop_assert!(st.energy <= before + slack, "{} after {}", st.energy, before);
        }
    }

    #[test]
    fn constrained_solve_is_odd_and_keeps_the_mass_constraint(seed in any::<u64>(), mu in 1e-3f64..1.0) {
        let (d, op, _) = operator(95, mu, 3.0);
        let u = random_field(&d, seed, mu);
        let minus: Vec<f64> = u.iter().map(|x| -x).collect();
        let g = op.solve_g(&u).unwrap();
        let gm = op.solve_g(&minus).unwrap();
        prop_assert!(g.w.iter().zip(&gm.w).all(|(a, b)| *a == -*b));
        prop_assert!(g.constraint_err <= 1e-12 * mu);
    }

    #[test]
    fn cone_distances_swap_under_negation(seed in any::<u64>(), mu in 1e-3f64..1.0) {
        let d = Domain::interval(0.0, 1.0, 63).unwrap();
        let u = random_field(&d, seed, mu);
        let minus: Vec<f64> = u.iter().map(|x| -x).collect();
        let a = cone_distances(&d, &u, 0.1);
        let b = cone_distances(&d, &minus, 0.1);
        prop_assert_eq!(a.d_plus, b.d_minus);
        prop_assert_eq!(a.d_minus, b.d_plus);
        let abs: Vec<f64> = u.iter().map(|x| x.abs()).collect();
        prop_assert_eq!(cone_distances(&d, &abs, 0.1).d_plus, 0.0);
    }

    #[test]
    fn records_round_trip_losslessly(
        mu in 1e-12f64..1e6,
        lambda in -1e8f64..1e8,
        residual in 0.0f64..1.0,
        id in "[a-z][a-z0-9-]{0,12}",
    ) {
        let d = Domain::interval(0.0, 1.0, 31).unwrap();
        let u = Field::from_fn(d.clone(), |x| (std::f64::consts::PI * x).sin()).normalized(mu).unwrap();
        let rec = SolutionRecord::from_solution(id, SolutionKind::Flow, &u, lambda, mu, 1.0, 3.0, residual);
        let line = rec.to_json_line().unwrap();
        let back: SolutionRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back.mu.to_bits(), rec.mu.to_bits());
        prop_assert_eq!(back.lambda.to_bits(), rec.lambda.to_bits());
        prop_assert_eq!(back.energy.to_bits(), rec.energy.to_bits());
        prop_assert_eq!(back.residual.to_bits(), rec.residual.to_bits());
        prop_assert_eq!(back.to_json_line().unwrap(), line);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn morse_indices_bracket_the_constrained_index(k in 1usize..5, mu in 1e-3f64..3.0, p in 2.5f64..5.0) {
        let d = Domain::interval(0.0, 1.0, 95).unwrap();
        let kf = k as f64;
        let u0 = Field::from_fn(d.clone(), |x| (kf * std::f64::consts::PI * x).sin()).normalized(mu).unwrap();
        let nr = newton_polish(&u0, None, mu, 1.0, p).unwrap();
        prop_assume!(nr.converged);
        let s = morse_index(&nr.u, nr.lambda, 1.0, p).unwrap();
        prop_assert!(s.constrained_index <= s.morse_index && s.morse_index <= s.constrained_index + 1, "{s:?}");
        prop_assert!(s.morse_index >= 1);
    }

    #[test]
    fn flows_are_reproducible(seed in any::<u64>()) {
        let mu = 1e-2;
        let (d, op, l1) = operator(63, mu, 3.0);
        let u0 = Field::new(d.clone(), random_field(&d, seed, mu)).unwrap();
        let mut cfg = FlowConfig::defaults(l1, mu, 0.1, op.config().rho);
        cfg.max_steps = 200;
        let a = run_flow(&op, &u0, &cfg).unwrap();
        let b = run_flow(&op, &u0, &cfg).unwrap();
        prop_assert_eq!(a.steps, b.steps);
        prop_assert!(a.terminal.values.iter().zip(&b.terminal.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
