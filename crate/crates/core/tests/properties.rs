use proptest::prelude::*;

use nonlocal_competition::dispersal::{BoundaryMode, DispersalOperator, KernelSpec};
use nonlocal_competition::dynamics::{order_preservation_check, step, System};
use nonlocal_competition::grid::{competitive_leq, Field, Grid, StatePair};
use nonlocal_competition::reaction::{lv_model, LotkaVolterraParams, ReactionModel, ResourceProfile};
use nonlocal_competition::steady::{monotone_iterate_v, solve_theta, SteadyOptions};

fn model(mean: f64, amplitude: f64, b: f64, c: f64) -> impl ReactionModel {
    lv_model(LotkaVolterraParams {
        m: ResourceProfile::Sinusoidal {
            mean,
            amplitude,
            frequency: 1.0,
        },
        b,
        c,
    })
    .unwrap()
}

fn mode() -> impl Strategy<Value = BoundaryMode> {
    prop_oneof![Just(BoundaryMode::Lethal), Just(BoundaryMode::NoFlux)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_is_bracketed_and_solves_its_equation(
        mean in 0.5..2.0f64,
        amplitude in 0.0..0.5f64,
        d in 0.005..1.0f64,
        drift in -0.05..0.05f64,
        mode in mode(),
    ) {
        let g = Grid::new(0.0, 1.0, 30).unwrap();
        let k = DispersalOperator::assemble(&KernelSpec::shifted_gaussian(0.1, drift), &g, mode, d).unwrap();
        let m = model(mean, amplitude, 0.5, 0.5);
        let r = solve_theta(&k, &m, &SteadyOptions::default()).unwrap();
        prop_assert!(r.residual <= 1e-10);
        if r.positive {
            let (lo, hi) = r.bracket.unwrap();
            prop_assert!(lo.leq(&r.state, 1e-12).unwrap());
            prop_assert!(r.state.leq(&hi, 0.0).unwrap());
            prop_assert!(r.state.min() > 0.0);
        }
    }

    #[test]
    fn limiting_chain_is_monotone(
        mean in 0.8..1.5f64,
        amplitude in 0.0..0.4f64,
        b in 0.1..0.9f64,
        c in 0.1..1.0f64,
    ) {
        let g = Grid::new(0.0, 1.0, 30).unwrap();
        let p = DispersalOperator::assemble(&KernelSpec::gaussian(0.1), &g, BoundaryMode::Lethal, 0.1).unwrap();
        let m = model(mean, amplitude, b, c);
        let sol = monotone_iterate_v(&p, &m, &SteadyOptions::default()).unwrap();
        for w in sol.chain.windows(2) {
            prop_assert!(w[0].leq(&w[1], 1e-8).unwrap());
        }
        prop_assert!(sol.v0.leq(&sol.eta.state, 1e-8).unwrap());
    }

    #[test]
    fn steps_keep_order_and_positivity(
        seed_u in proptest::collection::vec(0.05..1.0f64, 16),
        seed_v in proptest::collection::vec(0.05..1.0f64, 16),
        du in proptest::collection::vec(0.0..0.2f64, 16),
        dv in proptest::collection::vec(0.0..0.2f64, 16),
        mode in mode(),
    ) {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let k = DispersalOperator::assemble(&KernelSpec::gaussian(0.1), &g, mode, 0.05).unwrap();
        let p = DispersalOperator::assemble(&KernelSpec::gaussian(0.1), &g, mode, 0.3).unwrap();
        let m = model(1.0, 0.3, 0.5, 0.5);
        let sys = System::new(&k, &p, &m).unwrap();
        let lo = StatePair::new(Field::new(g.clone(), seed_u.clone()).unwrap(), Field::new(g.clone(), seed_v.clone()).unwrap()).unwrap();
        let hi_u: Vec<f64> = seed_u.iter().zip(&du).map(|(a, b)| a + b).collect();
        let hi_v: Vec<f64> = seed_v.iter().zip(&dv).map(|(a, b)| (a - b).max(0.0)).collect();
        let hi = StatePair::new(Field::new(g.clone(), hi_u).unwrap(), Field::new(g.clone(), hi_v).unwrap()).unwrap();
        prop_assert!(competitive_leq(&lo, &hi).unwrap());
        prop_assert!(order_preservation_check(&sys, &lo, &hi, sys.dt_max(), 200).unwrap());
        let next = step(&sys, &lo, sys.dt_max(), sys.dt_max()).unwrap();
        prop_assert!(next.u.min() > 0.0 && next.v.min() > 0.0);
    }
}
