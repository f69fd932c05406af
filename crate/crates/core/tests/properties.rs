use proptest::prelude::*;
use qportfolio_core::{
    interpolate, make_stream, portfolio_value, qubit_absorption_probability, sho_transition_density,
    value_closed_form_sho, Axis, Direction, Grid, Payoff, RiskNeutralSpec, ShoParams, TimeSchedule,
    TransitionMode, ValueField,
};

fn sho() -> impl Strategy<Value = ShoParams> {
    (0.1f64..3.0, 0.05f64..5.0).prop_map(|(g, n)| ShoParams::new(g, n, 1.0).unwrap())
}

fn step(a: f64) -> Payoff {
    Payoff::Step {
        thresholds: vec![Some(a)],
        direction: Direction::Above,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn step_value_falls_as_the_threshold_rises(
        p in sho(), r in 0.0f64..0.2, x in -3.0f64..3.0, a in -3.0f64..3.0, gap in 0.0f64..2.0,
    ) {
        let rn = RiskNeutralSpec::new(r, 1.0).unwrap();
        let lo = value_closed_form_sho(&p, &rn, &step(a), &[x], 0.0).unwrap().value;
        let hi = value_closed_form_sho(&p, &rn, &step(a + gap), &[x], 0.0).unwrap().value;
        prop_assert!(hi <= lo);
        prop_assert!((0.0..=(-r).exp()).contains(&lo));
    }

    #[test]
    fn above_and_below_steps_sum_to_the_discount(
        p in sho(), r in 0.0f64..0.2, x in -3.0f64..3.0, a in -3.0f64..3.0, t in 0.0f64..0.9,
    ) {
        let rn = RiskNeutralSpec::new(r, 1.0).unwrap();
        let below = Payoff::Step { thresholds: vec![Some(a)], direction: Direction::Below };
        let sum = value_closed_form_sho(&p, &rn, &step(a), &[x], t).unwrap().value
            + value_closed_form_sho(&p, &rn, &below, &[x], t).unwrap().value;
        prop_assert!((sum - rn.discount(t)).abs() <= 1e-14);
    }

    #[test]
    fn call_dominates_its_discounted_forward_intrinsic(
        p in sho(), r in 0.0f64..0.2, x in -3.0f64..3.0, k in -3.0f64..3.0,
    ) {
        // Jensen: e^{-r tau} E[(s_T - K)^+] >= e^{-r tau} (E s_T - K)^+
        let rn = RiskNeutralSpec::new(r, 1.0).unwrap();
        let call = Payoff::Call { strikes: vec![Some(k)] };
        let v = value_closed_form_sho(&p, &rn, &call, &[x], 0.0).unwrap().value;
        let intrinsic = (-r).exp() * (x * r.exp() - k).max(0.0);
        prop_assert!(v >= intrinsic - 1e-12);
    }

    #[test]
    fn transition_variance_grows_with_elapsed_time(
        p in sho(), r in 0.0f64..0.2, t in 0.0f64..5.0, dt in 0.0f64..1.0,
    ) {
        for mode in [TransitionMode::Physical, TransitionMode::RiskNeutral { r }] {
            let a = sho_transition_density(&p, mode, &[0.0], t).unwrap().variance[0];
            let b = sho_transition_density(&p, mode, &[0.0], t + dt).unwrap().variance[0];
            prop_assert!(0.0 <= a && a <= b);
        }
    }

    #[test]
    fn portfolio_value_is_claim_minus_holdings(
        f in -10.0f64..10.0, d in prop::collection::vec(-3.0f64..3.0, 1..4), scale in -2.0f64..2.0,
    ) {
        let s: Vec<f64> = d.iter().map(|x| x * scale + 1.0).collect();
        let pi = portfolio_value(f, &d, &s).unwrap();
        let holdings: f64 = d.iter().zip(&s).map(|(a, b)| a * b).sum();
        prop_assert!((pi + holdings - f).abs() <= 1e-12 * (1.0 + f.abs() + holdings.abs()));
        prop_assert_eq!(portfolio_value(f, &vec![0.0; s.len()], &s).unwrap(), f);
        prop_assert!(portfolio_value(f, &d, &s[1..]).is_err());
    }

    #[test]
    fn random_access_matches_sequential_draws(
        seed in any::<u64>(), stream in any::<u64>(), skip in 0u64..40,
    ) {
        let mut a = make_stream(seed, stream);
        let b = make_stream(seed, stream);
        for i in 0..skip + 10 {
            let x = a.next_normal();
            prop_assert_eq!(x.to_bits(), b.normal_at(i).to_bits());
        }
        let mut c = make_stream(seed, stream);
        c.seek(skip);
        prop_assert_eq!(c.next_normal().to_bits(), b.normal_at(skip).to_bits());
    }

    #[test]
    fn interpolation_reproduces_linear_fields(
        slope in -5.0f64..5.0, tilt in -5.0f64..5.0, x in -0.99f64..0.99, y in -0.99f64..0.99,
    ) {
        let axis = Axis::new(-1.0, 1.0, 37).unwrap();
        let grid = Grid::two(axis, axis);
        let values = grid.sample(|s| 0.5 + slope * s[0] + tilt * s[1]);
        let field = ValueField { grid, values, time: 0.0, discounted: true };
        let v = interpolate(&field, &[x, y]).unwrap();
        prop_assert!((v - (0.5 + slope * x + tilt * y)).abs() <= 1e-12);
    }

    #[test]
    fn absorption_probability_is_monotone_and_symmetric(z in -0.95f64..0.95, dz in 0.0f64..0.04) {
        let p = qubit_absorption_probability(z).unwrap();
        let q = qubit_absorption_probability(z + dz).unwrap();
        let mirror = qubit_absorption_probability(-z).unwrap();
        prop_assert!(p <= q + 1e-12);
        prop_assert!((p + mirror - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn schedule_times_are_exact_multiples(t0 in -5.0f64..5.0, span in 0.01f64..10.0, n in 1usize..5000) {
        let s = TimeSchedule::new(t0, t0 + span, n).unwrap();
        prop_assert_eq!(s.time(0), t0);
        prop_assert_eq!(s.time(n), t0 + span);
        let k = n / 2;
        prop_assert_eq!(s.time(k), t0 + k as f64 * s.dt());
    }
}
