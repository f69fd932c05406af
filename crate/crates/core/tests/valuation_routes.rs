use std::time::Instant;

use qportfolio_core::{
    deltas, qubit_gaussian_approx_value, value, value_closed_form_sho, Direction, McOptions, Model,
    Payoff, PdeOptions, QubitParams, RiskNeutralSpec, ShoParams, ValueRoute,
};

fn sho() -> ShoParams {
    ShoParams::new(1.0, 1.0, 1.0).unwrap()
}

fn panel_states() -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [0.5, -0.3],
        [1.0, 0.5],
        [-0.5, 0.3],
        [1.5, -1.0],
        [-1.0, -1.0],
        [0.2, 0.8],
        [-1.5, 0.5],
        [0.7, -0.7],
        [1.2, 1.2],
    ]
}

fn panel_payoffs() -> Vec<Payoff> {
    vec![
        Payoff::Delta {
            points: vec![0.5, -0.3],
        },
        Payoff::Step {
            thresholds: vec![Some(0.2), Some(-0.4)],
            direction: Direction::Above,
        },
        Payoff::Call {
            strikes: vec![Some(0.3), Some(-0.2)],
        },
    ]
}

#[test]
fn sho_closed_form_and_pde_agree_on_the_panel() {
    let model = Model::Sho(sho());
    for r in [0.0, 0.05] {
        let rn = RiskNeutralSpec::new(r, 1.0).unwrap();
        for payoff in panel_payoffs() {
            let clock = Instant::now();
            let probes: Vec<Vec<f64>> = panel_states().iter().map(|s| s.to_vec()).collect();
            let surface = qportfolio_core::value_surface(
                &model,
                &rn,
                &payoff,
                &probes,
                0.0,
                None,
                &PdeOptions::default(),
            )
            .unwrap();
            let mut worst: f64 = 0.0;
            for s in &probes {
                let exact = value_closed_form_sho(&sho(), &rn, &payoff, s, 0.0).unwrap().value;
                let pde = surface.value_at(0, s).unwrap();
                worst = worst.max((pde / exact - 1.0).abs());
            }
            println!(
                "r={r} {:?}: worst relative {worst:.2e} in {:?}",
                payoff.kind(),
                clock.elapsed()
            );
            assert!(worst <= 0.01);
        }
    }
}

#[test]
fn qubit_gaussian_approximation_ladder() {
    let q = QubitParams::with_rate(1.0).unwrap();
    let step = Payoff::Step {
        thresholds: vec![Some(0.0)],
        direction: Direction::Above,
    };
    let mut last = f64::INFINITY;
    for horizon in [1.0, 0.3, 0.1, 0.03] {
        let rn = RiskNeutralSpec::new(0.05, horizon).unwrap();
        let c = qubit_gaussian_approx_value(&q, &rn, &step, &[0.2], 0.0, &PdeOptions::default())
            .unwrap();
        let rel = (c.discrepancy / c.pde.value).abs();
        println!(
            "kappa tau={horizon}: approx {} pde {} rel {rel:.3e}",
            c.approximation.value, c.pde.value
        );
        assert!(rel < last);
        last = rel;
    }
}

#[test]
fn deep_in_the_money_call_delta_is_one() {
    let rn = RiskNeutralSpec::new(0.0, 1.0).unwrap();
    let call = Payoff::Call {
        strikes: vec![Some(-6.0), Some(-6.0)],
    };
    let model = Model::Sho(sho());
    let d = deltas(&ValueRoute::ClosedForm, &model, &rn, &call, &[0.2, -0.1], 0.0, &[1e-3, 1e-3])
        .unwrap();
    for x in d {
        assert!((x - 1.0).abs() < 0.02);
    }
}

#[test]
fn symmetric_step_delta_is_the_kernel_height() {
    let rn = RiskNeutralSpec::new(0.0, 1.0).unwrap();
    let step = Payoff::Step {
        thresholds: vec![Some(0.4)],
        direction: Direction::Above,
    };
    let model = Model::Sho(sho());
    // d/dx Phi((x - a) / sd) at x = a is 1 / (sd sqrt(2 pi)), variance 2 D tau = 1
    let oracle = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let cf = deltas(&ValueRoute::ClosedForm, &model, &rn, &step, &[0.4], 0.0, &[1e-4]).unwrap();
    assert!((cf[0] / oracle - 1.0).abs() < 0.01);
    let pde = deltas(&ValueRoute::Pde(PdeOptions::default()), &model, &rn, &step, &[0.4], 0.0, &[0.05])
        .unwrap();
    assert!((pde[0] / oracle - 1.0).abs() < 0.01, "{pde:?}");
    let mc = McOptions {
        n_paths: 200_000,
        master_seed: 3,
        max_dt: 0.01,
    };
    let mc_delta = deltas(&ValueRoute::MonteCarlo(mc), &model, &rn, &step, &[0.4], 0.0, &[0.1]).unwrap();
    assert!((mc_delta[0] / oracle - 1.0).abs() < 0.05, "{mc_delta:?}");
}

#[test]
fn constant_payoff_has_zero_deltas() {
    let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
    let c = Payoff::Constant { value: 2.0 };
    for (route, model) in [
        (ValueRoute::ClosedForm, Model::Sho(sho())),
        (ValueRoute::Pde(PdeOptions::default()), Model::Qubit(QubitParams::with_rate(1.0).unwrap())),
        (ValueRoute::MonteCarlo(McOptions::default()), Model::Sho(sho())),
    ] {
        let d = deltas(&route, &model, &rn, &c, &[0.3], 0.0, &[0.01]).unwrap();
        assert!(d[0].abs() < 1e-8, "{route:?}: {d:?}");
    }
}

#[test]
fn step_values_fall_as_the_threshold_rises() {
    let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
    let q = Model::Qubit(QubitParams::with_rate(1.0).unwrap());
    let s = Model::Sho(sho());
    let mc = McOptions {
        n_paths: 4000,
        master_seed: 11,
        max_dt: 0.01,
    };
    let routes = [
        (ValueRoute::ClosedForm, s),
        (ValueRoute::Pde(PdeOptions::default()), s),
        (ValueRoute::MonteCarlo(mc), s),
        (ValueRoute::Pde(PdeOptions::default()), q),
        (ValueRoute::MonteCarlo(mc), q),
    ];
    for (route, model) in routes {
        let mut last = f64::INFINITY;
        for a in [-0.6, -0.2, 0.0, 0.3, 0.7] {
            let step = Payoff::Step {
                thresholds: vec![Some(a)],
                direction: Direction::Above,
            };
            let v = value(&route, &model, &rn, &step, &[0.1], 0.0).unwrap().value;
            assert!(v <= last, "{route:?} {a}: {v} > {last}");
            last = v;
        }
    }
}

#[test]
fn qubit_pde_and_monte_carlo_agree() {
    let model = Model::Qubit(QubitParams::with_rate(1.0).unwrap());
    let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
    let mc = ValueRoute::MonteCarlo(McOptions {
        n_paths: 20_000,
        master_seed: 11,
        max_dt: 1e-3,
    });
    let pde = ValueRoute::Pde(PdeOptions::default());
    let payoffs = [
        Payoff::Step {
            thresholds: vec![Some(0.1)],
            direction: Direction::Above,
        },
        Payoff::Call {
            strikes: vec![Some(-0.2)],
        },
    ];
    for z0 in [-0.6, 0.0, 0.3, 0.7] {
        for payoff in &payoffs {
            let a = value(&pde, &model, &rn, payoff, &[z0], 0.0).unwrap();
            let b = value(&mc, &model, &rn, payoff, &[z0], 0.0).unwrap();
            let band = (3.0 * b.standard_error).max(0.01 * a.value.abs());
            println!("z0={z0} {:?}: pde {} mc {} +- {}", payoff.kind(), a.value, b.value, b.standard_error);
            assert!((a.value - b.value).abs() <= band);
        }
    }
}

#[test]
fn monte_carlo_error_halves_with_four_times_the_paths() {
    let model = Model::Sho(sho());
    let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
    let payoff = &panel_payoffs()[1];
    let se = |n_paths| {
        let route = ValueRoute::MonteCarlo(McOptions {
            n_paths,
            master_seed: 3,
            max_dt: 1e-2,
        });
        value(&route, &model, &rn, payoff, &[0.5, -0.3], 0.0).unwrap().standard_error
    };
    let ratio = se(5_000) / se(20_000);
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn unit_payoff_is_the_discount_factor() {
    let rn = RiskNeutralSpec::new(0.05, 2.0).unwrap();
    let one = Payoff::Constant { value: 1.0 };
    let v = value_closed_form_sho(&sho(), &rn, &one, &[0.3, -1.0], 0.5).unwrap();
    assert_eq!(v.value, (-0.05f64 * 1.5).exp());
    let model = Model::Sho(sho());
    let pde = value(&ValueRoute::Pde(PdeOptions { cells: Some(80), ..PdeOptions::default() }), &model, &rn, &one, &[0.3, -1.0], 0.5)
        .unwrap();
    assert!((pde.value - (-0.05f64 * 1.5).exp()).abs() <= 1e-10);
}
