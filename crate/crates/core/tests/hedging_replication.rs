use qportfolio_core::{
    replication_report, run_hedge, Direction, HedgeRoute, HedgeSpec, Model, PathMeasure, Payoff,
    PdeOptions, QubitParams, ReplicationReport, RiskNeutralSpec, ShoParams, TimeSchedule,
};

fn sho_spec(payoff: Payoff, dt: f64, measure: PathMeasure, n_paths: usize) -> HedgeSpec {
    HedgeSpec {
        model: Model::Sho(ShoParams::new(1.0, 1.0, 1.0).unwrap()),
        rn: RiskNeutralSpec::new(0.05, 1.0).unwrap(),
        payoff,
        state0: vec![1.0],
        schedule: TimeSchedule::with_max_dt(0.0, 1.0, dt).unwrap(),
        n_paths,
        master_seed: 2024,
        route: HedgeRoute::ClosedForm,
        measure,
    }
}

fn step() -> Payoff {
    Payoff::Step {
        thresholds: vec![Some(1.0)],
        direction: Direction::Above,
    }
}

fn call(strike: f64) -> Payoff {
    Payoff::Call {
        strikes: vec![Some(strike)],
    }
}

fn report(spec: &HedgeSpec) -> ReplicationReport {
    let run = run_hedge(spec).unwrap();
    assert!(run.failures.is_empty());
    replication_report(&run.ledgers).unwrap()
}

#[test]
fn step_hedge_is_unbiased() {
    let r = report(&sho_spec(step(), 2.5e-3, PathMeasure::Physical, 1000));
    println!("step mean {} se {} rms {}", r.mean_error, r.mean_standard_error, r.rms_error);
    assert!(r.mean_error.abs() <= 3.0 * r.mean_standard_error);
}

#[test]
fn rms_error_falls_with_the_rebalancing_interval() {
    for payoff in [step(), call(1.0)] {
        let rms: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&dt| report(&sho_spec(payoff.clone(), dt, PathMeasure::Physical, 500)).rms_error)
            .collect();
        println!("{:?}: {rms:?}", payoff.kind());
        assert!(rms[0] > rms[1] && rms[1] > rms[2]);
    }
}

#[test]
fn smooth_payoff_error_scales_with_the_square_root_of_dt() {
    // A call has bounded gamma, so quartering dt halves the RMS error.
    let coarse = report(&sho_spec(call(1.0), 1e-2, PathMeasure::Physical, 1000)).rms_error;
    let fine = report(&sho_spec(call(1.0), 2.5e-3, PathMeasure::Physical, 1000)).rms_error;
    println!("call ratio {}", coarse / fine);
    assert!((1.6..=2.6).contains(&(coarse / fine)));
}

#[test]
fn step_error_ratio_under_quartered_dt() {
    let coarse = report(&sho_spec(step(), 1e-2, PathMeasure::Physical, 1000)).rms_error;
    let fine = report(&sho_spec(step(), 2.5e-3, PathMeasure::Physical, 1000)).rms_error;
    println!("step ratio {}", coarse / fine);
    // the step's gamma blows up at maturity; the ratio sits near 4^(1/4)
    assert!((1.2..=1.6).contains(&(coarse / fine)));
}

#[test]
fn hedge_removes_the_physical_drift() {
    let physical = report(&sho_spec(step(), 1e-3, PathMeasure::Physical, 1000)).rms_error;
    let neutral = report(&sho_spec(step(), 1e-3, PathMeasure::RiskNeutral, 1000)).rms_error;
    println!("physical {physical} risk-neutral {neutral}");
    assert!((physical / neutral - 1.0).abs() <= 0.25);
}

#[test]
fn nearly_linear_claim_is_replicated() {
    // strike six standard deviations below: f is close to s - K e^{-r(T-t)}
    let spec = sho_spec(call(-6.0), 1e-2, PathMeasure::Physical, 500);
    let run = run_hedge(&spec).unwrap();
    let f0 = run.ledgers[0].values[0];
    let r = replication_report(&run.ledgers).unwrap();
    assert!(r.rms_error <= 1e-2 * f0, "rms {} f0 {f0}", r.rms_error);
}

#[test]
fn qubit_hedge_through_the_pde_surface() {
    let spec = HedgeSpec {
        model: Model::Qubit(QubitParams::with_rate(1.0).unwrap()),
        rn: RiskNeutralSpec::new(0.05, 1.0).unwrap(),
        payoff: Payoff::Step {
            thresholds: vec![Some(0.0)],
            direction: Direction::Above,
        },
        state0: vec![0.2],
        schedule: TimeSchedule::with_max_dt(0.0, 1.0, 1e-2).unwrap(),
        n_paths: 400,
        master_seed: 5,
        route: HedgeRoute::Pde(PdeOptions::default()),
        measure: PathMeasure::Physical,
    };
    let run = run_hedge(&spec).unwrap();
    assert!(run.failures.is_empty());
    let r = replication_report(&run.ledgers).unwrap();
    println!("qubit mean {} se {} rms {}", r.mean_error, r.mean_standard_error, r.rms_error);
    assert!(r.mean_error.abs() <= 3.0 * r.mean_standard_error + 1e-3);
    // the hedge must beat holding the claim unhedged
    let spread = {
        let f0 = run.ledgers[0].values[0];
        let payoffs: Vec<f64> = run.ledgers.iter().map(|l| *l.values.last().unwrap()).collect();
        let growth = 0.05f64.exp();
        (payoffs.iter().map(|p| (p - f0 * growth).powi(2)).sum::<f64>() / payoffs.len() as f64).sqrt()
    };
    assert!(r.rms_error < 0.5 * spread, "{} vs {spread}", r.rms_error);
}
