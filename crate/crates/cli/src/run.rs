//! Experiments: each turns a validated scenario into in-memory output files.

use qportfolio_core::{
    deltas, ensemble_moments, qubit_absorption_probability, qubit_gaussian_approx_value,
    report_from_errors, run_hedge, sho_transition_density, simulate_ensemble_recorded,
    solve_forward_fp, stable_schedule, value_closed_form_sho, value_mc, value_surface, Axis,
    Dynamics, Error, FpProblem, Grid, HedgeRoute, HedgeSpec, McOptions, Model, PathMeasure,
    Record, Route, TransitionMode, ValuationResult, ValueRoute,
};
use serde::Serialize;

use crate::output::{json_file, Csv, Field, OutputFile, Stamp};
use crate::scenario::{
    CollapseOptions, ForwardOptions, HedgeOptions, HedgeRouteName, Options, RouteName, Scenario,
    SimulateOptions, ValueOptions,
};

pub fn run(scenario: &Scenario) -> Result<Vec<OutputFile>, Error> {
    let stamp = Stamp {
        command: scenario.experiment.name(),
        scenario_sha256: scenario.hash(),
        master_seed: scenario.master_seed,
    };
    match &scenario.options {
        Options::Simulate(o) => simulate(scenario, o, &stamp),
        Options::SolveForward(o) => solve_forward(scenario, o, &stamp),
        Options::Value(o) => value(scenario, o, &stamp),
        Options::Hedge(o) => hedge(scenario, o, &stamp),
        Options::CollapseStats(o) => collapse_stats(scenario, o, &stamp),
    }
}

fn dynamics_for(s: &Scenario, measure: PathMeasure) -> Result<Dynamics, Error> {
    let model = s.model.model();
    let dim = s.initial_state.len();
    match measure {
        PathMeasure::Physical => model.physical_dynamics(dim),
        PathMeasure::RiskNeutral => model.risk_neutral_dynamics(&s.rn(), dim),
    }
}

fn transition_mode(s: &Scenario, measure: PathMeasure) -> TransitionMode {
    match measure {
        PathMeasure::Physical => TransitionMode::Physical,
        PathMeasure::RiskNeutral => TransitionMode::RiskNeutral {
            r: s.risk_neutral.r,
        },
    }
}

fn simulate(s: &Scenario, o: &SimulateOptions, stamp: &Stamp) -> Result<Vec<OutputFile>, Error> {
    let dynamics = dynamics_for(s, o.measure)?;
    let schedule = s.time_schedule();
    let ens = simulate_ensemble_recorded(
        &dynamics,
        &s.initial_state,
        &schedule,
        o.n_paths,
        s.master_seed,
        &Record::Every(o.record_every),
    )?;
    let model = s.model.model();
    let sho = match model {
        Model::Sho(p) => Some(p),
        Model::Qubit(_) => None,
    };

    let mut columns = vec![
        ("step", "schedule step"),
        ("time", "t0 + step * dt"),
        ("component", "state coordinate index"),
        ("mean", "sample mean"),
        ("variance", "unbiased sample variance"),
        ("mean_se", "standard error of the mean"),
        ("variance_se", "large-sample standard error of the variance"),
    ];
    if sho.is_some() {
        columns.push(("exact_mean", "closed-form transition mean"));
        columns.push(("exact_variance", "closed-form transition variance"));
    } else {
        columns.push(("absorbed_fraction", "fraction of paths absorbed at +-1 by this step"));
    }
    let mut moments = Csv::new(stamp, "ensemble moments", &columns);
    let mode = transition_mode(s, o.measure);
    for &step in &ens.recorded_steps {
        let m = ensemble_moments(&ens, step)?;
        let exact = match sho {
            Some(p) => Some(sho_transition_density(&p, mode, &s.initial_state, m.time - schedule.t0())?),
            None => None,
        };
        let absorbed = ens.absorbed_at.iter().filter(|a| a.is_some_and(|k| k <= step)).count() as f64
            / o.n_paths as f64;
        for c in 0..ens.dimension {
            let mut row: Vec<Field> = vec![
                step.into(),
                m.time.into(),
                c.into(),
                m.mean[c].into(),
                m.variance[c].into(),
                m.mean_standard_error[c].into(),
                m.variance_standard_error[c].into(),
            ];
            match &exact {
                Some(law) => {
                    row.push(law.mean[c].into());
                    row.push(law.variance[c].into());
                }
                None => row.push(absorbed.into()),
            }
            moments.row(&row);
        }
    }

    let state_names: Vec<String> = (0..ens.dimension).map(|c| format!("s{c}")).collect();
    let mut columns = vec![
        ("path", "path index (random stream id)"),
        ("step", "schedule step"),
        ("time", "t0 + step * dt"),
        ("absorbed", "1 once the path is frozen at a boundary"),
    ];
    for name in &state_names {
        columns.push((name.as_str(), "state coordinate"));
    }
    let mut paths = Csv::new(stamp, "sample paths", &columns);
    for p in 0..o.paths_written.min(ens.n_paths) {
        for &step in &ens.recorded_steps {
            let absorbed = ens.absorbed_at[p].is_some_and(|k| k <= step);
            let mut row: Vec<Field> = vec![p.into(), step.into(), schedule.time(step).into(), usize::from(absorbed).into()];
            row.extend(ens.state(p, step).expect("recorded").iter().map(|&x| Field::Num(x)));
            paths.row(&row);
        }
    }
    Ok(vec![moments.finish("moments.csv"), paths.finish("paths.csv")])
}

/// Oscillator half width: the largest drifted start coordinate plus six
/// terminal standard deviations, the latter at least `sqrt(n)`.
fn sho_half_width(s: &Scenario, measure: PathMeasure) -> Result<f64, Error> {
    let Model::Sho(p) = s.model.model() else {
        return Ok(1.0);
    };
    let horizon = s.risk_neutral.maturity - s.schedule.t0;
    let law = sho_transition_density(&p, transition_mode(s, measure), &s.initial_state, horizon)?;
    let sd = law.variance[0].max(p.n_thermal()).sqrt().max(1e-3);
    let reach = s
        .initial_state
        .iter()
        .zip(&law.mean)
        .map(|(a, b)| a.abs().max(b.abs()))
        .fold(0.0, f64::max);
    Ok(reach + 6.0 * sd)
}

fn solve_forward(s: &Scenario, o: &ForwardOptions, stamp: &Stamp) -> Result<Vec<OutputFile>, Error> {
    let dynamics = dynamics_for(s, o.measure)?;
    let dim = s.initial_state.len();
    let axis = if s.model.is_qubit() {
        Axis::new(-1.0, 1.0, o.cells)?
    } else {
        let half = match o.half_width {
            Some(h) => h,
            None => sho_half_width(s, o.measure)?,
        };
        Axis::new(-half, half, o.cells)?
    };
    let grid = if dim == 1 { Grid::one(axis) } else { Grid::two(axis, axis) };
    let h = axis.spacing();
    let width = o.initial_width.unwrap_or(2.0 * h);
    let p0 = grid.gaussian_density(&s.initial_state, &vec![width; dim])?;
    let schedule = stable_schedule(&dynamics, &grid, s.schedule.t0, s.risk_neutral.maturity)?;
    let n = schedule.n_steps();
    let mut steps: Vec<usize> = (0..=o.snapshots).map(|k| k * n / o.snapshots).collect();
    steps.dedup();
    let problem = FpProblem::new(dynamics, grid.clone(), schedule, p0)?.with_snapshots(steps.clone());
    let snapshots = solve_forward_fp(&problem)?;

    let axis_names = ["x", "y"];
    let mut columns = vec![("snapshot", "snapshot index"), ("time", "snapshot time")];
    for name in &axis_names[..dim] {
        columns.push((name, "cell centre"));
    }
    columns.push(("density", "probability density"));
    let mut density = Csv::new(stamp, "forward density snapshots", &columns);

    let mut columns = vec![
        ("snapshot", "snapshot index"),
        ("step", "solver step"),
        ("time", "snapshot time"),
        ("mass", "sum of density times cell volume"),
    ];
    let moment_names: Vec<(String, String)> =
        (0..dim).map(|c| (format!("mean_{c}"), format!("variance_{c}"))).collect();
    for (m, v) in &moment_names {
        columns.push((m.as_str(), "grid mean"));
        columns.push((v.as_str(), "grid variance"));
    }
    if s.model.is_qubit() {
        columns.push(("pole_mass", "mass in cells with |z| > 0.9"));
    }
    let mut summary = Csv::new(stamp, "forward solve summary", &columns);

    let vol = grid.cell_volume();
    for (k, snap) in snapshots.iter().enumerate() {
        let mut mass = 0.0;
        let mut first = vec![0.0; dim];
        let mut second = vec![0.0; dim];
        let mut pole = 0.0;
        for (idx, &p) in snap.values.iter().enumerate() {
            let at = grid.coordinates(idx);
            let mut row: Vec<Field> = vec![k.into(), snap.time.into()];
            row.extend(at.iter().map(|&x| Field::Num(x)));
            row.push(p.into());
            density.row(&row);
            let w = p * vol;
            mass += w;
            for c in 0..dim {
                first[c] += w * at[c];
                second[c] += w * at[c] * at[c];
            }
            if at[0].abs() > 0.9 {
                pole += w;
            }
        }
        let mut row: Vec<Field> = vec![k.into(), steps[k].into(), snap.time.into(), mass.into()];
        for c in 0..dim {
            let mean = first[c] / mass;
            row.push(mean.into());
            row.push((second[c] / mass - mean * mean).into());
        }
        if s.model.is_qubit() {
            row.push(pole.into());
        }
        summary.row(&row);
    }
    Ok(vec![density.finish("density.csv"), summary.finish("summary.csv")])
}

#[derive(Serialize)]
struct RouteValue {
    state_index: usize,
    #[serde(flatten)]
    result: ValuationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    deltas: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct RouteDiff {
    state_index: usize,
    a: Route,
    b: Route,
    /// `a - b`.
    difference: f64,
    /// `|a - b| / max(|a|, |b|)`.
    relative_difference: f64,
    /// Combined Monte Carlo standard error of the two values.
    standard_error: f64,
}

#[derive(Serialize)]
struct ValueReport<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    results: Vec<RouteValue>,
    diffs: Vec<RouteDiff>,
}

fn value(s: &Scenario, o: &ValueOptions, stamp: &Stamp) -> Result<Vec<OutputFile>, Error> {
    let model = s.model.model();
    let rn = s.rn();
    let pde_opts = o.pde.options();
    let mc_opts = McOptions {
        n_paths: o.n_paths,
        master_seed: s.master_seed,
        max_dt: s.schedule.dt,
    };
    let bump = vec![o.bump; s.initial_state.len()];
    // results[route][state]
    let mut per_route: Vec<Vec<RouteValue>> = Vec::new();
    for &route in &o.routes {
        let mut out = Vec::with_capacity(o.states.len());
        match route {
            RouteName::Pde => {
                let surface = value_surface(&model, &rn, &o.payoff, &o.states, o.t, None, &pde_opts)?;
                for (i, state) in o.states.iter().enumerate() {
                    let v = surface.value_at(0, state)?;
                    let d = if o.deltas {
                        Some(deltas(&ValueRoute::Pde(pde_opts), &model, &rn, &o.payoff, state, o.t, &bump)?)
                    } else {
                        None
                    };
                    out.push(RouteValue {
                        state_index: i,
                        result: ValuationResult {
                            value: v,
                            standard_error: 0.0,
                            route: Route::Pde,
                            model: model.name().to_string(),
                            payoff: o.payoff.kind(),
                            quantity: o.payoff.quantity(),
                            state: state.clone(),
                            t: o.t,
                            maturity: rn.maturity,
                            r: rn.r,
                        },
                        deltas: d,
                    });
                }
            }
            RouteName::ClosedForm | RouteName::MonteCarlo => {
                let (value_route, dyn_rn) = match route {
                    RouteName::ClosedForm => (ValueRoute::ClosedForm, None),
                    _ => (
                        ValueRoute::MonteCarlo(mc_opts),
                        Some(model.risk_neutral_dynamics(&rn, s.initial_state.len())?),
                    ),
                };
                for (i, state) in o.states.iter().enumerate() {
                    let result = match (&model, &dyn_rn) {
                        (_, Some(d)) => value_mc(d, &rn, &o.payoff, state, o.t, &mc_opts)?,
                        (Model::Sho(p), None) => value_closed_form_sho(p, &rn, &o.payoff, state, o.t)?,
                        (Model::Qubit(_), None) => unreachable!("rejected during validation"),
                    };
                    let d = if o.deltas {
                        Some(deltas(&value_route, &model, &rn, &o.payoff, state, o.t, &bump)?)
                    } else {
                        None
                    };
                    out.push(RouteValue {
                        state_index: i,
                        result,
                        deltas: d,
                    });
                }
            }
            RouteName::GaussianApproximation => {
                let Model::Qubit(q) = model else {
                    unreachable!("rejected during validation")
                };
                for (i, state) in o.states.iter().enumerate() {
                    let c = qubit_gaussian_approx_value(&q, &rn, &o.payoff, state, o.t, &pde_opts)?;
                    out.push(RouteValue {
                        state_index: i,
                        result: c.approximation,
                        deltas: None,
                    });
                }
            }
        }
        per_route.push(out);
    }

    let mut diffs = Vec::new();
    let mut table = Csv::new(
        stamp,
        "pairwise route differences",
        &[
            ("state_index", "index into options.states"),
            ("route_a", "first route"),
            ("route_b", "second route"),
            ("value_a", "value by route a"),
            ("value_b", "value by route b"),
            ("difference", "value_a - value_b"),
            ("relative_difference", "|a - b| / max(|a|, |b|)"),
            ("standard_error", "combined Monte Carlo standard error"),
        ],
    );
    for i in 0..o.states.len() {
        for a in 0..per_route.len() {
            for b in a + 1..per_route.len() {
                let (ra, rb) = (&per_route[a][i].result, &per_route[b][i].result);
                let difference = ra.value - rb.value;
                let scale = ra.value.abs().max(rb.value.abs());
                let relative_difference = if scale > 0.0 { difference.abs() / scale } else { 0.0 };
                let standard_error = ra.standard_error.hypot(rb.standard_error);
                table.row(&[
                    i.into(),
                    o.routes[a].name().into(),
                    o.routes[b].name().into(),
                    ra.value.into(),
                    rb.value.into(),
                    difference.into(),
                    relative_difference.into(),
                    standard_error.into(),
                ]);
                diffs.push(RouteDiff {
                    state_index: i,
                    a: ra.route,
                    b: rb.route,
                    difference,
                    relative_difference,
                    standard_error,
                });
            }
        }
    }
    let report = ValueReport {
        stamp,
        results: per_route.into_iter().flatten().collect(),
        diffs,
    };
    Ok(vec![json_file("value.json", &report), table.finish("cross_route.csv")])
}

#[derive(Serialize)]
struct HedgeReport<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    route: HedgeRouteName,
    measure: PathMeasure,
    initial_value: f64,
    initial_deltas: Vec<f64>,
    report: qportfolio_core::ReplicationReport,
}

fn hedge(s: &Scenario, o: &HedgeOptions, stamp: &Stamp) -> Result<Vec<OutputFile>, Error> {
    let spec = HedgeSpec {
        model: s.model.model(),
        rn: s.rn(),
        payoff: o.payoff.clone(),
        state0: s.initial_state.clone(),
        schedule: s.time_schedule(),
        n_paths: o.n_paths,
        master_seed: s.master_seed,
        route: match o.route {
            HedgeRouteName::ClosedForm => HedgeRoute::ClosedForm,
            HedgeRouteName::Pde => HedgeRoute::Pde(o.pde.options()),
        },
        measure: o.measure,
    };
    let run = run_hedge(&spec)?;
    if let Some(first) = run.failures.first() {
        return Err(Error::Domain(format!(
            "{} of {} hedged paths failed; first: {first}",
            run.failures.len(),
            o.n_paths
        )));
    }
    let errors: Vec<f64> = run.ledgers.iter().map(|l| l.error).collect();
    let mut report = report_from_errors(&errors, o.histogram_bins)?;
    report.worst_path = run.ledgers[report.worst_path].path;
    let dim = s.initial_state.len();
    let first = &run.ledgers[0];

    let names: Vec<(String, String)> = (0..dim).map(|c| (format!("s{c}"), format!("delta{c}"))).collect();
    let mut columns = vec![
        ("path", "path index (random stream id)"),
        ("step", "rebalancing step"),
        ("time", "rebalancing time"),
    ];
    for (sname, _) in &names {
        columns.push((sname.as_str(), "state coordinate"));
    }
    columns.push(("f", "option value"));
    for (_, dname) in &names {
        columns.push((dname.as_str(), "position held after rebalancing"));
    }
    columns.push(("pi", "portfolio value f - sum(delta s) + financing"));
    columns.push(("pi_before_rebalance", "portfolio value at old deltas"));
    columns.push(("financing", "financing account"));
    let mut ledgers = Csv::new(stamp, "hedging ledgers", &columns);
    for ledger in run.ledgers.iter().take(o.ledger_paths) {
        for row in ledger.rows() {
            let mut fields: Vec<Field> = vec![ledger.path.into(), row.step.into(), row.t.into()];
            fields.extend(row.state.iter().map(|&x| Field::Num(x)));
            fields.push(row.f.into());
            fields.extend(row.deltas.iter().map(|&x| Field::Num(x)));
            fields.push(row.pi.into());
            fields.push(row.pi_before_rebalance.into());
            fields.push(row.financing.into());
            ledgers.row(&fields);
        }
    }
    let mut table = Csv::new(
        stamp,
        "terminal replication errors",
        &[
            ("path", "path index"),
            ("absorbed_step", "step at which the path froze, -1 if never"),
            ("error", "Pi_T - Pi_0 exp(r (T - t0))"),
        ],
    );
    for l in &run.ledgers {
        table.row(&[
            l.path.into(),
            Field::Int(l.absorbed_at.map_or(-1, |k| k as i64)),
            l.error.into(),
        ]);
    }
    let summary = HedgeReport {
        stamp,
        route: o.route,
        measure: o.measure,
        initial_value: first.values[0],
        initial_deltas: first.deltas[..dim].to_vec(),
        report,
    };
    Ok(vec![
        ledgers.finish("ledgers.csv"),
        table.finish("errors.csv"),
        json_file("report.json", &summary),
    ])
}

fn collapse_stats(s: &Scenario, o: &CollapseOptions, stamp: &Stamp) -> Result<Vec<OutputFile>, Error> {
    let model = s.model.model();
    let dynamics = model.physical_dynamics(1)?;
    let schedule = s.time_schedule();
    let mut table = Csv::new(
        stamp,
        "qubit collapse statistics (physical dynamics)",
        &[
            ("z0", "initial polarization"),
            ("n_paths", "ensemble size"),
            ("fraction_up", "fraction with z_T > 0"),
            ("oracle", "scale-function probability of collapse to +1"),
            ("binomial_se", "sqrt(oracle (1 - oracle) / n_paths)"),
            ("z_score", "(fraction_up - oracle) / binomial_se"),
            ("collapsed_fraction", "fraction with |z_T| > threshold"),
            ("absorbed_fraction", "fraction frozen at +-1 before T"),
            ("threshold", "collapse threshold on |z_T|"),
        ],
    );
    for &z0 in &o.z0 {
        let ens = simulate_ensemble_recorded(&dynamics, &[z0], &schedule, o.n_paths, s.master_seed, &Record::Terminal)?;
        let n = o.n_paths as f64;
        let up = ens.terminal_states().filter(|z| z[0] > 0.0).count() as f64 / n;
        let collapsed = ens.terminal_states().filter(|z| z[0].abs() > o.threshold).count() as f64 / n;
        let absorbed = ens.absorbed_at.iter().filter(|a| a.is_some()).count() as f64 / n;
        let oracle = qubit_absorption_probability(z0)?;
        let se = (oracle * (1.0 - oracle) / n).sqrt();
        table.row(&[
            z0.into(),
            o.n_paths.into(),
            up.into(),
            oracle.into(),
            se.into(),
            ((up - oracle) / se).into(),
            collapsed.into(),
            absorbed.into(),
            o.threshold.into(),
        ]);
    }
    Ok(vec![table.finish("collapse.csv")])
}
