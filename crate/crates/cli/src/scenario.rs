//! Strict scenario files: every key is checked, unknown keys are rejected
//! with a nearest-match suggestion, and all problems are reported together.

use std::fmt;

use qportfolio_core::{
    thermal_occupation, Direction, Model, PathMeasure, Payoff, PdeOptions, QubitParams,
    RiskNeutralSpec, ShoParams, TimeSchedule,
};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_PATHS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path to the offending field, e.g. `model.theta_shift`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Sho {
        gamma: f64,
        n_thermal: f64,
        omega: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        hbar_omega_over_kt: Option<f64>,
    },
    Qubit { phi_flux: f64, theta_shift: f64 },
}

impl ModelSpec {
    pub fn model(&self) -> Model {
        match *self {
            ModelSpec::Sho {
                gamma,
                n_thermal,
                omega,
                ..
            } => Model::Sho(ShoParams::new(gamma, n_thermal, omega).expect("validated")),
            ModelSpec::Qubit {
                phi_flux,
                theta_shift,
            } => Model::Qubit(QubitParams::new(phi_flux, theta_shift).expect("validated")),
        }
    }

    pub fn is_qubit(&self) -> bool {
        matches!(self, ModelSpec::Qubit { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskNeutral {
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub t0: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    SolveForward,
    Value,
    Hedge,
    CollapseStats,
}

impl Experiment {
    pub const NAMES: [&'static str; 5] =
        ["simulate", "solve_forward", "value", "hedge", "collapse_stats"];

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "simulate" => Experiment::Simulate,
            "solve_forward" => Experiment::SolveForward,
            "value" => Experiment::Value,
            "hedge" => Experiment::Hedge,
            "collapse_stats" => Experiment::CollapseStats,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOptions {
    pub n_paths: usize,
    pub measure: PathMeasure,
    /// Steps between recorded states.
    pub record_every: usize,
    /// Number of paths written to the ensemble table.
    pub paths_written: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardOptions {
    pub cells: usize,
    /// Half width of the oscillator domain; the qubit domain is `[-1, 1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    pub snapshots: usize,
    pub measure: PathMeasure,
    /// Standard deviation of the initial Gaussian; two cells when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    ClosedForm,
    Pde,
    MonteCarlo,
    GaussianApproximation,
}

impl RouteName {
    const NAMES: [&'static str; 4] = ["closed_form", "pde", "monte_carlo", "gaussian_approximation"];

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "closed_form" => RouteName::ClosedForm,
            "pde" => RouteName::Pde,
            "monte_carlo" => RouteName::MonteCarlo,
            "gaussian_approximation" => RouteName::GaussianApproximation,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    pub sho_spacing: f64,
    pub qubit_cells: usize,
}

impl PdeSettings {
    pub fn options(&self) -> PdeOptions {
        PdeOptions {
            cells: self.cells,
            sho_spacing: self.sho_spacing,
            qubit_cells: self.qubit_cells,
        }
    }
}

impl Default for PdeSettings {
    fn default() -> Self {
        let d = PdeOptions::default();
        Self {
            cells: d.cells,
            sho_spacing: d.sho_spacing,
            qubit_cells: d.qubit_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueOptions {
    pub payoff: Payoff,
    pub routes: Vec<RouteName>,
    /// Valuation time.
    pub t: f64,
    /// States to value; the initial state when not given.
    pub states: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub pde: PdeSettings,
    pub deltas: bool,
    /// Central-difference bump for the deltas.
    pub bump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeRouteName {
    ClosedForm,
    Pde,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeOptions {
    pub payoff: Payoff,
    pub n_paths: usize,
    pub route: HedgeRouteName,
    pub measure: PathMeasure,
    pub pde: PdeSettings,
    /// Number of ledgers written in full.
    pub ledger_paths: usize,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseOptions {
    /// Starting polarizations; the initial state when not given.
    pub z0: Vec<f64>,
    pub n_paths: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Options {
    Simulate(SimulateOptions),
    SolveForward(ForwardOptions),
    Value(ValueOptions),
    Hedge(HedgeOptions),
    CollapseStats(CollapseOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub model: ModelSpec,
    pub risk_neutral: RiskNeutral,
    pub initial_state: Vec<f64>,
    pub schedule: Schedule,
    pub experiment: Experiment,
    pub options: Options,
    pub master_seed: u64,
    pub output_dir: String,
}

impl Scenario {
    pub fn rn(&self) -> RiskNeutralSpec {
        RiskNeutralSpec::new(self.risk_neutral.r, self.risk_neutral.maturity).expect("validated")
    }

    /// Schedule from `t0` to the maturity with steps no longer than `dt`.
    pub fn time_schedule(&self) -> TimeSchedule {
        TimeSchedule::with_max_dt(self.schedule.t0, self.risk_neutral.maturity, self.schedule.dt)
            .expect("validated")
    }

    /// Resolved scenario as pretty JSON, defaults filled in.
    pub fn describe(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the resolved scenario without `master_seed` and
    /// `output_dir`, over JSON with sorted keys.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("scenario serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("master_seed");
        obj.remove("output_dir");
        let bytes = serde_json::to_vec(&v).expect("value serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses and validates scenario text, returning every problem found.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<FieldError>> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        vec![FieldError {
            path: "$".into(),
            message: format!("not valid JSON: {e}"),
        }]
    })?;
    let mut errs = Vec::new();
    let scenario = read_scenario(&root, &mut errs);
    match scenario {
        Some(s) if errs.is_empty() => Ok(s),
        _ => Err(errs),
    }
}

const ROOT_KEYS: &[&str] = &[
    "model",
    "risk_neutral",
    "initial_state",
    "schedule",
    "experiment",
    "options",
    "master_seed",
    "output_dir",
];

fn read_scenario(root: &Value, errs: &mut Vec<FieldError>) -> Option<Scenario> {
    let obj = Obj::new(root, "", ROOT_KEYS, errs)?;
    let model = obj.object("model", errs).and_then(|m| read_model(&m, errs));
    let rn = obj.object("risk_neutral", errs).and_then(|o| {
        let o = o.keys(&["r", "T"], errs)?;
        let r = o.number("r", None, Rule::Any, errs);
        let maturity = o.number("T", None, Rule::Positive, errs);
        Some(RiskNeutral {
            r: r?,
            maturity: maturity?,
        })
    });
    let initial_state = obj.numbers("initial_state", None, errs);
    let schedule = match obj.get("schedule") {
        None => Some(Schedule {
            t0: 0.0,
            dt: DEFAULT_DT,
        }),
        Some(_) => obj.object("schedule", errs).and_then(|o| {
            let o = o.keys(&["t0", "dt"], errs)?;
            let t0 = o.number("t0", Some(0.0), Rule::Any, errs);
            let dt = o.number("dt", Some(DEFAULT_DT), Rule::Positive, errs);
            Some(Schedule { t0: t0?, dt: dt? })
        }),
    };
    let experiment = obj
        .choice("experiment", &Experiment::NAMES, None, errs)
        .and_then(Experiment::from_name);
    let master_seed = obj.integer("master_seed", Some(0), 0, errs);
    let output_dir = obj.string("output_dir", Some("out"), errs);

    if let (Some(rn), Some(s)) = (rn, schedule) {
        if !(s.t0 < rn.maturity) {
            errs.push(err("schedule.t0", format!("must be < risk_neutral.T = {}", rn.maturity)));
        } else if s.dt > rn.maturity - s.t0 {
            errs.push(err(
                "schedule.dt",
                format!("must not exceed the horizon T - t0 = {}", rn.maturity - s.t0),
            ));
        }
    }
    // the kind alone decides the state range, even if other model fields are bad
    let qubit = root.pointer("/model/kind").and_then(Value::as_str) == Some("qubit");
    if let Some(state) = &initial_state {
        check_state(qubit, state, "initial_state", errs);
    }

    let ctx = Context {
        model: model.as_ref(),
        initial_state: initial_state.as_deref(),
        t0: schedule.map_or(0.0, |s| s.t0),
        maturity: rn.map_or(f64::INFINITY, |r| r.maturity),
        n_steps: match (rn, schedule) {
            (Some(rn), Some(s)) => TimeSchedule::with_max_dt(s.t0, rn.maturity, s.dt)
                .map(|s| s.n_steps())
                .unwrap_or(1),
            _ => 1,
        },
    };
    let empty = Value::Object(Map::new());
    let options_value = obj.get("options").unwrap_or(&empty);
    let options = experiment.and_then(|e| read_options(e, options_value, &ctx, errs));
    let (model, rn, initial_state, schedule, experiment, options) =
        (model?, rn?, initial_state?, schedule?, experiment?, options?);
    Some(Scenario {
        model,
        risk_neutral: rn,
        initial_state,
        schedule,
        experiment,
        options,
        master_seed: master_seed?,
        output_dir: output_dir?,
    })
}

fn read_model(o: &Obj, errs: &mut Vec<FieldError>) -> Option<ModelSpec> {
    let kind = o.choice("kind", &["sho", "qubit"], None, errs);
    match kind? {
        "sho" => {
            let o = o.keys(&["kind", "gamma", "n_thermal", "omega", "hbar_omega_over_kt"], errs)?;
            let gamma = o.number("gamma", None, Rule::Positive, errs);
            let omega = o.number("omega", Some(1.0), Rule::Positive, errs);
            let n_thermal = match (o.get("n_thermal"), o.get("hbar_omega_over_kt")) {
                (Some(_), Some(_)) => {
                    errs.push(err(
                        &o.child("hbar_omega_over_kt"),
                        "give either n_thermal or hbar_omega_over_kt, not both".into(),
                    ));
                    None
                }
                (None, Some(_)) => {
                    let x = o.number("hbar_omega_over_kt", None, Rule::Positive, errs)?;
                    Some((thermal_occupation(x).ok()?, Some(x)))
                }
                _ => Some((o.number("n_thermal", None, Rule::NonNegative, errs)?, None)),
            };
            let (n_thermal, hbar_omega_over_kt) = n_thermal?;
            Some(ModelSpec::Sho {
                gamma: gamma?,
                n_thermal,
                omega: omega?,
                hbar_omega_over_kt,
            })
        }
        _ => {
            let o = o.keys(&["kind", "phi_flux", "theta_shift"], errs)?;
            let phi_flux = o.number("phi_flux", None, Rule::Positive, errs);
            let theta_shift = o.number("theta_shift", None, Rule::Positive, errs);
            Some(ModelSpec::Qubit {
                phi_flux: phi_flux?,
                theta_shift: theta_shift?,
            })
        }
    }
}

fn check_state(qubit: bool, state: &[f64], path: &str, errs: &mut Vec<FieldError>) {
    if state.is_empty() {
        errs.push(err(path, "must list at least one coordinate".into()));
    }
    if qubit {
        for (i, z) in state.iter().enumerate() {
            if !(z.abs() <= 1.0) {
                errs.push(err(&format!("{path}[{i}]"), format!("qubit polarization must lie in [-1, 1], got {z}")));
            }
        }
    }
}

/// What the options are checked against; `None` where that part of the
/// scenario was itself invalid.
struct Context<'a> {
    model: Option<&'a ModelSpec>,
    initial_state: Option<&'a [f64]>,
    t0: f64,
    maturity: f64,
    n_steps: usize,
}

impl Context<'_> {
    fn qubit(&self) -> bool {
        self.model.is_some_and(ModelSpec::is_qubit)
    }
}

fn read_options(
    experiment: Experiment,
    value: &Value,
    ctx: &Context,
    errs: &mut Vec<FieldError>,
) -> Option<Options> {
    let dim = ctx.initial_state.map(<[f64]>::len);
    let limit_dim = |errs: &mut Vec<FieldError>| {
        if let Some(dim) = dim.filter(|&d| d > 2) {
            errs.push(err(
                "initial_state",
                format!("{} supports 1 or 2 coordinates, got {dim}", experiment.name()),
            ));
        }
    };
    match experiment {
        Experiment::Simulate => {
            let o = Obj::new(value, "options", &["n_paths", "measure", "record_every", "paths_written"], errs)?;
            let n_paths = o.integer("n_paths", Some(DEFAULT_PATHS as u64), 2, errs);
            let measure = o.measure(errs);
            let record_every = match o.get("record_every") {
                Some(_) => o.integer("record_every", None, 1, errs).map(|k| k as usize),
                None => Some((ctx.n_steps / 100).max(1)),
            };
            let paths_written = o.integer("paths_written", Some(100), 0, errs);
            Some(Options::Simulate(SimulateOptions {
                n_paths: n_paths? as usize,
                measure: measure?,
                record_every: record_every?,
                paths_written: paths_written? as usize,
            }))
        }
        Experiment::SolveForward => {
            limit_dim(errs);
            let o = Obj::new(
                value,
                "options",
                &["cells", "half_width", "snapshots", "measure", "initial_width"],
                errs,
            )?;
            let default_cells = if ctx.qubit() { 400 } else { 200 };
            let cells = o.integer("cells", Some(default_cells), 4, errs);
            let half_width = o.optional_number("half_width", Rule::Positive, errs);
            if ctx.qubit() && o.get("half_width").is_some() {
                errs.push(err("options.half_width", "the qubit domain is fixed to [-1, 1]".into()));
            }
            let snapshots = o.integer("snapshots", Some(10), 1, errs);
            let measure = o.measure(errs);
            let initial_width = o.optional_number("initial_width", Rule::Positive, errs);
            Some(Options::SolveForward(ForwardOptions {
                cells: cells? as usize,
                half_width: half_width?,
                snapshots: snapshots? as usize,
                measure: measure?,
                initial_width: initial_width?,
            }))
        }
        Experiment::Value => {
            let o = Obj::new(
                value,
                "options",
                &["payoff", "routes", "t", "states", "n_paths", "pde", "deltas", "bump"],
                errs,
            )?;
            let payoff = o.object("payoff", errs).and_then(|p| read_payoff(&p, dim, errs));
            let routes = o.routes(ctx.model, errs);
            let t = o.number("t", Some(ctx.t0), Rule::Any, errs);
            if let Some(t) = t {
                if !(t >= ctx.t0 && t < ctx.maturity) {
                    errs.push(err("options.t", format!("must lie in [t0, T) = [{}, {})", ctx.t0, ctx.maturity)));
                }
            }
            let states = match o.get("states") {
                None => ctx.initial_state.map(|s| vec![s.to_vec()]),
                Some(v) => read_states(v, dim, ctx.model, errs),
            };
            let n_paths = o.integer("n_paths", Some(DEFAULT_PATHS as u64), 100, errs);
            let pde = o.pde(errs);
            let deltas = o.boolean("deltas", Some(false), errs);
            let bump = o.number("bump", Some(1e-2), Rule::Positive, errs);
            if let Some(routes) = &routes {
                if routes.contains(&RouteName::Pde) || routes.contains(&RouteName::GaussianApproximation) {
                    limit_dim(errs);
                }
                if routes.contains(&RouteName::GaussianApproximation) && dim.is_some_and(|d| d != 1) {
                    errs.push(err("options.routes", "gaussian_approximation values one qubit".into()));
                }
            }
            Some(Options::Value(ValueOptions {
                payoff: payoff?,
                routes: routes?,
                t: t?,
                states: states?,
                n_paths: n_paths? as usize,
                pde: pde?,
                deltas: deltas?,
                bump: bump?,
            }))
        }
        Experiment::Hedge => {
            let o = Obj::new(
                value,
                "options",
                &["payoff", "n_paths", "route", "measure", "pde", "ledger_paths", "histogram_bins"],
                errs,
            )?;
            let payoff = o.object("payoff", errs).and_then(|p| read_payoff(&p, dim, errs));
            if matches!(payoff, Some(Payoff::Delta { .. })) {
                errs.push(err("options.payoff.kind", "a delta payoff has no tradable terminal value; use step or call".into()));
            }
            let n_paths = o.integer("n_paths", Some(DEFAULT_PATHS as u64), 1, errs);
            let default_route = if ctx.qubit() { "pde" } else { "closed_form" };
            let route = o.choice("route", &["closed_form", "pde"], Some(default_route), errs).map(|r| {
                if r == "pde" {
                    HedgeRouteName::Pde
                } else {
                    HedgeRouteName::ClosedForm
                }
            });
            if ctx.qubit() && route == Some(HedgeRouteName::ClosedForm) {
                errs.push(err("options.route", "the qubit model has no closed form; use pde".into()));
            }
            if route == Some(HedgeRouteName::Pde) {
                limit_dim(errs);
            }
            let measure = o.measure(errs);
            let pde = o.pde(errs);
            let ledger_paths = o.integer("ledger_paths", Some(10), 0, errs);
            let histogram_bins = o.integer("histogram_bins", Some(20), 1, errs);
            Some(Options::Hedge(HedgeOptions {
                payoff: payoff?,
                n_paths: n_paths? as usize,
                route: route?,
                measure: measure?,
                pde: pde?,
                ledger_paths: ledger_paths? as usize,
                histogram_bins: histogram_bins? as usize,
            }))
        }
        Experiment::CollapseStats => {
            if ctx.model.is_some() && !ctx.qubit() {
                errs.push(err("model.kind", "collapse_stats needs the qubit model".into()));
            }
            let o = Obj::new(value, "options", &["z0", "n_paths", "threshold"], errs)?;
            let z0 = match o.get("z0") {
                None => ctx.initial_state.map(<[f64]>::to_vec),
                Some(_) => o.numbers("z0", None, errs),
            };
            if let Some(z0) = &z0 {
                for (i, z) in z0.iter().enumerate() {
                    if !(z.abs() < 1.0) {
                        errs.push(err(&format!("options.z0[{i}]"), format!("must lie strictly inside (-1, 1), got {z}")));
                    }
                }
            }
            let n_paths = o.integer("n_paths", Some(DEFAULT_PATHS as u64), 1, errs);
            let threshold = o.number("threshold", Some(0.99), Rule::Open(0.0, 1.0), errs);
            Some(Options::CollapseStats(CollapseOptions {
                z0: z0?,
                n_paths: n_paths? as usize,
                threshold: threshold?,
            }))
        }
    }
}

fn read_states(v: &Value, dim: Option<usize>, model: Option<&ModelSpec>, errs: &mut Vec<FieldError>) -> Option<Vec<Vec<f64>>> {
    let Some(list) = v.as_array() else {
        errs.push(err("options.states", "expected a list of states".into()));
        return None;
    };
    if list.is_empty() {
        errs.push(err("options.states", "must list at least one state".into()));
        return None;
    }
    let mut out = Vec::with_capacity(list.len());
    let mut ok = true;
    for (i, s) in list.iter().enumerate() {
        let path = format!("options.states[{i}]");
        match number_list(s, &path, errs) {
            Some(s) if dim.is_none_or(|d| s.len() == d) => {
                check_state(model.is_some_and(ModelSpec::is_qubit), &s, &path, errs);
                out.push(s);
            }
            Some(s) => {
                let dim = dim.unwrap_or_default();
                errs.push(err(&path, format!("has {} coordinates, initial_state has {dim}", s.len())));
                ok = false;
            }
            None => ok = false,
        }
    }
    ok.then_some(out)
}

fn read_payoff(o: &Obj, dim: Option<usize>, errs: &mut Vec<FieldError>) -> Option<Payoff> {
    let kind = o.choice("kind", &["delta", "step", "call", "constant"], None, errs)?;
    let check_len = |len: usize, key: &str, errs: &mut Vec<FieldError>| {
        match dim {
            Some(dim) if len != dim => {
                errs.push(err(&o.child(key), format!("has {len} entries, the state has {dim}")));
                false
            }
            _ => true,
        }
    };
    match kind {
        "delta" => {
            let o = o.keys(&["kind", "points"], errs)?;
            let points = o.numbers("points", None, errs)?;
            check_len(points.len(), "points", errs).then_some(Payoff::Delta { points })
        }
        "step" => {
            let o = o.keys(&["kind", "thresholds", "direction"], errs)?;
            let thresholds = o.optional_numbers("thresholds", errs);
            let direction = o.choice("direction", &["above", "below"], Some("above"), errs);
            let thresholds = thresholds?;
            check_len(thresholds.len(), "thresholds", errs).then_some(Payoff::Step {
                thresholds,
                direction: if direction? == "above" {
                    Direction::Above
                } else {
                    Direction::Below
                },
            })
        }
        "call" => {
            let o = o.keys(&["kind", "strikes"], errs)?;
            let strikes = o.optional_numbers("strikes", errs)?;
            check_len(strikes.len(), "strikes", errs).then_some(Payoff::Call { strikes })
        }
        _ => {
            let o = o.keys(&["kind", "value"], errs)?;
            Some(Payoff::Constant {
                value: o.number("value", None, Rule::Any, errs)?,
            })
        }
    }
}

fn err(path: &str, message: String) -> FieldError {
    FieldError {
        path: if path.is_empty() { "$".into() } else { path.into() },
        message,
    }
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Any,
    Positive,
    NonNegative,
    /// Open interval.
    Open(f64, f64),
}

impl Rule {
    fn check(self, x: f64) -> Option<String> {
        let ok = x.is_finite()
            && match self {
                Rule::Any => true,
                Rule::Positive => x > 0.0,
                Rule::NonNegative => x >= 0.0,
                Rule::Open(a, b) => a < x && x < b,
            };
        if ok {
            return None;
        }
        Some(match self {
            Rule::Any => format!("must be finite, got {x}"),
            Rule::Positive => format!("must be > 0, got {x}"),
            Rule::NonNegative => format!("must be >= 0, got {x}"),
            Rule::Open(a, b) => format!("must lie in ({a}, {b}), got {x}"),
        })
    }
}

/// A JSON object under validation, addressed by its dotted path.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: String,
}

impl<'a> Obj<'a> {
    /// Checks that `v` is an object whose keys all appear in `allowed`.
    fn new(v: &'a Value, path: &str, allowed: &[&str], errs: &mut Vec<FieldError>) -> Option<Self> {
        let Some(map) = v.as_object() else {
            errs.push(err(path, "expected an object".into()));
            return None;
        };
        let o = Obj {
            map,
            path: path.to_string(),
        };
        o.keys(allowed, errs)
    }

    fn keys(&self, allowed: &[&str], errs: &mut Vec<FieldError>) -> Option<Self> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                let mut message = "unknown key".to_string();
                if let Some(best) = suggest(key, allowed) {
                    message.push_str(&format!("; did you mean \"{best}\"?"));
                }
                errs.push(err(&self.child(key), message));
            }
        }
        Some(Obj {
            map: self.map,
            path: self.path.clone(),
        })
    }

    fn child(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn missing(&self, key: &str, errs: &mut Vec<FieldError>) {
        errs.push(err(&self.child(key), "missing required key".into()));
    }

    fn object(&self, key: &str, errs: &mut Vec<FieldError>) -> Option<Obj<'a>> {
        match self.get(key) {
            None => {
                self.missing(key, errs);
                None
            }
            Some(v) => match v.as_object() {
                Some(map) => Some(Obj {
                    map,
                    path: self.child(key),
                }),
                None => {
                    errs.push(err(&self.child(key), "expected an object".into()));
                    None
                }
            },
        }
    }

    fn number(&self, key: &str, default: Option<f64>, rule: Rule, errs: &mut Vec<FieldError>) -> Option<f64> {
        let x = match (self.get(key), default) {
            (None, Some(d)) => return Some(d),
            (None, None) => {
                self.missing(key, errs);
                return None;
            }
            (Some(v), _) => match v.as_f64() {
                Some(x) => x,
                None => {
                    errs.push(err(&self.child(key), format!("expected a number, got {v}")));
                    return None;
                }
            },
        };
        match rule.check(x) {
            None => Some(x),
            Some(m) => {
                errs.push(err(&self.child(key), m));
                None
            }
        }
    }

    /// `Some(None)` when absent, `None` when invalid.
    fn optional_number(&self, key: &str, rule: Rule, errs: &mut Vec<FieldError>) -> Option<Option<f64>> {
        match self.get(key) {
            None => Some(None),
            Some(_) => self.number(key, None, rule, errs).map(Some),
        }
    }

    fn integer(&self, key: &str, default: Option<u64>, min: u64, errs: &mut Vec<FieldError>) -> Option<u64> {
        let n = match (self.get(key), default) {
            (None, Some(d)) => return Some(d),
            (None, None) => {
                self.missing(key, errs);
                return None;
            }
            (Some(v), _) => match v.as_u64() {
                Some(n) => n,
                None => {
                    errs.push(err(&self.child(key), format!("expected a non-negative integer, got {v}")));
                    return None;
                }
            },
        };
        if n < min {
            errs.push(err(&self.child(key), format!("must be >= {min}, got {n}")));
            return None;
        }
        Some(n)
    }

    fn boolean(&self, key: &str, default: Option<bool>, errs: &mut Vec<FieldError>) -> Option<bool> {
        match (self.get(key), default) {
            (None, Some(d)) => Some(d),
            (None, None) => {
                self.missing(key, errs);
                None
            }
            (Some(v), _) => {
                let b = v.as_bool();
                if b.is_none() {
                    errs.push(err(&self.child(key), format!("expected true or false, got {v}")));
                }
                b
            }
        }
    }

    fn string(&self, key: &str, default: Option<&str>, errs: &mut Vec<FieldError>) -> Option<String> {
        match (self.get(key), default) {
            (None, Some(d)) => Some(d.to_string()),
            (None, None) => {
                self.missing(key, errs);
                None
            }
            (Some(v), _) => match v.as_str() {
                Some(s) if !s.is_empty() => Some(s.to_string()),
                _ => {
                    errs.push(err(&self.child(key), format!("expected a non-empty string, got {v}")));
                    None
                }
            },
        }
    }

    fn choice(
        &self,
        key: &str,
        choices: &[&'static str],
        default: Option<&'static str>,
        errs: &mut Vec<FieldError>,
    ) -> Option<&'static str> {
        let s = self.string(key, default, errs)?;
        let found = choices.iter().find(|c| **c == s).copied();
        if found.is_none() {
            let mut message = format!("unknown value \"{s}\"; expected one of {}", choices.join(", "));
            if let Some(best) = suggest(&s, choices) {
                message.push_str(&format!(" (did you mean \"{best}\"?)"));
            }
            errs.push(err(&self.child(key), message));
        }
        found
    }

    fn measure(&self, errs: &mut Vec<FieldError>) -> Option<PathMeasure> {
        self.choice("measure", &["physical", "risk_neutral"], Some("physical"), errs)
            .map(|m| if m == "physical" { PathMeasure::Physical } else { PathMeasure::RiskNeutral })
    }

    fn numbers(&self, key: &str, default: Option<Vec<f64>>, errs: &mut Vec<FieldError>) -> Option<Vec<f64>> {
        match (self.get(key), default) {
            (None, Some(d)) => Some(d),
            (None, None) => {
                self.missing(key, errs);
                None
            }
            (Some(v), _) => number_list(v, &self.child(key), errs),
        }
    }

    /// List whose entries are numbers or `null`.
    fn optional_numbers(&self, key: &str, errs: &mut Vec<FieldError>) -> Option<Vec<Option<f64>>> {
        let Some(v) = self.get(key) else {
            self.missing(key, errs);
            return None;
        };
        let path = self.child(key);
        let Some(list) = v.as_array() else {
            errs.push(err(&path, "expected a list of numbers or nulls".into()));
            return None;
        };
        let mut ok = true;
        let out = list
            .iter()
            .enumerate()
            .map(|(i, x)| match x {
                Value::Null => None,
                _ => match x.as_f64().filter(|x| x.is_finite()) {
                    Some(x) => Some(x),
                    None => {
                        errs.push(err(&format!("{path}[{i}]"), format!("expected a number or null, got {x}")));
                        ok = false;
                        None
                    }
                },
            })
            .collect();
        ok.then_some(out)
    }

    fn routes(&self, model: Option<&ModelSpec>, errs: &mut Vec<FieldError>) -> Option<Vec<RouteName>> {
        let path = self.child("routes");
        let Some(v) = self.get("routes") else {
            return Some(if model.is_some_and(ModelSpec::is_qubit) {
                vec![RouteName::Pde, RouteName::MonteCarlo]
            } else {
                vec![RouteName::ClosedForm, RouteName::Pde, RouteName::MonteCarlo]
            });
        };
        let Some(list) = v.as_array().filter(|l| !l.is_empty()) else {
            errs.push(err(&path, "expected a non-empty list of route names".into()));
            return None;
        };
        let mut out = Vec::new();
        let mut ok = true;
        for (i, r) in list.iter().enumerate() {
            let at = format!("{path}[{i}]");
            let route = r.as_str().and_then(RouteName::from_name);
            match route {
                None => {
                    let mut message = format!("unknown route {r}; expected one of {}", RouteName::NAMES.join(", "));
                    if let Some(best) = r.as_str().and_then(|s| suggest(s, &RouteName::NAMES)) {
                        message.push_str(&format!(" (did you mean \"{best}\"?)"));
                    }
                    errs.push(err(&at, message));
                    ok = false;
                }
                Some(RouteName::ClosedForm) if model.is_some_and(ModelSpec::is_qubit) => {
                    errs.push(err(&at, "the qubit model has no closed form".into()));
                    ok = false;
                }
                Some(RouteName::GaussianApproximation) if model.is_some_and(|m| !m.is_qubit()) => {
                    errs.push(err(&at, "gaussian_approximation applies to the qubit model".into()));
                    ok = false;
                }
                Some(route) if out.contains(&route) => {
                    errs.push(err(&at, format!("route {} listed twice", route.name())));
                    ok = false;
                }
                Some(route) => out.push(route),
            }
        }
        ok.then_some(out)
    }

    fn pde(&self, errs: &mut Vec<FieldError>) -> Option<PdeSettings> {
        let d = PdeSettings::default();
        if self.get("pde").is_none() {
            return Some(d);
        }
        let o = self.object("pde", errs)?.keys(&["cells", "sho_spacing", "qubit_cells"], errs)?;
        let cells = match o.get("cells") {
            None => Some(None),
            Some(_) => o.integer("cells", None, 4, errs).map(|c| Some(c as usize)),
        };
        let sho_spacing = o.number("sho_spacing", Some(d.sho_spacing), Rule::Positive, errs);
        let qubit_cells = o.integer("qubit_cells", Some(d.qubit_cells as u64), 4, errs);
        Some(PdeSettings {
            cells: cells?,
            sho_spacing: sho_spacing?,
            qubit_cells: qubit_cells? as usize,
        })
    }
}

fn number_list(v: &Value, path: &str, errs: &mut Vec<FieldError>) -> Option<Vec<f64>> {
    let Some(list) = v.as_array() else {
        errs.push(err(path, format!("expected a list of numbers, got {v}")));
        return None;
    };
    let mut ok = true;
    let out = list
        .iter()
        .enumerate()
        .map(|(i, x)| match x.as_f64().filter(|x| x.is_finite()) {
            Some(x) => x,
            None => {
                errs.push(err(&format!("{path}[{i}]"), format!("expected a number, got {x}")));
                ok = false;
                0.0
            }
        })
        .collect();
    ok.then_some(out)
}

/// Closest allowed key by normalized Levenshtein similarity, or by prefix.
fn suggest<'b>(key: &str, allowed: &[&'b str]) -> Option<&'b str> {
    allowed
        .iter()
        .map(|a| {
            let mut score = strsim::normalized_levenshtein(key, a);
            if key.starts_with(a) || a.starts_with(key) {
                score = score.max(0.75);
            }
            (score, *a)
        })
        .filter(|(s, _)| *s >= 0.5)
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, a)| a)
}
