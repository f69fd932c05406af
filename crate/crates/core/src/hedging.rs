//! Discrete delta hedging along simulated paths.
//!
//! The portfolio is `Pi = f - sum_i Delta_i s_i + C`: the claim, short delta
//! positions in each state coordinate, and a financing account `C` that
//! starts at zero, accrues at rate `r` and absorbs the cash of every
//! rebalance. Deltas are reset at each step from the risk-neutral value;
//! the replication error is `Pi_T - Pi_0 e^{r (T - t0)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sho_transition_density, Model, RiskNeutralSpec, ShoParams, TransitionMode};
use crate::rng::make_stream;
use crate::schedule::TimeSchedule;
use crate::sde::euler_maruyama;
use crate::valuation::{value_closed_form_sho, value_surface, Payoff, PdeOptions, ValueSurface};

/// `Pi = f - sum_i Delta_i s_i`.
pub fn portfolio_value(f_value: f64, deltas: &[f64], state: &[f64]) -> Result<f64> {
    if deltas.len() != state.len() {
        return Err(Error::Dimension {
            expected: state.len(),
            got: deltas.len(),
        });
    }
    Ok(f_value - deltas.iter().zip(state).map(|(d, s)| d * s).sum::<f64>())
}

/// Measure under which the hedged paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMeasure {
    Physical,
    RiskNeutral,
}

/// Source of the option value and deltas inside the hedging loop.
#[derive(Debug, Clone, PartialEq)]
pub enum HedgeRoute {
    ClosedForm,
    Pde(PdeOptions),
}

#[derive(Debug, Clone)]
pub struct HedgeSpec {
    pub model: Model,
    pub rn: RiskNeutralSpec,
    pub payoff: Payoff,
    pub state0: Vec<f64>,
    /// Rebalancing times; must end at the maturity.
    pub schedule: TimeSchedule,
    pub n_paths: usize,
    pub master_seed: u64,
    pub route: HedgeRoute,
    pub measure: PathMeasure,
}

/// One hedged path, stored by column. Deltas at step `k` are the positions
/// held after rebalancing at `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeLedger {
    pub path: usize,
    pub schedule: TimeSchedule,
    pub dimension: usize,
    pub states: Vec<f64>,
    pub values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub pi: Vec<f64>,
    pub pi_before_rebalance: Vec<f64>,
    pub financing: Vec<f64>,
    pub absorbed_at: Option<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a [f64],
    pub f: f64,
    pub deltas: &'a [f64],
    pub pi: f64,
    pub pi_before_rebalance: f64,
    pub financing: f64,
}

impl HedgeLedger {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, k: usize) -> LedgerRow<'_> {
        let d = self.dimension;
        LedgerRow {
            step: k,
            t: self.schedule.time(k),
            state: &self.states[k * d..(k + 1) * d],
            f: self.values[k],
            deltas: &self.deltas[k * d..(k + 1) * d],
            pi: self.pi[k],
            pi_before_rebalance: self.pi_before_rebalance[k],
            financing: self.financing[k],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = LedgerRow<'_>> + '_ {
        (0..self.len()).map(|k| self.row(k))
    }
}

/// Ledgers of the paths that completed and the diagnostics of those that
/// did not, both in path order.
#[derive(Debug, Clone)]
pub struct HedgeRun {
    pub ledgers: Vec<HedgeLedger>,
    pub failures: Vec<Error>,
}

enum Valuator {
    ClosedForm(ShoParams),
    Surface(ValueSurface),
}

impl Valuator {
    fn value_and_deltas(
        &self,
        spec: &HedgeSpec,
        k: usize,
        state: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let t = spec.schedule.time(k);
        match self {
            Valuator::ClosedForm(p) => {
                let f = |s: &[f64]| {
                    value_closed_form_sho(p, &spec.rn, &spec.payoff, s, t).map(|v| v.value)
                };
                let tau = spec.rn.maturity - t;
                let law = sho_transition_density(p, TransitionMode::RiskNeutral { r: spec.rn.r }, &[0.0], tau)?;
                let bump = 1e-4 * law.variance[0].sqrt().max(1e-2);
                let value = f(state)?;
                let mut deltas = Vec::with_capacity(state.len());
                let mut s = state.to_vec();
                for i in 0..state.len() {
                    s[i] = state[i] + bump;
                    let up = f(&s)?;
                    s[i] = state[i] - bump;
                    let down = f(&s)?;
                    s[i] = state[i];
                    deltas.push((up - down) / (2.0 * bump));
                }
                Ok((value, deltas))
            }
            Valuator::Surface(surface) => {
                let value = surface.value_at(k, state)?;
                let mut deltas = Vec::with_capacity(state.len());
                let mut s = state.to_vec();
                for (i, axis) in surface.grid().axes().iter().enumerate() {
                    let h = axis.spacing();
                    let hi = (state[i] + h).min(axis.upper);
                    let lo = (state[i] - h).max(axis.lower);
                    s[i] = hi;
                    let up = surface.value_at(k, &s)?;
                    s[i] = lo;
                    let down = surface.value_at(k, &s)?;
                    s[i] = state[i];
                    deltas.push((up - down) / (hi - lo));
                }
                Ok((value, deltas))
            }
        }
    }
}

fn validate(spec: &HedgeSpec) -> Result<()> {
    if (spec.schedule.t_end() - spec.rn.maturity).abs() > 1e-12 * spec.rn.maturity.max(1.0) {
        return Err(Error::Domain(format!(
            "the hedge schedule ends at {} but the maturity is T={}",
            spec.schedule.t_end(),
            spec.rn.maturity
        )));
    }
    if spec.n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: "must be at least 1".into(),
        });
    }
    if spec.state0.is_empty() {
        return Err(Error::Domain("the initial state is empty".into()));
    }
    if matches!(spec.payoff, Payoff::Delta { .. }) {
        return Err(Error::Unsupported(
            "a delta payoff has no terminal value to replicate".into(),
        ));
    }
    spec.payoff.validate(spec.state0.len())
}

/// Simulates `n_paths` hedged paths. A path whose valuation fails is
/// reported in `failures` and leaves the others untouched.
pub fn run_hedge(spec: &HedgeSpec) -> Result<HedgeRun> {
    validate(spec)?;
    let dim = spec.state0.len();
    let valuator = match (&spec.route, &spec.model) {
        (HedgeRoute::ClosedForm, Model::Sho(p)) => Valuator::ClosedForm(*p),
        (HedgeRoute::ClosedForm, Model::Qubit(_)) => {
            return Err(Error::Unsupported(
                "no closed form exists for the qubit model; hedge with the pde route".into(),
            ))
        }
        (HedgeRoute::Pde(opts), model) => Valuator::Surface(value_surface(
            model,
            &spec.rn,
            &spec.payoff,
            &[spec.state0.clone()],
            spec.schedule.t0(),
            Some(&spec.schedule),
            opts,
        )?),
    };
    let dynamics = match spec.measure {
        PathMeasure::Physical => spec.model.physical_dynamics(dim)?,
        PathMeasure::RiskNeutral => spec.model.risk_neutral_dynamics(&spec.rn, dim)?,
    };
    // the initial value and deltas are common to every path
    let (f0, delta0) = valuator.value_and_deltas(spec, 0, &spec.state0)?;
    let pi0 = portfolio_value(f0, &delta0, &spec.state0)?;

    let outcomes: Vec<Result<HedgeLedger>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            hedge_path(spec, &valuator, &dynamics, p, f0, &delta0, pi0).map_err(|e| Error::Path {
                path: p,
                source: Box::new(e),
            })
        })
        .collect();
    let mut run = HedgeRun {
        ledgers: Vec::with_capacity(spec.n_paths),
        failures: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(l) => run.ledgers.push(l),
            Err(e) => run.failures.push(e),
        }
    }
    Ok(run)
}

fn hedge_path(
    spec: &HedgeSpec,
    valuator: &Valuator,
    dynamics: &crate::dynamics::Dynamics,
    p: usize,
    f0: f64,
    delta0: &[f64],
    pi0: f64,
) -> Result<HedgeLedger> {
    let schedule = &spec.schedule;
    let n = schedule.n_steps();
    let dim = spec.state0.len();
    let mut stream = make_stream(spec.master_seed, p as u64);
    let path = euler_maruyama(dynamics, &spec.state0, schedule, &mut stream)?;
    let growth = (spec.rn.r * schedule.dt()).exp();

    let mut ledger = HedgeLedger {
        path: p,
        schedule: *schedule,
        dimension: dim,
        states: path.states,
        values: Vec::with_capacity(n + 1),
        deltas: Vec::with_capacity((n + 1) * dim),
        pi: Vec::with_capacity(n + 1),
        pi_before_rebalance: Vec::with_capacity(n + 1),
        financing: Vec::with_capacity(n + 1),
        absorbed_at: path.absorbed_at,
        error: 0.0,
    };
    ledger.values.push(f0);
    ledger.deltas.extend_from_slice(delta0);
    ledger.pi.push(pi0);
    ledger.pi_before_rebalance.push(pi0);
    ledger.financing.push(0.0);

    let mut held = delta0.to_vec();
    let mut cash = 0.0;
    for k in 1..=n {
        let s = &ledger.states[k * dim..(k + 1) * dim];
        cash *= growth;
        let frozen = path.absorbed_at.is_some_and(|a| k >= a);
        let f = if k == n {
            spec.payoff.terminal_value(s).expect("pointwise payoff")
        } else if frozen {
            spec.rn.discount(schedule.time(k)) * spec.payoff.terminal_value(s).expect("pointwise payoff")
        } else {
            let (f, fresh) = valuator.value_and_deltas(spec, k, s)?;
            let before = portfolio_value(f, &held, s)? + cash;
            ledger.pi_before_rebalance.push(before);
            for ((h, new), si) in held.iter_mut().zip(&fresh).zip(s) {
                cash += (new - *h) * si;
                *h = *new;
            }
            let after = portfolio_value(f, &held, s)? + cash;
            if !after.is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            ledger.values.push(f);
            ledger.deltas.extend_from_slice(&held);
            ledger.pi.push(after);
            ledger.financing.push(cash);
            continue;
        };
        let pi = portfolio_value(f, &held, s)? + cash;
        ledger.values.push(f);
        ledger.deltas.extend_from_slice(&held);
        ledger.pi.push(pi);
        ledger.pi_before_rebalance.push(pi);
        ledger.financing.push(cash);
    }
    let horizon = spec.rn.maturity - schedule.t0();
    ledger.error = ledger.pi[n] - pi0 * (spec.rn.r * horizon).exp();
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub n_paths: usize,
    pub mean_error: f64,
    pub mean_standard_error: f64,
    pub rms_error: f64,
    /// Path with the largest absolute error.
    pub worst_path: usize,
    pub worst_error: f64,
    pub histogram: Histogram,
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn replication_report(ledgers: &[HedgeLedger]) -> Result<ReplicationReport> {
    let errors: Vec<f64> = ledgers.iter().map(|l| l.error).collect();
    let mut report = report_from_errors(&errors, HISTOGRAM_BINS)?;
    report.worst_path = ledgers[report.worst_path].path;
    Ok(report)
}

/// Summary of terminal errors; `worst_path` indexes `errors`.
pub fn report_from_errors(errors: &[f64], bins: usize) -> Result<ReplicationReport> {
    if errors.len() < 2 {
        return Err(Error::Domain(format!(
            "a replication report needs at least 2 paths, got {}",
            errors.len()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "must be at least 1".into(),
        });
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let (worst_path, worst_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |(wi, we), (i, e)| {
            if e.abs() > f64::abs(we) {
                (i, e)
            } else {
                (wi, we)
            }
        });
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for e in errors {
        let b = (((e - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(ReplicationReport {
        n_paths: errors.len(),
        mean_error: mean,
        mean_standard_error: (var / n).sqrt(),
        rms_error: rms,
        worst_path,
        worst_error,
        histogram: Histogram { edges, counts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::QubitParams;
    use crate::valuation::Direction;

    #[test]
    fn portfolio_arithmetic() {
        assert_eq!(portfolio_value(5.0, &[1.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(portfolio_value(5.0, &[0.0, 0.0], &[2.0, 3.0]).unwrap(), 5.0);
        assert!(portfolio_value(5.0, &[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn synthetic_reports() {
        let r = report_from_errors(&[0.0; 5], 4).unwrap();
        assert_eq!(
            (r.mean_error, r.rms_error, r.worst_error, r.mean_standard_error),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 5);
        let r = report_from_errors(&[-1.0, 1.0], 2).unwrap();
        assert_eq!((r.mean_error, r.rms_error), (0.0, 1.0));
        assert_eq!(r.histogram.counts, vec![1, 1]);
        assert!(report_from_errors(&[], 3).is_err());
        assert!(report_from_errors(&[1.0], 3).is_err());
    }

    fn spec(model: Model, payoff: Payoff, route: HedgeRoute, dt: f64) -> HedgeSpec {
        let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
        HedgeSpec {
            model,
            rn,
            payoff,
            state0: vec![0.3],
            schedule: TimeSchedule::with_max_dt(0.0, 1.0, dt).unwrap(),
            n_paths: 8,
            master_seed: 9,
            route,
            measure: PathMeasure::Physical,
        }
    }

    fn step() -> Payoff {
        Payoff::Step {
            thresholds: vec![Some(0.0)],
            direction: Direction::Above,
        }
    }

    #[test]
    fn ledgers_are_complete_and_self_financing() {
        let sho = Model::Sho(ShoParams::new(1.0, 1.0, 1.0).unwrap());
        let s = spec(sho, step(), HedgeRoute::ClosedForm, 0.01);
        let run = run_hedge(&s).unwrap();
        assert!(run.failures.is_empty());
        for l in &run.ledgers {
            assert_eq!(l.len(), 101);
            let first = l.row(0);
            assert_eq!(
                first.pi,
                portfolio_value(first.f, first.deltas, first.state).unwrap()
            );
            for (k, row) in l.rows().enumerate() {
                assert_eq!(row.step, k);
                assert!((row.pi - row.pi_before_rebalance).abs() <= 1e-12 * row.pi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn noiseless_oscillator_is_hedged_exactly() {
        let sho = Model::Sho(ShoParams::new(1.0, 0.0, 1.0).unwrap());
        let call = Payoff::Call {
            strikes: vec![Some(0.1)],
        };
        let run = run_hedge(&spec(sho, call, HedgeRoute::ClosedForm, 0.01)).unwrap();
        for l in &run.ledgers {
            assert!(l.error.abs() <= 1e-6, "{}", l.error);
        }
    }

    #[test]
    fn absorbed_qubit_paths_freeze_their_deltas() {
        let q = Model::Qubit(QubitParams::with_rate(20.0).unwrap());
        let mut s = spec(q, step(), HedgeRoute::Pde(PdeOptions { cells: Some(200), ..PdeOptions::default() }), 0.01);
        s.state0 = vec![0.9];
        s.n_paths = 32;
        let run = run_hedge(&s).unwrap();
        assert!(run.failures.is_empty(), "{:?}", run.failures);
        let absorbed: Vec<_> = run.ledgers.iter().filter(|l| l.absorbed_at.is_some()).collect();
        assert!(!absorbed.is_empty());
        for l in absorbed {
            let a = l.absorbed_at.unwrap();
            for k in a..l.len() {
                assert_eq!(l.row(k).deltas, l.row(a - 1).deltas);
                assert_eq!(l.row(k).state, l.row(a).state);
            }
        }
    }

    #[test]
    fn rejects_mismatched_schedules_and_routes() {
        let sho = Model::Sho(ShoParams::new(1.0, 1.0, 1.0).unwrap());
        let mut s = spec(sho, step(), HedgeRoute::ClosedForm, 0.01);
        s.schedule = TimeSchedule::new(0.0, 0.5, 10).unwrap();
        assert!(run_hedge(&s).is_err());
        let q = Model::Qubit(QubitParams::with_rate(1.0).unwrap());
        assert!(matches!(
            run_hedge(&spec(q, step(), HedgeRoute::ClosedForm, 0.01)),
            Err(Error::Unsupported(_))
        ));
        let delta = Payoff::Delta { points: vec![0.0] };
        assert!(run_hedge(&spec(sho, delta, HedgeRoute::ClosedForm, 0.01)).is_err());
    }
}
