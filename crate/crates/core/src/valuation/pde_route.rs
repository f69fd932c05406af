use super::{check_before_maturity, Direction, Payoff, Route, ValuationResult};
use crate::error::{Error, Result};
use crate::models::{sho_transition_density, Model, RiskNeutralSpec, TransitionMode};
use crate::pde::{
    interpolate, solve_backward_valuation, stable_schedule, Axis, FpProblem, Grid, ValueField,
    ValueForm, MIN_CELLS,
};
use crate::schedule::TimeSchedule;

/// Upper bound on the number of stored surface values (about 800 MB).
const MAX_SURFACE_VALUES: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    /// Cells per axis; overrides the defaults below.
    pub cells: Option<usize>,
    /// Target spacing on the truncated oscillator domain.
    pub sho_spacing: f64,
    pub qubit_cells: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            cells: None,
            sho_spacing: 0.025,
            qubit_cells: 400,
        }
    }
}

/// Discounted value fields from one backward solve, at increasing times.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    fields: Vec<ValueField>,
}

impl ValueSurface {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, k: usize) -> &ValueField {
        &self.fields[k]
    }

    pub fn fields(&self) -> &[ValueField] {
        &self.fields
    }

    pub fn grid(&self) -> &Grid {
        &self.fields[0].grid
    }

    pub fn value_at(&self, k: usize, state: &[f64]) -> Result<f64> {
        interpolate(&self.fields[k], state)
    }
}

/// Grid for `model` covering every probe state. The oscillator domain is
/// `[-L, L]` per axis with `L` the largest drifted probe coordinate (or delta
/// point) plus six terminal standard deviations.
fn value_grid(
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    probes: &[Vec<f64>],
    t0: f64,
    opts: &PdeOptions,
) -> Result<Grid> {
    let dim = probes[0].len();
    if dim == 0 || dim > 2 {
        return Err(Error::Unsupported(format!(
            "the PDE route handles 1 or 2 state coordinates, got {dim}"
        )));
    }
    if probes.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: probes.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
        });
    }
    let axis = match model {
        Model::Sho(p) => {
            let tau = rn.maturity - t0;
            let law = sho_transition_density(p, TransitionMode::RiskNeutral { r: rn.r }, &[0.0], tau)?;
            let sd = law.variance[0].max(p.n_thermal()).sqrt();
            let growth = (rn.r * tau).exp().max(1.0);
            let mut reach = probes
                .iter()
                .flatten()
                .map(|s| s.abs() * growth)
                .fold(0.0, f64::max);
            if let Payoff::Delta { points } = payoff {
                reach = points.iter().map(|x| x.abs()).fold(reach, f64::max);
            }
            let half = reach + 6.0 * sd.max(1e-3);
            let cells = match opts.cells {
                Some(c) => c,
                None => {
                    if !(opts.sho_spacing > 0.0) {
                        return Err(Error::InvalidParameter {
                            name: "sho_spacing",
                            reason: format!("must be > 0, got {}", opts.sho_spacing),
                        });
                    }
                    ((2.0 * half / opts.sho_spacing).ceil() as usize).max(MIN_CELLS)
                }
            };
            Axis::new(-half, half, cells)?
        }
        Model::Qubit(_) => {
            if let Some(s) = probes.iter().flatten().find(|s| !(s.abs() <= 1.0)) {
                return Err(Error::Domain(format!("qubit state {s} lies outside [-1, 1]")));
            }
            Axis::new(-1.0, 1.0, opts.cells.unwrap_or(opts.qubit_cells))?
        }
    };
    Ok(if dim == 1 {
        Grid::one(axis)
    } else {
        Grid::two(axis, axis)
    })
}

/// Terminal data on the grid: cell averages of step and call payoffs, and a
/// unit-mass Gaussian of width two cells for a delta.
fn terminal_data(payoff: &Payoff, grid: &Grid) -> Result<Vec<f64>> {
    let dim = grid.dimension();
    match payoff {
        Payoff::Delta { points } => {
            let sd: Vec<f64> = grid.axes().iter().map(|a| 2.0 * a.spacing()).collect();
            grid.gaussian_density(points, &sd)
        }
        Payoff::Constant { value } => Ok(vec![*value; grid.len()]),
        Payoff::Step {
            thresholds,
            direction,
        } => Ok((0..grid.len())
            .map(|idx| {
                let at = grid.unflatten(idx);
                (0..dim)
                    .filter_map(|k| {
                        thresholds[k].map(|a| {
                            let ax = grid.axis(k);
                            let h = ax.spacing();
                            let above = ((ax.node(at[k]) + 0.5 * h - a) / h).clamp(0.0, 1.0);
                            match direction {
                                Direction::Above => above,
                                Direction::Below => 1.0 - above,
                            }
                        })
                    })
                    .product()
            })
            .collect()),
        Payoff::Call { strikes } => Ok((0..grid.len())
            .map(|idx| {
                let at = grid.unflatten(idx);
                (0..dim)
                    .filter_map(|k| {
                        strikes[k].map(|strike| {
                            let ax = grid.axis(k);
                            let h = ax.spacing();
                            let c = ax.node(at[k]);
                            let (lo, hi) = (c - 0.5 * h, c + 0.5 * h);
                            if strike <= lo {
                                c - strike
                            } else if strike >= hi {
                                0.0
                            } else {
                                (hi - strike).powi(2) / (2.0 * h)
                            }
                        })
                    })
                    .sum()
            })
            .collect()),
    }
}

/// Solves the backward equation for `payoff` once, from `T` down to `t0`.
/// Without `times` only the field at `t0` is kept. With `times` (which must
/// run from `t0` to `T`), the solver step divides each of its steps and a
/// field is kept at every one of its times.
pub fn value_surface(
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    probes: &[Vec<f64>],
    t0: f64,
    times: Option<&TimeSchedule>,
    opts: &PdeOptions,
) -> Result<ValueSurface> {
    let problem = backward_problem(model, rn, payoff, probes, t0, times, opts)?;
    let fields = solve_backward_valuation(&problem, rn, ValueForm::F)?;
    Ok(ValueSurface { fields })
}

/// The backward problem `value_surface` solves: grid, risk-neutral
/// dynamics, schedule, terminal data and snapshot steps.
pub fn backward_problem(
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    probes: &[Vec<f64>],
    t0: f64,
    times: Option<&TimeSchedule>,
    opts: &PdeOptions,
) -> Result<FpProblem> {
    check_before_maturity(rn, t0)?;
    let Some(first) = probes.first() else {
        return Err(Error::Domain("no state to value".into()));
    };
    payoff.validate(first.len())?;
    let grid = value_grid(model, rn, payoff, probes, t0, opts)?;
    let dynamics = model.risk_neutral_dynamics(rn, grid.dimension())?;
    let stable = stable_schedule(&dynamics, &grid, t0, rn.maturity)?;
    let (schedule, snapshots) = match times {
        None => (stable, vec![0]),
        Some(outer) => {
            if (outer.t0() - t0).abs() > 1e-12 || (outer.t_end() - rn.maturity).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "surface times must run from t0={t0} to T={}",
                    rn.maturity
                )));
            }
            let n = outer.n_steps();
            let m = stable.n_steps().div_ceil(n).max(1);
            if (n + 1).saturating_mul(grid.len()) > MAX_SURFACE_VALUES {
                return Err(Error::Unsupported(format!(
                    "{} fields of {} nodes exceed the surface storage limit",
                    n + 1,
                    grid.len()
                )));
            }
            let schedule = TimeSchedule::new(t0, rn.maturity, n * m)?;
            (schedule, (0..=n).map(|k| k * m).collect())
        }
    };
    let data = terminal_data(payoff, &grid)?;
    Ok(FpProblem::new(dynamics, grid, schedule, data)?.with_snapshots(snapshots))
}

/// Backward PDE value interpolated at `(state, t)`.
pub fn value_pde(
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    state: &[f64],
    t: f64,
    opts: &PdeOptions,
) -> Result<ValuationResult> {
    let surface = value_surface(model, rn, payoff, &[state.to_vec()], t, None, opts)?;
    let value = surface.value_at(0, state)?;
    Ok(ValuationResult::new(
        value,
        0.0,
        Route::Pde,
        model.name(),
        payoff,
        state,
        t,
        rn,
    ))
}
