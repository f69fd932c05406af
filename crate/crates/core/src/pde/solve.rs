use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::models::RiskNeutralSpec;
use crate::pde::scheme::{
    backward_operator, forward_operator, BackwardEdge, ForwardEdge, ThetaStep, Tridiagonal,
};
use crate::pde::{DensityGrid, Grid, ValueField};
use crate::schedule::TimeSchedule;

/// Forward boundary closure of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisBoundary {
    /// No probability crosses the domain edge.
    ZeroFlux,
    /// Density vanishes just outside the edge; mass leaks out.
    ZeroValue,
}

/// Which value function the backward solve reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueForm {
    /// `f = e^{-r(T-t)} g`, the discounted value.
    F,
    /// `g`, the undiscounted expectation of the terminal data.
    G,
}

const NEGATIVE_TOLERANCE: f64 = 1e-12;
const MAX_CLIPPED_MASS: f64 = 1e-8;

/// A solve specification: dynamics on a grid over a schedule, with the
/// initial density (forward) or the terminal values (backward).
#[derive(Debug, Clone)]
pub struct FpProblem {
    pub dynamics: Dynamics,
    pub grid: Grid,
    pub schedule: TimeSchedule,
    pub data: Vec<f64>,
    pub boundaries: Vec<AxisBoundary>,
    /// Steps at which snapshots are reported; defaults to the last step for
    /// forward solves and the first for backward ones.
    pub snapshot_steps: Option<Vec<usize>>,
    pub theta: f64,
}

impl FpProblem {
    pub fn new(dynamics: Dynamics, grid: Grid, schedule: TimeSchedule, data: Vec<f64>) -> Result<Self> {
        if dynamics.dimension() != grid.dimension() {
            return Err(Error::Dimension {
                expected: grid.dimension(),
                got: dynamics.dimension(),
            });
        }
        if data.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid data must be finite".into()));
        }
        for (k, (c, axis)) in dynamics.components().iter().zip(grid.axes()).enumerate() {
            if let Some(b) = c.bounds() {
                if axis.lower != b.lower || axis.upper != b.upper {
                    return Err(Error::Domain(format!(
                        "axis {k} must span exactly [{}, {}] for bounded dynamics",
                        b.lower, b.upper
                    )));
                }
            }
        }
        let dim = grid.dimension();
        Ok(Self {
            dynamics,
            grid,
            schedule,
            data,
            boundaries: vec![AxisBoundary::ZeroFlux; dim],
            snapshot_steps: None,
            theta: 0.5,
        })
    }

    pub fn with_snapshots(mut self, steps: Vec<usize>) -> Self {
        self.snapshot_steps = Some(steps);
        self
    }

    pub fn with_boundaries(mut self, boundaries: Vec<AxisBoundary>) -> Self {
        self.boundaries = boundaries;
        self
    }

    fn forward_operators(&self) -> Vec<Tridiagonal> {
        self.grid
            .axes()
            .iter()
            .enumerate()
            .map(|(k, axis)| {
                let edge = match self.boundaries.get(k).copied().unwrap_or(AxisBoundary::ZeroFlux) {
                    AxisBoundary::ZeroFlux => ForwardEdge::ZeroFlux,
                    AxisBoundary::ZeroValue => ForwardEdge::ZeroValue,
                };
                forward_operator(self.dynamics.component(k), axis, [edge, edge])
            })
            .collect()
    }

    fn backward_operators(&self) -> Vec<Tridiagonal> {
        self.grid
            .axes()
            .iter()
            .enumerate()
            .map(|(k, axis)| {
                let c = self.dynamics.component(k);
                let edge = if c.bounds().is_some() {
                    BackwardEdge::Natural
                } else {
                    BackwardEdge::Linear
                };
                backward_operator(c, axis, edge)
            })
            .collect()
    }
}

/// Largest step for which the explicit half of the theta scheme keeps every
/// coefficient non-negative.
fn max_stable_dt(ops: &[Tridiagonal], theta: f64) -> f64 {
    let explicit = 1.0 - theta;
    let worst = ops.iter().map(Tridiagonal::max_abs_diag).fold(0.0, f64::max);
    if explicit <= 0.0 || worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (explicit * worst)
    }
}

fn check_stability(ops: &[Tridiagonal], problem: &FpProblem) -> Result<()> {
    if !(problem.theta > 0.0 && problem.theta <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must lie in (0, 1], got {}", problem.theta),
        });
    }
    let max_dt = max_stable_dt(ops, problem.theta);
    let dt = problem.schedule.dt();
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, max_dt });
    }
    Ok(())
}

/// Schedule over `[t0, t_end]` meeting the stability bound of both the forward
/// and backward operators of `dynamics` on `grid`, with 5% headroom.
pub fn stable_schedule(dynamics: &Dynamics, grid: &Grid, t0: f64, t_end: f64) -> Result<TimeSchedule> {
    let probe = TimeSchedule::new(t0, t_end, 1)?;
    let problem = FpProblem::new(dynamics.clone(), grid.clone(), probe, vec![0.0; grid.len()])?;
    let mut ops = problem.forward_operators();
    ops.extend(problem.backward_operators());
    let max_dt = max_stable_dt(&ops, problem.theta);
    if max_dt.is_infinite() {
        return Ok(probe);
    }
    TimeSchedule::with_max_dt(t0, t_end, 0.95 * max_dt)
}

struct Stepper {
    steps: Vec<ThetaStep>,
    cells: Vec<usize>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(ops: &[Tridiagonal], grid: &Grid, dt: f64, theta: f64) -> Self {
        Self {
            steps: ops.iter().map(|op| ThetaStep::new(op, dt, theta)).collect(),
            cells: grid.axes().iter().map(|a| a.cells).collect(),
            scratch: Vec::new(),
        }
    }

    fn advance(&mut self, data: &mut [f64]) {
        for (k, step) in self.steps.iter().enumerate() {
            let outer: usize = self.cells[..k].iter().product();
            let inner: usize = self.cells[k + 1..].iter().product();
            step.apply(data, outer, inner, &mut self.scratch);
        }
    }
}

fn snapshot_set(requested: &Option<Vec<usize>>, default: usize, n_steps: usize) -> Result<Vec<bool>> {
    let mut wanted = vec![false; n_steps + 1];
    match requested {
        None => wanted[default] = true,
        Some(steps) => {
            for &s in steps {
                if s > n_steps {
                    return Err(Error::Domain(format!(
                        "snapshot step {s} beyond the schedule ({n_steps} steps)"
                    )));
                }
                wanted[s] = true;
            }
        }
    }
    Ok(wanted)
}

/// Removes round-off negativity from a density, preserving its mass. Larger
/// violations are scheme failures.
fn enforce_positivity(values: &mut [f64], cell_volume: f64, step: usize) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok(());
    }
    let negative: f64 = values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * cell_volume;
    if min < -NEGATIVE_TOLERANCE && negative >= MAX_CLIPPED_MASS {
        return Err(Error::Scheme(format!(
            "density reached {min:e} at step {step} (negative mass {negative:e})"
        )));
    }
    let before: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let after: f64 = values.iter().sum();
    if after > 0.0 {
        let scale = before / after;
        for v in values.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Evolves the initial density forward in time. Snapshots are returned in
/// time order.
pub fn solve_forward_fp(problem: &FpProblem) -> Result<Vec<DensityGrid>> {
    let ops = problem.forward_operators();
    check_stability(&ops, problem)?;
    let vol = problem.grid.cell_volume();
    if let Some(v) = problem.data.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("initial density has a negative value {v}")));
    }
    let mass: f64 = problem.data.iter().sum::<f64>() * vol;
    if !(mass > 0.0) {
        return Err(Error::Domain("initial density has no mass".into()));
    }
    let mut p: Vec<f64> = problem.data.iter().map(|v| v / mass).collect();
    let mass_check: f64 = p.iter().sum::<f64>() * vol;
    if (mass_check - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("initial mass {mass_check} could not be normalised")));
    }

    let n = problem.schedule.n_steps();
    let wanted = snapshot_set(&problem.snapshot_steps, n, n)?;
    let mut stepper = Stepper::new(&ops, &problem.grid, problem.schedule.dt(), problem.theta);
    let mut out = Vec::new();
    let mut push = |k: usize, p: &[f64]| {
        if wanted[k] {
            out.push(DensityGrid {
                grid: problem.grid.clone(),
                values: p.to_vec(),
                time: problem.schedule.time(k),
            });
        }
    };
    push(0, &p);
    for k in 1..=n {
        stepper.advance(&mut p);
        enforce_positivity(&mut p, vol, k)?;
        push(k, &p);
    }
    Ok(out)
}

/// Solves the risk-neutral backward equation `dg/dt + sum_i (V_i dg/ds_i +
/// D_i d^2g/ds_i^2) = 0` from the terminal data at `T` down to `t0`. The
/// problem's dynamics must be the risk-neutral ones. Snapshots are returned
/// in time order.
pub fn solve_backward_valuation(
    problem: &FpProblem,
    rn: &RiskNeutralSpec,
    form: ValueForm,
) -> Result<Vec<ValueField>> {
    let t_end = problem.schedule.t_end();
    if (t_end - rn.maturity).abs() > 1e-12 * rn.maturity.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "terminal data sit at t={t_end} but the maturity is T={}",
            rn.maturity
        )));
    }
    let ops = problem.backward_operators();
    check_stability(&ops, problem)?;
    let n = problem.schedule.n_steps();
    let wanted = snapshot_set(&problem.snapshot_steps, 0, n)?;
    let mut stepper = Stepper::new(&ops, &problem.grid, problem.schedule.dt(), problem.theta);
    let mut g = problem.data.clone();
    let mut out = Vec::new();
    let mut push = |k: usize, g: &[f64]| {
        if wanted[k] {
            let t = problem.schedule.time(k);
            let values = match form {
                ValueForm::G => g.to_vec(),
                ValueForm::F => {
                    let disc = rn.discount(t);
                    g.iter().map(|v| disc * v).collect()
                }
            };
            out.push(ValueField {
                grid: problem.grid.clone(),
                values,
                time: t,
                discounted: form == ValueForm::F,
            });
        }
    };
    push(n, &g);
    for k in (0..n).rev() {
        stepper.advance(&mut g);
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Scheme(format!("value at node {i} is not finite at step {k}")));
        }
        push(k, &g);
    }
    out.reverse();
    Ok(out)
}
