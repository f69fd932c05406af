//! Terminal payoffs and the closed-form, Monte Carlo and PDE valuation routes.
//!
//! A payoff lists one entry per state coordinate. Values are discounted
//! risk-neutral expectations `f = e^{-r(T-t)} E[payoff(s_T)]`; for a delta
//! payoff this expectation is a transition density, so those results carry
//! [`Quantity::Density`].

mod closed_form;
mod mc;
mod pde_route;

pub use closed_form::{qubit_gaussian_approx_value, value_closed_form_sho, ApproxComparison};
pub use mc::{value_mc, value_mc_many, McOptions, MIN_PATHS};
pub use pde_route::{backward_problem, value_pde, value_surface, PdeOptions, ValueSurface};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, RiskNeutralSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    Below,
}

/// Terminal payoff. `None` entries leave that coordinate out of the payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    /// Point mass at `points`; its value is a density in the state variables.
    Delta { points: Vec<f64> },
    /// Product of indicators `s_i > a_i` (or `<` for `Below`).
    Step {
        thresholds: Vec<Option<f64>>,
        direction: Direction,
    },
    /// Sum of per-coordinate calls `(s_i - K_i)^+`.
    Call { strikes: Vec<Option<f64>> },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Delta,
    Step,
    Call,
    Constant,
}

/// Units of a valuation result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Per unit state volume.
    Density,
    Value,
}

impl Payoff {
    pub fn kind(&self) -> PayoffKind {
        match self {
            Payoff::Delta { .. } => PayoffKind::Delta,
            Payoff::Step { .. } => PayoffKind::Step,
            Payoff::Call { .. } => PayoffKind::Call,
            Payoff::Constant { .. } => PayoffKind::Constant,
        }
    }

    pub fn quantity(&self) -> Quantity {
        match self {
            Payoff::Delta { .. } => Quantity::Density,
            _ => Quantity::Value,
        }
    }

    /// Number of state coordinates the payoff is written for; `None` for a
    /// constant.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Payoff::Delta { points } => Some(points.len()),
            Payoff::Step { thresholds, .. } => Some(thresholds.len()),
            Payoff::Call { strikes } => Some(strikes.len()),
            Payoff::Constant { .. } => None,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if let Some(d) = self.dimension() {
            if d != dimension {
                return Err(Error::Dimension {
                    expected: dimension,
                    got: d,
                });
            }
        }
        let finite = match self {
            Payoff::Delta { points } => points.iter().all(|p| p.is_finite()),
            Payoff::Step { thresholds, .. } => thresholds.iter().flatten().all(|a| a.is_finite()),
            Payoff::Call { strikes } => strikes.iter().flatten().all(|k| k.is_finite()),
            Payoff::Constant { value } => value.is_finite(),
        };
        if !finite {
            return Err(Error::InvalidParameter {
                name: "payoff",
                reason: "payoff parameters must be finite".into(),
            });
        }
        Ok(())
    }

    /// Payoff at a terminal state. Delta payoffs have no pointwise value.
    pub fn terminal_value(&self, state: &[f64]) -> Option<f64> {
        match self {
            Payoff::Delta { .. } => None,
            Payoff::Step {
                thresholds,
                direction,
            } => Some(
                thresholds
                    .iter()
                    .zip(state)
                    .filter_map(|(a, &s)| a.map(|a| step_indicator(s, a, *direction)))
                    .product(),
            ),
            Payoff::Call { strikes } => Some(
                strikes
                    .iter()
                    .zip(state)
                    .filter_map(|(k, &s)| k.map(|k| (s - k).max(0.0)))
                    .sum(),
            ),
            Payoff::Constant { value } => Some(*value),
        }
    }
}

fn step_indicator(s: f64, a: f64, direction: Direction) -> f64 {
    let hit = match direction {
        Direction::Above => s > a,
        Direction::Below => s < a,
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ClosedForm,
    MonteCarlo,
    Pde,
    GaussianApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub value: f64,
    pub standard_error: f64,
    pub route: Route,
    pub model: String,
    pub payoff: PayoffKind,
    pub quantity: Quantity,
    pub state: Vec<f64>,
    pub t: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub r: f64,
}

impl ValuationResult {
    #[allow(clippy::too_many_arguments)]
    fn new(
        value: f64,
        standard_error: f64,
        route: Route,
        model: impl Into<String>,
        payoff: &Payoff,
        state: &[f64],
        t: f64,
        rn: &RiskNeutralSpec,
    ) -> Self {
        Self {
            value,
            standard_error,
            route,
            model: model.into(),
            payoff: payoff.kind(),
            quantity: payoff.quantity(),
            state: state.to_vec(),
            t,
            maturity: rn.maturity,
            r: rn.r,
        }
    }
}

/// Valuation route with its numerical settings.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueRoute {
    ClosedForm,
    Pde(PdeOptions),
    MonteCarlo(McOptions),
}

impl ValueRoute {
    pub fn route(&self) -> Route {
        match self {
            ValueRoute::ClosedForm => Route::ClosedForm,
            ValueRoute::Pde(_) => Route::Pde,
            ValueRoute::MonteCarlo(_) => Route::MonteCarlo,
        }
    }
}

fn check_before_maturity(rn: &RiskNeutralSpec, t: f64) -> Result<()> {
    if !(t < rn.maturity) {
        return Err(Error::Domain(format!(
            "valuation time t={t} must precede the maturity T={}",
            rn.maturity
        )));
    }
    Ok(())
}

/// Values `payoff` at `(state, t)` by the chosen route.
pub fn value(
    route: &ValueRoute,
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    state: &[f64],
    t: f64,
) -> Result<ValuationResult> {
    match (route, model) {
        (ValueRoute::ClosedForm, Model::Sho(p)) => value_closed_form_sho(p, rn, payoff, state, t),
        (ValueRoute::ClosedForm, Model::Qubit(_)) => Err(Error::Unsupported(
            "no closed form exists for the qubit model; use the pde or monte_carlo route".into(),
        )),
        (ValueRoute::Pde(opts), _) => value_pde(model, rn, payoff, state, t, opts),
        (ValueRoute::MonteCarlo(opts), _) => {
            let dynamics = model.risk_neutral_dynamics(rn, state.len())?;
            value_mc(&dynamics, rn, payoff, state, t, opts)
        }
    }
}

/// Central-difference sensitivities `df/ds_i` with per-axis `bump`. The PDE
/// route solves once and differences the interpolated surface; the Monte
/// Carlo route reuses the master seed for every bumped revaluation.
pub fn deltas(
    route: &ValueRoute,
    model: &Model,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    state: &[f64],
    t: f64,
    bump: &[f64],
) -> Result<Vec<f64>> {
    if bump.len() != state.len() {
        return Err(Error::Dimension {
            expected: state.len(),
            got: bump.len(),
        });
    }
    if let Some(b) = bump.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "bump",
            reason: format!("must be > 0, got {b}"),
        });
    }
    let bumped = |i: usize, sign: f64| {
        let mut s = state.to_vec();
        s[i] += sign * bump[i];
        s
    };
    if let ValueRoute::Pde(opts) = route {
        let mut probes = vec![state.to_vec()];
        for i in 0..state.len() {
            probes.push(bumped(i, 1.0));
            probes.push(bumped(i, -1.0));
        }
        let surface = value_surface(model, rn, payoff, &probes, t, None, opts)?;
        let field = surface.field(0);
        for (i, axis) in field.grid.axes().iter().enumerate() {
            let margin = 2.0 * axis.spacing();
            if axis.lower + margin > state[i] - bump[i] || state[i] + bump[i] > axis.upper - margin
            {
                return Err(Error::Domain(format!(
                    "bumped coordinate {i} comes within two grid spacings of the domain edge"
                )));
            }
        }
        return (0..state.len())
            .map(|i| {
                let up = surface.value_at(0, &bumped(i, 1.0))?;
                let down = surface.value_at(0, &bumped(i, -1.0))?;
                Ok((up - down) / (2.0 * bump[i]))
            })
            .collect();
    }
    (0..state.len())
        .map(|i| {
            let up = value(route, model, rn, payoff, &bumped(i, 1.0), t)?.value;
            let down = value(route, model, rn, payoff, &bumped(i, -1.0), t)?.value;
            Ok((up - down) / (2.0 * bump[i]))
        })
        .collect()
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
