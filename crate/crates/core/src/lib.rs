//! Stochastic dynamics, Fokker-Planck solvers and risk-neutral valuation for
//! portfolios of damped harmonic oscillator quadratures and measured qubits.

pub mod dynamics;
pub mod hedging;
pub mod error;
pub mod models;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod schedule;
pub mod sde;
pub mod valuation;

pub use dynamics::{BoundaryPolicy, Component, Dynamics, StateBounds};
pub use error::{Error, Result};
pub use models::{
    qubit_absorption_probability, qubit_physical_dynamics, qubit_risk_neutral_dynamics,
    sho_physical_dynamics, sho_risk_neutral_dynamics, sho_transition_density, thermal_occupation,
    GaussianSpec, Model, QubitParams, RiskNeutralSpec, ShoParams, TransitionMode,
};
pub use rng::{make_stream, wiener_increments, RandomStream};
pub use schedule::TimeSchedule;
pub use sde::{
    ensemble_moments, euler_maruyama, simulate_ensemble, simulate_ensemble_recorded, Moments, Path,
    PathEnsemble, Record,
};
pub use pde::{
    grid_mass, interpolate, solve_backward_valuation, solve_forward_fp, stable_schedule, Axis,
    AxisBoundary, DensityGrid, FpProblem, Grid, GridValues, ValueField, ValueForm,
};
pub use valuation::{
    backward_problem, deltas, qubit_gaussian_approx_value, value, value_closed_form_sho, value_mc, value_mc_many, value_pde,
    value_surface, ApproxComparison, Direction, McOptions, Payoff, PayoffKind, PdeOptions,
    Quantity, Route, ValuationResult, ValueRoute, ValueSurface,
};
pub use hedging::{
    portfolio_value, replication_report, report_from_errors, run_hedge, HedgeLedger, HedgeRoute,
    HedgeRun, HedgeSpec, Histogram, LedgerRow, PathMeasure, ReplicationReport,
};
