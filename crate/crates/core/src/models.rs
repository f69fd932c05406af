//! The damped-oscillator quadrature model and the qubit polarization model,
//! in their physical and risk-neutral forms.
//!
//! Oscillator quadratures follow an Ornstein-Uhlenbeck law
//! `dx = -(gamma/2) x dt + sqrt(2D) dW` with `D = gamma * n / 2`; hedging
//! replaces the damping drift by the rate drift `r x` and leaves the noise
//! alone. Qubit polarization carries the measurement drift
//! `kappa * 2z(1 - z^2)` and noise amplitude `sqrt(kappa) (1 - z^2)`, with
//! `kappa = phi * theta^2`, and lives on `[-1, 1]` with absorbing ends.

use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundaryPolicy, Component, Dynamics};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::quadrature;

/// Mean bath occupation `1 / (e^x - 1)` for `x = hbar*omega / (k_B T)`.
pub fn thermal_occupation(hbar_omega_over_kt: f64) -> Result<f64> {
    if !(hbar_omega_over_kt > 0.0) || !hbar_omega_over_kt.is_finite() {
        return Err(Error::Domain(format!(
            "hbar*omega/kT must be positive and finite, got {hbar_omega_over_kt}"
        )));
    }
    Ok(1.0 / hbar_omega_over_kt.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoParams {
    gamma: f64,
    n_thermal: f64,
    omega: f64,
}

impl ShoParams {
    pub fn new(gamma: f64, n_thermal: f64, omega: f64) -> Result<Self> {
        ensure_positive("gamma", gamma)?;
        ensure_non_negative("n_thermal", n_thermal)?;
        if !omega.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            gamma,
            n_thermal,
            omega,
        })
    }

    /// Parameters with the occupation fixed by the bath temperature.
    pub fn thermal(gamma: f64, omega: f64, hbar_omega_over_kt: f64) -> Result<Self> {
        Self::new(gamma, thermal_occupation(hbar_omega_over_kt)?, omega)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_thermal(&self) -> f64 {
        self.n_thermal
    }

    /// Kept for bookkeeping; the rotating term does not enter the dynamics.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn diffusion_constant(&self) -> f64 {
        0.5 * self.gamma * self.n_thermal
    }

    /// Noise amplitude `sqrt(2D)` of each quadrature.
    pub fn noise_amplitude(&self) -> f64 {
        (2.0 * self.diffusion_constant()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    phi_flux: f64,
    theta_shift: f64,
}

impl QubitParams {
    pub fn new(phi_flux: f64, theta_shift: f64) -> Result<Self> {
        ensure_positive("phi_flux", phi_flux)?;
        ensure_positive("theta_shift", theta_shift)?;
        Ok(Self {
            phi_flux,
            theta_shift,
        })
    }

    /// Parameters with `phi * theta^2 = kappa`, at a per-photon shift of 1e-6.
    pub fn with_rate(kappa: f64) -> Result<Self> {
        ensure_positive("kappa", kappa)?;
        let theta = 1e-6;
        Self::new(kappa / (theta * theta), theta)
    }

    pub fn phi_flux(&self) -> f64 {
        self.phi_flux
    }

    pub fn theta_shift(&self) -> f64 {
        self.theta_shift
    }

    /// Measurement rate `phi * theta^2`.
    pub fn kappa(&self) -> f64 {
        self.phi_flux * self.theta_shift * self.theta_shift
    }

    /// Fokker-Planck diffusion coefficient `kappa (1 - z^2)^2 / 2`.
    pub fn diffusion_coefficient(&self, z: f64) -> f64 {
        let w = 1.0 - z * z;
        0.5 * self.kappa() * w * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskNeutralSpec {
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
}

impl RiskNeutralSpec {
    pub fn new(r: f64, maturity: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: "must be finite".into(),
            });
        }
        ensure_positive("T", maturity)?;
        Ok(Self { r, maturity })
    }

    /// `e^{-r (T - t)}`.
    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * (self.maturity - t)).exp()
    }
}

/// Independent Gaussian components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianSpec {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionMode {
    Physical,
    RiskNeutral { r: f64 },
}

pub fn sho_physical_dynamics(p: &ShoParams) -> Dynamics {
    let half_gamma = 0.5 * p.gamma();
    let amp = p.noise_amplitude();
    let c = Component::new(move |x| -half_gamma * x, move |_| amp);
    Dynamics::new(
        vec![c.clone(), c],
        format!(
            "sho physical gamma={} n={} omega={}",
            p.gamma(),
            p.n_thermal(),
            p.omega()
        ),
    )
    .expect("two components")
}

pub fn sho_risk_neutral_dynamics(p: &ShoParams, rn: &RiskNeutralSpec) -> Dynamics {
    let r = rn.r;
    let amp = p.noise_amplitude();
    let c = Component::new(move |x| r * x, move |_| amp);
    Dynamics::new(
        vec![c.clone(), c],
        format!(
            "sho risk-neutral gamma={} n={} r={}",
            p.gamma(),
            p.n_thermal(),
            r
        ),
    )
    .expect("two components")
}

/// Gaussian law of the quadratures `elapsed` time units after starting at `x0`.
pub fn sho_transition_density(
    p: &ShoParams,
    mode: TransitionMode,
    x0: &[f64],
    elapsed: f64,
) -> Result<GaussianSpec> {
    if !(elapsed >= 0.0) {
        return Err(Error::Domain(format!(
            "elapsed time must be >= 0, got {elapsed}"
        )));
    }
    let (growth, variance) = match mode {
        TransitionMode::Physical => (
            (-0.5 * p.gamma() * elapsed).exp(),
            -p.n_thermal() * (-p.gamma() * elapsed).exp_m1(),
        ),
        TransitionMode::RiskNeutral { r } => {
            let two_d = 2.0 * p.diffusion_constant();
            let v = if (r * elapsed).abs() < 1e-8 {
                two_d * elapsed
            } else {
                two_d * (2.0 * r * elapsed).exp_m1() / (2.0 * r)
            };
            ((r * elapsed).exp(), v)
        }
    };
    Ok(GaussianSpec {
        mean: x0.iter().map(|x| x * growth).collect(),
        variance: vec![variance; x0.len()],
    })
}

fn qubit_component(drift: impl Fn(f64) -> f64 + Send + Sync + 'static, kappa: f64) -> Component {
    let amp = kappa.sqrt();
    Component::new(drift, move |z: f64| amp * (1.0 - z * z)).with_bounds(
        -1.0,
        1.0,
        BoundaryPolicy::ClampAbsorb,
    )
}

pub fn qubit_physical_dynamics(p: &QubitParams) -> Dynamics {
    let kappa = p.kappa();
    Dynamics::new(
        vec![qubit_component(
            move |z| kappa * 2.0 * z * (1.0 - z * z),
            kappa,
        )],
        format!("qubit physical kappa={kappa}"),
    )
    .expect("one component")
}

pub fn qubit_risk_neutral_dynamics(p: &QubitParams, rn: &RiskNeutralSpec) -> Dynamics {
    let kappa = p.kappa();
    let r = rn.r;
    Dynamics::new(
        vec![qubit_component(move |z| r * z, kappa)],
        format!("qubit risk-neutral kappa={kappa} r={r}"),
    )
    .expect("one component")
}

/// Probability that a 1D diffusion started at `x0` reaches the upper end of
/// `[lower, upper]` before the lower one, from its scale function
/// `S'(x) = exp(-int 2V/b^2)`. Both nested integrals are done by adaptive
/// quadrature.
pub fn hitting_probability_upper(
    component: &Component,
    lower: f64,
    upper: f64,
    x0: f64,
) -> Result<f64> {
    if !(lower < x0 && x0 < upper) {
        return Err(Error::Domain(format!(
            "start {x0} must lie strictly inside ({lower}, {upper})"
        )));
    }
    let reference = 0.5 * (lower + upper);
    let ratio = |u: f64| {
        let b = component.amplitude(u);
        2.0 * component.drift(u) / (b * b)
    };
    let mut inner_error = None;
    let mut scale_density = |x: f64| {
        match quadrature::integrate(ratio, reference, x, 1e-13, 1e-11) {
            Ok(phi) => (-phi).exp(),
            Err(e) => {
                inner_error.get_or_insert(e);
                0.0
            }
        }
    };
    let below = quadrature::integrate(&mut scale_density, lower, x0, 1e-13, 1e-10)?;
    let above = quadrature::integrate(&mut scale_density, x0, upper, 1e-13, 1e-10)?;
    if let Some(e) = inner_error {
        return Err(e);
    }
    let total = below + above;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Quadrature(format!(
            "scale function is not integrable over [{lower}, {upper}] (total {total})"
        )));
    }
    Ok(below / total)
}

/// Probability of collapse to `z = +1` from `z0` under the physical qubit
/// dynamics. The measurement rate cancels, so none is taken.
pub fn qubit_absorption_probability(z0: f64) -> Result<f64> {
    if !(z0.abs() < 1.0) {
        return Err(Error::Domain(format!("|z0| must be < 1, got {z0}")));
    }
    let unit = qubit_physical_dynamics(&QubitParams::with_rate(1.0)?);
    hitting_probability_upper(unit.component(0), -1.0, 1.0, z0)
}

/// Model choice shared by the valuation and hedging layers. A state vector
/// of any length is allowed: each component evolves independently under the
/// model's scalar law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Sho(ShoParams),
    Qubit(QubitParams),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Sho(_) => "sho",
            Model::Qubit(_) => "qubit",
        }
    }

    pub fn physical_dynamics(&self, dimension: usize) -> Result<Dynamics> {
        match self {
            Model::Sho(p) => sho_physical_dynamics(p),
            Model::Qubit(p) => qubit_physical_dynamics(p),
        }
        .with_dimension(dimension)
    }

    pub fn risk_neutral_dynamics(&self, rn: &RiskNeutralSpec, dimension: usize) -> Result<Dynamics> {
        match self {
            Model::Sho(p) => sho_risk_neutral_dynamics(p, rn),
            Model::Qubit(p) => qubit_risk_neutral_dynamics(p, rn),
        }
        .with_dimension(dimension)
    }
}
