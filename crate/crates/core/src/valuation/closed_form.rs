use serde::{Deserialize, Serialize};

use super::pde_route::{value_pde, PdeOptions};
use super::{
    check_before_maturity, normal_cdf, normal_pdf, Direction, Payoff, Route, ValuationResult,
};
use crate::error::{Error, Result};
use crate::models::{sho_transition_density, Model, QubitParams, RiskNeutralSpec, ShoParams, TransitionMode};

/// `E[payoff(X)]` for independent Gaussian coordinates.
pub(crate) fn gaussian_expectation(payoff: &Payoff, mean: &[f64], variance: &[f64]) -> Result<f64> {
    let coords = mean.iter().zip(variance);
    let value = match payoff {
        Payoff::Delta { points } => {
            if variance.iter().any(|v| *v <= 0.0) {
                return Err(Error::Domain(
                    "a delta payoff has no density once the variance vanishes".into(),
                ));
            }
            coords
                .zip(points)
                .map(|((&m, &v), &x)| {
                    let sd = v.sqrt();
                    normal_pdf((x - m) / sd) / sd
                })
                .product()
        }
        Payoff::Step {
            thresholds,
            direction,
        } => coords
            .zip(thresholds)
            .filter_map(|((&m, &v), a)| a.map(|a| step_probability(m, v, a, *direction)))
            .product(),
        Payoff::Call { strikes } => coords
            .zip(strikes)
            .filter_map(|((&m, &v), k)| k.map(|k| call_expectation(m, v, k)))
            .sum(),
        Payoff::Constant { value } => *value,
    };
    Ok(value)
}

fn step_probability(mean: f64, variance: f64, a: f64, direction: Direction) -> f64 {
    let sign = match direction {
        Direction::Above => 1.0,
        Direction::Below => -1.0,
    };
    if variance <= 0.0 {
        let gap = sign * (mean - a);
        return if gap > 0.0 {
            1.0
        } else if gap < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    normal_cdf(sign * (mean - a) / variance.sqrt())
}

/// `E[(X - k)^+]` for `X ~ N(mean, variance)`.
fn call_expectation(mean: f64, variance: f64, k: f64) -> f64 {
    if variance <= 0.0 {
        return (mean - k).max(0.0);
    }
    let sd = variance.sqrt();
    let d = (mean - k) / sd;
    (mean - k) * normal_cdf(d) + sd * normal_pdf(d)
}

/// Discounted Gaussian expectation of the payoff under the risk-neutral
/// oscillator transition law from `(state, t)` to `T`.
pub fn value_closed_form_sho(
    p: &ShoParams,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    state: &[f64],
    t: f64,
) -> Result<ValuationResult> {
    check_before_maturity(rn, t)?;
    payoff.validate(state.len())?;
    let law = sho_transition_density(p, TransitionMode::RiskNeutral { r: rn.r }, state, rn.maturity - t)?;
    let g = gaussian_expectation(payoff, &law.mean, &law.variance)?;
    Ok(ValuationResult::new(
        rn.discount(t) * g,
        0.0,
        Route::ClosedForm,
        "sho",
        payoff,
        state,
        t,
        rn,
    ))
}

/// The frozen-diffusion Gaussian approximation next to the PDE value it
/// approximates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxComparison {
    pub approximation: ValuationResult,
    pub pde: ValuationResult,
    /// `approximation - pde`.
    pub discrepancy: f64,
}

/// Qubit value with the diffusion frozen at its initial value
/// `D = kappa (1 - z0^2)^2 / 2`, so that the drift-free coordinate
/// `e^{-rt} z` is Gaussian. Reported together with the PDE value.
pub fn qubit_gaussian_approx_value(
    p: &QubitParams,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    z0: &[f64],
    t: f64,
    pde: &PdeOptions,
) -> Result<ApproxComparison> {
    check_before_maturity(rn, t)?;
    payoff.validate(z0.len())?;
    if let Some(z) = z0.iter().find(|z| !(z.abs() < 1.0)) {
        return Err(Error::Domain(format!("|z0| must be < 1, got {z}")));
    }
    let tau = rn.maturity - t;
    let r = rn.r;
    let growth = (r * tau).exp();
    let spread = if (r * tau).abs() < 1e-8 {
        tau
    } else {
        (2.0 * r * tau).exp_m1() / (2.0 * r)
    };
    let mean: Vec<f64> = z0.iter().map(|z| z * growth).collect();
    let variance: Vec<f64> = z0
        .iter()
        .map(|&z| 2.0 * p.diffusion_coefficient(z) * spread)
        .collect();
    let g = gaussian_expectation(payoff, &mean, &variance)?;
    let approximation = ValuationResult::new(
        rn.discount(t) * g,
        0.0,
        Route::GaussianApproximation,
        "qubit",
        payoff,
        z0,
        t,
        rn,
    );
    let pde = value_pde(&Model::Qubit(*p), rn, payoff, z0, t, pde)?;
    Ok(ApproxComparison {
        discrepancy: approximation.value - pde.value,
        approximation,
        pde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sho() -> ShoParams {
        ShoParams::new(1.0, 1.0, 1.0).unwrap()
    }

    fn step_above(a: f64) -> Payoff {
        Payoff::Step {
            thresholds: vec![Some(a)],
            direction: Direction::Above,
        }
    }

    #[test]
    fn step_at_the_mean_is_one_half() {
        let rn = RiskNeutralSpec::new(0.0, 2.0).unwrap();
        let v = value_closed_form_sho(&sho(), &rn, &step_above(0.7), &[0.7], 0.5).unwrap();
        assert_eq!(v.value, 0.5);
        assert_eq!(v.standard_error, 0.0);
    }

    #[test]
    fn delta_value_matches_discounted_kernel() {
        let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
        let v = value_closed_form_sho(&sho(), &rn, &Payoff::Delta { points: vec![0.0] }, &[1.0], 0.0)
            .unwrap();
        // variance 2D (e^{2r} - 1) / (2r) with D = 1/2
        let var = (0.1f64.exp() - 1.0) / 0.1;
        let m = 0.05f64.exp();
        let kernel = (-m * m / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        assert!((v.value - (-0.05f64).exp() * kernel).abs() < 1e-15);
    }

    #[test]
    fn delta_kernel_sharpens_near_maturity() {
        let rn = RiskNeutralSpec::new(0.0, 1.0).unwrap();
        let delta = Payoff::Delta { points: vec![0.3] };
        let near = |x: f64, t: f64| value_closed_form_sho(&sho(), &rn, &delta, &[x], t).unwrap().value;
        assert!(near(0.3, 0.9999) > near(0.3, 0.99) && near(0.3, 0.99) > near(0.3, 0.9));
        assert!(near(0.8, 0.9999) < 1e-100);
    }

    #[test]
    fn rejects_valuation_at_or_after_maturity() {
        let rn = RiskNeutralSpec::new(0.0, 1.0).unwrap();
        for t in [1.0, 1.5] {
            assert!(matches!(
                value_closed_form_sho(&sho(), &rn, &step_above(0.0), &[0.0], t),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn call_limits() {
        // deep in the money the call is the forward minus the discounted strike
        let rn = RiskNeutralSpec::new(0.05, 1.0).unwrap();
        let call = Payoff::Call { strikes: vec![Some(-7.0)] };
        let v = value_closed_form_sho(&sho(), &rn, &call, &[0.5], 0.0).unwrap().value;
        assert!((v - (0.5 + 7.0 * (-0.05f64).exp())).abs() < 1e-9);
        assert_eq!(call_expectation(1.0, 0.0, 0.5), 0.5);
        // put-call parity of the Gaussian integral: E(X-k)^+ - E(k-X)^+ = m - k
        let (m, v, k) = (0.3, 0.7, 0.9);
        let put = call_expectation(-m, v, -k);
        assert!((call_expectation(m, v, k) - put - (m - k)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_approximation_limits() {
        let q = QubitParams::with_rate(2.0).unwrap();
        assert_eq!(q.diffusion_coefficient(0.0), 1.0);
        let rn = RiskNeutralSpec::new(0.0, 1.0).unwrap();
        let opts = PdeOptions::default();
        let near_pole = qubit_gaussian_approx_value(&q, &rn, &step_above(0.5), &[0.999_999], 0.0, &opts)
            .unwrap();
        assert!((near_pole.approximation.value - 1.0).abs() < 1e-12);
        assert!(qubit_gaussian_approx_value(&q, &rn, &step_above(0.5), &[1.0], 0.0, &opts).is_err());
    }
}
