use super::{check_before_maturity, normal_pdf, Payoff, Route, ValuationResult};
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::models::RiskNeutralSpec;
use crate::schedule::TimeSchedule;
use crate::sde::{simulate_ensemble_recorded, Record};

pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Largest Euler-Maruyama step.
    pub max_dt: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            master_seed: 0,
            max_dt: 1e-3,
        }
    }
}

/// Discounted sample mean of the payoff over risk-neutral paths from
/// `(state, t)`. Delta payoffs are read off a product Gaussian kernel density
/// estimate with per-axis bandwidth `sd_i * n^{-1/5}`.
pub fn value_mc(
    dyn_rn: &Dynamics,
    rn: &RiskNeutralSpec,
    payoff: &Payoff,
    state: &[f64],
    t: f64,
    opts: &McOptions,
) -> Result<ValuationResult> {
    let mut out = value_mc_many(dyn_rn, rn, std::slice::from_ref(payoff), state, t, opts)?;
    Ok(out.remove(0))
}

/// [`value_mc`] for several payoffs over one ensemble.
pub fn value_mc_many(
    dyn_rn: &Dynamics,
    rn: &RiskNeutralSpec,
    payoffs: &[Payoff],
    state: &[f64],
    t: f64,
    opts: &McOptions,
) -> Result<Vec<ValuationResult>> {
    check_before_maturity(rn, t)?;
    for payoff in payoffs {
        payoff.validate(state.len())?;
    }
    if opts.n_paths < MIN_PATHS {
        return Err(Error::TooFewPaths {
            n_paths: opts.n_paths,
            min: MIN_PATHS,
        });
    }
    let schedule = TimeSchedule::with_max_dt(t, rn.maturity, opts.max_dt)?;
    let ensemble = simulate_ensemble_recorded(
        dyn_rn,
        state,
        &schedule,
        opts.n_paths,
        opts.master_seed,
        &Record::Terminal,
    )?;
    let disc = rn.discount(t);
    let mut out = Vec::with_capacity(payoffs.len());
    for payoff in payoffs {
        let samples: Vec<f64> = match payoff {
            Payoff::Delta { points } => {
                let bandwidth =
                    kde_bandwidths(ensemble.terminal_states(), state.len(), opts.n_paths)?;
                ensemble
                    .terminal_states()
                    .map(|s| {
                        s.iter()
                            .zip(points)
                            .zip(&bandwidth)
                            .map(|((&x, &p), &b)| normal_pdf((p - x) / b) / b)
                            .product()
                    })
                    .collect()
            }
            _ => ensemble
                .terminal_states()
                .map(|s| payoff.terminal_value(s).expect("pointwise payoff"))
                .collect(),
        };
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        out.push(ValuationResult::new(
            disc * mean,
            disc * (var / n).sqrt(),
            Route::MonteCarlo,
            dyn_rn.description(),
            payoff,
            state,
            t,
            rn,
        ));
    }
    Ok(out)
}

fn kde_bandwidths<'a>(
    states: impl Iterator<Item = &'a [f64]>,
    dim: usize,
    n_paths: usize,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for s in states {
        for i in 0..dim {
            sum[i] += s[i];
            sum_sq[i] += s[i] * s[i];
        }
    }
    let n = n_paths as f64;
    let factor = n.powf(-0.2);
    (0..dim)
        .map(|i| {
            let mean = sum[i] / n;
            let var = ((sum_sq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
            let b = var.sqrt() * factor;
            if b > 0.0 {
                Ok(b)
            } else {
                Err(Error::Domain(format!(
                    "terminal states have no spread along axis {i}; a density estimate is undefined"
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sho_risk_neutral_dynamics, ShoParams};
    use crate::valuation::Direction;

    fn setup(r: f64) -> (Dynamics, RiskNeutralSpec) {
        let p = ShoParams::new(1.0, 1.0, 1.0).unwrap();
        let rn = RiskNeutralSpec::new(r, 1.0).unwrap();
        (sho_risk_neutral_dynamics(&p, &rn).with_dimension(1).unwrap(), rn)
    }

    fn opts(n_paths: usize) -> McOptions {
        McOptions {
            n_paths,
            master_seed: 42,
            max_dt: 0.01,
        }
    }

    #[test]
    fn sure_event_is_the_discount_factor() {
        let (d, rn) = setup(0.05);
        let step = Payoff::Step {
            thresholds: vec![Some(-20.0)],
            direction: Direction::Above,
        };
        let v = value_mc(&d, &rn, &step, &[0.0], 0.0, &opts(2000)).unwrap();
        assert_eq!(v.value, (-0.05f64).exp());
        assert_eq!(v.standard_error, 0.0);
    }

    #[test]
    fn symmetric_step_is_one_half() {
        let (d, rn) = setup(0.0);
        let step = Payoff::Step {
            thresholds: vec![Some(0.3)],
            direction: Direction::Above,
        };
        let v = value_mc(&d, &rn, &step, &[0.3], 0.0, &opts(20_000)).unwrap();
        assert!((v.value - 0.5).abs() < 3.0 * v.standard_error, "{v:?}");
    }

    #[test]
    fn refuses_tiny_ensembles() {
        let (d, rn) = setup(0.0);
        let c = Payoff::Constant { value: 1.0 };
        assert_eq!(
            value_mc(&d, &rn, &c, &[0.0], 0.0, &opts(99)),
            Err(Error::TooFewPaths { n_paths: 99, min: 100 })
        );
    }
}
