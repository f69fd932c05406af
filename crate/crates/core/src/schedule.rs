use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t0 + k*dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSchedule {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeSchedule {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) {
            return Err(Error::Domain("schedule bounds must be finite".into()));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "must be positive".into(),
            });
        }
        if t_end <= t0 {
            return Err(Error::Domain(format!(
                "schedule needs t_end > t0 (got t0={t0}, t_end={t_end})"
            )));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Smallest schedule on `[t0, t_end]` whose step does not exceed `max_dt`.
    pub fn with_max_dt(t0: f64, t_end: f64, max_dt: f64) -> Result<Self> {
        if !(max_dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be > 0, got {max_dt}"),
            });
        }
        let span = t_end - t0;
        // 1e-9 slack so that e.g. 1.0 / 1e-3 gives 1000 steps, not 1001
        let n = ((span / max_dt) * (1.0 - 1e-9)).ceil().max(1.0) as usize;
        Self::new(t0, t_end, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Time of step `k`, computed directly rather than by accumulation.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }
}
