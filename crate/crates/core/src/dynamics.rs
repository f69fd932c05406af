//! Diagonal Ito dynamics `ds_i = V_i(s_i) dt + b_i(s_i) dW_i`.
//!
//! Components are independent: each has its own scalar drift and noise
//! amplitude, and the Wiener processes of different components are
//! uncorrelated. Both models in this crate have that structure, and the
//! PDE solvers rely on it (no mixed derivatives).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Bounds are informational only.
    None,
    /// A component that leaves its interval is set to the violated bound and
    /// the whole path is frozen from then on.
    ClampAbsorb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub lower: f64,
    pub upper: f64,
    pub policy: BoundaryPolicy,
}

impl StateBounds {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

#[derive(Clone)]
pub struct Component {
    drift: ScalarFn,
    amplitude: ScalarFn,
    bounds: Option<StateBounds>,
}

impl Component {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        amplitude: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Arc::new(drift),
            amplitude: Arc::new(amplitude),
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64, policy: BoundaryPolicy) -> Self {
        self.bounds = Some(StateBounds {
            lower,
            upper,
            policy,
        });
        self
    }

    #[inline]
    pub fn drift(&self, s: f64) -> f64 {
        (self.drift)(s)
    }

    /// Coefficient of `dW` in the SDE.
    #[inline]
    pub fn amplitude(&self, s: f64) -> f64 {
        (self.amplitude)(s)
    }

    /// Fokker-Planck diffusion coefficient `b(s)^2 / 2`.
    #[inline]
    pub fn diffusion_coefficient(&self, s: f64) -> f64 {
        let b = self.amplitude(s);
        0.5 * b * b
    }

    pub fn bounds(&self) -> Option<StateBounds> {
        self.bounds
    }

    /// The drift and amplitude closures, for loops that call them many times.
    pub(crate) fn functions(&self) -> (&(dyn Fn(f64) -> f64 + Send + Sync), &(dyn Fn(f64) -> f64 + Send + Sync)) {
        (&*self.drift, &*self.amplitude)
    }
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Component")
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct Dynamics {
    components: Vec<Component>,
    description: String,
}

impl Dynamics {
    pub fn new(components: Vec<Component>, description: impl Into<String>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter {
                name: "dimension",
                reason: "dynamics need at least one component".into(),
            });
        }
        Ok(Self {
            components,
            description: description.into(),
        })
    }

    /// Zero drift and zero noise in `dim` components.
    pub fn frozen(dim: usize) -> Self {
        Self::new(
            vec![Component::new(|_| 0.0, |_| 0.0); dim.max(1)],
            "frozen",
        )
        .expect("non-empty")
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Same per-component law, cycled to `dim` components.
    pub fn with_dimension(&self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dimension",
                reason: "must be positive".into(),
            });
        }
        let components = (0..dim)
            .map(|i| self.components[i % self.components.len()].clone())
            .collect();
        Self::new(components, self.description.clone())
    }

    pub fn drift(&self, state: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(state)
            .map(|(c, &s)| c.drift(s))
            .collect()
    }

    pub fn diffusion_amplitude(&self, state: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(state)
            .map(|(c, &s)| c.amplitude(s))
            .collect()
    }

    pub fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: state.len(),
            });
        }
        for (i, (c, &s)) in self.components.iter().zip(state).enumerate() {
            if !s.is_finite() {
                return Err(Error::Domain(format!("component {i} of the state is not finite")));
            }
            if let Some(b) = c.bounds {
                if !b.contains(s) {
                    return Err(Error::Domain(format!(
                        "component {i} = {s} lies outside [{}, {}]",
                        b.lower, b.upper
                    )));
                }
            }
        }
        Ok(())
    }
}
