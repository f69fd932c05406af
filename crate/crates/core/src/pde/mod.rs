//! Finite-difference / finite-volume solvers on cell-centred product grids.
//!
//! The forward solver evolves a probability density with conservative
//! exponentially fitted (Scharfetter-Gummel) face fluxes; the backward solver
//! evolves a value function under the risk-neutral generator. Both use a
//! theta scheme per axis; axes are advanced one after the other, which is
//! exact here because each axis operator only sees its own coordinate.

mod scheme;
mod solve;

pub use solve::{
    solve_backward_valuation, solve_forward_fp, stable_schedule, AxisBoundary, FpProblem,
    ValueForm,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 16;

/// One uniform axis with nodes at cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::Domain(format!(
                "axis needs finite bounds with upper > lower, got [{lower}, {upper}]"
            )));
        }
        if cells < MIN_CELLS {
            return Err(Error::InvalidParameter {
                name: "cells",
                reason: format!("need at least {MIN_CELLS} cells per axis, got {cells}"),
            });
        }
        Ok(Self {
            lower,
            upper,
            cells,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }

    /// Position of face `i` (face 0 is the lower edge).
    pub fn face(&self, i: usize) -> f64 {
        if i == self.cells {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.node(i)).collect()
    }
}

/// Product grid of one or two axes; values are stored with axis 0 slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Unsupported(format!(
                "grids have 1 or 2 axes, got {}",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn one(axis: Axis) -> Self {
        Self { axes: vec![axis] }
    }

    pub fn two(a: Axis, b: Axis) -> Self {
        Self { axes: vec![a, b] }
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Multi-index of flat index `idx`.
    pub fn unflatten(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        let mut rest = idx;
        for k in (0..self.axes.len()).rev() {
            out[k] = rest % self.axes[k].cells;
            rest /= self.axes[k].cells;
        }
        out
    }

    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.node(i))
            .collect()
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        state.len() == self.axes.len()
            && state
                .iter()
                .zip(&self.axes)
                .all(|(&s, a)| s >= a.lower && s <= a.upper)
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.coordinates(i))).collect()
    }

    /// Product Gaussian sampled at the nodes and rescaled to unit mass.
    pub fn gaussian_density(&self, mean: &[f64], sd: &[f64]) -> Result<Vec<f64>> {
        if mean.len() != self.dimension() || sd.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: mean.len().min(sd.len()),
            });
        }
        let mut values = self.sample(|x| {
            x.iter()
                .zip(mean.iter().zip(sd))
                .map(|(&xi, (&m, &s))| (-0.5 * ((xi - m) / s).powi(2)).exp())
                .product()
        });
        let mass: f64 = values.iter().sum::<f64>() * self.cell_volume();
        if !(mass > 0.0) {
            return Err(Error::Domain(
                "Gaussian has no mass on the grid".to_string(),
            ));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(values)
    }
}

/// Something with values on a grid.
pub trait GridValues {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
    fn time(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

/// Value function on a grid. `discounted` distinguishes the discounted value
/// `f` from the undiscounted expectation `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
    pub discounted: bool,
}

impl GridValues for DensityGrid {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn time(&self) -> f64 {
        self.time
    }
}

impl GridValues for ValueField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn time(&self) -> f64 {
        self.time
    }
}

/// Total probability `sum(P) * cell volume`.
pub fn grid_mass(density: &DensityGrid) -> f64 {
    density.values.iter().sum::<f64>() * density.grid.cell_volume()
}

/// Multilinear interpolation between the nodes surrounding `state`. Between
/// the outermost node and the domain edge the boundary pair is extended
/// linearly.
pub fn interpolate(field: &impl GridValues, state: &[f64]) -> Result<f64> {
    let grid = field.grid();
    if state.len() != grid.dimension() {
        return Err(Error::Dimension {
            expected: grid.dimension(),
            got: state.len(),
        });
    }
    if !grid.contains(state) {
        return Err(Error::Domain(format!(
            "state {state:?} lies outside the grid"
        )));
    }
    let mut base = [0usize; 2];
    let mut weight = [0.0f64; 2];
    for (k, (&s, a)) in state.iter().zip(grid.axes()).enumerate() {
        let pos = (s - a.lower) / a.spacing() - 0.5;
        let i = (pos.floor().max(0.0) as usize).min(a.cells - 2);
        base[k] = i;
        weight[k] = pos - i as f64;
    }
    let values = field.values();
    let value = match grid.dimension() {
        1 => values[base[0]] * (1.0 - weight[0]) + values[base[0] + 1] * weight[0],
        _ => {
            let n1 = grid.axis(1).cells;
            let at = |i: usize, j: usize| values[i * n1 + j];
            let (i, j) = (base[0], base[1]);
            let (wx, wy) = (weight[0], weight[1]);
            (1.0 - wx) * ((1.0 - wy) * at(i, j) + wy * at(i, j + 1))
                + wx * ((1.0 - wy) * at(i + 1, j) + wy * at(i + 1, j + 1))
        }
    };
    Ok(value)
}
