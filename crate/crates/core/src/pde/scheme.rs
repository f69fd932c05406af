//! Tridiagonal axis operators and the theta-scheme step.

use crate::dynamics::Component;
use crate::pde::Axis;

/// Tridiagonal matrix: row `i` is `lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1]`.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// `B(w) = w / (e^w - 1)`, the Bernoulli function of exponential fitting.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-10 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// How the forward operator closes the outermost faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ForwardEdge {
    ZeroFlux,
    ZeroValue,
}

/// Flux through a face at `xf` between densities at `xl` and `xr`, written
/// as `alpha * P_left - beta * P_right`.
fn face_coefficients(c: &Component, xl: f64, xf: f64, xr: f64, h: f64) -> (f64, f64) {
    let v = c.drift(xf);
    let d_face = c.diffusion_coefficient(xf);
    let w = if d_face > 0.0 { v * h / d_face } else { f64::INFINITY };
    if !w.is_finite() || w.abs() > 600.0 {
        // pure advection limit: upwind
        return (v.max(0.0), -v.min(0.0));
    }
    let dl = c.diffusion_coefficient(xl);
    let dr = c.diffusion_coefficient(xr);
    (bernoulli(-w) * dl / h, bernoulli(w) * dr / h)
}

/// Conservative forward Fokker-Planck operator `-dF/dx`, `F = V P - d(D P)/dx`.
pub(crate) fn forward_operator(c: &Component, axis: &Axis, edges: [ForwardEdge; 2]) -> Tridiagonal {
    let n = axis.cells;
    let h = axis.spacing();
    let mut op = Tridiagonal::zeros(n);
    // interior faces 1..n-1 sit between nodes f-1 and f
    for f in 1..n {
        let (alpha, beta) = face_coefficients(c, axis.node(f - 1), axis.face(f), axis.node(f), h);
        // flux leaves node f-1 and enters node f
        op.diag[f - 1] -= alpha / h;
        op.upper[f - 1] += beta / h;
        op.lower[f] += alpha / h;
        op.diag[f] -= beta / h;
    }
    if edges[0] == ForwardEdge::ZeroValue {
        let ghost = axis.lower - 0.5 * h;
        let (_, beta) = face_coefficients(c, ghost, axis.face(0), axis.node(0), h);
        op.diag[0] -= beta / h;
    }
    if edges[1] == ForwardEdge::ZeroValue {
        let ghost = axis.upper + 0.5 * h;
        let (alpha, _) = face_coefficients(c, axis.node(n - 1), axis.face(n), ghost, h);
        op.diag[n - 1] -= alpha / h;
    }
    op
}

/// How the backward generator treats the outermost nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BackwardEdge {
    /// Truncated unbounded axis: the value is taken to be locally linear,
    /// so only a one-sided drift term remains.
    Linear,
    /// Degenerate boundary of a bounded axis: no flux through the edge and
    /// no drift out of the domain.
    Natural,
}

/// Risk-neutral generator `V d/dx + D d^2/dx^2`, central where that keeps the
/// matrix monotone and upwinded otherwise. Every row sums to zero.
pub(crate) fn backward_operator(c: &Component, axis: &Axis, edge: BackwardEdge) -> Tridiagonal {
    let n = axis.cells;
    let h = axis.spacing();
    let h2 = h * h;
    let mut op = Tridiagonal::zeros(n);
    for i in 0..n {
        let x = axis.node(i);
        let v = c.drift(x);
        let d = c.diffusion_coefficient(x);
        let at_lower = i == 0;
        let at_upper = i == n - 1;
        if !(at_lower || at_upper) {
            let (mut lo, mut up) = (d / h2, d / h2);
            if d / h2 >= v.abs() / (2.0 * h) {
                lo -= v / (2.0 * h);
                up += v / (2.0 * h);
            } else if v > 0.0 {
                up += v / h;
            } else {
                lo -= v / h;
            }
            op.lower[i] = lo;
            op.upper[i] = up;
            op.diag[i] = -(lo + up);
            continue;
        }
        match edge {
            BackwardEdge::Linear => {
                if at_lower {
                    op.upper[i] = v / h;
                    op.diag[i] = -v / h;
                } else {
                    op.lower[i] = -v / h;
                    op.diag[i] = v / h;
                }
            }
            BackwardEdge::Natural => {
                if at_lower {
                    let up = d / h2 + v.max(0.0) / h;
                    op.upper[i] = up;
                    op.diag[i] = -up;
                } else {
                    let lo = d / h2 - v.min(0.0) / h;
                    op.lower[i] = lo;
                    op.diag[i] = -lo;
                }
            }
        }
    }
    op
}

/// One theta step `(I - theta dt A) u' = (I + (1 - theta) dt A) u` along one
/// axis, with the implicit factorisation computed once.
#[derive(Debug, Clone)]
pub(crate) struct ThetaStep {
    explicit: Tridiagonal,
    implicit_lower: Vec<f64>,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThetaStep {
    pub fn new(op: &Tridiagonal, dt: f64, theta: f64) -> Self {
        let n = op.len();
        let ex = 1.0 - theta;
        let explicit = Tridiagonal {
            lower: op.lower.iter().map(|a| ex * dt * a).collect(),
            diag: op.diag.iter().map(|a| 1.0 + ex * dt * a).collect(),
            upper: op.upper.iter().map(|a| ex * dt * a).collect(),
        };
        let a: Vec<f64> = op.lower.iter().map(|x| -theta * dt * x).collect();
        let b: Vec<f64> = op.diag.iter().map(|x| 1.0 - theta * dt * x).collect();
        let c: Vec<f64> = op.upper.iter().map(|x| -theta * dt * x).collect();
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        inv_pivot[0] = 1.0 / b[0];
        c_prime[0] = c[0] * inv_pivot[0];
        for i in 1..n {
            let m = b[i] - a[i] * c_prime[i - 1];
            inv_pivot[i] = 1.0 / m;
            c_prime[i] = c[i] * inv_pivot[i];
        }
        Self {
            explicit,
            implicit_lower: a,
            c_prime,
            inv_pivot,
        }
    }

    /// Applies the step to every line along the axis. The data are laid out
    /// as `outer x n x inner`, the axis being the middle index.
    pub fn apply(&self, data: &mut [f64], outer: usize, inner: usize, scratch: &mut Vec<f64>) {
        let n = self.c_prime.len();
        assert_eq!(data.len(), outer * n * inner);
        scratch.resize(n * inner, 0.0);
        let e = &self.explicit;
        if inner == 1 {
            for line in data.chunks_exact_mut(n) {
                self.apply_line(line, scratch);
            }
            return;
        }
        for o in 0..outer {
            let block = &mut data[o * n * inner..(o + 1) * n * inner];
            // explicit half
            for i in 0..n {
                let row = &mut scratch[i * inner..(i + 1) * inner];
                let d = e.diag[i];
                for (r, c) in row.iter_mut().zip(&block[i * inner..(i + 1) * inner]) {
                    *r = d * c;
                }
                if i > 0 {
                    let l = e.lower[i];
                    for (r, c) in row.iter_mut().zip(&block[(i - 1) * inner..i * inner]) {
                        *r += l * c;
                    }
                }
                if i + 1 < n {
                    let u = e.upper[i];
                    for (r, c) in row.iter_mut().zip(&block[(i + 1) * inner..(i + 2) * inner]) {
                        *r += u * c;
                    }
                }
            }
            // forward elimination
            for j in 0..inner {
                scratch[j] *= self.inv_pivot[0];
            }
            for i in 1..n {
                let a = self.implicit_lower[i];
                let p = self.inv_pivot[i];
                let (prev, cur) = scratch.split_at_mut(i * inner);
                let prev = &prev[(i - 1) * inner..];
                for (c, q) in cur[..inner].iter_mut().zip(prev) {
                    *c = (*c - a * q) * p;
                }
            }
            // back substitution
            block[(n - 1) * inner..].copy_from_slice(&scratch[(n - 1) * inner..n * inner]);
            for i in (0..n - 1).rev() {
                let cp = self.c_prime[i];
                let (head, tail) = block.split_at_mut((i + 1) * inner);
                let rhs = &scratch[i * inner..(i + 1) * inner];
                for ((b, nx), r) in head[i * inner..].iter_mut().zip(&tail[..inner]).zip(rhs) {
                    *b = r - cp * nx;
                }
            }
        }
    }

    /// The same step for one contiguous line.
    fn apply_line(&self, line: &mut [f64], scratch: &mut [f64]) {
        let n = line.len();
        let e = &self.explicit;
        let rhs = &mut scratch[..n];
        rhs[0] = e.diag[0] * line[0] + e.upper[0] * line[1];
        for i in 1..n - 1 {
            rhs[i] = e.lower[i] * line[i - 1] + e.diag[i] * line[i] + e.upper[i] * line[i + 1];
        }
        rhs[n - 1] = e.lower[n - 1] * line[n - 2] + e.diag[n - 1] * line[n - 1];
        let mut prev = rhs[0] * self.inv_pivot[0];
        rhs[0] = prev;
        for i in 1..n {
            prev = (rhs[i] - self.implicit_lower[i] * prev) * self.inv_pivot[i];
            rhs[i] = prev;
        }
        let mut next = rhs[n - 1];
        line[n - 1] = next;
        for i in (0..n - 1).rev() {
            next = rhs[i] - self.c_prime[i] * next;
            line[i] = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_columns_sum_to_zero_with_zero_flux() {
        let c = Component::new(|x| -0.5 * x, |_| 1.0);
        let axis = Axis::new(-6.0, 6.0, 40).unwrap();
        let op = forward_operator(&c, &axis, [ForwardEdge::ZeroFlux; 2]);
        for j in 0..40 {
            let mut s = op.diag[j];
            if j > 0 {
                s += op.upper[j - 1];
            }
            if j + 1 < 40 {
                s += op.lower[j + 1];
            }
            assert!(s.abs() < 1e-12, "column {j}: {s}");
        }
    }

    #[test]
    fn backward_rows_sum_to_zero() {
        let c = Component::new(|x| 0.05 * x, |x: f64| 1.0 - x * x);
        let axis = Axis::new(-1.0, 1.0, 64).unwrap();
        for edge in [BackwardEdge::Linear, BackwardEdge::Natural] {
            let op = backward_operator(&c, &axis, edge);
            for i in 0..64 {
                assert!((op.lower[i] + op.diag[i] + op.upper[i]).abs() < 1e-9);
                assert!(op.lower[i] >= 0.0 || edge == BackwardEdge::Linear);
            }
        }
    }

    #[test]
    fn bernoulli_limits() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(2.0) - 2.0 / (2f64.exp() - 1.0)).abs() < 1e-15);
        assert!((bernoulli(-2.0) - bernoulli(2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn theta_step_solves_the_implicit_system() {
        let c = Component::new(|x| 0.3 * x, |_| 0.8);
        let axis = Axis::new(-3.0, 3.0, 20).unwrap();
        let op = backward_operator(&c, &axis, BackwardEdge::Linear);
        let dt = 0.01;
        let step = ThetaStep::new(&op, dt, 0.5);
        let u0: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut u = u0.clone();
        step.apply(&mut u, 1, 1, &mut Vec::new());
        let mul = |v: &[f64], s: f64| -> Vec<f64> {
            (0..20)
                .map(|i| {
                    let mut acc = op.diag[i] * v[i];
                    if i > 0 {
                        acc += op.lower[i] * v[i - 1];
                    }
                    if i < 19 {
                        acc += op.upper[i] * v[i + 1];
                    }
                    v[i] + s * acc
                })
                .collect()
        };
        // the strided batch agrees with the single-line path
        let mut batch: Vec<f64> = u0.iter().flat_map(|v| [*v, 2.0 * v, -v]).collect();
        step.apply(&mut batch, 1, 3, &mut Vec::new());
        for i in 0..20 {
            assert!((batch[3 * i] - u[i]).abs() < 1e-15);
            assert!((batch[3 * i + 1] - 2.0 * u[i]).abs() < 1e-14);
            assert!((batch[3 * i + 2] + u[i]).abs() < 1e-15);
        }
        let lhs = mul(&u, -0.5 * dt);
        let rhs = mul(&u0, 0.5 * dt);
        for i in 0..20 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-13);
        }
    }
}
