//! Independent reference solvers and brute-force enumerators.
//!
//! Everything under this module exists to validate the Monte-Carlo
//! estimators against a second, structurally different computation:
//! a Crank–Nicolson PDE solver ([`pde`]), a pathwise splitting scheme for
//! the noisy field equation ([`spde`]), and an exact binary-tree enumerator
//! for sign-flip noise ([`tree`]). By policy these share model types
//! (coefficients, grids, noise paths) with the estimators but none of
//! their numerical kernels — no regression, no weight accumulation, and a
//! hand-rolled tridiagonal solve instead of the shared linear algebra.

pub mod pde;
pub mod spde;
pub mod tree;

use crate::error::{Error, Result};

/// A function sampled on a uniform one-dimensional spatial grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub center: f64,
    pub half_width: f64,
    /// Paper time this frame belongs to.
    pub time: f64,
    /// Node values; the count is odd so the center is itself a node.
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(center: f64, half_width: f64, time: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(Error::validation(
                "grid function needs an odd node count of at least 3",
            ));
        }
        if !(half_width > 0.0) {
            return Err(Error::validation("grid half-width must be positive"));
        }
        Ok(GridFunction {
            center,
            half_width,
            time,
            values,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_nodes() - 1) as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        self.center - self.half_width + i as f64 * self.spacing()
    }

    /// Evaluates by local quadratic interpolation through the three nodes
    /// nearest to `x`. Errors outside the grid.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let left = self.center - self.half_width;
        let h = self.spacing();
        let pos = (x - left) / h;
        let n = self.n_nodes();
        if pos < -1e-9 || pos > (n - 1) as f64 + 1e-9 {
            return Err(Error::validation(format!(
                "point {x} outside grid [{}, {}]",
                left,
                self.center + self.half_width
            )));
        }
        let mid = (pos.round() as isize).clamp(1, n as isize - 2) as usize;
        // Lagrange parabola through nodes mid−1, mid, mid+1.
        let x0 = self.x_node(mid - 1);
        let x1 = self.x_node(mid);
        let x2 = self.x_node(mid + 1);
        let (y0, y1, y2) = (
            self.values[mid - 1],
            self.values[mid],
            self.values[mid + 1],
        );
        let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
        Ok(y0 * l0 + y1 * l1 + y2 * l2)
    }

    /// Two-column text dump (`x value` per row) with a header naming the
    /// time stamp and grid parameters.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# grid function: time={} center={} half_width={} nodes={}\n",
            self.time,
            self.center,
            self.half_width,
            self.n_nodes()
        ));
        out.push_str("# x value\n");
        for i in 0..self.n_nodes() {
            out.push_str(&format!("{:.12e} {:.12e}\n", self.x_node(i), self.values[i]));
        }
        out
    }
}

/// Central-difference gradient of a scalar field, one bump per component.
pub fn fd_gradient<F>(field: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::validation("finite-difference step must be positive"));
    }
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let hi = field(&probe)?;
        probe[i] = x[i] - h;
        let lo = field(&probe)?;
        probe[i] = x[i];
        grad[i] = (hi - lo) / (2.0 * h);
    }
    Ok(grad)
}

/// Classical fourth-order Runge–Kutta integration of `y' = f(s, y)` from
/// `y(0) = y0` to `y(t)`. Used as the reference for driver-only problems,
/// where the backward equation collapses to this scalar ODE.
pub fn ode_reference<F>(f: F, y0: f64, t: f64, n_steps: usize) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    assert!(n_steps > 0);
    let h = t / n_steps as f64;
    let mut y = y0;
    let mut s = 0.0;
    for _ in 0..n_steps {
        let k1 = f(s, y);
        let k2 = f(s + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(s + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(s + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grid() -> GridFunction {
        let n = 101;
        let center = 0.5;
        let hw = 2.0;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let x = center - hw + i as f64 * (2.0 * hw / (n - 1) as f64);
                x * x
            })
            .collect();
        GridFunction::new(center, hw, 1.0, values).unwrap()
    }

    #[test]
    fn quadratic_interpolation_is_exact_for_quadratics() {
        let gf = quadratic_grid();
        for &x in &[-1.3, 0.0, 0.377, 1.99, 2.5] {
            assert!((gf.eval(x).unwrap() - x * x).abs() < 1e-12, "at {x}");
        }
    }

    #[test]
    fn eval_outside_domain_errors() {
        let gf = quadratic_grid();
        assert!(gf.eval(3.0).is_err());
        assert!(gf.eval(-2.0).is_err());
    }

    #[test]
    fn even_node_count_rejected() {
        assert!(GridFunction::new(0.0, 1.0, 0.0, vec![0.0; 4]).is_err());
        assert!(GridFunction::new(0.0, 1.0, 0.0, vec![0.0; 2]).is_err());
    }

    #[test]
    fn fd_gradient_quadratic_and_constant() {
        let grad = fd_gradient(|p| Ok(p[0] * p[0]), &[1.0], 1e-3).unwrap();
        assert!((grad[0] - 2.0).abs() < 1e-6);
        let grad = fd_gradient(|_| Ok(4.2), &[1.0, 2.0], 1e-3).unwrap();
        assert_eq!(grad, vec![0.0, 0.0]);
        assert!(fd_gradient(|_| Ok(0.0), &[1.0], 0.0).is_err());
    }

    #[test]
    fn fd_gradient_of_grid_function() {
        let gf = quadratic_grid();
        let grad = fd_gradient(|p| gf.eval(p[0]), &[1.0], 1e-3).unwrap();
        assert!((grad[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn ode_reference_matches_exponential() {
        let y = ode_reference(|_s, y| -y, 1.0, 1.0, 200);
        assert!((y - (-1.0_f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn text_dump_has_header_and_rows() {
        let gf = GridFunction::new(0.0, 1.0, 0.25, vec![1.0, 2.0, 3.0]).unwrap();
        let text = gf.to_text();
        assert!(text.starts_with("# grid function: time=0.25"));
        assert_eq!(text.lines().count(), 5);
    }
}
