//! Gaussian mollification of the driver and terminal condition.
//!
//! Gradient pipelines need `∂f/∂x` and `∂l/∂x`. When the data is merely
//! Lipschitz (the `|x|` terminal, say), we replace `f` and `l` by their
//! Gaussian smoothings `φ_ε(x) = E[φ(x + εG)]` and differentiate those
//! instead. Two facts make this workable without ever touching a derivative
//! of `φ`:
//!
//! * the smoothing is computed by Gauss–Hermite quadrature, which only
//!   evaluates `φ`;
//! * the gradient has the likelihood-ratio form
//!   `∂φ_ε/∂x_c = E[φ(x + εG)·G_c]/ε`, again derivative-free.
//!
//! Smoothing acts on the spatial argument only — `y` and `z` partials of the
//! driver pass through from the original set (smoothing cannot conjure them
//! up, and the named driver families all carry them analytically). The
//! diffusion data `b`, `σ`, `g` is left untouched. Convolution with a
//! probability density preserves Lipschitz constants, so the declared `K`
//! carries over; linear and constant functions are fixed points.

use std::sync::Arc;

use crate::coeffs::{CoefficientSet, Terminal};
use crate::error::{Error, Result};

/// Nodes and weights such that `E[φ(G)] ≈ Σ wᵢ φ(uᵢ)` for standard normal
/// `G`. Golub–Welsch: eigenvalues of the Hermite Jacobi matrix give the
/// nodes, squared first eigenvector components give the weights.
pub fn gauss_hermite_normal(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::validation("quadrature needs at least 2 nodes"));
    }
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let beta = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let first = eig.eigenvectors[(0, i)];
            (node, first * first) // weights for weight function e^{−x²}, up to μ₀ = √π
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Physicists' nodes/weights → standard-normal expectation: u = √2·h,
    // w = v (the √π normalization cancels because eigenvector weights
    // already sum to 1).
    let nodes = pairs.iter().map(|p| p.0 * std::f64::consts::SQRT_2).collect();
    let weights = pairs.iter().map(|p| p.1).collect();
    Ok((nodes, weights))
}

/// Full tensor grid over `dim` axes: flat list of (point, weight) pairs.
fn tensor_grid(nodes: &[f64], weights: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let total = n.pow(dim as u32);
    let mut points = vec![0.0; total * dim];
    let mut w = vec![0.0; total];
    for idx in 0..total {
        let mut rest = idx;
        let mut weight = 1.0;
        for axis in 0..dim {
            let i = rest % n;
            rest /= n;
            points[idx * dim + axis] = nodes[i];
            weight *= weights[i];
        }
        w[idx] = weight;
    }
    (points, w)
}

/// Returns a copy of `coeffs` with the driver and terminal replaced by their
/// Gaussian smoothings at radius `eps`, including derivative-free spatial
/// partials. Multi-point terminals are not supported (the joint smoothing
/// would need a quadrature grid over every argument at once).
pub fn mollify(coeffs: &CoefficientSet, eps: f64, n_nodes: usize) -> Result<CoefficientSet> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::validation(format!(
            "mollification radius must be positive, got {eps}"
        )));
    }
    let dim = coeffs.dim;
    if dim > 3 {
        return Err(Error::configuration(format!(
            "mollification uses a tensor quadrature grid; dimension {dim} > 3 is not supported"
        )));
    }
    let (nodes, weights) = gauss_hermite_normal(n_nodes)?;
    let (points, w) = tensor_grid(&nodes, &weights, dim);
    let quad = Arc::new(Quadrature { dim, points, w, eps });

    let terminal = match &coeffs.terminal {
        Terminal::MultiPoint { .. } => {
            return Err(Error::configuration(
                "mollification of a multi-point terminal is not supported",
            ));
        }
        Terminal::Point { value, .. } => {
            let v = value.clone();
            let q = quad.clone();
            let value_m: crate::coeffs::PointTerminalFn = Arc::new(move |x: &[f64]| {
                q.smooth(|shifted| v(shifted), x)
            });
            let v = value.clone();
            let q = quad.clone();
            let grad_m: crate::coeffs::PointTerminalGradFn =
                Arc::new(move |x: &[f64], out: &mut [f64]| {
                    q.smooth_grad(|shifted| v(shifted), x, out)
                });
            Terminal::Point {
                value: value_m,
                grad: Some(grad_m),
            }
        }
    };

    let f = coeffs.driver.clone();
    let q = quad.clone();
    let driver_m: crate::coeffs::DriverFn = Arc::new(move |t, x: &[f64], y, z: &[f64]| {
        q.smooth(|shifted| f(t, shifted, y, z), x)
    });
    let f = coeffs.driver.clone();
    let q = quad.clone();
    let driver_x_m: crate::coeffs::DriverXGradFn =
        Arc::new(move |t, x: &[f64], y, z: &[f64], out: &mut [f64]| {
            q.smooth_grad(|shifted| f(t, shifted, y, z), x, out)
        });
    // y/z partials commute with the spatial smoothing, so wrap the originals
    // in the same quadrature when they exist.
    let driver_y_m = coeffs.driver_y.as_ref().map(|fy| {
        let fy = fy.clone();
        let q = quad.clone();
        let wrapped: crate::coeffs::DriverYGradFn = Arc::new(move |t, x: &[f64], y, z: &[f64]| {
            q.smooth(|shifted| fy(t, shifted, y, z), x)
        });
        wrapped
    });
    let driver_z_m = coeffs.driver_z.as_ref().map(|fz| {
        let fz = fz.clone();
        let q = quad.clone();
        let wrapped: crate::coeffs::DriverZGradFn =
            Arc::new(move |t, x: &[f64], y, z: &[f64], out: &mut [f64]| {
                let d = out.len();
                out.fill(0.0);
                let mut buf = vec![0.0; d];
                for i in 0..q.count() {
                    let shifted = q.shifted_point(x, i);
                    fz(t, &shifted, y, z, &mut buf);
                    let wi = q.w[i];
                    for c in 0..d {
                        out[c] += wi * buf[c];
                    }
                }
            });
        wrapped
    });

    let smooth = driver_y_m.is_some() && driver_z_m.is_some();
    Ok(CoefficientSet {
        terminal,
        driver: driver_m,
        driver_x: Some(driver_x_m),
        driver_y: driver_y_m,
        driver_z: driver_z_m,
        smooth,
        ..coeffs.clone()
    })
}

struct Quadrature {
    dim: usize,
    points: Vec<f64>, // count × dim standard-normal nodes
    w: Vec<f64>,
    eps: f64,
}

impl Quadrature {
    fn count(&self) -> usize {
        self.w.len()
    }

    fn shifted_point(&self, x: &[f64], i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for c in 0..self.dim {
            p[c] = x[c] + self.eps * self.points[i * self.dim + c];
        }
        p
    }

    fn smooth(&self, phi: impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.count() {
            acc += self.w[i] * phi(&self.shifted_point(x, i));
        }
        acc
    }

    fn smooth_grad(&self, phi: impl Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.count() {
            let v = self.w[i] * phi(&self.shifted_point(x, i));
            for c in 0..self.dim {
                out[c] += v * self.points[i * self.dim + c] / self.eps;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{build_coefficients, unit_case, DiffusionSpec, DriftSpec, DriverSpec,
        NoiseCoeffSpec, TerminalSpec};
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_reproduces_gaussian_moments() {
        let (nodes, weights) = gauss_hermite_normal(8).unwrap();
        // Exact for polynomials up to degree 15.
        let moment = |p: u32| -> f64 {
            nodes
                .iter()
                .zip(&weights)
                .map(|(&u, &w)| w * u.powi(p as i32))
                .sum()
        };
        assert_relative_eq!(moment(0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(moment(2), 1.0, epsilon = 1e-10);
        assert_relative_eq!(moment(4), 3.0, epsilon = 1e-9);
        assert_relative_eq!(moment(6), 15.0, epsilon = 1e-8);
        assert!(moment(1).abs() < 1e-12);
        assert!(moment(3).abs() < 1e-10);
    }

    #[test]
    fn abs_terminal_at_origin() {
        // E|x + εG| at x = 0 is ε·√(2/π). First pin the frozen constant with
        // a high-resolution quadrature, then check the working node count.
        let eps = 0.1;
        let analytic = eps * (2.0 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(analytic, 0.079_788_456_080_286_54, epsilon = 1e-15);

        let (nodes, weights) = gauss_hermite_normal(512).unwrap();
        let high_res: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&u, &w)| w * (eps * u).abs())
            .sum();
        // Gauss–Hermite converges only algebraically on the kinked
        // integrand, so even 512 nodes leave ~6e-5.
        assert!(
            (high_res - analytic).abs() < 1e-4,
            "high-res quadrature {high_res} vs analytic {analytic}"
        );

        let c = unit_case(1, TerminalSpec::Abs);
        let m = mollify(&c, eps, 64).unwrap();
        let v = m.terminal_point(&[0.0]).unwrap();
        assert!(
            (v - analytic).abs() < 2e-3,
            "64-node smoothing {v} vs analytic {analytic}"
        );
    }

    #[test]
    fn linear_and_constant_are_fixed_points() {
        let c = unit_case(1, TerminalSpec::Identity);
        let m = mollify(&c, 0.3, 32).unwrap();
        for &x in &[-2.0, 0.0, 0.7] {
            assert_relative_eq!(
                m.terminal_point(&[x]).unwrap(),
                x,
                epsilon = 1e-12
            );
        }
        let c = unit_case(1, TerminalSpec::Constant(4.5));
        let m = mollify(&c, 0.3, 32).unwrap();
        assert_relative_eq!(m.terminal_point(&[1.0]).unwrap(), 4.5, epsilon = 1e-12);
    }

    #[test]
    fn square_gains_exact_gradient() {
        // (x²)_ε = x² + ε², and the likelihood-ratio gradient is exactly 2x
        // because the odd quadrature moments vanish.
        let c = unit_case(1, TerminalSpec::Square);
        let m = mollify(&c, 0.2, 32).unwrap();
        assert_relative_eq!(m.terminal_point(&[1.5]).unwrap(), 2.29, epsilon = 1e-10);
        match &m.terminal {
            Terminal::Point { grad: Some(g), .. } => {
                let mut out = [0.0];
                g(&[1.5], &mut out);
                assert_relative_eq!(out[0], 3.0, epsilon = 1e-9);
            }
            _ => panic!("mollified terminal lost its gradient"),
        }
    }

    #[test]
    fn abs_gradient_is_smoothed_sign() {
        let c = unit_case(1, TerminalSpec::Abs);
        let m = mollify(&c, 0.1, 64).unwrap();
        let grad_at = |x: f64| -> f64 {
            match &m.terminal {
                Terminal::Point { grad: Some(g), .. } => {
                    let mut out = [0.0];
                    g(&[x], &mut out);
                    out[0]
                }
                _ => panic!("gradient missing"),
            }
        };
        assert!(grad_at(0.0).abs() < 1e-10); // odd symmetry
        assert!((grad_at(1.0) - 1.0).abs() < 1e-6); // far from the kink: sign
        assert!((grad_at(-1.0) + 1.0).abs() < 1e-6);
        // erf(1/(ε√2))-style transition: strictly between the two signs.
        let mid = grad_at(0.05);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn driver_partials_pass_through() {
        let c = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::SinYZ(0.4),
            NoiseCoeffSpec::Zero,
            TerminalSpec::Abs,
        )
        .unwrap();
        let m = mollify(&c, 0.1, 32).unwrap();
        assert!(m.smooth);
        let fy = m.driver_y.as_ref().unwrap();
        assert_relative_eq!(fy(0.0, &[0.3], 0.7, &[0.1]), 0.7_f64.cos(), epsilon = 1e-12);
        let fz = m.driver_z.as_ref().unwrap();
        let mut out = [0.0];
        fz(0.0, &[0.3], 0.7, &[0.1], &mut out);
        assert_relative_eq!(out[0], 0.4, epsilon = 1e-12);
        // Driver value: x-independent family, so smoothing is a no-op.
        assert_relative_eq!(
            (m.driver)(0.0, &[0.3], 0.7, &[0.1]),
            0.7_f64.sin() + 0.04,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = unit_case(1, TerminalSpec::Abs);
        assert!(mollify(&c, 0.0, 32).is_err());
        assert!(mollify(&c, -0.1, 32).is_err());
        assert!(mollify(&c, 0.1, 1).is_err());
        let multi = unit_case(1, TerminalSpec::Product01);
        assert!(mollify(&multi, 0.1, 32).is_err());
        let big = unit_case(4, TerminalSpec::Abs);
        assert!(mollify(&big, 0.1, 8).is_err());
    }

    #[test]
    fn lipschitz_constant_survives_smoothing() {
        let c = unit_case(1, TerminalSpec::Abs);
        let m = mollify(&c, 0.15, 64).unwrap();
        assert_eq!(m.lipschitz_k, c.lipschitz_k);
        // And the probes agree: smoothed |x| still has quotients ≤ 1.
        m.validate_probes(1.0, None).unwrap();
    }
}
