//! Euler simulation of the forward diffusion together with its tangent
//! (flow-derivative) process.
//!
//! The forward state starts at the evaluation point `x` and runs on the
//! reversed clock: node `k` carries paper time `t − k·delta`, so node
//! `n_steps` is where the terminal condition will be applied. The Euler step
//! consumes the paper-forward increment stored at slot `k` of the noise path
//! (see [`crate::noise::NoisePath`] for why the same slot serves both
//! clocks).
//!
//! Alongside the state we propagate the tangent matrix `∇X_k = ∂X_k/∂x`,
//! whose exact discrete recursion is
//!
//! ```text
//! ∇X_0 = I,
//! ∇X_{k+1} = (I + ∂b·delta + Σ_m ∂σ_(·,m)·ΔW_k^m) · ∇X_k,
//! ```
//!
//! the literal derivative of the Euler map. Gradient weights need `σ⁻¹∇X`
//! and `∇X⁻¹` at every node, so both inverses are cached here once per node
//! instead of being recomputed by every estimator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::NoisePath;
use crate::problem::ProblemSpec;

/// Condition-number ceiling for the per-node diffusion matrix.
const SIGMA_CONDITION_MAX: f64 = 1e12;
/// Relative bump for the finite-difference tangent fallback.
const FD_BUMP: f64 = 1e-4;

/// One simulated forward path with its tangent process and cached per-node
/// matrices. All arrays are indexed on the reversed clock; matrices are
/// row-major d×d blocks.
#[derive(Debug, Clone)]
pub struct ForwardBundle {
    pub dim: usize,
    pub n_steps: usize,
    /// States, `(n_steps + 1) × dim`.
    pub x: Vec<f64>,
    /// Tangent matrices `∇X_k`, `(n_steps + 1) × dim²`.
    pub grad_x: Vec<f64>,
    /// Inverses `(∇X_k)⁻¹`.
    pub grad_x_inv: Vec<f64>,
    /// Diffusion `σ(s_k, X_k)` at each node.
    pub sigma: Vec<f64>,
    /// Inverses `σ(s_k, X_k)⁻¹`.
    pub sigma_inv: Vec<f64>,
}

impl ForwardBundle {
    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn grad_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.grad_x[k * dd..(k + 1) * dd]
    }

    pub fn grad_inv_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.grad_x_inv[k * dd..(k + 1) * dd]
    }

    pub fn sigma_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.sigma[k * dd..(k + 1) * dd]
    }

    pub fn sigma_inv_at(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.sigma_inv[k * dd..(k + 1) * dd]
    }
}

/// Simulates one path from `spec.start_x` using the given noise.
///
/// Fails if the noise does not match the spec's grid, if the diffusion
/// matrix at some node is singular or has 1-norm condition number above
/// `1e12`, or if partial derivatives are needed but absent and the
/// finite-difference fallback is disabled.
pub fn simulate_forward(spec: &ProblemSpec, noise: &NoisePath) -> Result<ForwardBundle> {
    let d = spec.dim();
    let n = spec.grid.n_steps();
    if noise.dim != d || noise.n_steps != n {
        return Err(Error::validation(format!(
            "noise shaped {}×{} does not fit problem shaped {}×{}",
            noise.n_steps, noise.dim, n, d
        )));
    }
    if (noise.delta - spec.grid.delta()).abs() > 1e-12 * spec.grid.delta() {
        return Err(Error::validation(
            "noise step size does not match the grid",
        ));
    }
    let co = &spec.coefficients;
    let has_jac = co.drift_jac.is_some() && co.diffusion_jac.is_some();
    if !has_jac && !co.fd_fallback {
        return Err(Error::configuration(
            "tangent propagation needs drift/diffusion Jacobians or the finite-difference fallback",
        ));
    }

    let dd = d * d;
    let delta = spec.grid.delta();
    let mut bundle = ForwardBundle {
        dim: d,
        n_steps: n,
        x: vec![0.0; (n + 1) * d],
        grad_x: vec![0.0; (n + 1) * dd],
        grad_x_inv: vec![0.0; (n + 1) * dd],
        sigma: vec![0.0; (n + 1) * dd],
        sigma_inv: vec![0.0; (n + 1) * dd],
    };
    bundle.x[..d].copy_from_slice(&spec.start_x);
    linalg::identity(d, &mut bundle.grad_x[..dd]);
    linalg::identity(d, &mut bundle.grad_x_inv[..dd]);

    // Scratch buffers reused across nodes.
    let mut b = vec![0.0; d];
    let mut b_jac = vec![0.0; dd];
    let mut s_jac = vec![0.0; d * dd];
    let mut amp = vec![0.0; dd]; // per-step tangent amplification matrix
    let mut next_grad = vec![0.0; dd];
    let mut sigma_dw = vec![0.0; d];

    for k in 0..=n {
        let t_k = spec.grid.time_of_tau(k);
        let (x_k, rest) = bundle.x[k * d..].split_at_mut(d);

        // Diffusion and its inverse at this node.
        {
            let sig = &mut bundle.sigma[k * dd..(k + 1) * dd];
            (co.diffusion)(t_k, x_k, sig);
        }
        let sig = &bundle.sigma[k * dd..(k + 1) * dd];
        let sig_inv = &mut bundle.sigma_inv[k * dd..(k + 1) * dd];
        linalg::invert(d, sig, sig_inv).map_err(|e| Error::Simulation {
            node: k,
            message: format!("diffusion matrix singular: {e}"),
        })?;
        let cond = linalg::condition_1(d, sig, sig_inv);
        if cond > SIGMA_CONDITION_MAX {
            return Err(Error::Simulation {
                node: k,
                message: format!("diffusion condition number {cond:.3e} above {SIGMA_CONDITION_MAX:.0e}"),
            });
        }

        if k == n {
            break;
        }
        let dw = noise.w_at(k);

        // State update.
        (co.drift)(t_k, x_k, &mut b);
        linalg::mat_vec(d, sig, dw, &mut sigma_dw);
        let x_next = &mut rest[..d];
        for i in 0..d {
            x_next[i] = x_k[i] + b[i] * delta + sigma_dw[i];
        }

        // Tangent amplification I + ∂b·delta + Σ_m ∂σ_col_m·ΔW^m.
        if has_jac {
            (co.drift_jac.as_ref().unwrap())(t_k, x_k, &mut b_jac);
            (co.diffusion_jac.as_ref().unwrap())(t_k, x_k, &mut s_jac);
        } else {
            fd_jacobians(spec, t_k, x_k, &mut b_jac, &mut s_jac);
        }
        linalg::identity(d, &mut amp);
        for i in 0..d {
            for j in 0..d {
                let mut acc = b_jac[i * d + j] * delta;
                for m in 0..d {
                    acc += s_jac[m * dd + i * d + j] * dw[m];
                }
                amp[i * d + j] += acc;
            }
        }
        {
            let grad_k = &bundle.grad_x[k * dd..(k + 1) * dd];
            linalg::mat_mul(d, &amp, grad_k, &mut next_grad);
        }
        bundle.grad_x[(k + 1) * dd..(k + 2) * dd].copy_from_slice(&next_grad);
        let (head, tail) = bundle.grad_x_inv.split_at_mut((k + 1) * dd);
        let _ = head;
        linalg::invert(d, &next_grad, &mut tail[..dd]).map_err(|e| Error::Simulation {
            node: k + 1,
            message: format!("tangent matrix singular: {e}"),
        })?;
    }

    Ok(bundle)
}

/// Central-difference Jacobians of drift and diffusion in the spatial
/// argument, with a per-coordinate relative bump.
fn fd_jacobians(spec: &ProblemSpec, t: f64, x: &[f64], b_jac: &mut [f64], s_jac: &mut [f64]) {
    let co = &spec.coefficients;
    let d = x.len();
    let dd = d * d;
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    let mut b_hi = vec![0.0; d];
    let mut b_lo = vec![0.0; d];
    let mut s_hi = vec![0.0; dd];
    let mut s_lo = vec![0.0; dd];
    for j in 0..d {
        let h = FD_BUMP * (1.0 + x[j].abs());
        hi[j] = x[j] + h;
        lo[j] = x[j] - h;
        (co.drift)(t, &hi, &mut b_hi);
        (co.drift)(t, &lo, &mut b_lo);
        (co.diffusion)(t, &hi, &mut s_hi);
        (co.diffusion)(t, &lo, &mut s_lo);
        let inv2h = 1.0 / (2.0 * h);
        for i in 0..d {
            b_jac[i * d + j] = (b_hi[i] - b_lo[i]) * inv2h;
            for m in 0..d {
                s_jac[m * dd + i * d + j] = (s_hi[i * d + m] - s_lo[i * d + m]) * inv2h;
            }
        }
        hi[j] = x[j];
        lo[j] = x[j];
    }
}

/// Simulates a whole inner ensemble in parallel, in inner-id order.
pub fn simulate_ensemble(spec: &ProblemSpec, noises: &[NoisePath]) -> Result<Vec<ForwardBundle>> {
    noises
        .par_iter()
        .map(|noise| simulate_forward(spec, noise))
        .collect()
}

/// Summary of tangent health along one path.
#[derive(Debug, Clone, Copy)]
pub struct TangentReport {
    /// `max_k ‖∇X_k·(∇X_k)⁻¹ − I‖_∞`.
    pub max_product_deviation: f64,
    /// `min_k σ_min(σ(s_k, X_k))`.
    pub min_sigma_singular_value: f64,
}

/// Checks the cached inverses and diffusion conditioning of a bundle.
pub fn tangent_consistency_check(bundle: &ForwardBundle) -> TangentReport {
    let d = bundle.dim;
    let mut max_dev = 0.0_f64;
    let mut min_sv = f64::INFINITY;
    let mut prod = vec![0.0; d * d];
    for k in 0..=bundle.n_steps {
        linalg::mat_mul(d, bundle.grad_at(k), bundle.grad_inv_at(k), &mut prod);
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((prod[i * d + j] - target).abs());
            }
        }
        min_sv = min_sv.min(linalg::min_singular_value(d, bundle.sigma_at(k)));
    }
    TangentReport {
        max_product_deviation: max_dev,
        min_sigma_singular_value: min_sv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{
        build_coefficients, unit_case, DiffusionSpec, DriftSpec, DriverSpec, NoiseCoeffSpec,
        TerminalSpec,
    };
    use crate::noise::{sample_noise_raw, NoiseMode, NoisePath};
    use crate::stats;
    use std::sync::Arc;

    fn spec_with(co: crate::coeffs::CoefficientSet, x: f64, n: usize) -> ProblemSpec {
        ProblemSpec::new(Arc::new(co), vec![x], 1.0, n).unwrap()
    }

    fn zero_noise(d: usize, n: usize, delta: f64) -> NoisePath {
        NoisePath {
            dim: d,
            n_steps: n,
            delta,
            w_increments: vec![0.0; n * d],
            b_increments: vec![0.0; n * d],
        }
    }

    #[test]
    fn unit_case_is_shifted_brownian() {
        let spec = spec_with(unit_case(1, TerminalSpec::Square), 0.0, 32);
        let noise = sample_noise_raw(&spec.grid, 1, 42, NoiseMode::Gaussian, 0, 5);
        let bundle = simulate_forward(&spec, &noise).unwrap();
        let cum = noise.w_cumulative();
        // b = 0, σ = 1, x = 0: the state is bitwise the running W sum.
        for k in 0..=32 {
            assert_eq!(bundle.x[k], cum[k]);
            assert_eq!(bundle.grad_x[k], 1.0);
            assert_eq!(bundle.sigma[k], 1.0);
        }
    }

    #[test]
    fn deterministic_drift_line() {
        // Zero noise increments: X_k = x + k·delta·b exactly.
        let co = build_coefficients(
            1,
            DriftSpec::Constant(2.0),
            DiffusionSpec::Scaled(0.5),
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Identity,
        )
        .unwrap();
        let spec = spec_with(co, 1.0, 10);
        let bundle = simulate_forward(&spec, &zero_noise(1, 10, 0.1)).unwrap();
        for k in 0..=10 {
            let expect = 1.0 + 2.0 * 0.1 * k as f64;
            assert!((bundle.x[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn brownian_moments() {
        let mut spec = spec_with(unit_case(1, TerminalSpec::Square), 0.5, 50);
        spec.n_inner = 10_000;
        let noises: Vec<NoisePath> = (0..spec.n_inner)
            .map(|i| sample_noise_raw(&spec.grid, 1, 7, NoiseMode::Gaussian, 0, i as u64))
            .collect();
        let bundles = simulate_ensemble(&spec, &noises).unwrap();
        let finals: Vec<f64> = bundles.iter().map(|b| b.x_at(50)[0]).collect();
        let (m, se) = stats::mean_se(&finals);
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m} se {se}");
        let sq: Vec<f64> = finals.iter().map(|&v| (v - 0.5) * (v - 0.5)).collect();
        let (v, v_se) = stats::mean_se(&sq);
        assert!((v - 1.0).abs() < 3.0 * v_se, "var {v} se {v_se}");
    }

    #[test]
    fn tangent_of_linear_drift_is_deterministic_product() {
        // b = rate·x, σ = 1: ∇X_k = (1 + rate·delta)^k exactly.
        let co = build_coefficients(
            1,
            DriftSpec::Linear(-1.0),
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Identity,
        )
        .unwrap();
        let spec = spec_with(co, 0.3, 20);
        let noise = sample_noise_raw(&spec.grid, 1, 11, NoiseMode::Gaussian, 0, 0);
        let bundle = simulate_forward(&spec, &noise).unwrap();
        let factor: f64 = 1.0 - 0.05;
        for k in 0..=20 {
            let expect = factor.powi(k as i32);
            assert!((bundle.grad_x[k] - expect).abs() < 1e-12);
            assert!((bundle.grad_x_inv[k] - 1.0 / expect).abs() < 1e-12);
        }
        let report = tangent_consistency_check(&bundle);
        assert!(report.max_product_deviation < 1e-12);
        assert!((report.min_sigma_singular_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fd_tangent_matches_analytic() {
        let co = build_coefficients(
            1,
            DriftSpec::Linear(-0.5),
            DiffusionSpec::AffineSin { base: 1.0, amp: 0.3 },
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Identity,
        )
        .unwrap();
        let mut stripped = co.clone();
        stripped.drift_jac = None;
        stripped.diffusion_jac = None;

        let spec_a = spec_with(co, 0.7, 40);
        let spec_fd = spec_with(stripped, 0.7, 40);
        let noise = sample_noise_raw(&spec_a.grid, 1, 3, NoiseMode::Gaussian, 0, 9);
        let analytic = simulate_forward(&spec_a, &noise).unwrap();
        let fd = simulate_forward(&spec_fd, &noise).unwrap();
        assert_eq!(analytic.x, fd.x); // same state path either way
        for k in 0..=40 {
            assert!(
                (analytic.grad_x[k] - fd.grad_x[k]).abs() < 1e-6,
                "node {k}: {} vs {}",
                analytic.grad_x[k],
                fd.grad_x[k]
            );
        }
    }

    #[test]
    fn tangent_matches_bump_and_revalue() {
        // The discrete tangent is the exact derivative of the Euler map, so
        // a central bump of the start point reproduces it to O(h²).
        let co = build_coefficients(
            1,
            DriftSpec::Linear(-0.5),
            DiffusionSpec::AffineSin { base: 1.0, amp: 0.3 },
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Identity,
        )
        .unwrap();
        let h = 1e-4;
        let spec = spec_with(co.clone(), 0.7, 40);
        let spec_hi = spec_with(co.clone(), 0.7 + h, 40);
        let spec_lo = spec_with(co, 0.7 - h, 40);
        let noise = sample_noise_raw(&spec.grid, 1, 3, NoiseMode::Gaussian, 0, 2);
        let base = simulate_forward(&spec, &noise).unwrap();
        let hi = simulate_forward(&spec_hi, &noise).unwrap();
        let lo = simulate_forward(&spec_lo, &noise).unwrap();
        for k in 0..=40 {
            let fd = (hi.x[k] - lo.x[k]) / (2.0 * h);
            assert!(
                (fd - base.grad_x[k]).abs() < 1e-6,
                "node {k}: bump {fd} vs tangent {}",
                base.grad_x[k]
            );
        }
    }

    #[test]
    fn missing_jacobians_without_fallback_is_an_error() {
        let mut co = unit_case(1, TerminalSpec::Identity);
        co.drift_jac = None;
        co.diffusion_jac = None;
        co.fd_fallback = false;
        let spec = spec_with(co, 0.0, 4);
        let noise = zero_noise(1, 4, 0.25);
        match simulate_forward(&spec, &noise) {
            Err(Error::Configuration(_)) => {}
            other => panic!("expected configuration error, got {other:?}"),
        }
    }

    #[test]
    fn singular_diffusion_names_the_node() {
        // σ(x) = x vanishes at the start point 0.
        let mut co = unit_case(1, TerminalSpec::Identity);
        co.diffusion = Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = x[0]);
        co.diffusion_jac = Some(Arc::new(|_t, _x: &[f64], out: &mut [f64]| out[0] = 1.0));
        let spec = ProblemSpec {
            coefficients: Arc::new(co),
            ..spec_with(unit_case(1, TerminalSpec::Identity), 0.0, 4)
        };
        match simulate_forward(&spec, &zero_noise(1, 4, 0.25)) {
            Err(Error::Simulation { node: 0, .. }) => {}
            other => panic!("expected simulation error at node 0, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_noise_rejected() {
        let spec = spec_with(unit_case(1, TerminalSpec::Identity), 0.0, 8);
        assert!(simulate_forward(&spec, &zero_noise(1, 9, 1.0 / 9.0)).is_err());
        assert!(simulate_forward(&spec, &zero_noise(2, 8, 0.125)).is_err());
    }

    #[test]
    fn running_max_moment_ratio_bounded_in_x() {
        // E[max_k |X_k|²] should grow like 1 + |x|²: the ratio stays within
        // a small factor of its value at the origin.
        let mut ratios = Vec::new();
        for &x in &[0.0, 2.0, 4.0, 8.0] {
            let mut spec = spec_with(unit_case(1, TerminalSpec::Square), x, 25);
            spec.n_inner = 2000;
            let noises: Vec<NoisePath> = (0..2000)
                .map(|i| sample_noise_raw(&spec.grid, 1, 99, NoiseMode::Gaussian, 0, i))
                .collect();
            let bundles = simulate_ensemble(&spec, &noises).unwrap();
            let sup_sq: Vec<f64> = bundles
                .iter()
                .map(|b| {
                    let mut best = 0.0_f64;
                    for k in 0..=25 {
                        best = best.max(b.x[k] * b.x[k]);
                    }
                    best
                })
                .collect();
            ratios.push(stats::mean(&sup_sq) / (1.0 + x * x));
        }
        let base = ratios[0];
        for (i, r) in ratios.iter().enumerate() {
            assert!(
                *r <= 3.0 * base,
                "ratio {} at index {i} vs base {}",
                r,
                base
            );
        }
    }

    #[test]
    fn two_dim_tangent_products_hold() {
        let co = build_coefficients(
            2,
            DriftSpec::Linear(-0.4),
            DiffusionSpec::AffineSin { base: 1.0, amp: 0.2 },
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Square,
        )
        .unwrap();
        let spec = ProblemSpec::new(Arc::new(co), vec![0.3, -0.6], 1.0, 16).unwrap();
        let noise = sample_noise_raw(&spec.grid, 2, 5, NoiseMode::Gaussian, 0, 4);
        let bundle = simulate_forward(&spec, &noise).unwrap();
        let report = tangent_consistency_check(&bundle);
        assert!(report.max_product_deviation < 1e-10);
        assert!(report.min_sigma_singular_value >= 0.8 - 1e-12);
    }
}
