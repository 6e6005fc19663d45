//! Exact binary-tree enumerator for sign-flip driving noise.
//!
//! With Rademacher increments (`±√delta`) and one spatial dimension, the
//! whole W-ensemble is a binary tree: depth `k` holds `2^k` nodes, one per
//! sign prefix, and conditional expectations are plain half-half averages
//! over the two children. This module re-implements the backward recursion
//! with those exact averages and no regression, giving a brute-force
//! reference the sampling solver must reproduce to near machine precision
//! when it runs in enumeration mode.
//!
//! Node indexing matches the enumerated ensemble layout: the sign of step
//! `k` lives in bit `n_steps − 1 − k` of the leaf index, bit value 0 means
//! `+√delta`, so the depth-`k` ancestor of leaf `w` is `w >> (n_steps − k)`
//! and the two children of node `v` are `2v` (up) and `2v + 1` (down).
//!
//! Besides `(u, Y, Z)` the tree computes the spatial gradient by central
//! bump-and-revalue and, for terminals that look at several path times, the
//! exact linear jump system at each interior partition time.

use crate::coeffs::{CoefficientSet, Terminal};
use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::problem::ProblemSpec;

/// Enumeration cap: `2^n` leaves with `n` above this is refused.
pub const TREE_CAP: usize = 8;
/// Cap for the joint B-enumeration helper.
pub const TREE_B_ENUM_CAP: usize = 6;

/// Exact tree solution. All per-depth arrays index nodes by sign prefix.
#[derive(Debug, Clone)]
pub struct TreeSolution {
    pub n_steps: usize,
    /// `u(t, x)` for the frozen B-path: the root Y-value.
    pub u_value: f64,
    /// Central bump-and-revalue gradient of `u` in the start point.
    pub grad_u: f64,
    /// Forward states per depth.
    pub x: Vec<Vec<f64>>,
    /// Backward values per depth.
    pub y: Vec<Vec<f64>>,
    /// Martingale integrand per depth; the deepest level is copied from its
    /// parents (the same endpoint convention the sampling solver uses).
    pub z: Vec<Vec<f64>>,
    /// Interior partition points: τ-depth of each.
    pub jump_depths: Vec<usize>,
    /// Exact α values at each interior partition point, per node at that depth.
    pub jump_alpha: Vec<Vec<f64>>,
    /// Exact jump sizes `ΔZ = α·(∇X)⁻¹·σ` per node at that depth.
    pub jump_delta_z: Vec<Vec<f64>>,
}

struct TreeCore {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

/// Builds the forward states and the exact backward recursion for one
/// start point.
fn build_core(
    co: &CoefficientSet,
    spec: &ProblemSpec,
    b_path: &NoisePath,
    start: f64,
) -> Result<TreeCore> {
    let n = spec.grid.n_steps();
    let delta = spec.grid.delta();
    let sqrt_delta = delta.sqrt();

    // Forward sweep.
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    x.push(vec![start]);
    let mut b = [0.0];
    let mut sig = [0.0];
    for k in 0..n {
        let t_k = spec.grid.time_of_tau(k);
        let mut next = vec![0.0; 1 << (k + 1)];
        for v in 0..(1usize << k) {
            let xv = [x[k][v]];
            (co.drift)(t_k, &xv, &mut b);
            (co.diffusion)(t_k, &xv, &mut sig);
            next[2 * v] = xv[0] + b[0] * delta + sig[0] * sqrt_delta;
            next[2 * v + 1] = xv[0] + b[0] * delta - sig[0] * sqrt_delta;
        }
        x.push(next);
    }

    // Terminal values; a multi-time terminal reads each path argument off
    // the ancestor at that partition time's depth.
    let partition = spec.partition_or_trivial();
    let mut y: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut z: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let leaf_count = 1usize << n;
    let mut terminal = vec![0.0; leaf_count];
    match &co.terminal {
        Terminal::Point { value, .. } => {
            for (w, slot) in terminal.iter_mut().enumerate() {
                *slot = value(&[x[n][w]]);
            }
        }
        Terminal::MultiPoint { value, .. } => {
            let depths: Vec<usize> = (0..partition.n_points())
                .map(|j| n - partition.grid_index(j))
                .collect();
            let mut args_store = vec![[0.0]; partition.n_points()];
            for (w, slot) in terminal.iter_mut().enumerate() {
                for (j, &c_j) in depths.iter().enumerate() {
                    args_store[j] = [x[c_j][w >> (n - c_j)]];
                }
                let args: Vec<&[f64]> = args_store.iter().map(|a| a.as_slice()).collect();
                *slot = value(&args);
            }
        }
    }
    y[n] = terminal;

    // Backward sweep: exact conditional expectations are child averages.
    let mut g = [0.0];
    for k in (0..n).rev() {
        let mut zk = vec![0.0; 1 << k];
        for v in 0..(1usize << k) {
            zk[v] = (y[k + 1][2 * v] - y[k + 1][2 * v + 1]) / (2.0 * sqrt_delta);
        }
        z[k] = zk;
        if k == n - 1 {
            // Endpoint convention: the deepest Z level is copied from its
            // parents before it is consumed by the Y update below.
            let mut zn = vec![0.0; leaf_count];
            for (w, slot) in zn.iter_mut().enumerate() {
                *slot = z[n - 1][w >> 1];
            }
            z[n] = zn;
        }
        let t_next = spec.grid.time_of_tau(k + 1);
        let db = b_path.b_at(k)[0];
        let mut yk = vec![0.0; 1 << k];
        for v in 0..(1usize << k) {
            let mut acc = 0.0;
            for c in 0..2 {
                let w = 2 * v + c;
                let xc = [x[k + 1][w]];
                let yc = y[k + 1][w];
                let zc = [z[k + 1][w]];
                let fval = (co.driver)(t_next, &xc, yc, &zc);
                (co.noise_coeff)(t_next, &xc, yc, &mut g);
                acc += yc + fval * delta + g[0] * db;
            }
            yk[v] = 0.5 * acc;
        }
        y[k] = yk;
    }

    Ok(TreeCore { x, y, z })
}

/// Runs the exact enumeration for `spec` with the given frozen B-path.
///
/// Requires one spatial dimension, sign-flip noise mode, at most
/// [`TREE_CAP`] steps, and the explicit scheme (no fixed-point option).
/// `bump_h` is the central-difference step for the gradient.
pub fn tree_enumerate(
    spec: &ProblemSpec,
    b_path: &NoisePath,
    bump_h: f64,
) -> Result<TreeSolution> {
    if spec.dim() != 1 {
        return Err(Error::validation("tree enumeration is one-dimensional only"));
    }
    let n = spec.grid.n_steps();
    if n > TREE_CAP {
        return Err(Error::validation(format!(
            "tree enumeration capped at {TREE_CAP} steps, got {n}"
        )));
    }
    if spec.picard_iterations > 0 {
        return Err(Error::validation(
            "tree enumeration implements the explicit scheme; disable the fixed-point option",
        ));
    }
    if b_path.dim != 1 || b_path.n_steps != n {
        return Err(Error::validation("B-path does not fit the grid"));
    }
    if !(bump_h > 0.0) {
        return Err(Error::validation("bump step must be positive"));
    }
    let co = spec.effective_coefficients()?;
    let start = spec.start_x[0];

    let core = build_core(&co, spec, b_path, start)?;
    let u_value = core.y[0][0];
    let up = build_core(&co, spec, b_path, start + bump_h)?;
    let down = build_core(&co, spec, b_path, start - bump_h)?;
    let grad_u = (up.y[0][0] - down.y[0][0]) / (2.0 * bump_h);

    // Exact jump system at interior partition points.
    let mut jump_depths = Vec::new();
    let mut jump_alpha = Vec::new();
    let mut jump_delta_z = Vec::new();
    if co.terminal.is_multi() {
        let partition = spec.partition_or_trivial();
        for i in partition.interior_points() {
            let (depth, alpha, delta_z) = jump_system(&co, spec, b_path, &core, i)?;
            jump_depths.push(depth);
            jump_alpha.push(alpha);
            jump_delta_z.push(delta_z);
        }
    }

    Ok(TreeSolution {
        n_steps: n,
        u_value,
        grad_u,
        x: core.x,
        y: core.y,
        z: core.z,
        jump_depths,
        jump_alpha,
        jump_delta_z,
    })
}

/// Solves the linear jump system for interior partition index `i` exactly:
/// a backward recursion with terminal datum `∂_i l·∇X` at the data node,
/// coefficients frozen along the base solution, read off at the partition
/// time itself and converted to a jump size by `ΔZ = α·(∇X)⁻¹·σ`.
fn jump_system(
    co: &CoefficientSet,
    spec: &ProblemSpec,
    b_path: &NoisePath,
    core: &TreeCore,
    i: usize,
) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let n = spec.grid.n_steps();
    let delta = spec.grid.delta();
    let sqrt_delta = delta.sqrt();
    let partition = spec.partition_or_trivial();
    let grad_l = match &co.terminal {
        Terminal::MultiPoint { grad: Some(g), .. } => g.clone(),
        _ => {
            return Err(Error::configuration(
                "jump system needs the terminal gradient; supply it or use mollify mode",
            ))
        }
    };
    let (f_y, f_z, g_y) = match (&co.driver_y, &co.driver_z, &co.noise_y) {
        (Some(fy), Some(fz), Some(gy)) => (fy.clone(), fz.clone(), gy.clone()),
        _ => {
            return Err(Error::configuration(
                "jump system needs driver and noise-coefficient partials; supply them or use mollify mode",
            ))
        }
    };
    let (b_jac, s_jac) = match (&co.drift_jac, &co.diffusion_jac) {
        (Some(bj), Some(sj)) => (bj.clone(), sj.clone()),
        _ => {
            return Err(Error::configuration(
                "jump system needs drift and diffusion Jacobians; supply them or use mollify mode",
            ))
        }
    };

    // Tangent process along the tree, exact product of per-step factors.
    let mut grad_x: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    grad_x.push(vec![1.0]);
    let mut bx = [0.0];
    let mut sx = [0.0];
    for k in 0..n {
        let t_k = spec.grid.time_of_tau(k);
        let mut next = vec![0.0; 1 << (k + 1)];
        for v in 0..(1usize << k) {
            let xv = [core.x[k][v]];
            b_jac(t_k, &xv, &mut bx);
            s_jac(t_k, &xv, &mut sx);
            next[2 * v] = (1.0 + bx[0] * delta + sx[0] * sqrt_delta) * grad_x[k][v];
            next[2 * v + 1] = (1.0 + bx[0] * delta - sx[0] * sqrt_delta) * grad_x[k][v];
        }
        grad_x.push(next);
    }

    let depths: Vec<usize> = (0..partition.n_points())
        .map(|j| n - partition.grid_index(j))
        .collect();
    let read_depth = depths[i];

    // Terminal datum ∂_i l(X at all partition times)·∇X at partition time i.
    let mut alpha: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let leaf_count = 1usize << n;
    let mut terminal = vec![0.0; leaf_count];
    let mut args_store = vec![[0.0]; partition.n_points()];
    let mut dl = [0.0];
    for (w, slot) in terminal.iter_mut().enumerate() {
        for (j, &c_j) in depths.iter().enumerate() {
            args_store[j] = [core.x[c_j][w >> (n - c_j)]];
        }
        let args: Vec<&[f64]> = args_store.iter().map(|a| a.as_slice()).collect();
        grad_l(&args, i, &mut dl);
        *slot = dl[0] * grad_x[read_depth][w >> (n - read_depth)];
    }
    alpha[n] = terminal;

    // Linear backward recursion frozen along the base solution, stopped at
    // the partition depth where the jump is read off.
    let mut gy_out = [0.0];
    let mut fz_out = [0.0];
    for k in (read_depth..n).rev() {
        let mut bk = vec![0.0; 1 << k];
        for v in 0..(1usize << k) {
            bk[v] = (alpha[k + 1][2 * v] - alpha[k + 1][2 * v + 1]) / (2.0 * sqrt_delta);
        }
        beta[k] = bk;
        if k == n - 1 {
            let mut bn = vec![0.0; leaf_count];
            for (w, slot) in bn.iter_mut().enumerate() {
                *slot = beta[n - 1][w >> 1];
            }
            beta[n] = bn;
        }
        let t_next = spec.grid.time_of_tau(k + 1);
        let db = b_path.b_at(k)[0];
        let mut ak = vec![0.0; 1 << k];
        for v in 0..(1usize << k) {
            let mut acc = 0.0;
            for c in 0..2 {
                let w = 2 * v + c;
                let xc = [core.x[k + 1][w]];
                let yc = core.y[k + 1][w];
                let zc = [core.z[k + 1][w]];
                let fy = f_y(t_next, &xc, yc, &zc);
                f_z(t_next, &xc, yc, &zc, &mut fz_out);
                g_y(t_next, &xc, yc, &mut gy_out);
                acc += alpha[k + 1][w]
                    + (fy * alpha[k + 1][w] + fz_out[0] * beta[k + 1][w]) * delta
                    + gy_out[0] * alpha[k + 1][w] * db;
            }
            ak[v] = 0.5 * acc;
        }
        alpha[k] = ak;
    }

    let t_i = partition.times()[i];
    let mut sig = [0.0];
    let alpha_at: Vec<f64> = alpha[read_depth].clone();
    let delta_z: Vec<f64> = alpha_at
        .iter()
        .enumerate()
        .map(|(v, &a)| {
            let xv = [core.x[read_depth][v]];
            (co.diffusion)(t_i, &xv, &mut sig);
            a / grad_x[read_depth][v] * sig[0]
        })
        .collect();
    Ok((read_depth, alpha_at, delta_z))
}

/// Averages the tree's `u` over every sign assignment of the B-increments —
/// the unconditional expectation for checks that integrate the outer noise
/// out exactly. Capped at [`TREE_B_ENUM_CAP`] steps.
pub fn tree_b_average_u(spec: &ProblemSpec, bump_h: f64) -> Result<f64> {
    let n = spec.grid.n_steps();
    if n > TREE_B_ENUM_CAP {
        return Err(Error::validation(format!(
            "joint B-enumeration capped at {TREE_B_ENUM_CAP} steps, got {n}"
        )));
    }
    let delta = spec.grid.delta();
    let sqrt_delta = delta.sqrt();
    let count = 1usize << n;
    let mut total = 0.0;
    for p in 0..count {
        let mut b = vec![0.0; n];
        for (slot, value) in b.iter_mut().enumerate() {
            let bit = n - 1 - slot;
            *value = if (p >> bit) & 1 == 0 {
                sqrt_delta
            } else {
                -sqrt_delta
            };
        }
        let path = NoisePath {
            dim: 1,
            n_steps: n,
            delta,
            w_increments: vec![0.0; n],
            b_increments: b,
        };
        total += tree_enumerate(spec, &path, bump_h)?.u_value;
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{
        build_coefficients, unit_case, DiffusionSpec, DriftSpec, DriverSpec, NoiseCoeffSpec,
        TerminalSpec,
    };
    use crate::grid::Partition;
    use crate::noise::NoiseMode;
    use std::sync::Arc;

    fn zero_b(n: usize) -> NoisePath {
        NoisePath {
            dim: 1,
            n_steps: n,
            delta: 1.0 / n as f64,
            w_increments: vec![0.0; n],
            b_increments: vec![0.0; n],
        }
    }

    fn rademacher_spec(terminal: TerminalSpec, x: f64, n: usize) -> ProblemSpec {
        let mut spec =
            ProblemSpec::new(Arc::new(unit_case(1, terminal)), vec![x], 1.0, n).unwrap();
        spec.noise_mode = NoiseMode::Rademacher;
        spec
    }

    #[test]
    fn linear_terminal_gives_unit_z() {
        let spec = rademacher_spec(TerminalSpec::Identity, 0.3, 4);
        let sol = tree_enumerate(&spec, &zero_b(4), 1e-4).unwrap();
        for k in 0..=4 {
            for &z in &sol.z[k] {
                assert!((z - 1.0).abs() < 1e-12);
            }
        }
        assert!((sol.u_value - 0.3).abs() < 1e-12);
        assert!((sol.grad_u - 1.0).abs() < 1e-10);
    }

    #[test]
    fn square_terminal_telescopes_variance() {
        // E(x + Σ ±√delta)² = x² + Σ delta = x² + t exactly for sign flips.
        let spec = rademacher_spec(TerminalSpec::Square, 0.0, 4);
        let sol = tree_enumerate(&spec, &zero_b(4), 1e-4).unwrap();
        assert!((sol.u_value - 1.0).abs() < 1e-12, "u = {}", sol.u_value);
        let spec = rademacher_spec(TerminalSpec::Square, 0.7, 6);
        let sol = tree_enumerate(&spec, &zero_b(6), 1e-4).unwrap();
        assert!((sol.u_value - (0.49 + 1.0)).abs() < 1e-12);
        // Gradient of x² + t in x: 2x; central bump is exact for quadratics.
        assert!((sol.grad_u - 1.4).abs() < 1e-9, "grad {}", sol.grad_u);
    }

    #[test]
    fn constant_g_shifts_u_by_integrated_b() {
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Constant(0.3),
            TerminalSpec::Identity,
        )
        .unwrap();
        let mut spec = ProblemSpec::new(Arc::new(co), vec![0.5], 1.0, 5).unwrap();
        spec.noise_mode = NoiseMode::Rademacher;
        let mut b = zero_b(5);
        for (j, slot) in b.b_increments.iter_mut().enumerate() {
            *slot = 0.1 * (j as f64 + 1.0);
        }
        let b_total: f64 = b.b_increments.iter().sum();
        let sol = tree_enumerate(&spec, &b, 1e-4).unwrap();
        assert!(
            (sol.u_value - (0.5 + 0.3 * b_total)).abs() < 1e-12,
            "u = {} vs {}",
            sol.u_value,
            0.5 + 0.3 * b_total
        );
    }

    #[test]
    fn b_average_restores_deterministic_value() {
        // Averaging u = x + 0.3·B_t over all B sign paths gives x.
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Constant(0.3),
            TerminalSpec::Identity,
        )
        .unwrap();
        let mut spec = ProblemSpec::new(Arc::new(co), vec![0.5], 1.0, 5).unwrap();
        spec.noise_mode = NoiseMode::Rademacher;
        let mean_u = tree_b_average_u(&spec, 1e-4).unwrap();
        assert!((mean_u - 0.5).abs() < 1e-12);
    }

    /// Builds a Rademacher spec with a multi-point terminal and the
    /// three-point partition {0, t/2, t}. The spec is constructed with a
    /// placeholder terminal first because a multi-point terminal does not
    /// validate until its partition is attached.
    fn multi_spec(co: CoefficientSet, x: f64, n: usize) -> ProblemSpec {
        let mut spec =
            ProblemSpec::new(Arc::new(unit_case(1, TerminalSpec::Square)), vec![x], 1.0, n)
                .unwrap();
        spec.coefficients = Arc::new(co);
        spec.noise_mode = NoiseMode::Rademacher;
        spec.partition = Some(Partition::new(&spec.grid, &[0.0, 0.5, 1.0]).unwrap());
        spec.validate().unwrap();
        spec
    }

    fn product_partition_spec(x: f64, n: usize) -> ProblemSpec {
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Product01,
        )
        .unwrap();
        multi_spec(co, x, n)
    }

    #[test]
    fn product_terminal_jump_is_midpoint_state() {
        // Terminal X₀·X_{t/2}: the jump of Z at t/2 is exactly the state
        // there (closed form: Z = 2·X_s above, X_{t/2} below the node).
        let spec = product_partition_spec(1.0, 8);
        let sol = tree_enumerate(&spec, &zero_b(8), 1e-4).unwrap();
        assert_eq!(sol.jump_depths.len(), 1);
        let depth = sol.jump_depths[0];
        assert_eq!(depth, 4); // t/2 on the reversed clock with n = 8
        for v in 0..sol.jump_delta_z[0].len() {
            let x_mid = sol.x[depth][v];
            assert!(
                (sol.jump_delta_z[0][v] - x_mid).abs() < 1e-12,
                "node {v}: jump {} vs state {}",
                sol.jump_delta_z[0][v],
                x_mid
            );
        }
    }

    #[test]
    fn jump_vanishes_when_terminal_ignores_the_node() {
        // l(x₀, x_mid, x_t) = x₀²: no dependence on the interior time.
        let mut co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Product01,
        )
        .unwrap();
        co.terminal = Terminal::MultiPoint {
            value: Arc::new(|args: &[&[f64]]| args[0][0] * args[0][0]),
            grad: Some(Arc::new(|args: &[&[f64]], idx: usize, out: &mut [f64]| {
                out[0] = if idx == 0 { 2.0 * args[0][0] } else { 0.0 };
            })),
        };
        let spec = multi_spec(co, 0.7, 6);
        let sol = tree_enumerate(&spec, &zero_b(6), 1e-4).unwrap();
        for &dz in &sol.jump_delta_z[0] {
            assert_eq!(dz, 0.0);
        }
    }

    #[test]
    fn later_node_terminal_jump_is_one() {
        // l(x₀, x_mid, x_t) = x_mid: below t/2 the data is already fixed
        // (Z = 0), above it Z = 1, so the jump is exactly +1.
        let mut co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Product01,
        )
        .unwrap();
        co.terminal = Terminal::MultiPoint {
            value: Arc::new(|args: &[&[f64]]| args[1][0]),
            grad: Some(Arc::new(|_args: &[&[f64]], idx: usize, out: &mut [f64]| {
                out[0] = if idx == 1 { 1.0 } else { 0.0 };
            })),
        };
        let spec = multi_spec(co, 0.0, 6);
        let sol = tree_enumerate(&spec, &zero_b(6), 1e-4).unwrap();
        for &dz in &sol.jump_delta_z[0] {
            assert!((dz - 1.0).abs() < 1e-12, "jump {dz}");
        }
    }

    #[test]
    fn caps_and_dimension_are_enforced() {
        let spec = rademacher_spec(TerminalSpec::Identity, 0.0, 4);
        assert!(tree_enumerate(&spec, &zero_b(5), 1e-4).is_err());
        assert!(tree_enumerate(&spec, &zero_b(4), 0.0).is_err());
        let big = rademacher_spec(TerminalSpec::Identity, 0.0, 9);
        assert!(tree_enumerate(&big, &zero_b(9), 1e-4).is_err());
        let wide = tree_b_average_u(&rademacher_spec(TerminalSpec::Identity, 0.0, 7), 1e-4);
        assert!(wide.is_err());
    }

    #[test]
    fn driver_decays_constant_data() {
        // f(y) = −y, l ≡ 1: the explicit recursion gives (1 − delta)^n.
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::LinearDecay,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Constant(1.0),
        )
        .unwrap();
        let mut spec = ProblemSpec::new(Arc::new(co), vec![0.0], 1.0, 8).unwrap();
        spec.noise_mode = NoiseMode::Rademacher;
        let sol = tree_enumerate(&spec, &zero_b(8), 1e-4).unwrap();
        let expect = (1.0 - 0.125_f64).powi(8);
        assert!((sol.u_value - expect).abs() < 1e-12);
    }
}
