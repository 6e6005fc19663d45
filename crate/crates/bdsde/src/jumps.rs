//! Jump sizes of the martingale integrand at interior partition times.
//!
//! When the terminal condition looks at the state at several path times, the
//! integrand `Z` is continuous between those times but jumps where a new
//! state enters the terminal's view. The jump at an interior partition time
//! `t_i` is computed from a *homogeneous* linear backward system for a pair
//! `(αⁱ, βⁱ)` — the sensitivity of the value process to the terminal's
//! dependence on the state at `t_i`:
//!
//! ```text
//! terminal:  αⁱ_n = ∂ᵢl(states)·∇X_{t_i}
//! backward:  βⁱ_k = (1/Δ)·CE[αⁱ_{k+1}·ΔW_k]
//!            αⁱ_k = CE[αⁱ_{k+1} + (f_y·αⁱ + f_z·βⁱ)_{k+1}·Δ
//!                               + Σ_c (g_y·αⁱ)_{k+1,c}·ΔB_k^c]
//! ```
//!
//! run from the deepest node up to the node of `t_i`, where the jump is
//! read off as
//!
//! ```text
//! ΔZ_{t_i} = αⁱ_{t_i}·(∇X_{t_i})⁻¹·σ(t_i, X_{t_i})
//! ```
//!
//! oriented so that `ΔZ` is the limit from later clock times minus the
//! limit from earlier ones. The recursion reuses the base solver's
//! conditional-expectation operators, step for step, so in prefix-exact
//! mode it must agree with the enumeration oracle's jump values to near
//! machine precision.

use crate::coeffs::Terminal;
use crate::error::{Error, Result};
use crate::solver::{build_step_ce, interior_tau_nodes, BackwardSolution, Ensemble};
use crate::stats::mean_se;

/// Jump data for every interior partition time.
///
/// Arrays are per interior node slot. `alpha[i]` is laid out like the
/// gradient rows — `[(k·N + p)·d + j]` — and is populated only for reversed
/// nodes `k ≥ tau_nodes[i]` (the system lives between the terminal and its
/// own partition time); `beta[i]` likewise with a `d×d` block per node.
/// `delta_z[i]` holds one `d`-row per inner path.
#[derive(Debug, Clone)]
pub struct JumpSolution {
    pub n_steps: usize,
    pub n_paths: usize,
    pub dim: usize,
    /// Partition indices of the interior points, in partition order.
    pub node_indices: Vec<usize>,
    /// Their clock times.
    pub times: Vec<f64>,
    /// Their reversed-node indices.
    pub tau_nodes: Vec<usize>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub delta_z: Vec<Vec<f64>>,
}

impl JumpSolution {
    pub fn n_nodes(&self) -> usize {
        self.node_indices.len()
    }

    pub fn alpha_at(&self, slot: usize, k: usize, path: usize) -> &[f64] {
        let base = (k * self.n_paths + path) * self.dim;
        &self.alpha[slot][base..base + self.dim]
    }

    pub fn delta_z_at(&self, slot: usize, path: usize) -> &[f64] {
        &self.delta_z[slot][path * self.dim..(path + 1) * self.dim]
    }

    /// Componentwise (mean, standard error) of the jump over inner paths.
    pub fn delta_z_mean_se(&self, slot: usize) -> (Vec<f64>, Vec<f64>) {
        let mut means = vec![0.0; self.dim];
        let mut ses = vec![0.0; self.dim];
        let mut column = vec![0.0; self.n_paths];
        for j in 0..self.dim {
            for p in 0..self.n_paths {
                column[p] = self.delta_z[slot][p * self.dim + j];
            }
            let (m, se) = mean_se(&column);
            means[j] = m;
            ses[j] = se;
        }
        (means, ses)
    }
}

/// Solves the jump system along `base` for every interior partition time.
///
/// Needs a multi-time terminal with its gradient plus the driver partials
/// `∂f/∂y`, `∂f/∂z` and the noise-coefficient partial `∂g/∂y` — the system
/// is homogeneous, so no state partials enter. Missing pieces fail with a
/// configuration error; the base solution must come from the same ensemble.
pub fn solve_jump_system(ens: &Ensemble, base: &BackwardSolution) -> Result<JumpSolution> {
    let spec = &ens.spec;
    let d = spec.dim();
    let n = spec.grid.n_steps();
    let n_paths = ens.n_paths();
    let delta = spec.grid.delta();

    if base.n_steps != n || base.n_paths != n_paths || base.dim != d {
        return Err(Error::validation(
            "base solution does not match the ensemble it is paired with",
        ));
    }
    let co = ens.coeffs.as_ref();
    let (term_value, term_grad) = match &co.terminal {
        Terminal::MultiPoint { grad: Some(g), value } => (value.clone(), g.clone()),
        Terminal::MultiPoint { grad: None, .. } => {
            return Err(Error::configuration(
                "the jump system needs the terminal's partial derivatives; \
                 supply them analytically (mollification does not cover \
                 multi-time terminals)",
            ));
        }
        Terminal::Point { .. } => {
            return Err(Error::configuration(
                "the jump system applies to multi-time terminals only; a \
                 single-time terminal has no interior partition times and a \
                 continuous integrand",
            ));
        }
    };
    let _ = term_value;
    let missing = |what: &str| {
        Error::configuration(format!(
            "the jump system needs the coefficient partial {what}; \
             supply it analytically or set a mollification width"
        ))
    };
    let driver_y = co.driver_y.clone().ok_or_else(|| missing("∂f/∂y"))?;
    let driver_z = co.driver_z.clone().ok_or_else(|| missing("∂f/∂z"))?;
    let noise_y = co.noise_y.clone().ok_or_else(|| missing("∂g/∂y"))?;

    let partition = spec.partition_or_trivial();
    let node_indices: Vec<usize> = partition.interior_points().collect();
    let times: Vec<f64> = node_indices.iter().map(|&i| partition.times()[i]).collect();
    let tau_nodes: Vec<usize> = node_indices
        .iter()
        .map(|&i| n - partition.grid_index(i))
        .collect();
    let interior_tau = interior_tau_nodes(spec);
    let n_slots = node_indices.len();

    let dd = d * d;
    let mut alpha = vec![vec![0.0; (n + 1) * n_paths * d]; n_slots];
    let mut beta = vec![vec![0.0; (n + 1) * n_paths * dd]; n_slots];

    // Terminal rows ∂ᵢl·∇X_{t_i}.
    let term_taus: Vec<usize> = (0..partition.n_points())
        .map(|j| n - partition.grid_index(j))
        .collect();
    let mut dl = vec![0.0; d];
    for (p, bundle) in ens.bundles.iter().enumerate() {
        let args: Vec<&[f64]> = term_taus.iter().map(|&t| bundle.x_at(t)).collect();
        for (slot, (&i, &tau_i)) in node_indices.iter().zip(&tau_nodes).enumerate() {
            term_grad(&args, i, &mut dl);
            let gx = bundle.grad_at(tau_i);
            let row = &mut alpha[slot][(n * n_paths + p) * d..(n * n_paths + p + 1) * d];
            for j in 0..d {
                row[j] = (0..d).map(|q| dl[q] * gx[q * d + j]).sum();
            }
        }
    }

    let stop = tau_nodes.iter().copied().min().unwrap_or(n);
    let mut targets = vec![0.0; n_paths];
    let mut fitted = vec![0.0; n_paths];
    let mut fz = vec![0.0; d];
    let mut gyv = vec![0.0; d];

    for k in (stop..n).rev() {
        let ce = build_step_ce(ens, k, &interior_tau)?;
        let t_next = spec.grid.time_of_tau(k + 1);
        let db = ens.noises[0].b_at(k).to_vec();

        for (slot, &tau_i) in tau_nodes.iter().enumerate() {
            if k < tau_i {
                continue;
            }
            let a = &mut alpha[slot];
            let b = &mut beta[slot];

            for c in 0..d {
                for j in 0..d {
                    for (p, noise) in ens.noises.iter().enumerate() {
                        targets[p] =
                            a[((k + 1) * n_paths + p) * d + j] * noise.w_at(k)[c] / delta;
                    }
                    ce.apply(&targets, &mut fitted);
                    for p in 0..n_paths {
                        b[((k * n_paths + p) * d + c) * d + j] = fitted[p];
                    }
                }
            }
            if k == n - 1 {
                let (head, tail) = b.split_at_mut(n * n_paths * dd);
                tail.copy_from_slice(&head[(n - 1) * n_paths * dd..]);
            }

            for j in 0..d {
                for p in 0..n_paths {
                    let bundle = &ens.bundles[p];
                    let xc = bundle.x_at(k + 1);
                    let yc = base.y_at(k + 1, p);
                    let zc = base.z_at(k + 1, p);
                    let a_child = a[((k + 1) * n_paths + p) * d + j];

                    let fy = driver_y(t_next, xc, yc, zc);
                    driver_z(t_next, xc, yc, zc, &mut fz);
                    noise_y(t_next, xc, yc, &mut gyv);

                    let fz_b: f64 = (0..d)
                        .map(|c| fz[c] * b[(((k + 1) * n_paths + p) * d + c) * d + j])
                        .sum();
                    let noise_term: f64 = (0..d).map(|c| gyv[c] * a_child * db[c]).sum();
                    targets[p] = a_child + (fy * a_child + fz_b) * delta + noise_term;
                }
                ce.apply(&targets, &mut fitted);
                for p in 0..n_paths {
                    a[(k * n_paths + p) * d + j] = fitted[p];
                }
            }
        }
    }

    // Read the jump at each node: ΔZ = α·(∇X)⁻¹·σ, all evaluated at t_i.
    let mut delta_z = vec![vec![0.0; n_paths * d]; n_slots];
    for (slot, &tau_i) in tau_nodes.iter().enumerate() {
        for (p, bundle) in ens.bundles.iter().enumerate() {
            let row = &alpha[slot][(tau_i * n_paths + p) * d..(tau_i * n_paths + p + 1) * d];
            let ginv = bundle.grad_inv_at(tau_i);
            let sig = bundle.sigma_at(tau_i);
            let out = &mut delta_z[slot][p * d..(p + 1) * d];
            for jp in 0..d {
                let mut acc = 0.0;
                for q in 0..d {
                    // (row·∇X⁻¹)_q accumulated on the fly.
                    let row_ginv: f64 = (0..d).map(|j| row[j] * ginv[j * d + q]).sum();
                    acc += row_ginv * sig[q * d + jp];
                }
                out[jp] = acc;
            }
        }
    }

    Ok(JumpSolution {
        n_steps: n,
        n_paths,
        dim: d,
        node_indices,
        times,
        tau_nodes,
        alpha,
        beta,
        delta_z,
    })
}
