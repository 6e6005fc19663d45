//! Gradient of the value field via the linearized backward system.
//!
//! Differentiating the backward scheme with respect to the start point `x`
//! yields a *linear* backward system for the pair `(∇Y, ∇Z)` driven by the
//! coefficient partials, with all nonlinear arguments frozen along a base
//! solution:
//!
//! ```text
//! ∇Z_k = (1/Δ)·CE[∇Y_{k+1}·ΔW_k]
//! ∇Y_k = CE[∇Y_{k+1} + (f_x·∇X + f_y·∇Y + f_z·∇Z)_{k+1}·Δ
//!                    + Σ_c (g_x·∇X + g_y·∇Y)_{k+1,c}·ΔB_k^c]
//! ```
//!
//! with terminal row `l_x·∇X` assembled from the terminal's partials and the
//! tangent process carried by the forward bundles. The conditional
//! expectations reuse the base solver's step operators, so in prefix-exact
//! mode the result is the exact derivative of the discrete scheme — the
//! enumeration oracle's bump gradient must agree to finite-difference
//! accuracy.
//!
//! The average of `∇Y` at the start node estimates `∂ₓu(t, x)` directly,
//! which is the variational side of the two-estimator gradient identity
//! (the other side being the integration-by-parts weight estimator, which
//! never touches a coefficient derivative).

use crate::coeffs::Terminal;
use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::solver::{build_step_ce, interior_tau_nodes, BackwardSolution, Ensemble};
use crate::stats::{mean, mean_se};

/// Discrete `(∇Y, ∇Z)` paths plus the extracted field gradient.
///
/// Layout: `grad_y[(k·N + p)·d + j]` is `∂Y/∂x_j` at reversed node `k` on
/// path `p`; `grad_z[((k·N + p)·d + c)·d + j]` is `∂Z_c/∂x_j` there.
#[derive(Debug, Clone)]
pub struct VariationalSolution {
    pub n_steps: usize,
    pub n_paths: usize,
    pub dim: usize,
    pub grad_y: Vec<f64>,
    pub grad_z: Vec<f64>,
    /// Estimate of `∂ₓu(t, x)`: the average `∇Y` row at the start node.
    pub grad_u_value: Vec<f64>,
    /// Componentwise standard error of that average.
    pub std_error: Vec<f64>,
}

impl VariationalSolution {
    pub fn grad_y_at(&self, k: usize, path: usize) -> &[f64] {
        let base = (k * self.n_paths + path) * self.dim;
        &self.grad_y[base..base + self.dim]
    }

    /// Row-major `d×d` block `∂Z_c/∂x_j`.
    pub fn grad_z_at(&self, k: usize, path: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        let base = (k * self.n_paths + path) * dd;
        &self.grad_z[base..base + dd]
    }
}

/// The coefficient partials the linearized system consumes, unwrapped once
/// up front so a missing one fails fast with advice instead of panicking
/// mid-recursion.
struct Partials {
    driver_x: crate::coeffs::DriverXGradFn,
    driver_y: crate::coeffs::DriverYGradFn,
    driver_z: crate::coeffs::DriverZGradFn,
    noise_x: crate::coeffs::NoiseXJacFn,
    noise_y: crate::coeffs::NoiseYGradFn,
}

fn require_partials(co: &crate::coeffs::CoefficientSet) -> Result<Partials> {
    let missing = |what: &str| {
        Error::configuration(format!(
            "the gradient system needs the coefficient partial {what}; \
             supply it analytically or set a mollification width"
        ))
    };
    if !co.terminal.has_grad() {
        return Err(missing("of the terminal condition"));
    }
    Ok(Partials {
        driver_x: co.driver_x.clone().ok_or_else(|| missing("∂f/∂x"))?,
        driver_y: co.driver_y.clone().ok_or_else(|| missing("∂f/∂y"))?,
        driver_z: co.driver_z.clone().ok_or_else(|| missing("∂f/∂z"))?,
        noise_x: co.noise_x.clone().ok_or_else(|| missing("∂g/∂x"))?,
        noise_y: co.noise_y.clone().ok_or_else(|| missing("∂g/∂y"))?,
    })
}

/// Assembles the terminal `∇Y` rows `l_x·∇X`, summing over every path time
/// the terminal looks at when it is a multi-time functional.
fn terminal_rows(ens: &Ensemble, out: &mut [f64]) -> Result<()> {
    let d = ens.spec.dim();
    let n = ens.spec.grid.n_steps();
    let mut dl = vec![0.0; d];
    match &ens.coeffs.terminal {
        Terminal::Point { grad, .. } => {
            let grad = grad.as_ref().expect("checked by require_partials");
            for (p, bundle) in ens.bundles.iter().enumerate() {
                grad(bundle.x_at(n), &mut dl);
                let gx = bundle.grad_at(n);
                let row = &mut out[p * d..(p + 1) * d];
                for j in 0..d {
                    row[j] = (0..d).map(|i| dl[i] * gx[i * d + j]).sum();
                }
            }
        }
        Terminal::MultiPoint { grad, .. } => {
            let grad = grad.as_ref().expect("checked by require_partials");
            let partition = ens.spec.partition_or_trivial();
            let taus: Vec<usize> = (0..partition.n_points())
                .map(|j| n - partition.grid_index(j))
                .collect();
            for (p, bundle) in ens.bundles.iter().enumerate() {
                let args: Vec<&[f64]> = taus.iter().map(|&t| bundle.x_at(t)).collect();
                let row = &mut out[p * d..(p + 1) * d];
                row.fill(0.0);
                for (m, &tau) in taus.iter().enumerate() {
                    grad(&args, m, &mut dl);
                    let gx = bundle.grad_at(tau);
                    for j in 0..d {
                        row[j] += (0..d).map(|i| dl[i] * gx[i * d + j]).sum::<f64>();
                    }
                }
            }
        }
    }
    Ok(())
}

/// Solves the linearized backward system along `base` and extracts the
/// field gradient.
///
/// All driver and noise-coefficient partials plus the terminal gradient
/// must be available — either analytically or through the mollified
/// coefficient set — otherwise the call fails with a configuration error.
/// The base solution must come from the same ensemble.
pub fn solve_variational(
    ens: &Ensemble,
    base: &BackwardSolution,
) -> Result<VariationalSolution> {
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
    let pa = require_partials(co)?;
    let interior_tau = interior_tau_nodes(spec);

    let dd = d * d;
    let mut gy = vec![0.0; (n + 1) * n_paths * d];
    let mut gz = vec![0.0; (n + 1) * n_paths * dd];
    terminal_rows(ens, &mut gy[n * n_paths * d..])?;

    let mut targets = vec![0.0; n_paths];
    let mut fitted = vec![0.0; n_paths];
    let mut fx = vec![0.0; d];
    let mut fz = vec![0.0; d];
    let mut gxj = vec![0.0; dd];
    let mut gyv = vec![0.0; d];
    // Per-path, per-component totals whose means equal grad_u exactly; see
    // the base solver for why this is the honest error gauge.
    let mut total = vec![0.0; n_paths * d];
    for p in 0..n_paths {
        total[p * d..(p + 1) * d].copy_from_slice(&gy[(n * n_paths + p) * d..][..d]);
    }

    for k in (0..n).rev() {
        let ce = build_step_ce(ens, k, &interior_tau)?;
        let t_next = spec.grid.time_of_tau(k + 1);
        let db: &NoisePath = &ens.noises[0];
        let db = db.b_at(k).to_vec();

        // ∇Z: project each (component, direction) pair of ∇Y·ΔW/Δ.
        for c in 0..d {
            for j in 0..d {
                for (p, noise) in ens.noises.iter().enumerate() {
                    targets[p] =
                        gy[((k + 1) * n_paths + p) * d + j] * noise.w_at(k)[c] / delta;
                }
                ce.apply(&targets, &mut fitted);
                for p in 0..n_paths {
                    gz[((k * n_paths + p) * d + c) * d + j] = fitted[p];
                }
            }
        }
        if k == n - 1 {
            let (head, tail) = gz.split_at_mut(n * n_paths * dd);
            tail.copy_from_slice(&head[(n - 1) * n_paths * dd..]);
        }

        // ∇Y: one projection per direction, with the coefficient partials
        // frozen at the base solution's child-node values.
        for j in 0..d {
            for p in 0..n_paths {
                let bundle = &ens.bundles[p];
                let xc = bundle.x_at(k + 1);
                let yc = base.y_at(k + 1, p);
                let zc = base.z_at(k + 1, p);
                let gx_mat = bundle.grad_at(k + 1);
                let gy_child = gy[((k + 1) * n_paths + p) * d + j];

                (pa.driver_x)(t_next, xc, yc, zc, &mut fx);
                let fy = (pa.driver_y)(t_next, xc, yc, zc);
                (pa.driver_z)(t_next, xc, yc, zc, &mut fz);
                (pa.noise_x)(t_next, xc, yc, &mut gxj);
                (pa.noise_y)(t_next, xc, yc, &mut gyv);

                let fx_dx: f64 = (0..d).map(|i| fx[i] * gx_mat[i * d + j]).sum();
                let fz_dz: f64 = (0..d)
                    .map(|c| fz[c] * gz[(((k + 1) * n_paths + p) * d + c) * d + j])
                    .sum();
                let mut noise_term = 0.0;
                for c in 0..d {
                    let gx_dx: f64 = (0..d).map(|i| gxj[c * d + i] * gx_mat[i * d + j]).sum();
                    noise_term += (gx_dx + gyv[c] * gy_child) * db[c];
                }
                targets[p] = gy_child + (fx_dx + fy * gy_child + fz_dz) * delta + noise_term;
                total[p * d + j] += targets[p] - gy_child;
            }
            ce.apply(&targets, &mut fitted);
            for p in 0..n_paths {
                gy[(k * n_paths + p) * d + j] = fitted[p];
            }
        }
    }

    let mut grad_u_value = vec![0.0; d];
    let mut std_error = vec![0.0; d];
    let mut column = vec![0.0; n_paths];
    for j in 0..d {
        for p in 0..n_paths {
            column[p] = gy[p * d + j];
        }
        grad_u_value[j] = mean(&column);
        for p in 0..n_paths {
            column[p] = total[p * d + j];
        }
        std_error[j] = mean_se(&column).1;
    }

    Ok(VariationalSolution {
        n_steps: n,
        n_paths,
        dim: d,
        grad_y: gy,
        grad_z: gz,
        grad_u_value,
        std_error,
    })
}
