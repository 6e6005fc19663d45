//! Backward induction for `(Y, Z)` across a W-ensemble under one frozen
//! B-path.
//!
//! The scheme walks the reversed clock from the terminal data back to the
//! start point. At each step the conditional expectation with respect to the
//! information available at that node is realized by one of two engines:
//!
//! * **Regression** — least-squares projection onto a polynomial basis in the
//!   current forward state (plus, for terminals that look at several path
//!   times, the already-visited states at those times). This is the sampling
//!   workhorse.
//! * **Prefix-exact** — for sign-flip noise with the full `2^(n·d)` W-path
//!   enumeration, paths sharing a step prefix form contiguous blocks, and the
//!   conditional expectation is the exact block average. Same scheme, no
//!   projection error; the binary-tree oracle must agree with it to near
//!   machine precision.
//!
//! One step consists of `Z_k = (1/Δ)·CE[Y_{k+1}·ΔW_k]` followed by
//! `Y_k = CE[Y_{k+1} + f(t_{k+1}, ·)·Δ + g(t_{k+1}, ·)·ΔB_k]`, with `f` and
//! `g` evaluated at the child node's state and fitted values (explicit
//! scheme). The optional fixed-point mode instead evaluates `f` at the
//! current node and iterates it, for drivers too stiff for the explicit
//! step. The deepest `Z` level has no increment beyond it and is copied from
//! the level before it — the same endpoint convention as the tree oracle.

use std::sync::Arc;

use rayon::prelude::*;

use crate::coeffs::{CoefficientSet, Terminal};
use crate::error::{Error, Result};
use crate::forward::{simulate_ensemble, ForwardBundle};
use crate::noise::{enumerate_rademacher_w, sample_noise, NoiseMode, NoisePath};
use crate::problem::ProblemSpec;
use crate::regression::{PolyBasis, RegressionPlan};
use crate::stats::{mean, mean_se, pairwise_sum};

/// How conditional expectations across the inner ensemble are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondExpEngine {
    /// Least-squares projection on a polynomial basis in the current state.
    Regression,
    /// Exact averages over enumeration prefix blocks. Only valid for
    /// ensembles whose W-paths are the full sign-flip enumeration in
    /// enumeration order (see [`Ensemble::enumerated`]).
    PrefixExact,
}

/// One frozen-B inner ensemble: the noise pairs, the simulated forward
/// bundles, and the conditional-expectation engine to use on it.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: ProblemSpec,
    pub outer_id: usize,
    /// The coefficients backward passes evaluate — mollified when the spec
    /// asks for smoothing, the raw set otherwise.
    pub coeffs: Arc<CoefficientSet>,
    pub noises: Vec<NoisePath>,
    pub bundles: Vec<ForwardBundle>,
    pub engine: CondExpEngine,
}

impl Ensemble {
    /// Samples `spec.n_inner` W-paths against the frozen B-path `outer_id`
    /// and simulates their forward bundles in parallel.
    pub fn sample(spec: &ProblemSpec, outer_id: usize) -> Result<Ensemble> {
        spec.validate()?;
        let noises = (0..spec.n_inner)
            .into_par_iter()
            .map(|inner| sample_noise(spec, outer_id, inner))
            .collect::<Result<Vec<_>>>()?;
        let bundles = simulate_ensemble(spec, &noises)?;
        Ok(Ensemble {
            spec: spec.clone(),
            outer_id,
            coeffs: spec.effective_coefficients()?,
            noises,
            bundles,
            engine: CondExpEngine::Regression,
        })
    }

    /// Builds the full sign-flip enumeration ensemble (all `2^(n·d)` W-paths,
    /// one keyed B-path) with exact conditional expectations.
    pub fn enumerated(spec: &ProblemSpec, outer_id: usize) -> Result<Ensemble> {
        spec.validate()?;
        if spec.noise_mode != NoiseMode::Rademacher {
            return Err(Error::validation(
                "exact enumeration needs the sign-flip noise mode",
            ));
        }
        if outer_id >= spec.n_outer {
            return Err(Error::validation(format!(
                "outer id {} out of range (n_outer = {})",
                outer_id, spec.n_outer
            )));
        }
        let noises = enumerate_rademacher_w(
            &spec.grid,
            spec.dim(),
            spec.seed,
            spec.noise_mode,
            outer_id as u64,
        )?;
        let bundles = simulate_ensemble(spec, &noises)?;
        Ok(Ensemble {
            spec: spec.clone(),
            outer_id,
            coeffs: spec.effective_coefficients()?,
            noises,
            bundles,
            engine: CondExpEngine::PrefixExact,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.noises.len()
    }

    /// The frozen B-path every inner path shares.
    pub fn b_path(&self) -> &NoisePath {
        &self.noises[0]
    }
}

/// Discrete `(Y, Z)` paths for one ensemble plus the extracted field value.
///
/// Layout: `y[k·N + p]` is Y at reversed node `k` on path `p`;
/// `z[(k·N + p)·d ..][..d]` is the Z-row there.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub n_steps: usize,
    pub n_paths: usize,
    pub dim: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// The field value `u(t, x)` for this frozen B-path: the average of Y at
    /// the start node, where the forward state is deterministic.
    pub u_value: f64,
    /// Standard error of that average over the inner ensemble.
    pub std_error: f64,
    /// Design condition number of the conditional-expectation operator at
    /// each backward step (1 where the step degenerated to a plain mean and
    /// for exact block averages).
    pub condition_numbers: Vec<f64>,
}

impl BackwardSolution {
    pub fn y_at(&self, k: usize, path: usize) -> f64 {
        self.y[k * self.n_paths + path]
    }

    pub fn z_at(&self, k: usize, path: usize) -> &[f64] {
        let base = (k * self.n_paths + path) * self.dim;
        &self.z[base..base + self.dim]
    }

    /// All paths' Y values at reversed node `k`.
    pub fn y_node(&self, k: usize) -> &[f64] {
        &self.y[k * self.n_paths..(k + 1) * self.n_paths]
    }
}

/// The conditional-expectation operator for one backward step. Shared with
/// the variational and jump recursions, which project their own targets
/// through the identical operator.
pub(crate) enum StepCe {
    Plan(RegressionPlan),
    /// Exact averaging over contiguous blocks of this size.
    Blocks(usize),
}

impl StepCe {
    pub(crate) fn condition(&self) -> f64 {
        match self {
            StepCe::Plan(plan) => plan.condition(),
            StepCe::Blocks(_) => 1.0,
        }
    }

    pub(crate) fn apply(&self, targets: &[f64], out: &mut [f64]) {
        match self {
            StepCe::Plan(plan) => plan.fitted_into(targets, out),
            StepCe::Blocks(block) => {
                for b in 0..targets.len() / block {
                    let lo = b * block;
                    let avg = pairwise_sum(&targets[lo..lo + block]) / *block as f64;
                    out[lo..lo + block].fill(avg);
                }
            }
        }
    }
}

/// Builds the step-`k` operator. For regression, the basis variables are the
/// state at node `k` plus — when the terminal looks at several path times —
/// the states at the interior points already visited (reversed node strictly
/// below `k`); the value process genuinely depends on those frozen states,
/// so projecting on the current state alone would be conditioning on too
/// little.
pub(crate) fn build_step_ce(ens: &Ensemble, k: usize, interior_tau: &[usize]) -> Result<StepCe> {
    let d = ens.spec.dim();
    let n = ens.spec.grid.n_steps();
    let n_paths = ens.n_paths();
    match ens.engine {
        CondExpEngine::PrefixExact => Ok(StepCe::Blocks(1usize << ((n - k) * d))),
        CondExpEngine::Regression => {
            let aug: Vec<usize> = interior_tau.iter().copied().filter(|&t| t < k).collect();
            let n_vars = d * (1 + aug.len());
            let mut points = vec![0.0; n_paths * n_vars];
            for (p, bundle) in ens.bundles.iter().enumerate() {
                let row = &mut points[p * n_vars..(p + 1) * n_vars];
                row[..d].copy_from_slice(bundle.x_at(k));
                for (slot, &tau) in aug.iter().enumerate() {
                    row[(slot + 1) * d..(slot + 2) * d].copy_from_slice(bundle.x_at(tau));
                }
            }
            let basis = PolyBasis::new(n_vars, ens.spec.regression_degree);
            Ok(StepCe::Plan(RegressionPlan::build(
                &basis, &points, n_paths, k,
            )?))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reversed-node indices of the interior partition points — the extra
/// regression variables for terminals that look at several path times.
pub(crate) fn interior_tau_nodes(spec: &ProblemSpec) -> Vec<usize> {
    let n = spec.grid.n_steps();
    let partition = spec.partition_or_trivial();
    partition
        .interior_points()
        .map(|i| n - partition.grid_index(i))
        .collect()
}

/// Checks that an ensemble flagged prefix-exact really is the full sign-flip
/// enumeration in enumeration order — block averaging silently computes the
/// wrong conditional expectation on anything else.
fn verify_enumeration_order(ens: &Ensemble) -> Result<()> {
    let n = ens.spec.grid.n_steps();
    let d = ens.spec.dim();
    let bits = n * d;
    if ens.n_paths() != 1usize << bits {
        return Err(Error::validation(format!(
            "prefix-exact engine needs all {} enumerated W-paths, got {}",
            1usize << bits,
            ens.n_paths()
        )));
    }
    let root = ens.spec.grid.delta().sqrt();
    for (p, noise) in ens.noises.iter().enumerate() {
        for (slot, &w) in noise.w_increments.iter().enumerate() {
            let bit = bits - 1 - slot;
            let expect = if (p >> bit) & 1 == 0 { root } else { -root };
            if w != expect {
                return Err(Error::validation(
                    "prefix-exact engine needs W-paths in enumeration order",
                ));
            }
        }
    }
    Ok(())
}

/// Runs the backward induction over the ensemble and extracts `u(t, x)`.
///
/// Errors: inner paths on mismatched grids or with differing B-paths are
/// rejected up front; an ill-conditioned regression design surfaces as a
/// solver error naming the step.
pub fn solve_bdsde(ens: &Ensemble) -> Result<BackwardSolution> {
    let spec = &ens.spec;
    let d = spec.dim();
    let n = spec.grid.n_steps();
    let n_paths = ens.n_paths();
    let delta = spec.grid.delta();

    if n_paths < 2 {
        return Err(Error::validation("backward induction needs at least 2 inner paths"));
    }
    if ens.bundles.len() != n_paths {
        return Err(Error::validation(format!(
            "{} noise paths but {} forward bundles",
            n_paths,
            ens.bundles.len()
        )));
    }
    for (i, (noise, bundle)) in ens.noises.iter().zip(&ens.bundles).enumerate() {
        if noise.n_steps != n
            || noise.dim != d
            || bundle.n_steps != n
            || bundle.dim != d
            || (noise.delta - delta).abs() > 1e-12 * delta
        {
            return Err(Error::validation(format!(
                "inner path {i} was simulated on a different grid"
            )));
        }
        if noise.b_increments != ens.noises[0].b_increments {
            return Err(Error::validation(format!(
                "inner path {i} does not share the frozen B-path"
            )));
        }
    }
    if ens.engine == CondExpEngine::PrefixExact {
        verify_enumeration_order(ens)?;
    }

    let co = ens.coeffs.as_ref();
    let partition = spec.partition_or_trivial();
    let interior_tau = interior_tau_nodes(spec);

    let mut y = vec![0.0; (n + 1) * n_paths];
    let mut z = vec![0.0; (n + 1) * n_paths * d];

    // Terminal data at the deepest level.
    match &co.terminal {
        Terminal::Point { value, .. } => {
            for (p, bundle) in ens.bundles.iter().enumerate() {
                y[n * n_paths + p] = value(bundle.x_at(n));
            }
        }
        Terminal::MultiPoint { value, .. } => {
            let taus: Vec<usize> = (0..partition.n_points())
                .map(|j| n - partition.grid_index(j))
                .collect();
            for (p, bundle) in ens.bundles.iter().enumerate() {
                let args: Vec<&[f64]> = taus.iter().map(|&t| bundle.x_at(t)).collect();
                y[n * n_paths + p] = value(&args);
            }
        }
    }

    let mut conditions = vec![1.0; n];
    let mut targets = vec![0.0; n_paths];
    let mut fitted = vec![0.0; n_paths];
    let mut g_buf = vec![0.0; d];
    // Per-path running total of terminal value plus all driver and B-noise
    // contributions. Every projection preserves ensemble means, so the mean
    // of this total is u itself, and its spread is the honest sampling error
    // of u over the inner ensemble (the node-0 spread is not: projections
    // shrink it without shrinking the error of the mean).
    let mut total = y[n * n_paths..].to_vec();

    for k in (0..n).rev() {
        let ce = build_step_ce(ens, k, &interior_tau)?;
        conditions[k] = ce.condition();
        let t_next = spec.grid.time_of_tau(k + 1);
        let db = ens.noises[0].b_at(k).to_vec();

        // Martingale integrand: Z_k = (1/Δ)·CE[Y_{k+1}·ΔW_k], componentwise
        // on the shared step design.
        for c in 0..d {
            for (p, noise) in ens.noises.iter().enumerate() {
                targets[p] = y[(k + 1) * n_paths + p] * noise.w_at(k)[c] / delta;
            }
            ce.apply(&targets, &mut fitted);
            for p in 0..n_paths {
                z[(k * n_paths + p) * d + c] = fitted[p];
            }
        }
        if k == n - 1 {
            // Deepest level: no increment beyond it; copy the level below.
            let (head, tail) = z.split_at_mut(n * n_paths * d);
            tail.copy_from_slice(&head[(n - 1) * n_paths * d..]);
        }

        if spec.picard_iterations == 0 {
            // Explicit step: f and g at the child node's state and fits.
            for p in 0..n_paths {
                let xc = ens.bundles[p].x_at(k + 1);
                let yc = y[(k + 1) * n_paths + p];
                let zc = &z[((k + 1) * n_paths + p) * d..((k + 1) * n_paths + p + 1) * d];
                let f_val = (co.driver)(t_next, xc, yc, zc);
                (co.noise_coeff)(t_next, xc, yc, &mut g_buf);
                targets[p] = yc + f_val * delta + dot(&g_buf, &db);
                total[p] += targets[p] - yc;
            }
            ce.apply(&targets, &mut fitted);
            y[k * n_paths..(k + 1) * n_paths].copy_from_slice(&fitted);
        } else {
            // Fixed-point step: the driver moves to the current node and is
            // iterated; g stays at the child (it multiplies the increment
            // just consumed).
            for p in 0..n_paths {
                let xc = ens.bundles[p].x_at(k + 1);
                let yc = y[(k + 1) * n_paths + p];
                (co.noise_coeff)(t_next, xc, yc, &mut g_buf);
                targets[p] = yc + dot(&g_buf, &db);
                total[p] += targets[p] - yc;
            }
            ce.apply(&targets, &mut fitted);
            let t_now = spec.grid.time_of_tau(k);
            for p in 0..n_paths {
                let base = fitted[p];
                let xk = ens.bundles[p].x_at(k);
                let zk = &z[(k * n_paths + p) * d..(k * n_paths + p + 1) * d];
                let mut yv = base;
                for _ in 0..spec.picard_iterations {
                    yv = base + (co.driver)(t_now, xk, yv, zk) * delta;
                }
                y[k * n_paths + p] = yv;
                total[p] += yv - base;
            }
        }
    }

    let u_value = mean(&y[..n_paths]);
    let std_error = mean_se(&total).1;
    Ok(BackwardSolution {
        n_steps: n,
        n_paths,
        dim: d,
        y,
        z,
        u_value,
        std_error,
        condition_numbers: conditions,
    })
}

/// Freezes B-path `outer_id`, runs the backward induction over a sampled
/// ensemble, and returns `u(t, x)` with its inner-ensemble standard error.
pub fn evaluate_u(spec: &ProblemSpec, outer_id: usize) -> Result<(f64, f64)> {
    let ens = Ensemble::sample(spec, outer_id)?;
    let sol = solve_bdsde(&ens)?;
    Ok((sol.u_value, sol.std_error))
}
