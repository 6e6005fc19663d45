//! The scripted acceptance gate: nine pinned end-to-end checks that exercise
//! every pipeline in the crate against an independent reference — closed
//! forms, the PDE/SPDE field solvers, the enumeration tree, or an internal
//! identity whose two sides are computed by different modules.
//!
//! Each check returns a [`CriterionReport`] instead of panicking, so callers
//! (the acceptance test target and the CLI `accept` subcommand) can always
//! print the full scoreboard. Tolerances are pinned here, in one place, and
//! every statistical bound is SE-aware: a criterion compares its measured
//! gap against `3·SE` (plus an explicit relative allowance where the
//! comparison is between two discretizations rather than against an exact
//! value). Runs with too few paths for an SE-aware verdict are reported as
//! [`CriterionStatus::Skipped`] with the reason spelled out — never as a
//! silent pass.
//!
//! The suite takes a path-scale knob: `1.0` runs the pinned desk-scale path
//! counts, smaller values shrink every sampled ensemble proportionally
//! (useful for smoke runs). Deterministic enumeration checks ignore the
//! knob — they have no sampling error to widen.

use std::sync::Arc;
use std::time::Instant;

use crate::coeffs::{
    build_coefficients, unit_case, CoefficientSet, DiffusionSpec, DriftSpec, DriverSpec,
    NoiseCoeffSpec, TerminalSpec,
};
use crate::error::Result;
use crate::grid::Partition;
use crate::jumps::solve_jump_system;
use crate::noise::NoiseMode;
use crate::oracle::pde::{pde_solve, SpaceGrid};
use crate::oracle::spde::spde_solve_pathwise;
use crate::oracle::tree::tree_enumerate;
use crate::oracle::fd_gradient;
use crate::problem::ProblemSpec;
use crate::solver::{evaluate_u, solve_bdsde, Ensemble};
use crate::stats::{combined_se, mean, mean_se};
use crate::variational::solve_variational;
use crate::weights::{
    compute_weights, estimate_grad_u_weights, estimate_z_discrete, estimate_z_weights,
    weighted_rows,
};

/// Verdict of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub enum CriterionStatus {
    Pass,
    Fail,
    /// The path scale left too few samples for an SE-aware verdict; the
    /// string says how many were requested and what the floor is.
    Skipped(String),
}

/// One row of the acceptance scoreboard.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    /// Stable identifier of the check (kebab-case, used in output tables).
    pub name: &'static str,
    pub status: CriterionStatus,
    /// Headline statistic the verdict is based on. For multi-part criteria
    /// this is the worst sub-check expressed as a fraction of its own
    /// allowance, so `measured <= allowed` iff every part held.
    pub measured: f64,
    /// Pinned bound `measured` must stay within.
    pub allowed: f64,
    /// Human-readable breakdown of the sub-checks and their numbers.
    pub details: String,
    pub wall_ms: u128,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        matches!(self.status, CriterionStatus::Pass)
    }

    /// One fixed-width scoreboard line: status, name, headline numbers.
    pub fn line(&self) -> String {
        let tag = match &self.status {
            CriterionStatus::Pass => "PASS",
            CriterionStatus::Fail => "FAIL",
            CriterionStatus::Skipped(_) => "SKIP",
        };
        let numbers = if self.measured.is_finite() {
            format!("measured {:.3e} allowed {:.3e}", self.measured, self.allowed)
        } else {
            String::from("not measured")
        };
        let note = match &self.status {
            CriterionStatus::Skipped(reason) => format!(" [{reason}]"),
            _ => String::new(),
        };
        format!(
            "{tag} {name:<22} {numbers:<40} {ms:>8} ms  {details}{note}",
            name = self.name,
            ms = self.wall_ms,
            details = self.details,
        )
    }
}

/// What a criterion function reports back to the runner (the runner adds
/// the name and the wall clock).
struct Verdict {
    status: CriterionStatus,
    measured: f64,
    allowed: f64,
    details: String,
}

impl Verdict {
    fn graded(measured: f64, allowed: f64, details: String) -> Verdict {
        let status = if measured <= allowed {
            CriterionStatus::Pass
        } else {
            CriterionStatus::Fail
        };
        Verdict {
            status,
            measured,
            allowed,
            details,
        }
    }

    /// Downgrades an otherwise-passing verdict when an extra condition
    /// (runtime budget, SE cap, exactness floor) failed.
    fn also_require(mut self, ok: bool, note: &str) -> Verdict {
        if !ok {
            self.status = CriterionStatus::Fail;
            self.details.push_str("; FAILED: ");
            self.details.push_str(note);
        }
        self
    }
}

/// Fewest samples a statistical criterion will grade itself on.
const MIN_PATHS: usize = 500;

fn scaled_paths(base: usize, scale: f64) -> usize {
    (base as f64 * scale).round() as usize
}

/// `Some(skip verdict)` when the scaled path count is below the floor.
fn thin(n_paths: usize) -> Option<Verdict> {
    if n_paths < MIN_PATHS {
        Some(Verdict {
            status: CriterionStatus::Skipped(format!(
                "insufficient samples: {n_paths} paths after scaling, the SE-aware \
                 verdict needs at least {MIN_PATHS}"
            )),
            measured: f64::NAN,
            allowed: f64::NAN,
            details: String::new(),
        })
    } else {
        None
    }
}

fn spec_for(
    coeffs: CoefficientSet,
    x: f64,
    n_steps: usize,
    n_inner: usize,
) -> Result<ProblemSpec> {
    let mut spec = ProblemSpec::new(Arc::new(coeffs), vec![x], 1.0, n_steps)?;
    spec.n_inner = n_inner;
    Ok(spec)
}

/// Runs every criterion and collects the scoreboard. Criterion errors are
/// folded into `Fail` reports (with the error text in the details) so one
/// broken pipeline cannot hide the status of the others.
pub fn run_acceptance(path_scale: f64) -> Vec<CriterionReport> {
    type Check = (&'static str, fn(f64) -> Result<Verdict>);
    let checks: &[Check] = &[
        ("value-vs-closed-form", value_benchmark),
        ("weight-gradient", weight_gradient),
        ("gradient-cross-check", gradient_cross_check),
        ("z-identity", z_identity),
        ("weight-scaling", weight_scaling),
        ("tree-equivalence", tree_equivalence),
        ("jump-sizes", jump_sizes),
        ("field-oracle", field_oracle_agreement),
        ("growth-bounds", growth_bounds),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let started = Instant::now();
            let verdict = f(path_scale).unwrap_or_else(|e| Verdict {
                status: CriterionStatus::Fail,
                measured: f64::NAN,
                allowed: f64::NAN,
                details: format!("errored: {e}"),
            });
            CriterionReport {
                name,
                status: verdict.status,
                measured: verdict.measured,
                allowed: verdict.allowed,
                details: verdict.details,
                wall_ms: started.elapsed().as_millis(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Value estimate against the closed form of the driftless quadratic case.
// ---------------------------------------------------------------------------

/// With zero drift, unit diffusion, no driver, no backward noise, and
/// quadratic data, the field has the closed form `u(s, x) = x² + s`; at the
/// origin with horizon 1 the value is exactly 1. Checks the full sampled
/// pipeline at desk scale: 10⁵ paths, 100 steps, |u − 1| within
/// max(3·SE, 2·10⁻²), under 60 s.
fn value_benchmark(scale: f64) -> Result<Verdict> {
    const BUDGET_MS: u128 = 60_000;
    let n_inner = scaled_paths(100_000, scale);
    if let Some(v) = thin(n_inner) {
        return Ok(v);
    }
    let spec = spec_for(unit_case(1, TerminalSpec::Square), 0.0, 100, n_inner)?;
    let started = Instant::now();
    let (u, se) = evaluate_u(&spec, 0)?;
    let wall = started.elapsed().as_millis();

    let measured = (u - 1.0).abs();
    let allowed = (3.0 * se).max(2e-2);
    let details = format!("u = {u:.6} ± {se:.6} vs closed form 1 ({n_inner} paths, 100 steps)");
    Ok(Verdict::graded(measured, allowed, details).also_require(
        wall < BUDGET_MS,
        &format!("runtime {wall} ms over the {BUDGET_MS} ms budget"),
    ))
}

// ---------------------------------------------------------------------------
// 2. Derivative-free gradient of the same field.
// ---------------------------------------------------------------------------

/// Same quadratic case started at `x = 1`: the spatial gradient is exactly
/// 2. The weight estimator must land within 3·SE of it without ever
/// differentiating the data, and its SE must be at most 5·10⁻² at 10⁵
/// paths; under 60 s.
fn weight_gradient(scale: f64) -> Result<Verdict> {
    const BUDGET_MS: u128 = 60_000;
    const SE_CAP: f64 = 5e-2;
    let n_inner = scaled_paths(100_000, scale);
    if let Some(v) = thin(n_inner) {
        return Ok(v);
    }
    let spec = spec_for(unit_case(1, TerminalSpec::Square), 1.0, 100, n_inner)?;
    let started = Instant::now();
    let ens = Ensemble::sample(&spec, 0)?;
    let base = solve_bdsde(&ens)?;
    let est = estimate_grad_u_weights(&ens, &base)?;
    let wall = started.elapsed().as_millis();

    let (value, se) = (est.value[0], est.std_error[0]);
    let measured = (value - 2.0).abs();
    let allowed = 3.0 * se;
    let details =
        format!("gradient = {value:.6} ± {se:.6} vs closed form 2 ({n_inner} paths, 100 steps)");
    Ok(Verdict::graded(measured, allowed, details)
        .also_require(se <= SE_CAP, &format!("SE {se:.3e} over the {SE_CAP:.0e} cap"))
        .also_require(
            wall < BUDGET_MS,
            &format!("runtime {wall} ms over the {BUDGET_MS} ms budget"),
        ))
}

// ---------------------------------------------------------------------------
// 3. Weight gradient against the variational (tangent-system) gradient.
// ---------------------------------------------------------------------------

/// Nonlinear case `f(y) = sin y`, `g(y) = 0.2·cos y` on one frozen B-path:
/// the derivative-free weight estimate and the linearized backward system
/// compute the same gradient by entirely different routes; they must agree
/// within 3·combined SE, under 3 min.
fn gradient_cross_check(scale: f64) -> Result<Verdict> {
    const BUDGET_MS: u128 = 180_000;
    let n_inner = scaled_paths(20_000, scale);
    if let Some(v) = thin(n_inner) {
        return Ok(v);
    }
    let co = build_coefficients(
        1,
        DriftSpec::Zero,
        DiffusionSpec::Unit,
        DriverSpec::SinY,
        NoiseCoeffSpec::CosY(0.2),
        TerminalSpec::Sin,
    )?;
    let spec = spec_for(co, 0.3, 8, n_inner)?;
    let started = Instant::now();
    let ens = Ensemble::sample(&spec, 0)?;
    let base = solve_bdsde(&ens)?;
    let weights = estimate_grad_u_weights(&ens, &base)?;
    let tangent = solve_variational(&ens, &base)?;
    let wall = started.elapsed().as_millis();

    let measured = (weights.value[0] - tangent.grad_u_value[0]).abs();
    let allowed = 3.0 * combined_se(weights.std_error[0], tangent.std_error[0]);
    let details = format!(
        "weights {:.5} ± {:.5} vs tangent {:.5} ± {:.5} ({n_inner} paths)",
        weights.value[0], weights.std_error[0], tangent.grad_u_value[0], tangent.std_error[0],
    );
    Ok(Verdict::graded(measured, allowed, details).also_require(
        wall < BUDGET_MS,
        &format!("runtime {wall} ms over the {BUDGET_MS} ms budget"),
    ))
}

// ---------------------------------------------------------------------------
// 4. Three independent reads of the martingale integrand Z.
// ---------------------------------------------------------------------------

/// On the quadratic case, at five interior clock times, the solver's
/// regressed Z, the weight estimator's Z, and the finite-difference gradient
/// of the PDE reference field (times σ) must agree pairwise within 5%
/// relative plus 3·SE. All three are evaluated on the same paths and each
/// pair is differenced per path, so the SE is the honest spread of the
/// comparison itself; fitted spreads would understate it.
fn z_identity(scale: f64) -> Result<Verdict> {
    const N_STEPS: usize = 20;
    const CLOCKS: [usize; 5] = [3, 6, 10, 14, 17];
    let n_inner = scaled_paths(20_000, scale);
    if let Some(v) = thin(n_inner) {
        return Ok(v);
    }
    let spec = spec_for(unit_case(1, TerminalSpec::Square), 1.0, N_STEPS, n_inner)?;
    let ens = Ensemble::sample(&spec, 0)?;
    let base = solve_bdsde(&ens)?;
    let delta = spec.grid.delta();

    // Independent field reference on a wide mesh; 400 time steps puts every
    // requested clock time exactly on a stored frame.
    let space = SpaceGrid {
        center: 1.0,
        half_width: 8.0,
        n_nodes: 321,
    };
    let pde = pde_solve(&spec.coefficients, 1.0, space, 400)?;

    let mut worst = f64::NAN;
    let mut bridge_gap = 0.0f64;
    let mut lines = Vec::new();
    for s in CLOCKS {
        let tau = N_STEPS - s;
        let time = spec.grid.paper_time(s);

        // Raw (unprojected) samples of all three estimators on shared paths.
        let weight_raw: Vec<f64> = {
            let rows = weighted_rows(&ens, &base, s, 0)?;
            (0..n_inner)
                .map(|p| rows[p] * ens.bundles[p].sigma_at(tau)[0])
                .collect()
        };
        let solver_raw: Vec<f64> = (0..n_inner)
            .map(|p| base.y_at(tau + 1, p) * ens.noises[p].w_at(tau)[0] / delta)
            .collect();

        // Both estimators under test preserve the mean of their raw samples
        // through projection, so pairing the raw samples compares exactly
        // the published estimates. Verify that bridge rather than assume it.
        let estimate = estimate_z_weights(&ens, &base, s)?;
        let solver_fit = mean(&(0..n_inner).map(|p| base.z_at(tau, p)[0]).collect::<Vec<_>>());
        bridge_gap = bridge_gap
            .max((estimate.value[0] - mean(&weight_raw)).abs())
            .max((solver_fit - mean(&solver_raw)).abs());
        let frame = pde.frame_at_time(time);
        let fd_step = frame.spacing();
        let oracle_rows: Vec<f64> = ens
            .bundles
            .iter()
            .map(|b| {
                let grad = fd_gradient(|p| frame.eval(p[0]), b.x_at(tau), fd_step)?;
                Ok(grad[0] * b.sigma_at(tau)[0])
            })
            .collect::<Result<_>>()?;
        let reference = mean(&oracle_rows).abs();

        let mut pair = |a: &[f64], b: &[f64], label: &str| {
            let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let (gap, se) = mean_se(&diffs);
            let excess = gap.abs() / (0.05 * reference + 3.0 * se);
            if !(excess <= worst) {
                worst = excess;
                lines.push(format!(
                    "worst so far: {label} at s = {time:.2}: gap {gap:.4} ± {se:.4}"
                ));
            }
        };
        pair(&weight_raw, &solver_raw, "weights vs solver");
        pair(&solver_raw, &oracle_rows, "solver vs field");
        pair(&weight_raw, &oracle_rows, "weights vs field");
    }
    let details = format!(
        "5 clock times, 3 pairings, {n_inner} paths; {}",
        lines.last().map(String::as_str).unwrap_or("no comparisons")
    );
    Ok(Verdict::graded(worst, 1.0, details).also_require(
        bridge_gap <= 1e-9,
        &format!("projection failed to preserve a raw-sample mean (gap {bridge_gap:.2e})"),
    ))
}

// ---------------------------------------------------------------------------
// 5. Second moment of the weight process M.
// ---------------------------------------------------------------------------

/// In the driftless unit-diffusion case the weight process over any anchor
/// pair is a Brownian increment, so `E|M|²` equals the time gap exactly.
/// Ten anchor pairs spanning the grid, 10⁵ paths, each within 3·SE, under
/// 30 s.
fn weight_scaling(scale: f64) -> Result<Verdict> {
    const BUDGET_MS: u128 = 30_000;
    const N_STEPS: usize = 16;
    const PAIRS: [(usize, usize); 10] = [
        (0, 16),
        (0, 8),
        (8, 16),
        (0, 4),
        (4, 12),
        (12, 16),
        (2, 14),
        (6, 10),
        (3, 5),
        (0, 12),
    ];
    let n_inner = scaled_paths(100_000, scale);
    if let Some(v) = thin(n_inner) {
        return Ok(v);
    }
    let spec = spec_for(unit_case(1, TerminalSpec::Square), 0.0, N_STEPS, n_inner)?;
    let started = Instant::now();
    let ens = Ensemble::sample(&spec, 0)?;
    let delta = spec.grid.delta();

    let mut squares = vec![vec![0.0; n_inner]; PAIRS.len()];
    for p in 0..n_inner {
        let weights = compute_weights(&ens.bundles[p], &ens.noises[p], delta, &PAIRS)?;
        for (i, m) in weights.m_values.iter().enumerate() {
            squares[i][p] = m.iter().map(|v| v * v).sum();
        }
    }
    let mut worst = 0.0f64;
    let mut worst_note = String::new();
    for (i, &(r, s)) in PAIRS.iter().enumerate() {
        let (m2, se) = mean_se(&squares[i]);
        let gap = (s - r) as f64 * delta;
        let z = (m2 - gap).abs() / se;
        if z > worst {
            worst = z;
            worst_note = format!("worst pair ({r}, {s}): E|M|² = {m2:.5} vs {gap:.5}, {z:.2}σ");
        }
    }
    let wall = started.elapsed().as_millis();
    let details = format!("{} anchor pairs, {n_inner} paths; {worst_note}", PAIRS.len());
    Ok(Verdict::graded(worst, 3.0, details).also_require(
        wall < BUDGET_MS,
        &format!("runtime {wall} ms over the {BUDGET_MS} ms budget"),
    ))
}

// ---------------------------------------------------------------------------
// 6. Exact agreement with the enumeration tree.
// ---------------------------------------------------------------------------

/// In sign-flip mode with exact prefix conditional expectations the sampled
/// solver IS the tree recursion, so u, Y, and Z must match `tree_enumerate`
/// to 10⁻¹² node by node on a case where every coefficient is active.
///
/// The weight gradient (an exact expectation under enumeration) then
/// carries only time-discretization error against the tree's
/// bump-and-revalue gradient. That sub-check runs on a drift + state-
/// dependent-diffusion case with no driver and no backward noise, so it is
/// a deterministic constant of the scheme — a case with backward noise
/// would see a different B realization at each resolution (and seed) and
/// the pinned numbers would wobble. Measured: 0.086 at Δ = 1/4 falling to
/// 0.040 at Δ = 1/8; pinned at ≤ 5·10⁻² and a halving factor of ≤ 0.75.
fn tree_equivalence(_scale: f64) -> Result<Verdict> {
    const EXACT_TOL: f64 = 1e-12;
    const GRAD_TOL: f64 = 5e-2;
    const HALVING_FACTOR: f64 = 0.75;

    // Node exactness: every coefficient active, 8 steps.
    let rich = build_coefficients(
        1,
        DriftSpec::Linear(-0.5),
        DiffusionSpec::AffineSin {
            base: 1.0,
            amp: 0.2,
        },
        DriverSpec::SinYZ(0.3),
        NoiseCoeffSpec::CosY(0.2),
        TerminalSpec::Sin,
    )?;
    let mut spec = spec_for(rich, 0.3, 8, 2)?;
    spec.noise_mode = NoiseMode::Rademacher;
    let ens = Ensemble::enumerated(&spec, 0)?;
    let sol = solve_bdsde(&ens)?;
    let tree = tree_enumerate(&spec, ens.b_path(), 1e-4)?;
    let mut dev = (sol.u_value - tree.u_value).abs();
    for k in 0..=8 {
        for p in 0..sol.n_paths {
            let v = p >> (8 - k);
            dev = dev.max((sol.y_at(k, p) - tree.y[k][v]).abs());
            dev = dev.max((sol.z_at(k, p)[0] - tree.z[k][v]).abs());
        }
    }

    // Gradient discretization error at two resolutions.
    fn grad_error(n_steps: usize) -> Result<f64> {
        let co = build_coefficients(
            1,
            DriftSpec::Linear(-0.5),
            DiffusionSpec::AffineSin {
                base: 1.0,
                amp: 0.2,
            },
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Sin,
        )?;
        let mut spec = spec_for(co, 0.3, n_steps, 2)?;
        spec.noise_mode = NoiseMode::Rademacher;
        let ens = Ensemble::enumerated(&spec, 0)?;
        let sol = solve_bdsde(&ens)?;
        let tree = tree_enumerate(&spec, ens.b_path(), 1e-4)?;
        let grad = estimate_grad_u_weights(&ens, &sol)?.value[0];
        Ok((grad - tree.grad_u).abs())
    }
    let err8 = grad_error(8)?;
    let err4 = grad_error(4)?;

    let details = format!(
        "node deviation {dev:.2e}; gradient error {err8:.4} at Δ=1/8 vs {err4:.4} at Δ=1/4"
    );
    Ok(Verdict::graded(err8, GRAD_TOL, details)
        .also_require(
            dev <= EXACT_TOL,
            &format!("solver/tree node deviation {dev:.2e} over {EXACT_TOL:.0e}"),
        )
        .also_require(
            err8 <= HALVING_FACTOR * err4,
            &format!(
                "gradient error did not shrink with Δ: {err8:.4} vs {:.4} allowed",
                HALVING_FACTOR * err4
            ),
        ))
}

// ---------------------------------------------------------------------------
// 7. Gradient jumps across an interior partition node.
// ---------------------------------------------------------------------------

/// Terminal `x₀·x_{t/2}` in the driftless unit case: the integrand jumps at
/// the interior node. The one-sided limits read off by the discrete
/// estimator must differ by the jump system's ΔZ within 5% + 3·SE; at
/// ordinary (non-partition) interior times the same two-sided statistic
/// must vanish within 3·SE; and `E|ΔZ|²` must grow no faster than
/// `C·(1 + |x|²)` across start points (ratio ≤ 3× its x = 0 value).
fn jump_sizes(scale: f64) -> Result<Verdict> {
    const N_STEPS: usize = 8;
    let n_inner = scaled_paths(20_000, scale);
    let n_growth = scaled_paths(5_000, scale);
    if let Some(v) = thin(n_inner.min(n_growth)) {
        return Ok(v);
    }

    fn product_spec(x: f64, n_inner: usize) -> Result<ProblemSpec> {
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Product01,
        )?;
        let mut spec = spec_for(unit_case(1, TerminalSpec::Square), x, N_STEPS, n_inner)?;
        spec.coefficients = Arc::new(co);
        spec.partition = Some(Partition::new(&spec.grid, &[0.0, 0.5, 1.0])?);
        spec.validate()?;
        Ok(spec)
    }

    let spec = product_spec(1.0, n_inner)?;
    let ens = Ensemble::sample(&spec, 0)?;
    let base = solve_bdsde(&ens)?;
    let jumps = solve_jump_system(&ens, &base)?;
    let (dz, dz_se) = jumps.delta_z_mean_se(0);

    // One-sided limits one step inside each neighboring interval.
    let above = estimate_z_discrete(&ens, &base, 5)?;
    let below = estimate_z_discrete(&ens, &base, 3)?;
    let diff = above.value[0] - below.value[0];
    let se = combined_se(combined_se(above.std_error[0], below.std_error[0]), dz_se[0]);
    let jump_excess = (diff - dz[0]).abs() / (0.05 * dz[0].abs() + 3.0 * se);
    let mut worst = jump_excess;
    let mut details = format!(
        "one-sided gap {diff:.4} vs ΔZ {:.4} ± {:.4} ({n_inner} paths)",
        dz[0], se
    );

    // The same statistic across ordinary nodes must be pure noise.
    for j in [2usize, 6] {
        let hi = estimate_z_discrete(&ens, &base, j + 1)?;
        let lo = estimate_z_discrete(&ens, &base, j - 1)?;
        let stat = hi.value[0] - lo.value[0];
        let se = combined_se(hi.std_error[0], lo.std_error[0]);
        let excess = stat.abs() / (3.0 * se);
        if excess > worst {
            worst = excess;
            details = format!("smooth-node statistic {stat:.4} ± {se:.4} at clock {j}");
        }
    }

    // Quadratic growth of the jump size in the start point.
    let mut ratio0 = 0.0;
    for (i, &x) in [0.0f64, 1.0, 2.0, 4.0].iter().enumerate() {
        let spec = product_spec(x, n_growth)?;
        let ens = Ensemble::sample(&spec, 0)?;
        let base = solve_bdsde(&ens)?;
        let jumps = solve_jump_system(&ens, &base)?;
        let m2 = mean(
            &(0..ens.n_paths())
                .map(|p| jumps.delta_z_at(0, p).iter().map(|v| v * v).sum())
                .collect::<Vec<f64>>(),
        );
        let ratio = m2 / (1.0 + x * x);
        if i == 0 {
            ratio0 = ratio;
        } else {
            let excess = ratio / (3.0 * ratio0);
            if excess > worst {
                worst = excess;
                details = format!("E|ΔZ|² ratio {ratio:.3} at x = {x} vs {ratio0:.3} at 0");
            }
        }
    }
    Ok(Verdict::graded(worst, 1.0, details))
}

// ---------------------------------------------------------------------------
// 8. Monte Carlo value against the pathwise field reference.
// ---------------------------------------------------------------------------

/// With `g(y) = 0.2·cos y` the field is genuinely random; on one frozen
/// B-path the splitting field solver is an independent reference for the
/// same realization. The Monte Carlo value must match it within 5·10⁻² at
/// the default resolution, and the gap must not grow when both the time
/// step and the field mesh are halved (it either shrinks or is already at
/// the Monte Carlo noise floor, 3·SE of the finer run); under 5 min.
fn field_oracle_agreement(scale: f64) -> Result<Verdict> {
    const BUDGET_MS: u128 = 300_000;
    let n_coarse = scaled_paths(20_000, scale);
    let n_fine = scaled_paths(40_000, scale);
    if let Some(v) = thin(n_coarse) {
        return Ok(v);
    }

    fn run(n_steps: usize, n_inner: usize, n_nodes: usize) -> Result<(f64, f64)> {
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::Zero,
            NoiseCoeffSpec::CosY(0.2),
            TerminalSpec::Square,
        )?;
        let spec = spec_for(co, 0.0, n_steps, n_inner)?;
        let ens = Ensemble::sample(&spec, 0)?;
        let sol = solve_bdsde(&ens)?;
        let space = SpaceGrid {
            center: 0.0,
            half_width: 10.0,
            n_nodes,
        };
        let field = spde_solve_pathwise(&spec.coefficients, 1.0, space, ens.b_path())?;
        let reference = field.final_frame().eval(0.0)?;
        Ok(((sol.u_value - reference).abs(), sol.std_error))
    }

    let started = Instant::now();
    let (err_coarse, _) = run(32, n_coarse, 201)?;
    let (err_fine, se_fine) = run(64, n_fine, 401)?;
    let wall = started.elapsed().as_millis();

    let floor = 3.0 * se_fine;
    let details = format!(
        "gap {err_coarse:.4} at 32 steps vs {err_fine:.4} at 64 (noise floor {floor:.4})"
    );
    Ok(Verdict::graded(err_coarse, 5e-2, details)
        .also_require(
            err_fine <= err_coarse.max(floor),
            &format!("refined gap {err_fine:.4} grew past {err_coarse:.4} and the noise floor"),
        )
        .also_require(
            wall < BUDGET_MS,
            &format!("runtime {wall} ms over the {BUDGET_MS} ms budget"),
        ))
}

// ---------------------------------------------------------------------------
// 9. Growth of the solution in the start point.
// ---------------------------------------------------------------------------

/// For Lipschitz data the solution grows at most linearly, so
/// `E[sup|Y|²] / (1 + |x|²)` and `max|Z| / (1 + |x|)` must stay within a
/// fixed factor (3×) of their x = 0 values across start points out to
/// x = 8. Run in enumeration mode: the ratios are exact expectations, no
/// sampling error to tune around.
fn growth_bounds(_scale: f64) -> Result<Verdict> {
    let mut sup_ratio0 = 0.0;
    let mut z_ratio0 = 0.0;
    let mut worst = 0.0f64;
    let mut details = String::new();
    for (i, &x) in [0.0f64, 1.0, 2.0, 4.0, 8.0].iter().enumerate() {
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::SinY,
            NoiseCoeffSpec::CosY(0.2),
            TerminalSpec::Identity,
        )?;
        let mut spec = spec_for(co, x, 8, 2)?;
        spec.noise_mode = NoiseMode::Rademacher;
        let ens = Ensemble::enumerated(&spec, 0)?;
        let sol = solve_bdsde(&ens)?;

        let sup2: Vec<f64> = (0..sol.n_paths)
            .map(|p| {
                (0..=8)
                    .map(|k| sol.y_at(k, p) * sol.y_at(k, p))
                    .fold(0.0, f64::max)
            })
            .collect();
        let z_max = (0..=8)
            .flat_map(|k| (0..sol.n_paths).map(move |p| (k, p)))
            .map(|(k, p)| sol.z_at(k, p)[0].abs())
            .fold(0.0, f64::max);

        let sup_ratio = mean(&sup2) / (1.0 + x * x);
        let z_ratio = z_max / (1.0 + x.abs());
        if i == 0 {
            sup_ratio0 = sup_ratio;
            z_ratio0 = z_ratio;
            details = format!("x = 0 baselines: E[sup|Y|²] ratio {sup_ratio:.3}, |Z| ratio {z_ratio:.3}");
        } else {
            for (label, r) in [("E[sup|Y|²]", sup_ratio / sup_ratio0), ("max|Z|", z_ratio / z_ratio0)] {
                if r > worst {
                    worst = r;
                    details = format!("{label} ratio at x = {x} is {r:.3}× the x = 0 value");
                }
            }
        }
    }
    Ok(Verdict::graded(worst, 3.0, details))
}
