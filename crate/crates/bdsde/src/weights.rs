//! Integration-by-parts weight processes and derivative-free estimators.
//!
//! The pair of stochastic integrals
//!
//! ```text
//! M^s_r = Σ_{slots k in [r, s)} [σ⁻¹·∇X]ᵀ_k · ΔW_k       (column d-vector)
//! N^s_r = (1/(s−r)) · (M^s_r)ᵀ · (∇X_s)⁻¹                 (row d-vector)
//! ```
//!
//! turns gradients of the value field into plain averages: weighting the
//! terminal value and the accumulated driver/noise terms by `N` moves the
//! derivative off the coefficients and onto the noise, so the estimators
//! here never touch a coefficient partial. The `(∇X_s)⁻¹` factor sits at
//! the anchor `s` where the derivative is taken: it rebases the global
//! tangent inside `M` onto the flow restarted at `s` (at `s` equal to the
//! start time it is the identity). That makes them the independent
//! counterpart of the variational system — the two must agree on smooth
//! problems, which is one of the central identities this crate exists to
//! check.
//!
//! Anchor indices are clock-grid indices `0..=n_steps` with `r < s`; the
//! `1/(s−r)` factor rules out `r = s`, and the discrete integrals exclude
//! the `r = s` sliver (left-closed, right-open) for the same reason. All
//! accumulation runs on the fixed pairwise order so results are bit-stable
//! across thread counts.
//!
//! Also here: the discrete path-derivative read-offs `D_s X_r` (and their
//! `Y`/`Z` versions through a gradient solution), which the weight identities
//! are built from.

use crate::coeffs::Terminal;
use crate::error::{Error, Result};
use crate::forward::ForwardBundle;
use crate::noise::NoisePath;
use crate::regression::{PolyBasis, RegressionPlan};
use crate::solver::{interior_tau_nodes, BackwardSolution, Ensemble};
use crate::stats::mean_se;
use crate::variational::VariationalSolution;

/// The weight integrals for one path at a list of requested anchor pairs.
#[derive(Debug, Clone)]
pub struct WeightProcess {
    pub dim: usize,
    /// The requested `(r_index, s_index)` anchor pairs.
    pub pairs: Vec<(usize, usize)>,
    /// `M^s_r` per pair, column layout.
    pub m_values: Vec<Vec<f64>>,
    /// `N^s_r` per pair, row layout.
    pub n_values: Vec<Vec<f64>>,
}

/// One derivative-free estimate with its sampling metadata.
#[derive(Debug, Clone)]
pub struct WeightEstimate {
    /// Componentwise estimate (a gradient row, or a `Z` row).
    pub value: Vec<f64>,
    /// Componentwise standard error: sample standard deviation of the
    /// per-path weighted-functional samples divided by √n_samples. For the
    /// projected (`Z`) estimates this is measured on the functional *before*
    /// projection — the projection preserves the mean, so the raw spread is
    /// what governs the mean's sampling error.
    pub std_error: Vec<f64>,
    pub n_samples: usize,
    /// Where the estimate is anchored, for records and logs.
    pub anchor: String,
    /// The per-path rows the estimate averages, `n_samples × dim`.
    pub per_path: Vec<f64>,
}

impl WeightEstimate {
    fn from_rows(rows: Vec<f64>, dim: usize, anchor: String) -> WeightEstimate {
        let n_samples = rows.len() / dim;
        let mut value = vec![0.0; dim];
        let mut std_error = vec![0.0; dim];
        let mut column = vec![0.0; n_samples];
        for j in 0..dim {
            for p in 0..n_samples {
                column[p] = rows[p * dim + j];
            }
            let (m, se) = mean_se(&column);
            value[j] = m;
            std_error[j] = se;
        }
        WeightEstimate {
            value,
            std_error,
            n_samples,
            anchor,
            per_path: rows,
        }
    }
}

/// Prefix sums of the weight integrand over one path: `S_K` is the
/// accumulated integral over the first `K` reversed slots, so any anchor
/// pair is a difference of two prefixes — which is also what makes the
/// interval-additivity of `M` hold by construction.
struct WeightPrefix {
    dim: usize,
    n_steps: usize,
    /// `(n_steps + 1) × dim`.
    s: Vec<f64>,
}

impl WeightPrefix {
    fn new(bundle: &ForwardBundle, noise: &NoisePath) -> WeightPrefix {
        let d = bundle.dim;
        let n = bundle.n_steps;
        let mut s = vec![0.0; (n + 1) * d];
        let mut a = vec![0.0; d * d];
        for k in 0..n {
            let sig_inv = bundle.sigma_inv_at(k);
            let gx = bundle.grad_at(k);
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = (0..d).map(|q| sig_inv[i * d + q] * gx[q * d + j]).sum();
                }
            }
            let dw = noise.w_at(k);
            for i in 0..d {
                // (Aᵀ·ΔW)_i accumulated into the next prefix row.
                let inc: f64 = (0..d).map(|c| a[c * d + i] * dw[c]).sum();
                s[(k + 1) * d + i] = s[k * d + i] + inc;
            }
        }
        WeightPrefix { dim: d, n_steps: n, s }
    }

    /// `M^s_r` for clock indices `r < s` (reversed slots `[n−s, n−r)`).
    fn m(&self, r_index: usize, s_index: usize) -> Vec<f64> {
        let d = self.dim;
        let hi = &self.s[(self.n_steps - r_index) * d..(self.n_steps - r_index + 1) * d];
        let lo = &self.s[(self.n_steps - s_index) * d..(self.n_steps - s_index + 1) * d];
        (0..d).map(|i| hi[i] - lo[i]).collect()
    }

    /// `N^s_r` row for clock indices `r < s`.
    ///
    /// The tangent inverse is taken at the anchor `s` — the side the
    /// gradient is taken on. `M` accumulates the global tangent `∇X`, but a
    /// gradient with respect to the state at `s` needs the tangent of the
    /// flow restarted there, `∇X_τ·(∇X_s)⁻¹`, so the anchor factor rebases
    /// it. Using the lower index `r` instead passes every zero-drift test
    /// (the factor is the identity) but breaks against the enumeration
    /// tree's bump-and-revalue gradient as soon as the drift is nonzero.
    fn n_row(&self, bundle: &ForwardBundle, delta: f64, r_index: usize, s_index: usize) -> Vec<f64> {
        let d = self.dim;
        let m = self.m(r_index, s_index);
        let gap = (s_index - r_index) as f64 * delta;
        let ginv = bundle.grad_inv_at(self.n_steps - s_index);
        (0..d)
            .map(|j| (0..d).map(|i| m[i] * ginv[i * d + j]).sum::<f64>() / gap)
            .collect()
    }
}

/// Accumulates the weight integrals along one path for the requested anchor
/// pairs. Pairs must satisfy `r < s ≤ n_steps`; `r = s` is rejected because
/// of the `1/(s−r)` normalization in `N`.
pub fn compute_weights(
    bundle: &ForwardBundle,
    noise: &NoisePath,
    delta: f64,
    pairs: &[(usize, usize)],
) -> Result<WeightProcess> {
    if bundle.n_steps != noise.n_steps || bundle.dim != noise.dim {
        return Err(Error::validation(
            "bundle and noise path have different shapes",
        ));
    }
    for &(r, s) in pairs {
        if r >= s {
            return Err(Error::validation(format!(
                "weight anchors need r < s, got ({r}, {s}); the 1/(s−r) \
                 normalization has no value on an empty interval"
            )));
        }
        if s > bundle.n_steps {
            return Err(Error::validation(format!(
                "anchor index {s} beyond the grid ({} steps)",
                bundle.n_steps
            )));
        }
    }
    let prefix = WeightPrefix::new(bundle, noise);
    let m_values: Vec<Vec<f64>> = pairs.iter().map(|&(r, s)| prefix.m(r, s)).collect();
    let n_values: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(r, s)| prefix.n_row(bundle, delta, r, s))
        .collect();
    Ok(WeightProcess {
        dim: bundle.dim,
        pairs: pairs.to_vec(),
        m_values,
        n_values,
    })
}

/// The weighted functional whose conditional expectation is the gradient
/// row at clock index `s`: terminal value times the terminal weight plus
/// the accumulated driver and noise terms, each weighted by `N` anchored at
/// its own (possibly floored) time.
///
/// `floor_index` is the left endpoint of the partition interval containing
/// `s` — 0 for a whole-interval terminal — and every anchor is clamped to
/// it, including the terminal's.
///
/// Crate-visible so paired cross-estimator checks can difference these raw
/// samples against the solver's raw regression targets path by path; the
/// spread of those differences is the honest error of the comparison, which
/// either estimator's fitted spread understates.
pub(crate) fn weighted_rows(
    ens: &Ensemble,
    base: &BackwardSolution,
    s_index: usize,
    floor_index: usize,
) -> Result<Vec<f64>> {
    let spec = &ens.spec;
    let d = spec.dim();
    let n = spec.grid.n_steps();
    let delta = spec.grid.delta();
    let co = ens.coeffs.as_ref();
    let partition = spec.partition_or_trivial();
    let term_taus: Vec<usize> = (0..partition.n_points())
        .map(|j| n - partition.grid_index(j))
        .collect();

    let mut rows = vec![0.0; ens.n_paths() * d];
    let mut g_buf = vec![0.0; d];
    for (p, (bundle, noise)) in ens.bundles.iter().zip(&ens.noises).enumerate() {
        let prefix = WeightPrefix::new(bundle, noise);
        let row = &mut rows[p * d..(p + 1) * d];

        let l_val = match &co.terminal {
            Terminal::Point { value, .. } => value(bundle.x_at(n)),
            Terminal::MultiPoint { value, .. } => {
                let args: Vec<&[f64]> = term_taus.iter().map(|&t| bundle.x_at(t)).collect();
                value(&args)
            }
        };
        let n_term = prefix.n_row(bundle, delta, floor_index, s_index);
        for j in 0..d {
            row[j] = l_val * n_term[j];
        }

        // Clock indices r strictly below s; the r = s sliver is excluded.
        for r in 0..s_index {
            let tau = n - r;
            let t_r = spec.grid.paper_time(r);
            let x_r = bundle.x_at(tau);
            let y_r = base.y_at(tau, p);
            let z_r = base.z_at(tau, p);
            let f_val = (co.driver)(t_r, x_r, y_r, z_r);
            (co.noise_coeff)(t_r, x_r, y_r, &mut g_buf);
            let db = noise.b_paper(r);
            let g_db: f64 = (0..d).map(|c| g_buf[c] * db[c]).sum();
            let n_r = prefix.n_row(bundle, delta, r.max(floor_index), s_index);
            for j in 0..d {
                row[j] += (f_val * delta + g_db) * n_r[j];
            }
        }
    }
    Ok(rows)
}

/// Derivative-free estimate of the field gradient `∂ₓu(t, x)`: the plain
/// average of the weighted functional anchored at the start time. Uses the
/// base solution only for the driver's `(y, z)` arguments — no coefficient
/// partial is evaluated anywhere.
pub fn estimate_grad_u_weights(
    ens: &Ensemble,
    base: &BackwardSolution,
) -> Result<WeightEstimate> {
    let spec = &ens.spec;
    let n = spec.grid.n_steps();
    check_base(ens, base)?;
    let rows = weighted_rows(ens, base, n, 0)?;
    Ok(WeightEstimate::from_rows(
        rows,
        spec.dim(),
        format!("gradient at the start time (s = {})", spec.grid.horizon()),
    ))
}

fn check_base(ens: &Ensemble, base: &BackwardSolution) -> Result<()> {
    if base.n_steps != ens.spec.grid.n_steps()
        || base.n_paths != ens.n_paths()
        || base.dim != ens.spec.dim()
    {
        return Err(Error::validation(
            "base solution does not match the ensemble it is paired with",
        ));
    }
    Ok(())
}

/// Shared core of the `Z` estimators: project the weighted functional on a
/// polynomial basis in the state at `s` (plus any already-visited partition
/// states the terminal looks at), then multiply by `σ(s, X_s)` pathwise.
///
/// Returns the fitted per-path rows together with the standard error of the
/// *unprojected* functional: the projection preserves the ensemble mean, so
/// the sampling error of the reported average is governed by the raw
/// functional's spread, which the fitted values no longer show.
fn z_rows(
    ens: &Ensemble,
    base: &BackwardSolution,
    s_index: usize,
    floor_index: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = &ens.spec;
    let d = spec.dim();
    let n = spec.grid.n_steps();
    let n_paths = ens.n_paths();
    let tau_s = n - s_index;

    let rows = weighted_rows(ens, base, s_index, floor_index)?;

    // Basis variables: X at s plus the partition states at strictly later
    // clock times (reversed node strictly below tau_s), mirroring the
    // solver's conditioning at the same node.
    let aug: Vec<usize> = interior_tau_nodes(spec)
        .into_iter()
        .filter(|&t| t < tau_s)
        .collect();
    let n_vars = d * (1 + aug.len());
    let mut points = vec![0.0; n_paths * n_vars];
    for (p, bundle) in ens.bundles.iter().enumerate() {
        let row = &mut points[p * n_vars..(p + 1) * n_vars];
        row[..d].copy_from_slice(bundle.x_at(tau_s));
        for (slot, &tau) in aug.iter().enumerate() {
            row[(slot + 1) * d..(slot + 2) * d].copy_from_slice(bundle.x_at(tau));
        }
    }
    let basis = PolyBasis::new(n_vars, spec.regression_degree);
    let plan = RegressionPlan::build(&basis, &points, n_paths, tau_s)?;

    let mut targets = vec![0.0; n_paths];
    let mut fitted = vec![0.0; n_paths];
    let mut out = vec![0.0; n_paths * d];
    for j in 0..d {
        for p in 0..n_paths {
            targets[p] = rows[p * d + j];
        }
        plan.fitted_into(&targets, &mut fitted);
        for p in 0..n_paths {
            out[p * d + j] = fitted[p];
        }
    }
    // Multiply each fitted gradient row by σ(s, X_s); do the same to the
    // raw rows to read off the honest sampling error of the mean.
    let mut z = vec![0.0; n_paths * d];
    let mut raw_z = vec![0.0; n_paths * d];
    for (p, bundle) in ens.bundles.iter().enumerate() {
        let sig = bundle.sigma_at(tau_s);
        for jp in 0..d {
            z[p * d + jp] = (0..d).map(|q| out[p * d + q] * sig[q * d + jp]).sum();
            raw_z[p * d + jp] = (0..d).map(|q| rows[p * d + q] * sig[q * d + jp]).sum();
        }
    }
    let mut raw_se = vec![0.0; d];
    let mut column = vec![0.0; n_paths];
    for j in 0..d {
        for p in 0..n_paths {
            column[p] = raw_z[p * d + j];
        }
        raw_se[j] = mean_se(&column).1;
    }
    Ok((z, raw_se))
}

/// Derivative-free estimate of the integrand `Z` at clock index `s` along
/// the ensemble, for whole-interval (single-time) terminals.
///
/// `s_index = 0` is rejected: the weight normalization degenerates at the
/// terminal node, where the backward solver already reports `Z`.
pub fn estimate_z_weights(
    ens: &Ensemble,
    base: &BackwardSolution,
    s_index: usize,
) -> Result<WeightEstimate> {
    let spec = &ens.spec;
    let n = spec.grid.n_steps();
    check_base(ens, base)?;
    if s_index == 0 {
        return Err(Error::validation(
            "the weight estimate of Z needs s > 0; at the terminal node the \
             backward solver's Z is the defined value",
        ));
    }
    if s_index > n {
        return Err(Error::validation(format!(
            "anchor index {s_index} beyond the grid ({n} steps)"
        )));
    }
    let (rows, raw_se) = z_rows(ens, base, s_index, 0)?;
    let mut est = WeightEstimate::from_rows(
        rows,
        spec.dim(),
        format!("Z at clock time {}", spec.grid.paper_time(s_index)),
    );
    est.std_error = raw_se;
    Ok(est)
}

/// Derivative-free `Z` estimate for partitioned (multi-time) terminals:
/// identical to [`estimate_z_weights`] except every weight anchor is floored
/// at the left endpoint of the partition interval containing `s`, which is
/// what keeps the estimate finite-variance between the terminal's times.
///
/// `s` exactly on a partition node is rejected — the integrand jumps there,
/// so only the one-sided limits (one grid step inside each neighbor
/// interval) are meaningful.
pub fn estimate_z_discrete(
    ens: &Ensemble,
    base: &BackwardSolution,
    s_index: usize,
) -> Result<WeightEstimate> {
    let spec = &ens.spec;
    let n = spec.grid.n_steps();
    check_base(ens, base)?;
    if s_index == 0 || s_index > n {
        return Err(Error::validation(format!(
            "anchor index {s_index} outside the open grid range 1..={n}"
        )));
    }
    let partition = spec.partition_or_trivial();
    let interval = partition.interval_of(s_index).map_err(|_| {
        Error::validation(format!(
            "clock index {s_index} sits on a partition node, where the \
             integrand jumps; estimate the one-sided limits a step inside \
             each neighboring interval instead"
        ))
    })?;
    let floor_index = partition.grid_index(interval - 1);
    let (rows, raw_se) = z_rows(ens, base, s_index, floor_index)?;
    let mut est = WeightEstimate::from_rows(
        rows,
        spec.dim(),
        format!(
            "Z at clock time {} (anchors floored at {})",
            spec.grid.paper_time(s_index),
            partition.times()[interval - 1]
        ),
    );
    est.std_error = raw_se;
    Ok(est)
}

/// Discrete path derivative `D_s X_r = ∇X_r·(∇X_s)⁻¹·σ(s, X_s)` for bundle
/// node indices `s ≤ r`, and the zero matrix for `s > r` — the indicator is
/// part of the definition, not an error.
pub fn malliavin_derivative_x(bundle: &ForwardBundle, s_index: usize, r_index: usize) -> Vec<f64> {
    let d = bundle.dim;
    if s_index > r_index {
        return vec![0.0; d * d];
    }
    let gr = bundle.grad_at(r_index);
    let gs_inv = bundle.grad_inv_at(s_index);
    let sig = bundle.sigma_at(s_index);
    let mut tmp = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            tmp[i * d + j] = (0..d).map(|q| gr[i * d + q] * gs_inv[q * d + j]).sum();
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|q| tmp[i * d + q] * sig[q * d + j]).sum();
        }
    }
    out
}

/// `D_s Y_r` on one path through a gradient solution: `∇Y_r·(∇X_s)⁻¹·σ`,
/// zero row for `s > r`.
pub fn malliavin_derivative_y(
    bundle: &ForwardBundle,
    var: &VariationalSolution,
    path: usize,
    s_index: usize,
    r_index: usize,
) -> Vec<f64> {
    let d = bundle.dim;
    if s_index > r_index {
        return vec![0.0; d];
    }
    let gy = var.grad_y_at(r_index, path);
    let gs_inv = bundle.grad_inv_at(s_index);
    let sig = bundle.sigma_at(s_index);
    let mut tmp = vec![0.0; d];
    for j in 0..d {
        tmp[j] = (0..d).map(|i| gy[i] * gs_inv[i * d + j]).sum();
    }
    (0..d)
        .map(|j| (0..d).map(|q| tmp[q] * sig[q * d + j]).sum())
        .collect()
}

/// `D_s Z_r` on one path through a gradient solution: `∇Z_r·(∇X_s)⁻¹·σ`,
/// zero for `s > r`. Row-major `d×d`, rows indexing the Z component.
pub fn malliavin_derivative_z(
    bundle: &ForwardBundle,
    var: &VariationalSolution,
    path: usize,
    s_index: usize,
    r_index: usize,
) -> Vec<f64> {
    let d = bundle.dim;
    if s_index > r_index {
        return vec![0.0; d * d];
    }
    let gz = var.grad_z_at(r_index, path);
    let gs_inv = bundle.grad_inv_at(s_index);
    let sig = bundle.sigma_at(s_index);
    let mut out = vec![0.0; d * d];
    for c in 0..d {
        let mut tmp = vec![0.0; d];
        for j in 0..d {
            tmp[j] = (0..d).map(|i| gz[c * d + i] * gs_inv[i * d + j]).sum();
        }
        for j in 0..d {
            out[c * d + j] = (0..d).map(|q| tmp[q] * sig[q * d + j]).sum();
        }
    }
    out
}
