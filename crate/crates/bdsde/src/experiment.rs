//! Experiment runner: a parsed config in, comma-separated records out.
//!
//! Every CLI subcommand funnels through [`run_experiment`]. It builds the
//! problem from an [`ExperimentConfig`], dispatches on the experiment kind,
//! and returns a flat list of [`ResultRecord`]s plus an optional per-path
//! dump. For a fixed config the records are deterministic — the wall-clock
//! column is the only field that changes between identical runs — so a
//! results file doubles as a regression fixture.
//!
//! # Record schema
//!
//! Every results file starts with [`CSV_HEADER`] and carries one record per
//! line:
//!
//! | column          | meaning                                                          |
//! |-----------------|------------------------------------------------------------------|
//! | `experiment_id` | the config's free-form run label                                 |
//! | `kind`          | the experiment-kind token the config was validated against      |
//! | `config_hash`   | 16-hex-digit digest of the canonical config text                 |
//! | `quantity`      | what was measured: `u`, `grad_u[j]`, `z[j]`, `delta_z[j]`, or an acceptance criterion name |
//! | `anchor`        | where it was measured (outer index, clock time, ladder rung, …)  |
//! | `value`         | the estimate                                                     |
//! | `std_error`     | its sampling standard error (0 when the value is deterministic)  |
//! | `oracle`        | independent reference value, when the record has one; acceptance rows carry the criterion's allowance here |
//! | `abs_error`     | `|value − oracle|`, when the oracle is a target value            |
//! | `pass`          | `true`/`false` when the record is gated, empty otherwise         |
//! | `wall_ms`       | milliseconds since the experiment started when the record was produced (acceptance rows carry the criterion's own wall time) |
//!
//! Text fields are sanitized: any comma inside them becomes `;`, so a line
//! always splits into exactly eleven columns. Empty optional columns stay
//! empty. Floating-point columns use the shortest round-trip decimal form,
//! matching the config's canonical text.
//!
//! # Aggregation over outer paths
//!
//! The estimated quantities (`u`, gradients, `Z` rows, jump sizes) are
//! conditional on the frozen B-path, so each outer index gets its own rows.
//! When the config asks for more than one outer path, a final row per
//! quantity with anchor `outer-mean` reports the grand mean; its standard
//! error is the spread of the per-outer values over √n_outer, which already
//! includes the inner sampling noise and is therefore the honest (slightly
//! conservative at small n_outer) error of the grand mean.

use std::time::Instant;

use crate::acceptance::{run_acceptance, CriterionReport, CriterionStatus};
use crate::coeffs::NoiseCoeffSpec;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::jumps::solve_jump_system;
use crate::oracle::pde::{pde_solve, SpaceGrid};
use crate::oracle::spde::spde_solve_pathwise;
use crate::problem::ProblemSpec;
use crate::solver::{solve_bdsde, BackwardSolution, CondExpEngine, Ensemble};
use crate::stats::mean_se;
use crate::variational::solve_variational;
use crate::weights::{estimate_grad_u_weights, estimate_z_discrete, estimate_z_weights};

/// Column header every results file starts with.
pub const CSV_HEADER: &str = "experiment_id,kind,config_hash,quantity,anchor,\
                              value,std_error,oracle,abs_error,pass,wall_ms";

/// Spatial window of the field-equation oracles: centered on the start
/// point, wide enough that the Dirichlet truncation is invisible at the
/// shipped horizons, on a mesh fine enough for the comparison tolerance.
const ORACLE_HALF_WIDTH: f64 = 10.0;
const ORACLE_NODES: usize = 401;

/// Time resolution of the deterministic reference solve. The pathwise field
/// reference has no such knob — its grid is locked to the B-path.
const ORACLE_REF_TIME_STEPS: usize = 800;

/// Deterministic part of the oracle-agreement gate: time-discretization,
/// splitting, and interpolation bias at desk resolutions sit well under
/// this, so `|estimate − reference| ≤ 5e-2 + 3·SE` separates real
/// disagreement from resolution noise.
const ORACLE_BIAS_ALLOWANCE: f64 = 5e-2;

/// The per-path dump lists every node of at most this many inner paths;
/// beyond that a dump stops being a debugging aid and starts being a
/// dataset.
const DUMP_MAX_PATHS: usize = 64;

/// One line of a results file. Construct through [`run_experiment`]; render
/// through [`ResultRecord::csv_line`] or [`ExperimentOutcome::to_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub quantity: String,
    pub anchor: String,
    pub value: f64,
    pub std_error: f64,
    pub oracle: Option<f64>,
    pub abs_error: Option<f64>,
    pub pass: Option<bool>,
    pub wall_ms: u128,
}

impl ResultRecord {
    /// The record as one comma-separated line (no trailing newline). Commas
    /// inside text fields are replaced by `;` so the column count is fixed.
    pub fn csv_line(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            sanitize(&self.experiment_id),
            self.kind.as_str(),
            sanitize(&self.config_hash),
            sanitize(&self.quantity),
            sanitize(&self.anchor),
            self.value,
            self.std_error,
            opt(&self.oracle),
            opt(&self.abs_error),
            self.pass.map(|p| p.to_string()).unwrap_or_default(),
            self.wall_ms,
        )
    }
}

fn sanitize(text: &str) -> String {
    text.replace(',', ";")
}

/// Everything one experiment run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<ResultRecord>,
    /// Per-path dump (its own small CSV), present when the config asked for
    /// one and the kind has an ensemble to dump.
    pub dump: Option<String>,
}

impl ExperimentOutcome {
    /// True unless some gated record failed. Ungated records can't fail.
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.pass != Some(false))
    }

    /// The full results file: header plus one line per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for record in &self.records {
            out.push_str(&record.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Runs the experiment a validated config describes and returns its
/// records in a deterministic order (outer index, then anchor, then
/// component).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match cfg.kind {
        ExperimentKind::UEstimate => run_u_estimate(cfg),
        ExperimentKind::GradWeights => run_gradient(cfg, GradMethod::Weights),
        ExperimentKind::GradVariational => run_gradient(cfg, GradMethod::Variational),
        ExperimentKind::ZProfile => run_z_profile(cfg, false),
        ExperimentKind::ZDiscrete => run_z_profile(cfg, true),
        ExperimentKind::Jumps => run_jumps(cfg),
        ExperimentKind::OracleCompare => run_oracle_compare(cfg),
        ExperimentKind::Convergence => run_convergence(cfg),
        ExperimentKind::Acceptance => run_acceptance_kind(cfg),
    }
}

/// Samples (or enumerates, per the configured engine) one inner ensemble
/// and solves the backward system on it.
fn build_pair(
    spec: &ProblemSpec,
    engine: CondExpEngine,
    outer: usize,
) -> Result<(Ensemble, BackwardSolution)> {
    let ens = match engine {
        CondExpEngine::Regression => Ensemble::sample(spec, outer)?,
        CondExpEngine::PrefixExact => Ensemble::enumerated(spec, outer)?,
    };
    let base = solve_bdsde(&ens)?;
    Ok((ens, base))
}

/// Shared record-building state: identity columns read once from the
/// config, a start instant for the wall-clock column, and the growing list.
struct Recorder {
    experiment_id: String,
    kind: ExperimentKind,
    config_hash: String,
    started: Instant,
    records: Vec<ResultRecord>,
}

impl Recorder {
    fn new(cfg: &ExperimentConfig) -> Recorder {
        Recorder {
            experiment_id: cfg.experiment_id.clone(),
            kind: cfg.kind,
            config_hash: cfg.hash(),
            started: Instant::now(),
            records: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        quantity: impl Into<String>,
        anchor: impl Into<String>,
        value: f64,
        std_error: f64,
        oracle: Option<f64>,
        abs_error: Option<f64>,
        pass: Option<bool>,
    ) {
        self.records.push(ResultRecord {
            experiment_id: self.experiment_id.clone(),
            kind: self.kind,
            config_hash: self.config_hash.clone(),
            quantity: quantity.into(),
            anchor: anchor.into(),
            value,
            std_error,
            oracle,
            abs_error,
            pass,
            wall_ms: self.started.elapsed().as_millis(),
        });
    }

    fn finish(self, dump: Option<String>) -> ExperimentOutcome {
        ExperimentOutcome {
            records: self.records,
            dump,
        }
    }
}

/// Accumulates per-outer values of a set of labelled quantities and emits
/// the `outer-mean` rows — only when there was more than one outer path, so
/// single-B runs don't repeat themselves.
struct OuterMeans {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl OuterMeans {
    fn new() -> OuterMeans {
        OuterMeans {
            labels: Vec::new(),
            columns: Vec::new(),
        }
    }

    fn record(&mut self, label: &str, value: f64) {
        match self.labels.iter().position(|l| l == label) {
            Some(i) => self.columns[i].push(value),
            None => {
                self.labels.push(label.to_string());
                self.columns.push(vec![value]);
            }
        }
    }

    fn emit(self, rec: &mut Recorder) {
        for (label, column) in self.labels.iter().zip(&self.columns) {
            if column.len() > 1 {
                let (m, se) = mean_se(column);
                rec.push(label.clone(), "outer-mean", m, se, None, None, None);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The individual kinds.
// ---------------------------------------------------------------------------

fn run_u_estimate(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = cfg.to_problem_spec()?;
    let mut rec = Recorder::new(cfg);
    let mut means = OuterMeans::new();
    let mut dump = None;
    for outer in 0..spec.n_outer {
        let (ens, base) = build_pair(&spec, cfg.engine, outer)?;
        rec.push(
            "u",
            format!("outer={outer}"),
            base.u_value,
            base.std_error,
            None,
            None,
            None,
        );
        means.record("u", base.u_value);
        if outer == 0 {
            dump = maybe_dump(cfg, &ens, &base);
        }
    }
    means.emit(&mut rec);
    Ok(rec.finish(dump))
}

enum GradMethod {
    /// Derivative-free Malliavin-weight average.
    Weights,
    /// Tangent-process recursion (needs coefficient partials).
    Variational,
}

fn run_gradient(cfg: &ExperimentConfig, method: GradMethod) -> Result<ExperimentOutcome> {
    let spec = cfg.to_problem_spec()?;
    let dim = spec.dim();
    let mut rec = Recorder::new(cfg);
    let mut means = OuterMeans::new();
    let mut dump = None;
    for outer in 0..spec.n_outer {
        let (ens, base) = build_pair(&spec, cfg.engine, outer)?;
        let (value, std_error) = match method {
            GradMethod::Weights => {
                let est = estimate_grad_u_weights(&ens, &base)?;
                (est.value, est.std_error)
            }
            GradMethod::Variational => {
                let sol = solve_variational(&ens, &base)?;
                (sol.grad_u_value, sol.std_error)
            }
        };
        for j in 0..dim {
            let label = format!("grad_u[{j}]");
            rec.push(
                label.clone(),
                format!("outer={outer}"),
                value[j],
                std_error[j],
                None,
                None,
                None,
            );
            means.record(&label, value[j]);
        }
        if outer == 0 {
            dump = maybe_dump(cfg, &ens, &base);
        }
    }
    means.emit(&mut rec);
    Ok(rec.finish(dump))
}

fn run_z_profile(cfg: &ExperimentConfig, discrete: bool) -> Result<ExperimentOutcome> {
    let spec = cfg.to_problem_spec()?;
    let dim = spec.dim();
    let s_list = if discrete {
        discrete_times(cfg, &spec)?
    } else {
        cfg.z_times_or_default()
    };
    if s_list.is_empty() {
        return Err(Error::validation(
            "no evaluation times: the grid is too coarse for defaults and \
             the config pinned none",
        ));
    }
    let mut rec = Recorder::new(cfg);
    let mut means = OuterMeans::new();
    let mut dump = None;
    for outer in 0..spec.n_outer {
        let (ens, base) = build_pair(&spec, cfg.engine, outer)?;
        for &s in &s_list {
            let est = if discrete {
                estimate_z_discrete(&ens, &base, s)?
            } else {
                estimate_z_weights(&ens, &base, s)?
            };
            let time = spec.grid.paper_time(s);
            for j in 0..dim {
                let label = format!("z[{j}]");
                rec.push(
                    label.clone(),
                    format!("outer={outer};s={time}"),
                    est.value[j],
                    est.std_error[j],
                    None,
                    None,
                    None,
                );
                means.record(&format!("{label};s={time}"), est.value[j]);
            }
        }
        if outer == 0 {
            dump = maybe_dump(cfg, &ens, &base);
        }
    }
    means.emit(&mut rec);
    Ok(rec.finish(dump))
}

/// Evaluation times for the discrete-terminal profile: the configured ones,
/// or one grid step inside each side of every interior partition node — the
/// one-sided limits the floored estimator is built for. Times that land on
/// a partition node are never defaulted (the integrand jumps there).
fn discrete_times(cfg: &ExperimentConfig, spec: &ProblemSpec) -> Result<Vec<usize>> {
    if !cfg.z_times.is_empty() {
        return Ok(cfg.z_times.clone());
    }
    let partition = spec.partition_or_trivial();
    let n = spec.grid.n_steps();
    let mut out: Vec<usize> = Vec::new();
    for node in 1..partition.times().len().saturating_sub(1) {
        let k = partition.grid_index(node);
        for cand in [k.wrapping_sub(1), k + 1] {
            if (1..=n).contains(&cand)
                && partition.interval_of(cand).is_ok()
                && !out.contains(&cand)
            {
                out.push(cand);
            }
        }
    }
    out.sort_unstable();
    if out.is_empty() {
        return Err(Error::validation(
            "the grid is too coarse to step inside the partition intervals; \
             pin z_times explicitly or refine n_steps",
        ));
    }
    Ok(out)
}

fn run_jumps(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = cfg.to_problem_spec()?;
    let dim = spec.dim();
    let mut rec = Recorder::new(cfg);
    let mut means = OuterMeans::new();
    let mut dump = None;
    for outer in 0..spec.n_outer {
        let (ens, base) = build_pair(&spec, cfg.engine, outer)?;
        let jumps = solve_jump_system(&ens, &base)?;
        for slot in 0..jumps.n_nodes() {
            let (value, std_error) = jumps.delta_z_mean_se(slot);
            let time = jumps.times[slot];
            for j in 0..dim {
                let label = format!("delta_z[{j}]");
                rec.push(
                    label.clone(),
                    format!("outer={outer};node={time}"),
                    value[j],
                    std_error[j],
                    None,
                    None,
                    None,
                );
                means.record(&format!("{label};node={time}"), value[j]);
            }
        }
        if outer == 0 {
            dump = maybe_dump(cfg, &ens, &base);
        }
    }
    means.emit(&mut rec);
    Ok(rec.finish(dump))
}

/// The spatial window both field oracles solve on.
fn oracle_space(x0: &[f64]) -> SpaceGrid {
    SpaceGrid {
        center: x0[0],
        half_width: ORACLE_HALF_WIDTH,
        n_nodes: ORACLE_NODES,
    }
}

fn run_oracle_compare(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = cfg.to_problem_spec()?;
    if spec.dim() != 1 {
        return Err(Error::validation(
            "the field-equation oracles are one-dimensional only",
        ));
    }
    // With no backward noise the field is deterministic, so one fine
    // reference solve serves every outer path. Otherwise the field is a
    // functional of B and each outer gets the pathwise solve on its own
    // frozen B — same increments, independent machinery.
    let fixed_reference = if cfg.noise_coeff == NoiseCoeffSpec::Zero {
        let sol = pde_solve(
            &spec.coefficients,
            cfg.horizon,
            oracle_space(&cfg.x0),
            ORACLE_REF_TIME_STEPS,
        )?;
        Some(sol.final_frame().eval(cfg.x0[0])?)
    } else {
        None
    };
    let mut rec = Recorder::new(cfg);
    let mut dump = None;
    for outer in 0..spec.n_outer {
        let (ens, base) = build_pair(&spec, cfg.engine, outer)?;
        let reference = match fixed_reference {
            Some(v) => v,
            None => {
                let sol = spde_solve_pathwise(
                    &spec.coefficients,
                    cfg.horizon,
                    oracle_space(&cfg.x0),
                    ens.b_path(),
                )?;
                sol.final_frame().eval(cfg.x0[0])?
            }
        };
        let gap = (base.u_value - reference).abs();
        let pass = gap <= ORACLE_BIAS_ALLOWANCE + 3.0 * base.std_error;
        rec.push(
            "u",
            format!("outer={outer}"),
            base.u_value,
            base.std_error,
            Some(reference),
            Some(gap),
            Some(pass),
        );
        if outer == 0 {
            dump = maybe_dump(cfg, &ens, &base);
        }
    }
    Ok(rec.finish(dump))
}

fn run_convergence(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if cfg.dim != 1 {
        return Err(Error::validation(
            "the convergence reference solvers are one-dimensional only",
        ));
    }
    // Deterministic field: every rung is measured against one reference
    // solve finer than any rung. Noisy field: each rung is measured against
    // the pathwise solve on that rung's own B-path — the pair shares its
    // increments, so each rung is internally matched and the gaps shrink as
    // both sides refine together.
    let base_spec = cfg.to_problem_spec()?;
    let fixed_reference = if cfg.noise_coeff == NoiseCoeffSpec::Zero {
        let sol = pde_solve(
            &base_spec.coefficients,
            cfg.horizon,
            oracle_space(&cfg.x0),
            ORACLE_REF_TIME_STEPS,
        )?;
        Some(sol.final_frame().eval(cfg.x0[0])?)
    } else {
        None
    };
    let mut rec = Recorder::new(cfg);
    let mut dump = None;
    for &(n_steps, n_inner) in &cfg.ladder {
        let mut rung_cfg = cfg.clone();
        rung_cfg.n_steps = n_steps;
        rung_cfg.n_inner = n_inner;
        let spec = rung_cfg.to_problem_spec().map_err(|e| {
            Error::validation(format!("ladder rung {n_steps}:{n_inner} is invalid: {e}"))
        })?;
        let (ens, base) = build_pair(&spec, cfg.engine, 0)?;
        let reference = match fixed_reference {
            Some(v) => v,
            None => {
                let sol = spde_solve_pathwise(
                    &spec.coefficients,
                    cfg.horizon,
                    oracle_space(&cfg.x0),
                    ens.b_path(),
                )?;
                sol.final_frame().eval(cfg.x0[0])?
            }
        };
        rec.push(
            "u",
            format!("n={n_steps};paths={n_inner}"),
            base.u_value,
            base.std_error,
            Some(reference),
            Some((base.u_value - reference).abs()),
            None,
        );
        // The dump follows the final (finest, by convention) rung.
        dump = maybe_dump(cfg, &ens, &base);
    }
    Ok(rec.finish(dump))
}

fn run_acceptance_kind(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let reports = run_acceptance(cfg.path_scale);
    // There is no single ensemble behind the scoreboard, so nothing to dump.
    Ok(ExperimentOutcome {
        records: acceptance_records(cfg, &reports),
        dump: None,
    })
}

/// Maps finished criterion reports onto result records: the measured
/// statistic in the value column, the criterion's allowance in the oracle
/// column, skip reasons in the anchor. Public so a front end that wants to
/// print the human-readable report lines can still emit the same records
/// without running the scoreboard twice.
pub fn acceptance_records(
    cfg: &ExperimentConfig,
    reports: &[CriterionReport],
) -> Vec<ResultRecord> {
    let mut rec = Recorder::new(cfg);
    for report in reports {
        let (pass, anchor) = match &report.status {
            CriterionStatus::Pass => (Some(true), format!("scale={}", cfg.path_scale)),
            CriterionStatus::Fail => (Some(false), format!("scale={}", cfg.path_scale)),
            CriterionStatus::Skipped(reason) => (None, format!("skipped; {reason}")),
        };
        rec.push(
            report.name,
            anchor,
            report.measured,
            0.0,
            Some(report.allowed),
            None,
            pass,
        );
        // run_acceptance timed each criterion itself; keep that number.
        rec.records.last_mut().expect("just pushed").wall_ms = report.wall_ms;
    }
    rec.records
}

// ---------------------------------------------------------------------------
// Per-path dumps.
// ---------------------------------------------------------------------------

fn maybe_dump(cfg: &ExperimentConfig, ens: &Ensemble, base: &BackwardSolution) -> Option<String> {
    cfg.dump_paths.then(|| render_dump(ens, base))
}

/// The dump: one line per (path, reversed node) for the first
/// [`DUMP_MAX_PATHS`] inner paths of one ensemble, listing the forward
/// state, Y, and the Z-row. `tau_node` counts from the evaluation time, so
/// `clock_time = horizon − tau_node·Δ` is the matching clock time.
fn render_dump(ens: &Ensemble, base: &BackwardSolution) -> String {
    let dim = base.dim;
    let n = base.n_steps;
    let horizon = ens.spec.grid.horizon();
    let delta = ens.spec.grid.delta();
    let mut out = String::from("outer,path,tau_node,clock_time");
    for j in 0..dim {
        out.push_str(&format!(",x[{j}]"));
    }
    out.push_str(",y");
    for j in 0..dim {
        out.push_str(&format!(",z[{j}]"));
    }
    out.push('\n');
    for path in 0..base.n_paths.min(DUMP_MAX_PATHS) {
        let bundle = &ens.bundles[path];
        for k in 0..=n {
            out.push_str(&format!(
                "{},{path},{k},{}",
                ens.outer_id,
                horizon - k as f64 * delta
            ));
            for &xj in bundle.x_at(k) {
                out.push_str(&format!(",{xj}"));
            }
            out.push_str(&format!(",{}", base.y_at(k, path)));
            for &zj in base.z_at(k, path) {
                out.push_str(&format!(",{zj}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text, "test").expect("test config must parse")
    }

    /// Collapses a rendered CSV to its timing-free part: every column but
    /// the trailing wall-clock one.
    fn strip_wall_ms(csv: &str) -> String {
        csv.lines()
            .map(|line| match line.rsplit_once(',') {
                Some((head, _)) if line != CSV_HEADER => head.to_string(),
                _ => line.to_string(),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn record_lines_split_into_exactly_the_header_columns() {
        let header_cols = CSV_HEADER.split(',').count();
        let record = ResultRecord {
            experiment_id: "desk, run 4".into(),
            kind: ExperimentKind::UEstimate,
            config_hash: "deadbeefdeadbeef".into(),
            quantity: "u".into(),
            anchor: "outer=0, fine".into(),
            value: 1.25,
            std_error: 0.5,
            oracle: None,
            abs_error: None,
            pass: None,
            wall_ms: 7,
        };
        let line = record.csv_line();
        assert_eq!(line.split(',').count(), header_cols);
        // The embedded commas must have become semicolons, not columns.
        assert!(line.starts_with("desk; run 4,u-estimate,"));
        assert!(line.contains("outer=0; fine"));
        // Optional columns render empty, not as placeholders.
        assert!(line.contains(",1.25,0.5,,,,7"));
    }

    #[test]
    fn records_reproduce_bitwise_for_a_fixed_config() {
        let cfg = parse(
            "kind = u-estimate\nterminal = square\nx0 = 0.0\nn_steps = 4\n\
             n_inner = 400\nn_outer = 2\nseed = 11\n",
        );
        let first = run_experiment(&cfg).unwrap();
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(strip_wall_ms(&first.to_csv()), strip_wall_ms(&second.to_csv()));
    }

    #[test]
    fn u_estimate_emits_per_outer_rows_and_an_outer_mean() {
        let cfg = parse(
            "kind = u-estimate\nterminal = square\nx0 = 0.0\nn_steps = 4\n\
             n_inner = 400\nn_outer = 3\nseed = 5\n",
        );
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 4);
        for (i, record) in outcome.records.iter().enumerate() {
            assert_eq!(record.quantity, "u");
            assert_eq!(record.config_hash, cfg.hash());
            assert!(record.value.is_finite() && record.std_error.is_finite());
            if i < 3 {
                assert_eq!(record.anchor, format!("outer={i}"));
            } else {
                assert_eq!(record.anchor, "outer-mean");
            }
        }
        assert!(outcome.all_passed());
        assert!(outcome.dump.is_none());
    }

    #[test]
    fn oracle_compare_passes_on_the_heat_case() {
        // l(x) = x², no drift, no driver, no backward noise: the reference
        // solve and the Monte-Carlo estimate both target x² + t.
        let cfg = parse(
            "kind = oracle-compare\nterminal = square\nx0 = 0.0\nn_steps = 8\n\
             n_inner = 4000\nn_outer = 1\nseed = 3\n",
        );
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 1);
        let record = &outcome.records[0];
        let oracle = record.oracle.expect("comparison rows carry the reference");
        assert!(
            (oracle - 1.0).abs() < 1e-3,
            "reference solve should hit x² + t = 1, got {oracle}"
        );
        assert_eq!(record.pass, Some(true), "gap {:?}", record.abs_error);
    }

    #[test]
    fn z_discrete_defaults_step_inside_each_interval() {
        let cfg = parse(
            "kind = z-discrete\nterminal = product01\npartition = 0.0, 0.5, 1.0\n\
             x0 = 1.0\nn_steps = 8\nn_inner = 600\nn_outer = 1\nseed = 9\n",
        );
        let outcome = run_experiment(&cfg).unwrap();
        // The single interior node sits at grid index 4, so the defaults
        // are one step inside each neighbor: clock times 3/8 and 5/8.
        let anchors: Vec<&str> = outcome
            .records
            .iter()
            .map(|r| r.anchor.as_str())
            .collect();
        assert_eq!(anchors, ["outer=0;s=0.375", "outer=0;s=0.625"]);
    }

    #[test]
    fn acceptance_kind_maps_every_criterion_to_a_row() {
        let cfg = parse("kind = acceptance\npath_scale = 0.0001\n");
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 9);
        assert!(outcome.dump.is_none());
        let mut skipped = 0;
        for record in &outcome.records {
            assert!(record.oracle.is_some(), "criterion rows carry the allowance");
            match record.pass {
                Some(passed) => assert!(passed, "criterion {} failed", record.quantity),
                None => {
                    assert!(record.anchor.starts_with("skipped; "));
                    skipped += 1;
                }
            }
        }
        assert!(skipped > 0, "a 1e-4 path scale must starve the sampled criteria");
    }

    #[test]
    fn convergence_rungs_share_the_deterministic_reference() {
        let cfg = parse(
            "kind = convergence\nterminal = square\nx0 = 0.0\n\
             ladder = 4:400, 8:800\nn_outer = 1\nseed = 2\n",
        );
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 2);
        assert_eq!(outcome.records[0].anchor, "n=4;paths=400");
        assert_eq!(outcome.records[1].anchor, "n=8;paths=800");
        assert_eq!(outcome.records[0].oracle, outcome.records[1].oracle);
        for record in &outcome.records {
            assert!(record.abs_error.unwrap().is_finite());
            assert_eq!(record.pass, None, "ladder rows are data, not gates");
        }
    }

    #[test]
    fn the_dump_lists_every_node_for_the_first_paths() {
        let cfg = parse(
            "kind = u-estimate\nterminal = square\nx0 = 0.0\nn_steps = 4\n\
             n_inner = 300\nn_outer = 1\nseed = 7\ndump_paths = true\n",
        );
        let outcome = run_experiment(&cfg).unwrap();
        let dump = outcome.dump.expect("dump_paths = true must produce a dump");
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "outer,path,tau_node,clock_time,x[0],y,z[0]");
        assert_eq!(lines.len(), 1 + DUMP_MAX_PATHS * 5);
        let columns = lines[0].split(',').count();
        assert!(lines[1..].iter().all(|l| l.split(',').count() == columns));
    }
}
