//! Plain-text experiment configuration: one file, one experiment.
//!
//! The format is `key = value` lines, `#` comments, and blank lines. Keys
//! are snake_case and single-valued; every key has a default except `kind`,
//! and unknown or repeated keys are errors — a config that parses is a
//! config that ran what you think it ran. The full schema lives in the
//! README; [`ExperimentConfig::to_text`] is the canonical writer, and
//! parsing its output yields an equal config (round-trip invariant).
//!
//! The canonical text is also what the parameter hash digests, so two files
//! that differ only in comments, spacing, or key order get the same hash.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::coeffs::{
    build_coefficients, DiffusionSpec, DriftSpec, DriverSpec, NoiseCoeffSpec, TerminalSpec,
};
use crate::error::{Error, Result};
use crate::grid::Partition;
use crate::noise::NoiseMode;
use crate::problem::ProblemSpec;
use crate::solver::CondExpEngine;

/// What pipeline a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Backward solve for the value `u(t, x)`.
    UEstimate,
    /// Derivative-free gradient via noise weights.
    GradWeights,
    /// Gradient via the linearized (variational) backward system.
    GradVariational,
    /// Weight-estimated `Z` at requested clock times.
    ZProfile,
    /// Same, with anchors floored at partition times (multi-time terminals).
    ZDiscrete,
    /// Jump sizes of `Z` at interior partition times.
    Jumps,
    /// Monte Carlo value against the deterministic field oracles.
    OracleCompare,
    /// Refinement ladder for the value estimate.
    Convergence,
    /// The full acceptance battery.
    Acceptance,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::UEstimate => "u-estimate",
            ExperimentKind::GradWeights => "grad-weights",
            ExperimentKind::GradVariational => "grad-variational",
            ExperimentKind::ZProfile => "z-profile",
            ExperimentKind::ZDiscrete => "z-discrete",
            ExperimentKind::Jumps => "jumps",
            ExperimentKind::OracleCompare => "oracle-compare",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Acceptance => "acceptance",
        }
    }

    pub fn parse(token: &str) -> Option<ExperimentKind> {
        Some(match token {
            "u-estimate" => ExperimentKind::UEstimate,
            "grad-weights" => ExperimentKind::GradWeights,
            "grad-variational" => ExperimentKind::GradVariational,
            "z-profile" => ExperimentKind::ZProfile,
            "z-discrete" => ExperimentKind::ZDiscrete,
            "jumps" => ExperimentKind::Jumps,
            "oracle-compare" => ExperimentKind::OracleCompare,
            "convergence" => ExperimentKind::Convergence,
            "acceptance" => ExperimentKind::Acceptance,
            _ => return None,
        })
    }
}

/// A parsed experiment file: coefficient choices by name, scheme knobs, and
/// the experiment kind. [`ExperimentConfig::to_problem_spec`] turns it into
/// the runnable [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub dim: usize,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub driver: DriverSpec,
    pub noise_coeff: NoiseCoeffSpec,
    pub terminal: TerminalSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_inner: usize,
    pub n_outer: usize,
    pub seed: u64,
    pub regression_degree: usize,
    pub noise_mode: NoiseMode,
    pub engine: CondExpEngine,
    pub mollify_eps: Option<f64>,
    pub mollify_nodes: usize,
    /// Fixed-point sweeps per backward step (0 = explicit scheme).
    pub picard: usize,
    /// Partition times for multi-time terminals, including both endpoints.
    pub partition: Option<Vec<f64>>,
    /// Clock indices where the `Z` profile kinds evaluate; empty = grid
    /// quartiles.
    pub z_times: Vec<usize>,
    /// Refinement rungs `(n_steps, n_inner)` for the convergence kind.
    pub ladder: Vec<(usize, usize)>,
    /// Default output path; the command line can override it.
    pub out: Option<String>,
    pub dump_paths: bool,
    /// Path-count multiplier for the acceptance kind (1.0 = the pinned
    /// criterion sizes).
    pub path_scale: f64,
}

impl ExperimentConfig {
    /// A config with library defaults for everything but the kind.
    pub fn new(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment_id: "unnamed".to_string(),
            kind,
            dim: 1,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::Unit,
            driver: DriverSpec::Zero,
            noise_coeff: NoiseCoeffSpec::Zero,
            terminal: TerminalSpec::Square,
            x0: vec![0.0],
            horizon: 1.0,
            n_steps: 8,
            n_inner: 10_000,
            n_outer: 1,
            seed: 42,
            regression_degree: 3,
            noise_mode: NoiseMode::Gaussian,
            engine: CondExpEngine::Regression,
            mollify_eps: None,
            mollify_nodes: 64,
            picard: 0,
            partition: None,
            z_times: Vec::new(),
            ladder: Vec::new(),
            out: None,
            dump_paths: false,
            path_scale: 1.0,
        }
    }

    /// Parses a config file from disk.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        ExperimentConfig::parse(&text, &path.display().to_string())
    }

    /// Parses config text; `origin` labels errors (a path or a note).
    pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
        let bad = |line: usize, message: String| Error::ConfigParse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut kind = None;
        let mut cfg = ExperimentConfig::new(ExperimentKind::UEstimate);
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(bad(line_no, format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(bad(line_no, format!("key `{key}` appears twice")));
            }
            seen.push(key.to_string());
            let err = |message: String| bad(line_no, message);
            match key {
                "experiment" => cfg.experiment_id = value.to_string(),
                "kind" => {
                    kind = Some(ExperimentKind::parse(value).ok_or_else(|| {
                        err(format!(
                            "unknown kind `{value}`; expected one of u-estimate, \
                             grad-weights, grad-variational, z-profile, z-discrete, \
                             jumps, oracle-compare, convergence, acceptance"
                        ))
                    })?)
                }
                "dim" => cfg.dim = parse_num(value).map_err(err)?,
                "drift" => cfg.drift = parse_drift(value).map_err(err)?,
                "diffusion" => cfg.diffusion = parse_diffusion(value).map_err(err)?,
                "driver" => cfg.driver = parse_driver(value).map_err(err)?,
                "noise_coeff" => cfg.noise_coeff = parse_noise_coeff(value).map_err(err)?,
                "terminal" => cfg.terminal = parse_terminal(value).map_err(err)?,
                "x0" => cfg.x0 = parse_f64_list(value).map_err(err)?,
                "horizon" => cfg.horizon = parse_num(value).map_err(err)?,
                "n_steps" => cfg.n_steps = parse_num(value).map_err(err)?,
                "n_inner" => cfg.n_inner = parse_num(value).map_err(err)?,
                "n_outer" => cfg.n_outer = parse_num(value).map_err(err)?,
                "seed" => cfg.seed = parse_num(value).map_err(err)?,
                "regression_degree" => cfg.regression_degree = parse_num(value).map_err(err)?,
                "noise_mode" => {
                    cfg.noise_mode = match value {
                        "gaussian" => NoiseMode::Gaussian,
                        "rademacher" => NoiseMode::Rademacher,
                        _ => {
                            return Err(err(format!(
                                "unknown noise mode `{value}`; expected gaussian or rademacher"
                            )))
                        }
                    }
                }
                "engine" => {
                    cfg.engine = match value {
                        "regression" => CondExpEngine::Regression,
                        "enumerated" => CondExpEngine::PrefixExact,
                        _ => {
                            return Err(err(format!(
                                "unknown engine `{value}`; expected regression or enumerated"
                            )))
                        }
                    }
                }
                "mollify_eps" => cfg.mollify_eps = Some(parse_num(value).map_err(err)?),
                "mollify_nodes" => cfg.mollify_nodes = parse_num(value).map_err(err)?,
                "picard" => {
                    cfg.picard = match value {
                        "off" => 0,
                        "on" => 3,
                        _ => parse_num(value).map_err(err)?,
                    }
                }
                "partition" => cfg.partition = Some(parse_f64_list(value).map_err(err)?),
                "z_times" => cfg.z_times = parse_usize_list(value).map_err(err)?,
                "ladder" => cfg.ladder = parse_ladder(value).map_err(err)?,
                "out" => cfg.out = Some(value.to_string()),
                "dump_paths" => {
                    cfg.dump_paths = match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(err(format!(
                                "expected true or false for dump_paths, got `{value}`"
                            )))
                        }
                    }
                }
                "path_scale" => cfg.path_scale = parse_num(value).map_err(err)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        let Some(kind) = kind else {
            return Err(bad(0, "missing required key `kind`".to_string()));
        };
        cfg.kind = kind;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    fn validate(&self, origin: &str) -> Result<()> {
        let bad = |message: String| Error::validation(format!("{origin}: {message}"));
        match self.kind {
            ExperimentKind::Jumps | ExperimentKind::ZDiscrete => {
                if self.partition.is_none() {
                    return Err(bad(format!(
                        "kind {} needs a `partition` listing the terminal's times",
                        self.kind.as_str()
                    )));
                }
            }
            ExperimentKind::Convergence => {
                if self.ladder.is_empty() {
                    return Err(bad(
                        "kind convergence needs a `ladder` of (n_steps:n_inner) rungs"
                            .to_string(),
                    ));
                }
            }
            _ => {}
        }
        if self.engine == CondExpEngine::PrefixExact && self.noise_mode != NoiseMode::Rademacher
        {
            return Err(bad(
                "the enumerated engine needs noise_mode = rademacher".to_string(),
            ));
        }
        if self.terminal.is_multi() && self.partition.is_none() {
            return Err(bad(
                "a multi-time terminal needs a `partition` naming its times".to_string(),
            ));
        }
        if !(self.path_scale > 0.0) {
            return Err(bad(format!(
                "path_scale must be positive, got {}",
                self.path_scale
            )));
        }
        Ok(())
    }

    /// Canonical text form: fixed key order, shortest-round-trip numbers,
    /// defaults included. Parsing the output reproduces the config exactly,
    /// and the parameter hash digests exactly this text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment_id);
        let _ = writeln!(s, "kind = {}", self.kind.as_str());
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "drift = {}", drift_text(&self.drift));
        let _ = writeln!(s, "diffusion = {}", diffusion_text(&self.diffusion));
        let _ = writeln!(s, "driver = {}", driver_text(&self.driver));
        let _ = writeln!(s, "noise_coeff = {}", noise_coeff_text(&self.noise_coeff));
        let _ = writeln!(s, "terminal = {}", terminal_text(&self.terminal));
        let _ = writeln!(s, "x0 = {}", f64_list_text(&self.x0));
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "n_steps = {}", self.n_steps);
        let _ = writeln!(s, "n_inner = {}", self.n_inner);
        let _ = writeln!(s, "n_outer = {}", self.n_outer);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "regression_degree = {}", self.regression_degree);
        let _ = writeln!(
            s,
            "noise_mode = {}",
            match self.noise_mode {
                NoiseMode::Gaussian => "gaussian",
                NoiseMode::Rademacher => "rademacher",
            }
        );
        let _ = writeln!(
            s,
            "engine = {}",
            match self.engine {
                CondExpEngine::Regression => "regression",
                CondExpEngine::PrefixExact => "enumerated",
            }
        );
        if let Some(eps) = self.mollify_eps {
            let _ = writeln!(s, "mollify_eps = {eps}");
        }
        let _ = writeln!(s, "mollify_nodes = {}", self.mollify_nodes);
        let _ = writeln!(s, "picard = {}", self.picard);
        if let Some(p) = &self.partition {
            let _ = writeln!(s, "partition = {}", f64_list_text(p));
        }
        if !self.z_times.is_empty() {
            let list: Vec<String> = self.z_times.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "z_times = {}", list.join(","));
        }
        if !self.ladder.is_empty() {
            let list: Vec<String> = self
                .ladder
                .iter()
                .map(|(n, paths)| format!("{n}:{paths}"))
                .collect();
            let _ = writeln!(s, "ladder = {}", list.join(","));
        }
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {out}");
        }
        let _ = writeln!(s, "dump_paths = {}", self.dump_paths);
        let _ = writeln!(s, "path_scale = {}", self.path_scale);
        s
    }

    /// Hex digest of the canonical text, truncated for readability. Stable
    /// across comments, spacing, and key order in the source file.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    /// Builds the runnable problem: coefficients by name, grid, partition,
    /// and every scheme knob, then the full validation battery.
    pub fn to_problem_spec(&self) -> Result<ProblemSpec> {
        let co = build_coefficients(
            self.dim,
            self.drift,
            self.diffusion,
            self.driver,
            self.noise_coeff,
            self.terminal,
        )?;
        let mut spec = ProblemSpec {
            coefficients: Arc::new(co),
            start_x: self.x0.clone(),
            grid: crate::grid::TimeGrid::new(self.horizon, self.n_steps)?,
            partition: None,
            n_inner: self.n_inner,
            n_outer: self.n_outer,
            seed: self.seed,
            regression_degree: self.regression_degree,
            noise_mode: self.noise_mode,
            mollify_eps: self.mollify_eps,
            mollify_nodes: self.mollify_nodes,
            picard_iterations: self.picard,
        };
        if let Some(times) = &self.partition {
            spec.partition = Some(Partition::new(&spec.grid, times)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// The `Z`-profile evaluation indices: the configured ones, or the grid
    /// quartiles when none were given.
    pub fn z_times_or_default(&self) -> Vec<usize> {
        if !self.z_times.is_empty() {
            return self.z_times.clone();
        }
        let n = self.n_steps;
        let mut out: Vec<usize> = [n / 4, n / 2, 3 * n / 4]
            .into_iter()
            .filter(|&s| s > 0 && s < n)
            .collect();
        out.dedup();
        out
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("bad number `{value}`: {e}"))
}

fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|tok| parse_num(tok.trim())).collect()
}

fn parse_usize_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value.split(',').map(|tok| parse_num(tok.trim())).collect()
}

fn parse_ladder(value: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            let Some((n, paths)) = tok.split_once(':') else {
                return Err(format!("bad ladder rung `{tok}`; expected n_steps:n_inner"));
            };
            Ok((parse_num(n.trim())?, parse_num(paths.trim())?))
        })
        .collect()
}

fn f64_list_text(values: &[f64]) -> String {
    let list: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    list.join(",")
}

/// Splits `name:args` into the name and its comma-separated arguments.
fn with_args(value: &str) -> (&str, Vec<&str>) {
    match value.split_once(':') {
        None => (value, Vec::new()),
        Some((name, rest)) => (name, rest.split(',').map(str::trim).collect()),
    }
}

fn one_arg(name: &str, args: &[&str]) -> std::result::Result<f64, String> {
    if args.len() != 1 {
        return Err(format!("`{name}` takes exactly one number, e.g. {name}:0.5"));
    }
    parse_num(args[0])
}

fn parse_drift(value: &str) -> std::result::Result<DriftSpec, String> {
    let (name, args) = with_args(value);
    match name {
        "zero" => Ok(DriftSpec::Zero),
        "constant" => Ok(DriftSpec::Constant(one_arg(name, &args)?)),
        "linear" => Ok(DriftSpec::Linear(one_arg(name, &args)?)),
        _ => Err(format!(
            "unknown drift `{value}`; expected zero, constant:<v>, or linear:<rate>"
        )),
    }
}

fn drift_text(spec: &DriftSpec) -> String {
    match spec {
        DriftSpec::Zero => "zero".to_string(),
        DriftSpec::Constant(v) => format!("constant:{v}"),
        DriftSpec::Linear(v) => format!("linear:{v}"),
    }
}

fn parse_diffusion(value: &str) -> std::result::Result<DiffusionSpec, String> {
    let (name, args) = with_args(value);
    match name {
        "unit" => Ok(DiffusionSpec::Unit),
        "scaled" => Ok(DiffusionSpec::Scaled(one_arg(name, &args)?)),
        "affine_sin" => {
            if args.len() != 2 {
                return Err(
                    "`affine_sin` takes two numbers, e.g. affine_sin:1.0,0.2".to_string()
                );
            }
            Ok(DiffusionSpec::AffineSin {
                base: parse_num(args[0])?,
                amp: parse_num(args[1])?,
            })
        }
        _ => Err(format!(
            "unknown diffusion `{value}`; expected unit, scaled:<s>, or affine_sin:<base>,<amp>"
        )),
    }
}

fn diffusion_text(spec: &DiffusionSpec) -> String {
    match spec {
        DiffusionSpec::Unit => "unit".to_string(),
        DiffusionSpec::Scaled(v) => format!("scaled:{v}"),
        DiffusionSpec::AffineSin { base, amp } => format!("affine_sin:{base},{amp}"),
    }
}

fn parse_driver(value: &str) -> std::result::Result<DriverSpec, String> {
    let (name, args) = with_args(value);
    match name {
        "zero" => Ok(DriverSpec::Zero),
        "constant" => Ok(DriverSpec::Constant(one_arg(name, &args)?)),
        "linear_decay" => Ok(DriverSpec::LinearDecay),
        "sin_y" => Ok(DriverSpec::SinY),
        "sin_yz" => Ok(DriverSpec::SinYZ(one_arg(name, &args)?)),
        _ => Err(format!(
            "unknown driver `{value}`; expected zero, constant:<c>, linear_decay, sin_y, \
             or sin_yz:<a>"
        )),
    }
}

fn driver_text(spec: &DriverSpec) -> String {
    match spec {
        DriverSpec::Zero => "zero".to_string(),
        DriverSpec::Constant(v) => format!("constant:{v}"),
        DriverSpec::LinearDecay => "linear_decay".to_string(),
        DriverSpec::SinY => "sin_y".to_string(),
        DriverSpec::SinYZ(v) => format!("sin_yz:{v}"),
    }
}

fn parse_noise_coeff(value: &str) -> std::result::Result<NoiseCoeffSpec, String> {
    let (name, args) = with_args(value);
    match name {
        "zero" => Ok(NoiseCoeffSpec::Zero),
        "constant" => Ok(NoiseCoeffSpec::Constant(one_arg(name, &args)?)),
        "cos_y" => Ok(NoiseCoeffSpec::CosY(one_arg(name, &args)?)),
        "sin_x" => Ok(NoiseCoeffSpec::SinX(one_arg(name, &args)?)),
        _ => Err(format!(
            "unknown noise_coeff `{value}`; expected zero, constant:<c>, cos_y:<a>, or \
             sin_x:<a>"
        )),
    }
}

fn noise_coeff_text(spec: &NoiseCoeffSpec) -> String {
    match spec {
        NoiseCoeffSpec::Zero => "zero".to_string(),
        NoiseCoeffSpec::Constant(v) => format!("constant:{v}"),
        NoiseCoeffSpec::CosY(v) => format!("cos_y:{v}"),
        NoiseCoeffSpec::SinX(v) => format!("sin_x:{v}"),
    }
}

fn parse_terminal(value: &str) -> std::result::Result<TerminalSpec, String> {
    let (name, args) = with_args(value);
    match name {
        "identity" => Ok(TerminalSpec::Identity),
        "square" => Ok(TerminalSpec::Square),
        "abs" => Ok(TerminalSpec::Abs),
        "constant" => Ok(TerminalSpec::Constant(one_arg(name, &args)?)),
        "sin" => Ok(TerminalSpec::Sin),
        "node" => {
            if args.len() != 1 {
                return Err("`node` takes a partition-point index, e.g. node:1".to_string());
            }
            Ok(TerminalSpec::Node(parse_num(args[0])?))
        }
        "product01" => Ok(TerminalSpec::Product01),
        _ => Err(format!(
            "unknown terminal `{value}`; expected identity, square, abs, constant:<c>, sin, \
             node:<i>, or product01"
        )),
    }
}

fn terminal_text(spec: &TerminalSpec) -> String {
    match spec {
        TerminalSpec::Identity => "identity".to_string(),
        TerminalSpec::Square => "square".to_string(),
        TerminalSpec::Abs => "abs".to_string(),
        TerminalSpec::Constant(v) => format!("constant:{v}"),
        TerminalSpec::Sin => "sin".to_string(),
        TerminalSpec::Node(i) => format!("node:{i}"),
        TerminalSpec::Product01 => "product01".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::parse("kind = u-estimate\n", "test").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::UEstimate);
        assert_eq!(cfg.n_steps, 8);
        assert_eq!(cfg.n_inner, 10_000);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.terminal, TerminalSpec::Square);
        assert!(cfg.partition.is_none());
        cfg.to_problem_spec().unwrap();
    }

    #[test]
    fn comments_spacing_and_order_are_cosmetic() {
        let text = "
            # the heat benchmark
            n_inner   =  500

            kind=u-estimate
            x0 = 1.0   # trailing comments are not supported, whole-line only
        ";
        // Trailing comment text is part of the value and should fail fast.
        assert!(ExperimentConfig::parse(text, "test").is_err());

        let text = "# heat\nn_inner = 500\n\nkind = u-estimate\nx0 = 1.0\n";
        let cfg = ExperimentConfig::parse(text, "test").unwrap();
        assert_eq!(cfg.n_inner, 500);
        assert_eq!(cfg.x0, vec![1.0]);
        // Same settings, different order and comments: same hash.
        let other = ExperimentConfig::parse("x0=1\nkind = u-estimate\nn_inner=500\n", "t").unwrap();
        assert_eq!(cfg.hash(), other.hash());
        // A changed field changes the hash.
        let third = ExperimentConfig::parse("x0=2\nkind = u-estimate\nn_inner=500\n", "t").unwrap();
        assert_ne!(cfg.hash(), third.hash());
    }

    #[test]
    fn bad_lines_are_reported_with_position() {
        let err = ExperimentConfig::parse("kind = u-estimate\nbogus_key = 1\n", "my.cfg")
            .unwrap_err()
            .to_string();
        assert!(err.contains("my.cfg:2") && err.contains("bogus_key"));

        let err = ExperimentConfig::parse("kind = u-estimate\nkind = jumps\n", "my.cfg")
            .unwrap_err()
            .to_string();
        assert!(err.contains("twice"));

        let err = ExperimentConfig::parse("kind = u-estimate\nn_steps = soon\n", "my.cfg")
            .unwrap_err()
            .to_string();
        assert!(err.contains("my.cfg:2") && err.contains("soon"));

        let err = ExperimentConfig::parse("n_steps = 4\n", "my.cfg").unwrap_err().to_string();
        assert!(err.contains("kind"));

        let err = ExperimentConfig::parse("kind = u-estimate\nno equals here\n", "my.cfg")
            .unwrap_err()
            .to_string();
        assert!(err.contains("key = value"));
    }

    #[test]
    fn kind_specific_requirements_are_checked() {
        let err = ExperimentConfig::parse("kind = jumps\n", "t").unwrap_err().to_string();
        assert!(err.contains("partition"), "{err}");

        let err = ExperimentConfig::parse("kind = convergence\n", "t")
            .unwrap_err()
            .to_string();
        assert!(err.contains("ladder"), "{err}");

        let err = ExperimentConfig::parse("kind = u-estimate\nengine = enumerated\n", "t")
            .unwrap_err()
            .to_string();
        assert!(err.contains("rademacher"), "{err}");

        let err = ExperimentConfig::parse("kind = u-estimate\nterminal = node:1\n", "t")
            .unwrap_err()
            .to_string();
        assert!(err.contains("partition"), "{err}");

        ExperimentConfig::parse(
            "kind = jumps\nterminal = product01\npartition = 0,0.5,1\n",
            "t",
        )
        .unwrap()
        .to_problem_spec()
        .unwrap();
    }

    #[test]
    fn picard_accepts_the_shorthands() {
        for (token, sweeps) in [("off", 0usize), ("on", 3), ("5", 5)] {
            let text = format!("kind = u-estimate\npicard = {token}\n");
            assert_eq!(ExperimentConfig::parse(&text, "t").unwrap().picard, sweeps);
        }
    }

    #[test]
    fn ladder_and_lists_parse() {
        let text = "kind = convergence\nladder = 8:1000, 16:4000,32:16000\nz_times = 2,4,6\n";
        let cfg = ExperimentConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.ladder, vec![(8, 1000), (16, 4000), (32, 16000)]);
        assert_eq!(cfg.z_times, vec![2, 4, 6]);
        assert!(ExperimentConfig::parse("kind = convergence\nladder = 8x1000\n", "t").is_err());
    }

    #[test]
    fn default_z_times_are_interior_quartiles() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::ZProfile);
        cfg.n_steps = 8;
        assert_eq!(cfg.z_times_or_default(), vec![2, 4, 6]);
        cfg.z_times = vec![7];
        assert_eq!(cfg.z_times_or_default(), vec![7]);
    }

    fn drift_strategy() -> impl Strategy<Value = DriftSpec> {
        prop_oneof![
            Just(DriftSpec::Zero),
            (-2.0..2.0f64).prop_map(DriftSpec::Constant),
            (-2.0..0.0f64).prop_map(DriftSpec::Linear),
        ]
    }

    fn terminal_strategy() -> impl Strategy<Value = TerminalSpec> {
        prop_oneof![
            Just(TerminalSpec::Identity),
            Just(TerminalSpec::Square),
            Just(TerminalSpec::Abs),
            (-3.0..3.0f64).prop_map(TerminalSpec::Constant),
            Just(TerminalSpec::Sin),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn canonical_text_round_trips(
            drift in drift_strategy(),
            terminal in terminal_strategy(),
            x0 in -4.0..4.0f64,
            horizon in 0.25..2.0f64,
            n_steps in 2usize..64,
            n_inner in 2usize..10_000,
            seed in any::<u64>(),
            picard in 0usize..4,
            eps in prop::option::of(0.01..0.5f64),
            scale in 0.1..4.0f64,
        ) {
            let mut cfg = ExperimentConfig::new(ExperimentKind::GradWeights);
            cfg.experiment_id = "round-trip".to_string();
            cfg.drift = drift;
            cfg.terminal = terminal;
            cfg.x0 = vec![x0];
            cfg.horizon = horizon;
            cfg.n_steps = n_steps;
            cfg.n_inner = n_inner;
            cfg.seed = seed;
            cfg.picard = picard;
            cfg.mollify_eps = eps;
            cfg.path_scale = scale;
            cfg.ladder = vec![(n_steps, n_inner), (2 * n_steps, 4 * n_inner)];
            let parsed = ExperimentConfig::parse(&cfg.to_text(), "round-trip").unwrap();
            prop_assert_eq!(&parsed, &cfg);
            prop_assert_eq!(parsed.hash(), cfg.hash());
        }
    }
}
