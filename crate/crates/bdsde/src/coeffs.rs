//! Problem coefficients: drift, diffusion, driver, backward-noise
//! coefficient, and the terminal condition, plus their optional partial
//! derivatives.
//!
//! Coefficients are stored as `Arc`'d closures over flat slices so that a set
//! can be cloned cheaply (mollification wraps an existing set), shared across
//! worker threads, and evaluated in hot loops without allocating. Analytic
//! partials are optional: the forward tangent falls back to finite
//! differences when they are missing (unless disabled), while the linearized
//! backward systems refuse to run without them — those need the driver and
//! terminal derivatives to mean something.
//!
//! [`build_coefficients`] assembles a set from small named families, which is
//! also the vocabulary the plain-text experiment configs use.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;

/// `b(t, x)` written into a length-d output.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `σ(t, x)` written row-major into a d×d output.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `f(t, x, y, z)` with `z` a length-d row.
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `g(t, x, y)` written into a length-d output (one entry per B-component).
pub type NoiseCoeffFn = Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>;

/// Single-point terminal `l(x)`.
pub type PointTerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Gradient of a single-point terminal, written into a length-d output.
pub type PointTerminalGradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Multi-point terminal `l(x_0, …, x_m)` over the states at the partition
/// points, in paper order (`args[0]` is the state at paper time 0).
pub type MultiTerminalFn = Arc<dyn Fn(&[&[f64]]) -> f64 + Send + Sync>;
/// Partial gradient of a multi-point terminal with respect to argument
/// `arg_index`, written into a length-d output.
pub type MultiTerminalGradFn = Arc<dyn Fn(&[&[f64]], usize, &mut [f64]) + Send + Sync>;

/// Jacobian `∂b_i/∂x_j(t, x)`, row-major d×d.
pub type DriftJacFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Column-wise diffusion Jacobians: output slot `[m·d² + i·d + j]` holds
/// `∂σ_{i,m}/∂x_j` — one d×d Jacobian per W-component `m`, which is how the
/// tangent update consumes them.
pub type DiffusionJacFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `∂f/∂x` into a length-d output.
pub type DriverXGradFn = Arc<dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync>;
/// `∂f/∂y`.
pub type DriverYGradFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `∂f/∂z` into a length-d output.
pub type DriverZGradFn = Arc<dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync>;
/// Jacobian `∂g_i/∂x_j`, row-major d×d.
pub type NoiseXJacFn = Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>;
/// `∂g/∂y` into a length-d output.
pub type NoiseYGradFn = Arc<dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync>;

/// Terminal condition: either a function of the endpoint state alone or of
/// the states at every partition point.
#[derive(Clone)]
pub enum Terminal {
    Point {
        value: PointTerminalFn,
        grad: Option<PointTerminalGradFn>,
    },
    MultiPoint {
        value: MultiTerminalFn,
        grad: Option<MultiTerminalGradFn>,
    },
}

impl Terminal {
    pub fn is_multi(&self) -> bool {
        matches!(self, Terminal::MultiPoint { .. })
    }

    pub fn has_grad(&self) -> bool {
        match self {
            Terminal::Point { grad, .. } => grad.is_some(),
            Terminal::MultiPoint { grad, .. } => grad.is_some(),
        }
    }
}

/// A complete coefficient set for one problem.
#[derive(Clone)]
pub struct CoefficientSet {
    pub dim: usize,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub driver: DriverFn,
    pub noise_coeff: NoiseCoeffFn,
    pub terminal: Terminal,

    /// Working Lipschitz constant shared by all coefficients, over the
    /// desk-scale box `|x| ≤ 32` the probes sample (the quadratic benchmark
    /// terminal is not globally Lipschitz; everything else is).
    pub lipschitz_k: f64,
    /// Ellipticity floor: smallest admissible eigenvalue of `σσᵀ`.
    pub ellipticity_c: f64,
    /// Whether the supplied partials make the set usable by the linearized
    /// (gradient) systems without mollification.
    pub smooth: bool,
    /// Allow finite-difference fallback for the forward tangent when
    /// `drift_jac`/`diffusion_jac` are absent.
    pub fd_fallback: bool,

    pub drift_jac: Option<DriftJacFn>,
    pub diffusion_jac: Option<DiffusionJacFn>,
    pub driver_x: Option<DriverXGradFn>,
    pub driver_y: Option<DriverYGradFn>,
    pub driver_z: Option<DriverZGradFn>,
    pub noise_x: Option<NoiseXJacFn>,
    pub noise_y: Option<NoiseYGradFn>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("lipschitz_k", &self.lipschitz_k)
            .field("ellipticity_c", &self.ellipticity_c)
            .field("smooth", &self.smooth)
            .field("multi_terminal", &self.terminal.is_multi())
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// Allocating convenience wrappers — test and oracle code only; the hot
    /// loops write into reused buffers instead.
    pub fn drift_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.drift)(t, x, &mut out);
        out
    }

    pub fn diffusion_mat(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        (self.diffusion)(t, x, &mut out);
        out
    }

    pub fn noise_vec(&self, t: f64, x: &[f64], y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.noise_coeff)(t, x, y, &mut out);
        out
    }

    pub fn terminal_point(&self, x: &[f64]) -> Result<f64> {
        match &self.terminal {
            Terminal::Point { value, .. } => Ok(value(x)),
            Terminal::MultiPoint { .. } => Err(Error::configuration(
                "terminal looks at several path times; evaluate it with the full argument list",
            )),
        }
    }

    pub fn terminal_multi(&self, args: &[&[f64]]) -> f64 {
        match &self.terminal {
            Terminal::Point { value, .. } => value(args[args.len() - 1]),
            Terminal::MultiPoint { value, .. } => value(args),
        }
    }

    /// Runs the deterministic probe battery: sampled ellipticity, sampled
    /// Lipschitz quotients against `lipschitz_k`, and (where analytic
    /// partials exist) central-difference cross-checks. Returns a summary or
    /// the first violation.
    pub fn validate_probes(&self, horizon: f64, multi_arity: Option<usize>) -> Result<ProbeReport> {
        let d = self.dim;
        let times = [0.0, horizon / 3.0, 2.0 * horizon / 3.0, horizon];
        let points = probe_points(d);
        let slack = 1.0 + 1e-2;

        let mut report = ProbeReport {
            min_ellipticity: f64::INFINITY,
            max_lipschitz_quotient: 0.0,
            max_partial_deviation: 0.0,
        };

        // Sampled ellipticity of σσᵀ.
        for &t in &times {
            for p in &points {
                let sigma = self.diffusion_mat(t, p);
                let eig = linalg::min_eig_sym_aat(d, &sigma);
                report.min_ellipticity = report.min_ellipticity.min(eig);
                if eig < self.ellipticity_c * (1.0 - 1e-9) {
                    return Err(Error::validation(format!(
                        "ellipticity violated at t={t}, x={p:?}: min eig {eig:.6e} < {}",
                        self.ellipticity_c
                    )));
                }
            }
        }

        // Sampled Lipschitz quotients in the spatial argument.
        let mut check_quotient = |label: &str, diff: f64, dist: f64| -> Result<()> {
            let q = diff / dist;
            report.max_lipschitz_quotient = report.max_lipschitz_quotient.max(q);
            if q > self.lipschitz_k * slack {
                return Err(Error::validation(format!(
                    "sampled Lipschitz quotient {q:.4} for {label} exceeds K = {}",
                    self.lipschitz_k
                )));
            }
            Ok(())
        };
        let y_probes = [-1.5, 0.0, 2.0];
        for &t in &times {
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    let (a, b) = (&points[i], &points[j]);
                    let dist = dist(a, b);
                    if dist < 1e-12 {
                        continue;
                    }
                    let db = sub_norm(&self.drift_vec(t, a), &self.drift_vec(t, b));
                    check_quotient("drift", db, dist)?;
                    let ds = sub_norm(&self.diffusion_mat(t, a), &self.diffusion_mat(t, b));
                    check_quotient("diffusion", ds, dist)?;
                    for &y in &y_probes {
                        let z = vec![0.3; d];
                        let df =
                            ((self.driver)(t, a, y, &z) - (self.driver)(t, b, y, &z)).abs();
                        check_quotient("driver", df, dist)?;
                        let dg = sub_norm(&self.noise_vec(t, a, y), &self.noise_vec(t, b, y));
                        check_quotient("noise coefficient", dg, dist)?;
                    }
                    match &self.terminal {
                        Terminal::Point { value, .. } => {
                            check_quotient("terminal", (value(a) - value(b)).abs(), dist)?;
                        }
                        Terminal::MultiPoint { value, .. } => {
                            let arity = multi_arity.ok_or_else(|| {
                                Error::validation(
                                    "multi-point terminal needs the partition arity to be probed",
                                )
                            })?;
                            // Vary one slot at a time, others held at a.
                            for slot in 0..arity {
                                let mut args_a: Vec<&[f64]> = vec![a.as_slice(); arity];
                                let args_b = {
                                    let mut v = args_a.clone();
                                    v[slot] = b.as_slice();
                                    v
                                };
                                args_a[slot] = a.as_slice();
                                let dl = (value(&args_a) - value(&args_b)).abs();
                                check_quotient("terminal", dl, dist)?;
                            }
                        }
                    }
                }
            }
        }

        // Analytic partials against central differences.
        let h = 1e-5;
        let tol = |scale: f64| 1e-4 * (1.0 + scale.abs());
        for &t in &times {
            for p in &points {
                if let Some(jac) = &self.drift_jac {
                    let mut a = vec![0.0; d * d];
                    jac(t, p, &mut a);
                    for j in 0..d {
                        let (hi, lo) = bump(p, j, h);
                        let fhi = self.drift_vec(t, &hi);
                        let flo = self.drift_vec(t, &lo);
                        for i in 0..d {
                            let fd = (fhi[i] - flo[i]) / (2.0 * h);
                            let dev = (fd - a[i * d + j]).abs();
                            report.max_partial_deviation = report.max_partial_deviation.max(dev);
                            if dev > tol(a[i * d + j]) {
                                return Err(Error::validation(format!(
                                    "drift Jacobian entry ({i},{j}) off by {dev:.3e} at t={t}, x={p:?}"
                                )));
                            }
                        }
                    }
                }
                if let Some(jac) = &self.diffusion_jac {
                    let mut a = vec![0.0; d * d * d];
                    jac(t, p, &mut a);
                    for j in 0..d {
                        let (hi, lo) = bump(p, j, h);
                        let shi = self.diffusion_mat(t, &hi);
                        let slo = self.diffusion_mat(t, &lo);
                        for m in 0..d {
                            for i in 0..d {
                                let fd = (shi[i * d + m] - slo[i * d + m]) / (2.0 * h);
                                let an = a[m * d * d + i * d + j];
                                let dev = (fd - an).abs();
                                report.max_partial_deviation =
                                    report.max_partial_deviation.max(dev);
                                if dev > tol(an) {
                                    return Err(Error::validation(format!(
                                        "diffusion Jacobian entry (col {m}, {i},{j}) off by {dev:.3e}"
                                    )));
                                }
                            }
                        }
                    }
                }
            }
        }

        Ok(report)
    }
}

/// Summary of the probe battery.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReport {
    pub min_ellipticity: f64,
    pub max_lipschitz_quotient: f64,
    pub max_partial_deviation: f64,
}

fn probe_points(d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]];
    for axis in 0..d {
        for &v in &[0.5, -0.5, 1.0, -1.0, 2.0, -2.0] {
            let mut p = vec![0.0; d];
            p[axis] = v;
            pts.push(p);
        }
    }
    if d > 1 {
        pts.push(vec![0.7; d]);
        pts.push(vec![-1.3; d]);
    }
    pts
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    acc.sqrt()
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    acc.sqrt()
}

fn bump(p: &[f64], j: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut hi = p.to_vec();
    let mut lo = p.to_vec();
    hi[j] += h;
    lo[j] -= h;
    (hi, lo)
}

// ---------------------------------------------------------------------------
// Named coefficient families. These double as the vocabulary of the
// plain-text experiment configs, so each enum can parse itself from a short
// `name` / `name:args` string.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    /// `b = 0`.
    Zero,
    /// Constant vector `b = v·(1, …, 1)`.
    Constant(f64),
    /// `b = rate·x` (mean reversion for negative rates).
    Linear(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionSpec {
    /// `σ = I`.
    Unit,
    /// `σ = s·I`, `s > 0`.
    Scaled(f64),
    /// Diagonal `σ_ii = base + amp·sin(x_i)`; needs `base > |amp|` to stay
    /// elliptic. The state dependence exercises the tangent machinery.
    AffineSin { base: f64, amp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverSpec {
    /// `f = 0`.
    Zero,
    /// `f = c`.
    Constant(f64),
    /// `f = −y` (scalar exponential decay in the backward variable).
    LinearDecay,
    /// `f = sin(y)`.
    SinY,
    /// `f = sin(y) + a·z_0` — touches both backward arguments.
    SinYZ(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCoeffSpec {
    /// `g = 0` (plain backward SDE, PDE-comparable).
    Zero,
    /// `g = c·(1, …, 1)` (additive backward noise).
    Constant(f64),
    /// `g_i = a·cos(y)`.
    CosY(f64),
    /// `g_i = a·sin(x_i)` — state-dependent, exercises `∂g/∂x`.
    SinX(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalSpec {
    /// `l(x) = x_0`.
    Identity,
    /// `l(x) = |x|²` (the heat benchmark; quadratic, so Lipschitz only on
    /// the probe box).
    Square,
    /// `l(x) = |x|` — Lipschitz but not differentiable at 0; gradient-based
    /// pipelines must mollify.
    Abs,
    /// `l(x) = c`.
    Constant(f64),
    /// `l(x) = sin(x_0)`.
    Sin,
    /// Multi-point `l(x_0, …, x_m) = x_i[0]` — picks out the state at
    /// partition point `i`.
    Node(usize),
    /// Multi-point `l(x_0, …, x_m) = x_0[0]·x_1[0]` — the canonical
    /// jump-size example.
    Product01,
}

impl TerminalSpec {
    pub fn is_multi(&self) -> bool {
        matches!(self, TerminalSpec::Node(_) | TerminalSpec::Product01)
    }
}

fn parse_args(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((name, rest)) => (name, Some(rest)),
        None => (s, None),
    }
}

fn parse_f64(what: &str, s: Option<&str>) -> Result<f64> {
    let raw = s.ok_or_else(|| Error::configuration(format!("{what} needs a numeric argument")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::configuration(format!("bad numeric argument {raw:?} for {what}")))
}

impl DriftSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = parse_args(s.trim());
        match name {
            "zero" => Ok(DriftSpec::Zero),
            "constant" => Ok(DriftSpec::Constant(parse_f64("drift constant", args)?)),
            "linear" => Ok(DriftSpec::Linear(parse_f64("drift linear", args)?)),
            other => Err(Error::configuration(format!("unknown drift family {other:?}"))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DriftSpec::Zero => "zero".into(),
            DriftSpec::Constant(v) => format!("constant:{v}"),
            DriftSpec::Linear(r) => format!("linear:{r}"),
        }
    }
}

impl DiffusionSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = parse_args(s.trim());
        match name {
            "unit" => Ok(DiffusionSpec::Unit),
            "scaled" => Ok(DiffusionSpec::Scaled(parse_f64("diffusion scale", args)?)),
            "affine_sin" => {
                let raw = args.ok_or_else(|| {
                    Error::configuration("affine_sin needs base,amp arguments")
                })?;
                let parts: Vec<&str> = raw.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::configuration("affine_sin needs exactly base,amp"));
                }
                Ok(DiffusionSpec::AffineSin {
                    base: parse_f64("affine_sin base", Some(parts[0]))?,
                    amp: parse_f64("affine_sin amp", Some(parts[1]))?,
                })
            }
            other => Err(Error::configuration(format!(
                "unknown diffusion family {other:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DiffusionSpec::Unit => "unit".into(),
            DiffusionSpec::Scaled(s) => format!("scaled:{s}"),
            DiffusionSpec::AffineSin { base, amp } => format!("affine_sin:{base},{amp}"),
        }
    }
}

impl DriverSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = parse_args(s.trim());
        match name {
            "zero" => Ok(DriverSpec::Zero),
            "constant" => Ok(DriverSpec::Constant(parse_f64("driver constant", args)?)),
            "linear_decay" => Ok(DriverSpec::LinearDecay),
            "sin_y" => Ok(DriverSpec::SinY),
            "sin_y_z" => Ok(DriverSpec::SinYZ(parse_f64("driver z-weight", args)?)),
            other => Err(Error::configuration(format!(
                "unknown driver family {other:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DriverSpec::Zero => "zero".into(),
            DriverSpec::Constant(c) => format!("constant:{c}"),
            DriverSpec::LinearDecay => "linear_decay".into(),
            DriverSpec::SinY => "sin_y".into(),
            DriverSpec::SinYZ(a) => format!("sin_y_z:{a}"),
        }
    }
}

impl NoiseCoeffSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = parse_args(s.trim());
        match name {
            "zero" => Ok(NoiseCoeffSpec::Zero),
            "constant" => Ok(NoiseCoeffSpec::Constant(parse_f64(
                "noise coefficient constant",
                args,
            )?)),
            "cos_y" => Ok(NoiseCoeffSpec::CosY(parse_f64("cos_y amplitude", args)?)),
            "sin_x" => Ok(NoiseCoeffSpec::SinX(parse_f64("sin_x amplitude", args)?)),
            other => Err(Error::configuration(format!(
                "unknown noise-coefficient family {other:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseCoeffSpec::Zero => "zero".into(),
            NoiseCoeffSpec::Constant(c) => format!("constant:{c}"),
            NoiseCoeffSpec::CosY(a) => format!("cos_y:{a}"),
            NoiseCoeffSpec::SinX(a) => format!("sin_x:{a}"),
        }
    }
}

impl TerminalSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = parse_args(s.trim());
        match name {
            "identity" => Ok(TerminalSpec::Identity),
            "square" => Ok(TerminalSpec::Square),
            "abs" => Ok(TerminalSpec::Abs),
            "constant" => Ok(TerminalSpec::Constant(parse_f64("terminal constant", args)?)),
            "sin" => Ok(TerminalSpec::Sin),
            "node" => {
                let raw = args
                    .ok_or_else(|| Error::configuration("node terminal needs an index"))?;
                let idx = raw.trim().parse::<usize>().map_err(|_| {
                    Error::configuration(format!("bad node index {raw:?} for terminal"))
                })?;
                Ok(TerminalSpec::Node(idx))
            }
            "product01" => Ok(TerminalSpec::Product01),
            other => Err(Error::configuration(format!(
                "unknown terminal family {other:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TerminalSpec::Identity => "identity".into(),
            TerminalSpec::Square => "square".into(),
            TerminalSpec::Abs => "abs".into(),
            TerminalSpec::Constant(c) => format!("constant:{c}"),
            TerminalSpec::Sin => "sin".into(),
            TerminalSpec::Node(i) => format!("node:{i}"),
            TerminalSpec::Product01 => "product01".into(),
        }
    }
}

/// Radius of the desk-scale box the working Lipschitz constants cover.
const PROBE_BOX: f64 = 32.0;

/// Assembles a [`CoefficientSet`] from named families, wiring in analytic
/// partials and honest constants for each.
pub fn build_coefficients(
    dim: usize,
    drift: DriftSpec,
    diffusion: DiffusionSpec,
    driver: DriverSpec,
    noise: NoiseCoeffSpec,
    terminal: TerminalSpec,
) -> Result<CoefficientSet> {
    if dim == 0 {
        return Err(Error::validation("dimension must be at least 1"));
    }

    let mut k: f64 = 1e-12; // strictly positive, so quotient checks are well-posed
    let mut smooth = true;

    let (drift_fn, drift_jac): (DriftFn, Option<DriftJacFn>) = match drift {
        DriftSpec::Zero => (
            Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(0.0)),
            Some(Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(0.0))),
        ),
        DriftSpec::Constant(v) => (
            Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(v)),
            Some(Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(0.0))),
        ),
        DriftSpec::Linear(rate) => {
            k = k.max(rate.abs());
            (
                Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = rate * xi;
                    }
                }),
                Some(Arc::new(move |_t, _x: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    let d = (out.len() as f64).sqrt() as usize;
                    for i in 0..d {
                        out[i * d + i] = rate;
                    }
                })),
            )
        }
    };

    let (diffusion_fn, diffusion_jac, ellipticity): (DiffusionFn, Option<DiffusionJacFn>, f64) =
        match diffusion {
            DiffusionSpec::Unit => (
                Arc::new(move |_t, _x: &[f64], out: &mut [f64]| {
                    let d = (out.len() as f64).sqrt() as usize;
                    linalg::identity(d, out);
                }),
                Some(Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(0.0))),
                1.0,
            ),
            DiffusionSpec::Scaled(s) => {
                if s <= 0.0 {
                    return Err(Error::validation(format!(
                        "diffusion scale must be positive, got {s}"
                    )));
                }
                (
                    Arc::new(move |_t, _x: &[f64], out: &mut [f64]| {
                        let d = (out.len() as f64).sqrt() as usize;
                        out.fill(0.0);
                        for i in 0..d {
                            out[i * d + i] = s;
                        }
                    }),
                    Some(Arc::new(move |_t, _x: &[f64], out: &mut [f64]| out.fill(0.0))),
                    s * s,
                )
            }
            DiffusionSpec::AffineSin { base, amp } => {
                if base <= amp.abs() {
                    return Err(Error::validation(format!(
                        "affine_sin diffusion needs base > |amp| for ellipticity (got {base}, {amp})"
                    )));
                }
                k = k.max(amp.abs());
                let lo = base - amp.abs();
                (
                    Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                        let d = x.len();
                        out.fill(0.0);
                        for i in 0..d {
                            out[i * d + i] = base + amp * x[i].sin();
                        }
                    }),
                    Some(Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                        let d = x.len();
                        out.fill(0.0);
                        // Only σ_ii depends on x_i: column-i Jacobian has one
                        // nonzero entry (i, i).
                        for i in 0..d {
                            out[i * d * d + i * d + i] = amp * x[i].cos();
                        }
                    })),
                    lo * lo,
                )
            }
        };

    let (driver_fn, driver_x, driver_y, driver_z): (
        DriverFn,
        Option<DriverXGradFn>,
        Option<DriverYGradFn>,
        Option<DriverZGradFn>,
    ) = match driver {
        DriverSpec::Zero => (
            Arc::new(move |_t, _x: &[f64], _y, _z: &[f64]| 0.0),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                out.fill(0.0)
            })),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64]| 0.0)),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                out.fill(0.0)
            })),
        ),
        DriverSpec::Constant(c) => (
            Arc::new(move |_t, _x: &[f64], _y, _z: &[f64]| c),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                out.fill(0.0)
            })),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64]| 0.0)),
            Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                out.fill(0.0)
            })),
        ),
        DriverSpec::LinearDecay => {
            k = k.max(1.0);
            (
                Arc::new(move |_t, _x: &[f64], y, _z: &[f64]| -y),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0)
                })),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64]| -1.0)),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0)
                })),
            )
        }
        DriverSpec::SinY => {
            k = k.max(1.0);
            (
                Arc::new(move |_t, _x: &[f64], y, _z: &[f64]| y.sin()),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0)
                })),
                Some(Arc::new(move |_t, _x: &[f64], y, _z: &[f64]| y.cos())),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0)
                })),
            )
        }
        DriverSpec::SinYZ(a) => {
            k = k.max(1.0_f64.max(a.abs()));
            (
                Arc::new(move |_t, _x: &[f64], y, z: &[f64]| y.sin() + a * z[0]),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0)
                })),
                Some(Arc::new(move |_t, _x: &[f64], y, _z: &[f64]| y.cos())),
                Some(Arc::new(move |_t, _x: &[f64], _y, _z: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    out[0] = a;
                })),
            )
        }
    };

    let (noise_fn, noise_x, noise_y): (NoiseCoeffFn, Option<NoiseXJacFn>, Option<NoiseYGradFn>) =
        match noise {
            NoiseCoeffSpec::Zero => (
                Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0)),
                Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
                Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
            ),
            NoiseCoeffSpec::Constant(c) => (
                Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(c)),
                Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
                Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
            ),
            NoiseCoeffSpec::CosY(a) => {
                k = k.max(a.abs());
                (
                    Arc::new(move |_t, _x: &[f64], y: f64, out: &mut [f64]| out.fill(a * y.cos())),
                    Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
                    Some(Arc::new(move |_t, _x: &[f64], y: f64, out: &mut [f64]| {
                        out.fill(-a * y.sin())
                    })),
                )
            }
            NoiseCoeffSpec::SinX(a) => {
                k = k.max(a.abs());
                (
                    Arc::new(move |_t, x: &[f64], _y, out: &mut [f64]| {
                        for (o, &xi) in out.iter_mut().zip(x) {
                            *o = a * xi.sin();
                        }
                    }),
                    Some(Arc::new(move |_t, x: &[f64], _y, out: &mut [f64]| {
                        let d = x.len();
                        out.fill(0.0);
                        for i in 0..d {
                            out[i * d + i] = a * x[i].cos();
                        }
                    })),
                    Some(Arc::new(move |_t, _x: &[f64], _y, out: &mut [f64]| out.fill(0.0))),
                )
            }
        };

    let terminal_built: Terminal = match terminal {
        TerminalSpec::Identity => {
            k = k.max(1.0);
            Terminal::Point {
                value: Arc::new(move |x: &[f64]| x[0]),
                grad: Some(Arc::new(move |_x: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    out[0] = 1.0;
                })),
            }
        }
        TerminalSpec::Square => {
            k = k.max(2.0 * PROBE_BOX);
            Terminal::Point {
                value: Arc::new(move |x: &[f64]| x.iter().map(|v| v * v).sum()),
                grad: Some(Arc::new(move |x: &[f64], out: &mut [f64]| {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = 2.0 * xi;
                    }
                })),
            }
        }
        TerminalSpec::Abs => {
            k = k.max(1.0);
            smooth = false; // kink at the origin; gradient pipelines must mollify
            Terminal::Point {
                value: Arc::new(move |x: &[f64]| linalg::norm2(x)),
                grad: None,
            }
        }
        TerminalSpec::Constant(c) => Terminal::Point {
            value: Arc::new(move |_x: &[f64]| c),
            grad: Some(Arc::new(move |_x: &[f64], out: &mut [f64]| out.fill(0.0))),
        },
        TerminalSpec::Sin => {
            k = k.max(1.0);
            Terminal::Point {
                value: Arc::new(move |x: &[f64]| x[0].sin()),
                grad: Some(Arc::new(move |x: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    out[0] = x[0].cos();
                })),
            }
        }
        TerminalSpec::Node(idx) => {
            k = k.max(1.0);
            Terminal::MultiPoint {
                value: Arc::new(move |args: &[&[f64]]| args[idx][0]),
                grad: Some(Arc::new(move |_args: &[&[f64]], arg: usize, out: &mut [f64]| {
                    out.fill(0.0);
                    if arg == idx {
                        out[0] = 1.0;
                    }
                })),
            }
        }
        TerminalSpec::Product01 => {
            k = k.max(PROBE_BOX);
            Terminal::MultiPoint {
                value: Arc::new(move |args: &[&[f64]]| args[0][0] * args[1][0]),
                grad: Some(Arc::new(move |args: &[&[f64]], arg: usize, out: &mut [f64]| {
                    out.fill(0.0);
                    match arg {
                        0 => out[0] = args[1][0],
                        1 => out[0] = args[0][0],
                        _ => {}
                    }
                })),
            }
        }
    };

    Ok(CoefficientSet {
        dim,
        drift: drift_fn,
        diffusion: diffusion_fn,
        driver: driver_fn,
        noise_coeff: noise_fn,
        terminal: terminal_built,
        lipschitz_k: k,
        ellipticity_c: ellipticity * (1.0 - 1e-12),
        smooth,
        fd_fallback: true,
        drift_jac,
        diffusion_jac,
        driver_x,
        driver_y,
        driver_z,
        noise_x,
        noise_y,
    })
}

/// The workhorse unit case: `b = 0`, `σ = I`, `f = 0`, `g = 0`, with a
/// caller-chosen terminal. Most closed forms in the test suite live here.
pub fn unit_case(dim: usize, terminal: TerminalSpec) -> CoefficientSet {
    build_coefficients(
        dim,
        DriftSpec::Zero,
        DiffusionSpec::Unit,
        DriverSpec::Zero,
        NoiseCoeffSpec::Zero,
        terminal,
    )
    .expect("unit case always builds")
}
