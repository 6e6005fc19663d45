//! Numerical laboratory for backward doubly stochastic differential equations
//! (BDSDEs).
//!
//! A BDSDE couples a forward diffusion `X` with a backward pair `(Y, Z)`
//! driven by two independent Brownian motions: `W` is integrated in the
//! ordinary (Itô) direction while `B` enters through a backward integral, so
//! `Y_s` depends on the future of `B`. Conditioning on the whole `B`-path
//! turns the solution into a random field `u` with `Y_s = u(s, X_s)`, and the
//! martingale integrand satisfies `Z_s = ∂ₓu(s, X_s)·σ(s, X_s)` — this crate
//! exists to compute those objects numerically and to check every identity it
//! uses against independent oracles at desk scale.
//!
//! The main pipelines:
//!
//! * [`forward`]: Euler simulation of the forward diffusion together with its
//!   tangent (flow-derivative) process and per-node diffusion inverses.
//! * [`solver`]: regression-based backward induction for `(Y, Z)` under a
//!   frozen `B`-path, including exact enumeration mode for sign-flip noise.
//! * [`variational`]: the linearized (tangent) backward system whose initial
//!   value is the spatial gradient `∂ₓu`.
//! * [`weights`]: derivative-free gradient and `Z` estimators built from
//!   Malliavin-type weight processes (no derivatives of the data needed).
//! * [`jumps`]: the gradient jump `ΔZ` across interior nodes of a terminal
//!   that looks at the path at several fixed times.
//! * [`oracle`]: independent references — a Crank–Nicolson PDE solver, a
//!   pathwise SPDE splitting scheme, finite differences, and a binary-tree
//!   enumerator. These share model types with the estimators but no
//!   numerical kernels.
//! * [`experiment`] / [`acceptance`]: plain-text experiment configs, CSV
//!   result records, and the scripted acceptance suite.
//!
//! Time convention: user-facing quantities live on the "paper" clock
//! `s ∈ [0, t]` where the terminal condition sits at `s = 0` and the value of
//! interest is `u(t, x)`. Internally every array runs on the reversed clock
//! `τ = t − s` (index 0 is the start point `x`, index `n` is where the
//! terminal condition applies). Conversion helpers live on the types
//! themselves; see [`grid::TimeGrid`].

pub mod acceptance;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod jumps;
pub mod linalg;
pub mod mollify;
pub mod noise;
pub mod oracle;
pub mod problem;
pub mod regression;
pub mod solver;
pub mod stats;
pub mod variational;
pub mod weights;

pub use acceptance::{run_acceptance, CriterionReport, CriterionStatus};
pub use coeffs::{CoefficientSet, Terminal};
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use experiment::{
    acceptance_records, run_experiment, ExperimentOutcome, ResultRecord, CSV_HEADER,
};
pub use forward::{simulate_forward, tangent_consistency_check, ForwardBundle, TangentReport};
pub use grid::{Partition, TimeGrid};
pub use jumps::{solve_jump_system, JumpSolution};
pub use mollify::mollify;
pub use noise::{sample_noise, NoiseMode, NoisePath};
pub use oracle::pde::{pde_solve, PdeSolution, SpaceGrid};
pub use oracle::spde::spde_solve_pathwise;
pub use oracle::tree::{tree_b_average_u, tree_enumerate, TreeSolution};
pub use oracle::{fd_gradient, ode_reference, GridFunction};
pub use problem::ProblemSpec;
pub use solver::{evaluate_u, solve_bdsde, BackwardSolution, CondExpEngine, Ensemble};
pub use variational::{solve_variational, VariationalSolution};
pub use weights::{
    compute_weights, estimate_grad_u_weights, estimate_z_discrete, estimate_z_weights,
    malliavin_derivative_x, malliavin_derivative_y, malliavin_derivative_z, WeightEstimate,
    WeightProcess,
};
