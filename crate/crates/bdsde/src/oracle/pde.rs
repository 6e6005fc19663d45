//! Crank–Nicolson finite-difference reference for the deterministic field
//! equation `∂_t u = ½σ²·u_xx + b·u_x + f(t, x, u, u_x·σ)`, `u(0,·) = l`.
//!
//! This is the one-dimensional backward-equation field written forward in
//! paper time: the data `l` sits at time 0 and the solver marches up to the
//! horizon, producing one frame per time node. Far-field boundaries are
//! Dirichlet with the initial data frozen, so the spatial half-width must be
//! generous (six standard deviations of the diffusion beyond the evaluation
//! region is the working rule; see the acceptance configs).
//!
//! The nonlinear driver is handled by lagged evaluation: one predictor step
//! with `f` at the old time level, then two corrector sweeps re-averaging
//! `f` between the old level and the current iterate. The tridiagonal
//! systems are solved by a local Thomas elimination — deliberately not the
//! shared linear-algebra kernels, so this oracle stays independent of the
//! code it validates.

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::oracle::GridFunction;

/// Above this value of `delta/h²` the scheme is still stable but its
/// accuracy constant degrades; flagged so callers can refine.
pub const CFL_QUALITY_MAX: f64 = 200.0;
/// Number of corrector sweeps after the predictor.
const CORRECTOR_SWEEPS: usize = 2;

/// Spatial discretization: a symmetric window around `center` with an odd
/// number of nodes.
#[derive(Debug, Clone, Copy)]
pub struct SpaceGrid {
    pub center: f64,
    pub half_width: f64,
    pub n_nodes: usize,
}

impl SpaceGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 3 || self.n_nodes % 2 == 0 {
            return Err(Error::validation(
                "space grid needs an odd node count of at least 3",
            ));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::validation("space grid half-width must be positive"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_nodes - 1) as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        self.center - self.half_width + i as f64 * self.spacing()
    }
}

/// Full time–space solution: one frame per time node, plus scheme-quality
/// diagnostics.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    /// `frames[j]` is the field at paper time `j·delta`, `j = 0..=n_time`.
    pub frames: Vec<GridFunction>,
    /// `delta/h²` — the parabolic mesh ratio.
    pub mesh_ratio: f64,
    /// True when the mesh ratio exceeds [`CFL_QUALITY_MAX`].
    pub quality_flagged: bool,
}

impl PdeSolution {
    pub fn final_frame(&self) -> &GridFunction {
        self.frames.last().expect("at least the initial frame")
    }

    /// Frame at the time node closest to paper time `s`.
    pub fn frame_at_time(&self, s: f64) -> &GridFunction {
        let n = self.frames.len() - 1;
        let horizon = self.frames[n].time;
        let j = ((s / horizon) * n as f64).round().clamp(0.0, n as f64) as usize;
        &self.frames[j]
    }
}

/// Solves the deterministic field equation on `[0, horizon]`.
///
/// The noise coefficient of `coeffs` is ignored; callers wanting the noisy
/// field use the pathwise splitting solver instead. One-dimensional,
/// single-point terminal data only.
pub fn pde_solve(
    coeffs: &CoefficientSet,
    horizon: f64,
    space: SpaceGrid,
    n_time_steps: usize,
) -> Result<PdeSolution> {
    space.validate()?;
    if coeffs.dim != 1 {
        return Err(Error::validation(
            "the finite-difference reference is one-dimensional only",
        ));
    }
    if coeffs.terminal.is_multi() {
        return Err(Error::validation(
            "the finite-difference reference needs single-point terminal data",
        ));
    }
    if n_time_steps == 0 || !(horizon > 0.0) {
        return Err(Error::validation("need a positive horizon and step count"));
    }

    let nx = space.n_nodes;
    let h = space.spacing();
    let delta = horizon / n_time_steps as f64;
    let mesh_ratio = delta / (h * h);

    // Initial data and frozen boundary values.
    let mut u: Vec<f64> = (0..nx)
        .map(|i| coeffs.terminal_point(&[space.x_node(i)]))
        .collect::<Result<_>>()?;
    let mut frames = Vec::with_capacity(n_time_steps + 1);
    frames.push(GridFunction::new(
        space.center,
        space.half_width,
        0.0,
        u.clone(),
    )?);

    let mut stepper = CnStepper::new(coeffs, space, delta);
    for j in 0..n_time_steps {
        let t_old = j as f64 * delta;
        let t_new = (j + 1) as f64 * delta;
        u = stepper.step(&u, t_old, t_new)?;
        frames.push(GridFunction::new(
            space.center,
            space.half_width,
            t_new,
            u.clone(),
        )?);
    }

    Ok(PdeSolution {
        frames,
        mesh_ratio,
        quality_flagged: mesh_ratio > CFL_QUALITY_MAX,
    })
}

/// One Crank–Nicolson time step with lagged-driver correction, shared by the
/// deterministic solver and the pathwise splitting solver so their
/// deterministic halves are the same code (and bitwise identical when the
/// noise coefficient vanishes).
pub(super) struct CnStepper<'a> {
    coeffs: &'a CoefficientSet,
    space: SpaceGrid,
    delta: f64,
    // Scratch, reused across steps.
    sig2_old: Vec<f64>,
    sig_old: Vec<f64>,
    b_old: Vec<f64>,
    sig2_new: Vec<f64>,
    sig_new: Vec<f64>,
    b_new: Vec<f64>,
    rhs_base: Vec<f64>,
    rhs: Vec<f64>,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    fvec: Vec<f64>,
    iterate: Vec<f64>,
}

impl<'a> CnStepper<'a> {
    pub(super) fn new(coeffs: &'a CoefficientSet, space: SpaceGrid, delta: f64) -> Self {
        let nx = space.n_nodes;
        let m = nx - 2;
        CnStepper {
            coeffs,
            space,
            delta,
            sig2_old: vec![0.0; nx],
            sig_old: vec![0.0; nx],
            b_old: vec![0.0; nx],
            sig2_new: vec![0.0; nx],
            sig_new: vec![0.0; nx],
            b_new: vec![0.0; nx],
            rhs_base: vec![0.0; m],
            rhs: vec![0.0; m],
            sub: vec![0.0; m],
            diag: vec![0.0; m],
            sup: vec![0.0; m],
            fvec: vec![0.0; nx],
            iterate: vec![0.0; nx],
        }
    }

    fn sample_coefficients(&mut self, t_old: f64, t_new: f64) {
        let nx = self.space.n_nodes;
        let mut sig = [0.0];
        let mut b = [0.0];
        for i in 0..nx {
            let x = [self.space.x_node(i)];
            (self.coeffs.diffusion)(t_old, &x, &mut sig);
            (self.coeffs.drift)(t_old, &x, &mut b);
            self.sig_old[i] = sig[0];
            self.sig2_old[i] = sig[0] * sig[0];
            self.b_old[i] = b[0];
            (self.coeffs.diffusion)(t_new, &x, &mut sig);
            (self.coeffs.drift)(t_new, &x, &mut b);
            self.sig_new[i] = sig[0];
            self.sig2_new[i] = sig[0] * sig[0];
            self.b_new[i] = b[0];
        }
    }

    /// Fills `self.fvec` with `f(t, x_i, u_i, u_x·σ(t, x_i))` at every node,
    /// using central differences for `u_x` (one-sided never needed: the
    /// vector is only read at interior nodes).
    fn driver_values(&mut self, t: f64, u: &[f64], sig: &[f64]) {
        let nx = self.space.n_nodes;
        let h = self.space.spacing();
        for i in 1..nx - 1 {
            let ux = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let x = [self.space.x_node(i)];
            let z = [ux * sig[i]];
            self.fvec[i] = (self.coeffs.driver)(t, &x, u[i], &z);
        }
    }

    /// Advances `u` from `t_old` to `t_new`; boundary values are carried
    /// over unchanged (Dirichlet frozen at the initial data).
    pub(super) fn step(&mut self, u: &[f64], t_old: f64, t_new: f64) -> Result<Vec<f64>> {
        let nx = self.space.n_nodes;
        let m = nx - 2;
        let h = self.space.spacing();
        let half_dt = 0.5 * self.delta;
        self.sample_coefficients(t_old, t_new);

        // Explicit half: rhs_base = (I + Δ/2·L_old)·u at interior nodes.
        for i in 1..nx - 1 {
            let diff = self.sig2_old[i] * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (2.0 * h * h);
            let adv = self.b_old[i] * (u[i + 1] - u[i - 1]) / (2.0 * h);
            self.rhs_base[i - 1] = u[i] + half_dt * (diff + adv);
        }

        // Implicit half: (I − Δ/2·L_new) coefficients, constant across the
        // corrector sweeps.
        for i in 1..nx - 1 {
            let a = self.sig2_new[i] / (2.0 * h * h); // u_xx weight
            let c = self.b_new[i] / (2.0 * h); // u_x weight
            self.sub[i - 1] = -half_dt * (a - c);
            self.diag[i - 1] = 1.0 + half_dt * 2.0 * a;
            self.sup[i - 1] = -half_dt * (a + c);
        }
        let boundary_lo = u[0];
        let boundary_hi = u[nx - 1];

        // Predictor: driver at the old level; then two corrector sweeps
        // averaging old and current-iterate driver values.
        self.driver_values(t_old, u, &self.sig_old.clone());
        let f_old: Vec<f64> = self.fvec.clone();
        let mut f_avg = f_old.clone();
        for sweep in 0..=CORRECTOR_SWEEPS {
            for i in 1..nx - 1 {
                self.rhs[i - 1] = self.rhs_base[i - 1] + self.delta * f_avg[i];
            }
            self.rhs[0] -= self.sub[0] * boundary_lo;
            self.rhs[m - 1] -= self.sup[m - 1] * boundary_hi;
            self.iterate[0] = boundary_lo;
            self.iterate[nx - 1] = boundary_hi;
            thomas_solve(
                &self.sub,
                &self.diag,
                &self.sup,
                &self.rhs,
                &mut self.iterate[1..nx - 1],
            )?;
            if sweep < CORRECTOR_SWEEPS {
                let snapshot = self.iterate.clone();
                self.driver_values(t_new, &snapshot, &self.sig_new.clone());
                for i in 1..nx - 1 {
                    f_avg[i] = 0.5 * (f_old[i] + self.fvec[i]);
                }
            }
        }
        Ok(self.iterate.clone())
    }
}

/// Thomas elimination for a tridiagonal system; `sub[0]` and
/// `sup[m−1]` are ignored. Overwrites `out` with the solution.
fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], out: &mut [f64]) -> Result<()> {
    let m = diag.len();
    debug_assert!(sub.len() == m && sup.len() == m && rhs.len() == m && out.len() == m);
    let mut c_star = vec![0.0; m];
    let mut d_star = vec![0.0; m];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(Error::validation("tridiagonal pivot vanished"));
    }
    c_star[0] = sup[0] / pivot;
    d_star[0] = rhs[0] / pivot;
    for i in 1..m {
        pivot = diag[i] - sub[i] * c_star[i - 1];
        if pivot.abs() < 1e-300 {
            return Err(Error::validation("tridiagonal pivot vanished"));
        }
        c_star[i] = sup[i] / pivot;
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / pivot;
    }
    out[m - 1] = d_star[m - 1];
    for i in (0..m - 1).rev() {
        out[i] = d_star[i] - c_star[i] * out[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{
        build_coefficients, unit_case, DiffusionSpec, DriftSpec, DriverSpec, NoiseCoeffSpec,
        TerminalSpec,
    };

    fn grid(center: f64, hw: f64, nx: usize) -> SpaceGrid {
        SpaceGrid {
            center,
            half_width: hw,
            n_nodes: nx,
        }
    }

    #[test]
    fn constant_data_stays_constant() {
        let co = unit_case(1, TerminalSpec::Constant(3.0));
        let sol = pde_solve(&co, 1.0, grid(0.0, 6.0, 201), 32).unwrap();
        for frame in &sol.frames {
            for &v in &frame.values {
                assert!((v - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_square_data_gains_time() {
        // ∂_t u = ½u_xx with u(0,x)=x² has u(t,x) = x² + t exactly.
        let co = unit_case(1, TerminalSpec::Square);
        let sol = pde_solve(&co, 1.0, grid(0.0, 8.0, 1025), 512).unwrap();
        let u = sol.final_frame().eval(0.0).unwrap();
        assert!((u - 1.0).abs() < 1e-4, "u(1,0) = {u}");
        let u1 = sol.final_frame().eval(1.0).unwrap();
        assert!((u1 - 2.0).abs() < 1e-4, "u(1,1) = {u1}");
    }

    #[test]
    fn heat_eigenfunction_decays() {
        // sin x is an eigenfunction: u(t,x) = e^{−t/2}·sin x.
        let co = unit_case(1, TerminalSpec::Sin);
        let sol = pde_solve(&co, 1.0, grid(0.0, 8.0, 1025), 256).unwrap();
        let scale = (-0.5_f64).exp();
        for &x in &[-1.0, 0.0, 0.7, 1.5] {
            let u = sol.final_frame().eval(x).unwrap();
            assert!(
                (u - scale * x.sin()).abs() < 1e-4,
                "u(1,{x}) = {u} vs {}",
                scale * x.sin()
            );
        }
    }

    #[test]
    fn refinement_is_second_order() {
        // Halving both meshes should cut the eigenfunction error ~4×.
        let co = unit_case(1, TerminalSpec::Sin);
        let truth = (-0.5_f64).exp() * 0.7_f64.sin();
        let mut errs = Vec::new();
        for (nx, nt) in [(129, 16), (257, 32)] {
            let sol = pde_solve(&co, 1.0, grid(0.0, 8.0, nx), nt).unwrap();
            errs.push((sol.final_frame().eval(0.7).unwrap() - truth).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.0, "refinement ratio {ratio} (errors {errs:?})");
    }

    #[test]
    fn drift_transports_linear_data() {
        // ∂_t u = ½σ²u_xx + b·u_x with u(0,x) = x: exact u(t,x) = x + b·t
        // (linear data is unchanged by diffusion, advected by drift).
        let co = build_coefficients(
            1,
            DriftSpec::Constant(0.4),
            DiffusionSpec::Scaled(0.8),
            DriverSpec::Zero,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Identity,
        )
        .unwrap();
        let sol = pde_solve(&co, 1.0, grid(0.0, 10.0, 801), 128).unwrap();
        let u = sol.final_frame().eval(0.25).unwrap();
        assert!((u - (0.25 + 0.4)).abs() < 2e-3, "u = {u}");
    }

    #[test]
    fn linear_driver_matches_ode_factor() {
        // f(y) = −y with constant data: u(t,·) = c·e^{−t} (space drops out).
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::LinearDecay,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Constant(1.0),
        )
        .unwrap();
        let sol = pde_solve(&co, 1.0, grid(0.0, 6.0, 201), 128).unwrap();
        let u = sol.final_frame().eval(0.0).unwrap();
        assert!((u - (-1.0_f64).exp()).abs() < 1e-5, "u = {u}");
    }

    #[test]
    fn nonlinear_driver_second_order_in_time() {
        // With f = sin y the corrector sweeps should keep the scheme at
        // second order: compare against a heavily refined self-solution.
        let co = build_coefficients(
            1,
            DriftSpec::Zero,
            DiffusionSpec::Unit,
            DriverSpec::SinY,
            NoiseCoeffSpec::Zero,
            TerminalSpec::Sin,
        )
        .unwrap();
        let fine = pde_solve(&co, 1.0, grid(0.0, 8.0, 513), 256).unwrap();
        let truth = fine.final_frame().eval(0.5).unwrap();
        let mut errs = Vec::new();
        for nt in [8, 16] {
            let sol = pde_solve(&co, 1.0, grid(0.0, 8.0, 513), nt).unwrap();
            errs.push((sol.final_frame().eval(0.5).unwrap() - truth).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.0, "time refinement ratio {ratio} ({errs:?})");
    }

    #[test]
    fn frame_lookup_and_quality_flag() {
        let co = unit_case(1, TerminalSpec::Square);
        let sol = pde_solve(&co, 1.0, grid(0.0, 6.0, 25), 4).unwrap();
        assert_eq!(sol.frames.len(), 5);
        assert!((sol.frame_at_time(0.5).time - 0.5).abs() < 1e-12);
        assert!(!sol.quality_flagged);
        // A time step far too large for the space step trips the quality
        // flag (the scheme stays stable but turns oscillatory for rough
        // data in that regime).
        let bad = pde_solve(&co, 1.0, grid(0.0, 6.0, 513), 2).unwrap();
        assert!(bad.quality_flagged, "mesh ratio {}", bad.mesh_ratio);
    }

    #[test]
    fn multi_point_terminal_rejected() {
        use crate::coeffs::Terminal;
        use std::sync::Arc;
        let mut co = unit_case(1, TerminalSpec::Square);
        co.terminal = Terminal::MultiPoint {
            value: Arc::new(|args: &[&[f64]]| args[0][0]),
            grad: None,
        };
        assert!(pde_solve(&co, 1.0, grid(0.0, 6.0, 25), 4).is_err());
    }
}
