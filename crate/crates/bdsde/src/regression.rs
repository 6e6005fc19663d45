//! Least-squares projection onto a polynomial basis — the workhorse that
//! realizes conditional expectations across the inner ensemble.
//!
//! Backward induction never needs the regression *coefficients*, only the
//! fitted values at the design points themselves. Those are the orthogonal
//! projection of the target onto the column space of the design matrix,
//! which is computed here as `U·(Uᵀ·y)` from a thin SVD. One plan is built
//! per time step and reused for every target at that step (`Y`, each
//! component of `Z`, variational and jump systems), so the factorization
//! cost is paid once.
//!
//! Robustness rules:
//! * columns are scaled to unit max-abs before factoring;
//! * columns that are constant across the ensemble (including all-zero
//!   ones) duplicate the intercept and are dropped;
//! * if only the intercept survives — e.g. every design point is the same,
//!   which always happens at the start node where the forward state is
//!   deterministic — the projection degenerates to the plain average;
//! * otherwise a condition number above [`CONDITION_MAX`] is an error
//!   naming the step, not a silent bad answer.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats;

/// Condition-number ceiling for the scaled design matrix.
pub const CONDITION_MAX: f64 = 1e10;
/// Relative range below which a column counts as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// All monomials `x₀^{e₀}·…·x_{v−1}^{e_{v−1}}` with total degree ≤ `degree`,
/// enumerated in graded lexicographic order (constant term first).
#[derive(Debug, Clone)]
pub struct PolyBasis {
    n_vars: usize,
    degree: usize,
    /// Exponent tuples, flattened `n_terms × n_vars`.
    exponents: Vec<u32>,
}

impl PolyBasis {
    pub fn new(n_vars: usize, degree: usize) -> Self {
        assert!(n_vars > 0, "basis needs at least one variable");
        let mut exponents = Vec::new();
        let mut tuple = vec![0u32; n_vars];
        for total in 0..=degree as u32 {
            emit_of_total(total, 0, &mut tuple, &mut exponents);
        }
        PolyBasis {
            n_vars,
            degree,
            exponents,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_terms(&self) -> usize {
        self.exponents.len() / self.n_vars
    }

    /// Evaluates every basis term at `x` into `row` (length `n_terms`).
    pub fn eval_into(&self, x: &[f64], row: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_vars);
        debug_assert_eq!(row.len(), self.n_terms());
        for (term, slot) in row.iter_mut().enumerate() {
            let exps = &self.exponents[term * self.n_vars..(term + 1) * self.n_vars];
            let mut value = 1.0;
            for (v, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    value *= x[v];
                }
            }
            *slot = value;
        }
    }
}

/// Emits all exponent tuples with the given remaining total degree into the
/// suffix starting at `var`, in lexicographic order of the full tuple.
fn emit_of_total(total: u32, var: usize, tuple: &mut Vec<u32>, out: &mut Vec<u32>) {
    if var == tuple.len() - 1 {
        tuple[var] = total;
        out.extend_from_slice(tuple);
        return;
    }
    for e in (0..=total).rev() {
        tuple[var] = e;
        emit_of_total(total - e, var + 1, tuple, out);
    }
}

#[derive(Debug)]
enum Projector {
    /// Fitted values are the plain ensemble average.
    Mean,
    /// Fitted values are `U·(Uᵀ·y)` with the thin-SVD factor `U` (n×r).
    Svd { u: DMatrix<f64> },
}

/// A reusable projection plan for one design (one time step).
#[derive(Debug)]
pub struct RegressionPlan {
    n_points: usize,
    projector: Projector,
    condition: f64,
    n_kept_columns: usize,
}

impl RegressionPlan {
    /// Builds the plan from design points stored as a flat `n_points ×
    /// n_vars` row-major slice. `step` is only used to label errors.
    pub fn build(
        basis: &PolyBasis,
        points: &[f64],
        n_points: usize,
        step: usize,
    ) -> Result<RegressionPlan> {
        let v = basis.n_vars();
        assert_eq!(points.len(), n_points * v, "design shape mismatch");
        if n_points == 0 {
            return Err(Error::Solver {
                step,
                message: "empty design".into(),
            });
        }
        let p = basis.n_terms();
        let mut design = DMatrix::<f64>::zeros(n_points, p);
        let mut row = vec![0.0; p];
        for i in 0..n_points {
            basis.eval_into(&points[i * v..(i + 1) * v], &mut row);
            for (j, &value) in row.iter().enumerate() {
                design[(i, j)] = value;
            }
        }

        // Scale columns to unit max-abs and drop the ones that are constant
        // across the ensemble (they duplicate the intercept). Column 0 is
        // the intercept itself and always kept.
        let mut kept = vec![0usize];
        for j in 1..p {
            let col = design.column(j);
            let mut max_abs = 0.0_f64;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &value in col.iter() {
                max_abs = max_abs.max(value.abs());
                lo = lo.min(value);
                hi = hi.max(value);
            }
            if max_abs == 0.0 || (hi - lo) <= CONSTANT_TOL * max_abs {
                continue;
            }
            kept.push(j);
        }

        if kept.len() == 1 {
            return Ok(RegressionPlan {
                n_points,
                projector: Projector::Mean,
                condition: 1.0,
                n_kept_columns: 1,
            });
        }

        let mut scaled = DMatrix::<f64>::zeros(n_points, kept.len());
        for (slot, &j) in kept.iter().enumerate() {
            let col = design.column(j);
            let max_abs = col.iter().fold(0.0_f64, |m, &value| m.max(value.abs()));
            let inv = 1.0 / max_abs;
            for i in 0..n_points {
                scaled[(i, slot)] = col[i] * inv;
            }
        }

        let svd = scaled.svd(true, false);
        let sv = &svd.singular_values;
        let mut s_max = 0.0_f64;
        let mut s_min = f64::INFINITY;
        for &s in sv.iter() {
            s_max = s_max.max(s);
            s_min = s_min.min(s);
        }
        let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        if condition > CONDITION_MAX {
            return Err(Error::Solver {
                step,
                message: format!(
                    "design matrix condition number {condition:.3e} above {CONDITION_MAX:.0e} \
                     ({} columns, {n_points} points)",
                    kept.len()
                ),
            });
        }
        let u = svd.u.expect("thin U requested");
        Ok(RegressionPlan {
            n_points,
            projector: Projector::Svd { u },
            condition,
            n_kept_columns: kept.len(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Condition number of the scaled design (1 for the mean fallback).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Number of basis columns that survived the degeneracy filter.
    pub fn n_kept_columns(&self) -> usize {
        self.n_kept_columns
    }

    /// True when the plan degenerated to plain averaging.
    pub fn is_mean(&self) -> bool {
        matches!(self.projector, Projector::Mean)
    }

    /// Writes the fitted values at the design points into `out`.
    pub fn fitted_into(&self, targets: &[f64], out: &mut [f64]) {
        assert_eq!(targets.len(), self.n_points);
        assert_eq!(out.len(), self.n_points);
        match &self.projector {
            Projector::Mean => {
                let m = stats::mean(targets);
                out.fill(m);
            }
            Projector::Svd { u } => {
                let y = nalgebra::DVectorView::from_slice(targets, self.n_points);
                let coeffs = u.transpose() * y;
                let fitted = u * coeffs;
                out.copy_from_slice(fitted.as_slice());
            }
        }
    }

    /// Convenience wrapper returning a fresh vector.
    pub fn fitted(&self, targets: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_points];
        self.fitted_into(targets, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_points(n: usize, v: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * v)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect()
    }

    #[test]
    fn basis_enumeration_bivariate_quadratic() {
        let basis = PolyBasis::new(2, 2);
        assert_eq!(basis.n_terms(), 6);
        let mut row = vec![0.0; 6];
        basis.eval_into(&[2.0, 3.0], &mut row);
        let mut got = row.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // {1, x, y, x², xy, y²} at (2,3) = {1, 2, 3, 4, 6, 9} in some order.
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(row[0], 1.0, "constant term must come first");
    }

    #[test]
    fn basis_count_matches_binomial() {
        // C(v + deg, deg) terms for total degree ≤ deg in v variables.
        assert_eq!(PolyBasis::new(1, 3).n_terms(), 4);
        assert_eq!(PolyBasis::new(3, 3).n_terms(), 20);
        assert_eq!(PolyBasis::new(2, 0).n_terms(), 1);
    }

    #[test]
    fn cubic_target_is_reproduced_exactly() {
        let n = 200;
        let pts = gaussian_points(n, 1, 1);
        let target: Vec<f64> = pts.iter().map(|&x| 2.0 - x + 0.5 * x * x * x).collect();
        let basis = PolyBasis::new(1, 3);
        let plan = RegressionPlan::build(&basis, &pts, n, 0).unwrap();
        let fitted = plan.fitted(&target);
        for i in 0..n {
            assert!((fitted[i] - target[i]).abs() < 1e-10);
        }
        assert!(plan.condition() < 1e4);
    }

    #[test]
    fn projection_reproduces_constants() {
        let n = 64;
        let pts = gaussian_points(n, 2, 2);
        let basis = PolyBasis::new(2, 3);
        let plan = RegressionPlan::build(&basis, &pts, n, 0).unwrap();
        let fitted = plan.fitted(&vec![7.5; n]);
        for value in fitted {
            assert!((value - 7.5).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_points_fall_back_to_mean() {
        let n = 50;
        let pts = vec![1.25; n];
        let basis = PolyBasis::new(1, 3);
        let plan = RegressionPlan::build(&basis, &pts, n, 3).unwrap();
        assert!(plan.is_mean());
        let target: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let fitted = plan.fitted(&target);
        let m = stats::mean(&target);
        for value in &fitted {
            assert_eq!(*value, m);
        }
    }

    #[test]
    fn rank_deficient_design_errors_with_step() {
        // Two distinct point values cannot support a quadratic basis.
        let mut pts = vec![0.0; 40];
        for i in 0..40 {
            pts[i] = if i % 2 == 0 { -1.0 } else { 2.0 };
        }
        let basis = PolyBasis::new(1, 2);
        match RegressionPlan::build(&basis, &pts, 40, 7) {
            Err(Error::Solver { step: 7, .. }) => {}
            other => panic!("expected solver error at step 7, got {other:?}"),
        }
    }

    #[test]
    fn fitted_values_are_deterministic() {
        let n = 300;
        let pts = gaussian_points(n, 2, 5);
        let target = gaussian_points(n, 1, 6);
        let basis = PolyBasis::new(2, 3);
        let a = RegressionPlan::build(&basis, &pts, n, 0).unwrap().fitted(&target);
        let b = RegressionPlan::build(&basis, &pts, n, 0).unwrap().fitted(&target);
        assert_eq!(a, b);
    }

    #[test]
    fn projection_shrinks_residual_monotonically_in_degree() {
        let n = 500;
        let pts = gaussian_points(n, 1, 9);
        let target: Vec<f64> = pts.iter().map(|&x| (1.5 * x).sin()).collect();
        let mut last = f64::INFINITY;
        for degree in 0..4 {
            let basis = PolyBasis::new(1, degree);
            let plan = RegressionPlan::build(&basis, &pts, n, 0).unwrap();
            let fitted = plan.fitted(&target);
            let rss: f64 = fitted
                .iter()
                .zip(&target)
                .map(|(f, t)| (f - t) * (f - t))
                .sum();
            assert!(rss <= last + 1e-12, "degree {degree}: rss {rss} > {last}");
            last = rss;
        }
    }
}
