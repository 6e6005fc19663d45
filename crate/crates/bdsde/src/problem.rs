//! A fully specified numerical problem: coefficients, evaluation point,
//! grid, ensemble sizes, and scheme knobs.

use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{Partition, TimeGrid};
use crate::noise::NoiseMode;

/// Everything a pipeline needs to run one experiment. The value of interest
/// is `u(t, x)` with `t = grid.horizon()` and `x = start_x`; the terminal
/// condition applies at paper time 0.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub coefficients: Arc<CoefficientSet>,
    /// Spatial evaluation point `x`.
    pub start_x: Vec<f64>,
    pub grid: TimeGrid,
    /// Times at which a multi-point terminal looks at the path. `None` means
    /// the terminal depends on the endpoint state only.
    pub partition: Option<Partition>,
    /// Paths per inner (W) ensemble.
    pub n_inner: usize,
    /// Number of frozen B-paths available.
    pub n_outer: usize,
    pub seed: u64,
    /// Total degree of the polynomial regression basis.
    pub regression_degree: usize,
    pub noise_mode: NoiseMode,
    /// Gaussian smoothing radius applied to the driver and terminal before
    /// gradient pipelines run; `None` leaves the coefficients untouched.
    pub mollify_eps: Option<f64>,
    /// Quadrature nodes per axis for mollification.
    pub mollify_nodes: usize,
    /// Fixed-point sweeps per backward step (0 = plain explicit scheme).
    pub picard_iterations: usize,
}

impl ProblemSpec {
    /// A spec with desk-scale defaults: 10⁴ inner paths, one outer path,
    /// seed 42, cubic regression, Gaussian noise, no mollification.
    pub fn new(
        coefficients: Arc<CoefficientSet>,
        start_x: Vec<f64>,
        horizon: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            coefficients,
            start_x,
            grid: TimeGrid::new(horizon, n_steps)?,
            partition: None,
            n_inner: 10_000,
            n_outer: 1,
            seed: 42,
            regression_degree: 3,
            noise_mode: NoiseMode::Gaussian,
            mollify_eps: None,
            mollify_nodes: 64,
            picard_iterations: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.coefficients.dim
    }

    /// The evaluation time `t` — by construction equal to the grid horizon,
    /// so the invariant "grid covers exactly [0, t]" cannot drift.
    pub fn start_time(&self) -> f64 {
        self.grid.horizon()
    }

    /// The partition in effect: the declared one, or the trivial `{0, t}`.
    pub fn partition_or_trivial(&self) -> Partition {
        self.partition
            .clone()
            .unwrap_or_else(|| Partition::trivial(&self.grid))
    }

    /// Checks the cross-field invariants and runs the coefficient probe
    /// battery.
    pub fn validate(&self) -> Result<()> {
        if self.start_x.len() != self.coefficients.dim {
            return Err(Error::validation(format!(
                "start point has dimension {}, coefficients have {}",
                self.start_x.len(),
                self.coefficients.dim
            )));
        }
        if self.n_inner < 2 {
            return Err(Error::validation(format!(
                "need at least 2 inner paths, got {}",
                self.n_inner
            )));
        }
        if self.n_outer == 0 {
            return Err(Error::validation("need at least one outer path"));
        }
        if let Some(p) = &self.partition {
            // Re-anchor the times on this grid: catches partitions built for
            // a different grid.
            Partition::new(&self.grid, p.times()).map_err(|e| {
                Error::validation(format!("partition does not fit the grid: {e}"))
            })?;
        }
        if self.coefficients.terminal.is_multi() && self.partition.is_none() {
            return Err(Error::validation(
                "multi-point terminal needs a partition to name its arguments",
            ));
        }
        if let Some(eps) = self.mollify_eps {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::validation(format!(
                    "mollification radius must be positive, got {eps}"
                )));
            }
            if self.mollify_nodes < 2 {
                return Err(Error::validation(
                    "mollification needs at least 2 quadrature nodes",
                ));
            }
        }
        let arity = self.partition.as_ref().map(|p| p.n_points());
        self.coefficients
            .validate_probes(self.grid.horizon(), arity)?;
        Ok(())
    }

    /// The coefficients the pipelines should actually run with: mollified
    /// when a smoothing radius is set, untouched otherwise.
    pub fn effective_coefficients(&self) -> Result<Arc<CoefficientSet>> {
        match self.mollify_eps {
            None => Ok(self.coefficients.clone()),
            Some(eps) => Ok(Arc::new(crate::mollify::mollify(
                &self.coefficients,
                eps,
                self.mollify_nodes,
            )?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{unit_case, TerminalSpec};

    fn base_spec() -> ProblemSpec {
        ProblemSpec::new(Arc::new(unit_case(1, TerminalSpec::Square)), vec![0.0], 1.0, 10).unwrap()
    }

    #[test]
    fn defaults_validate() {
        let spec = base_spec();
        assert_eq!(spec.dim(), 1);
        assert_eq!(spec.start_time(), 1.0);
        assert_eq!(spec.partition_or_trivial().n_intervals(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut spec = base_spec();
        spec.start_x = vec![0.0, 1.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn tiny_ensembles_rejected() {
        let mut spec = base_spec();
        spec.n_inner = 1;
        assert!(spec.validate().is_err());
        let mut spec = base_spec();
        spec.n_outer = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn multi_terminal_needs_partition() {
        let mut spec = base_spec();
        spec.coefficients = Arc::new(unit_case(1, TerminalSpec::Product01));
        assert!(spec.validate().is_err());
        spec.partition = Some(Partition::new(&spec.grid, &[0.0, 0.5, 1.0]).unwrap());
        spec.validate().unwrap();
    }

    #[test]
    fn foreign_partition_rejected() {
        let mut spec = base_spec();
        let other_grid = TimeGrid::new(1.0, 7).unwrap();
        // 1/7 nodes do not sit on the 1/10 grid.
        let p = Partition::new(&other_grid, &[0.0, 1.0 / 7.0, 1.0]).unwrap();
        spec.partition = Some(p);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn bad_mollify_radius_rejected() {
        let mut spec = base_spec();
        spec.mollify_eps = Some(0.0);
        assert!(spec.validate().is_err());
        spec.mollify_eps = Some(-1.0);
        assert!(spec.validate().is_err());
        spec.mollify_eps = Some(0.1);
        spec.mollify_nodes = 1;
        assert!(spec.validate().is_err());
    }
}
