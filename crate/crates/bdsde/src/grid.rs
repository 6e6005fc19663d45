//! Uniform time grids and terminal-condition partitions.
//!
//! All schemes in the crate run on a uniform grid over `[0, t]` with the
//! terminal condition at paper time 0 and the evaluation point at paper time
//! `t`. Internally arrays are indexed on the reversed clock `τ = t − s`
//! (node 0 = start point, node `n_steps` = where the terminal data applies);
//! the conversion is a single index flip and lives here so no other module
//! has to reason about it twice.

use crate::error::{Error, Result};

/// Relative slack when matching a user-supplied time to a grid node.
const ALIGN_TOL: f64 = 1e-9;

/// A uniform grid on `[0, horizon]` with `n_steps` steps of size `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    delta: f64,
}

impl TimeGrid {
    /// Builds a grid, rejecting non-positive horizons and empty grids.
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::validation(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::validation("grid needs at least one step"));
        }
        Ok(TimeGrid {
            horizon,
            n_steps,
            delta: horizon / n_steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Paper time of paper node `j` (0 = terminal side, `n_steps` = start).
    pub fn paper_time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            // Avoid n·(t/n) ≠ t round-off at the endpoint.
            self.horizon
        } else {
            j as f64 * self.delta
        }
    }

    /// Paper time of reversed-clock node `k` (τ = k·delta, s = t − τ).
    pub fn time_of_tau(&self, k: usize) -> f64 {
        self.paper_time(self.n_steps - k)
    }

    /// Reversed-clock node holding paper node `j`.
    pub fn tau_node(&self, j: usize) -> usize {
        self.n_steps - j
    }

    /// Paper node held at reversed-clock node `k`.
    pub fn paper_node(&self, k: usize) -> usize {
        self.n_steps - k
    }

    /// All node times in paper order, `[0, delta, …, horizon]`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.paper_time(j)).collect()
    }

    /// Paper node index of an arbitrary time, which must sit on the grid
    /// within a small relative tolerance.
    pub fn node_of_time(&self, s: f64) -> Result<usize> {
        if !(0.0..=self.horizon * (1.0 + ALIGN_TOL)).contains(&s) {
            return Err(Error::validation(format!(
                "time {s} outside [0, {}]",
                self.horizon
            )));
        }
        let j = (s / self.delta).round() as usize;
        let j = j.min(self.n_steps);
        if (s - self.paper_time(j)).abs() > ALIGN_TOL * self.horizon.max(1.0) {
            return Err(Error::validation(format!(
                "time {s} does not sit on the grid (delta = {})",
                self.delta
            )));
        }
        Ok(j)
    }
}

/// Fixed times `0 = t_0 < t_1 < … < t_m = horizon` at which a multi-point
/// terminal condition looks at the forward path. Every time must sit on the
/// grid; the partition stores both the times and their paper node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    grid_indices: Vec<usize>,
}

impl Partition {
    /// Validates and builds a partition over the given grid.
    pub fn new(grid: &TimeGrid, times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::validation(
                "partition needs at least the two endpoints",
            ));
        }
        let tol = ALIGN_TOL * grid.horizon().max(1.0);
        if times[0].abs() > tol {
            return Err(Error::validation("partition must start at 0"));
        }
        if (times[times.len() - 1] - grid.horizon()).abs() > tol {
            return Err(Error::validation(format!(
                "partition must end at the horizon {}",
                grid.horizon()
            )));
        }
        let mut grid_indices = Vec::with_capacity(times.len());
        for pair in times.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::validation(
                    "partition times must be strictly increasing",
                ));
            }
        }
        for &s in times {
            grid_indices.push(grid.node_of_time(s)?);
        }
        Ok(Partition {
            times: times.to_vec(),
            grid_indices,
        })
    }

    /// The one-interval partition `{0, horizon}` every single-point terminal
    /// implicitly uses.
    pub fn trivial(grid: &TimeGrid) -> Self {
        Partition {
            times: vec![0.0, grid.horizon()],
            grid_indices: vec![0, grid.n_steps()],
        }
    }

    /// Number of intervals `m`.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of partition points `m + 1`.
    pub fn n_points(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Paper grid node of partition point `i`.
    pub fn grid_index(&self, i: usize) -> usize {
        self.grid_indices[i]
    }

    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_indices
    }

    /// Interior partition points (everything except the two endpoints), as
    /// partition indices `1..m`.
    pub fn interior_points(&self) -> impl Iterator<Item = usize> + '_ {
        1..self.times.len() - 1
    }

    /// Whether paper node `j` is one of the partition nodes.
    pub fn is_partition_node(&self, j: usize) -> bool {
        self.grid_indices.contains(&j)
    }

    /// Index `i` of the open interval `(t_{i−1}, t_i)` strictly containing
    /// paper node `j`; landing exactly on a partition node is an error (the
    /// quantities indexed by intervals have one-sided limits there, the
    /// caller must pick a side explicitly).
    pub fn interval_of(&self, j: usize) -> Result<usize> {
        if self.is_partition_node(j) {
            return Err(Error::validation(format!(
                "paper node {j} is a partition node; evaluate strictly inside an interval"
            )));
        }
        for i in 1..self.grid_indices.len() {
            if j < self.grid_indices[i] {
                return Ok(i);
            }
        }
        Err(Error::validation(format!(
            "paper node {j} beyond the final partition point"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quarter_grid_nodes() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.delta(), 0.25);
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn clock_flip_roundtrip() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        for j in 0..=8 {
            assert_eq!(g.paper_node(g.tau_node(j)), j);
            assert_relative_eq!(g.time_of_tau(g.tau_node(j)), g.paper_time(j));
        }
        // Endpoint times are exact, not n·delta round-off.
        assert_eq!(g.paper_time(8), 2.0);
        assert_eq!(g.time_of_tau(0), 2.0);
        assert_eq!(g.time_of_tau(8), 0.0);
    }

    #[test]
    fn node_lookup_respects_alignment() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(g.node_of_time(0.3).unwrap(), 3);
        assert_eq!(g.node_of_time(1.0).unwrap(), 10);
        assert!(g.node_of_time(0.31).is_err());
        assert!(g.node_of_time(-0.1).is_err());
        assert!(g.node_of_time(1.2).is_err());
    }

    #[test]
    fn partition_validation() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = Partition::new(&g, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(p.n_intervals(), 2);
        assert_eq!(p.grid_indices(), &[0, 5, 10]);
        assert_eq!(p.interior_points().collect::<Vec<_>>(), vec![1]);

        assert!(Partition::new(&g, &[0.0, 1.0, 0.5]).is_err()); // not sorted
        assert!(Partition::new(&g, &[0.1, 1.0]).is_err()); // missing 0
        assert!(Partition::new(&g, &[0.0, 0.9]).is_err()); // missing horizon
        assert!(Partition::new(&g, &[0.0, 0.33, 1.0]).is_err()); // off-grid
    }

    #[test]
    fn interval_lookup() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = Partition::new(&g, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(p.interval_of(3).unwrap(), 1);
        assert_eq!(p.interval_of(7).unwrap(), 2);
        assert!(p.interval_of(5).is_err()); // exactly on the interior node
        assert!(p.interval_of(0).is_err());
        assert!(p.interval_of(10).is_err());

        let trivial = Partition::trivial(&g);
        assert_eq!(trivial.interval_of(3).unwrap(), 1);
        assert!(trivial.interior_points().next().is_none());
    }

    proptest! {
        // Node times reconstruct the horizon and spacing for arbitrary grids.
        #[test]
        fn grid_reconstruction(horizon in 1e-3_f64..1e3, n in 1usize..800) {
            let g = TimeGrid::new(horizon, n).unwrap();
            let nodes = g.nodes();
            prop_assert_eq!(nodes.len(), n + 1);
            prop_assert_eq!(nodes[0], 0.0);
            prop_assert_eq!(nodes[n], horizon);
            for (j, pair) in nodes.windows(2).enumerate() {
                let gap = pair[1] - pair[0];
                prop_assert!((gap - g.delta()).abs() < 1e-9 * horizon.max(1.0),
                    "gap {} at {} vs delta {}", gap, j, g.delta());
            }
        }

        // Every node time maps back to its own index.
        #[test]
        fn node_of_time_inverts(n in 1usize..500, j_frac in 0.0_f64..1.0) {
            let g = TimeGrid::new(1.0, n).unwrap();
            let j = ((n as f64) * j_frac) as usize;
            prop_assert_eq!(g.node_of_time(g.paper_time(j)).unwrap(), j);
        }
    }
}
