//! Keyed, counter-based sampling of the two driving noises.
//!
//! Each run draws two independent families of Brownian increments: `W` (the
//! ordinary, forward-integrated noise, one fresh path per inner sample) and
//! `B` (the backward-integrated noise, frozen across the whole inner
//! ensemble — conditioning on `B` is what turns the backward solution into a
//! pointwise value `u(t, x)`).
//!
//! Sampling is counter-based rather than sequential: the generator for a path
//! is keyed by `(seed, outer_id, inner_id, stream tag)`, so any path can be
//! regenerated in isolation, results do not depend on the order paths are
//! asked for, and thread scheduling cannot leak into the numbers. `B` is
//! keyed without the inner id, which makes "same outer ⇒ bitwise-identical
//! B-path" true by construction.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::ProblemSpec;
use crate::stats::pairwise_sum;

/// Distribution of the per-step increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Increments `~ N(0, delta)`.
    Gaussian,
    /// Sign flips `±sqrt(delta)` — same first two moments, finitely many
    /// outcomes, which is what makes exact enumeration (and the tree oracle)
    /// possible.
    Rademacher,
}

/// One realization of both driving noises on a grid.
///
/// Increments are stored on the reversed clock: `w_increments[k*dim + c]` is
/// component `c` of the `W`-increment consumed by the Euler step from
/// reversed node `k` to `k + 1`. On the paper clock that is exactly the
/// forward increment over `[t_{n−1−k}, t_{n−k}]`, so reversed step `k` and
/// paper interval `n − 1 − k` name the same random variable. `b_increments`
/// is laid out identically.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dim: usize,
    pub n_steps: usize,
    pub delta: f64,
    pub w_increments: Vec<f64>,
    pub b_increments: Vec<f64>,
}

impl NoisePath {
    /// `W`-increment consumed by reversed step `k`.
    pub fn w_at(&self, k: usize) -> &[f64] {
        &self.w_increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `B`-increment consumed by reversed step `k`.
    pub fn b_at(&self, k: usize) -> &[f64] {
        &self.b_increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `B`-increment over the paper interval `[t_j, t_{j+1}]`.
    pub fn b_paper(&self, j: usize) -> &[f64] {
        self.b_at(self.n_steps - 1 - j)
    }

    /// Running sums of the `W`-increments: `(n_steps + 1) × dim`, first row
    /// zero.
    pub fn w_cumulative(&self) -> Vec<f64> {
        cumulative(self.dim, self.n_steps, &self.w_increments)
    }

    /// Running sums of the `B`-increments.
    pub fn b_cumulative(&self) -> Vec<f64> {
        cumulative(self.dim, self.n_steps, &self.b_increments)
    }

    /// Sum of all `W`-increments per component.
    pub fn w_total(&self) -> Vec<f64> {
        component_totals(self.dim, self.n_steps, &self.w_increments)
    }

    /// Sum of all `B`-increments per component.
    pub fn b_total(&self) -> Vec<f64> {
        component_totals(self.dim, self.n_steps, &self.b_increments)
    }

    /// Aggregates consecutive increment pairs into a path on the grid with
    /// half the steps — the same underlying noise seen at lower resolution.
    /// Requires an even step count.
    pub fn coarsen_by_2(&self) -> Result<NoisePath> {
        if self.n_steps % 2 != 0 {
            return Err(Error::validation(format!(
                "cannot halve a path with {} steps",
                self.n_steps
            )));
        }
        let half = self.n_steps / 2;
        let fold = |inc: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; half * self.dim];
            for k in 0..half {
                for c in 0..self.dim {
                    out[k * self.dim + c] =
                        inc[2 * k * self.dim + c] + inc[(2 * k + 1) * self.dim + c];
                }
            }
            out
        };
        Ok(NoisePath {
            dim: self.dim,
            n_steps: half,
            delta: 2.0 * self.delta,
            w_increments: fold(&self.w_increments),
            b_increments: fold(&self.b_increments),
        })
    }
}

fn cumulative(dim: usize, n_steps: usize, inc: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; (n_steps + 1) * dim];
    for k in 0..n_steps {
        for c in 0..dim {
            out[(k + 1) * dim + c] = out[k * dim + c] + inc[k * dim + c];
        }
    }
    out
}

fn component_totals(dim: usize, n_steps: usize, inc: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let per_step: Vec<f64> = (0..n_steps).map(|k| inc[k * dim + c]).collect();
            pairwise_sum(&per_step)
        })
        .collect()
}

/// splitmix64 finalizer — the standard 64-bit avalanche mix.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 256-bit ChaCha key from a handful of identifying words.
fn derive_key(words: &[u64]) -> [u8; 32] {
    let mut state = 0xA076_1D64_78BD_642F_u64;
    for &w in words {
        state = mix64(state ^ w);
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let w = mix64(state ^ (i as u64).wrapping_mul(0x6C62_272E_07BB_0142));
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    key
}

const STREAM_W: u64 = 0x57; // 'W'
const STREAM_B: u64 = 0x42; // 'B'

fn fill_increments(rng: &mut ChaCha8Rng, mode: NoiseMode, delta: f64, out: &mut [f64]) {
    let sqrt_delta = delta.sqrt();
    match mode {
        NoiseMode::Gaussian => {
            for slot in out.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *slot = sqrt_delta * g;
            }
        }
        NoiseMode::Rademacher => {
            for slot in out.iter_mut() {
                *slot = if rng.next_u64() & 1 == 0 {
                    sqrt_delta
                } else {
                    -sqrt_delta
                };
            }
        }
    }
}

/// Low-level sampler, independent of [`ProblemSpec`]. `outer_id` keys the
/// frozen `B`-path, `(outer_id, inner_id)` keys the `W`-path.
pub fn sample_noise_raw(
    grid: &TimeGrid,
    dim: usize,
    seed: u64,
    mode: NoiseMode,
    outer_id: u64,
    inner_id: u64,
) -> NoisePath {
    let n = grid.n_steps();
    let delta = grid.delta();
    let mut w_increments = vec![0.0; n * dim];
    let mut b_increments = vec![0.0; n * dim];

    let mut rng_b = ChaCha8Rng::from_seed(derive_key(&[seed, outer_id, STREAM_B]));
    fill_increments(&mut rng_b, mode, delta, &mut b_increments);

    let mut rng_w = ChaCha8Rng::from_seed(derive_key(&[seed, outer_id, inner_id, STREAM_W]));
    fill_increments(&mut rng_w, mode, delta, &mut w_increments);

    NoisePath {
        dim,
        n_steps: n,
        delta,
        w_increments,
        b_increments,
    }
}

/// Samples the noise pair for one `(outer, inner)` slot of a problem,
/// rejecting ids outside the declared ensemble sizes.
pub fn sample_noise(spec: &ProblemSpec, outer_id: usize, inner_id: usize) -> Result<NoisePath> {
    if outer_id >= spec.n_outer {
        return Err(Error::validation(format!(
            "outer id {} out of range (n_outer = {})",
            outer_id, spec.n_outer
        )));
    }
    if inner_id >= spec.n_inner {
        return Err(Error::validation(format!(
            "inner id {} out of range (n_inner = {})",
            inner_id, spec.n_inner
        )));
    }
    Ok(sample_noise_raw(
        &spec.grid,
        spec.dim(),
        spec.seed,
        spec.noise_mode,
        outer_id as u64,
        inner_id as u64,
    ))
}

/// Largest `n_steps × dim` for which sign paths are enumerated exactly.
pub const ENUMERATION_CAP_BITS: usize = 16;

/// All `2^(n_steps·dim)` sign-flip `W`-paths sharing one keyed `B`-path.
///
/// Path index bits are consumed most-significant-first, so paths agreeing on
/// the first `k` steps form contiguous blocks of length `2^((n−k)·dim)` —
/// exactly the layout the exact conditional-expectation engine needs for
/// prefix grouping. Bit 0 means the `+sqrt(delta)` move, matching the tree
/// oracle's child ordering.
pub fn enumerate_rademacher_w(
    grid: &TimeGrid,
    dim: usize,
    seed: u64,
    b_mode: NoiseMode,
    outer_id: u64,
) -> Result<Vec<NoisePath>> {
    let bits = grid.n_steps() * dim;
    if bits > ENUMERATION_CAP_BITS {
        return Err(Error::validation(format!(
            "enumeration needs n_steps × dim ≤ {ENUMERATION_CAP_BITS}, got {bits}"
        )));
    }
    let n = grid.n_steps();
    let delta = grid.delta();
    let sqrt_delta = delta.sqrt();

    let mut b_increments = vec![0.0; n * dim];
    let mut rng_b = ChaCha8Rng::from_seed(derive_key(&[seed, outer_id, STREAM_B]));
    fill_increments(&mut rng_b, b_mode, delta, &mut b_increments);

    let count = 1usize << bits;
    let mut paths = Vec::with_capacity(count);
    for p in 0..count {
        let mut w = vec![0.0; n * dim];
        for (slot, w_val) in w.iter_mut().enumerate() {
            let bit = bits - 1 - slot; // earlier steps sit in higher bits
            *w_val = if (p >> bit) & 1 == 0 {
                sqrt_delta
            } else {
                -sqrt_delta
            };
        }
        paths.push(NoisePath {
            dim,
            n_steps: n,
            delta,
            w_increments: w,
            b_increments: b_increments.clone(),
        });
    }
    Ok(paths)
}
