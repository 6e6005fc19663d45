//! Small dense linear algebra on flat `&[f64]` buffers.
//!
//! The forward simulator touches a d×d matrix or two at every node of every
//! path, with d almost always 1–3. Going through a general matrix type there
//! would dominate the runtime with allocations, so the hot kernels work on
//! caller-provided row-major slices instead. Anything that is not on the hot
//! path (regression, eigenvalue work, reports) uses `nalgebra` directly.
//!
//! Everything here is row-major: entry `(i, j)` of a d×d matrix lives at
//! `m[i * d + j]`.

use crate::error::{Error, Result};

/// `out = a * b` for row-major d×d matrices. `out` must not alias `a` or `b`.
pub fn mat_mul(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert!(a.len() == d * d && b.len() == d * d && out.len() == d * d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = acc;
        }
    }
}

/// `out = a * v` for a row-major d×d matrix and a length-d vector.
pub fn mat_vec(d: usize, a: &[f64], v: &[f64], out: &mut [f64]) {
    debug_assert!(a.len() == d * d && v.len() == d && out.len() == d);
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += a[i * d + k] * v[k];
        }
        out[i] = acc;
    }
}

/// `out = vᵀ * a` — multiplies a row vector from the left.
pub fn vec_mat(d: usize, v: &[f64], a: &[f64], out: &mut [f64]) {
    debug_assert!(a.len() == d * d && v.len() == d && out.len() == d);
    for j in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += v[k] * a[k * d + j];
        }
        out[j] = acc;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Writes the d×d identity into `out`.
pub fn identity(d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

/// Inverts a row-major d×d matrix by Gauss–Jordan elimination with partial
/// pivoting, writing into `out`. Uses a stack copy for d ≤ 4 and errors when
/// a pivot falls below `tiny` (matrix numerically singular).
pub fn invert(d: usize, a: &[f64], out: &mut [f64]) -> Result<()> {
    debug_assert!(a.len() == d * d && out.len() == d * d);
    const TINY: f64 = 1e-13;
    // Work buffer [A | I]; d ≤ 4 covers every model in the crate, larger d
    // falls back to a heap buffer.
    let mut stack = [0.0_f64; 32];
    let mut heap;
    let work: &mut [f64] = if 2 * d * d <= stack.len() {
        &mut stack[..2 * d * d]
    } else {
        heap = vec![0.0; 2 * d * d];
        &mut heap
    };
    let w = 2 * d; // row width of the augmented matrix
    for i in 0..d {
        for j in 0..d {
            work[i * w + j] = a[i * d + j];
            work[i * w + d + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for col in 0..d {
        // Partial pivot.
        let mut pivot_row = col;
        let mut pivot_abs = work[col * w + col].abs();
        for r in (col + 1)..d {
            let v = work[r * w + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs < TINY {
            return Err(Error::validation(format!(
                "singular matrix: pivot {pivot_abs:.3e} below {TINY:.0e} at column {col}"
            )));
        }
        if pivot_row != col {
            for j in 0..w {
                work.swap(col * w + j, pivot_row * w + j);
            }
        }
        let inv_pivot = 1.0 / work[col * w + col];
        for j in 0..w {
            work[col * w + j] *= inv_pivot;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = work[r * w + col];
            if factor != 0.0 {
                for j in 0..w {
                    work[r * w + j] -= factor * work[col * w + j];
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = work[i * w + d + j];
        }
    }
    Ok(())
}

/// 1-norm (maximum absolute column sum) of a row-major d×d matrix.
pub fn norm_1(d: usize, a: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..d {
        let mut col = 0.0;
        for i in 0..d {
            col += a[i * d + j].abs();
        }
        best = best.max(col);
    }
    best
}

/// 1-norm condition number κ₁(A) = ‖A‖₁·‖A⁻¹‖₁ given both matrices.
pub fn condition_1(d: usize, a: &[f64], a_inv: &[f64]) -> f64 {
    norm_1(d, a) * norm_1(d, a_inv)
}

/// Smallest eigenvalue of the symmetric matrix `a·aᵀ` — the sampled
/// ellipticity of a diffusion matrix. Report-level only, so `nalgebra` is
/// fine here.
pub fn min_eig_sym_aat(d: usize, a: &[f64]) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let aat = &m * m.transpose();
    let eig = aat.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest singular value of a row-major d×d matrix.
pub fn min_singular_value(d: usize, a: &[f64]) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    m.svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
