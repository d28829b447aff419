//! Dense symmetric solvers used by the least-squares estimator.
//!
//! The Gram matrices here are small (at most a few thousand rows) but are
//! factored once and reused across hundreds of right-hand-side batches, so
//! the factorization keeps explicit control over pivot tolerances instead
//! of delegating to a generic library routine: a pivot collapsing below
//! `rel_tol * mean(diagonal)` must switch the caller to the rank-aware
//! fallback rather than silently produce garbage.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::Result;

/// Cholesky factor `L` (lower triangular, `L Lᵀ = G`) computed with a
/// relative pivot threshold. Returns `None` when any pivot drops to or
/// below `rel_tol * trace(G)/n`, which covers indefinite, rank-deficient,
/// and all-zero matrices alike.
pub fn cholesky_lower(gram: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let n = gram.nrows();
    debug_assert_eq!(n, gram.ncols());
    let tol = rel_tol * gram.diagonal().sum() / n as f64;
    let mut l = gram.lower_triangle();
    for j in 0..n {
        // Left-looking update: subtract the contribution of every previous
        // column from column j, working on contiguous column tails.
        for k in 0..j {
            let factor = l[(j, k)];
            if factor == 0.0 {
                continue;
            }
            let col_k = l.column(k).rows(j, n - j).clone_owned();
            let mut col_j = l.column_mut(j);
            let mut tail = col_j.rows_mut(j, n - j);
            tail.axpy(-factor, &col_k, 1.0);
        }
        let pivot = l[(j, j)];
        if pivot <= tol || !pivot.is_finite() {
            return None;
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        let inv = 1.0 / root;
        let mut col_j = l.column_mut(j);
        let mut tail = col_j.rows_mut(j + 1, n - j - 1);
        tail *= inv;
        // Zero the strictly-upper part copied from the symmetric input.
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Some(l)
}

/// Solves `L z = r` for every column of a batch, given the factor from
/// [`cholesky_lower`]. The batch is held transposed (`t` is `batch x n`
/// with row `c` holding right-hand side `c`), which keeps the inner
/// updates on contiguous columns; on exit row `c` of `t` holds `z_c`.
///
/// Off-diagonal block updates go through `gemm`, so large systems run at
/// matrix-multiply speed instead of scalar substitution speed.
pub fn solve_lower_transposed(l: &DMatrix<f64>, t: &mut DMatrix<f64>) {
    const BLOCK: usize = 64;
    let n = l.nrows();
    debug_assert_eq!(t.ncols(), n);
    let batch = t.nrows();
    let mut start = 0;
    while start < n {
        let width = BLOCK.min(n - start);
        // t[:, start..] -= t[:, done] * Lᵀ[done, start..]  (done = 0..start)
        if start > 0 {
            let lt_block = l
                .view((start, 0), (width, start))
                .transpose();
            let prev = t.columns(0, start).clone_owned();
            let mut cur = t.columns_mut(start, width);
            cur.gemm(-1.0, &prev, &lt_block, 1.0);
        }
        // In-block substitution on contiguous columns.
        for j in start..start + width {
            let inv = 1.0 / l[(j, j)];
            {
                let mut col_j = t.column_mut(j);
                col_j *= inv;
            }
            for i in j + 1..start + width {
                let factor = l[(i, j)];
                if factor == 0.0 {
                    continue;
                }
                let col_j = t.column(j).clone_owned();
                let mut col_i = t.column_mut(i);
                col_i.axpy(-factor, &col_j, 1.0);
            }
        }
        start += width;
        let _ = batch;
    }
}

/// Spectral pseudo-inverse pieces of a symmetric positive semidefinite
/// matrix: eigenvectors above the relative cutoff (stored transposed) and
/// the reciprocals of their eigenvalues. Used as the rank-aware fallback
/// when [`cholesky_lower`] rejects a Gram matrix.
pub struct SymmetricPseudo {
    /// Kept eigenvectors, one per row (`rank x n`).
    pub vecs_t: DMatrix<f64>,
    /// Reciprocal eigenvalues matching `vecs_t` rows.
    pub inv_vals: Vec<f64>,
}

impl SymmetricPseudo {
    /// Eigendecomposes `gram`, keeping eigenvalues above
    /// `rel_tol * trace/n` (with an absolute floor for the all-zero case,
    /// where the result is an empty basis and the pseudo-inverse is zero).
    pub fn new(gram: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let n = gram.nrows();
        let eig = nalgebra::SymmetricEigen::try_new(gram.clone(), f64::EPSILON, 100_000)
            .ok_or_else(|| {
                Error::Numerical("symmetric eigendecomposition did not converge".into())
            })?;
        let scale = gram.diagonal().sum() / n as f64;
        let cutoff = if scale > 0.0 { rel_tol * scale } else { f64::MIN_POSITIVE };
        let kept: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > cutoff)
            .collect();
        let mut vecs_t = DMatrix::zeros(kept.len(), n);
        let mut inv_vals = Vec::with_capacity(kept.len());
        for (row, &i) in kept.iter().enumerate() {
            vecs_t.row_mut(row).copy_from(&eig.eigenvectors.column(i).transpose());
            inv_vals.push(1.0 / eig.eigenvalues[i]);
        }
        Ok(Self { vecs_t, inv_vals })
    }
}
