use ndarray::parallel::prelude::*;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::scalar::Scalar;

/// Rows per parallel work unit. Fixed so results are bit-identical for any
/// worker count: each chunk is an independent sequential matmul.
const CHUNK_ROWS: usize = 128;

/// `a · b` with deterministic parallelism over fixed row chunks.
pub fn matmul<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>) -> Array2<F> {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = Array2::zeros((m, n));
    if m <= CHUNK_ROWS {
        out.assign(&a.dot(&b));
        return out;
    }
    out.axis_chunks_iter_mut(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .enumerate()
        .for_each(|(ci, mut chunk)| {
            let lo = ci * CHUNK_ROWS;
            let hi = lo + chunk.nrows();
            chunk.assign(&a.slice(s![lo..hi, ..]).dot(&b));
        });
    out
}
