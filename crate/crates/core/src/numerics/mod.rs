//! Numerical building blocks shared by every simulation module.

pub mod matrix;
pub mod rng;
pub mod special;
pub mod sum;

pub use matrix::{cholesky_psd, gauss_matrix, DenseMatrix};
pub use rng::RngStream;
pub use special::{erfi, erfi_inv, kolmogorov_q, ks_asymptotic_pvalue, ERFI_MAX_ARG};
pub use sum::{compensated_sum, NeumaierSum};

/// Plain left-to-right dot product.
///
/// Every norm in the simulation goes through this so that single-input and
/// multi-input code paths produce bit-identical results.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Runs `f` once per sample index on its own sub-stream
/// `stream / (label, i)`, in parallel, and returns the results in index order.
///
/// Results depend only on the stream addresses, never on the thread count.
pub fn par_samples<T, F>(stream: &RngStream, label: &str, n_samples: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &RngStream) -> crate::Result<T> + Sync,
{
    use rayon::prelude::*;
    (0..n_samples)
        .into_par_iter()
        .map(|i| f(i, &stream.child(label, i as u64)))
        .collect()
}
