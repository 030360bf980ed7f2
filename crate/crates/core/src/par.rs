//! Deterministic data-parallel helpers.
//!
//! The expensive loops in this crate (scene generation, per-region detection,
//! full-batch objectives, fooling-rate counts) are data-parallel over
//! independent items. These helpers run them via rayon when the `parallel`
//! feature is enabled and sequentially otherwise, with one hard guarantee:
//! **output is a pure function of the input, not of the thread count**.
//! Maps collect in input order, and reductions sum fixed-size blocks in block
//! order, so floating-point results are bit-identical across feature flags
//! and pool sizes.
//!
//! Each helper has an always-sequential `*_seq` twin; the benchmark suite
//! compares the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items each reduction block covers. Fixed (rather than derived
/// from the thread count) so that partial sums are combined identically no
/// matter how the blocks were scheduled.
pub const BLOCK: usize = 32;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn ordered_map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`ordered_map_indices`].
pub fn ordered_map_indices_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, collecting results in input order.
pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`ordered_map`].
pub fn ordered_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sums a scalar and a vector contribution per item.
///
/// `f(item, grad_out)` adds the item's vector contribution into `grad_out`
/// (length `dim`) and returns its scalar contribution. Items are grouped into
/// [`BLOCK`]-sized blocks; each block accumulates sequentially, blocks may run
/// in parallel, and block partials are folded in block order.
pub fn block_objective<T, F>(items: &[T], dim: usize, f: F) -> (f64, Vec<f64>)
where
    T: Sync,
    F: Fn(&T, &mut [f64]) -> f64 + Sync + Send,
{
    let run_block = |chunk: &[T]| -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; dim];
        let mut value = 0.0;
        for item in chunk {
            value += f(item, &mut grad);
        }
        (value, grad)
    };

    #[cfg(feature = "parallel")]
    let partials: Vec<(f64, Vec<f64>)> = items.par_chunks(BLOCK).map(run_block).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<(f64, Vec<f64>)> = items.chunks(BLOCK).map(run_block).collect();

    fold_partials(dim, partials)
}

/// Sequential twin of [`block_objective`]; same blocking, same fold order.
pub fn block_objective_seq<T, F>(items: &[T], dim: usize, f: F) -> (f64, Vec<f64>)
where
    F: Fn(&T, &mut [f64]) -> f64,
{
    let partials: Vec<(f64, Vec<f64>)> = items
        .chunks(BLOCK)
        .map(|chunk| {
            let mut grad = vec![0.0; dim];
            let mut value = 0.0;
            for item in chunk {
                value += f(item, &mut grad);
            }
            (value, grad)
        })
        .collect();
    fold_partials(dim, partials)
}

fn fold_partials(dim: usize, partials: Vec<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; dim];
    for (value, part) in partials {
        total += value;
        for (g, p) in grad.iter_mut().zip(&part) {
            *g += p;
        }
    }
    (total, grad)
}
