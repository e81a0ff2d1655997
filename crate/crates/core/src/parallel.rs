//! Thin switch between rayon and sequential iteration.
//!
//! Every helper returns results in input order, so reductions performed by
//! callers over the returned `Vec` are deterministic regardless of the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Fills `out[i] = f(i)`.
#[cfg(feature = "parallel")]
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    // Row-wise work is too small to pay for task spawning on small meshes.
    if out.len() < 4096 {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    } else {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
}

#[cfg(not(feature = "parallel"))]
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// Number of worker threads that `map` will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
