//! Row-parallel iteration helper. Rows are independent subproblems
//! throughout the crate, so each closure writes a disjoint chunk and the
//! result is identical for any worker count (or with the `parallel`
//! feature disabled entirely, as in the wasm build).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn for_each_row_mut<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    data.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row_mut<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    for (i, row) in data.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}
