//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! plain iterator chains. Results are always collected in index order.

/// Whether the crate was built with rayon support.
#[inline]
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    data.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    data.iter().map(f).collect()
}

/// Apply `f` to consecutive rows of `data` (each `row_len` long).
#[cfg(feature = "parallel")]
pub fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(row_len.max(1))
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    data.chunks_mut(row_len.max(1))
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Run `f` on a pool of `threads` workers. `0` means the default pool.
///
/// Without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}), using the global one");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F>(_threads: usize, f: F) -> R
where
    F: FnOnce() -> R,
{
    f()
}
