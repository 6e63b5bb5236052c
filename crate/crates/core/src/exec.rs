//! Row- and component-level data parallelism.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures sequentially. Every output slot is written by exactly
//! one closure call, so results are bitwise identical in both modes and for any
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runtime switch on top of the compile-time feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExecMode {
    Serial,
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn from_flag(parallel: bool) -> Self {
        if parallel {
            ExecMode::Parallel
        } else {
            ExecMode::Serial
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Rows shorter than this are never split across threads.
#[cfg(feature = "parallel")]
const MIN_PAR_ROWS: usize = 64;

/// `out[i] = f(i)` for every row.
pub fn fill_rows<F>(mode: ExecMode, out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && out.len() >= MIN_PAR_ROWS {
        out.par_iter_mut()
            .with_min_len(MIN_PAR_ROWS / 2)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
        return;
    }
    let _ = mode;
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Collects `f(i)` for `i in 0..n`, preserving order.
pub fn map_indices<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && n > 1 {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Like [`map_indices`] but each worker gets its own scratch state from `init`.
pub fn map_indices_init<T, S, I, F>(mode: ExecMode, n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && n >= MIN_PAR_ROWS {
        return (0..n)
            .into_par_iter()
            .map_init(&init, |s, i| f(s, i))
            .collect();
    }
    let _ = mode;
    let mut scratch = init();
    (0..n).map(|i| f(&mut scratch, i)).collect()
}

/// Applies `f` to each element mutably, possibly in parallel.
pub fn for_each_mut<T, F>(mode: ExecMode, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && items.len() > 1 {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    let _ = mode;
    for (i, t) in items.iter_mut().enumerate() {
        f(i, t);
    }
}
