//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan out over rayon; without
//! it every call runs in order on the calling thread. Results always come
//! back in input order, so callers see identical output either way.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// `items.iter().map(f)`, fanned out when `exec` is `Parallel`.
pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f(0)..f(n)` on a dedicated pool of `threads` workers.
///
/// `threads <= 1` runs sequentially.
pub fn run_indexed<R, F>(n: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threads > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = threads;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let seq = map(&v, Execution::Sequential, |x| x * x);
        let par = map(&v, Execution::Parallel, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }

    #[test]
    fn run_indexed_preserves_order() {
        assert_eq!(run_indexed(5, 3, |i| i * 10), vec![0, 10, 20, 30, 40]);
        assert_eq!(run_indexed(5, 1, |i| i * 10), vec![0, 10, 20, 30, 40]);
        assert!(run_indexed(0, 4, |i| i).is_empty());
    }
}
