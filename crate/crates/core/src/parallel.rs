//! Data-parallel map with a sequential fallback.
//!
//! Batch workloads (episode grids, sample explosion, index builds over many
//! corpora) are embarrassingly parallel. [`par_map`] runs them on the rayon
//! pool when the `parallel` feature is on and the caller asks for it, and
//! degrades to a plain sequential map otherwise — same results, same order,
//! in either mode.

/// How a batch should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// One item at a time, on the calling thread.
    Sequential,
    /// Rayon work-stealing pool. Compiles to `Sequential` when the
    /// `parallel` feature is off.
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        }
    }
}

/// Caps the shared worker pool at `threads`. First call wins; later calls
/// (or a pool already started by a prior [`par_map`]) return `false`.
/// Without the `parallel` feature there is no pool to configure.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn par_map<T, U, F>(mode: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    match mode {
        Parallelism::Sequential => items.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Parallelism::Rayon => items.into_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = par_map(Parallelism::Sequential, items.clone(), |x| x * x + 1);
        let par = par_map(Parallelism::Rayon, items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert!(seq.windows(2).all(|w| w[0] < w[1]), "order preserved");
    }

    #[test]
    fn thread_cap_leaves_results_intact() {
        // The global pool may already exist; only the mapping contract is
        // observable either way.
        let _ = configure_threads(2);
        let out = par_map(Parallelism::Rayon, vec![1, 2, 3], |x| x + 1);
        assert_eq!(out, vec![2, 3, 4]);
    }

    #[test]
    fn default_mode_tracks_the_feature() {
        let expect = if cfg!(feature = "parallel") {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        };
        assert_eq!(Parallelism::default(), expect);
    }
}
