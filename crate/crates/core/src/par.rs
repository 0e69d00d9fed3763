//! Execution policy for the data-parallel loops.
//!
//! Every batch routine in the crate (row assembly, mismatch scans, root
//! searches, κ sweeps) funnels through [`map_range`] / [`map_slice`]. With the
//! `parallel` feature these dispatch to rayon unless the caller asks for
//! [`Exec::Sequential`]; without the feature only the sequential path exists.
//! Output order never depends on the policy, so results are bit-identical
//! between the two paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Parallelism hint for faer kernels (matmul, decompositions).
    pub fn faer_par(self) -> faer::Par {
        match self {
            Exec::Sequential => faer::Par::Seq,
            #[cfg(feature = "parallel")]
            Exec::Parallel => faer::Par::rayon(0),
        }
    }
}

pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Caps the global rayon pool. Returns `false` if the pool was already
/// initialized (or the feature is off).
pub fn init_threads(threads: usize) -> bool {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let seq = map_range(Exec::Sequential, 100, |i| (i as f64).sqrt());
        let def = map_range(Exec::default(), 100, |i| (i as f64).sqrt());
        assert_eq!(seq, def);
        let items: Vec<u32> = (0..37).collect();
        assert_eq!(
            map_slice(Exec::Sequential, &items, |x| x * 3),
            map_slice(Exec::default(), &items, |x| x * 3)
        );
    }
}
