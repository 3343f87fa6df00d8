//! Seed-level parallelism. Runs share nothing mutable: each seed gets its own
//! stream, and results come back in seed order, so output is identical to the
//! sequential path bit for bit.

/// Maps `f` over the seeds one at a time.
pub fn run_seeds_sequential<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T + Sync,
    T: Send,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Maps `f` over the seeds, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn run_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T + Sync,
    T: Send,
{
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| f(s)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T + Sync,
    T: Send,
{
    run_seeds_sequential(seeds, f)
}
