//! Data-parallel map over independent jobs (chains, replicates). With the
//! `parallel` feature jobs run on a rayon pool; without it they run in
//! order on the calling thread. Results are always returned in job order.

/// Runs `f(0), ..., f(n - 1)` on up to `workers` threads (`0` means one
/// per core).
#[cfg(feature = "parallel")]
pub fn map_jobs<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return map_sequential(n, f);
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => map_sequential(n, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_jobs<T, F>(n: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_sequential(n, f)
}

pub fn map_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = map_jobs(50, 4, |i| i * i);
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(map_jobs(0, 0, |i| i), Vec::<usize>::new());
    }
}
