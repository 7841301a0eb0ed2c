//! Worker-count control for sharded measurements.

/// Environment variable capping the number of measurement workers (0 = auto).
pub const THREADS_ENV: &str = "EI_PROBE_THREADS";

/// Worker count requested through [`THREADS_ENV`], 0 when unset or invalid.
pub fn workers_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Run `f` on a dedicated pool of `workers` threads (0 = rayon's default).
///
/// Measurement results do not depend on the worker count; this only bounds
/// CPU usage.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(err) => {
            log::warn!("could not build a {workers}-thread pool ({err}); using the global pool");
            f()
        }
    }
}
