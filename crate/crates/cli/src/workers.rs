use std::num::NonZeroUsize;

use anyhow::{bail, Context, Result};

pub const THREADS_ENV: &str = "STACKDENOISE_THREADS";

/// Worker count from `STACKDENOISE_THREADS`; unset or 0 means one per core.
pub fn worker_count() -> Result<usize> {
    let auto = || std::thread::available_parallelism().map_or(1, NonZeroUsize::get);
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(auto()),
        Err(e) => bail!("{THREADS_ENV}: {e}"),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))?;
            Ok(if n == 0 { auto() } else { n })
        }
    }
}

/// Maps `f` over `items` on up to `workers` scoped threads. Output order
/// follows input order, so results do not depend on scheduling.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
