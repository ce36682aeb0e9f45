//! Fan-out over independent jobs with results kept in job order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

pub const THREADS_ENV: &str = "RAWZERO_THREADS";

/// `--threads`, else `RAWZERO_THREADS`, else the available parallelism.
pub fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .or_else(|| thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

/// Runs `f(0..n)` on up to `threads` workers. Results come back ordered by
/// job index whatever the completion order. After a failure no new jobs are
/// started and the error of the lowest failing index is returned.
pub fn map_ordered<T, E, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<T, E>>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(n);
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            // skipped after an earlier failure, which is reported first
            None => continue,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for threads in [1, 3, 8] {
            let v: Vec<usize> = map_ordered(50, threads, |i| Ok::<_, ()>(i * i)).unwrap();
            assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lowest_failure_wins() {
        let r = map_ordered(20, 4, |i| if i % 7 == 6 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(6));
    }

    #[test]
    fn flag_beats_default() {
        assert_eq!(thread_count(Some(3)), 3);
        assert_eq!(thread_count(Some(0)), 1);
    }
}
