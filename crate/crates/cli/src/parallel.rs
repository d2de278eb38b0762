//! Concurrent execution of independent variants. Results come back in job
//! order regardless of how many workers ran them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{HarnessError, Result};

pub const THREADS_ENV: &str = "ICAS_THREADS";

pub type Job<'a, T> = Box<dyn FnOnce() -> Result<T> + Send + 'a>;

/// Worker cap from `ICAS_THREADS`, defaulting to the available cores.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run_jobs<'a, T: Send>(jobs: Vec<Job<'a, T>>, threads: usize) -> Result<Vec<T>> {
    let n = jobs.len();
    let workers = threads.max(1).min(n);
    if workers <= 1 {
        return jobs.into_iter().map(|j| j()).collect();
    }
    let queue: Vec<Mutex<Option<Job<'a, T>>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let job = queue[i].lock().unwrap().take().expect("each job runs once");
                *results[i].lock().unwrap() = Some(job());
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.into_inner().unwrap().expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn squares<'a>(n: usize) -> Vec<Job<'a, usize>> {
        (0..n)
            .map(|i| Box::new(move || Ok(i * i)) as Job<usize>)
            .collect()
    }

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let want: Vec<usize> = (0..9).map(|i| i * i).collect();
        for threads in [1, 2, 4, 16] {
            assert_eq!(run_jobs(squares(9), threads).unwrap(), want);
        }
        assert!(run_jobs::<usize>(Vec::new(), 3).unwrap().is_empty());
    }

    #[test]
    fn first_error_by_position_wins() {
        let jobs: Vec<Job<usize>> = vec![
            Box::new(|| Ok(1)),
            Box::new(|| Err(HarnessError::Audit("second".into()))),
            Box::new(|| Err(HarnessError::Audit("third".into()))),
        ];
        let err = run_jobs(jobs, 3).unwrap_err();
        assert!(err.to_string().contains("second"));
    }
}
