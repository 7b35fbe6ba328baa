use fredholm_core::Executor;
use rayon::prelude::*;

/// Thread-pool executor. Jobs are collected in index order, so results do not
/// depend on the number of workers.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `workers = None` uses one thread per available core.
    pub fn new(workers: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = workers {
            b = b.num_threads(w);
        }
        Ok(Pool { pool: b.build()? })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `job(i)` for `i < jobs` on the pool, results in index order.
    pub fn map<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..jobs).into_par_iter().map(job).collect())
    }
}

impl Executor for Pool {
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.map(jobs, job)
    }
}
