//! Deterministic in-process cluster.
//!
//! `K = P * Q` logical workers run in barrier-separated rounds; data moves
//! between workers only through tree reductions, which are counted. Results
//! depend on inputs and seeds only, never on the physical thread count:
//! rounds return results in worker order and every reduction folds its group
//! in a fixed tree shape.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable consulted for the default physical thread count.
pub const THREADS_ENV: &str = "DDOPT_THREADS";

/// Random stream used by all solvers and generators.
pub type RngStream = ChaCha8Rng;

/// Opens the stream identified by `(seed, domain, tags)`.
///
/// The stream key is a SHA-256 digest of the tuple, so distinct tuples give
/// independent streams and the same tuple gives the same stream on every
/// platform.
pub fn rng_stream(seed: u64, domain: &str, tags: &[u64]) -> RngStream {
    let mut h = Sha256::new();
    h.update(b"ddopt/rng/v1");
    h.update(seed.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    for t in tags {
        h.update(t.to_le_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Uniform index in `0..n`, independent of pointer width.
pub fn sample_index(rng: &mut RngStream, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

/// Uniform draw from `[lo, hi)`.
pub fn sample_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Something that can travel along a reduction edge.
pub trait Payload {
    /// Scalars carried by one transfer of this value.
    fn scalars(&self) -> usize;
}

impl Payload for f64 {
    fn scalars(&self) -> usize {
        1
    }
}

impl Payload for Vec<f64> {
    fn scalars(&self) -> usize {
        self.len()
    }
}

impl<A: Payload, B: Payload> Payload for (A, B) {
    fn scalars(&self) -> usize {
        self.0.scalars() + self.1.scalars()
    }
}

/// Work done by one reduction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReduceCost {
    pub combines: u64,
    pub scalars: u64,
}

/// Folds `group` through a fixed left-to-right tree of fan-in `arity`.
///
/// Each level chunks the current values into runs of `arity` and folds every
/// run from the left; the next level repeats on the run results. Every binary
/// combine counts as one edge carrying the right operand. `combine` must be
/// associative; it is never reordered, so it need not commute.
pub fn tree_reduce<T, F>(group: Vec<T>, arity: usize, mut combine: F) -> Result<(T, ReduceCost)>
where
    T: Payload,
    F: FnMut(T, T) -> T,
{
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let arity = arity.max(2);
    let mut cost = ReduceCost::default();
    let mut level = group;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(arity));
        let mut it = level.into_iter().peekable();
        while it.peek().is_some() {
            let mut acc = it.next().unwrap();
            for _ in 1..arity {
                let Some(rhs) = it.next() else { break };
                cost.combines += 1;
                cost.scalars += rhs.scalars() as u64;
                acc = combine(acc, rhs);
            }
            next.push(acc);
        }
        level = next;
    }
    Ok((level.pop().unwrap(), cost))
}

/// Element-wise sum used by most reductions.
pub fn add_vectors(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(&b) {
        *x += y;
    }
    a
}

/// Cumulative communication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommStats {
    /// Reduction phases (barrier-synchronized communication steps).
    pub phases: u64,
    /// Individual tree reductions across all phases.
    pub reductions: u64,
    pub combines: u64,
    pub scalars: u64,
}

pub struct ClusterSim {
    workers: usize,
    threads: usize,
    arity: usize,
    pool: rayon::ThreadPool,
    phases: AtomicU64,
    reductions: AtomicU64,
    combines: AtomicU64,
    scalars: AtomicU64,
}

impl std::fmt::Debug for ClusterSim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClusterSim")
            .field("workers", &self.workers)
            .field("threads", &self.threads)
            .field("arity", &self.arity)
            .field("stats", &self.stats())
            .finish()
    }
}

/// Thread count from [`THREADS_ENV`], falling back to the available cores.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl ClusterSim {
    pub fn new(workers: usize) -> Result<Self> {
        Self::with_options(workers, default_threads(), 2)
    }

    pub fn with_threads(workers: usize, threads: usize) -> Result<Self> {
        Self::with_options(workers, threads, 2)
    }

    pub fn with_options(workers: usize, threads: usize, arity: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidConfig("cluster needs at least one worker".into()));
        }
        if arity < 2 {
            return Err(Error::InvalidConfig(format!("reduction arity must be at least 2, got {arity}")));
        }
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .thread_name(|i| format!("ddopt-worker-{i}"))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(Self {
            workers,
            threads,
            arity,
            pool,
            phases: AtomicU64::new(0),
            reductions: AtomicU64::new(0),
            combines: AtomicU64::new(0),
            scalars: AtomicU64::new(0),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn stats(&self) -> CommStats {
        CommStats {
            phases: self.phases.load(Ordering::Relaxed),
            reductions: self.reductions.load(Ordering::Relaxed),
            combines: self.combines.load(Ordering::Relaxed),
            scalars: self.scalars.load(Ordering::Relaxed),
        }
    }

    pub fn reset_stats(&self) {
        for c in [&self.phases, &self.reductions, &self.combines, &self.scalars] {
            c.store(0, Ordering::Relaxed);
        }
    }

    /// Runs one task per worker and waits for all of them.
    ///
    /// Results come back in worker order. A panicking task aborts the round
    /// with [`Error::TaskPanic`] naming the lowest failing worker.
    pub fn run_round<T, F>(&self, tasks: Vec<F>) -> Result<Vec<T>>
    where
        T: Send,
        F: FnOnce() -> T + Send,
    {
        if tasks.len() != self.workers {
            return Err(Error::InvalidConfig(format!(
                "round has {} tasks for {} workers",
                tasks.len(),
                self.workers
            )));
        }
        let outcomes: Vec<std::result::Result<T, usize>> = self.pool.install(|| {
            tasks
                .into_par_iter()
                .enumerate()
                .map(|(id, task)| catch_unwind(AssertUnwindSafe(task)).map_err(|_| id))
                .collect()
        });
        outcomes.into_iter().map(|o| o.map_err(|worker| Error::TaskPanic { worker })).collect()
    }

    /// Runs `f(worker_id)` for every worker; a convenience over [`run_round`](Self::run_round).
    pub fn map_workers<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let f = &f;
        self.run_round((0..self.workers).map(|id| move || f(id)).collect())
    }

    /// Opens one counted communication phase. All reductions issued through
    /// the returned handle belong to that phase.
    pub fn phase<R>(&self, body: impl FnOnce(&Phase<'_>) -> Result<R>) -> Result<R> {
        self.phases.fetch_add(1, Ordering::Relaxed);
        body(&Phase { sim: self })
    }
}

/// Handle for reductions inside one communication phase.
pub struct Phase<'a> {
    sim: &'a ClusterSim,
}

impl Phase<'_> {
    /// Counted [`tree_reduce`] with the cluster's fan-in.
    pub fn tree_aggregate<T, F>(&self, group: Vec<T>, combine: F) -> Result<T>
    where
        T: Payload,
        F: FnMut(T, T) -> T,
    {
        let (value, cost) = tree_reduce(group, self.sim.arity, combine)?;
        self.sim.reductions.fetch_add(1, Ordering::Relaxed);
        self.sim.combines.fetch_add(cost.combines, Ordering::Relaxed);
        self.sim.scalars.fetch_add(cost.scalars, Ordering::Relaxed);
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn tree_sum_and_costs() {
        let (v, cost) = tree_reduce(vec![1.0, 2.0, 3.0, 4.0], 2, |a, b| a + b).unwrap();
        assert_eq!(v, 10.0);
        assert_eq!(cost, ReduceCost { combines: 3, scalars: 3 });
    }

    #[test]
    fn single_element_costs_nothing() {
        let (v, cost) = tree_reduce(vec![vec![1.5, 2.5]], 2, add_vectors).unwrap();
        assert_eq!(v, vec![1.5, 2.5]);
        assert_eq!(cost, ReduceCost::default());
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(matches!(tree_reduce(Vec::<f64>::new(), 2, |a, b| a + b), Err(Error::EmptyGroup)));
    }

    #[test]
    fn three_way_vector_sum_matches_serial_fold_bitwise() {
        let parts = vec![vec![0.1, 1e16, -3.3], vec![0.2, 1.0, 7.7], vec![0.3, -1e16, 1e-9]];
        let serial: Vec<f64> = (0..3).map(|k| (parts[0][k] + parts[1][k]) + parts[2][k]).collect();
        let (tree, cost) = tree_reduce(parts, 2, add_vectors).unwrap();
        assert_eq!(tree.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), serial.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(cost.scalars, 6);
    }

    #[test]
    fn non_commutative_combine_keeps_order() {
        let words: Vec<Vec<f64>> = (0..7).map(|k| vec![k as f64]).collect();
        for arity in 2..5 {
            let (cat, _) = tree_reduce(words.clone(), arity, |mut a, b| {
                a.extend(b);
                a
            })
            .unwrap();
            assert_eq!(cat, (0..7).map(|k| k as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rounds_return_worker_order_for_any_thread_count() {
        for threads in [1, 4, 16] {
            let sim = ClusterSim::with_threads(9, threads).unwrap();
            let out = sim.map_workers(|id| id * 10).unwrap();
            assert_eq!(out, (0..9).map(|id| id * 10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn disjoint_writes_are_thread_count_invariant() {
        let run = |threads| {
            let sim = ClusterSim::with_threads(6, threads).unwrap();
            let slices = sim
                .map_workers(|id| {
                    let mut rng = rng_stream(3, "slice", &[id as u64]);
                    (0..5).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()
                })
                .unwrap();
            slices.concat()
        };
        let reference = run(1);
        assert_eq!(run(4), reference);
        assert_eq!(run(16), reference);
    }

    #[test]
    fn panicking_task_reports_its_worker() {
        let sim = ClusterSim::with_threads(4, 2).unwrap();
        let err = sim
            .map_workers(|id| {
                if id == 2 {
                    panic!("boom");
                }
                id
            })
            .unwrap_err();
        assert!(matches!(err, Error::TaskPanic { worker: 2 }));
    }

    #[test]
    fn round_needs_one_task_per_worker() {
        let sim = ClusterSim::with_threads(3, 1).unwrap();
        assert!(sim.run_round(vec![|| 1, || 2]).is_err());
    }

    #[test]
    fn phases_count_reductions() {
        let sim = ClusterSim::with_threads(4, 1).unwrap();
        sim.phase(|ph| {
            ph.tree_aggregate(vec![vec![1.0; 3]; 2], add_vectors)?;
            ph.tree_aggregate(vec![vec![1.0; 3]; 2], add_vectors)
        })
        .unwrap();
        assert_eq!(sim.stats(), CommStats { phases: 1, reductions: 2, combines: 2, scalars: 6 });
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |tags: &[u64]| {
            let mut r = rng_stream(42, "sdca", tags);
            (0..8).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draw(&[1, 1]), draw(&[1, 1]));
        assert_ne!(draw(&[1, 1]), draw(&[1, 2]));
        let mut a = rng_stream(42, "sdca", &[1]);
        let mut b = rng_stream(42, "radisa", &[1]);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn golden_stream_prefix() {
        let mut r = rng_stream(20170612, "golden", &[1, 2, 3]);
        let draws: Vec<u64> = (0..4).map(|_| r.next_u64()).collect();
        assert_eq!(draws, GOLDEN);
    }

    const GOLDEN: [u64; 4] = [3870086541371339377, 5802206558622541844, 6943685104682588504, 6462755902576646537];
}
