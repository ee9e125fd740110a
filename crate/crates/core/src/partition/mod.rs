//! Workload distribution across identical processors.
//!
//! All partitioners minimise the *makespan*, the largest predicted time over
//! the processors, using one shared [`SpeedFunction`]. Nothing here assumes
//! the balanced split is best: when the speed function lets a larger workload
//! finish sooner, the optimum is deliberately uneven.

mod report;

pub use report::PartitionReport;

use serde::{Deserialize, Serialize};

use crate::fpm::{FpmError, SpeedFunction};

/// Default limit on the number of compositions the brute-force oracle will
/// enumerate.
pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Model(#[from] FpmError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("paired search needs an even number of processors, got {0}")]
    OddProcessors(usize),
    #[error("balanced share {total}/{processors} is not a multiple of granularity {granularity}")]
    Misaligned { total: u64, processors: usize, granularity: u64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("search space of {size} compositions exceeds cap {cap}")]
    TooLarge { size: u128, cap: u64 },
}

/// `total` units of work to spread over `processors` identical processors
/// whose speed is `model`.
#[derive(Debug, Clone, Copy)]
pub struct PartitionProblem<'m> {
    total: u64,
    processors: usize,
    model: &'m SpeedFunction,
    allow_idle: bool,
}

impl<'m> PartitionProblem<'m> {
    pub fn new(total: u64, processors: usize, model: &'m SpeedFunction) -> Result<Self, PartitionError> {
        if total == 0 {
            return Err(PartitionError::InvalidProblem("total workload must be > 0".into()));
        }
        if processors == 0 {
            return Err(PartitionError::InvalidProblem("need at least one processor".into()));
        }
        if total % model.granularity() != 0 {
            return Err(PartitionError::InvalidProblem(format!(
                "total {total} is not a multiple of granularity {}",
                model.granularity()
            )));
        }
        Ok(Self { total, processors, model, allow_idle: false })
    }

    /// Lets processors receive no work at all.
    pub fn allow_idle(mut self, allow: bool) -> Self {
        self.allow_idle = allow;
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn processors(&self) -> usize {
        self.processors
    }

    pub fn model(&self) -> &'m SpeedFunction {
        self.model
    }

    pub fn idle_allowed(&self) -> bool {
        self.allow_idle
    }

    fn granularity(&self) -> u64 {
        self.model.granularity()
    }

    /// Total in granularity steps.
    fn steps(&self) -> u64 {
        self.total / self.granularity()
    }

    /// Whether `share` (in units) may be handed to a single processor.
    fn admissible(&self, share: u64) -> bool {
        if share == 0 {
            return self.allow_idle;
        }
        share % self.granularity() == 0 && share >= self.model.min_x() && share <= self.model.max_x()
    }

    /// Admissible shares, ascending, in granularity steps, with their times.
    fn candidates(&self) -> Vec<(u64, f64)> {
        let g = self.granularity();
        (0..=self.steps())
            .filter(|&k| self.admissible(k * g))
            .map(|k| (k, self.model.eval_time(k * g).expect("admissible share is evaluable")))
            .collect()
    }

    fn balanced_share(&self) -> Option<u64> {
        let p = self.processors as u64;
        (self.total % p == 0).then(|| self.total / p)
    }
}

/// A concrete assignment of work with its predicted times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub shares: Vec<u64>,
    pub per_time: Vec<f64>,
    pub makespan: f64,
    /// Distance of the paired solution from the balanced share, in units.
    pub offset: Option<u64>,
}

/// Predicted per-processor times and makespan of `shares`; no optimisation.
pub fn predict_makespan(model: &SpeedFunction, shares: &[u64]) -> Result<Partition, PartitionError> {
    if shares.is_empty() {
        return Err(PartitionError::InvalidProblem("no shares given".into()));
    }
    let per_time = shares.iter().map(|&x| model.eval_time(x)).collect::<Result<Vec<_>, _>>()?;
    let makespan = per_time.iter().copied().fold(0.0, f64::max);
    Ok(Partition { shares: shares.to_vec(), per_time, makespan, offset: None })
}

/// Predicted makespan when every processor gets `total / processors`.
pub fn balanced(problem: &PartitionProblem<'_>) -> Result<Partition, PartitionError> {
    let share = problem.balanced_share().ok_or_else(|| {
        PartitionError::InvalidProblem(format!(
            "{} does not divide evenly over {} processors",
            problem.total, problem.processors
        ))
    })?;
    let mut p = predict_makespan(problem.model, &vec![share; problem.processors])?;
    p.offset = Some(0);
    Ok(p)
}

/// Symmetric search around the balanced share.
///
/// Half of the processors receive `n/p + k*dx` and the other half
/// `n/p - k*dx`; the `k` with the smallest makespan wins, ties going to the
/// smaller `k`. Even-indexed processors get the smaller share.
pub fn partition_paired(problem: &PartitionProblem<'_>) -> Result<Partition, PartitionError> {
    let p = problem.processors;
    if p % 2 != 0 {
        return Err(PartitionError::OddProcessors(p));
    }
    let g = problem.granularity();
    let misaligned = || PartitionError::Misaligned { total: problem.total, processors: p, granularity: g };
    let base = problem.balanced_share().ok_or_else(misaligned)?;
    if base % g != 0 {
        return Err(misaligned());
    }
    let model = problem.model;

    let mut best_offset = 0;
    let mut best_time = model.eval_time(base)?;
    let floor = if problem.allow_idle { 0 } else { g };
    let mut offset = g;
    while offset <= base && base - offset >= floor {
        let (left, right) = (base - offset, base + offset);
        if right > model.max_x() {
            break;
        }
        if problem.admissible(left) {
            let t = model.eval_time(right)?.max(model.eval_time(left)?);
            if t < best_time {
                best_time = t;
                best_offset = offset;
            }
        }
        offset += g;
    }

    let shares: Vec<u64> = (0..p)
        .map(|i| if i % 2 == 0 { base - best_offset } else { base + best_offset })
        .collect();
    let mut out = predict_makespan(model, &shares)?;
    out.offset = Some(best_offset);
    Ok(out)
}

/// Exact minimum-makespan partition for any number of processors.
///
/// A dynamic programme over (processors used, steps assigned) finds the
/// optimal makespan; a second pass over the shares that fit under it picks the
/// lexicographically smallest non-increasing share vector.
pub fn partition_general(problem: &PartitionProblem<'_>) -> Result<Partition, PartitionError> {
    let p = problem.processors;
    let k = problem.steps() as usize;
    let cands = problem.candidates();

    // best[i][u]: minimal makespan placing u steps on i processors.
    let mut prev = vec![f64::INFINITY; k + 1];
    prev[0] = 0.0;
    for _ in 0..p {
        let mut cur = vec![f64::INFINITY; k + 1];
        for (u, slot) in cur.iter_mut().enumerate() {
            for &(a, t) in &cands {
                let a = a as usize;
                if a > u {
                    break;
                }
                let v = t.max(prev[u - a]);
                if v < *slot {
                    *slot = v;
                }
            }
        }
        prev = cur;
    }
    let optimum = prev[k];
    if !optimum.is_finite() {
        return Err(PartitionError::Infeasible(format!(
            "{} units cannot be split over {} processors with shares in [{}, {}] (idle {})",
            problem.total,
            p,
            problem.model.min_x(),
            problem.model.max_x(),
            if problem.allow_idle { "allowed" } else { "not allowed" }
        )));
    }

    let fitting: Vec<usize> = cands.iter().filter(|&&(_, t)| t <= optimum).map(|&(a, _)| a as usize).collect();
    let reach = Reachability::build(&fitting, p, k);
    let mut shares = Vec::with_capacity(p);
    let (mut left, mut cap) = (k, fitting.len() - 1);
    for placed in 0..p {
        let rest = p - placed - 1;
        let j = (0..=cap)
            .find(|&j| fitting[j] <= left && reach.get(j, rest, left - fitting[j]))
            .expect("optimum is reachable");
        shares.push(fitting[j] as u64 * problem.granularity());
        left -= fitting[j];
        cap = j;
    }
    predict_makespan(problem.model, &shares)
}

/// `get(j, i, u)`: `u` steps can be written as a sum of `i` values taken
/// (with repetition) from the first `j + 1` entries of `values`.
struct Reachability {
    table: Vec<bool>,
    procs: usize,
    steps: usize,
}

impl Reachability {
    fn build(values: &[usize], procs: usize, steps: usize) -> Self {
        let layer = (procs + 1) * (steps + 1);
        let mut table = vec![false; values.len() * layer];
        let idx = |j: usize, i: usize, u: usize| j * layer + i * (steps + 1) + u;
        for (j, &a) in values.iter().enumerate() {
            for i in 0..=procs {
                for u in 0..=steps {
                    let without = if j > 0 { table[idx(j - 1, i, u)] } else { i == 0 && u == 0 };
                    let with = i > 0 && u >= a && table[idx(j, i - 1, u - a)];
                    table[idx(j, i, u)] = without || with;
                }
            }
        }
        Self { table, procs, steps }
    }

    fn get(&self, j: usize, i: usize, u: usize) -> bool {
        self.table[j * (self.procs + 1) * (self.steps + 1) + i * (self.steps + 1) + u]
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Exhaustive search over every ordered split of the workload; the reference
/// the faster partitioners are checked against.
pub fn brute_force_oracle(problem: &PartitionProblem<'_>, cap: u64) -> Result<Partition, PartitionError> {
    let p = problem.processors;
    let k = problem.steps();
    let size = binomial(k as u128 + p as u128 - 1, p as u128 - 1);
    if size > cap as u128 {
        return Err(PartitionError::TooLarge { size, cap });
    }

    struct Search<'a, 'm> {
        problem: &'a PartitionProblem<'m>,
        current: Vec<u64>,
        best: Option<(f64, Vec<u64>)>,
    }

    impl Search<'_, '_> {
        fn visit(&mut self, left: u64) {
            if self.current.len() + 1 == self.problem.processors {
                self.current.push(left);
                self.score();
                self.current.pop();
                return;
            }
            for steps in 0..=left {
                self.current.push(steps);
                self.visit(left - steps);
                self.current.pop();
            }
        }

        fn score(&mut self) {
            let g = self.problem.granularity();
            let mut makespan: f64 = 0.0;
            for &steps in &self.current {
                let share = steps * g;
                if !self.problem.admissible(share) {
                    return;
                }
                makespan = makespan.max(self.problem.model.eval_time(share).expect("admissible"));
            }
            let mut sorted: Vec<u64> = self.current.iter().map(|&s| s * g).collect();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            let better = match &self.best {
                None => true,
                Some((t, shares)) => makespan < *t || (makespan == *t && sorted < *shares),
            };
            if better {
                self.best = Some((makespan, sorted));
            }
        }
    }

    let mut search = Search { problem, current: Vec::with_capacity(p), best: None };
    search.visit(k);
    let (_, shares) = search
        .best
        .ok_or_else(|| PartitionError::Infeasible(format!("no admissible split of {} over {p}", problem.total)))?;
    predict_makespan(problem.model, &shares)
}

/// A symmetric imbalance that beats the balanced share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub offset: u64,
    /// `(balanced, balanced + offset)`: the larger size runs faster.
    pub violating_pair: (u64, u64),
    pub balanced_time: f64,
    pub imbalanced_time: f64,
    pub gain: f64,
}

/// Looks for an offset `d` such that both `b + d` and `b - d` finish sooner
/// than the balanced share `b`, using sampled points only. Returns the offset
/// with the largest gain, or `None` when balancing cannot be beaten this way.
pub fn improvement_search(model: &SpeedFunction, balanced_share: u64) -> Result<Option<Improvement>, FpmError> {
    if !model.is_sampled(balanced_share) {
        return Err(FpmError::OutOfRange { x: balanced_share, min: model.min_x(), max: model.max_x() });
    }
    let balanced_time = model.eval_time(balanced_share)?;
    let mut best: Option<Improvement> = None;
    for right in model.xs().filter(|&x| x > balanced_share) {
        let offset = right - balanced_share;
        if offset >= balanced_share || !model.is_sampled(balanced_share - offset) {
            continue;
        }
        let t = model.eval_time(right)?.max(model.eval_time(balanced_share - offset)?);
        let gain = balanced_time - t;
        if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
            best = Some(Improvement {
                offset,
                violating_pair: (balanced_share, right),
                balanced_time,
                imbalanced_time: t,
                gain,
            });
        }
    }
    Ok(best)
}
