use serde::{Deserialize, Serialize};

use super::{balanced, Partition, PartitionError, PartitionProblem};

/// JSON-facing summary of a partition, compared against the balanced split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub total: u64,
    pub processors: usize,
    pub granularity: u64,
    pub shares: Vec<u64>,
    pub per_time_s: Vec<f64>,
    pub makespan_s: f64,
    pub offset: Option<u64>,
    /// Absent when `total / processors` is not an admissible share.
    pub balanced_makespan_s: Option<f64>,
    /// `balanced_makespan_s / makespan_s`.
    pub speedup: Option<f64>,
}

impl PartitionReport {
    pub fn new(problem: &PartitionProblem<'_>, partition: &Partition) -> Result<Self, PartitionError> {
        let balanced_makespan_s = match balanced(problem) {
            Ok(b) => Some(b.makespan),
            Err(PartitionError::InvalidProblem(_)) | Err(PartitionError::Model(_)) => None,
            Err(e) => return Err(e),
        };
        let speedup = balanced_makespan_s
            .filter(|_| partition.makespan > 0.0)
            .map(|b| b / partition.makespan);
        Ok(Self {
            total: problem.total(),
            processors: problem.processors(),
            granularity: problem.model().granularity(),
            shares: partition.shares.clone(),
            per_time_s: partition.per_time.clone(),
            makespan_s: partition.makespan,
            offset: partition.offset,
            balanced_makespan_s,
            speedup,
        })
    }
}
