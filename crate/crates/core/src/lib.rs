//! Functional performance models and model-based partitioning of a 3D
//! stencil workload between teams of threads.

pub mod bench;
pub mod fpm;
pub mod partition;
pub mod workload;

pub use bench::stats::Summary;
pub use bench::{MeasurementConfig, MeasurementRun, SizeRange, ValidationTable};
pub use fpm::{ConditionReport, FpmError, ShapeClass, ShapeReport, SpeedFunction, SpeedSample, SpeedSurface};
pub use partition::{Partition, PartitionError, PartitionProblem, PartitionReport};
pub use workload::{StencilDomain, ThreadCap};
