//! Problem sources: synthetic generators with prescribed constants, LIBSVM
//! ingestion, client partitioning and a text format for problems.

mod libsvm;
mod partition;
mod synthetic;
mod text;

pub use libsvm::{parse_libsvm, parse_libsvm_str, write_libsvm, LabelMap, LibsvmDataset, LibsvmRow};
pub use partition::{partition, partition_indices, Partition, PartitionSpec, Sampling};
pub use synthetic::{
    generate_synthetic, generate_weak_direction, paired_directions, perturbed_problem, SyntheticSpec,
    WeakDirectionSpec, MAX_DENSE_DIM,
};
pub use text::{read_problem, write_problem};
