//! Splitting a dataset into ridge-regression clients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::libsvm::{LabelMap, LibsvmDataset};
use super::synthetic::MAX_DENSE_DIM;
use crate::error::{Error, Result};
use crate::problem::{ClientObjective, FederatedProblem, Regularizer};

/// How rows are assigned to clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Each client draws its rows uniformly with replacement.
    #[default]
    WithReplacement,
    /// Client `m` takes rows `m·n, …, m·n + n − 1`, wrapping around.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub samples_per_client: usize,
    pub lambda: f64,
    pub sampling: Sampling,
    pub labels: LabelMap,
    pub seed: u64,
}

/// A partitioned problem together with the row indices of each client.
#[derive(Debug, Clone)]
pub struct Partition {
    pub problem: FederatedProblem,
    pub rows: Vec<Vec<usize>>,
}

/// Row indices for each client; deterministic in `spec.seed`.
pub fn partition_indices(len: usize, spec: &PartitionSpec) -> Vec<Vec<usize>> {
    let n = spec.samples_per_client;
    match spec.sampling {
        Sampling::WithReplacement => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..spec.num_clients)
                .map(|_| (0..n).map(|_| rng.random_range(0..len)).collect())
                .collect()
        }
        Sampling::Identity => (0..spec.num_clients)
            .map(|m| (0..n).map(|i| (m * n + i) % len).collect())
            .collect(),
    }
}

/// Builds one ridge client `(1/n)‖Z_m x − y_m‖² + (λ/2)‖x‖²` per client.
pub fn partition(data: &LibsvmDataset, spec: &PartitionSpec) -> Result<Partition> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot partition an empty dataset".into()));
    }
    if spec.num_clients == 0 || spec.samples_per_client == 0 {
        return Err(Error::InvalidParameter(
            "need at least one client and one sample per client".into(),
        ));
    }
    if data.dim == 0 || data.dim > MAX_DENSE_DIM {
        return Err(Error::InvalidParameter(format!(
            "feature dimension {} must lie in 1..={MAX_DENSE_DIM}",
            data.dim
        )));
    }
    let rows = partition_indices(data.len(), spec);
    let clients = rows
        .iter()
        .map(|idx| {
            let (z, y) = data.dense(idx, spec.labels);
            ClientObjective::dataset_ridge(z, y, spec.lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        problem: FederatedProblem::new(clients, Regularizer::None)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::libsvm::parse_libsvm_str;
    use crate::problem::estimate_delta;

    const TOY: &str = "1 1:1 3:0.5\n-1 2:1\n1 1:0.2 2:0.3 3:1\n-1 3:2\n1 1:1 2:1\n";

    fn spec(m: usize, n: usize, sampling: Sampling) -> PartitionSpec {
        PartitionSpec {
            num_clients: m,
            samples_per_client: n,
            lambda: 0.1,
            sampling,
            labels: LabelMap::Identity,
            seed: 3,
        }
    }

    #[test]
    fn single_identity_client_has_zero_delta() {
        let d = parse_libsvm_str(TOY).unwrap();
        let p = partition(&d, &spec(1, d.len(), Sampling::Identity)).unwrap();
        assert_eq!(p.rows, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(estimate_delta(&p.problem, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn seeded_partitions_repeat() {
        let d = parse_libsvm_str(TOY).unwrap();
        let a = partition(&d, &spec(3, 4, Sampling::WithReplacement)).unwrap();
        let b = partition(&d, &spec(3, 4, Sampling::WithReplacement)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.rows.iter().flatten().all(|&i| i < d.len()));
    }

    #[test]
    fn ridge_clients_follow_the_rows() {
        let d = parse_libsvm_str(TOY).unwrap();
        let p = partition(&d, &spec(2, 2, Sampling::Identity)).unwrap();
        let (z, y) = d.dense(&p.rows[1], LabelMap::Identity);
        let ridge = p.problem.client(1).ridge_data().unwrap();
        assert_eq!(ridge.features, z);
        assert_eq!(ridge.labels, y);
        assert_eq!(ridge.lambda, 0.1);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let d = parse_libsvm_str(TOY).unwrap();
        assert!(partition(&d, &spec(2, 0, Sampling::Identity)).is_err());
        assert!(partition(&LibsvmDataset::default(), &spec(1, 1, Sampling::Identity)).is_err());
    }
}
