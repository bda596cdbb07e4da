//! Named configurations. The `*-paper` presets run the full-size experiments
//! (10 000 communication steps); the others finish in a few seconds.

use std::path::PathBuf;

use crate::config::{
    AlgorithmConfig, ExperimentConfig, LabelConfig, ProblemSource, RegularizerConfig,
    SamplingConfig,
};
use crate::error::LabError;

pub const PRESETS: [&str; 4] = ["synthetic-small", "synthetic-paper", "a9a-paper", "catalyst-demo"];

/// Where `a9a-paper` looks for the dataset unless `SVRP_A9A_PATH` is set.
pub const DEFAULT_A9A_PATH: &str = "data/a9a";

fn algorithms(names: &[&str]) -> Vec<AlgorithmConfig> {
    names.iter().map(|n| AlgorithmConfig::named(n)).collect()
}

pub fn preset(name: &str) -> Result<ExperimentConfig, LabError> {
    let base = |problem, algos: &[&str], budget, seeds: Vec<u64>| ExperimentConfig {
        name: name.to_string(),
        problem,
        regularizer: RegularizerConfig::None,
        algorithms: algorithms(algos),
        budget,
        seeds,
        record_cadence: 1,
        output_dir: PathBuf::from("out").join(name),
        eps: 1e-8,
        charge_initial_sync: true,
        per_seed_lines: false,
    };
    let baselines = ["svrp", "lsvrg", "scaffold", "sgd"];
    let config = match name {
        "synthetic-small" => base(
            ProblemSource::Synthetic {
                num_clients: 200,
                dim: 50,
                delta: 10.0,
                smoothness: 3000.0,
                lambda: 1.0,
                noise_std: 1.0,
                samples_per_client: None,
                seed: 0,
            },
            &baselines,
            2000,
            (0..5).collect(),
        ),
        "synthetic-paper" => {
            let mut c = base(
                ProblemSource::Synthetic {
                    num_clients: 1000,
                    dim: 50,
                    delta: 10.0,
                    smoothness: 3330.0,
                    lambda: 1.0,
                    noise_std: 1.0,
                    samples_per_client: None,
                    seed: 0,
                },
                &baselines,
                10_000,
                (0..3).collect(),
            );
            c.record_cadence = 5;
            c
        }
        "a9a-paper" => {
            let path = std::env::var_os("SVRP_A9A_PATH")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_A9A_PATH));
            base(
                ProblemSource::Libsvm {
                    path,
                    num_clients: 20,
                    samples_per_client: 2000,
                    lambda: 0.1,
                    sampling: SamplingConfig::WithReplacement,
                    labels: LabelConfig::Identity,
                    seed: 0,
                },
                &baselines,
                10_000,
                (0..3).collect(),
            )
        }
        "catalyst-demo" => {
            let mut c = base(
                ProblemSource::WeakDirection {
                    num_clients: 16,
                    dim: 10,
                    delta: 50.0,
                    mu: 1.0,
                    smoothness: 500.0,
                    noise_std: 1.0,
                    seed: 1,
                },
                &["svrp", "catalyzed-svrp", "lsvrg"],
                250_000,
                (0..5).collect(),
            );
            c.record_cadence = 100;
            c
        }
        _ => {
            return Err(LabError::Config(format!(
                "unknown preset `{name}`; available presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    config.validate()?;
    Ok(config)
}
