//! Experiment configuration, read from and written to JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svrp::data::{LabelMap, Sampling};
use svrp::fedsim::Algorithm;
use svrp::prox::ProxMethod;
use svrp::Regularizer;

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSource,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    /// Communication budget per run.
    pub budget: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub record_cadence: usize,
    pub output_dir: PathBuf,
    /// Target accuracy `ε` used by the theorem-driven defaults.
    pub eps: f64,
    #[serde(default = "yes")]
    pub charge_initial_sync: bool,
    /// Draw one line per seed in the plot instead of the median.
    #[serde(default)]
    pub per_seed_lines: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Synthetic {
        num_clients: usize,
        dim: usize,
        delta: f64,
        smoothness: f64,
        lambda: f64,
        noise_std: f64,
        #[serde(default)]
        samples_per_client: Option<usize>,
        seed: u64,
    },
    WeakDirection {
        num_clients: usize,
        dim: usize,
        delta: f64,
        mu: f64,
        smoothness: f64,
        noise_std: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        num_clients: usize,
        samples_per_client: usize,
        lambda: f64,
        #[serde(default)]
        sampling: SamplingConfig,
        #[serde(default)]
        labels: LabelConfig,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingConfig {
    #[default]
    WithReplacement,
    Identity,
}

impl From<SamplingConfig> for Sampling {
    fn from(s: SamplingConfig) -> Self {
        match s {
            SamplingConfig::WithReplacement => Sampling::WithReplacement,
            SamplingConfig::Identity => Sampling::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelConfig {
    #[default]
    Identity,
    ZeroOne,
}

impl From<LabelConfig> for LabelMap {
    fn from(l: LabelConfig) -> Self {
        match l {
            LabelConfig::Identity => LabelMap::Identity,
            LabelConfig::ZeroOne => LabelMap::ZeroOne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerConfig {
    #[default]
    None,
    L1 { weight: f64 },
    Ball { radius: f64 },
}

impl From<RegularizerConfig> for Regularizer {
    fn from(r: RegularizerConfig) -> Self {
        match r {
            RegularizerConfig::None => Regularizer::None,
            RegularizerConfig::L1 { weight } => Regularizer::L1 { weight },
            RegularizerConfig::Ball { radius } => Regularizer::Ball { radius },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxChoice {
    Exact,
    Gd,
    Agd,
    CompositePg,
}

impl From<ProxChoice> for ProxMethod {
    fn from(p: ProxChoice) -> Self {
        match p {
            ProxChoice::Exact => ProxMethod::Exact,
            ProxChoice::Gd => ProxMethod::Gd,
            ProxChoice::Agd => ProxMethod::Agd,
            ProxChoice::CompositePg => ProxMethod::CompositePg,
        }
    }
}

/// One algorithm with optional overrides of its theoretical defaults.
///
/// `eta` is the prox stepsize of the proximal methods, `stepsize` the
/// gradient stepsize of SGD, L-SVRG and SCAFFOLD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepsize: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox: Option<ProxChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inner_iters: Option<usize>,
}

impl AlgorithmConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            eta: None,
            stepsize: None,
            p: None,
            b: None,
            prox: None,
            max_inner_iters: None,
        }
    }

    pub fn algorithm(&self) -> Result<Algorithm, LabError> {
        Algorithm::from_name(&self.name).ok_or_else(|| {
            let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            LabError::Config(format!(
                "unknown algorithm `{}`; expected one of {}",
                self.name,
                known.join(", ")
            ))
        })
    }

    /// Checks that every override is meaningful for the algorithm and lies
    /// in its domain.
    pub fn validate(&self) -> Result<Algorithm, LabError> {
        let algo = self.algorithm()?;
        let bad = |msg: String| Err(LabError::Override(format!("{}: {msg}", self.name)));
        let proximal = matches!(
            algo,
            Algorithm::Sppm | Algorithm::Svrp | Algorithm::SvrpComposite
        );
        let gradient = matches!(algo, Algorithm::Sgd | Algorithm::Lsvrg | Algorithm::Scaffold);
        let anchored = matches!(
            algo,
            Algorithm::Svrp | Algorithm::SvrpComposite | Algorithm::Lsvrg
        );
        if algo == Algorithm::CatalyzedSvrp
            && (self.eta.is_some()
                || self.stepsize.is_some()
                || self.p.is_some()
                || self.b.is_some()
                || self.prox.is_some()
                || self.max_inner_iters.is_some())
        {
            return bad("catalyzed-svrp takes its whole schedule from the theory".into());
        }
        if let Some(eta) = self.eta {
            if !proximal {
                return bad("`eta` applies to proximal methods; use `stepsize`".into());
            }
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("eta={eta} must be positive"));
            }
        }
        if let Some(s) = self.stepsize {
            if !gradient {
                return bad("`stepsize` applies to gradient methods; use `eta`".into());
            }
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("stepsize={s} must be positive"));
            }
        }
        if let Some(p) = self.p {
            if !anchored {
                return bad("`p` applies to anchor-based methods".into());
            }
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("p={p} must lie in (0, 1]"));
            }
        }
        if self.b.is_some() || self.prox.is_some() || self.max_inner_iters.is_some() {
            if !proximal {
                return bad("`b`, `prox` and `max_inner_iters` apply to proximal methods".into());
            }
            if let Some(b) = self.b {
                if !(b >= 0.0 && b.is_finite()) {
                    return bad(format!("b={b} must be ≥ 0"));
                }
            }
            if self.max_inner_iters == Some(0) {
                return bad("max_inner_iters must be positive".into());
            }
        }
        Ok(algo)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| LabError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |msg: &str| Err(LabError::Config(msg.to_string()));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.record_cadence == 0 {
            return bad("record_cadence must be positive");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.algorithms {
            if !seen.insert(a.name.as_str()) {
                return Err(LabError::Config(format!("algorithm `{}` listed twice", a.name)));
            }
            let algo = a.validate()?;
            let reg: Regularizer = self.regularizer.into();
            if !reg.is_none() && algo != Algorithm::SvrpComposite {
                return Err(LabError::Config(format!(
                    "`{}` cannot handle a regularizer; only svrp-composite can",
                    a.name
                )));
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        Regularizer::from(self.regularizer)
            .validate()
            .map_err(|e| LabError::Override(e.to_string()))
    }
}
