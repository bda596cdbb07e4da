//! Runs every configured (algorithm, seed) pair and writes the results.
//!
//! Output layout under the output directory:
//!
//! ```text
//! runs/<algo>_seed<seed>.csv   one trace per run
//! summary.csv                  final squared distance per algorithm
//! report.json                  constants, parameters, runs, summary, config
//! plot.svg                     convergence plot
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use svrp::catalyst::catalyst_params;
use svrp::data::{
    generate_synthetic, generate_weak_direction, parse_libsvm, partition, PartitionSpec,
    SyntheticSpec, WeakDirectionSpec,
};
use svrp::fedsim::{simulate, Algorithm, Method, RunTrace, SimOptions};
use svrp::optim::{
    lsvrg_default_stepsize, sgd_default_stepsize, sppm_params, svrp_params, svrp_params_with,
};
use svrp::prox::ProxMethod;
use svrp::{FederatedProblem, ProblemConstants, ProxSpec, Regularizer, Vector};

use crate::config::{AlgorithmConfig, ExperimentConfig, ProblemSource};
use crate::error::LabError;
use crate::plot;

/// Tolerance of the power iterations behind the reported constants.
pub const CONSTANTS_TOL: f64 = 1e-10;

pub const SUMMARY_HEADER: &str = "algo,runs,median,q1,q3,iqr";

/// Measured problem constants as echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEcho {
    pub num_clients: usize,
    pub dim: usize,
    pub mu: f64,
    pub smoothness: f64,
    pub delta: f64,
    pub sigma_star_sq: f64,
    pub f_star: f64,
    /// `‖x₀ − x*‖²` from the origin.
    pub dist0_sq: f64,
}

impl ConstantsEcho {
    pub fn new(problem: &FederatedProblem, c: &ProblemConstants) -> Self {
        Self {
            num_clients: problem.num_clients(),
            dim: problem.dim(),
            mu: c.mu,
            smoothness: c.smoothness,
            delta: c.delta,
            sigma_star_sq: c.sigma_star_sq,
            f_star: c.f_star,
            dist0_sq: c.x_star.norm_squared(),
        }
    }
}

/// The parameters an algorithm actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub algo: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stepsize: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prox: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outer_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inner_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub seed: u64,
    /// Path of the trace relative to the output directory.
    pub csv: PathBuf,
    pub final_sq_dist: f64,
    pub final_subopt: f64,
    pub comm_steps: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub algo: String,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub constants: ConstantsEcho,
    pub parameters: Vec<ParamsEcho>,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<AlgoSummary>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn load(dir: &Path) -> Result<Self, LabError> {
        let path = dir.join("report.json");
        let file = File::open(&path)
            .map_err(|e| LabError::Data(format!("cannot open {}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| LabError::Data(format!("malformed {}: {e}", path.display())))
    }

    pub fn summary_for(&self, algo: &str) -> Option<&AlgoSummary> {
        self.summary.iter().find(|s| s.algo == algo)
    }
}

/// Builds the problem described by the config, regularizer included.
pub fn load_problem(config: &ExperimentConfig) -> Result<FederatedProblem, LabError> {
    let infeasible = |e: svrp::Error| match e {
        svrp::Error::Infeasible(msg) => LabError::Infeasible(msg),
        other => LabError::Svrp(other),
    };
    let problem = match &config.problem {
        ProblemSource::Synthetic {
            num_clients,
            dim,
            delta,
            smoothness,
            lambda,
            noise_std,
            samples_per_client,
            seed,
        } => generate_synthetic(&SyntheticSpec {
            num_clients: *num_clients,
            dim: *dim,
            delta: *delta,
            smoothness: *smoothness,
            lambda: *lambda,
            noise_std: *noise_std,
            samples_per_client: *samples_per_client,
            seed: *seed,
        })
        .map_err(infeasible)?,
        ProblemSource::WeakDirection {
            num_clients,
            dim,
            delta,
            mu,
            smoothness,
            noise_std,
            seed,
        } => generate_weak_direction(&WeakDirectionSpec {
            num_clients: *num_clients,
            dim: *dim,
            delta: *delta,
            mu: *mu,
            smoothness: *smoothness,
            noise_std: *noise_std,
            seed: *seed,
        })
        .map_err(infeasible)?,
        ProblemSource::Libsvm {
            path,
            num_clients,
            samples_per_client,
            lambda,
            sampling,
            labels,
            seed,
        } => {
            let file = File::open(path)
                .map_err(|e| LabError::Data(format!("cannot open {}: {e}", path.display())))?;
            let data = parse_libsvm(BufReader::new(file))
                .map_err(|e| LabError::Data(format!("{}: {e}", path.display())))?;
            let spec = PartitionSpec {
                num_clients: *num_clients,
                samples_per_client: *samples_per_client,
                lambda: *lambda,
                sampling: (*sampling).into(),
                labels: (*labels).into(),
                seed: *seed,
            };
            partition(&data, &spec)
                .map_err(|e| LabError::Data(e.to_string()))?
                .problem
        }
    };
    let reg: Regularizer = config.regularizer.into();
    if reg.is_none() {
        Ok(problem)
    } else {
        Ok(problem.with_regularizer(reg)?)
    }
}

fn prox_name(m: ProxMethod) -> String {
    match m {
        ProxMethod::Exact => "exact",
        ProxMethod::Gd => "gd",
        ProxMethod::Agd => "agd",
        ProxMethod::CompositePg => "composite_pg",
    }
    .to_string()
}

fn prox_spec(a: &AlgorithmConfig, default: ProxMethod, eta: f64, b: f64) -> Result<ProxSpec, LabError> {
    let method = a.prox.map(Into::into).unwrap_or(default);
    let accuracy = if method == ProxMethod::Exact { 0.0 } else { a.b.unwrap_or(b) };
    let mut spec =
        ProxSpec::new(method, eta, accuracy).map_err(|e| LabError::Override(e.to_string()))?;
    if let Some(n) = a.max_inner_iters {
        spec = spec.with_max_inner_iters(n);
    }
    Ok(spec)
}

/// Turns an algorithm entry into a method, filling every parameter the entry
/// leaves open with its theoretical value from the measured constants.
pub fn resolve_method(
    a: &AlgorithmConfig,
    problem: &FederatedProblem,
    c: &ProblemConstants,
    eps: f64,
) -> Result<(Method, ParamsEcho), LabError> {
    let algo = a.validate()?;
    let m = problem.num_clients();
    let dist0 = c.x_star.norm_squared();
    let mut echo = ParamsEcho {
        algo: algo.name().to_string(),
        eta: None,
        stepsize: None,
        p: None,
        b: None,
        prox: None,
        gamma: None,
        outer_iters: None,
        inner_iters: None,
    };
    let method = match algo {
        Algorithm::Sppm => {
            let theory = sppm_params(c.mu, c.sigma_star_sq, eps, dist0)?;
            let eta = a.eta.unwrap_or(theory.eta);
            let b = svrp::optim::sppm_params_with_eta(c.mu, eta, eps, dist0)?.b;
            let prox = prox_spec(a, ProxMethod::Exact, eta, b)?;
            Method::Sppm { prox }
        }
        Algorithm::Svrp | Algorithm::SvrpComposite => {
            let theory = svrp_params(c.mu, c.delta, m, eps, dist0)?;
            let eta = a.eta.unwrap_or(theory.eta);
            let p = a.p.unwrap_or(theory.p);
            let b = svrp_params_with(c.mu, eta, p, eps, dist0)?.b;
            if algo == Algorithm::Svrp {
                Method::Svrp { prox: prox_spec(a, ProxMethod::Exact, eta, b)?, p }
            } else {
                let default = if problem.regularizer().is_none() {
                    ProxMethod::Exact
                } else {
                    ProxMethod::CompositePg
                };
                Method::SvrpComposite { prox: prox_spec(a, default, eta, b)?, p }
            }
        }
        Algorithm::Sgd => Method::Sgd {
            eta: a.stepsize.unwrap_or_else(|| sgd_default_stepsize(c.smoothness)),
        },
        Algorithm::Lsvrg => Method::Lsvrg {
            eta: a.stepsize.unwrap_or_else(|| lsvrg_default_stepsize(c.smoothness)),
            p: a.p.unwrap_or(1.0 / m as f64),
        },
        Algorithm::Scaffold => Method::Scaffold {
            eta: a.stepsize.unwrap_or_else(|| lsvrg_default_stepsize(c.smoothness)),
        },
        Algorithm::CatalyzedSvrp => {
            let x0 = Vector::zeros(problem.dim());
            let gap = problem.value(&x0)? - c.f_star;
            // ε is a squared distance; the outer count needs a function gap.
            let params = catalyst_params(c.mu, c.delta, m, c.smoothness, eps * c.mu / 2.0, gap)
                .map_err(|e| LabError::Infeasible(e.to_string()))?;
            Method::CatalyzedSvrp { params }
        }
    };
    match &method {
        Method::Sppm { prox } => {
            echo.eta = Some(prox.eta);
            echo.b = Some(prox.accuracy);
            echo.prox = Some(prox_name(prox.method));
        }
        Method::Svrp { prox, p } | Method::SvrpComposite { prox, p } => {
            echo.eta = Some(prox.eta);
            echo.p = Some(*p);
            echo.b = Some(prox.accuracy);
            echo.prox = Some(prox_name(prox.method));
        }
        Method::Sgd { eta } | Method::Scaffold { eta } => echo.stepsize = Some(*eta),
        Method::Lsvrg { eta, p } => {
            echo.stepsize = Some(*eta);
            echo.p = Some(*p);
        }
        Method::CatalyzedSvrp { params } => {
            echo.eta = Some(params.inner_eta);
            echo.p = Some(params.inner_p);
            echo.b = Some(0.0);
            echo.prox = Some("exact".into());
            echo.gamma = Some(params.gamma);
            echo.outer_iters = Some(params.outer_iters);
            echo.inner_iters = Some(params.inner_iters);
        }
    }
    Ok((method, echo))
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(algo: &str, finals: &[f64]) -> AlgoSummary {
    let mut v = finals.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    AlgoSummary {
        algo: algo.to_string(),
        runs: v.len(),
        median: quantile(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    }
}

pub fn run_file_name(algo: &str, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(format!("{algo}_seed{seed}.csv"))
}

/// Runs the experiment in memory without writing anything.
pub fn execute(
    config: &ExperimentConfig,
) -> Result<(FederatedProblem, Vec<ParamsEcho>, Vec<RunTrace>), LabError> {
    config.validate()?;
    let problem = load_problem(config)?;
    let consts = problem.constants(CONSTANTS_TOL)?.clone();
    let mut methods = Vec::new();
    let mut echoes = Vec::new();
    for a in &config.algorithms {
        let (method, echo) = resolve_method(a, &problem, &consts, config.eps)?;
        methods.push(method);
        echoes.push(echo);
    }
    let jobs: Vec<(usize, u64)> = (0..methods.len())
        .flat_map(|i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let mut opts = SimOptions::new(config.budget, seed);
            opts.record_cadence = config.record_cadence;
            opts.charge_initial_sync = config.charge_initial_sync;
            log::info!("running {} with seed {seed}", methods[i].algorithm());
            simulate(methods[i].clone(), &problem, &opts)
        })
        .collect::<svrp::Result<Vec<_>>>()?;
    Ok((problem, echoes, traces))
}

/// Runs the experiment and writes traces, summary, report and plot.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let (problem, parameters, traces) = execute(config)?;
    let consts = problem.constants(CONSTANTS_TOL)?;
    let out = &config.output_dir;
    fs::create_dir_all(out.join("runs"))?;

    let mut runs = Vec::with_capacity(traces.len());
    for t in &traces {
        let algo = t.algorithm.name();
        let rel = run_file_name(algo, t.seed);
        let mut w = BufWriter::new(File::create(out.join(&rel))?);
        t.write_csv(&mut w)?;
        w.flush()?;
        let last = t.last().copied();
        runs.push(RunRecord {
            algo: algo.to_string(),
            seed: t.seed,
            csv: rel,
            final_sq_dist: last.map_or(f64::NAN, |s| s.sq_dist),
            final_subopt: last.map_or(f64::NAN, |s| s.subopt),
            comm_steps: t.ledger.total(),
            iterations: t.iterations,
        });
        if last.is_none() {
            log::warn!("{algo} seed {}: budget too small for any iteration", t.seed);
        }
    }

    let summary: Vec<AlgoSummary> = parameters
        .iter()
        .map(|p| {
            let finals: Vec<f64> = runs
                .iter()
                .filter(|r| r.algo == p.algo)
                .map(|r| r.final_sq_dist)
                .collect();
            summarize(&p.algo, &finals)
        })
        .collect();
    let mut w = BufWriter::new(File::create(out.join("summary.csv"))?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for s in &summary {
        writeln!(w, "{},{},{:e},{:e},{:e},{:e}", s.algo, s.runs, s.median, s.q1, s.q3, s.iqr)?;
    }
    w.flush()?;

    let report = ExperimentReport {
        name: config.name.clone(),
        constants: ConstantsEcho::new(&problem, consts),
        parameters,
        runs,
        summary,
        config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| LabError::Data(e.to_string()))?;
    fs::write(out.join("report.json"), json + "\n")?;
    plot::write_plot(out, &report, config.per_seed_lines)?;
    Ok(report)
}
