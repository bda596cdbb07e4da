//! Client–server simulation with exact communication accounting.
//!
//! One communication is one vector exchanged between the server and a single
//! client. Broadcasts expand to `M` unit events; notifications that carry no
//! vector cost nothing. The simulator drives the step functions of
//! [`crate::optim`] and [`crate::catalyst`] with a single seeded
//! `ChaCha8Rng`, so a simulated run follows exactly the same trajectory as
//! calling the steps by hand with a generator seeded the same way.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalyst::{CatalystParams, CatalystState};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;
use crate::optim::{
    lsvrg_step, scaffold_step, sgd_step, sppm_step, svrp_composite_step, svrp_step, ScaffoldState,
    SppmState, StepOutcome, SvrpState,
};
use crate::problem::FederatedProblem;
use crate::prox::{ProxEngine, ProxSpec};

/// Kind of message in the client–server protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommKind {
    SendModel,
    ReturnModel,
    BroadcastAnchor,
    UploadGradient,
    BroadcastFullGradient,
    /// Control variate sent with the model (SCAFFOLD).
    SendControl,
    /// Updated control variate returned by the client (SCAFFOLD).
    ReturnControl,
    Notify,
}

impl CommKind {
    pub fn unit_cost(self) -> u64 {
        match self {
            CommKind::Notify => 0,
            _ => 1,
        }
    }
}

/// Recipient or sender on the client side of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Client(usize),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    /// Iteration during which the message was sent; preamble events use 0.
    pub step: usize,
    pub kind: CommKind,
    pub client: Party,
    pub cost: u64,
}

/// Append-only log of messages with running totals.
#[derive(Debug, Clone)]
pub struct CommLedger {
    num_clients: usize,
    events: Vec<CommEvent>,
    keep_events: bool,
    total: u64,
    /// Histogram: per-iteration cost → number of iterations with that cost.
    per_iteration: BTreeMap<u64, usize>,
}

impl CommLedger {
    pub fn new(num_clients: usize) -> Self {
        Self {
            num_clients,
            events: Vec::new(),
            keep_events: true,
            total: 0,
            per_iteration: BTreeMap::new(),
        }
    }

    /// Keeps totals and the histogram only.
    pub fn totals_only(num_clients: usize) -> Self {
        Self {
            keep_events: false,
            ..Self::new(num_clients)
        }
    }

    fn push(&mut self, event: CommEvent) {
        self.total += event.cost;
        if self.keep_events {
            self.events.push(event);
        }
    }

    /// One message between the server and client `m`.
    pub fn unicast(&mut self, step: usize, kind: CommKind, m: usize) -> u64 {
        let cost = kind.unit_cost();
        self.push(CommEvent {
            step,
            kind,
            client: Party::Client(m),
            cost,
        });
        cost
    }

    /// A message to or from every client, charged as `M` unit events. A
    /// zero-cost notification is logged once for all clients.
    pub fn broadcast(&mut self, step: usize, kind: CommKind) -> u64 {
        if kind.unit_cost() == 0 {
            self.push(CommEvent {
                step,
                kind,
                client: Party::All,
                cost: 0,
            });
            return 0;
        }
        (0..self.num_clients)
            .map(|m| self.unicast(step, kind, m))
            .sum()
    }

    /// Anchor broadcast, gradient uploads and full-gradient broadcast.
    pub fn anchor_round(&mut self, step: usize) -> u64 {
        self.broadcast(step, CommKind::BroadcastAnchor)
            + self.broadcast(step, CommKind::UploadGradient)
            + self.broadcast(step, CommKind::BroadcastFullGradient)
    }

    fn close_iteration(&mut self, cost: u64) {
        *self.per_iteration.entry(cost).or_default() += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn events(&self) -> &[CommEvent] {
        &self.events
    }

    pub fn per_iteration(&self) -> &BTreeMap<u64, usize> {
        &self.per_iteration
    }

    /// Number of completed iterations recorded in the histogram.
    pub fn iterations(&self) -> usize {
        self.per_iteration.values().sum()
    }
}

/// Algorithm family, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Sppm,
    Svrp,
    SvrpComposite,
    Sgd,
    Lsvrg,
    Scaffold,
    CatalyzedSvrp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Sppm,
        Algorithm::Svrp,
        Algorithm::SvrpComposite,
        Algorithm::Sgd,
        Algorithm::Lsvrg,
        Algorithm::Scaffold,
        Algorithm::CatalyzedSvrp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sppm => "sppm",
            Algorithm::Svrp => "svrp",
            Algorithm::SvrpComposite => "svrp-composite",
            Algorithm::Sgd => "sgd",
            Algorithm::Lsvrg => "lsvrg",
            Algorithm::Scaffold => "scaffold",
            Algorithm::CatalyzedSvrp => "catalyzed-svrp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Whether the run starts with the `3M` anchor synchronization.
    pub fn has_initial_sync(self) -> bool {
        matches!(
            self,
            Algorithm::Svrp
                | Algorithm::SvrpComposite
                | Algorithm::Lsvrg
                | Algorithm::CatalyzedSvrp
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An algorithm together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Sppm { prox: ProxSpec },
    Svrp { prox: ProxSpec, p: f64 },
    SvrpComposite { prox: ProxSpec, p: f64 },
    Sgd { eta: f64 },
    Lsvrg { eta: f64, p: f64 },
    Scaffold { eta: f64 },
    CatalyzedSvrp { params: CatalystParams },
}

impl Method {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Method::Sppm { .. } => Algorithm::Sppm,
            Method::Svrp { .. } => Algorithm::Svrp,
            Method::SvrpComposite { .. } => Algorithm::SvrpComposite,
            Method::Sgd { .. } => Algorithm::Sgd,
            Method::Lsvrg { .. } => Algorithm::Lsvrg,
            Method::Scaffold { .. } => Algorithm::Scaffold,
            Method::CatalyzedSvrp { .. } => Algorithm::CatalyzedSvrp,
        }
    }

    fn max_iteration_cost(&self, m: u64) -> u64 {
        match self {
            Method::Sppm { .. } | Method::Sgd { .. } => 2,
            Method::Scaffold { .. } => 4,
            Method::Svrp { .. } | Method::SvrpComposite { .. } | Method::Lsvrg { .. } => 2 + 3 * m,
            Method::CatalyzedSvrp { .. } => 2 + 6 * m,
        }
    }
}

/// `E[cost of one iteration]`: `2 + 3pM` for the SVRP family and L-SVRG,
/// `2` for SPPM and SGD, `4` for SCAFFOLD. For Catalyzed SVRP this is the
/// inner-iteration cost without the per-outer-step resynchronization.
pub fn expected_comm_per_iter(algorithm: Algorithm, p: f64, num_clients: usize) -> f64 {
    match algorithm {
        Algorithm::Sppm | Algorithm::Sgd => 2.0,
        Algorithm::Scaffold => 4.0,
        Algorithm::Svrp
        | Algorithm::SvrpComposite
        | Algorithm::Lsvrg
        | Algorithm::CatalyzedSvrp => 2.0 + 3.0 * p * num_clients as f64,
    }
}

/// Cost `3M` of sending `w₀` to every client, collecting their gradients and
/// broadcasting the average.
pub fn initial_sync_cost(num_clients: usize) -> u64 {
    3 * num_clients as u64
}

/// Knobs of [`simulate`].
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Communication budget; the last iteration that fits is the last run.
    pub budget: u64,
    pub seed: u64,
    /// Record every `record_cadence` iterations (and at the start and end).
    pub record_cadence: usize,
    /// Charge the `3M` preamble for anchor-based methods.
    pub charge_initial_sync: bool,
    /// Stop after this many iterations even if budget remains.
    pub max_iters: Option<usize>,
    /// Starting point; the origin when absent.
    pub x0: Option<Vector>,
    /// Keep individual events in the ledger.
    pub keep_events: bool,
}

impl SimOptions {
    pub fn new(budget: u64, seed: u64) -> Self {
        Self {
            budget,
            seed,
            record_cadence: 1,
            charge_initial_sync: true,
            max_iters: None,
            x0: None,
            keep_events: false,
        }
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub comm_steps: u64,
    pub iter: usize,
    pub sq_dist: f64,
    pub subopt: f64,
}

/// Samples, final state and ledger of a simulated run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub samples: Vec<TraceSample>,
    pub final_point: Vector,
    pub iterations: usize,
    pub ledger: CommLedger,
    pub wall_time: Duration,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    /// Writes `comm_steps,iter,sq_dist,subopt,seed,algo` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{:e},{:e},{},{}",
                s.comm_steps, s.iter, s.sq_dist, s.subopt, self.seed, self.algorithm
            )?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "comm_steps,iter,sq_dist,subopt,seed,algo";

/// Iterate state of any supported method.
#[derive(Debug, Clone)]
pub enum RunnerState {
    Plain(SppmState),
    Anchored(SvrpState),
    Scaffold(ScaffoldState),
    Catalyst(Box<CatalystState>),
}

/// A method bound to a problem, advanced one iteration at a time while the
/// ledger is charged. Exposed so callers can interleave their own probes.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    method: Method,
    problem: &'a FederatedProblem,
    engine: Option<ProxEngine>,
    state: RunnerState,
    rng: ChaCha8Rng,
    iter: usize,
}

impl<'a> Runner<'a> {
    pub fn new(method: Method, problem: &'a FederatedProblem, x0: Vector, seed: u64) -> Result<Self> {
        check_dim(problem.dim(), x0.len())?;
        let engine = match &method {
            Method::Sppm { prox } | Method::Svrp { prox, .. } | Method::SvrpComposite { prox, .. } => {
                Some(ProxEngine::new(*prox))
            }
            _ => None,
        };
        let state = match &method {
            Method::Sppm { .. } | Method::Sgd { .. } => RunnerState::Plain(SppmState::new(x0)?),
            Method::Svrp { .. } | Method::SvrpComposite { .. } | Method::Lsvrg { .. } => {
                RunnerState::Anchored(SvrpState::new(problem, x0)?)
            }
            Method::Scaffold { .. } => RunnerState::Scaffold(ScaffoldState::new(problem, x0)?),
            Method::CatalyzedSvrp { params } => {
                RunnerState::Catalyst(Box::new(CatalystState::new(problem, *params, x0)?))
            }
        };
        if let Method::Sgd { eta } | Method::Lsvrg { eta, .. } | Method::Scaffold { eta } = method {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParameter(format!("stepsize {eta} must be ≥ 0")));
            }
        }
        Ok(Self {
            method,
            problem,
            engine,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            iter: 0,
        })
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn state(&self) -> &RunnerState {
        &self.state
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    /// The point reported for this method: the iterate, or the inner SVRP
    /// iterate for Catalyst.
    pub fn point(&self) -> &Vector {
        match &self.state {
            RunnerState::Plain(s) => &s.x,
            RunnerState::Anchored(s) => &s.x,
            RunnerState::Scaffold(s) => &s.x,
            RunnerState::Catalyst(c) => c.point(),
        }
    }

    /// Runs one iteration and charges its messages; returns the cost.
    pub fn step(&mut self, ledger: &mut CommLedger) -> Result<u64> {
        let k = self.iter;
        let engine = self.engine.as_ref();
        let rng = &mut self.rng;
        let (outcome, resync): (StepOutcome, bool) = match (&self.method, &mut self.state) {
            (Method::Sppm { .. }, RunnerState::Plain(s)) => {
                (sppm_step(s, self.problem, engine.expect("prox"), rng)?, false)
            }
            (Method::Sgd { eta }, RunnerState::Plain(s)) => {
                (sgd_step(s, self.problem, *eta, rng)?, false)
            }
            (Method::Svrp { p, .. }, RunnerState::Anchored(s)) => {
                (svrp_step(s, self.problem, engine.expect("prox"), *p, rng)?, false)
            }
            (Method::SvrpComposite { p, .. }, RunnerState::Anchored(s)) => (
                svrp_composite_step(s, self.problem, engine.expect("prox"), *p, rng)?,
                false,
            ),
            (Method::Lsvrg { eta, p }, RunnerState::Anchored(s)) => {
                (lsvrg_step(s, self.problem, *eta, *p, rng)?, false)
            }
            (Method::Scaffold { eta }, RunnerState::Scaffold(s)) => {
                (scaffold_step(s, self.problem, *eta, rng)?, false)
            }
            (Method::CatalyzedSvrp { .. }, RunnerState::Catalyst(c)) => {
                let step = c.step(rng)?;
                (step.inner, step.outer_completed)
            }
            _ => unreachable!("runner state always matches its method"),
        };
        let m = outcome.client;
        let mut cost = ledger.unicast(k, CommKind::SendModel, m);
        if matches!(self.method, Method::Scaffold { .. }) {
            cost += ledger.unicast(k, CommKind::SendControl, m);
            cost += ledger.unicast(k, CommKind::ReturnModel, m);
            cost += ledger.unicast(k, CommKind::ReturnControl, m);
        } else {
            cost += ledger.unicast(k, CommKind::ReturnModel, m);
        }
        if outcome.anchor_refreshed {
            cost += ledger.broadcast(k, CommKind::Notify);
            cost += ledger.anchor_round(k);
        }
        if resync {
            cost += ledger.anchor_round(k);
        }
        ledger.close_iteration(cost);
        self.iter += 1;
        Ok(cost)
    }

    fn finished(&self) -> bool {
        matches!(&self.state, RunnerState::Catalyst(c) if c.finished())
    }
}

/// Runs `method` until the next iteration would overrun the budget.
///
/// Distances and suboptimality are measured against the problem's cached
/// constants, so the problem must admit them.
pub fn simulate(method: Method, problem: &FederatedProblem, opts: &SimOptions) -> Result<RunTrace> {
    let consts = problem.constants(1e-10)?;
    simulate_against(method, problem, opts, &consts.x_star.clone(), consts.f_star)
}

/// [`simulate`] with an explicit reference solution.
pub fn simulate_against(
    method: Method,
    problem: &FederatedProblem,
    opts: &SimOptions,
    x_star: &Vector,
    f_star: f64,
) -> Result<RunTrace> {
    check_dim(problem.dim(), x_star.len())?;
    let start = Instant::now();
    let algorithm = method.algorithm();
    let m = problem.num_clients();
    let x0 = opts.x0.clone().unwrap_or_else(|| Vector::zeros(problem.dim()));
    let mut ledger = if opts.keep_events {
        CommLedger::new(m)
    } else {
        CommLedger::totals_only(m)
    };
    let max_cost = method.max_iteration_cost(m as u64);
    let mut runner = Runner::new(method, problem, x0, opts.seed)?;
    let cadence = opts.record_cadence.max(1);

    let sample = |runner: &Runner<'_>, ledger: &CommLedger| -> Result<TraceSample> {
        let x = runner.point();
        Ok(TraceSample {
            comm_steps: ledger.total(),
            iter: runner.iterations(),
            sq_dist: (x - x_star).norm_squared(),
            subopt: problem.value(x)? - f_star,
        })
    };

    if opts.charge_initial_sync && algorithm.has_initial_sync() {
        if initial_sync_cost(m) > opts.budget {
            log::warn!("budget {} is below the {}-message initial sync", opts.budget, 3 * m);
            return Ok(RunTrace {
                algorithm,
                seed: opts.seed,
                samples: Vec::new(),
                final_point: runner.point().clone(),
                iterations: 0,
                ledger,
                wall_time: start.elapsed(),
            });
        }
        ledger.anchor_round(0);
    }
    let mut samples = vec![sample(&runner, &ledger)?];
    let limit = opts.max_iters.unwrap_or(usize::MAX);
    while runner.iterations() < limit && !runner.finished() {
        if ledger.total() + max_cost <= opts.budget {
            runner.step(&mut ledger)?;
        } else {
            let (saved_runner, saved_ledger) = (runner.clone(), ledger.clone());
            runner.step(&mut ledger)?;
            if ledger.total() > opts.budget {
                runner = saved_runner;
                ledger = saved_ledger;
                break;
            }
        }
        if runner.iterations() % cadence == 0 {
            samples.push(sample(&runner, &ledger)?);
        }
    }
    if samples.last().map(|s| s.iter) != Some(runner.iterations()) {
        samples.push(sample(&runner, &ledger)?);
    }
    if runner.iterations() == 0 {
        log::warn!("budget {} does not cover a single iteration", opts.budget);
    }
    Ok(RunTrace {
        algorithm,
        seed: opts.seed,
        iterations: runner.iterations(),
        final_point: runner.point().clone(),
        samples,
        ledger,
        wall_time: start.elapsed(),
    })
}
