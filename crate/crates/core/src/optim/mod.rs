//! Single-step state machines for SPPM, SVRP, composite SVRP and the
//! gradient baselines, together with theorem-driven parameters.

mod params;
mod steps;

pub use params::{
    eta_cap, iterate_recurrence, lsvrg_default_stepsize, recurrence_bound, sgd_default_stepsize,
    sppm_params, sppm_params_with_eta, svrp_params, svrp_params_with, TheoremParams,
    ETA_CAP_FACTOR,
};
pub use steps::{
    lsvrg_step, lyapunov, scaffold_step, sgd_step, sppm_step, svrp_composite_step, svrp_step,
    LsvrgState, ScaffoldState, SgdState, SppmState, StepOutcome, SvrpState,
};
