//! Receding-horizon controller: per-worker solve/verify/tighten loop,
//! minimum-wage selection across workers, the unverified baseline, and the
//! closed loop that applies only the first offer of each plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp_solver::{solve_problem2, OfferPlan};
use crate::plant::{step, PlantModel, WorkloadState};
use crate::rng::{self, tag};
use crate::verifier::{sample_count, verify, VerificationOutcome, VerifierConfig};
use crate::worker_model::{sample_group_acceptance, TaskOffer, WorkerPopulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub x_ref: f64,
    /// Initial tightening level.
    pub epsilon0: f64,
    /// Tightening factor applied after each failed verification.
    pub gamma: f64,
    pub verifier: VerifierConfig,
    pub max_tighten_iters: usize,
    /// Optional hard cap on hours per step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_hours_per_step: Option<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 3,
            x_ref: 10.0,
            epsilon0: 0.01,
            gamma: 0.5,
            verifier: VerifierConfig::default(),
            max_tighten_iters: 50,
            max_hours_per_step: None,
        }
    }
}

impl MpcConfig {
    pub fn eta(&self) -> f64 {
        self.verifier.eta
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !self.x_ref.is_finite() {
            return Err(Error::invalid("x_ref", "must be finite"));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            return Err(Error::invalid("epsilon0", format!("must lie in (0, 1), got {}", self.epsilon0)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if let Some(h) = self.max_hours_per_step {
            if h.is_nan() || h < 0.0 {
                return Err(Error::invalid("max_hours_per_step", "must be non-negative"));
            }
        }
        self.verifier.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Verified,
    Baseline,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Verified => "verified",
            Policy::Baseline => "baseline",
        })
    }
}

/// One solve/verify round of the tightening loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub epsilon: f64,
    pub objective: f64,
    pub outcome: VerificationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    /// First step of `plan`; the only part that is applied.
    pub offer: TaskOffer,
    pub plan: OfferPlan,
    /// Final verification; `None` for the baseline.
    pub outcome: Option<VerificationOutcome>,
    pub worker_index: usize,
    pub epsilon_final: f64,
    /// Number of tightening steps taken, `l*`.
    pub tighten_iters: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempts: Vec<Attempt>,
}

impl ControlDecision {
    fn new(plan: OfferPlan, outcome: Option<VerificationOutcome>, worker_index: usize, tighten_iters: usize) -> Self {
        ControlDecision {
            offer: plan.first_offer(),
            epsilon_final: plan.epsilon_used,
            plan,
            outcome,
            worker_index,
            tighten_iters,
            attempts: Vec::new(),
        }
    }
}

// (objective, worker index) ordering used for minimum-wage selection.
fn beats(objective: f64, index: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((o, i)) => objective < o || (objective == o && index < i),
    }
}

/// Solve/verify/tighten for worker `worker_index`, abandoning the search as
/// soon as the candidate cannot beat `bound`. Candidates only get more
/// expensive as epsilon shrinks, so abandoning never changes the selection.
fn tighten_loop(
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
    worker_index: usize,
    seed: u64,
    bound: Option<(f64, usize)>,
) -> Result<Option<ControlDecision>> {
    let worker = pop
        .workers()
        .get(worker_index)
        .ok_or_else(|| Error::invalid("worker_index", format!("{worker_index} out of range for {} workers", pop.len())))?;
    let n = pop.len();
    let mut epsilon = cfg.epsilon0;
    let mut attempts = Vec::new();
    for l in 0..=cfg.max_tighten_iters {
        let plan = solve_problem2(state, model, worker, n, cfg, epsilon)?;
        if !beats(plan.objective, worker_index, bound) {
            return Ok(None);
        }
        // Verification iterations are numbered from 1.
        let iteration = l as u64 + 1;
        let vseed = rng::derive(seed, &[tag::VERIFY, worker_index as u64, l as u64]);
        let outcome = verify(&plan, iteration, state, model, pop, cfg.x_ref, &cfg.verifier, vseed)?;
        attempts.push(Attempt { epsilon, objective: plan.objective, outcome });
        if outcome.accepted {
            let mut d = ControlDecision::new(plan, Some(outcome), worker_index, l);
            d.attempts = attempts;
            return Ok(Some(d));
        }
        if l == cfg.max_tighten_iters {
            return Err(Error::VerificationExhausted { worker_index, iterations: l, epsilon, last: outcome });
        }
        epsilon *= cfg.gamma;
    }
    unreachable!("loop returns on its last iteration")
}

/// Verified plan for a single worker's candidate; the chance constraint is
/// checked against the whole pool.
pub fn plan_verified(
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
    worker_index: usize,
    seed: u64,
) -> Result<ControlDecision> {
    cfg.validate()?;
    Ok(tighten_loop(state, model, pop, cfg, worker_index, seed, None)?.expect("unbounded search always decides"))
}

/// Runs the verified loop for every worker and keeps the cheapest plan;
/// ties go to the lowest worker index.
pub fn select_offer(
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
    seed: u64,
) -> Result<ControlDecision> {
    cfg.validate()?;
    // Eager workers first: they give cheap plans early and tighten the bound.
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| pop.workers()[b].nu.total_cmp(&pop.workers()[a].nu).then(a.cmp(&b)));

    let mut best: Option<ControlDecision> = None;
    let mut last_err = None;
    for i in order {
        let bound = best.as_ref().map(|d| (d.plan.objective, d.worker_index));
        match tighten_loop(state, model, pop, cfg, i, seed, bound) {
            Ok(Some(d)) => best = Some(d),
            Ok(None) => {}
            Err(e @ Error::VerificationExhausted { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.expect("non-empty population"))
}

/// Unverified controller: one LP per worker at `epsilon0`, cheapest wins.
pub fn plan_baseline(
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
) -> Result<ControlDecision> {
    cfg.validate()?;
    let mut best: Option<ControlDecision> = None;
    for (i, w) in pop.workers().iter().enumerate() {
        let plan = solve_problem2(state, model, w, pop.len(), cfg, cfg.epsilon0)?;
        if beats(plan.objective, i, best.as_ref().map(|d| (d.plan.objective, d.worker_index))) {
            best = Some(ControlDecision::new(plan, None, i, 0));
        }
    }
    Ok(best.expect("population is non-empty"))
}

pub fn decide(
    policy: Policy,
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
    seed: u64,
) -> Result<ControlDecision> {
    match policy {
        Policy::Verified => select_offer(state, model, pop, cfg, seed),
        Policy::Baseline => plan_baseline(state, model, pop, cfg),
    }
}

/// How the pool's response is produced in the closed loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcceptanceMode {
    #[default]
    Sample,
    /// Every offer is taken.
    Always,
    /// No offer is ever taken.
    Never,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopOptions {
    pub acceptance: AcceptanceMode,
    /// Stop early once the workload is at or below this level.
    pub stop_below: Option<f64>,
}

/// Per-step decision record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub x: f64,
    pub worker_index: usize,
    pub u_hat: f64,
    pub p: f64,
    pub beta: bool,
    pub epsilon_final: f64,
    pub l_star: usize,
    #[serde(rename = "M_l")]
    pub m_l: Option<u64>,
    pub failures: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub policy: Policy,
    /// `x(0..=K)`.
    pub workload: Vec<f64>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_workload(&self) -> f64 {
        *self.workload.last().expect("trajectory holds the initial state")
    }
}

/// Simulates `steps` steps of the receding-horizon loop. Planning at step
/// `k` and the pool's draws at step `k` use streams derived from `(seed, k)`.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    initial: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    cfg: &MpcConfig,
    steps: usize,
    policy: Policy,
    seed: u64,
    opts: ClosedLoopOptions,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    cfg.validate()?;
    model.validate()?;
    let mut state = initial;
    let mut workload = vec![state.x];
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        if opts.stop_below.is_some_and(|t| state.x <= t) {
            break;
        }
        let k = state.k as u64;
        let d = decide(policy, state, model, pop, cfg, rng::derive(seed, &[tag::VERIFY, k]))?;
        let beta = match opts.acceptance {
            AcceptanceMode::Sample => sample_group_acceptance(d.offer, pop, &mut rng::stream(seed, &[tag::BETA, k])),
            AcceptanceMode::Always => true,
            AcceptanceMode::Never => false,
        };
        records.push(StepRecord {
            k: state.k,
            x: state.x,
            worker_index: d.worker_index,
            u_hat: d.offer.hours,
            p: d.offer.wage,
            beta,
            epsilon_final: d.epsilon_final,
            l_star: d.tighten_iters,
            m_l: d.outcome.map(|o| o.trials),
            failures: d.outcome.map(|o| o.failures),
        });
        state = step(state, if beta { d.offer.hours } else { 0.0 }, model)?;
        workload.push(state.x);
    }
    Ok(Trajectory { policy, workload, records })
}

/// Scheduled trial count for the verification that accepted at `l*`.
pub fn trials_at(l_star: usize, cfg: &VerifierConfig) -> u64 {
    sample_count(l_star as u64 + 1, cfg)
}
