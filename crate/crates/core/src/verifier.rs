//! Sample-based feasibility check of a candidate plan against the terminal
//! chance constraint `Pr(x(k+N) > x_ref) <= eta`.
//!
//! At iteration `l` the check draws `M_l` independent acceptance scenarios
//! and passes when at most `m_l = floor(b l)` of them miss the target. With
//!
//! ```text
//! M_l = ceil( (m_l + L + sqrt(2 m_l L)) / eta ),   L = ln(zeta(alpha) l^alpha / delta)
//! ```
//!
//! a plan whose violation probability exceeds `eta` passes at any iteration
//! with probability at most `delta` (summed over all iterations).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp_solver::OfferPlan;
use crate::plant::{PlantModel, WorkloadState};
use crate::rng::{tag, TrialRng};
use crate::worker_model::{accept_prob, group_reject_prob, sample_group_acceptance, WorkerPopulation};

/// Slack on the terminal comparison; LP solutions land on the target only
/// up to rounding.
pub const TERMINAL_TOL: f64 = 1e-6;

/// How the pool's decision is drawn in a trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSampling {
    /// One Bernoulli draw per worker per step.
    PerWorker,
    /// One draw per step against the pool's exact rejection probability.
    /// Same distribution as `PerWorker`, `n` times fewer draws.
    #[default]
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Tolerated violation probability.
    pub eta: f64,
    /// Probability of certifying a plan that violates more often than `eta`.
    pub delta: f64,
    /// Exponent of the per-iteration confidence split `l^alpha`.
    pub alpha: f64,
    /// Slope of the allowed-failure schedule `m_l = floor(b l)`.
    pub b: f64,
    #[serde(default)]
    pub sampling: GroupSampling,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig { eta: 0.05, delta: 1e-8, alpha: 2.0, b: 1.0, sampling: GroupSampling::Aggregate }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must exceed 1, got {}", self.alpha)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid("b", format!("must be positive, got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub accepted: bool,
    /// Verification iteration `l >= 1`.
    pub iteration: u64,
    /// Scheduled trial count `M_l`.
    pub trials: u64,
    /// Trials actually run; below `trials` when stopped early.
    pub evaluated: u64,
    pub failures: u64,
    /// Allowed failures `m_l`.
    pub level: u64,
}

/// `m_l = floor(b l)`.
pub fn level_count(l: u64, b: f64) -> u64 {
    (b * l as f64).floor() as u64
}

// B_2, B_4, ..., B_16
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta for real `alpha > 1`: exact at 2, otherwise a direct sum of
/// the first terms plus an Euler-Maclaurin tail.
pub fn zeta(alpha: f64) -> f64 {
    if alpha == 2.0 {
        return std::f64::consts::PI * std::f64::consts::PI / 6.0;
    }
    const K: usize = 64;
    let head: f64 = (1..K).map(|k| (k as f64).powf(-alpha)).sum();
    let kf = K as f64;
    let mut tail = kf.powf(1.0 - alpha) / (alpha - 1.0) + 0.5 * kf.powf(-alpha);
    // sum_j B_2j / (2j)! * alpha (alpha+1) ... (alpha+2j-2) * K^(-alpha-2j+1)
    let mut rising = alpha; // alpha (alpha+1) ... (alpha+2j-2)
    let mut factorial = 2.0; // (2j)!
    let mut power = kf.powf(-alpha - 1.0);
    for (j, b2j) in BERNOULLI_EVEN.iter().enumerate() {
        tail += b2j / factorial * rising * power;
        let j = j as f64 + 1.0;
        rising *= (alpha + 2.0 * j - 1.0) * (alpha + 2.0 * j);
        factorial *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
        power /= kf * kf;
    }
    head + tail
}

/// `M_l`, the number of trials at iteration `l`.
pub fn sample_count(l: u64, cfg: &VerifierConfig) -> u64 {
    assert!(l >= 1, "verification iterations start at 1");
    let m = level_count(l, cfg.b) as f64;
    let log_term = (zeta(cfg.alpha) * (l as f64).powf(cfg.alpha) / cfg.delta).ln();
    ((m + log_term + (2.0 * m * log_term).sqrt()) / cfg.eta).ceil() as u64
}

/// One sampled scenario: draws the pool's decision at every step of the plan
/// and reports whether the terminal workload meets the target.
pub fn run_trial<R: Rng + ?Sized>(
    plan: &OfferPlan,
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    x_ref: f64,
    rng: &mut R,
) -> Result<bool> {
    let accepted: Vec<bool> = plan.offers().map(|o| sample_group_acceptance(o, pop, rng)).collect();
    let terminal = model.predict_terminal_from(state.k, state.x, &plan.hours, &accepted)?;
    Ok(terminal <= x_ref + TERMINAL_TOL)
}

/// Precomputed acceptance probabilities for repeated trials of one plan.
struct TrialModel<'a> {
    plan: &'a OfferPlan,
    state: WorkloadState,
    model: &'a PlantModel,
    x_ref: f64,
    sampling: GroupSampling,
    // Aggregate: per-step rejection probability. PerWorker: per-step,
    // per-worker acceptance probabilities, flattened.
    probs: Vec<f64>,
    n: usize,
}

impl<'a> TrialModel<'a> {
    fn new(
        plan: &'a OfferPlan,
        state: WorkloadState,
        model: &'a PlantModel,
        pop: &WorkerPopulation,
        x_ref: f64,
        sampling: GroupSampling,
    ) -> Self {
        let probs = match sampling {
            GroupSampling::Aggregate => plan.offers().map(|o| group_reject_prob(o, pop)).collect(),
            GroupSampling::PerWorker => plan
                .offers()
                .flat_map(|o| pop.workers().iter().map(move |w| accept_prob(o, w)))
                .collect(),
        };
        TrialModel { plan, state, model, x_ref, sampling, probs, n: pop.len() }
    }

    fn succeeds(&self, rng: &mut impl Rng) -> bool {
        let mut x = self.state.x;
        for (t, &h) in self.plan.hours.iter().enumerate() {
            let accepted = match self.sampling {
                GroupSampling::Aggregate => rng.random::<f64>() >= self.probs[t],
                GroupSampling::PerWorker => {
                    let mut any = false;
                    for &p in &self.probs[t * self.n..(t + 1) * self.n] {
                        any |= rng.random::<f64>() < p;
                    }
                    any
                }
            };
            x = self.model.growth * x - if accepted { h } else { 0.0 } + self.model.inflow_at(self.state.k + t);
        }
        x <= self.x_ref + TERMINAL_TOL
    }

    fn trial(&self, seed: u64, j: u64) -> bool {
        self.succeeds(&mut TrialRng::new(seed, &[tag::TRIAL, j]))
    }
}

fn check_inputs(plan: &OfferPlan, l: u64, cfg: &VerifierConfig) -> Result<()> {
    cfg.validate()?;
    if l == 0 {
        return Err(Error::invalid("l", "verification iterations start at 1"));
    }
    if plan.horizon() == 0 || plan.wages.len() != plan.horizon() {
        return Err(Error::LengthMismatch { expected: plan.horizon(), actual: plan.wages.len() });
    }
    Ok(())
}

/// Runs up to `M_l` trials, trial `j` seeded from `(seed, j)`, and stops as
/// soon as the failure count exceeds `m_l`.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    plan: &OfferPlan,
    l: u64,
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    x_ref: f64,
    cfg: &VerifierConfig,
    seed: u64,
) -> Result<VerificationOutcome> {
    check_inputs(plan, l, cfg)?;
    let level = level_count(l, cfg.b);
    let trials = sample_count(l, cfg);
    let tm = TrialModel::new(plan, state, model, pop, x_ref, cfg.sampling);
    let mut failures = 0;
    let mut evaluated = 0;
    for j in 0..trials {
        evaluated += 1;
        if !tm.trial(seed, j) {
            failures += 1;
            if failures > level {
                break;
            }
        }
    }
    Ok(VerificationOutcome { accepted: failures <= level, iteration: l, trials, evaluated, failures, level })
}

/// Like [`verify`] but always runs all `M_l` trials, in parallel. The
/// decision matches [`verify`] for every seed; `failures` is the full count.
#[allow(clippy::too_many_arguments)]
pub fn verify_full(
    plan: &OfferPlan,
    l: u64,
    state: WorkloadState,
    model: &PlantModel,
    pop: &WorkerPopulation,
    x_ref: f64,
    cfg: &VerifierConfig,
    seed: u64,
) -> Result<VerificationOutcome> {
    check_inputs(plan, l, cfg)?;
    let level = level_count(l, cfg.b);
    let trials = sample_count(l, cfg);
    let tm = TrialModel::new(plan, state, model, pop, x_ref, cfg.sampling);
    let failures = (0..trials).into_par_iter().filter(|&j| !tm.trial(seed, j)).count() as u64;
    Ok(VerificationOutcome { accepted: failures <= level, iteration: l, trials, evaluated: trials, failures, level })
}
