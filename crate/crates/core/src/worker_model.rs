//! Logit acceptance model for individual gig-workers and for a worker pool.
//!
//! Worker `i` values an offer of `hours` at `wage` with the linear utility
//! `kappa * hours + lambda * wage + nu_i` and accepts with probability
//! `sigmoid(utility)`. A pool accepts when at least one member does.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients fitted on the Tokyo food-delivery survey (hours, JPY).
pub const SURVEY_KAPPA: f64 = -7.253;
pub const SURVEY_LAMBDA: f64 = 0.006385;
pub const SURVEY_NU: f64 = -1.216;

/// Half-width of the per-worker offset distribution, expressed in JPY of
/// wage-equivalent utility: `nu_i ~ U[nu - 100 lambda, nu + 100 lambda]`.
pub const NU_HALF_WIDTH_JPY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerParams {
    /// Utility per hour of work; negative.
    pub kappa: f64,
    /// Utility per JPY of wage; positive.
    pub lambda: f64,
    /// Individual offset.
    pub nu: f64,
}

impl WorkerParams {
    pub fn new(kappa: f64, lambda: f64, nu: f64) -> Result<Self> {
        let w = WorkerParams { kappa, lambda, nu };
        w.validate()?;
        Ok(w)
    }

    /// The survey fit with the population-mean offset.
    pub fn survey_default() -> Self {
        WorkerParams { kappa: SURVEY_KAPPA, lambda: SURVEY_LAMBDA, nu: SURVEY_NU }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa < 0.0) {
            return Err(Error::invalid("kappa", format!("must be finite and negative, got {}", self.kappa)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be finite and positive, got {}", self.lambda)));
        }
        if !self.nu.is_finite() {
            return Err(Error::invalid("nu", "must be finite"));
        }
        Ok(())
    }

    pub fn with_nu(self, nu: f64) -> Self {
        WorkerParams { nu, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerPopulation {
    workers: Vec<WorkerParams>,
}

impl WorkerPopulation {
    /// Builds a pool; all members must share `kappa` and `lambda`.
    pub fn new(workers: Vec<WorkerParams>) -> Result<Self> {
        let Some(first) = workers.first() else {
            return Err(Error::invalid("workers", "population must be non-empty"));
        };
        if workers.iter().any(|w| w.kappa != first.kappa || w.lambda != first.lambda) {
            return Err(Error::invalid("workers", "kappa and lambda must be shared across the population"));
        }
        if workers.iter().any(|w| !(w.kappa.is_finite() && w.lambda.is_finite() && w.nu.is_finite())) {
            return Err(Error::invalid("workers", "coefficients must be finite"));
        }
        Ok(WorkerPopulation { workers })
    }

    pub fn from_offsets(kappa: f64, lambda: f64, offsets: &[f64]) -> Result<Self> {
        Self::new(offsets.iter().map(|&nu| WorkerParams { kappa, lambda, nu }).collect())
    }

    pub fn homogeneous(worker: WorkerParams, n: usize) -> Result<Self> {
        Self::new(vec![worker; n])
    }

    pub fn workers(&self) -> &[WorkerParams] {
        &self.workers
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.workers[0].kappa
    }

    pub fn lambda(&self) -> f64 {
        self.workers[0].lambda
    }

    pub fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.workers.iter().map(|w| w.nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOffer {
    /// Requested task hours.
    pub hours: f64,
    /// Wage in JPY.
    pub wage: f64,
}

impl TaskOffer {
    pub fn new(hours: f64, wage: f64) -> Result<Self> {
        let o = TaskOffer { hours, wage };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hours.is_finite() && self.hours >= 0.0) {
            return Err(Error::invalid("hours", format!("must be finite and non-negative, got {}", self.hours)));
        }
        if !(self.wage.is_finite() && self.wage >= 0.0) {
            return Err(Error::invalid("wage", format!("must be finite and non-negative, got {}", self.wage)));
        }
        Ok(())
    }
}

pub fn utility(offer: TaskOffer, worker: &WorkerParams) -> f64 {
    worker.kappa * offer.hours + worker.lambda * offer.wage + worker.nu
}

/// Logistic function without overflow for any finite input.
#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^v)`, stable in both tails.
#[inline]
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

pub fn accept_prob(offer: TaskOffer, worker: &WorkerParams) -> f64 {
    sigmoid(utility(offer, worker))
}

/// Probability that every worker in the pool declines.
pub fn group_reject_prob(offer: TaskOffer, pop: &WorkerPopulation) -> f64 {
    log_group_reject(offer, pop).exp()
}

/// Probability that at least one worker in the pool accepts.
pub fn group_accept_prob(offer: TaskOffer, pop: &WorkerPopulation) -> f64 {
    -log_group_reject(offer, pop).exp_m1()
}

fn log_group_reject(offer: TaskOffer, pop: &WorkerPopulation) -> f64 {
    // ln prod 1/(1+e^V) = -sum softplus(V)
    -pop.workers.iter().map(|w| softplus(utility(offer, w))).sum::<f64>()
}

/// Draws every worker's decision and reports whether anyone accepted.
///
/// All `n` draws are consumed even after the first acceptance so the number
/// of draws per call is fixed.
pub fn sample_group_acceptance<R: Rng + ?Sized>(offer: TaskOffer, pop: &WorkerPopulation, rng: &mut R) -> bool {
    let mut any = false;
    for w in &pop.workers {
        let u: f64 = rng.random();
        any |= u < accept_prob(offer, w);
    }
    any
}

/// `ln(eps^(-1/n) - 1)`, the utility level at which a single worker declines
/// with probability `eps^(1/n)`.
pub fn acceptance_threshold(epsilon: f64, n: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok((-epsilon.ln() / n as f64).exp_m1().ln())
}

/// Largest task hours at `wage` for which `worker` declines with probability
/// at most `epsilon^(1/n)`; if all `n` workers satisfy it, the pool declines
/// with probability at most `epsilon`.
pub fn max_hours_bound(wage: f64, worker: &WorkerParams, epsilon: f64, n: usize) -> Result<f64> {
    if worker.kappa.is_nan() || worker.kappa >= 0.0 {
        return Err(Error::invalid("kappa", format!("hour bound needs kappa < 0, got {}", worker.kappa)));
    }
    let threshold = acceptance_threshold(epsilon, n)?;
    Ok(-(worker.lambda * wage + worker.nu - threshold) / worker.kappa)
}

/// Samples `n` workers sharing `kappa`, `lambda` with offsets uniform on
/// `[nu_mean - 100 lambda, nu_mean + 100 lambda]`.
pub fn sample_population<R: Rng + ?Sized>(
    kappa: f64,
    lambda: f64,
    nu_mean: f64,
    n: usize,
    rng: &mut R,
) -> Result<WorkerPopulation> {
    if n == 0 {
        return Err(Error::invalid("n", "population must be non-empty"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    let half = NU_HALF_WIDTH_JPY * lambda;
    let offsets: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            nu_mean + half * (2.0 * u - 1.0)
        })
        .collect();
    WorkerPopulation::from_offsets(kappa, lambda, &offsets)
}

/// On-disk description of a worker pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFile {
    pub kappa: f64,
    pub lambda: f64,
    pub nu_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_values: Option<Vec<f64>>,
}

impl PopulationFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }

    /// Explicit offsets win; otherwise `n` offsets are sampled.
    pub fn resolve<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<WorkerPopulation> {
        match &self.nu_values {
            Some(values) => WorkerPopulation::from_offsets(self.kappa, self.lambda, values),
            None => sample_population(self.kappa, self.lambda, self.nu_mean, n, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn survey(nu: f64) -> WorkerParams {
        WorkerParams::survey_default().with_nu(nu)
    }

    #[test]
    fn utility_examples() {
        let w = survey(-1.216);
        assert_eq!(utility(TaskOffer { hours: 0.0, wage: 0.0 }, &w), -1.216);
        // -7.253 * 0.5 + 0.006385 * 500 - 1.216
        assert!((utility(TaskOffer { hours: 0.5, wage: 500.0 }, &w) - -1.65).abs() < 1e-9);
        let unit = WorkerParams { kappa: -1.0, lambda: 0.004, nu: 0.0 };
        assert!(utility(TaskOffer { hours: 1.0, wage: 1.0 / 0.004 }, &unit).abs() < 1e-12);
    }

    #[test]
    fn accept_prob_examples() {
        let zero = WorkerParams { kappa: -1.0, lambda: 1.0, nu: 0.0 };
        assert_eq!(accept_prob(TaskOffer { hours: 0.0, wage: 0.0 }, &zero), 0.5);
        let p = accept_prob(TaskOffer { hours: 0.5, wage: 500.0 }, &survey(-1.216));
        assert!((p - 0.161_108_949_576_585).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_in_the_tails() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!(sigmoid(-700.0) > 0.0);
        let mut prev = 1.0;
        for h in [1.0, 10.0, 100.0, 1e3, 1e4] {
            let p = accept_prob(TaskOffer { hours: h, wage: 0.0 }, &survey(0.0));
            assert!(p <= prev && p.is_finite());
            prev = p;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn group_of_one_matches_individual() {
        let w = survey(-0.9);
        let pop = WorkerPopulation::homogeneous(w, 1).unwrap();
        let offer = TaskOffer { hours: 1.0, wage: 1300.0 };
        assert!((group_accept_prob(offer, &pop) - accept_prob(offer, &w)).abs() < 1e-15);
    }

    #[test]
    fn group_of_two_coin_flips() {
        let w = WorkerParams { kappa: -1.0, lambda: 1.0, nu: 0.0 };
        let pop = WorkerPopulation::homogeneous(w, 2).unwrap();
        assert!((group_accept_prob(TaskOffer { hours: 0.0, wage: 0.0 }, &pop) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn group_of_hundred_matches_product() {
        let w = survey(-1.216);
        let pop = WorkerPopulation::homogeneous(w, 100).unwrap();
        let offer = TaskOffer { hours: 0.5, wage: 500.0 };
        let q = accept_prob(offer, &w);
        let mut reject = 1.0;
        for _ in 0..100 {
            reject *= 1.0 - q;
        }
        assert!((group_accept_prob(offer, &pop) - (1.0 - reject)).abs() < 1e-12);
        assert!((group_reject_prob(offer, &pop) - reject).abs() < 1e-18);
    }

    #[test]
    fn certain_and_impossible_acceptance() {
        let pop = WorkerPopulation::homogeneous(survey(-1.216), 5).unwrap();
        let mut r = rng::stream(1, &[]);
        assert!(sample_group_acceptance(TaskOffer { hours: 0.0, wage: 1e9 }, &pop, &mut r));
        assert!(!sample_group_acceptance(TaskOffer { hours: 1e6, wage: 0.0 }, &pop, &mut r));
    }

    #[test]
    fn sampling_is_deterministic() {
        let pop = WorkerPopulation::homogeneous(survey(-1.216), 100).unwrap();
        let offer = TaskOffer { hours: 2.0, wage: 1500.0 };
        let a: Vec<bool> = {
            let mut r = rng::stream(9, &[1]);
            (0..50).map(|_| sample_group_acceptance(offer, &pop, &mut r)).collect()
        };
        let b: Vec<bool> = {
            let mut r = rng::stream(9, &[1]);
            (0..50).map(|_| sample_group_acceptance(offer, &pop, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn hour_bound_examples() {
        let w = survey(-1.216);
        // ln(0.01^(-1/100) - 1) = -3.054876...
        let t = acceptance_threshold(0.01, 100).unwrap();
        assert!((t - -3.054_876_345_843_363).abs() < 1e-12);
        let bound = max_hours_bound(1000.0, &w, 0.01, 100).unwrap();
        assert!((bound - 1.133_858_588_976_06).abs() < 1e-9);

        // eps^(1/n) = 1/2 and lambda p + nu = 0 gives zero hours.
        let zero = WorkerParams { kappa: -2.0, lambda: 0.01, nu: -5.0 };
        let b = max_hours_bound(500.0, &zero, 0.25, 2).unwrap();
        assert!(b.abs() < 1e-12);
    }

    #[test]
    fn hour_bound_rejects_bad_inputs() {
        let w = survey(-1.216);
        assert!(max_hours_bound(1000.0, &w, 0.0, 100).is_err());
        assert!(max_hours_bound(1000.0, &w, 1.0, 100).is_err());
        assert!(max_hours_bound(1000.0, &w, 0.5, 0).is_err());
        let flat = WorkerParams { kappa: 0.0, ..w };
        assert!(max_hours_bound(1000.0, &flat, 0.5, 1).is_err());
    }

    #[test]
    fn population_examples() {
        let mut r = rng::stream(3, &[]);
        let flat = sample_population(SURVEY_KAPPA, 0.0, SURVEY_NU, 10, &mut r).unwrap();
        assert!(flat.offsets().all(|nu| nu == SURVEY_NU));

        let a = sample_population(SURVEY_KAPPA, SURVEY_LAMBDA, SURVEY_NU, 100, &mut rng::stream(5, &[])).unwrap();
        let b = sample_population(SURVEY_KAPPA, SURVEY_LAMBDA, SURVEY_NU, 100, &mut rng::stream(5, &[])).unwrap();
        assert_eq!(a, b);
        let half = 100.0 * SURVEY_LAMBDA;
        assert!(a.offsets().all(|nu| (nu - SURVEY_NU).abs() <= half));
        assert!(sample_population(SURVEY_KAPPA, SURVEY_LAMBDA, SURVEY_NU, 0, &mut r).is_err());
    }

    #[test]
    fn population_requires_shared_slopes() {
        let a = survey(0.0);
        let b = WorkerParams { kappa: -1.0, ..a };
        assert!(WorkerPopulation::new(vec![a, b]).is_err());
        assert!(WorkerPopulation::new(vec![]).is_err());
    }

    #[test]
    fn population_file_prefers_explicit_offsets() {
        let f = PopulationFile { kappa: SURVEY_KAPPA, lambda: SURVEY_LAMBDA, nu_mean: -1.0, nu_values: Some(vec![-1.5, -0.5]) };
        let pop = f.resolve(100, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(pop.len(), 2);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<PopulationFile>(&json).unwrap(), f);
        let sampled = PopulationFile { nu_values: None, ..f }.resolve(7, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(sampled.len(), 7);
    }
}
