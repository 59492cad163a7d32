use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::controller::{run_closed_loop, ClosedLoopOptions, Policy, Trajectory};
use crate::error::Result;
use crate::rng::{self, tag};
use crate::verifier::TERMINAL_TOL;
use crate::worker_model::{sample_population, WorkerPopulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: Policy,
    pub runs: usize,
    /// Runs with `x(K) > x_ref`.
    pub violations: usize,
    pub failed_runs: Vec<RunFailure>,
    /// `x(K)` per completed run, in run order.
    pub final_workloads: Vec<f64>,
    pub histogram: Vec<Bin>,
    /// Mean number of tightening steps per decision.
    pub mean_tighten_iters: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<(usize, Trajectory)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub per_policy_seconds: Vec<(Policy, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Policy arms of the same run share the pool and the random streams.
    pub paired: bool,
    /// Seed of each run's pool.
    pub population_seeds: Vec<u64>,
    pub policies: Vec<PolicyReport>,
    /// Wall-clock figures; kept out of the serialized report so that it is
    /// a pure function of the configuration.
    #[serde(skip)]
    pub timing: Option<Timing>,
}

impl ExperimentReport {
    pub fn policy(&self, policy: Policy) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    pub fn has_failures(&self) -> bool {
        self.policies.iter().any(|p| !p.failed_runs.is_empty())
    }
}

fn population_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    if cfg.fixed_population {
        rng::derive(cfg.master_seed, &[tag::POPULATION])
    } else {
        rng::derive(cfg.master_seed, &[tag::RUN, run as u64, tag::POPULATION])
    }
}

/// The pool used in run `run`.
pub fn run_population(cfg: &ExperimentConfig, run: usize) -> Result<WorkerPopulation> {
    match &cfg.nu_values {
        Some(values) => WorkerPopulation::from_offsets(cfg.kappa, cfg.lambda, values),
        None => {
            let mut r = rng::SimRng::seed_from_u64(population_seed(cfg, run));
            sample_population(cfg.kappa, cfg.lambda, cfg.nu_mean, cfg.n, &mut r)
        }
    }
}

/// Unit-width bins shared by all series, covering `[floor(min), floor(max) + 1)`.
pub fn histogram(series: &[&[f64]]) -> Vec<Vec<Bin>> {
    let all = series.iter().flat_map(|s| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return series.iter().map(|_| Vec::new()).collect();
    }
    let lo = lo.floor();
    let bins = (hi.floor() - lo) as usize + 1;
    series
        .iter()
        .map(|s| {
            let mut counts = vec![0usize; bins];
            for v in s.iter() {
                counts[((v.floor() - lo) as usize).min(bins - 1)] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .map(|(i, count)| Bin { left: lo + i as f64, right: lo + i as f64 + 1.0, count })
                .collect()
        })
        .collect()
}

type RunResult = Vec<std::result::Result<Trajectory, String>>;

fn simulate_run(cfg: &ExperimentConfig, run: usize) -> (RunResult, Vec<f64>) {
    let seed = rng::derive(cfg.master_seed, &[tag::RUN, run as u64]);
    let plant = cfg.plant();
    let mpc = cfg.mpc();
    let pop = run_population(cfg, run);
    let mut secs = Vec::with_capacity(cfg.policies.len());
    let results = cfg
        .policies
        .iter()
        .map(|&policy| {
            let start = Instant::now();
            let r = pop.as_ref().map_err(|e| e.to_string()).and_then(|pop| {
                run_closed_loop(cfg.initial_state(), &plant, pop, &mpc, cfg.steps, policy, seed, ClosedLoopOptions::default())
                    .map_err(|e| e.to_string())
            });
            secs.push(start.elapsed().as_secs_f64());
            r
        })
        .collect();
    (results, secs)
}

/// Runs every policy on `cfg.runs` independently seeded runs. Per-run
/// failures are recorded in the report rather than aborting the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let per_run: Vec<(RunResult, Vec<f64>)> = if cfg.parallel {
        (0..cfg.runs).into_par_iter().map(|r| simulate_run(cfg, r)).collect()
    } else {
        (0..cfg.runs).map(|r| simulate_run(cfg, r)).collect()
    };

    let mut policies = Vec::with_capacity(cfg.policies.len());
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for (pi, &policy) in cfg.policies.iter().enumerate() {
        let mut final_workloads = Vec::new();
        let mut failed_runs = Vec::new();
        let mut trajectories = Vec::new();
        let (mut iters, mut decisions) = (0usize, 0usize);
        for (run, (results, _)) in per_run.iter().enumerate() {
            match &results[pi] {
                Ok(t) => {
                    final_workloads.push(t.final_workload());
                    iters += t.records.iter().map(|r| r.l_star).sum::<usize>();
                    decisions += t.records.len();
                    if cfg.record_trajectories {
                        trajectories.push((run, t.clone()));
                    }
                }
                Err(message) => failed_runs.push(RunFailure { run, message: message.clone() }),
            }
        }
        let violations = final_workloads.iter().filter(|&&x| x > cfg.x_ref + TERMINAL_TOL).count();
        finals.push(final_workloads.clone());
        policies.push(PolicyReport {
            policy,
            runs: cfg.runs,
            violations,
            failed_runs,
            final_workloads,
            histogram: Vec::new(),
            mean_tighten_iters: if decisions == 0 { 0.0 } else { iters as f64 / decisions as f64 },
            trajectories: cfg.record_trajectories.then_some(trajectories),
        });
    }
    let series: Vec<&[f64]> = finals.iter().map(Vec::as_slice).collect();
    for (p, bins) in policies.iter_mut().zip(histogram(&series)) {
        p.histogram = bins;
    }

    let timing = Timing {
        total_seconds: started.elapsed().as_secs_f64(),
        per_policy_seconds: cfg
            .policies
            .iter()
            .enumerate()
            .map(|(pi, &p)| (p, per_run.iter().map(|(_, s)| s[pi]).sum()))
            .collect(),
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        paired: cfg.policies.len() > 1,
        population_seeds: (0..cfg.runs).map(|r| population_seed(cfg, r)).collect(),
        policies,
        timing: Some(timing),
    })
}
