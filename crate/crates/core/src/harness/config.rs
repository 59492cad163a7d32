use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{MpcConfig, Policy};
use crate::error::{Error, Result};
use crate::plant::{PlantModel, WorkloadState};
use crate::verifier::{GroupSampling, VerifierConfig};
use crate::worker_model::{SURVEY_KAPPA, SURVEY_LAMBDA, SURVEY_NU};

/// Everything needed to reproduce a batch. Defaults are the reference
/// setting: 100 workers, x(0) = 30, target 10, inflow 5, horizon 3,
/// eta = 0.05, delta = 1e-8, alpha = 2, epsilon0 = 0.01, 200 runs of 10 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kappa: f64,
    pub lambda: f64,
    pub nu_mean: f64,
    /// Pool size.
    pub n: usize,
    /// Explicit offsets; replace sampling when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_values: Option<Vec<f64>>,
    /// One pool for every run instead of a fresh pool per run.
    pub fixed_population: bool,

    pub growth: f64,
    pub inflow: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inflow_schedule: Option<Vec<f64>>,
    pub x0: f64,

    pub horizon: usize,
    pub x_ref: f64,
    pub eta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub b: f64,
    pub epsilon0: f64,
    pub gamma: f64,
    pub max_tighten_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_hours_per_step: Option<f64>,
    pub sampling: GroupSampling,

    pub runs: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub policies: Vec<Policy>,
    pub record_trajectories: bool,
    /// Spread runs over the rayon pool; results are identical either way,
    /// so the flag is not written out with the report.
    #[serde(skip_serializing)]
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mpc = MpcConfig::default();
        let v = mpc.verifier;
        let plant = PlantModel::default();
        ExperimentConfig {
            kappa: SURVEY_KAPPA,
            lambda: SURVEY_LAMBDA,
            nu_mean: SURVEY_NU,
            n: 100,
            nu_values: None,
            fixed_population: false,
            growth: plant.growth,
            inflow: plant.inflow,
            inflow_schedule: None,
            x0: 30.0,
            horizon: mpc.horizon,
            x_ref: mpc.x_ref,
            eta: v.eta,
            delta: v.delta,
            alpha: v.alpha,
            b: v.b,
            epsilon0: mpc.epsilon0,
            gamma: mpc.gamma,
            max_tighten_iters: mpc.max_tighten_iters,
            max_hours_per_step: None,
            sampling: v.sampling,
            runs: 200,
            steps: 10,
            master_seed: 0,
            policies: vec![Policy::Verified, Policy::Baseline],
            record_trajectories: false,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn plant(&self) -> PlantModel {
        PlantModel { growth: self.growth, inflow: self.inflow, inflow_schedule: self.inflow_schedule.clone() }
    }

    pub fn mpc(&self) -> MpcConfig {
        MpcConfig {
            horizon: self.horizon,
            x_ref: self.x_ref,
            epsilon0: self.epsilon0,
            gamma: self.gamma,
            verifier: VerifierConfig { eta: self.eta, delta: self.delta, alpha: self.alpha, b: self.b, sampling: self.sampling },
            max_tighten_iters: self.max_tighten_iters,
            max_hours_per_step: self.max_hours_per_step,
        }
    }

    pub fn initial_state(&self) -> WorkloadState {
        WorkloadState { x: self.x0, k: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", "at least one policy is required"));
        }
        if self.nu_values.is_none() && self.n == 0 {
            return Err(Error::invalid("n", "population must be non-empty"));
        }
        if !self.x0.is_finite() {
            return Err(Error::invalid("x0", "must be finite"));
        }
        crate::worker_model::WorkerParams::new(self.kappa, self.lambda, self.nu_mean)?;
        self.plant().validate()?;
        self.mpc().validate()
    }
}
