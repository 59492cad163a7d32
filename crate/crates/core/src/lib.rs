//! Task pricing for a pool of gig-workers.
//!
//! Workers accept a task offer (hours, wage) according to a logit model on a
//! linear utility. A receding-horizon controller chooses offers that drive a
//! scalar workload below a target with a prescribed violation probability:
//! a deterministic LP is solved, the candidate is checked by sampling, and the
//! LP is tightened until the sample-based check passes.
//!
//! Modules map onto the pipeline:
//!
//! - [`worker_model`]: utility, acceptance probabilities, sampling, hour caps
//! - [`plant`]: workload dynamics
//! - [`lp_solver`]: dense two-phase simplex and the per-worker planning LP
//! - [`verifier`]: randomized feasibility verification with a confidence bound
//! - [`controller`]: the solve/verify/tighten loop and closed-loop simulation
//! - [`calibration`]: least-squares identification from survey data
//! - [`harness`]: experiment configuration, Monte-Carlo batches, export

pub mod calibration;
pub mod controller;
pub mod error;
pub mod harness;
pub mod lp_solver;
pub mod plant;
pub mod rng;
pub mod verifier;
pub mod worker_model;

pub use calibration::{FittedModel, SurveyPoint};
pub use controller::{ControlDecision, MpcConfig, Policy, Trajectory};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentReport};
pub use lp_solver::{LinearProgram, LpSolution, LpStatus, OfferPlan};
pub use plant::{PlantModel, WorkloadState};
pub use verifier::{GroupSampling, VerificationOutcome, VerifierConfig};
pub use worker_model::{TaskOffer, WorkerParams, WorkerPopulation};
