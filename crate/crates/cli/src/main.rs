use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gigwms_core::calibration::{
    fit_with_respondents, read_aggregated_csv, read_raw_csv, refine_probability_space, surface_grid,
    write_surface_csv, FittedModel, DEFAULT_RESPONDENTS,
};
use gigwms_core::controller::{decide, run_closed_loop, ClosedLoopOptions};
use gigwms_core::harness::{export, run_experiment, run_population, ExperimentConfig};
use gigwms_core::lp_solver::build_problem2;
use gigwms_core::verifier::{verify, verify_full};
use gigwms_core::worker_model::PopulationFile;
use gigwms_core::{Error, OfferPlan, Policy, WorkerPopulation, WorkloadState};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gigwms", version, about = "Wage and hour planning for a gig-worker pool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the acceptance model to a survey CSV (aggregated or raw answers).
    Fit(FitArgs),
    /// Tabulate a fitted model's acceptance probability over hours and wage.
    Surface(SurfaceArgs),
    /// One planning decision for a given workload.
    Plan(PlanArgs),
    /// One closed-loop run.
    Simulate(RunArgs),
    /// Monte-Carlo batch of closed-loop runs.
    Experiment(RunArgs),
    /// Verify a candidate plan against the pool.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FitArgs {
    /// `hours_min,wage_jpy,accept_ratio` or `respondent_id,hours_min,min_wage_jpy`.
    survey: PathBuf,
    /// Model JSON; printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Respondents per cell, for ratio clipping of aggregated surveys.
    #[arg(long)]
    respondents: Option<usize>,
    /// Follow the log-odds fit with least squares on probabilities.
    #[arg(long)]
    refine: bool,
}

#[derive(Args)]
struct SurfaceArgs {
    /// Fitted-model JSON.
    model: PathBuf,
    #[arg(long, default_value = "surface.csv")]
    out: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.25, 3.0])]
    hours: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 3000.0])]
    wages: Vec<f64>,
    /// Grid points along each axis.
    #[arg(long, default_value_t = 31)]
    steps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Verified,
    Baseline,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Use one pool for every run.
    #[arg(long)]
    fixed_population: bool,
    /// Population JSON `{kappa, lambda, nu_mean, nu_values}`; overrides the config.
    #[arg(long)]
    population: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Current workload; the config's `x0` by default.
    #[arg(long)]
    x: Option<f64>,
    /// Current step.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Write the chosen LP as a plain-text tableau.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Plan JSON `{hours, wages, objective, epsilon_used}`.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Verification iteration (1-based).
    #[arg(long, default_value_t = 1)]
    iteration: u64,
    /// Run every trial instead of stopping at the first decisive failure.
    #[arg(long)]
    full: bool,
}

/// Planning failures map to exit code 2, everything else to 1.
fn is_planning_failure(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(|e| matches!(e, Error::LpStatus(_) | Error::VerificationExhausted { .. }))
}

fn load_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.population {
        let pf = PopulationFile::load(path)?;
        cfg.kappa = pf.kappa;
        cfg.lambda = pf.lambda;
        cfg.nu_mean = pf.nu_mean;
        if let Some(values) = pf.nu_values {
            cfg.n = values.len();
            cfg.nu_values = Some(values);
        }
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(p) = args.policy {
        cfg.policies = match p {
            PolicyArg::Verified => vec![Policy::Verified],
            PolicyArg::Baseline => vec![Policy::Baseline],
            PolicyArg::Both => vec![Policy::Verified, Policy::Baseline],
        };
    }
    cfg.fixed_population |= args.fixed_population;
    cfg.validate()?;
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let header = std::fs::read_to_string(&args.survey)
        .with_context(|| format!("reading {}", args.survey.display()))?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    let (points, respondents) = if header.contains("respondent_id") {
        let s = read_raw_csv(&args.survey)?;
        (s.points, args.respondents.unwrap_or(s.respondents))
    } else if header.contains("accept_ratio") {
        (read_aggregated_csv(&args.survey)?, args.respondents.unwrap_or(DEFAULT_RESPONDENTS))
    } else {
        bail!("{}: unrecognized survey header {header:?}", args.survey.display());
    };
    let mut model = fit_with_respondents(&points, respondents)?;
    if args.refine {
        model = refine_probability_space(&points, &model)?;
    }
    if !model.is_well_signed() {
        eprintln!("warning: fitted kappa = {}, lambda = {}; expected kappa < 0 < lambda", model.kappa, model.lambda);
    }
    write_or_print(args.out.as_deref(), &serde_json::to_string_pretty(&model)?)
}

fn cmd_surface(args: &SurfaceArgs) -> anyhow::Result<()> {
    let model = FittedModel::load(&args.model)?;
    if args.steps == 0 {
        bail!("--steps must be at least 1");
    }
    let grid = surface_grid(&model, (args.hours[0], args.hours[1]), (args.wages[0], args.wages[1]), args.steps, args.steps);
    write_surface_csv(&args.out, &grid)?;
    Ok(())
}

fn state_at(cfg: &ExperimentConfig, x: Option<f64>, k: usize) -> WorkloadState {
    WorkloadState { x: x.unwrap_or(cfg.x0), k }
}

fn pool(cfg: &ExperimentConfig) -> anyhow::Result<WorkerPopulation> {
    Ok(run_population(cfg, 0)?)
}

fn cmd_plan(args: &PlanArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.run)?;
    let pop = pool(&cfg)?;
    let (plant, mpc, state) = (cfg.plant(), cfg.mpc(), state_at(&cfg, args.x, args.k));
    let mut decisions = Vec::new();
    let mut dump = String::new();
    for &policy in &cfg.policies {
        let d = decide(policy, state, &plant, &pop, &mpc, cfg.master_seed)?;
        if args.dump_lp.is_some() {
            let worker = &pop.workers()[d.worker_index];
            let problem = build_problem2(state, &plant, worker, pop.len(), &mpc, d.epsilon_final)?;
            dump.push_str(&format!("# {policy}: worker {} epsilon {}\n{}\n", d.worker_index, d.epsilon_final, problem.lp));
        }
        decisions.push(json!({ "policy": policy, "decision": d }));
    }
    if let Some(path) = &args.dump_lp {
        std::fs::write(path, dump).with_context(|| format!("writing {}", path.display()))?;
    }
    write_or_print(args.run.out.as_deref(), &serde_json::to_string_pretty(&decisions)?)
}

fn cmd_simulate(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let pop = pool(&cfg)?;
    let (plant, mpc) = (cfg.plant(), cfg.mpc());
    let seed = gigwms_core::rng::derive(cfg.master_seed, &[gigwms_core::rng::tag::RUN, 0]);
    let mut lines = Vec::new();
    let mut summary = Vec::new();
    for &policy in &cfg.policies {
        let t = run_closed_loop(cfg.initial_state(), &plant, &pop, &mpc, cfg.steps, policy, seed, ClosedLoopOptions::default())?;
        for r in &t.records {
            let mut v = serde_json::to_value(r)?;
            if let Value::Object(map) = &mut v {
                map.insert("policy".into(), json!(policy));
            }
            lines.push(serde_json::to_string(&v)?);
        }
        summary.push(json!({
            "policy": policy,
            "workload": t.workload,
            "final_workload": t.final_workload(),
            "violated": t.final_workload() > cfg.x_ref + gigwms_core::verifier::TERMINAL_TOL,
        }));
    }
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("trajectory.jsonl"), lines.join("\n") + "\n")?;
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        }
        None => lines.iter().for_each(|l| println!("{l}")),
    }
    for s in &summary {
        eprintln!("{}: x(K) = {:.3}", s["policy"].as_str().unwrap_or("?"), s["final_workload"].as_f64().unwrap_or(f64::NAN));
    }
    Ok(())
}

/// Returns whether any run failed to plan.
fn cmd_experiment(args: &RunArgs) -> anyhow::Result<bool> {
    let cfg = load_config(args)?;
    let report = run_experiment(&cfg)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let files = export(&report, &dir)?;
    for p in &report.policies {
        println!(
            "{}: {} / {} runs above x_ref, {} failed, mean tightening {:.2}",
            p.policy,
            p.violations,
            p.runs,
            p.failed_runs.len(),
            p.mean_tighten_iters
        );
    }
    println!("report written to {}", files.summary.display());
    Ok(report.has_failures())
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.run)?;
    let text = std::fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let plan: OfferPlan = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.plan.display()))?;
    let pop = pool(&cfg)?;
    let (plant, mpc, state) = (cfg.plant(), cfg.mpc(), state_at(&cfg, args.x, args.k));
    let run = if args.full { verify_full } else { verify };
    let outcome = run(&plan, args.iteration, state, &plant, &pop, cfg.x_ref, &mpc.verifier, cfg.master_seed)?;
    if !outcome.accepted {
        eprintln!("plan rejected: {} failures, {} allowed", outcome.failures, outcome.level);
    }
    write_or_print(args.run.out.as_deref(), &serde_json::to_string_pretty(&outcome)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| 0),
        Command::Surface(a) => cmd_surface(a).map(|_| 0),
        Command::Plan(a) => cmd_plan(a).map(|_| 0),
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Experiment(a) => cmd_experiment(a).map(|failed| if failed { 2 } else { 0 }),
        Command::Verify(a) => cmd_verify(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_planning_failure(&e) { 2 } else { 1 })
        }
    }
}
