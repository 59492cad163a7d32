use serde::{Deserialize, Serialize};

use super::simplex::{solve_lp, LinearProgram, LpStatus};
use crate::controller::MpcConfig;
use crate::error::{Error, Result};
use crate::plant::{PlantModel, WorkloadState};
use crate::worker_model::{acceptance_threshold, TaskOffer, WorkerParams};

/// Wages enter the LP in thousands of JPY; hours and wage variables then
/// have comparable magnitudes.
pub const WAGE_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferPlan {
    pub hours: Vec<f64>,
    /// JPY.
    pub wages: Vec<f64>,
    /// Total wage over the horizon, JPY.
    pub objective: f64,
    pub epsilon_used: f64,
}

impl OfferPlan {
    pub fn horizon(&self) -> usize {
        self.hours.len()
    }

    pub fn offer(&self, t: usize) -> TaskOffer {
        TaskOffer { hours: self.hours[t], wage: self.wages[t] }
    }

    pub fn first_offer(&self) -> TaskOffer {
        self.offer(0)
    }

    pub fn offers(&self) -> impl Iterator<Item = TaskOffer> + '_ {
        (0..self.horizon()).map(|t| self.offer(t))
    }
}

/// The planning LP together with what is needed to map its solution back to
/// an [`OfferPlan`].
///
/// Variables are `[p'(0..N), u(0..N)]` with `p' = WAGE_SCALE * p`. Rows are
/// the terminal-workload constraint under full acceptance followed by one
/// hour cap `u(t) - slope p'(t) <= intercept` per step, then optional
/// per-step hour limits.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    pub lp: LinearProgram,
    pub horizon: usize,
    pub epsilon: f64,
    /// Hours allowed at zero wage: `(nu - ln(eps^(-1/n) - 1)) / -kappa`.
    pub intercept: f64,
    /// Extra hours allowed per JPY: `lambda / -kappa`.
    pub hours_per_jpy: f64,
    /// Work needed under full acceptance: free response minus target.
    pub required: f64,
    pub growth: f64,
    pub hour_limit: Option<f64>,
    inflows: Vec<f64>,
    x0: f64,
    x_ref: f64,
}

pub fn build_problem2(
    state: WorkloadState,
    model: &PlantModel,
    worker: &WorkerParams,
    n: usize,
    cfg: &MpcConfig,
    epsilon: f64,
) -> Result<PlanningProblem> {
    worker.validate()?;
    model.validate()?;
    let horizon = cfg.horizon;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let threshold = acceptance_threshold(epsilon, n)?;
    let intercept = (worker.nu - threshold) / -worker.kappa;
    let hours_per_jpy = worker.lambda / -worker.kappa;
    let slope = hours_per_jpy / WAGE_SCALE;

    let weights = model.terminal_weights(horizon);
    let free = model.free_response(state.k, state.x, horizon);
    let required = free - cfg.x_ref;

    let mut objective = vec![1.0; horizon];
    objective.extend(std::iter::repeat_n(0.0, horizon));
    let mut lp = LinearProgram::new(objective);
    lp.names = (0..horizon).map(|t| format!("p{t}/1e3")).chain((0..horizon).map(|t| format!("u{t}"))).collect();

    let mut terminal = vec![0.0; 2 * horizon];
    terminal[horizon..].iter_mut().zip(&weights).for_each(|(v, w)| *v = -w);
    lp.le(terminal, -required);
    for t in 0..horizon {
        let mut row = vec![0.0; 2 * horizon];
        row[t] = -slope;
        row[horizon + t] = 1.0;
        lp.le(row, intercept);
    }
    if let Some(limit) = cfg.max_hours_per_step {
        for t in 0..horizon {
            let mut row = vec![0.0; 2 * horizon];
            row[horizon + t] = 1.0;
            lp.le(row, limit);
        }
    }

    Ok(PlanningProblem {
        lp,
        horizon,
        epsilon,
        intercept,
        hours_per_jpy,
        required,
        growth: model.growth,
        hour_limit: cfg.max_hours_per_step,
        inflows: (0..horizon).map(|t| model.inflow_at(state.k + t)).collect(),
        x0: state.x,
        x_ref: cfg.x_ref,
    })
}

impl PlanningProblem {
    /// Cheapest wage that admits `hours` under the hour cap.
    pub fn wage_for(&self, hours: f64) -> f64 {
        ((hours - self.intercept) / self.hours_per_jpy).max(0.0)
    }

    pub fn solve(&self) -> Result<OfferPlan> {
        let sol = solve_lp(&self.lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::LpStatus(sol.status));
        }
        let n = self.horizon;
        let wages: Vec<f64> = sol.x[..n].iter().map(|p| (p / WAGE_SCALE).max(0.0)).collect();
        let hours: Vec<f64> = sol.x[n..].iter().map(|u| u.max(0.0)).collect();
        let objective = wages.iter().sum();
        let plan = OfferPlan { hours, wages, objective, epsilon_used: self.epsilon };
        if self.growth == 1.0 {
            let steady = self.reach_and_hold();
            if (steady.objective - plan.objective).abs() <= 1e-7 * (1.0 + plan.objective.abs()) {
                return Ok(steady);
            }
        }
        Ok(plan)
    }

    /// With `A = 1` every step removes workload at the same rate, so the
    /// optimum is a whole face of the polytope. Pick the member that brings
    /// the predicted workload down to the target as soon as possible and then
    /// holds it there, with no effort beyond what the target needs.
    #[allow(clippy::needless_range_loop)]
    fn reach_and_hold(&self) -> OfferPlan {
        let n = self.horizon;
        let free_hours = self.intercept.max(0.0);
        let limit = self.hour_limit.unwrap_or(f64::INFINITY);
        let mut hours = vec![0.0; n];

        if self.required > 0.0 {
            // Per-step bounds of the optimal face.
            let zero_cost = self.required <= n as f64 * free_hours.min(limit);
            let (lo, hi) = if zero_cost { (0.0, free_hours.min(limit)) } else { (free_hours, limit) };
            let mut remaining = self.required;
            let mut x = self.x0;
            for t in 0..n {
                let after = (n - 1 - t) as f64;
                let times = |v: f64| if after == 0.0 { 0.0 } else { after * v };
                let floor = lo.max(remaining - times(hi));
                let ceil = if zero_cost { hi } else { hi.min(remaining - times(lo)) };
                let target = x + self.inflows[t] - self.x_ref;
                let h = target.clamp(floor, ceil.max(floor));
                hours[t] = h;
                remaining -= h;
                x += self.inflows[t] - h;
            }
        }

        let wages: Vec<f64> = hours.iter().map(|&h| self.wage_for(h)).collect();
        OfferPlan { objective: wages.iter().sum(), hours, wages, epsilon_used: self.epsilon }
    }
}

/// Builds and solves the planning LP for `worker` at tightening level
/// `epsilon`.
pub fn solve_problem2(
    state: WorkloadState,
    model: &PlantModel,
    worker: &WorkerParams,
    n: usize,
    cfg: &MpcConfig,
    epsilon: f64,
) -> Result<OfferPlan> {
    build_problem2(state, model, worker, n, cfg, epsilon)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::predict_terminal;
    use crate::worker_model::max_hours_bound;

    fn cfg(horizon: usize, x_ref: f64) -> MpcConfig {
        MpcConfig { horizon, x_ref, ..MpcConfig::default() }
    }

    fn start() -> WorkloadState {
        WorkloadState { x: 30.0, k: 0 }
    }

    #[test]
    fn dimensions() {
        let p = build_problem2(start(), &PlantModel::default(), &WorkerParams::survey_default(), 100, &cfg(3, 10.0), 0.01)
            .unwrap();
        assert_eq!(p.lp.num_vars(), 6);
        assert_eq!(p.lp.num_constraints(), 4);
    }

    #[test]
    fn satisfied_target_gives_zero_plan() {
        let plan = solve_problem2(start(), &PlantModel::default(), &WorkerParams::survey_default(), 100, &cfg(3, 45.0), 0.01)
            .unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.hours.iter().chain(&plan.wages).all(|&v| v == 0.0));
    }

    #[test]
    fn one_step_closed_form() {
        let w = WorkerParams::survey_default();
        let plan = solve_problem2(start(), &PlantModel::default(), &w, 100, &cfg(1, 10.0), 0.01).unwrap();
        // p = (25 * 7.253 + 1.216 + ln(0.01^(-1/100) - 1)) / 0.006385
        let expect = (25.0 * 7.253 + 1.216 - 3.054_876_345_843_363) / 0.006385;
        assert!((plan.objective - expect).abs() < 1e-6 * expect, "{} vs {}", plan.objective, expect);
        assert!((plan.objective - 28_110.59).abs() < 0.01);
        assert!((plan.hours[0] - 25.0).abs() < 1e-9);
        assert_eq!(plan.epsilon_used, 0.01);
    }

    #[test]
    fn growing_plant_front_loads() {
        let w = WorkerParams::survey_default();
        let model = PlantModel::new(1.1, 5.0).unwrap();
        let plan = solve_problem2(start(), &model, &w, 100, &cfg(2, 10.0), 0.01).unwrap();
        // Only the free zero-wage hours are scheduled late.
        assert_eq!(plan.wages[1], 0.0);
        assert!(plan.wages[0] > 0.0);
        let terminal = predict_terminal(30.0, &plan.hours, &[true; 2], &model).unwrap();
        assert!((terminal - 10.0).abs() < 1e-6);
    }

    #[test]
    fn steady_plant_reaches_target_then_holds() {
        let w = WorkerParams::survey_default();
        let plan = solve_problem2(start(), &PlantModel::default(), &w, 100, &cfg(3, 10.0), 0.01).unwrap();
        assert!((plan.hours[0] - 25.0).abs() < 1e-9);
        assert!((plan.hours[1] - 5.0).abs() < 1e-9);
        assert!((plan.hours[2] - 5.0).abs() < 1e-9);
        let steady = solve_problem2(WorkloadState { x: 10.0, k: 4 }, &PlantModel::default(), &w, 100, &cfg(3, 10.0), 0.01)
            .unwrap();
        assert!(steady.hours.iter().all(|h| (h - 5.0).abs() < 1e-9));
        assert!(steady.wages.windows(2).all(|p| (p[0] - p[1]).abs() < 1e-9));
    }

    #[test]
    fn plans_respect_caps_and_target() {
        let w = WorkerParams::survey_default().with_nu(-0.8);
        for (x, a) in [(30.0, 1.0), (12.0, 1.0), (0.0, 1.0), (30.0, 1.05), (-4.0, 1.2)] {
            let model = PlantModel::new(a, 5.0).unwrap();
            let plan = solve_problem2(WorkloadState { x, k: 0 }, &model, &w, 100, &cfg(3, 10.0), 0.003).unwrap();
            let terminal = predict_terminal(x, &plan.hours, &[true; 3], &model).unwrap();
            assert!(terminal <= 10.0 + 1e-6);
            for (h, p) in plan.hours.iter().zip(&plan.wages) {
                assert!(*h <= max_hours_bound(*p, &w, 0.003, 100).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn hour_limit_can_make_it_infeasible() {
        let w = WorkerParams::survey_default();
        let c = MpcConfig { max_hours_per_step: Some(5.0), ..cfg(3, 10.0) };
        let err = solve_problem2(start(), &PlantModel::default(), &w, 100, &c, 0.01).unwrap_err();
        assert!(matches!(err, Error::LpStatus(LpStatus::Infeasible)));
        let c = MpcConfig { max_hours_per_step: Some(15.0), ..cfg(3, 10.0) };
        let plan = solve_problem2(start(), &PlantModel::default(), &w, 100, &c, 0.01).unwrap();
        assert!(plan.hours.iter().all(|&h| h <= 15.0 + 1e-9));
        assert!((plan.hours.iter().sum::<f64>() - 35.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonnegative_kappa() {
        let w = WorkerParams { kappa: 0.0, lambda: 0.01, nu: 0.0 };
        assert!(build_problem2(start(), &PlantModel::default(), &w, 100, &cfg(3, 10.0), 0.01).is_err());
    }
}
