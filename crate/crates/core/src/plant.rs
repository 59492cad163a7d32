//! Scalar workload dynamics `x(k+1) = A x(k) - u(k) + d(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// Per-step growth of untouched workload (`A >= 1`).
    pub growth: f64,
    /// Workload added per step.
    pub inflow: f64,
    /// Optional time-varying inflow indexed by absolute step; steps past its
    /// end fall back to `inflow`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow_schedule: Option<Vec<f64>>,
}

impl Default for PlantModel {
    fn default() -> Self {
        PlantModel { growth: 1.0, inflow: 5.0, inflow_schedule: None }
    }
}

impl PlantModel {
    pub fn new(growth: f64, inflow: f64) -> Result<Self> {
        let m = PlantModel { growth, inflow, inflow_schedule: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.growth.is_finite() && self.growth >= 1.0) {
            return Err(Error::invalid("growth", format!("must be finite and >= 1, got {}", self.growth)));
        }
        let finite_nonneg = |d: f64| d.is_finite() && d >= 0.0;
        if !finite_nonneg(self.inflow) {
            return Err(Error::invalid("inflow", format!("must be finite and non-negative, got {}", self.inflow)));
        }
        if let Some(s) = &self.inflow_schedule {
            if !s.iter().copied().all(finite_nonneg) {
                return Err(Error::invalid("inflow_schedule", "entries must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn inflow_at(&self, k: usize) -> f64 {
        self.inflow_schedule
            .as_ref()
            .and_then(|s| s.get(k).copied())
            .unwrap_or(self.inflow)
    }

    /// Weight of effort at horizon offset `t` on the terminal state:
    /// `A^(N-1-t)`, for `t = 0..N`.
    pub fn terminal_weights(&self, horizon: usize) -> Vec<f64> {
        (0..horizon).map(|t| self.growth.powi((horizon - 1 - t) as i32)).collect()
    }

    /// Terminal workload after `horizon` steps from `(k, x0)` with no work
    /// done: `A^N x0 + sum_t A^(N-1-t) d(k+t)`.
    pub fn free_response(&self, k: usize, x0: f64, horizon: usize) -> f64 {
        let weights = self.terminal_weights(horizon);
        self.growth.powi(horizon as i32) * x0
            + weights.iter().enumerate().map(|(t, w)| w * self.inflow_at(k + t)).sum::<f64>()
    }

    /// Iterates the dynamics with `u(t) = beta(t) * hours(t)` starting at
    /// absolute step `k`.
    pub fn predict_terminal_from(&self, k: usize, x0: f64, hours: &[f64], accepted: &[bool]) -> Result<f64> {
        if hours.len() != accepted.len() {
            return Err(Error::LengthMismatch { expected: hours.len(), actual: accepted.len() });
        }
        if hours.is_empty() {
            return Err(Error::invalid("hours", "horizon must be at least 1"));
        }
        Ok(hours
            .iter()
            .zip(accepted)
            .enumerate()
            .fold(x0, |x, (t, (&h, &b))| self.growth * x - if b { h } else { 0.0 } + self.inflow_at(k + t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadState {
    pub x: f64,
    pub k: usize,
}

pub fn step(state: WorkloadState, actual_hours: f64, model: &PlantModel) -> Result<WorkloadState> {
    if actual_hours.is_nan() || actual_hours < 0.0 {
        return Err(Error::invalid("actual_hours", format!("must be non-negative, got {actual_hours}")));
    }
    Ok(WorkloadState {
        x: model.growth * state.x - actual_hours + model.inflow_at(state.k),
        k: state.k + 1,
    })
}

/// Terminal workload after applying `hours` with acceptance pattern
/// `accepted`, starting at step 0.
pub fn predict_terminal(x0: f64, hours: &[f64], accepted: &[bool], model: &PlantModel) -> Result<f64> {
    model.predict_terminal_from(0, x0, hours, accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plant(a: f64) -> PlantModel {
        PlantModel::new(a, 5.0).unwrap()
    }

    #[test]
    fn step_examples() {
        let s = WorkloadState { x: 30.0, k: 0 };
        assert_eq!(step(s, 25.0, &plant(1.0)).unwrap(), WorkloadState { x: 10.0, k: 1 });
        assert_eq!(step(s, 0.0, &plant(1.0)).unwrap().x, 35.0);
        assert!((step(s, 25.0, &plant(1.1)).unwrap().x - 13.0).abs() < 1e-12);
        assert!(step(s, -1.0, &plant(1.0)).is_err());
    }

    #[test]
    fn terminal_examples() {
        let p = plant(1.0);
        assert_eq!(predict_terminal(30.0, &[25.0], &[true], &p).unwrap(), 10.0);
        assert_eq!(predict_terminal(30.0, &[12.0, 12.0, 11.0], &[true; 3], &p).unwrap(), 10.0);
        let g = plant(1.2);
        let idle = predict_terminal(30.0, &[100.0, 3.0, 7.0], &[false; 3], &g).unwrap();
        let expect = 1.2f64.powi(3) * 30.0 + 5.0 * (1.0 + 1.2 + 1.44);
        assert!((idle - expect).abs() < 1e-12);
        assert!(predict_terminal(30.0, &[1.0, 2.0], &[true], &p).is_err());
    }

    #[test]
    fn schedule_overrides_constant_inflow() {
        let m = PlantModel { growth: 1.0, inflow: 5.0, inflow_schedule: Some(vec![1.0, 2.0]) };
        assert_eq!(m.inflow_at(0), 1.0);
        assert_eq!(m.inflow_at(1), 2.0);
        assert_eq!(m.inflow_at(2), 5.0);
        assert_eq!(m.predict_terminal_from(1, 0.0, &[0.0, 0.0], &[true, true]).unwrap(), 7.0);
    }

    #[test]
    fn rejects_shrinking_plant() {
        assert!(PlantModel::new(0.9, 5.0).is_err());
        assert!(PlantModel::new(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_matches_iteration(
            a in 1.0f64..1.5,
            d in 0.0f64..10.0,
            x0 in -50.0f64..50.0,
            plan in prop::collection::vec((0.0f64..20.0, any::<bool>()), 1..=10),
        ) {
            let m = PlantModel::new(a, d).unwrap();
            let (hours, beta): (Vec<f64>, Vec<bool>) = plan.into_iter().unzip();
            let n = hours.len();
            let iterated = predict_terminal(x0, &hours, &beta, &m).unwrap();

            let mut state = WorkloadState { x: x0, k: 0 };
            for (h, b) in hours.iter().zip(&beta) {
                state = step(state, if *b { *h } else { 0.0 }, &m).unwrap();
            }
            prop_assert!((state.x - iterated).abs() <= 1e-9 * (1.0 + iterated.abs()));

            let w = m.terminal_weights(n);
            let closed = m.free_response(0, x0, n)
                - hours.iter().zip(&beta).zip(&w).map(|((h, b), w)| if *b { w * h } else { 0.0 }).sum::<f64>();
            prop_assert!((closed - iterated).abs() <= 1e-9 * (1.0 + iterated.abs()));
        }

        #[test]
        fn more_accepted_effort_lowers_terminal(
            hours in prop::collection::vec(0.0f64..20.0, 1..=6),
            idx in 0usize..6,
            bump in 0.01f64..5.0,
        ) {
            let m = PlantModel::new(1.1, 5.0).unwrap();
            let idx = idx % hours.len();
            let beta = vec![true; hours.len()];
            let base = predict_terminal(30.0, &hours, &beta, &m).unwrap();
            let mut more = hours.clone();
            more[idx] += bump;
            let after = predict_terminal(30.0, &more, &beta, &m).unwrap();
            let coeff = m.growth.powi((hours.len() - 1 - idx) as i32);
            prop_assert!(after < base);
            prop_assert!((base - after - coeff * bump).abs() < 1e-9);
        }
    }
}
