//! Deterministic planning LP for one worker at one tightening level, and the
//! simplex solver behind it.

mod problem2;
mod simplex;

pub use problem2::{build_problem2, solve_problem2, OfferPlan, PlanningProblem, WAGE_SCALE};
pub use simplex::{solve_lp, LinearProgram, LpSolution, LpStatus};
