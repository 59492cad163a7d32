//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are `min c.x` subject to `A x <= b`, `x >= 0`. Rows with negative
//! right-hand side get an artificial variable and are handled in phase 1.
//! Bland's rule (lowest-index entering column, lowest-index leaving basic
//! variable on ratio ties) makes the pivot sequence, and therefore the
//! returned vertex, a pure function of the input.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// Optional column labels used when dumping the program.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram { objective, rows: Vec::new(), rhs: Vec::new(), names: Vec::new() }
    }

    /// Adds `row . x <= rhs`.
    pub fn le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.rows.push(row);
        self.rhs.push(rhs);
        self
    }

    /// Adds `row . x >= rhs`.
    pub fn ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le(row.into_iter().map(|a| -a).collect(), -rhs)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::invalid("objective", "program has no variables"));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(Error::LengthMismatch { expected: self.rows.len(), actual: self.rhs.len() });
        }
        if let Some(row) = self.rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch { expected: n, actual: row.len() });
        }
        let finite = self.objective.iter().chain(self.rhs.iter()).chain(self.rows.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("lp", "entries must be finite"));
        }
        Ok(())
    }

    fn name(&self, j: usize) -> String {
        self.names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
    }

    /// Largest violation of `A x <= b` or `x >= 0`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b);
        let bounds = x.iter().map(|v| -v);
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Plain-text tableau dump.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.num_vars();
        write!(f, "{:>6}", "")?;
        for j in 0..n {
            write!(f, " {:>12}", self.name(j))?;
        }
        writeln!(f, " {:>3} {:>12}", "", "rhs")?;
        write!(f, "{:>6}", "min")?;
        for c in &self.objective {
            write!(f, " {c:>12.6}")?;
        }
        writeln!(f)?;
        for (i, (row, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            write!(f, "{:>6}", format!("r{i}"))?;
            for a in row {
                write!(f, " {a:>12.6}")?;
            }
            writeln!(f, " {:>3} {b:>12.6}", "<=")?;
        }
        writeln!(f, "{:>6} all >= 0", "bounds")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal solution; empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    // m rows of width cols+1; last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    // Reduced costs, last entry holds -z.
    cost: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v *= inv);
        self.rows[r][c] = 1.0;
        let (before, rest) = self.rows.split_at_mut(r);
        let (pivot_row, after) = rest.split_first_mut().expect("pivot row exists");
        for row in before.iter_mut().chain(after.iter_mut()).map(|r| r.as_mut_slice()).chain(std::iter::once(self.cost.as_mut_slice())) {
            let factor = row[c];
            if factor != 0.0 {
                row.iter_mut().zip(pivot_row.iter()).for_each(|(v, p)| *v -= factor * p);
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn set_cost(&mut self, costs: &[f64]) {
        self.cost = vec![0.0; self.cols + 1];
        self.cost[..costs.len()].copy_from_slice(costs);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = self.cost[b];
            if cb != 0.0 {
                self.cost.iter_mut().zip(&self.rows[r]).for_each(|(v, a)| *v -= cb * a);
            }
        }
    }

    /// Runs Bland pivots over columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Outcome {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.cost[j] < -COST_TOL) else {
                return Outcome::Optimal;
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[rhs] / row[c];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_TOL
                                || (ratio <= lratio + PIVOT_TOL && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Outcome::Unbounded,
            }
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_constraints();
    let negative: Vec<usize> = (0..m).filter(|&i| lp.rhs[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = n + m + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = n + m;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        let sign = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        row[..n].iter_mut().zip(&lp.rows[i]).for_each(|(v, a)| *v = sign * a);
        row[n + i] = sign;
        row[cols] = sign * lp.rhs[i];
        if sign < 0.0 {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, cost: Vec::new(), basis, cols };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].iter_mut().for_each(|v| *v = 1.0);
        tab.set_cost(&phase1);
        tab.optimize(cols);
        let infeasibility = -tab.cost[cols];
        let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeasibility > FEAS_TOL * scale {
            return Ok(LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::NAN });
        }
        // Pivot zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= n + m {
                match (0..n + m).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut costs = lp.objective.clone();
    costs.resize(cols, 0.0);
    tab.set_cost(&costs);
    if let Outcome::Unbounded = tab.optimize(n + m) {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective: f64::NEG_INFINITY });
    }

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rows[r][cols].max(0.0);
        }
    }
    let objective = lp.evaluate(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}
