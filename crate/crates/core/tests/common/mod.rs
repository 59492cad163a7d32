//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Naive product form of the pool's rejection probability.
pub fn reject_prob(hours: f64, wage: f64, kappa: f64, lambda: f64, nus: &[f64]) -> f64 {
    nus.iter().map(|nu| 1.0 / (1.0 + (kappa * hours + lambda * wage + nu).exp())).product()
}

/// Probability that the terminal workload exceeds `x_ref + tol`, summed over
/// all `2^N` acceptance patterns.
#[allow(clippy::too_many_arguments)]
pub fn violation_prob(
    hours: &[f64],
    wages: &[f64],
    x0: f64,
    growth: f64,
    inflows: &[f64],
    x_ref: f64,
    tol: f64,
    kappa: f64,
    lambda: f64,
    nus: &[f64],
) -> f64 {
    let n = hours.len();
    let reject: Vec<f64> = (0..n).map(|t| reject_prob(hours[t], wages[t], kappa, lambda, nus)).collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut x = x0;
        let mut weight = 1.0;
        for t in 0..n {
            let accepted = mask & (1 << t) != 0;
            weight *= if accepted { 1.0 - reject[t] } else { reject[t] };
            x = growth * x - if accepted { hours[t] } else { 0.0 } + inflows[t];
        }
        if x > x_ref + tol {
            total += weight;
        }
    }
    total
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), f);
    }
}

/// Minimum of `c.z` over `{z >= 0, A z <= b}` by enumerating every basic
/// solution. `None` when no vertex is feasible.
pub fn vertex_min(c: &[f64], a: &[Vec<f64>], b: &[f64], tol: f64) -> Option<(f64, Vec<f64>)> {
    let dim = c.len();
    let mut rows: Vec<Vec<f64>> = a.to_vec();
    let mut rhs: Vec<f64> = b.to_vec();
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = -1.0;
        rows.push(e);
        rhs.push(0.0);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    combinations(rows.len(), dim, &mut |idx| {
        let m = DMatrix::from_fn(dim, dim, |i, j| rows[idx[i]][j]);
        let v = DVector::from_fn(dim, |i, _| rhs[idx[i]]);
        let Some(z) = m.lu().solve(&v) else { return };
        if z.iter().any(|x| !x.is_finite()) {
            return;
        }
        let feasible = rows.iter().zip(&rhs).all(|(r, &bi)| {
            let lhs: f64 = r.iter().zip(z.iter()).map(|(x, y)| x * y).sum();
            lhs <= bi + tol * (1.0 + bi.abs())
        });
        if !feasible {
            return;
        }
        let obj: f64 = c.iter().zip(z.iter()).map(|(x, y)| x * y).sum();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, z.iter().copied().collect()));
        }
    });
    best
}

/// Planning instance in JPY and hours, written out independently of the
/// library's LP construction.
#[derive(Debug, Clone)]
pub struct PlanInstance {
    pub kappa: f64,
    pub lambda: f64,
    pub nu: f64,
    pub n: usize,
    pub epsilon: f64,
    pub growth: f64,
    pub inflow: f64,
    pub x0: f64,
    pub x_ref: f64,
    pub horizon: usize,
    pub hour_limit: Option<f64>,
}

impl PlanInstance {
    /// Cheapest total wage, by vertex enumeration over `(p, u)`.
    pub fn oracle_objective(&self) -> Option<f64> {
        let n = self.horizon;
        let thr = (self.epsilon.powf(-1.0 / self.n as f64) - 1.0).ln();
        // u <= -(lambda p + nu - thr) / kappa
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut free = self.x0;
        for _ in 0..n {
            free = self.growth * free + self.inflow;
        }
        let mut terminal = vec![0.0; 2 * n];
        for t in 0..n {
            terminal[n + t] = -self.growth.powi((n - 1 - t) as i32);
        }
        a.push(terminal);
        b.push(self.x_ref - free);
        for t in 0..n {
            let mut row = vec![0.0; 2 * n];
            row[t] = self.lambda / self.kappa;
            row[n + t] = 1.0;
            a.push(row);
            b.push((self.nu - thr) / -self.kappa);
            if let Some(h) = self.hour_limit {
                let mut cap = vec![0.0; 2 * n];
                cap[n + t] = 1.0;
                a.push(cap);
                b.push(h);
            }
        }
        let mut c = vec![1.0; n];
        c.extend(vec![0.0; n]);
        vertex_min(&c, &a, &b, 1e-9).map(|(o, _)| o)
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
