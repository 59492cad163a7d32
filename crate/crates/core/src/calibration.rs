//! Identification of the utility coefficients from aggregated survey answers.
//!
//! The primary fit regresses the empirical log-odds `ln(z / (1 - z))` on
//! `(hours, wage, 1)` by ordinary least squares; for noiseless data this
//! recovers the generating coefficients exactly. An optional Gauss-Newton
//! pass refines the fit on probability-space residuals.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worker_model::{sigmoid, WorkerParams};

/// Respondents assumed per cell when clipping degenerate ratios.
pub const DEFAULT_RESPONDENTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyPoint {
    /// Hours (converted from the questionnaire's minutes).
    pub hours: f64,
    /// JPY.
    pub wage: f64,
    /// Fraction of respondents accepting.
    pub accept_ratio: f64,
}

impl SurveyPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.hours.is_finite() && self.hours > 0.0) {
            return Err(Error::invalid("hours", format!("must be positive, got {}", self.hours)));
        }
        if !self.wage.is_finite() {
            return Err(Error::invalid("wage", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.accept_ratio) {
            return Err(Error::invalid("accept_ratio", format!("must lie in [0, 1], got {}", self.accept_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kappa: f64,
    pub lambda: f64,
    pub nu: f64,
    /// Sum of squared residuals in the space the fit was made in.
    pub residual: f64,
    pub point_count: usize,
}

impl FittedModel {
    /// Coefficients fitted on the Tokyo food-delivery survey.
    pub fn survey_default() -> Self {
        let w = WorkerParams::survey_default();
        FittedModel { kappa: w.kappa, lambda: w.lambda, nu: w.nu, residual: 0.0, point_count: 20 }
    }

    /// Signs match the model's assumptions (disutility of hours, utility of
    /// wage).
    pub fn is_well_signed(&self) -> bool {
        self.kappa < 0.0 && self.lambda > 0.0
    }

    pub fn worker(&self) -> WorkerParams {
        WorkerParams { kappa: self.kappa, lambda: self.lambda, nu: self.nu }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("plain struct serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Acceptance probability predicted by a fitted model.
pub fn predict_ratio(model: &FittedModel, hours: f64, wage: f64) -> f64 {
    sigmoid(model.kappa * hours + model.lambda * wage + model.nu)
}

fn logit(z: f64) -> f64 {
    (z / (1.0 - z)).ln()
}

/// Solves the symmetric 3x3 system `a x = b` by Gaussian elimination with
/// partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("non-empty range");
        if a[piv][col].abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient("normal equations are singular".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

// Columns are scaled to unit max-magnitude before forming normal equations.
struct Scaling {
    hours: f64,
    wage: f64,
}

impl Scaling {
    fn of(points: &[SurveyPoint]) -> Self {
        let max = |f: fn(&SurveyPoint) -> f64| points.iter().map(|p| f(p).abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        Scaling { hours: max(|p| p.hours), wage: max(|p| p.wage) }
    }

    fn row(&self, p: &SurveyPoint) -> [f64; 3] {
        [p.hours / self.hours, p.wage / self.wage, 1.0]
    }

    fn unscale(&self, beta: [f64; 3]) -> (f64, f64, f64) {
        (beta[0] / self.hours, beta[1] / self.wage, beta[2])
    }
}

fn check_points(points: &[SurveyPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::invalid("points", format!("need at least 3 survey points, got {}", points.len())));
    }
    points.iter().try_for_each(SurveyPoint::validate)
}

/// Log-odds least squares with the default clipping constant.
pub fn fit(points: &[SurveyPoint]) -> Result<FittedModel> {
    fit_with_respondents(points, DEFAULT_RESPONDENTS)
}

/// Log-odds least squares; ratios are clipped to
/// `[1/(2R), 1 - 1/(2R)]` for `R` respondents per cell.
pub fn fit_with_respondents(points: &[SurveyPoint], respondents: usize) -> Result<FittedModel> {
    check_points(points)?;
    if respondents == 0 {
        return Err(Error::invalid("respondents", "must be at least 1"));
    }
    let clip = 0.5 / respondents as f64;
    let scaling = Scaling::of(points);
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    let targets: Vec<f64> = points.iter().map(|p| logit(p.accept_ratio.clamp(clip, 1.0 - clip))).collect();
    for (p, y) in points.iter().zip(&targets) {
        let row = scaling.row(p);
        for i in 0..3 {
            xty[i] += row[i] * y;
            for j in 0..3 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let (kappa, lambda, nu) = scaling.unscale(solve3(xtx, xty)?);
    let residual = points
        .iter()
        .zip(&targets)
        .map(|(p, y)| (y - (kappa * p.hours + lambda * p.wage + nu)).powi(2))
        .sum();
    Ok(FittedModel { kappa, lambda, nu, residual, point_count: points.len() })
}

/// Gauss-Newton on `sum (z - sigmoid(V))^2`, started from `start`, with
/// step halving when a full step does not reduce the error.
pub fn refine_probability_space(points: &[SurveyPoint], start: &FittedModel) -> Result<FittedModel> {
    check_points(points)?;
    let scaling = Scaling::of(points);
    let mut beta = [start.kappa * scaling.hours, start.lambda * scaling.wage, start.nu];
    let sse = |beta: &[f64; 3]| -> f64 {
        points
            .iter()
            .map(|p| {
                let r = scaling.row(p);
                (p.accept_ratio - sigmoid(beta[0] * r[0] + beta[1] * r[1] + beta[2])).powi(2)
            })
            .sum()
    };
    let mut current = sse(&beta);
    for _ in 0..100 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for p in points {
            let r = scaling.row(p);
            let s = sigmoid(beta[0] * r[0] + beta[1] * r[1] + beta[2]);
            let g = s * (1.0 - s);
            let resid = p.accept_ratio - s;
            for i in 0..3 {
                jtr[i] += g * r[i] * resid;
                for j in 0..3 {
                    jtj[i][j] += g * g * r[i] * r[j];
                }
            }
        }
        let delta = solve3(jtj, jtr)?;
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let trial = [beta[0] + t * delta[0], beta[1] + t * delta[1], beta[2] + t * delta[2]];
            let e = sse(&trial);
            if e <= current {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        let Some((next, e)) = accepted else { break };
        let step = (0..3).map(|i| (next[i] - beta[i]).abs()).fold(0.0, f64::max);
        beta = next;
        current = e;
        if step < 1e-10 {
            break;
        }
    }
    let (kappa, lambda, nu) = scaling.unscale(beta);
    Ok(FittedModel { kappa, lambda, nu, residual: current, point_count: points.len() })
}

/// The questionnaire's 20 cells: 30/60/90/120 minutes, five wage options
/// each, in hours and JPY.
pub fn survey_grid() -> Vec<(f64, f64)> {
    let questions: [(f64, f64, f64); 4] =
        [(30.0, 500.0, 50.0), (60.0, 1000.0, 100.0), (90.0, 1500.0, 150.0), (120.0, 2000.0, 200.0)];
    questions
        .iter()
        .flat_map(|&(minutes, first, step)| (0..5).map(move |i| (minutes / 60.0, first + step * i as f64)))
        .collect()
}

/// Simulates `respondents` independent answers per grid cell under `truth`
/// and records the accepting fraction.
pub fn generate_synthetic_survey<R: Rng + ?Sized>(
    truth: &WorkerParams,
    grid: &[(f64, f64)],
    respondents: usize,
    rng: &mut R,
) -> Result<Vec<SurveyPoint>> {
    if respondents == 0 {
        return Err(Error::invalid("respondents", "must be at least 1"));
    }
    Ok(grid
        .iter()
        .map(|&(hours, wage)| {
            let q = sigmoid(truth.kappa * hours + truth.lambda * wage + truth.nu);
            let accepted = (0..respondents).filter(|_| rng.random::<f64>() < q).count();
            SurveyPoint { hours, wage, accept_ratio: accepted as f64 / respondents as f64 }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregatedRow {
    hours_min: f64,
    wage_jpy: f64,
    accept_ratio: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    respondent_id: String,
    hours_min: f64,
    min_wage_jpy: f64,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.into(), source }
}

/// Reads `hours_min,wage_jpy,accept_ratio` rows.
pub fn read_aggregated_csv(path: &Path) -> Result<Vec<SurveyPoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize::<AggregatedRow>()
        .map(|row| {
            let row = row.map_err(csv_err(path))?;
            Ok(SurveyPoint { hours: row.hours_min / 60.0, wage: row.wage_jpy, accept_ratio: row.accept_ratio })
        })
        .collect()
}

pub fn write_aggregated_csv(path: &Path, points: &[SurveyPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for p in points {
        w.serialize(AggregatedRow { hours_min: p.hours * 60.0, wage_jpy: p.wage, accept_ratio: p.accept_ratio })
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw answers aggregated into acceptance ratios, plus the respondent count
/// for clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSurvey {
    pub points: Vec<SurveyPoint>,
    pub respondents: usize,
}

/// Turns minimum-acceptable-wage answers into per-cell acceptance ratios: a
/// respondent accepts cell `(hours, wage)` when their stated minimum for
/// that duration is at most `wage`. Cells are the distinct wages offered
/// for each duration.
pub fn aggregate_raw(answers: &[(String, f64, f64)]) -> Result<AggregatedSurvey> {
    // keyed by the bit pattern of the minutes so ordering is deterministic
    let mut by_duration: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (_, minutes, min_wage) in answers {
        if !(minutes.is_finite() && *minutes > 0.0 && min_wage.is_finite()) {
            return Err(Error::invalid("answers", format!("bad answer ({minutes} min, {min_wage} JPY)")));
        }
        by_duration.entry(minutes.to_bits()).or_default().push(*min_wage);
    }
    let mut respondents = 0;
    let mut points = Vec::new();
    for (bits, mins) in &by_duration {
        let minutes = f64::from_bits(*bits);
        respondents = respondents.max(mins.len());
        let mut levels = mins.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        for wage in levels {
            let accepted = mins.iter().filter(|&&m| m <= wage).count();
            points.push(SurveyPoint { hours: minutes / 60.0, wage, accept_ratio: accepted as f64 / mins.len() as f64 });
        }
    }
    Ok(AggregatedSurvey { points, respondents })
}

/// Reads `respondent_id,hours_min,min_wage_jpy` rows and aggregates them.
pub fn read_raw_csv(path: &Path) -> Result<AggregatedSurvey> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let answers = reader
        .deserialize::<RawRow>()
        .map(|row| row.map(|r| (r.respondent_id, r.hours_min, r.min_wage_jpy)).map_err(csv_err(path)))
        .collect::<Result<Vec<_>>>()?;
    aggregate_raw(&answers)
}

/// Evaluates the fitted surface on a `hours_steps x wage_steps` grid over the
/// inclusive ranges.
pub fn surface_grid(
    model: &FittedModel,
    hours: (f64, f64),
    wages: (f64, f64),
    hours_steps: usize,
    wage_steps: usize,
) -> Vec<(f64, f64, f64)> {
    let lin = |(lo, hi): (f64, f64), n: usize, i: usize| if n <= 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    (0..hours_steps)
        .flat_map(|i| (0..wage_steps).map(move |j| (i, j)))
        .map(|(i, j)| {
            let h = lin(hours, hours_steps, i);
            let p = lin(wages, wage_steps, j);
            (h, p, predict_ratio(model, h, p))
        })
        .collect()
}

pub fn write_surface_csv(path: &Path, grid: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["hours", "wage", "probability"]).map_err(csv_err(path))?;
    for (h, p, q) in grid {
        w.write_record([h.to_string(), p.to_string(), q.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn exact(truth: &WorkerParams) -> Vec<SurveyPoint> {
        survey_grid()
            .into_iter()
            .map(|(h, p)| SurveyPoint { hours: h, wage: p, accept_ratio: sigmoid(truth.kappa * h + truth.lambda * p + truth.nu) })
            .collect()
    }

    #[test]
    fn grid_matches_questionnaire() {
        let g = survey_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], (0.5, 500.0));
        assert_eq!(g[4], (0.5, 700.0));
        assert_eq!(g[19], (2.0, 2800.0));
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let truth = WorkerParams::survey_default();
        let m = fit(&exact(&truth)).unwrap();
        assert!((m.kappa - truth.kappa).abs() < 1e-9);
        assert!((m.lambda - truth.lambda).abs() < 1e-9);
        assert!((m.nu - truth.nu).abs() < 1e-9);
        assert!(m.residual < 1e-18);
        assert_eq!(m.point_count, 20);
    }

    #[test]
    fn fit_ignores_point_order() {
        let truth = WorkerParams::survey_default();
        let pts = generate_synthetic_survey(&truth, &survey_grid(), 200, &mut rng::stream(4, &[])).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let (a, b) = (fit(&pts).unwrap(), fit(&rev).unwrap());
        assert!((a.kappa - b.kappa).abs() < 1e-12 && (a.lambda - b.lambda).abs() < 1e-15 && (a.nu - b.nu).abs() < 1e-12);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let pts: Vec<SurveyPoint> =
            (1..=5).map(|i| SurveyPoint { hours: i as f64, wage: 100.0 * i as f64, accept_ratio: 0.5 }).collect();
        assert!(matches!(fit(&pts), Err(Error::RankDeficient(_))));
        assert!(fit(&pts[..2]).is_err());
    }

    #[test]
    fn degenerate_ratios_are_clipped() {
        let mut pts = exact(&WorkerParams::survey_default());
        pts[0].accept_ratio = 0.0;
        pts[19].accept_ratio = 1.0;
        let m = fit(&pts).unwrap();
        assert!(m.kappa.is_finite() && m.lambda.is_finite() && m.nu.is_finite());
        assert!(m.is_well_signed());
    }

    #[test]
    fn refinement_keeps_exact_solution() {
        let truth = WorkerParams::survey_default();
        let pts = exact(&truth);
        let start = fit(&pts).unwrap();
        let r = refine_probability_space(&pts, &start).unwrap();
        assert!((r.kappa - truth.kappa).abs() < 1e-6);
        assert!(r.residual < 1e-20);
    }

    #[test]
    fn refinement_reduces_probability_error() {
        let truth = WorkerParams::survey_default();
        let pts = generate_synthetic_survey(&truth, &survey_grid(), 50, &mut rng::stream(8, &[])).unwrap();
        let start = fit(&pts).unwrap();
        let start_sse: f64 = pts.iter().map(|p| (p.accept_ratio - predict_ratio(&start, p.hours, p.wage)).powi(2)).sum();
        let r = refine_probability_space(&pts, &start).unwrap();
        assert!(r.residual <= start_sse + 1e-15);
    }

    #[test]
    fn certain_cells_give_unit_ratio() {
        let generous = WorkerParams { kappa: -1.0, lambda: 1.0, nu: 0.0 };
        let pts = generate_synthetic_survey(&generous, &[(1.0, 1e6)], 1000, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(pts[0].accept_ratio, 1.0);
    }

    #[test]
    fn synthetic_survey_replays() {
        let t = WorkerParams::survey_default();
        let a = generate_synthetic_survey(&t, &survey_grid(), 100, &mut rng::stream(2, &[])).unwrap();
        let b = generate_synthetic_survey(&t, &survey_grid(), 100, &mut rng::stream(2, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raw_answers_aggregate_by_threshold() {
        let answers = vec![
            ("a".to_string(), 30.0, 500.0),
            ("b".to_string(), 30.0, 600.0),
            ("c".to_string(), 30.0, 700.0),
            ("d".to_string(), 30.0, 600.0),
        ];
        let s = aggregate_raw(&answers).unwrap();
        assert_eq!(s.respondents, 4);
        let ratios: Vec<(f64, f64, f64)> = s.points.iter().map(|p| (p.hours, p.wage, p.accept_ratio)).collect();
        assert_eq!(ratios, vec![(0.5, 500.0, 0.25), (0.5, 600.0, 0.75), (0.5, 700.0, 1.0)]);
    }

    #[test]
    fn bundled_model_matches_survey() {
        let m = FittedModel::survey_default();
        assert_eq!((m.kappa, m.lambda, m.nu), (-7.253, 0.006385, -1.216));
    }

    #[test]
    fn predicted_ratio_limits() {
        let m = FittedModel::survey_default();
        assert_eq!(predict_ratio(&m, 1.0, 1e7), 1.0);
        assert!(predict_ratio(&m, 1.0, 1000.0) > predict_ratio(&m, 1.5, 1000.0));
    }
}
