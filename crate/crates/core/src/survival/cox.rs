use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::curve::SurvCurve;
use crate::corpus::SurvivalRecord;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const COX_FORMAT_VERSION: u32 = 1;

/// Log partial likelihood with its first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `d x d`.
    pub hessian: Vec<Vec<f64>>,
}

/// Breslow log partial likelihood over right-censored observations.
///
/// For each distinct event time `t` with event set `D` and risk set
/// `R = { j : y_j >= t }`:
/// `sum_{i in D} b'x_i - |D| log sum_{j in R} exp(b'x_j)`.
#[derive(Debug, Clone)]
pub struct PartialLikelihood<'a> {
    times: &'a [f64],
    events: &'a [bool],
    rows: &'a [Vec<f64>],
    dim: usize,
    /// Indices grouped by tied time, groups in descending time order.
    groups: Vec<Vec<usize>>,
}

impl<'a> PartialLikelihood<'a> {
    pub fn new(times: &'a [f64], events: &'a [bool], rows: &'a [Vec<f64>]) -> Result<Self> {
        let n = times.len();
        if events.len() != n || rows.len() != n {
            return Err(Error::InvalidInput(
                "times, events and covariate rows must have equal length".into(),
            ));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("covariate rows have different lengths".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("times and covariates must be finite".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if times[g[0]] == times[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        Ok(PartialLikelihood {
            times,
            events,
            rows,
            dim,
            groups,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let eta = self.linear_predictors(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut value = 0.0;
        for group in &self.groups {
            for &i in group {
                s0 += (eta[i] - shift).exp();
            }
            let d = group.iter().filter(|&&i| self.events[i]).count();
            if d > 0 {
                let sum_eta: f64 = group.iter().filter(|&&i| self.events[i]).map(|&i| eta[i]).sum();
                value += sum_eta - d as f64 * (s0.ln() + shift);
            }
        }
        value
    }

    pub fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let d = self.dim;
        let eta = self.linear_predictors(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut s2 = vec![vec![0.0; d]; d];
        let mut value = 0.0;
        let mut gradient = vec![0.0; d];
        let mut hessian = vec![vec![0.0; d]; d];
        for group in &self.groups {
            for &i in group {
                let w = (eta[i] - shift).exp();
                let x = &self.rows[i];
                s0 += w;
                for a in 0..d {
                    s1[a] += w * x[a];
                    for b in 0..=a {
                        s2[a][b] += w * x[a] * x[b];
                    }
                }
            }
            let events: Vec<usize> = group.iter().copied().filter(|&i| self.events[i]).collect();
            if events.is_empty() {
                continue;
            }
            let m = events.len() as f64;
            value += events.iter().map(|&i| eta[i]).sum::<f64>() - m * (s0.ln() + shift);
            for a in 0..d {
                let mean_a = s1[a] / s0;
                gradient[a] += events.iter().map(|&i| self.rows[i][a]).sum::<f64>() - m * mean_a;
                for b in 0..=a {
                    let cov = s2[a][b] / s0 - mean_a * (s1[b] / s0);
                    hessian[a][b] -= m * cov;
                }
            }
        }
        #[allow(clippy::needless_range_loop)]
        for a in 0..d {
            for b in 0..a {
                hessian[b][a] = hessian[a][b];
            }
        }
        Evaluation {
            value,
            gradient,
            hessian,
        }
    }

    /// Breslow cumulative-hazard baseline as `(t, S0(t))` steps at each
    /// distinct event time, starting from `(0, 1)`.
    pub fn breslow_baseline(&self, beta: &[f64]) -> Vec<(f64, f64)> {
        let eta = self.linear_predictors(beta);
        let mut at_risk = 0.0;
        let mut steps = Vec::new();
        for group in &self.groups {
            at_risk += group.iter().map(|&i| eta[i].exp()).sum::<f64>();
            let d = group.iter().filter(|&&i| self.events[i]).count();
            if d > 0 {
                steps.push((self.times[group[0]], d as f64 / at_risk));
            }
        }
        steps.reverse();
        let mut cumulative = 0.0;
        let mut points = vec![(0.0, 1.0)];
        for (t, increment) in steps {
            cumulative += increment;
            let s = (-cumulative).exp();
            if t <= 0.0 {
                points[0].1 = s;
            } else {
                points.push((t, s));
            }
        }
        points
    }
}

/// Per-covariate centering and scaling applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    /// Zero marks a constant covariate, held at a zero coefficient.
    pub std: f64,
}

impl Scaling {
    pub fn apply(&self, x: f64) -> f64 {
        if self.std > 0.0 {
            (x - self.mean) / self.std
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence when the largest accepted coefficient change is below this.
    pub tol: f64,
    pub max_halvings: usize,
    /// Largest acceptable |beta| in scaled units before refitting with a ridge.
    pub divergence_limit: f64,
    pub fallback_ridge: f64,
    /// Ridge applied from the start; zero for a plain maximum partial likelihood fit.
    pub ridge: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 100,
            tol: 1e-8,
            max_halvings: 40,
            divergence_limit: 50.0,
            fallback_ridge: 1e-4,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub ridge: f64,
    pub n_records: usize,
    pub n_events: usize,
    pub warnings: Vec<String>,
}

/// A fitted proportional-hazards model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub format_version: u32,
    pub names: Vec<String>,
    /// Coefficients for the standardized covariates.
    pub beta: Vec<f64>,
    /// Coefficients in the covariates' original units.
    pub beta_original: Vec<f64>,
    /// Standard errors of `beta` from the inverse observed information.
    pub std_errors: Vec<Option<f64>>,
    pub scaling: Vec<Scaling>,
    /// `(t, S0(t))` for a subject at the training mean.
    pub baseline: Vec<(f64, f64)>,
    pub diagnostics: CoxDiagnostics,
}

enum Newton {
    Done {
        beta: Vec<f64>,
        eval: Evaluation,
        iterations: usize,
        converged: bool,
    },
    Diverged(String),
}

fn with_ridge(mut e: Evaluation, beta: &[f64], ridge: f64) -> Evaluation {
    if ridge > 0.0 {
        e.value -= 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>();
        for (a, b) in beta.iter().enumerate() {
            e.gradient[a] -= ridge * b;
            e.hessian[a][a] -= ridge;
        }
    }
    e
}

/// Solves `(-H) step = g`.
fn newton_step(eval: &Evaluation) -> Option<Vec<f64>> {
    let d = eval.gradient.len();
    let info = DMatrix::from_fn(d, d, |i, j| -eval.hessian[i][j]);
    let g = DVector::from_column_slice(&eval.gradient);
    let step = match info.clone().cholesky() {
        Some(chol) => chol.solve(&g),
        None => info.lu().solve(&g)?,
    };
    step.iter().all(|v| v.is_finite()).then(|| step.iter().copied().collect())
}

fn newton(pl: &PartialLikelihood<'_>, ridge: f64, limit: f64, opts: &CoxOptions) -> Newton {
    let d = pl.dim();
    let mut beta = vec![0.0; d];
    let mut eval = with_ridge(pl.evaluate(&beta), &beta, ridge);
    if d == 0 {
        return Newton::Done {
            beta,
            eval,
            iterations: 0,
            converged: true,
        };
    }
    for iteration in 1..=opts.max_iter {
        let Some(step) = newton_step(&eval) else {
            return Newton::Diverged("information matrix is singular".into());
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let value = pl.value(&candidate) - 0.5 * ridge * candidate.iter().map(|b| b * b).sum::<f64>();
            if value.is_finite() && value >= eval.value {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        // No ascent along the Newton direction: the current point is optimal
        // to working precision.
        let Some(next) = accepted else {
            return Newton::Done {
                beta,
                eval,
                iterations: iteration,
                converged: true,
            };
        };
        let change = beta.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if beta.iter().any(|b| b.abs() > limit) {
            return Newton::Diverged(format!("a coefficient exceeded {limit} in standardized units"));
        }
        eval = with_ridge(pl.evaluate(&beta), &beta, ridge);
        if !eval.value.is_finite() {
            return Newton::Diverged("log partial likelihood is not finite".into());
        }
        if change < opts.tol {
            return Newton::Done {
                beta,
                eval,
                iterations: iteration,
                converged: true,
            };
        }
    }
    Newton::Done {
        beta,
        eval,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Fits a Cox model by Newton-Raphson on the Breslow partial likelihood.
///
/// Covariates are standardized internally; constant covariates are kept
/// with a zero coefficient and a warning. If the unpenalized fit diverges
/// (separation or a singular information matrix) it is repeated with a
/// small ridge penalty.
pub fn fit_cox(records: &[SurvivalRecord], names: &[String], opts: &CoxOptions) -> Result<CoxModel> {
    if records.is_empty() {
        return Err(Error::Unfittable("no survival records".into()));
    }
    let p = names.len();
    if let Some(r) = records.iter().find(|r| r.covariates.len() != p) {
        return Err(Error::Contract(format!(
            "record `{}` has {} covariates, expected {p}",
            r.author,
            r.covariates.len()
        )));
    }
    let n_events = records.iter().filter(|r| r.event).count();
    if n_events == 0 {
        return Err(Error::Unfittable("no events among the records".into()));
    }
    let n = records.len() as f64;
    let mut warnings = Vec::new();
    let scaling: Vec<Scaling> = (0..p)
        .map(|j| {
            let mean = records.iter().map(|r| r.covariates[j]).sum::<f64>() / n;
            let var = records.iter().map(|r| (r.covariates[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let std = var.sqrt();
            let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 0.0 };
            Scaling { mean, std }
        })
        .collect();
    let active: Vec<usize> = (0..p).filter(|&j| scaling[j].std > 0.0).collect();
    for j in (0..p).filter(|j| !active.contains(j)) {
        warnings.push(format!("covariate `{}` is constant; its coefficient is fixed at 0", names[j]));
    }
    let times: Vec<f64> = records.iter().map(|r| f64::from(r.time_days)).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| active.iter().map(|&j| scaling[j].apply(r.covariates[j])).collect())
        .collect();
    let pl = PartialLikelihood::new(&times, &events, &rows)?;
    let null_log_likelihood = pl.value(&vec![0.0; active.len()]);

    let mut ridge = opts.ridge;
    let (beta_active, eval, iterations, converged) = match newton(&pl, ridge, opts.divergence_limit, opts) {
        Newton::Done { beta, eval, iterations, converged } => (beta, eval, iterations, converged),
        Newton::Diverged(reason) => {
            ridge = ridge.max(opts.fallback_ridge);
            warnings.push(format!("unpenalized fit diverged ({reason}); refitted with ridge penalty {ridge}"));
            // The penalized objective is strictly concave, so its maximizer is
            // finite and no coefficient bound applies.
            match newton(&pl, ridge, f64::INFINITY, opts) {
                Newton::Done { beta, eval, iterations, converged } => (beta, eval, iterations, converged),
                Newton::Diverged(reason) => {
                    return Err(Error::Unfittable(format!("ridge-penalized fit also diverged: {reason}")))
                }
            }
        }
    };
    if !converged {
        warnings.push(format!("Newton-Raphson did not converge within {} iterations", opts.max_iter));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let d = active.len();
    let info = DMatrix::from_fn(d, d, |i, j| -eval.hessian[i][j]);
    let active_se: Vec<Option<f64>> = match info.try_inverse() {
        Some(inv) => (0..d)
            .map(|i| Some(inv[(i, i)]).filter(|v| *v >= 0.0 && v.is_finite()).map(f64::sqrt))
            .collect(),
        None => vec![None; d],
    };
    let mut beta = vec![0.0; p];
    let mut std_errors = vec![None; p];
    for (k, &j) in active.iter().enumerate() {
        beta[j] = beta_active[k];
        std_errors[j] = active_se[k];
    }
    let beta_original = beta
        .iter()
        .zip(&scaling)
        .map(|(b, s)| if s.std > 0.0 { b / s.std } else { 0.0 })
        .collect();
    let baseline = pl.breslow_baseline(&beta_active);
    Ok(CoxModel {
        format_version: COX_FORMAT_VERSION,
        names: names.to_vec(),
        beta,
        beta_original,
        std_errors,
        scaling,
        baseline,
        diagnostics: CoxDiagnostics {
            iterations,
            converged,
            log_likelihood: pl.value(&beta_active),
            null_log_likelihood,
            ridge,
            n_records: records.len(),
            n_events,
            warnings,
        },
    })
}

impl CoxModel {
    /// `beta' x~` for a raw covariate vector in model column order.
    pub fn linear_predictor_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.names.len() {
            return Err(Error::Dimension {
                expected: self.names.len(),
                found: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(&self.scaling)
            .zip(&self.beta)
            .map(|((x, s), b)| b * s.apply(*x))
            .sum())
    }

    pub fn linear_predictor(&self, x: &FeatureVector) -> Result<f64> {
        if x.names != self.names {
            return Err(Error::Contract(
                "covariate names differ from those the model was fitted on".into(),
            ));
        }
        self.linear_predictor_values(&x.values)
    }

    pub fn baseline_survival(&self, t: f64) -> f64 {
        let idx = self.baseline.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.baseline[idx - 1].1
        }
    }

    /// `S0(t) ^ exp(eta)`.
    pub fn survival_from_predictor(&self, eta: f64, t: f64) -> f64 {
        let s0 = self.baseline_survival(t);
        let factor = eta.exp();
        if factor == 1.0 {
            s0
        } else {
            s0.powf(factor)
        }
    }

    /// Survival curve for a linear predictor, sampled at every baseline step
    /// up to `horizon` and at `horizon` itself.
    pub fn curve_from_predictor(&self, eta: f64, horizon: f64) -> SurvCurve {
        let mut points: Vec<(f64, f64)> = self
            .baseline
            .iter()
            .take_while(|(t, _)| *t <= horizon)
            .map(|&(t, _)| (t, self.survival_from_predictor(eta, t)))
            .collect();
        if points.last().is_none_or(|&(t, _)| t < horizon) {
            points.push((horizon, self.survival_from_predictor(eta, horizon)));
        }
        SurvCurve { points }
    }

    /// The baseline curve truncated at `horizon`.
    pub fn baseline_curve(&self, horizon: f64) -> SurvCurve {
        self.curve_from_predictor(0.0, horizon)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: CoxModel = serde_json::from_str(text)?;
        if model.format_version != COX_FORMAT_VERSION {
            return Err(Error::FormatVersion(model.format_version));
        }
        Ok(model)
    }
}

/// Probability of surviving past `t` days for covariates `x`.
pub fn predict_survival(model: &CoxModel, x: &FeatureVector, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    Ok(model.survival_from_predictor(model.linear_predictor(x)?, t))
}

pub fn predict_curve(model: &CoxModel, x: &FeatureVector, horizon: f64) -> Result<SurvCurve> {
    Ok(model.curve_from_predictor(model.linear_predictor(x)?, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rec(t: u32, event: bool, x: Vec<f64>) -> SurvivalRecord {
        SurvivalRecord {
            author: format!("u{t}"),
            time_days: t,
            event,
            covariates: x,
        }
    }

    #[test]
    fn hand_computed_likelihood() {
        // Times 1,2,3 all events, x = 0,1,2, beta = b.
        // l = b*0 - ln(1+e^b+e^2b) + b - ln(e^b+e^2b) + 2b - 2b.
        let times = [1.0, 2.0, 3.0];
        let events = [true, true, true];
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let pl = PartialLikelihood::new(&times, &events, &rows).unwrap();
        let b: f64 = 0.3;
        let expected = -(1.0 + b.exp() + (2.0 * b).exp()).ln() + b - (b.exp() + (2.0 * b).exp()).ln();
        assert_relative_eq!(pl.value(&[b]), expected, epsilon = 1e-12);
        assert_relative_eq!(pl.evaluate(&[b]).value, expected, epsilon = 1e-12);
    }

    #[test]
    fn breslow_ties_use_full_risk_set() {
        // Two tied events at t=1 with a censored subject at t=2; beta=0:
        // l = -2 ln 3, baseline hazard jump 2/3.
        let times = [1.0, 1.0, 2.0];
        let events = [true, true, false];
        let rows = vec![vec![0.5], vec![-1.0], vec![2.0]];
        let pl = PartialLikelihood::new(&times, &events, &rows).unwrap();
        assert_relative_eq!(pl.value(&[0.0]), -2.0 * 3f64.ln(), epsilon = 1e-12);
        let base = pl.breslow_baseline(&[0.0]);
        assert_eq!(base.len(), 2);
        assert_relative_eq!(base[1].1, (-2.0f64 / 3.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn constant_covariates_give_zero_beta() {
        let records: Vec<_> = (1..=20).map(|t| rec(t, t % 3 != 0, vec![4.0, -1.0])).collect();
        let names = vec!["a".to_owned(), "b".to_owned()];
        let model = fit_cox(&records, &names, &CoxOptions::default()).unwrap();
        assert_eq!(model.beta, vec![0.0, 0.0]);
        assert_eq!(model.diagnostics.warnings.len(), 2);
        assert!(model.diagnostics.converged);
        assert_eq!(model.baseline[0], (0.0, 1.0));
        assert!(model.baseline.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn zero_events_is_unfittable() {
        let records: Vec<_> = (1..=5).map(|t| rec(t, false, vec![t as f64])).collect();
        let err = fit_cox(&records, &["x".into()], &CoxOptions::default());
        assert!(matches!(err, Err(Error::Unfittable(_))));
    }

    #[test]
    fn separation_triggers_ridge_fallback() {
        // Risk perfectly ordered by the covariate: the MLE is at infinity.
        let records: Vec<_> = (1..=30).map(|t| rec(t, true, vec![-(t as f64)])).collect();
        let model = fit_cox(&records, &["x".into()], &CoxOptions::default()).unwrap();
        assert!(model.diagnostics.ridge > 0.0);
        assert!(model.diagnostics.warnings.iter().any(|w| w.contains("ridge")));
        assert!(model.beta[0] > 0.0 && model.beta[0].is_finite());
    }

    #[test]
    fn misaligned_names_are_rejected() {
        let records: Vec<_> = (1..=10).map(|t| rec(t, true, vec![(t % 4) as f64])).collect();
        let model = fit_cox(&records, &["x".into()], &CoxOptions::default()).unwrap();
        let x = FeatureVector::new(vec!["y".into()], vec![1.0]).unwrap();
        assert!(matches!(predict_survival(&model, &x, 10.0), Err(Error::Contract(_))));
        let x = FeatureVector::new(vec!["x".into()], vec![1.0]).unwrap();
        assert!(predict_survival(&model, &x, -1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let records: Vec<_> = (1..=12).map(|t| rec(t, t % 2 == 0, vec![(t % 5) as f64])).collect();
        let model = fit_cox(&records, &["x".into()], &CoxOptions::default()).unwrap();
        let back = CoxModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let bumped = model.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(CoxModel::from_json(&bumped), Err(Error::FormatVersion(9))));
    }
}
