use super::curve::SurvCurve;
use crate::corpus::SurvivalRecord;
use crate::error::{Error, Result};

/// Product-limit estimate from `(time, event)` observations.
///
/// Steps occur at each distinct event time `t` with factor `1 - d/n`, where
/// `d` counts events at `t` and `n` counts observations with time `>= t`.
pub fn km_estimate(observations: &[(f64, bool)]) -> Result<SurvCurve> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("Kaplan-Meier needs at least one observation".into()));
    }
    if observations.iter().any(|(t, _)| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidInput("observation times must be finite and non-negative".into()));
    }
    let mut sorted = observations.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![(0.0, 1.0)];
    let mut survival = 1.0;
    let mut at_risk = sorted.len();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut deaths = 0usize;
        while j < sorted.len() && sorted[j].0 == t {
            deaths += usize::from(sorted[j].1);
            j += 1;
        }
        if deaths > 0 {
            survival *= 1.0 - deaths as f64 / at_risk as f64;
            if t == 0.0 {
                points[0].1 = survival;
            } else {
                points.push((t, survival));
            }
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(SurvCurve { points })
}

pub fn km_from_records(records: &[SurvivalRecord]) -> Result<SurvCurve> {
    let obs: Vec<(f64, bool)> = records.iter().map(|r| (f64::from(r.time_days), r.event)).collect();
    km_estimate(&obs)
}
