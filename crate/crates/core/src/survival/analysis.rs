use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::concordance::c_index;
use super::cox::{fit_cox, CoxModel, CoxOptions};
use crate::corpus::SurvivalRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConcordance {
    pub covariate: String,
    pub c_index: f64,
    /// Coefficient of the single-covariate model, original units.
    pub beta: f64,
}

/// Fits one single-covariate Cox model per column and reports each model's
/// training C-index, best first. Columns whose fit or C-index fails are
/// returned separately with the reason.
pub fn per_covariate_cindex(
    records: &[SurvivalRecord],
    names: &[String],
    opts: &CoxOptions,
) -> (Vec<CovariateConcordance>, Vec<(String, String)>) {
    let outcomes: Vec<std::result::Result<CovariateConcordance, (String, String)>> = names
        .par_iter()
        .enumerate()
        .map(|(j, name)| {
            let single: Vec<SurvivalRecord> = records
                .iter()
                .map(|r| SurvivalRecord {
                    author: r.author.clone(),
                    time_days: r.time_days,
                    event: r.event,
                    covariates: vec![r.covariates[j]],
                })
                .collect();
            let fitted = fit_cox(&single, std::slice::from_ref(name), opts).and_then(|model| {
                let risk = single
                    .iter()
                    .map(|r| model.linear_predictor_values(&r.covariates))
                    .collect::<Result<Vec<_>>>()?;
                let report = c_index(&risk, &single)?;
                Ok(CovariateConcordance {
                    covariate: name.clone(),
                    c_index: report.c_index,
                    beta: model.beta_original[0],
                })
            });
            fitted.map_err(|e| (name.clone(), e.to_string()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(skip) => skipped.push(skip),
        }
    }
    rows.sort_by(|a, b| b.c_index.total_cmp(&a.c_index).then_with(|| a.covariate.cmp(&b.covariate)));
    (rows, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugSurvival {
    pub drug: String,
    pub users: usize,
    pub mean_survival: f64,
    /// Fewer users than the minimum group size.
    pub small_group: bool,
}

/// Groups users by their most-mentioned drug (columns named `drug:<name>`)
/// and averages each group's predicted survival at `horizon`. Users with no
/// drug mentions are left out. Rows are sorted by survival, highest first.
pub fn survival_by_top_drug(
    records: &[SurvivalRecord],
    model: &CoxModel,
    horizon: f64,
    min_group: usize,
) -> Result<Vec<DrugSurvival>> {
    let drug_cols: Vec<(usize, &str)> = model
        .names
        .iter()
        .enumerate()
        .filter_map(|(j, n)| n.strip_prefix("drug:").map(|d| (j, d)))
        .collect();
    if drug_cols.is_empty() {
        return Err(Error::InvalidInput("the model has no drug-proportion covariates".into()));
    }
    let mut groups: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for record in records {
        let top = drug_cols
            .iter()
            .map(|&(j, d)| (record.covariates.get(j).copied().unwrap_or(0.0), d))
            .fold(None::<(f64, &str)>, |best, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            });
        let Some((share, drug)) = top else { continue };
        if share <= 0.0 {
            continue;
        }
        let eta = model.linear_predictor_values(&record.covariates)?;
        let entry = groups.entry(drug).or_default();
        entry.0 += 1;
        entry.1 += model.survival_from_predictor(eta, horizon);
    }
    let mut rows: Vec<DrugSurvival> = groups
        .into_iter()
        .map(|(drug, (users, total))| DrugSurvival {
            drug: drug.to_owned(),
            users,
            mean_survival: total / users as f64,
            small_group: users < min_group,
        })
        .collect();
    rows.sort_by(|a, b| b.mean_survival.total_cmp(&a.mean_survival).then_with(|| a.drug.cmp(&b.drug)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u32, event: bool, x: Vec<f64>) -> SurvivalRecord {
        SurvivalRecord {
            author: format!("u{t}"),
            time_days: t,
            event,
            covariates: x,
        }
    }

    #[test]
    fn negative_time_covariate_is_perfect() {
        let records: Vec<_> = (1..=25).map(|t| rec(t, true, vec![-(t as f64), 1.0])).collect();
        let names = vec!["neg_time".to_owned(), "constant".to_owned()];
        let (rows, skipped) = per_covariate_cindex(&records, &names, &CoxOptions::default());
        assert!(skipped.is_empty());
        assert_eq!(rows[0].covariate, "neg_time");
        assert_eq!(rows[0].c_index, 1.0);
        assert_eq!(rows[1].c_index, 0.5);
    }

    #[test]
    fn single_top_drug_matches_overall_mean() {
        let names = vec!["drug:a".to_owned(), "drug:b".to_owned(), "vol".to_owned()];
        let records: Vec<_> = (1..=12)
            .map(|t| rec(t * 20, t % 2 == 0, vec![0.8, 0.2, (t % 5) as f64]))
            .collect();
        let model = fit_cox(&records, &names, &CoxOptions::default()).unwrap();
        let rows = survival_by_top_drug(&records, &model, 365.0, 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].drug, "a");
        let overall: f64 = records
            .iter()
            .map(|r| model.survival_from_predictor(model.linear_predictor_values(&r.covariates).unwrap(), 365.0))
            .sum::<f64>()
            / records.len() as f64;
        assert!((rows[0].mean_survival - overall).abs() < 1e-12);
        assert!(!rows[0].small_group);
    }
}
