use serde::{Deserialize, Serialize};

use super::forest::ForestModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[actual][predicted]`, index 1 = positive.
    pub confusion: [[u64; 2]; 2],
}

impl EvalReport {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate_predictions(predicted: &[bool], actual: &[bool]) -> Result<EvalReport> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty test set".into()));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (&p, &a) in predicted.iter().zip(actual) {
        confusion[usize::from(a)][usize::from(p)] += 1;
    }
    let [[tn, fp], [fn_, tp]] = confusion;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        precision,
        recall,
        f1,
        confusion,
    })
}

pub fn evaluate(model: &ForestModel, x_test: &[Vec<f64>], y_test: &[bool]) -> Result<EvalReport> {
    let predicted = x_test
        .iter()
        .map(|row| model.predict_row(row).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(&predicted, y_test)
}
