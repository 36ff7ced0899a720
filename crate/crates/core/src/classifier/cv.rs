use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_predictions;
use super::forest::{fit_forest, ForestParams};
use crate::error::{Error, Result};

fn shuffled_classes(labels: &[bool], seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        classes[usize::from(y)].push(i);
    }
    for class in &mut classes {
        class.shuffle(&mut rng);
    }
    classes
}

/// Splits indices into `(train, test)` so each class contributes
/// `round(test_fraction * class_size)` rows to the test side. Both halves are
/// returned in ascending order.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for class in shuffled_classes(labels, seed) {
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold index of every row, dealt round-robin within each shuffled class.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let classes = shuffled_classes(labels, seed);
    for class in &classes {
        // Each training fold must keep two examples of the class.
        if class.len() < k || class.len() - class.len().div_ceil(k) < 2 {
            return Err(Error::InvalidInput(format!(
                "{} examples of a class are too few for {k}-fold cross-validation",
                class.len()
            )));
        }
    }
    let mut folds = vec![0; labels.len()];
    for class in classes {
        for (pos, i) in class.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub n_trees: usize,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best_n_trees: usize,
    pub scores: Vec<CvScore>,
}

/// Picks the tree count with the best mean stratified k-fold accuracy; ties
/// go to the smaller forest. Per-tree randomness depends only on the seed and
/// tree index, so a forest of `n` trees is the first `n` trees of a larger
/// one and each fold trains once at the largest size.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[bool],
    names: &[String],
    grid: &[usize],
    k_folds: usize,
    base: &ForestParams,
) -> Result<GridSearch> {
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::InvalidInput("tree grid must hold positive counts".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let folds = stratified_folds(y, k_folds, base.seed)?;
    let largest = *grid.last().expect("grid is non-empty");
    let per_fold: Vec<Vec<f64>> = (0..k_folds)
        .into_par_iter()
        .map(|fold| {
            let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, &f) in folds.iter().enumerate() {
                if f == fold {
                    xv.push(x[i].clone());
                    yv.push(y[i]);
                } else {
                    xt.push(x[i].clone());
                    yt.push(y[i]);
                }
            }
            let params = ForestParams {
                n_trees: largest,
                ..*base
            };
            let model = fit_forest(&xt, &yt, names, &params)?;
            grid.iter()
                .map(|&n| {
                    let predicted: Vec<bool> = xv.iter().map(|row| model.predict_with(row, n).label).collect();
                    evaluate_predictions(&predicted, &yv).map(|r| r.accuracy)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let scores: Vec<CvScore> = grid
        .iter()
        .enumerate()
        .map(|(g, &n_trees)| {
            let fold_accuracies: Vec<f64> = per_fold.iter().map(|f| f[g]).collect();
            CvScore {
                n_trees,
                mean_accuracy: fold_accuracies.iter().sum::<f64>() / k_folds as f64,
                fold_accuracies,
            }
        })
        .collect();
    let mut best = &scores[0];
    for score in &scores[1..] {
        if score.mean_accuracy > best.mean_accuracy {
            best = score;
        }
    }
    Ok(GridSearch {
        best_n_trees: best.n_trees,
        scores,
    })
}
