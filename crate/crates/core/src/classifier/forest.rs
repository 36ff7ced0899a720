use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{mix, DecisionTree, Node, TreeParams};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 170,
            max_depth: 12,
            features_per_split: None,
            min_samples_split: 2,
            seed: 42,
        }
    }
}

/// Bagged classification trees voting on CAS vs CAS_TO_RECOV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub min_samples_split: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    /// Fraction of trees voting positive.
    pub score: f64,
}

/// Row indices drawn with replacement for tree `tree`.
pub fn bootstrap_sample(seed: u64, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Seed for the node generators of tree `tree`.
pub fn tree_seed(seed: u64, tree: usize) -> u64 {
    mix(seed, tree as u64 + 1)
}

fn validate(x: &[Vec<f64>], y: &[bool], names: &[String]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let Some(row) = x.iter().find(|r| r.len() != names.len()) {
        return Err(Error::Dimension {
            expected: names.len(),
            found: row.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("feature values must be finite".into()));
    }
    let pos = y.iter().filter(|&&b| b).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::Unfittable(format!(
            "a forest needs at least two examples of each class, got {} positive and {} negative",
            pos,
            y.len() - pos
        )));
    }
    Ok(())
}

/// Trains `params.n_trees` trees, each on its own bootstrap sample with
/// `features_per_split` candidate features per node and Gini splits.
/// Trees are trained in parallel; each tree's randomness depends only on
/// the master seed and the tree index.
pub fn fit_forest(x: &[Vec<f64>], y: &[bool], names: &[String], params: &ForestParams) -> Result<ForestModel> {
    validate(x, y, names)?;
    if params.n_trees == 0 || params.max_depth == 0 {
        return Err(Error::InvalidInput("n_trees and max_depth must be positive".into()));
    }
    let d = names.len();
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        features_per_split,
        min_samples_split: params.min_samples_split.max(2),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let sample = bootstrap_sample(params.seed, t, x.len());
            DecisionTree::fit(x, y, &sample, tree_params, tree_seed(params.seed, t))
        })
        .collect();
    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        feature_names: names.to_vec(),
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        features_per_split,
        min_samples_split: tree_params.min_samples_split,
        seed: params.seed,
        trees,
    })
}

impl ForestModel {
    /// Votes of the first `n` trees.
    pub fn predict_with(&self, row: &[f64], n: usize) -> Prediction {
        let n = n.clamp(1, self.trees.len());
        let votes = self.trees[..n].iter().filter(|t| t.predict(row)).count();
        let score = votes as f64 / n as f64;
        Prediction {
            label: score >= 0.5,
            score,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Dimension {
                expected: self.feature_names.len(),
                found: row.len(),
            });
        }
        Ok(self.predict_with(row, self.trees.len()))
    }

    /// How often each feature is used as a split.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.feature_names.len()];
        for node in self.trees.iter().flat_map(|t| &t.nodes) {
            if let Node::Split { feature, .. } = node {
                counts[*feature] += 1;
            }
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::FormatVersion(model.format_version));
        }
        if model.trees.is_empty() {
            return Err(Error::InvalidInput("forest has no trees".into()));
        }
        Ok(model)
    }
}

pub fn predict_forest(model: &ForestModel, x: &FeatureVector) -> Result<Prediction> {
    if x.names != model.feature_names {
        return Err(Error::Contract(
            "feature names differ from those the forest was trained on".into(),
        ));
    }
    model.predict_row(&x.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(vote: bool) -> DecisionTree {
        let counts = if vote { [0, 3] } else { [3, 0] };
        DecisionTree {
            nodes: vec![Node::Leaf { counts }],
        }
    }

    fn model(trees: Vec<DecisionTree>) -> ForestModel {
        ForestModel {
            format_version: FOREST_FORMAT_VERSION,
            feature_names: vec!["f".into()],
            n_trees: trees.len(),
            max_depth: 1,
            features_per_split: 1,
            min_samples_split: 2,
            seed: 0,
            trees,
        }
    }

    #[test]
    fn planted_votes() {
        let m = model(vec![stump(true), stump(true), stump(false), stump(true)]);
        let x = FeatureVector::new(vec!["f".into()], vec![0.0]).unwrap();
        let p = predict_forest(&m, &x).unwrap();
        assert_eq!(p.score, 0.75);
        assert!(p.label);
        let single = model(vec![stump(false)]);
        let p = predict_forest(&single, &x).unwrap();
        assert_eq!((p.score, p.label), (0.0, false));
        let unanimous = model(vec![stump(true); 5]);
        assert_eq!(predict_forest(&unanimous, &x).unwrap().score, 1.0);
    }

    #[test]
    fn misaligned_features() {
        let m = model(vec![stump(true)]);
        let x = FeatureVector::new(vec!["g".into()], vec![0.0]).unwrap();
        assert!(matches!(predict_forest(&m, &x), Err(Error::Contract(_))));
        assert!(m.predict_row(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_class_is_unfittable() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let names = vec!["f".to_owned()];
        let err = fit_forest(&x, &[true, true, true], &names, &ForestParams::default());
        assert!(matches!(err, Err(Error::Unfittable(_))));
    }

    #[test]
    fn bootstrap_draws_n_with_replacement() {
        let s = bootstrap_sample(9, 3, 50);
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|&i| i < 50));
        assert_eq!(s, bootstrap_sample(9, 3, 50));
        assert_ne!(s, bootstrap_sample(9, 4, 50));
    }
}
