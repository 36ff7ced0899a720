//! Random-forest classification of CAS vs CAS_TO_RECOV users.

mod cv;
mod eval;
mod forest;
mod tree;

pub use cv::{grid_search, stratified_folds, stratified_split, CvScore, GridSearch};
pub use eval::{evaluate, evaluate_predictions, EvalReport};
pub use forest::{
    bootstrap_sample, fit_forest, predict_forest, tree_seed, ForestModel, ForestParams, Prediction,
    FOREST_FORMAT_VERSION,
};
pub use tree::{DecisionTree, Node, TreeParams};
