//! Right-censored survival modelling: Cox proportional hazards, the
//! product-limit estimator and Harrell's concordance index.

mod analysis;
mod concordance;
mod cox;
mod curve;
mod kaplan_meier;

pub use analysis::{per_covariate_cindex, survival_by_top_drug, CovariateConcordance, DrugSurvival};
pub use concordance::{c_index, concordance, ConcordanceReport};
pub use cox::{
    fit_cox, predict_curve, predict_survival, CoxDiagnostics, CoxModel, CoxOptions, Evaluation,
    PartialLikelihood, Scaling, COX_FORMAT_VERSION,
};
pub use curve::SurvCurve;
pub use kaplan_meier::{km_estimate, km_from_records};
