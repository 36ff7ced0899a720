use std::time::Instant;

use transit_core::classifier::{evaluate, fit_forest, ForestParams};
use transit_core::corpus::{build_timelines, CohortParams, SurvivalParams};
use transit_core::features::{Family, FeatureSpec};
use transit_core::lexicon::{CategoryLexicon, DrugLexicon, KeywordParams};
use transit_core::pipeline::{classification_set, survival_set, Resources, TEST_FRACTION};
use transit_core::survival::{c_index, fit_cox, CoxOptions};
use transit_core::synth::{generate, SynthCorpus, SynthParams, SYNTH_DRUG_LEXICON};

fn resources() -> Resources {
    Resources {
        venues: SynthCorpus::venues(),
        drugs: DrugLexicon::parse(SYNTH_DRUG_LEXICON).unwrap(),
        categories: CategoryLexicon::demo(),
        embeddings: None,
        spec: FeatureSpec::new([Family::Drugs, Family::Categories, Family::Keywords, Family::Volume], 100).unwrap(),
        keyword_params: KeywordParams::default(),
    }
}

#[test]
fn planted_signal_is_recovered() {
    let start = Instant::now();
    let corpus = generate(&SynthParams::default()).unwrap();
    let timelines = build_timelines(corpus.posts);
    let res = resources();

    let set = classification_set(&timelines, &res, &CohortParams::default(), TEST_FRACTION).unwrap();
    let (xt, yt) = set.rows(&set.train);
    let (xv, yv) = set.rows(&set.test);
    let forest = fit_forest(&xt, &yt, &set.matrix.names, &ForestParams::default()).unwrap();
    let report = evaluate(&forest, &xv, &yv).unwrap();
    eprintln!("cohort {} test accuracy {:.3}", set.labels.len(), report.accuracy);
    assert!(report.accuracy >= 0.9);

    let surv = survival_set(&timelines, &res, &SurvivalParams::default(), TEST_FRACTION, 42).unwrap();
    let model = fit_cox(&surv.subset(&surv.train), &surv.names, &CoxOptions::default()).unwrap();
    let test = surv.subset(&surv.test);
    let risk: Vec<f64> = test.iter().map(|r| model.linear_predictor_values(&r.covariates).unwrap()).collect();
    let c = c_index(&risk, &test).unwrap().c_index;
    eprintln!(
        "survival {} censored {:.2} test C {:.3} warnings {:?} elapsed {:?}",
        surv.records.len(),
        surv.censoring_rate(),
        c,
        model.diagnostics.warnings,
        start.elapsed()
    );
    assert!(c >= 0.7);
}
