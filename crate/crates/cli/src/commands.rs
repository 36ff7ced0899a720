use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use transit_core::classifier::{
    evaluate, fit_forest, grid_search, predict_forest, stratified_folds, EvalReport, ForestParams, GridSearch,
};
use transit_core::corpus::{
    build_timelines, ingest_file, label_transition_cohort, survival_candidates, CohortParams, SurvivalParams,
    SurvivalSkips, UserTimeline, VenueConfig,
};
use transit_core::features::{
    kruskal_wallis_table, summarize, EmbeddingStore, Family, FeatureSpec, PValueMethod, DEFAULT_EMBEDDING_DIM,
};
use transit_core::lexicon::{CategoryLexicon, DrugLexicon, KeywordParams};
use transit_core::pipeline::{
    classification_set, label_name, survival_set, Model, Resources, SavedModel, SurvivalSet, MODEL_FORMAT_VERSION,
    TEST_FRACTION,
};
use transit_core::survival::{
    c_index, fit_cox, km_estimate, per_covariate_cindex, predict_curve, survival_by_top_drug, CoxModel, CoxOptions,
};
use transit_core::synth::{generate, SynthCorpus, SynthParams, SYNTH_DRUG_LEXICON};
use transit_core::Error;

use crate::config::RunConfig;

const LOCK_FILE: &str = ".transit.lock";
const DEFAULT_FAMILIES: &str = "drugs,categories,keywords,volume";
const MIN_DRUG_GROUP: usize = 5;

/// An output directory held for the duration of one command.
pub struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    pub fn acquire(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let lock = path.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputDir { path: path.to_owned() })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "{} is in use by another run (remove {} if that run is gone)",
                path.display(),
                lock.display()
            ),
            Err(e) => Err(e).with_context(|| format!("locking {}", path.display())),
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.file(name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.file(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.create(name)?))
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK_FILE));
    }
}

fn load_venues(cfg: &RunConfig) -> Result<VenueConfig> {
    Ok(match &cfg.venues {
        Some(path) => VenueConfig::load(path)?,
        None => VenueConfig::standard(),
    })
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    users: usize,
    posts: usize,
    lines: usize,
    malformed: usize,
    out_of_venue: usize,
}

fn load_timelines(cfg: &RunConfig, venues: &VenueConfig) -> Result<(Vec<UserTimeline>, IngestSummary)> {
    let ingested = ingest_file(cfg.corpus()?, venues)?;
    if ingested.malformed > 0 {
        warn!("skipped {} malformed lines", ingested.malformed);
    }
    let mut summary = IngestSummary {
        users: 0,
        posts: ingested.posts.len(),
        lines: ingested.lines,
        malformed: ingested.malformed,
        out_of_venue: ingested.out_of_venue,
    };
    let timelines = build_timelines(ingested.posts);
    summary.users = timelines.len();
    Ok((timelines, summary))
}

/// Lexicons and feature spec. A saved model's spec takes precedence over
/// `--features`.
fn load_resources(cfg: &RunConfig, venues: VenueConfig, spec: Option<&FeatureSpec>) -> Result<Resources> {
    let drugs = match &cfg.drug_lexicon {
        Some(path) => DrugLexicon::load(path)?,
        None => DrugLexicon::demo(),
    };
    let categories = match &cfg.category_lexicon {
        Some(path) => CategoryLexicon::load(path)?,
        None => CategoryLexicon::demo(),
    };
    let embeddings = match &cfg.embeddings {
        Some(path) => Some(EmbeddingStore::load(path, spec.map(|s| s.embedding_dim))?),
        None => None,
    };
    let spec = match spec {
        Some(spec) => spec.clone(),
        None => {
            let dim = embeddings.as_ref().map_or(DEFAULT_EMBEDDING_DIM, EmbeddingStore::dim);
            match (&cfg.features, &embeddings) {
                (Some(list), _) => FeatureSpec::parse(list, dim)?,
                (None, Some(_)) => FeatureSpec::parse(&format!("{DEFAULT_FAMILIES},embedding"), dim)?,
                (None, None) => FeatureSpec::parse(DEFAULT_FAMILIES, dim)?,
            }
        }
    };
    Ok(Resources {
        venues,
        drugs,
        categories,
        embeddings,
        spec,
        keyword_params: KeywordParams::default(),
    })
}

fn cohort_params(cfg: &RunConfig) -> CohortParams {
    CohortParams {
        window_days: cfg.window_days,
        horizon_days: cfg.horizon_days,
        seed: cfg.seed,
        ..CohortParams::default()
    }
}

fn survival_params(cfg: &RunConfig) -> SurvivalParams {
    SurvivalParams {
        horizon_days: cfg.horizon_days,
        ..SurvivalParams::default()
    }
}

fn prepare(cfg: &RunConfig) -> Result<(Vec<UserTimeline>, Resources)> {
    let venues = load_venues(cfg)?;
    let (timelines, _) = load_timelines(cfg, &venues)?;
    let resources = load_resources(cfg, venues, None)?;
    Ok((timelines, resources))
}

/// `Ok(None)` when no user is eligible for survival analysis.
fn optional_survival(timelines: &[UserTimeline], resources: &Resources, cfg: &RunConfig) -> Result<Option<SurvivalSet>> {
    match survival_set(timelines, resources, &survival_params(cfg), TEST_FRACTION, cfg.seed) {
        Ok(set) => Ok(Some(set)),
        Err(Error::EmptyCohort) => {
            warn!("no user is eligible for survival analysis");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let venues = load_venues(cfg)?;
    let (timelines, summary) = load_timelines(cfg, &venues)?;
    if timelines.is_empty() {
        warn!("no posts from the configured venues");
    }
    let out = OutputDir::acquire(&cfg.out)?;
    let mut w = out.create("timelines.jsonl")?;
    for t in &timelines {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    w.flush()?;
    out.write_json("ingest_summary.json", &summary)?;
    println!(
        "users: {}\nposts: {}\nmalformed lines: {}\nout-of-venue posts: {}",
        summary.users, summary.posts, summary.malformed, summary.out_of_venue
    );
    Ok(())
}

#[derive(Serialize)]
struct CohortSummary {
    seed: u64,
    window_days: i64,
    horizon_days: i64,
    positives: usize,
    negatives: usize,
    eligible_negatives: usize,
    survival_records: usize,
    events: usize,
    censoring_rate: f64,
    skipped_too_few_posts: usize,
    skipped_leading_not_casual: usize,
    skipped_single_day: usize,
    skipped_zero_day_event: usize,
}

pub fn cohort(cfg: &RunConfig) -> Result<()> {
    let venues = load_venues(cfg)?;
    let (timelines, _) = load_timelines(cfg, &venues)?;
    let cohort = label_transition_cohort(&timelines, &venues, &cohort_params(cfg))
        .context("positives: 0; no user moves from casual to recovery venues inside the horizon")?;
    let selection = survival_candidates(&timelines, &venues, &survival_params(cfg));
    let out = OutputDir::acquire(&cfg.out)?;

    let mut w = out.csv("cohort.csv")?;
    w.write_record(["author", "label", "window_posts"])?;
    for e in &cohort.examples {
        w.write_record([e.author.as_str(), e.label.as_str(), &e.window_posts.len().to_string()])?;
    }
    w.flush()?;
    let mut w = out.csv("survival.csv")?;
    w.write_record(["author", "time_days", "event", "observed_posts"])?;
    for c in &selection.candidates {
        w.write_record([
            c.author.as_str(),
            &c.time_days.to_string(),
            &u8::from(c.event).to_string(),
            &c.observed.len().to_string(),
        ])?;
    }
    w.flush()?;

    let n = selection.candidates.len();
    let events = selection.candidates.iter().filter(|c| c.event).count();
    let skipped: SurvivalSkips = selection.skipped;
    let summary = CohortSummary {
        seed: cfg.seed,
        window_days: cfg.window_days,
        horizon_days: cfg.horizon_days,
        positives: cohort.count(transit_core::corpus::Label::CasToRecov),
        negatives: cohort.count(transit_core::corpus::Label::Cas),
        eligible_negatives: cohort.eligible_negatives,
        survival_records: n,
        events,
        censoring_rate: if n == 0 { 0.0 } else { (n - events) as f64 / n as f64 },
        skipped_too_few_posts: skipped.too_few_posts,
        skipped_leading_not_casual: skipped.leading_not_casual,
        skipped_single_day: skipped.single_day,
        skipped_zero_day_event: skipped.zero_day_event,
    };
    out.write_json("cohort_summary.json", &summary)?;
    println!(
        "CAS_TO_RECOV: {}\nCAS: {}\nsurvival records: {} ({} events, censoring rate {:.3})",
        summary.positives, summary.negatives, n, events, summary.censoring_rate
    );
    Ok(())
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let (timelines, resources) = prepare(cfg)?;
    let set = classification_set(&timelines, &resources, &cohort_params(cfg), TEST_FRACTION)?;
    let survival = optional_survival(&timelines, &resources, cfg)?;
    let out = OutputDir::acquire(&cfg.out)?;

    let mut split = vec![String::from("train"); set.labels.len()];
    for &i in &set.test {
        split[i] = "test".into();
    }
    let labels: Vec<String> = set.labels.iter().map(|&y| label_name(y).to_owned()).collect();
    set.matrix
        .write_csv(out.create("features.csv")?, &[("label", labels), ("split", split)])?;
    out.write_json("keywords.json", &set.keywords)?;

    let mut w = out.csv("survival_features.csv")?;
    let names = match &survival {
        Some(s) => s.names.clone(),
        None => resources.extractor(Default::default())?.names().to_vec(),
    };
    let mut header = vec!["author".to_owned(), "time_days".into(), "event".into()];
    header.extend(names);
    w.write_record(&header)?;
    if let Some(s) = &survival {
        for r in &s.records {
            let mut row = vec![r.author.clone(), r.time_days.to_string(), u8::from(r.event).to_string()];
            row.extend(r.covariates.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        out.write_json("survival_keywords.json", &s.keywords)?;
    }
    w.flush()?;
    println!(
        "{} users x {} features ({})",
        set.matrix.n_rows(),
        set.matrix.n_cols(),
        resources.spec
    );
    Ok(())
}

/// Grid search with the requested fold count, or the largest smaller count
/// the class sizes allow.
fn search_trees(x: &[Vec<f64>], y: &[bool], names: &[String], cfg: &RunConfig, base: &ForestParams) -> Result<GridSearch> {
    let k = (2..=cfg.folds)
        .rev()
        .find(|&k| stratified_folds(y, k, cfg.seed).is_ok())
        .context("too few training examples per class for cross-validation; pass a single --trees value")?;
    if k < cfg.folds {
        warn!("using {k}-fold cross-validation; a class is too small for {}", cfg.folds);
    }
    Ok(grid_search(x, y, names, &cfg.trees, k, base)?)
}

#[derive(Serialize)]
struct ForestReport {
    task: &'static str,
    seed: u64,
    window_days: i64,
    features: String,
    n_features: usize,
    n_train: usize,
    n_test: usize,
    n_trees: usize,
    max_depth: usize,
    features_per_split: usize,
    grid: Option<GridSearch>,
    train: EvalReport,
    test: Option<EvalReport>,
}

pub fn train_forest(cfg: &RunConfig) -> Result<()> {
    let (timelines, resources) = prepare(cfg)?;
    let set = classification_set(&timelines, &resources, &cohort_params(cfg), TEST_FRACTION)?;
    let (xt, yt) = set.rows(&set.train);
    let (xv, yv) = set.rows(&set.test);
    let base = ForestParams {
        seed: cfg.seed,
        ..ForestParams::default()
    };
    let grid = if cfg.trees.len() > 1 {
        Some(search_trees(&xt, &yt, &set.matrix.names, cfg, &base)?)
    } else {
        None
    };
    let n_trees = grid.as_ref().map_or(cfg.trees[0], |g| g.best_n_trees);
    let model = fit_forest(&xt, &yt, &set.matrix.names, &ForestParams { n_trees, ..base })?;
    let train = evaluate(&model, &xt, &yt)?;
    let test = if set.test.is_empty() {
        warn!("the test split is empty; reporting training metrics only");
        None
    } else {
        Some(evaluate(&model, &xv, &yv)?)
    };
    let out = OutputDir::acquire(&cfg.out)?;

    let mut w = out.csv("forest_predictions.csv")?;
    w.write_record(["author", "split", "label", "predicted", "score"])?;
    let mut in_test = vec![false; set.labels.len()];
    for &i in &set.test {
        in_test[i] = true;
    }
    for (i, row) in set.matrix.rows.iter().enumerate() {
        let p = model.predict_row(row)?;
        w.write_record([
            set.matrix.ids[i].as_str(),
            if in_test[i] { "test" } else { "train" },
            label_name(set.labels[i]),
            label_name(p.label),
            &p.score.to_string(),
        ])?;
    }
    w.flush()?;

    let report = ForestReport {
        task: "forest",
        seed: cfg.seed,
        window_days: cfg.window_days,
        features: resources.spec.to_string(),
        n_features: set.matrix.n_cols(),
        n_train: set.train.len(),
        n_test: set.test.len(),
        n_trees,
        max_depth: model.max_depth,
        features_per_split: model.features_per_split,
        grid,
        train,
        test,
    };
    out.write_json("forest_report.json", &report)?;
    let saved = SavedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: resources.spec.clone(),
        keywords: set.keywords,
        window_days: cfg.window_days,
        horizon_days: cfg.horizon_days,
        seed: cfg.seed,
        model: Model::Forest(model),
    };
    out.write("forest_model.json", &(saved.to_json()? + "\n"))?;
    match &report.test {
        Some(t) => println!("trees: {n_trees}\ntest accuracy: {:.4}\ntest F1: {:.4}", t.accuracy, t.f1),
        None => println!("trees: {n_trees}\ntrain accuracy: {:.4}", report.train.accuracy),
    }
    Ok(())
}

fn concordance_of(model: &CoxModel, records: &[transit_core::corpus::SurvivalRecord]) -> Result<Option<f64>> {
    let risk = records
        .iter()
        .map(|r| model.linear_predictor_values(&r.covariates))
        .collect::<transit_core::Result<Vec<_>>>()?;
    match c_index(&risk, records) {
        Ok(report) => Ok(Some(report.c_index)),
        Err(Error::UndefinedConcordance) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct CoxReport {
    task: &'static str,
    seed: u64,
    horizon_days: i64,
    features: String,
    n_covariates: usize,
    n_train: usize,
    n_test: usize,
    train_events: usize,
    test_events: usize,
    censoring_rate: f64,
    iterations: usize,
    converged: bool,
    log_likelihood: f64,
    null_log_likelihood: f64,
    ridge: f64,
    warnings: Vec<String>,
    train_c_index: Option<f64>,
    test_c_index: Option<f64>,
}

#[derive(Serialize)]
struct CoefficientRow<'a> {
    covariate: &'a str,
    beta: f64,
    std_error: Option<f64>,
    hazard_ratio: f64,
}

pub fn train_cox(cfg: &RunConfig) -> Result<()> {
    let (timelines, resources) = prepare(cfg)?;
    let set = survival_set(&timelines, &resources, &survival_params(cfg), TEST_FRACTION, cfg.seed)?;
    let train = set.subset(&set.train);
    let test = set.subset(&set.test);
    let model = fit_cox(&train, &set.names, &CoxOptions::default())?;
    let train_c = concordance_of(&model, &train)?;
    let test_c = concordance_of(&model, &test)?;
    if test_c.is_none() {
        warn!("the test split has no comparable pairs; test C-index is undefined");
    }
    let out = OutputDir::acquire(&cfg.out)?;

    let mut w = out.csv("cox_coefficients.csv")?;
    for (j, name) in model.names.iter().enumerate() {
        w.serialize(CoefficientRow {
            covariate: name,
            beta: model.beta_original[j],
            std_error: model.std_errors[j],
            hazard_ratio: model.beta_original[j].exp(),
        })?;
    }
    w.flush()?;
    let baseline = model.baseline_curve(cfg.horizon_days as f64);
    baseline.write_csv(out.create("baseline_survival.csv")?)?;
    if cfg.svg {
        out.write("baseline_survival.svg", &baseline.to_svg("Baseline survival"))?;
    }

    let d = &model.diagnostics;
    let report = CoxReport {
        task: "cox",
        seed: cfg.seed,
        horizon_days: cfg.horizon_days,
        features: resources.spec.to_string(),
        n_covariates: model.names.len(),
        n_train: train.len(),
        n_test: test.len(),
        train_events: train.iter().filter(|r| r.event).count(),
        test_events: test.iter().filter(|r| r.event).count(),
        censoring_rate: set.censoring_rate(),
        iterations: d.iterations,
        converged: d.converged,
        log_likelihood: d.log_likelihood,
        null_log_likelihood: d.null_log_likelihood,
        ridge: d.ridge,
        warnings: d.warnings.clone(),
        train_c_index: train_c,
        test_c_index: test_c,
    };
    out.write_json("cox_report.json", &report)?;
    let saved = SavedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: resources.spec.clone(),
        keywords: set.keywords,
        window_days: cfg.window_days,
        horizon_days: cfg.horizon_days,
        seed: cfg.seed,
        model: Model::Cox(model),
    };
    out.write("cox_model.json", &(saved.to_json()? + "\n"))?;
    let fmt = |c: Option<f64>| c.map_or_else(|| "undefined".to_owned(), |c| format!("{c:.4}"));
    println!("train C-index: {}\ntest C-index: {}", fmt(train_c), fmt(test_c));
    Ok(())
}

fn file_stem(author: &str) -> String {
    author
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn predict(cfg: &RunConfig, model_path: &Path, author: &str) -> Result<()> {
    let text = fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let saved = SavedModel::from_json(&text)?;
    let venues = load_venues(cfg)?;
    let (timelines, _) = load_timelines(cfg, &venues)?;
    let timeline = timelines
        .iter()
        .find(|t| t.author == author)
        .with_context(|| format!("unknown author `{author}`"))?;
    let resources = load_resources(cfg, venues, Some(&saved.spec))?;
    let extractor = resources.extractor(saved.keywords.clone())?;
    let posts = saved.observed_posts(timeline, &resources.venues);
    let x = extractor.extract(author, posts)?;
    let out = OutputDir::acquire(&cfg.out)?;
    let stem = file_stem(author);
    match &saved.model {
        Model::Forest(forest) => {
            let p = predict_forest(forest, &x)?;
            let mut w = out.csv(&format!("prediction_{stem}.csv"))?;
            w.write_record(["author", "label", "score"])?;
            w.write_record([author, label_name(p.label), &p.score.to_string()])?;
            w.flush()?;
            println!("{author}: {} (score {:.3})", label_name(p.label), p.score);
        }
        Model::Cox(cox) => {
            let horizon = saved.horizon_days as f64;
            let curve = predict_curve(cox, &x, horizon)?;
            curve.write_csv(out.create(&format!("survival_{stem}.csv"))?)?;
            if cfg.svg {
                out.write(&format!("survival_{stem}.svg"), &curve.to_svg(&format!("Survival of {author}")))?;
            }
            println!("{author}: S({}) = {:.4}", saved.horizon_days, curve.at(horizon));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ScreeningRow<'a> {
    feature: &'a str,
    h: f64,
    p: f64,
    selected: bool,
}

#[derive(Serialize)]
struct DistributionRow<'a> {
    feature: &'a str,
    label: &'a str,
    n: usize,
    mean: f64,
    std: f64,
    q25: f64,
    q50: f64,
    q75: f64,
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let (timelines, resources) = prepare(cfg)?;
    let set = classification_set(&timelines, &resources, &cohort_params(cfg), TEST_FRACTION)?;
    let train = set.matrix.select_rows(&set.train);
    let train_labels: Vec<bool> = set.train.iter().map(|&i| set.labels[i]).collect();
    let mut screening = kruskal_wallis_table(&train, &train_labels, PValueMethod::ChiSquare)?;
    screening.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.feature.cmp(&b.feature)));

    let survival = optional_survival(&timelines, &resources, cfg)?;
    let opts = CoxOptions::default();
    let (covariates, skipped) = match &survival {
        Some(s) => per_covariate_cindex(&s.subset(&s.train), &s.names, &opts),
        None => (Vec::new(), Vec::new()),
    };
    for (name, reason) in &skipped {
        info!("no single-covariate C-index for {name}: {reason}");
    }
    let by_drug = match &survival {
        Some(s) if resources.spec.has(Family::Drugs) => {
            let train = s.subset(&s.train);
            match fit_cox(&train, &s.names, &opts) {
                Ok(model) => survival_by_top_drug(&train, &model, cfg.horizon_days as f64, MIN_DRUG_GROUP)?,
                Err(e) => {
                    warn!("skipping the per-drug survival table: {e}");
                    Vec::new()
                }
            }
        }
        _ => Vec::new(),
    };
    let out = OutputDir::acquire(&cfg.out)?;

    let mut w = out.csv("kw_screening.csv")?;
    for r in &screening {
        w.serialize(ScreeningRow {
            feature: &r.feature,
            h: r.h,
            p: r.p,
            selected: r.p < cfg.alpha,
        })?;
    }
    w.flush()?;

    let mut w = out.csv("feature_distributions.csv")?;
    for (j, name) in set.matrix.names.iter().enumerate() {
        for positive in [false, true] {
            let values: Vec<f64> = set
                .matrix
                .rows
                .iter()
                .zip(&set.labels)
                .filter(|(_, &y)| y == positive)
                .map(|(row, _)| row[j])
                .collect();
            if let Some(s) = summarize(&values) {
                w.serialize(DistributionRow {
                    feature: name,
                    label: label_name(positive),
                    n: s.n,
                    mean: s.mean,
                    std: s.std,
                    q25: s.q25,
                    q50: s.q50,
                    q75: s.q75,
                })?;
            }
        }
    }
    w.flush()?;

    let mut w = out.csv("covariate_cindex.csv")?;
    w.write_record(["covariate", "c_index", "beta"])?;
    for r in &covariates {
        w.write_record([r.covariate.as_str(), &r.c_index.to_string(), &r.beta.to_string()])?;
    }
    w.flush()?;

    let mut w = out.csv("survival_by_drug.csv")?;
    w.write_record(["drug", "users", "mean_survival", "small_group"])?;
    for r in &by_drug {
        w.write_record([
            r.drug.as_str(),
            &r.users.to_string(),
            &r.mean_survival.to_string(),
            &r.small_group.to_string(),
        ])?;
    }
    w.flush()?;

    let mut text = String::new();
    text.push_str(&format!(
        "# seed {} | window {} days | horizon {} days | alpha {}\n",
        cfg.seed, cfg.window_days, cfg.horizon_days, cfg.alpha
    ));
    text.push_str("# screening uses training users only; p-values from the chi-square approximation\n");
    text.push_str("# quartiles: linear interpolation between order statistics (type 7); std uses n - 1\n\n");
    text.push_str("Kruskal-Wallis screening (top 10)\n");
    text.push_str(&format!("{:<28} {:>10} {:>12}\n", "feature", "H", "p"));
    for r in screening.iter().take(10) {
        text.push_str(&format!("{:<28} {:>10.3} {:>12.3e}\n", r.feature, r.h, r.p));
    }
    let selected = screening.iter().filter(|r| r.p < cfg.alpha).count();
    text.push_str(&format!("{selected} of {} features have p < {}\n\n", screening.len(), cfg.alpha));
    text.push_str("Single-covariate C-index (top 10)\n");
    text.push_str(&format!("{:<28} {:>8} {:>12}\n", "covariate", "C", "beta"));
    for r in covariates.iter().take(10) {
        text.push_str(&format!("{:<28} {:>8.3} {:>12.4}\n", r.covariate, r.c_index, r.beta));
    }
    out.write("report.txt", &text)?;
    print!("{text}");
    Ok(())
}

pub fn km(cfg: &RunConfig) -> Result<()> {
    let venues = load_venues(cfg)?;
    let (timelines, _) = load_timelines(cfg, &venues)?;
    let selection = survival_candidates(&timelines, &venues, &survival_params(cfg));
    let observations: Vec<(f64, bool)> = selection
        .candidates
        .iter()
        .map(|c| (f64::from(c.time_days), c.event))
        .collect();
    let curve = km_estimate(&observations).context("no user is eligible for survival analysis")?;
    let out = OutputDir::acquire(&cfg.out)?;
    curve.write_csv(out.create("km.csv")?)?;
    if cfg.svg {
        out.write("km.svg", &curve.to_svg("Kaplan-Meier estimate"))?;
    }
    println!(
        "{} users, {} events, S({}) = {:.4}",
        observations.len(),
        observations.iter().filter(|o| o.1).count(),
        cfg.horizon_days,
        curve.at(cfg.horizon_days as f64)
    );
    Ok(())
}

pub fn generate_corpus(cfg: &RunConfig, users: usize, embedding_dim: Option<usize>) -> Result<()> {
    let corpus = generate(&SynthParams {
        users,
        seed: cfg.seed,
        embedding_dim,
        ..SynthParams::default()
    })?;
    let out = OutputDir::acquire(&cfg.out)?;
    let mut w = out.create("corpus.jsonl")?;
    corpus.write_jsonl(&mut w)?;
    w.flush()?;
    let venues = SynthCorpus::venues();
    out.write(
        "venues.txt",
        &format!(
            "casual = {}\nrecovery = {}\n",
            venues.casual().collect::<Vec<_>>().join(", "),
            venues.recovery().collect::<Vec<_>>().join(", ")
        ),
    )?;
    out.write("drugs.tsv", SYNTH_DRUG_LEXICON)?;
    corpus.write_truth(out.create("truth.csv")?)?;
    if embedding_dim.is_some() {
        let mut w = out.create("embeddings.tsv")?;
        corpus.write_embeddings(&mut w)?;
        w.flush()?;
    }
    println!("{} users, {} posts written to {}", users, corpus.posts.len(), cfg.out.display());
    Ok(())
}
