//! End-to-end assembly: cohorts and survival records, train/test splits,
//! keyword selection on the training side only, and feature matrices.

use serde::{Deserialize, Serialize};

use crate::classifier::{stratified_split, ForestModel};
use crate::corpus::{
    label_transition_cohort, survival_candidates, Cohort, CohortParams, Label, Post, SurvivalParams,
    SurvivalRecord, SurvivalSkips, UserTimeline, VenueConfig,
};
use crate::error::{Error, Result};
use crate::features::{EmbeddingStore, Family, FeatureExtractor, FeatureMatrix, FeatureSpec};
use crate::lexicon::{select_keywords, CategoryLexicon, DrugLexicon, KeywordParams, KeywordSet};
use crate::survival::CoxModel;

pub const TEST_FRACTION: f64 = 0.2;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Lexicons, venues and feature choices shared by every stage.
#[derive(Debug, Clone)]
pub struct Resources {
    pub venues: VenueConfig,
    pub drugs: DrugLexicon,
    pub categories: CategoryLexicon,
    pub embeddings: Option<EmbeddingStore>,
    pub spec: FeatureSpec,
    pub keyword_params: KeywordParams,
}

impl Resources {
    pub fn extractor(&self, keywords: KeywordSet) -> Result<FeatureExtractor> {
        FeatureExtractor::new(
            self.spec.clone(),
            self.drugs.clone(),
            self.categories.clone(),
            keywords,
            self.embeddings.clone(),
        )
    }

    fn keywords<'a>(&self, positive: impl Iterator<Item = &'a Post>, negative: impl Iterator<Item = &'a Post>) -> Result<KeywordSet> {
        if !self.spec.has(Family::Keywords) {
            return Ok(KeywordSet::default());
        }
        let recov: Vec<String> = positive.map(Post::text).collect();
        let cas: Vec<String> = negative.map(Post::text).collect();
        if cas.is_empty() || recov.is_empty() {
            log::warn!("one class has no training posts; keyword features will be zero");
            return Ok(KeywordSet::default());
        }
        select_keywords(&cas, &recov, &self.keyword_params)
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationSet {
    pub cohort: Cohort,
    /// `true` for CAS_TO_RECOV, in cohort order.
    pub labels: Vec<bool>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub keywords: KeywordSet,
    pub matrix: FeatureMatrix,
}

impl ClassificationSet {
    pub fn rows(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            idx.iter().map(|&i| self.matrix.rows[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Builds the labelled cohort, splits it, picks keywords from the training
/// users' window posts and extracts every user's features.
pub fn classification_set(
    timelines: &[UserTimeline],
    resources: &Resources,
    params: &CohortParams,
    test_fraction: f64,
) -> Result<ClassificationSet> {
    let cohort = label_transition_cohort(timelines, &resources.venues, params)?;
    let labels: Vec<bool> = cohort.examples.iter().map(|e| e.label.is_positive()).collect();
    let (train, test) = stratified_split(&labels, test_fraction, params.seed)?;
    let (train_ref, labels_ref) = (&train, &labels);
    let train_posts = |positive: bool| {
        train_ref
            .iter()
            .filter(move |&&i| labels_ref[i] == positive)
            .flat_map(|&i| cohort.examples[i].window_posts.iter())
    };
    let keywords = resources.keywords(train_posts(true), train_posts(false))?;
    let extractor = resources.extractor(keywords.clone())?;
    let mut matrix = FeatureMatrix::new(extractor.names().to_vec());
    for example in &cohort.examples {
        matrix.push(
            example.author.clone(),
            extractor.extract(&example.author, &example.window_posts)?,
        )?;
    }
    Ok(ClassificationSet {
        cohort,
        labels,
        train,
        test,
        keywords,
        matrix,
    })
}

#[derive(Debug, Clone)]
pub struct SurvivalSet {
    pub records: Vec<SurvivalRecord>,
    pub names: Vec<String>,
    pub skipped: SurvivalSkips,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub keywords: KeywordSet,
}

impl SurvivalSet {
    pub fn subset(&self, idx: &[usize]) -> Vec<SurvivalRecord> {
        idx.iter().map(|&i| self.records[i].clone()).collect()
    }

    pub fn censoring_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| !r.event).count() as f64 / self.records.len() as f64
    }
}

/// Selects survival subjects, splits them stratified by event status, picks
/// keywords from training users (events as the transition class) and
/// extracts covariates from each user's pre-outcome posts.
pub fn survival_set(
    timelines: &[UserTimeline],
    resources: &Resources,
    params: &SurvivalParams,
    test_fraction: f64,
    seed: u64,
) -> Result<SurvivalSet> {
    let selection = survival_candidates(timelines, &resources.venues, params);
    if selection.candidates.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let events: Vec<bool> = selection.candidates.iter().map(|c| c.event).collect();
    let (train, test) = stratified_split(&events, test_fraction, seed)?;
    let candidates = &selection.candidates;
    let (train_ref, events_ref) = (&train, &events);
    let train_posts = |event: bool| {
        train_ref
            .iter()
            .filter(move |&&i| events_ref[i] == event)
            .flat_map(|&i| candidates[i].observed.iter())
    };
    let keywords = resources.keywords(train_posts(true), train_posts(false))?;
    let extractor = resources.extractor(keywords.clone())?;
    let records = candidates
        .iter()
        .map(|c| {
            Ok(SurvivalRecord {
                author: c.author.clone(),
                time_days: c.time_days,
                event: c.event,
                covariates: extractor.extract(&c.author, &c.observed)?.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalSet {
        records,
        names: extractor.names().to_vec(),
        skipped: selection.skipped,
        train,
        test,
        keywords,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Model {
    Forest(ForestModel),
    Cox(CoxModel),
}

/// A trained model together with what is needed to featurize new users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub spec: FeatureSpec,
    pub keywords: KeywordSet,
    pub window_days: i64,
    pub horizon_days: i64,
    pub seed: u64,
    pub model: Model,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: SavedModel = serde_json::from_str(text)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(saved.format_version));
        }
        Ok(saved)
    }

    /// The prefix of `timeline` this model reads: the observation window for
    /// a forest, and the posts before the first recovery post (capped at the
    /// horizon) for a Cox model.
    pub fn observed_posts<'a>(&self, timeline: &'a UserTimeline, venues: &VenueConfig) -> &'a [Post] {
        let days = timeline.day_offsets();
        let n = match self.model {
            Model::Forest(_) => days.iter().take_while(|&&d| d <= self.window_days).count(),
            Model::Cox(_) => timeline
                .posts
                .iter()
                .zip(&days)
                .take_while(|(p, &d)| d < self.horizon_days && !venues.is_recovery(&p.subreddit))
                .count(),
        };
        &timeline.posts[..n]
    }
}

/// Class names in the order used for report columns.
pub fn label_name(positive: bool) -> &'static str {
    if positive {
        Label::CasToRecov.as_str()
    } else {
        Label::Cas.as_str()
    }
}
