//! Post ingestion, per-user timelines, and the two datasets built from them:
//! the labeled transition cohort and the right-censored survival records.
//!
//! All day arithmetic uses whole-day offsets from a user's first observed
//! post: `floor((created - first_created) / 86400)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Six months of observation.
pub const DEFAULT_WINDOW_DAYS: i64 = 182;
/// Twelve months of follow-up.
pub const DEFAULT_HORIZON_DAYS: i64 = 365;

/// One forum submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub author: String,
    pub subreddit: String,
    /// Seconds since the Unix epoch (UTC).
    pub created: i64,
    pub title: String,
    #[serde(default)]
    pub body: String,
}

impl Post {
    pub fn new(
        author: impl Into<String>,
        subreddit: impl Into<String>,
        created: i64,
        title: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self> {
        let post = Post {
            author: author.into(),
            subreddit: subreddit.into(),
            created,
            title: title.into(),
            body: body.into(),
        };
        if post.author.is_empty() || post.subreddit.is_empty() {
            return Err(Error::InvalidInput(
                "post author and subreddit must be non-empty".into(),
            ));
        }
        if post.created <= 0 {
            return Err(Error::InvalidInput(format!(
                "post timestamp must be positive, got {}",
                post.created
            )));
        }
        Ok(post)
    }

    /// Title and body joined by a single space; empty parts are skipped.
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.body.is_empty()) {
            (false, false) => format!("{} {}", self.title, self.body),
            (false, true) => self.title.clone(),
            (true, _) => self.body.clone(),
        }
    }

    /// Length of [`Post::text`] in characters.
    pub fn char_len(&self) -> usize {
        self.text().chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Venue {
    Casual,
    Recovery,
}

/// Which subreddits count as casual drug discussion and which as recovery.
/// Names are compared case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VenueConfig {
    casual: BTreeSet<String>,
    recovery: BTreeSet<String>,
}

fn normalize_venue(name: &str) -> String {
    let name = name.trim();
    let name = name
        .strip_prefix("r/")
        .or_else(|| name.strip_prefix("/r/"))
        .unwrap_or(name);
    name.to_lowercase()
}

impl VenueConfig {
    pub fn new<I, J, S, T>(casual: I, recovery: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let casual: BTreeSet<String> = casual
            .into_iter()
            .map(|s| normalize_venue(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        let recovery: BTreeSet<String> = recovery
            .into_iter()
            .map(|s| normalize_venue(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        if casual.is_empty() || recovery.is_empty() {
            return Err(Error::Venues(
                "both casual and recovery venue lists must be non-empty".into(),
            ));
        }
        if let Some(shared) = casual.intersection(&recovery).next() {
            return Err(Error::Venues(format!(
                "`{shared}` is listed as both casual and recovery"
            )));
        }
        Ok(VenueConfig { casual, recovery })
    }

    /// r/Opiates and r/Drugs as casual, r/OpiatesRecovery and
    /// r/RedditorsInRecovery as recovery.
    pub fn standard() -> Self {
        VenueConfig::new(
            ["Opiates", "Drugs"],
            ["OpiatesRecovery", "RedditorsInRecovery"],
        )
        .expect("standard venues are valid")
    }

    /// Parses `casual = a, b` / `recovery = c, d` lines. Keys may repeat;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut casual = Vec::new();
        let mut recovery = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                file: "venues".into(),
                line: lineno + 1,
                message: format!("expected `casual = ...` or `recovery = ...`, got `{line}`"),
            })?;
            let names = value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key.trim().to_lowercase().as_str() {
                "casual" => casual.extend(names.map(str::to_owned)),
                "recovery" => recovery.extend(names.map(str::to_owned)),
                other => {
                    return Err(Error::Parse {
                        file: "venues".into(),
                        line: lineno + 1,
                        message: format!("unknown venue class `{other}`"),
                    })
                }
            }
        }
        VenueConfig::new(casual, recovery)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        VenueConfig::parse(&text)
    }

    pub fn classify(&self, subreddit: &str) -> Option<Venue> {
        let name = normalize_venue(subreddit);
        if self.casual.contains(&name) {
            Some(Venue::Casual)
        } else if self.recovery.contains(&name) {
            Some(Venue::Recovery)
        } else {
            None
        }
    }

    pub fn is_casual(&self, subreddit: &str) -> bool {
        self.classify(subreddit) == Some(Venue::Casual)
    }

    pub fn is_recovery(&self, subreddit: &str) -> bool {
        self.classify(subreddit) == Some(Venue::Recovery)
    }

    pub fn casual(&self) -> impl Iterator<Item = &str> {
        self.casual.iter().map(String::as_str)
    }

    pub fn recovery(&self) -> impl Iterator<Item = &str> {
        self.recovery.iter().map(String::as_str)
    }
}

impl Default for VenueConfig {
    fn default() -> Self {
        VenueConfig::standard()
    }
}

/// Result of reading a line-delimited post stream.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub posts: Vec<Post>,
    /// Non-blank lines read.
    pub lines: usize,
    /// Lines that were not valid JSON objects or lacked a required field.
    pub malformed: usize,
    /// Well-formed posts in subreddits outside the venue configuration.
    pub out_of_venue: usize,
}

fn parse_created(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => n.as_i64().or_else(|| {
            n.as_f64()
                .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                .map(|f| f as i64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_record(line: &str) -> Option<Post> {
    let record: Value = serde_json::from_str(line).ok()?;
    let obj = record.as_object()?;
    let text_field = |key: &str| obj.get(key).and_then(Value::as_str);
    let author = text_field("author")?;
    let subreddit = text_field("subreddit")?;
    let created = parse_created(obj.get("created_utc")?)?;
    let title = text_field("title").unwrap_or("");
    let body = text_field("selftext")
        .or_else(|| text_field("body"))
        .unwrap_or("");
    Post::new(author, subreddit, created, title, body).ok()
}

/// Reads one JSON object per line and keeps posts from configured venues.
/// Malformed lines are counted, never fatal; only a failing reader errors.
pub fn ingest_posts<R: BufRead>(reader: R, venues: &VenueConfig) -> Result<Ingested> {
    let mut out = Ingested::default();
    for line in reader.lines() {
        let line = line.map_err(Error::Ingestion)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.lines += 1;
        match parse_record(line) {
            None => out.malformed += 1,
            Some(post) if venues.classify(&post.subreddit).is_some() => out.posts.push(post),
            Some(_) => out.out_of_venue += 1,
        }
    }
    Ok(out)
}

pub fn ingest_file(path: &Path, venues: &VenueConfig) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_posts(BufReader::new(file), venues)
}

/// A single author's posts in ascending timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTimeline {
    pub author: String,
    pub posts: Vec<Post>,
}

impl UserTimeline {
    pub fn first_created(&self) -> Option<i64> {
        self.posts.first().map(|p| p.created)
    }

    /// Whole days elapsed since this user's first post.
    pub fn day_offset(&self, post: &Post) -> i64 {
        let first = self.first_created().unwrap_or(post.created);
        (post.created - first).div_euclid(SECONDS_PER_DAY)
    }

    pub fn day_offsets(&self) -> Vec<i64> {
        self.posts.iter().map(|p| self.day_offset(p)).collect()
    }
}

/// Groups posts by author (timelines come out ordered by author name) and
/// sorts each timeline by timestamp; equal timestamps keep input order.
pub fn build_timelines(posts: Vec<Post>) -> Vec<UserTimeline> {
    let mut by_author: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for post in posts {
        by_author.entry(post.author.clone()).or_default().push(post);
    }
    by_author
        .into_iter()
        .map(|(author, mut posts)| {
            posts.sort_by_key(|p| p.created);
            UserTimeline { author, posts }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Stayed in casual venues.
    #[serde(rename = "CAS")]
    Cas,
    /// Moved from casual to recovery venues.
    #[serde(rename = "CAS_TO_RECOV")]
    CasToRecov,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Cas, Label::CasToRecov];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cas => "CAS",
            Label::CasToRecov => "CAS_TO_RECOV",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::CasToRecov
    }

    pub fn other(self) -> Label {
        match self {
            Label::Cas => Label::CasToRecov,
            Label::CasToRecov => Label::Cas,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CAS" => Ok(Label::Cas),
            "CAS_TO_RECOV" => Ok(Label::CasToRecov),
            other => Err(Error::InvalidInput(format!("unknown label `{other}`"))),
        }
    }
}

/// A labeled user with the casual posts from their observation window.
/// `window_posts` is always a prefix of the user's timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortExample {
    pub author: String,
    pub label: Label,
    pub window_posts: Vec<Post>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortParams {
    pub window_days: i64,
    pub horizon_days: i64,
    pub seed: u64,
    pub negatives_per_positive: usize,
    pub min_posts: usize,
}

impl Default for CohortParams {
    fn default() -> Self {
        CohortParams {
            window_days: DEFAULT_WINDOW_DAYS,
            horizon_days: DEFAULT_HORIZON_DAYS,
            seed: 42,
            negatives_per_positive: 1,
            min_posts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    /// Sorted by author.
    pub examples: Vec<CohortExample>,
    /// Users satisfying the negative-class rule before down-sampling.
    pub eligible_negatives: usize,
}

impl Cohort {
    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }
}

enum CohortRole {
    Positive(usize),
    Negative(usize),
}

fn cohort_role(timeline: &UserTimeline, venues: &VenueConfig, params: &CohortParams) -> Option<CohortRole> {
    if timeline.posts.len() < params.min_posts {
        return None;
    }
    let days = timeline.day_offsets();
    let window_len = days.iter().take_while(|&&d| d <= params.window_days).count();
    let window = &timeline.posts[..window_len];
    if window.is_empty() || window.iter().any(|p| !venues.is_casual(&p.subreddit)) {
        return None;
    }
    let first_recovery = timeline
        .posts
        .iter()
        .zip(&days)
        .find(|(p, _)| venues.is_recovery(&p.subreddit))
        .map(|(_, &d)| d);
    let follow_up_end = params.window_days + params.horizon_days;
    match first_recovery {
        Some(day) if day > params.window_days && day <= follow_up_end => {
            Some(CohortRole::Positive(window_len))
        }
        Some(_) => None,
        None => {
            let span = days.last().copied().unwrap_or(0);
            (span >= follow_up_end).then_some(CohortRole::Negative(window_len))
        }
    }
}

/// Builds the balanced CAS / CAS_TO_RECOV cohort.
///
/// Positives have at least `min_posts` posts, only casual posts during the
/// first `window_days`, and a first recovery post in the following
/// `horizon_days`. Negatives have no recovery post at all and casual posts
/// spanning at least `window_days + horizon_days`; they are sampled with a
/// seeded generator to `negatives_per_positive` per positive.
pub fn label_transition_cohort(
    timelines: &[UserTimeline],
    venues: &VenueConfig,
    params: &CohortParams,
) -> Result<Cohort> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for timeline in timelines {
        match cohort_role(timeline, venues, params) {
            Some(CohortRole::Positive(n)) => positives.push((timeline, n)),
            Some(CohortRole::Negative(n)) => negatives.push((timeline, n)),
            None => {}
        }
    }
    if positives.is_empty() {
        return Err(Error::EmptyCohort);
    }
    // Sampling order must not depend on the caller's timeline order.
    negatives.sort_by(|a, b| a.0.author.cmp(&b.0.author));
    let eligible_negatives = negatives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    negatives.shuffle(&mut rng);
    negatives.truncate(positives.len().saturating_mul(params.negatives_per_positive));

    let mut examples: Vec<CohortExample> = positives
        .into_iter()
        .map(|(t, n)| (t, n, Label::CasToRecov))
        .chain(negatives.into_iter().map(|(t, n)| (t, n, Label::Cas)))
        .map(|(t, n, label)| CohortExample {
            author: t.author.clone(),
            label,
            window_posts: t.posts[..n].to_vec(),
        })
        .collect();
    examples.sort_by(|a, b| a.author.cmp(&b.author));
    Ok(Cohort {
        examples,
        eligible_negatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurvivalParams {
    pub horizon_days: i64,
    pub min_posts: usize,
    /// How many leading posts must be in casual venues.
    pub leading_casual: usize,
}

impl Default for SurvivalParams {
    fn default() -> Self {
        SurvivalParams {
            horizon_days: DEFAULT_HORIZON_DAYS,
            min_posts: 10,
            leading_casual: 3,
        }
    }
}

/// An eligible survival subject before covariates are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalCandidate {
    pub author: String,
    pub time_days: u32,
    pub event: bool,
    /// Posts strictly before `time_days`; a prefix of the timeline.
    pub observed: Vec<Post>,
}

/// The `(y, delta, x)` triple for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub author: String,
    pub time_days: u32,
    pub event: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SurvivalSkips {
    pub too_few_posts: usize,
    pub leading_not_casual: usize,
    pub single_day: usize,
    pub zero_day_event: usize,
}

impl SurvivalSkips {
    pub fn total(&self) -> usize {
        self.too_few_posts + self.leading_not_casual + self.single_day + self.zero_day_event
    }
}

#[derive(Debug, Clone, Default)]
pub struct SurvivalSelection {
    pub candidates: Vec<SurvivalCandidate>,
    pub skipped: SurvivalSkips,
}

/// Applies the survival eligibility rules and computes `(time, event)`.
///
/// A user needs `min_posts` posts, the first `leading_casual` of them in
/// casual venues, and posts on at least two distinct days. The event is
/// the first recovery post if it falls within the horizon; otherwise the
/// user is censored at the earlier of their last post day and the horizon.
/// A first recovery post on day 0 excludes the user.
pub fn survival_candidates(
    timelines: &[UserTimeline],
    venues: &VenueConfig,
    params: &SurvivalParams,
) -> SurvivalSelection {
    let mut selection = SurvivalSelection::default();
    for timeline in timelines {
        let posts = &timeline.posts;
        if posts.len() < params.min_posts {
            selection.skipped.too_few_posts += 1;
            continue;
        }
        if posts
            .iter()
            .take(params.leading_casual)
            .any(|p| !venues.is_casual(&p.subreddit))
        {
            selection.skipped.leading_not_casual += 1;
            continue;
        }
        let days = timeline.day_offsets();
        let last_day = days.last().copied().unwrap_or(0);
        if last_day == 0 {
            selection.skipped.single_day += 1;
            continue;
        }
        let first_recovery = posts
            .iter()
            .zip(&days)
            .find(|(p, _)| venues.is_recovery(&p.subreddit))
            .map(|(_, &d)| d);
        let (time, event) = match first_recovery {
            Some(0) => {
                selection.skipped.zero_day_event += 1;
                continue;
            }
            Some(day) if day <= params.horizon_days => (day, true),
            _ => (last_day.min(params.horizon_days), false),
        };
        let observed = days.iter().take_while(|&&d| d < time).count();
        selection.candidates.push(SurvivalCandidate {
            author: timeline.author.clone(),
            time_days: time as u32,
            event,
            observed: posts[..observed].to_vec(),
        });
    }
    selection
}

/// Eligibility, outcome and covariates in one pass. Covariates come from
/// the posts strictly before each user's event or censoring time.
pub fn build_survival_records(
    timelines: &[UserTimeline],
    venues: &VenueConfig,
    extractor: &FeatureExtractor,
    params: &SurvivalParams,
) -> Result<(Vec<SurvivalRecord>, SurvivalSkips)> {
    let selection = survival_candidates(timelines, venues, params);
    let records = selection
        .candidates
        .into_iter()
        .map(|c| {
            let features = extractor.extract(&c.author, &c.observed)?;
            Ok(SurvivalRecord {
                author: c.author,
                time_days: c.time_days,
                event: c.event,
                covariates: features.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, selection.skipped))
}
