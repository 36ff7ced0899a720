//! Seeded synthetic corpora with a planted transition signal.
//!
//! About half of the users are "risky": most of their drug mentions are of
//! `drugA`, they use words like "quit" and "clean", and they move to a
//! recovery venue between six and roughly eighteen months after their first
//! post. The rest mostly mention other drugs, talk about "trip" and
//! "festival", and almost never transition.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::Serialize;

use crate::corpus::{Post, VenueConfig, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::features::EmbeddingStore;

const EPOCH: i64 = 1_420_070_400;

pub const SYNTH_DRUG_LEXICON: &str = "\
# alias\tcanonical
druga\tdrugA
drug a\tdrugA
drugb\tdrugB
drugc\tdrugC
drugd\tdrugD
druge\tdrugE
";

const OTHER_DRUGS: [&str; 4] = ["drugb", "drugc", "drugd", "druge"];
const FILLER: [&str; 24] = [
    "i", "am", "feel", "today", "was", "will", "friend", "family", "money", "work", "happy", "sad", "worried",
    "lol", "tired", "eat", "night", "week", "really", "think", "good", "bad", "the", "and",
];
const RISKY_WORDS: [&str; 3] = ["quit", "clean", "withdrawal"];
const SAFE_WORDS: [&str; 3] = ["trip", "festival", "music"];
const RECOVERY_WORDS: [&str; 6] = ["sober", "meeting", "support", "day", "clean", "recovery"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub users: usize,
    pub seed: u64,
    pub risky_fraction: f64,
    /// Mean days between the six-month mark and a risky user's transition.
    pub risky_mean_delay: f64,
    pub safe_mean_delay: f64,
    /// Emit per-post embeddings of this dimension.
    pub embedding_dim: Option<usize>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            users: 2000,
            seed: 42,
            risky_fraction: 0.5,
            risky_mean_delay: 150.0,
            safe_mean_delay: 20_000.0,
            embedding_dim: None,
        }
    }
}

/// What the generator planted for one user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthTruth {
    pub author: String,
    pub risky: bool,
    pub drug_a_share: f64,
    /// Day of the first recovery post, if it falls inside the generated span.
    pub transition_day: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    pub truth: Vec<SynthTruth>,
    pub embeddings: Option<EmbeddingStore>,
}

fn sentence(rng: &mut ChaCha8Rng, risky: bool, share: f64) -> String {
    let len = rng.random_range(8..=18);
    let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(rng).expect("non-empty")).collect();
    for _ in 0..rng.random_range(1..=2) {
        let drug = if rng.random_bool(share) {
            "druga"
        } else {
            OTHER_DRUGS.choose(rng).expect("non-empty")
        };
        let at = rng.random_range(0..=words.len());
        words.insert(at, drug);
    }
    let marker = if risky { &RISKY_WORDS } else { &SAFE_WORDS };
    if rng.random_bool(0.35) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, marker.choose(rng).expect("non-empty"));
    }
    words.join(" ")
}

fn recovery_sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(6..=12);
    (0..len)
        .map(|_| *RECOVERY_WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    if !(0.0..=1.0).contains(&params.risky_fraction) || params.risky_mean_delay <= 0.0 || params.safe_mean_delay <= 0.0
    {
        return Err(Error::InvalidInput("invalid synthetic corpus parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let risky_delay = Exp::new(1.0 / params.risky_mean_delay).expect("positive rate");
    let safe_delay = Exp::new(1.0 / params.safe_mean_delay).expect("positive rate");
    let risky_share = Uniform::new(0.5, 0.9).expect("valid range");
    let safe_share = Uniform::new(0.0, 0.3).expect("valid range");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut embeddings = params.embedding_dim.map(EmbeddingStore::new);

    let mut posts = Vec::new();
    let mut truth = Vec::with_capacity(params.users);
    for u in 0..params.users {
        let author = format!("user{u:05}");
        let risky = rng.random_bool(params.risky_fraction);
        let share = if risky {
            risky_share.sample(&mut rng)
        } else {
            safe_share.sample(&mut rng)
        };
        let span: i64 = rng.random_range(600..=900);
        let n_casual = rng.random_range(10..=25);
        let mut days: Vec<i64> = vec![0];
        days.extend((0..3).map(|_| rng.random_range(1..=150)));
        days.extend((4..n_casual).map(|_| rng.random_range(1..=span)));
        days.sort_unstable();

        let delay = if risky {
            risky_delay.sample(&mut rng)
        } else {
            safe_delay.sample(&mut rng)
        };
        let transition = 183 + delay.floor() as i64;
        let mut timeline: Vec<(i64, bool)> = days.into_iter().map(|d| (d, false)).collect();
        let transition_day = (transition <= span).then_some(transition);
        if let Some(t) = transition_day {
            timeline.push((t, true));
            for _ in 0..rng.random_range(0..=3) {
                timeline.push((t + rng.random_range(1..=60), true));
            }
            timeline.sort_by_key(|&(d, recovery)| (d, recovery));
        }

        let base = EPOCH + u as i64 * 600;
        for (idx, &(day, recovery)) in timeline.iter().enumerate() {
            let (subreddit, body) = if recovery {
                ("OpiatesRecovery", recovery_sentence(&mut rng))
            } else {
                ("Drugs", sentence(&mut rng, risky, share))
            };
            let created = base + day * SECONDS_PER_DAY + idx as i64;
            posts.push(Post::new(&author, subreddit, created, "", &body)?);
            if let Some(store) = embeddings.as_mut() {
                let signal = if risky { 0.75 } else { -0.75 };
                let vector: Vec<f64> = (0..store.dim())
                    .map(|k| noise.sample(&mut rng) + if k == 0 { signal } else { 0.0 })
                    .collect();
                store.insert(&author, idx, vector)?;
            }
        }
        truth.push(SynthTruth {
            author,
            risky,
            drug_a_share: share,
            transition_day,
        });
    }
    Ok(SynthCorpus {
        posts,
        truth,
        embeddings,
    })
}

impl SynthCorpus {
    pub fn venues() -> VenueConfig {
        VenueConfig::standard()
    }

    /// One JSON object per line in the Pushshift submission layout.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for post in &self.posts {
            let line = serde_json::json!({
                "author": post.author,
                "subreddit": post.subreddit,
                "created_utc": post.created,
                "title": post.title,
                "selftext": post.body,
            });
            writeln!(out, "{line}").map_err(Error::Ingestion)?;
        }
        Ok(())
    }

    /// `author<TAB>index<TAB>v1,v2,...` lines.
    pub fn write_embeddings<W: Write>(&self, mut out: W) -> Result<()> {
        let Some(store) = &self.embeddings else {
            return Ok(());
        };
        for t in &self.truth {
            let mut idx = 0;
            while let Some(v) = store.get(&t.author, idx) {
                let joined: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                writeln!(out, "{}\t{}\t{}", t.author, idx, joined.join(",")).map_err(Error::Ingestion)?;
                idx += 1;
            }
        }
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for t in &self.truth {
            writer.serialize(t)?;
        }
        writer.flush().map_err(Error::Ingestion)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_timelines, ingest_posts};
    use crate::lexicon::{count_drug_utterances, DrugLexicon};

    #[test]
    fn deterministic_and_ingestible() {
        let params = SynthParams {
            users: 40,
            embedding_dim: Some(3),
            ..SynthParams::default()
        };
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(a.posts, b.posts);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let ingested = ingest_posts(buf.as_slice(), &SynthCorpus::venues()).unwrap();
        assert_eq!(ingested.posts.len(), a.posts.len());
        assert_eq!(ingested.malformed, 0);
        let timelines = build_timelines(ingested.posts);
        assert_eq!(timelines.len(), 40);
        let store = a.embeddings.as_ref().unwrap();
        for t in &timelines {
            assert!(store.get(&t.author, t.posts.len() - 1).is_some());
            assert!(store.get(&t.author, t.posts.len()).is_none());
        }
    }

    #[test]
    fn planted_share_is_visible() {
        let corpus = generate(&SynthParams {
            users: 60,
            ..SynthParams::default()
        })
        .unwrap();
        let lex = DrugLexicon::parse(SYNTH_DRUG_LEXICON).unwrap();
        let timelines = build_timelines(corpus.posts.clone());
        let mut risky_mean = (0.0, 0);
        let mut safe_mean = (0.0, 0);
        for (t, truth) in timelines.iter().zip(&corpus.truth) {
            assert_eq!(t.author, truth.author);
            let share = count_drug_utterances(&t.posts, &lex).get("drugA").copied().unwrap_or(0.0);
            let acc = if truth.risky { &mut risky_mean } else { &mut safe_mean };
            acc.0 += share;
            acc.1 += 1;
        }
        assert!(risky_mean.0 / risky_mean.1 as f64 > 0.5);
        assert!(safe_mean.0 / (safe_mean.1 as f64) < 0.3);
    }
}
