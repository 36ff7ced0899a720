//! Per-user feature vectors and rank-based feature screening.
//!
//! Vectors are laid out in a fixed block order so that every user of one
//! [`FeatureExtractor`] shares the same column names:
//!
//! | block      | columns                                              |
//! |------------|------------------------------------------------------|
//! | drugs      | `drug:<canonical>` shares, then `risk:<tier>` shares |
//! | categories | `cat:<category>` percentages                         |
//! | keywords   | `kw:CAS`, `kw:CAS_TO_RECOV` hits per post            |
//! | embedding  | `emb:<i>` centroid coordinates                       |
//! | volume     | `vol:posts`, `vol:mean_length`                       |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{Label, Post};
use crate::error::{Error, Result};
use crate::lexicon::{tokenize, CategoryLexicon, DrugLexicon, KeywordSet};

pub const DEFAULT_EMBEDDING_DIM: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Drugs,
    Categories,
    Keywords,
    Embedding,
    Volume,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Drugs,
        Family::Categories,
        Family::Keywords,
        Family::Embedding,
        Family::Volume,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Drugs => "drugs",
            Family::Categories => "categories",
            Family::Keywords => "keywords",
            Family::Embedding => "embedding",
            Family::Volume => "volume",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature family `{s}`")))
    }
}

/// Which feature families to extract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    families: BTreeSet<Family>,
    pub embedding_dim: usize,
}

impl FeatureSpec {
    pub fn new(families: impl IntoIterator<Item = Family>, embedding_dim: usize) -> Result<Self> {
        let families: BTreeSet<Family> = families.into_iter().collect();
        if families.is_empty() {
            return Err(Error::InvalidInput("at least one feature family must be enabled".into()));
        }
        if families.contains(&Family::Embedding) && embedding_dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        Ok(FeatureSpec {
            families,
            embedding_dim,
        })
    }

    /// Comma-separated family names, e.g. `drugs,categories,keywords`.
    pub fn parse(list: &str, embedding_dim: usize) -> Result<Self> {
        let families = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Family::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::new(families, embedding_dim)
    }

    pub fn has(&self, family: Family) -> bool {
        self.families.contains(&family)
    }

    pub fn families(&self) -> impl Iterator<Item = Family> + '_ {
        self.families.iter().copied()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.families.iter().map(|f| f.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("feature `{}` is not finite", names[i])));
        }
        Ok(FeatureVector { names, values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Arithmetic mean of the vectors, coordinate by coordinate.
pub fn embed_centroid<V: AsRef<[f64]>>(vectors: &[V], dim: usize) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::MissingEmbedding(String::new()));
    }
    let mut sum = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Externally produced post vectors keyed by `(author, index)`, where the
/// index is the post's position in the author's date-ordered timeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, BTreeMap<usize, Vec<f64>>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, author: &str, index: usize, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.vectors
            .entry(author.to_owned())
            .or_default()
            .insert(index, vector);
        Ok(())
    }

    pub fn get(&self, author: &str, index: usize) -> Option<&[f64]> {
        self.vectors.get(author)?.get(&index).map(Vec::as_slice)
    }

    /// Reads `author<TAB>post_index<TAB>v1,v2,...` lines. The dimension is
    /// taken from `dim`, or from the first line when `dim` is `None`.
    pub fn read<R: Read>(reader: R, dim: Option<usize>) -> Result<Self> {
        let mut store = EmbeddingStore::new(dim.unwrap_or(0));
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(Error::Ingestion)?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                file: "embeddings".into(),
                line: i + 1,
                message,
            };
            let mut fields = line.split('\t');
            let (Some(author), Some(index), Some(values), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err("expected `author<TAB>post_index<TAB>v1,v2,...`".into()));
            };
            let index: usize = index.trim().parse().map_err(|_| err(format!("bad post index `{index}`")))?;
            let vector = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(format!("bad vector component: {e}")))?;
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(err("vector components must be finite".into()));
            }
            if store.dim == 0 {
                store.dim = vector.len();
            }
            store.insert(author.trim(), index, vector).map_err(|e| err(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn load(path: &Path, dim: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, dim)
    }
}

/// Turns a user's posts into a [`FeatureVector`] according to a
/// [`FeatureSpec`].
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    spec: FeatureSpec,
    drugs: DrugLexicon,
    categories: CategoryLexicon,
    keywords: KeywordSet,
    embeddings: Option<EmbeddingStore>,
    names: Vec<String>,
}

impl FeatureExtractor {
    pub fn new(
        spec: FeatureSpec,
        drugs: DrugLexicon,
        categories: CategoryLexicon,
        keywords: KeywordSet,
        embeddings: Option<EmbeddingStore>,
    ) -> Result<Self> {
        let embeddings = if spec.has(Family::Embedding) {
            let store = embeddings.ok_or_else(|| {
                Error::InvalidInput("the embedding family is enabled but no embeddings were supplied".into())
            })?;
            if store.dim() != spec.embedding_dim {
                return Err(Error::Dimension {
                    expected: spec.embedding_dim,
                    found: store.dim(),
                });
            }
            Some(store)
        } else {
            None
        };
        let mut names = Vec::new();
        if spec.has(Family::Drugs) {
            names.extend(drugs.names().iter().map(|n| format!("drug:{n}")));
            let tiers: BTreeSet<&String> = drugs.risk_tiers().values().collect();
            names.extend(tiers.into_iter().map(|t| format!("risk:{t}")));
        }
        if spec.has(Family::Categories) {
            names.extend(categories.names().iter().map(|n| format!("cat:{n}")));
        }
        if spec.has(Family::Keywords) {
            names.extend(Label::ALL.iter().map(|l| format!("kw:{l}")));
        }
        if spec.has(Family::Embedding) {
            names.extend((0..spec.embedding_dim).map(|i| format!("emb:{i}")));
        }
        if spec.has(Family::Volume) {
            names.push("vol:posts".into());
            names.push("vol:mean_length".into());
        }
        Ok(FeatureExtractor {
            spec,
            drugs,
            categories,
            keywords,
            embeddings,
            names,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn keywords(&self) -> &KeywordSet {
        &self.keywords
    }

    pub fn drugs(&self) -> &DrugLexicon {
        &self.drugs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Features for `posts`, which must be a prefix of `author`'s timeline
    /// so that post positions line up with embedding indices.
    pub fn extract(&self, author: &str, posts: &[Post]) -> Result<FeatureVector> {
        let tokens: Vec<Vec<String>> = posts.iter().map(|p| tokenize(&p.text())).collect();
        let mut values = Vec::with_capacity(self.names.len());

        if self.spec.has(Family::Drugs) {
            let mut counts = vec![0; self.drugs.names().len()];
            for t in &tokens {
                self.drugs.count_tokens(t, &mut counts);
            }
            let total: usize = counts.iter().sum();
            let share = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
            values.extend(counts.iter().map(|&c| share(c)));
            let tiers: BTreeSet<&String> = self.drugs.risk_tiers().values().collect();
            for tier in tiers {
                let in_tier: usize = self
                    .drugs
                    .names()
                    .iter()
                    .zip(&counts)
                    .filter(|(n, _)| self.drugs.risk_tiers().get(*n) == Some(tier))
                    .map(|(_, c)| c)
                    .sum();
                values.push(share(in_tier));
            }
        }
        if self.spec.has(Family::Categories) {
            let mut counts = vec![0; self.categories.names().len()];
            let mut total = 0usize;
            for t in &tokens {
                total += t.len();
                self.categories.count_tokens(t, &mut counts);
            }
            values.extend(counts.into_iter().map(|c| {
                if total == 0 {
                    0.0
                } else {
                    100.0 * c as f64 / total as f64
                }
            }));
        }
        if self.spec.has(Family::Keywords) {
            for label in Label::ALL {
                let matcher = self.keywords.matcher(label);
                let hits: usize = tokens
                    .iter()
                    .flatten()
                    .filter(|t| matcher.contains(t.as_str()))
                    .count();
                values.push(if posts.is_empty() { 0.0 } else { hits as f64 / posts.len() as f64 });
            }
        }
        if let Some(store) = &self.embeddings {
            let found: Vec<&[f64]> = (0..posts.len()).filter_map(|i| store.get(author, i)).collect();
            let centroid = embed_centroid(&found, store.dim()).map_err(|e| match e {
                Error::MissingEmbedding(_) => Error::MissingEmbedding(author.to_owned()),
                other => other,
            })?;
            values.extend(centroid);
        }
        if self.spec.has(Family::Volume) {
            values.push(posts.len() as f64);
            let mean_len = if posts.is_empty() {
                0.0
            } else {
                posts.iter().map(Post::char_len).sum::<usize>() as f64 / posts.len() as f64
            };
            values.push(mean_len);
        }
        FeatureVector::new(self.names.clone(), values)
    }
}

/// One row per user, columns named identically for every row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>) -> Self {
        FeatureMatrix {
            names,
            ids: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, row: FeatureVector) -> Result<()> {
        if row.names != self.names {
            return Err(Error::Contract(format!(
                "row for `{}` has a different feature layout",
                id.into()
            )));
        }
        self.ids.push(id.into());
        self.rows.push(row.values);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// CSV with an `id` column followed by the feature names. `extra`
    /// columns (e.g. labels) are written between the two.
    pub fn write_csv<W: Write>(&self, writer: W, extra: &[(&str, Vec<String>)]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_owned()];
        header.extend(extra.iter().map(|(n, _)| (*n).to_owned()));
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, (id, row)) in self.ids.iter().zip(&self.rows).enumerate() {
            let mut record = vec![id.clone()];
            record.extend(extra.iter().map(|(_, col)| col[i].clone()));
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(Error::Ingestion)?;
        Ok(())
    }
}

/// Kruskal-Wallis H statistic with its chi-square degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalWallis {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Chi-square upper tail with `k - 1` degrees of freedom.
    #[default]
    ChiSquare,
    /// Full enumeration of group assignments; refuses inputs with more than
    /// the given number of assignments.
    Exact { max_assignments: u64 },
}

/// Average ranks (1-based) of the pooled values and the tie correction
/// factor `1 - sum(t^3 - t) / (N^3 - N)`.
fn pooled_ranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    (ranks, 1.0 - ties / (nf * nf * nf - nf))
}

fn h_from_rank_sums(rank_sums: &[f64], sizes: &[usize], n: usize, correction: f64) -> f64 {
    let nf = n as f64;
    let ss: f64 = rank_sums.iter().zip(sizes).map(|(r, &m)| r * r / m as f64).sum();
    let h = (12.0 / (nf * (nf + 1.0)) * ss - 3.0 * (nf + 1.0)) / correction;
    h.max(0.0)
}

fn check_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput("Kruskal-Wallis needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::InvalidInput("Kruskal-Wallis groups must be non-empty".into()));
    }
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Kruskal-Wallis values must be finite".into()));
    }
    Ok(())
}

/// Tie-corrected Kruskal-Wallis test with a chi-square p-value.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<KruskalWallis> {
    kruskal_wallis_with(groups, PValueMethod::ChiSquare)
}

pub fn kruskal_wallis_with<G: AsRef<[f64]>>(groups: &[G], method: PValueMethod) -> Result<KruskalWallis> {
    check_groups(groups)?;
    let df = groups.len() - 1;
    let sizes: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let n = pooled.len();
    let (ranks, correction) = pooled_ranks(&pooled);
    if correction <= 0.0 {
        return Ok(KruskalWallis {
            statistic: 0.0,
            p_value: 1.0,
            df,
        });
    }
    let mut rank_sums = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for &m in &sizes {
        rank_sums.push(ranks[offset..offset + m].iter().sum::<f64>());
        offset += m;
    }
    let statistic = h_from_rank_sums(&rank_sums, &sizes, n, correction);
    let p_value = match method {
        PValueMethod::ChiSquare => {
            let dist = ChiSquared::new(df as f64).expect("df >= 1");
            dist.sf(statistic).clamp(0.0, 1.0)
        }
        PValueMethod::Exact { max_assignments } => {
            exact_p_value(&ranks, &sizes, correction, statistic, max_assignments)?
        }
    };
    Ok(KruskalWallis {
        statistic,
        p_value,
        df,
    })
}

fn multinomial(sizes: &[usize]) -> Option<u64> {
    let mut total: u64 = 1;
    let mut placed: u64 = 0;
    for &m in sizes {
        for i in 1..=m as u64 {
            placed += 1;
            // total * placed / i stays integral: it is a running binomial product.
            total = total.checked_mul(placed)? / i;
        }
    }
    Some(total)
}

fn exact_p_value(ranks: &[f64], sizes: &[usize], correction: f64, observed: f64, limit: u64) -> Result<f64> {
    let count = multinomial(sizes).filter(|&c| c <= limit).ok_or_else(|| {
        Error::InvalidInput(format!(
            "exact Kruskal-Wallis p-value needs more than {limit} assignments"
        ))
    })?;

    struct Walk<'a> {
        ranks: &'a [f64],
        sizes: &'a [usize],
        remaining: Vec<usize>,
        sums: Vec<f64>,
        correction: f64,
        threshold: f64,
        extreme: u64,
    }

    impl Walk<'_> {
        fn go(&mut self, item: usize) {
            if item == self.ranks.len() {
                let h = h_from_rank_sums(&self.sums, self.sizes, self.ranks.len(), self.correction);
                if h >= self.threshold {
                    self.extreme += 1;
                }
                return;
            }
            for g in 0..self.sizes.len() {
                if self.remaining[g] == 0 {
                    continue;
                }
                self.remaining[g] -= 1;
                self.sums[g] += self.ranks[item];
                self.go(item + 1);
                self.sums[g] -= self.ranks[item];
                self.remaining[g] += 1;
            }
        }
    }

    let mut walk = Walk {
        ranks,
        sizes,
        remaining: sizes.to_vec(),
        sums: vec![0.0; sizes.len()],
        correction,
        threshold: observed - 1e-9 * observed.abs().max(1.0),
        extreme: 0,
    };
    walk.go(0);
    Ok(walk.extreme as f64 / count as f64)
}

/// Kruskal-Wallis outcome for one named feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    pub feature: String,
    pub h: f64,
    pub p: f64,
}

/// Tests every column of `matrix` for a difference between the two label
/// groups, in column order. A column whose values are all identical gets
/// `H = 0, p = 1`.
pub fn kruskal_wallis_table(matrix: &FeatureMatrix, labels: &[bool], method: PValueMethod) -> Result<Vec<KwResult>> {
    if labels.len() != matrix.n_rows() {
        return Err(Error::Dimension {
            expected: matrix.n_rows(),
            found: labels.len(),
        });
    }
    (0..matrix.n_cols())
        .map(|j| {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (row, &y) in matrix.rows.iter().zip(labels) {
                if y { pos.push(row[j]) } else { neg.push(row[j]) }
            }
            let kw = kruskal_wallis_with(&[neg, pos], method)?;
            Ok(KwResult {
                feature: matrix.names[j].clone(),
                h: kw.statistic,
                p: kw.p_value,
            })
        })
        .collect()
}

/// Features whose Kruskal-Wallis p-value is below `alpha`, most significant
/// first. Pass training rows only.
pub fn screen_features(matrix: &FeatureMatrix, labels: &[bool], alpha: f64, method: PValueMethod) -> Result<Vec<KwResult>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut selected: Vec<KwResult> = kruskal_wallis_table(matrix, labels, method)?
        .into_iter()
        .filter(|r| r.p < alpha)
        .collect();
    selected.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.feature.cmp(&b.feature)));
    Ok(selected)
}

/// Mean, sample standard deviation and quartiles of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Quantile by linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        n,
        mean,
        std,
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn post(text: &str) -> Post {
        Post::new("u", "Drugs", 1, text, "").unwrap()
    }

    fn extractor(families: &[Family], keywords: KeywordSet) -> FeatureExtractor {
        FeatureExtractor::new(
            FeatureSpec::new(families.iter().copied(), 2).unwrap(),
            DrugLexicon::demo(),
            CategoryLexicon::demo(),
            keywords,
            None,
        )
        .unwrap()
    }

    #[test]
    fn centroid_examples() {
        let v = vec![0.25, -3.0, 7.5];
        assert_eq!(embed_centroid(&[v.clone(), v.clone()], 3).unwrap(), v);
        assert_eq!(embed_centroid(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(embed_centroid::<Vec<f64>>(&[], 2), Err(Error::MissingEmbedding(_))));
        assert!(matches!(
            embed_centroid(&[vec![1.0], vec![1.0, 2.0]], 1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn volume_block() {
        let fx = extractor(&[Family::Volume], KeywordSet::default());
        let posts = [post(&"a".repeat(10)), post(&"b".repeat(20)), post(&"c".repeat(30))];
        let v = fx.extract("u", &posts).unwrap();
        assert_eq!(v.values, vec![3.0, 20.0]);
        assert_eq!(v.names, vec!["vol:posts", "vol:mean_length"]);
    }

    #[test]
    fn drug_block_is_zero_without_mentions() {
        let fx = extractor(&[Family::Drugs], KeywordSet::default());
        let v = fx.extract("u", &[post("nothing to see")]).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(v.values.len(), DrugLexicon::demo().names().len());
    }

    #[test]
    fn keyword_rates() {
        let keywords = KeywordSet {
            cas: vec![crate::lexicon::Keyword { word: "trip".into(), odds_ratio: 4.0 }],
            cas_to_recov: vec![crate::lexicon::Keyword { word: "quit".into(), odds_ratio: 5.0 }],
        };
        let fx = extractor(&[Family::Keywords], keywords);
        let posts = [post("great trip"), post("another trip"), post("hello"), post("world")];
        let v = fx.extract("u", &posts).unwrap();
        assert_eq!(v.get("kw:CAS"), Some(0.5));
        assert_eq!(v.get("kw:CAS_TO_RECOV"), Some(0.0));
    }

    #[test]
    fn block_order_is_fixed() {
        let mut store = EmbeddingStore::new(2);
        store.insert("u", 0, vec![1.0, 3.0]).unwrap();
        let fx = FeatureExtractor::new(
            FeatureSpec::new(Family::ALL, 2).unwrap(),
            DrugLexicon::demo(),
            CategoryLexicon::demo(),
            KeywordSet::default(),
            Some(store),
        )
        .unwrap();
        let names = fx.names();
        let first = |prefix: &str| names.iter().position(|n| n.starts_with(prefix)).unwrap();
        assert!(first("drug:") < first("cat:"));
        assert!(first("cat:") < first("kw:"));
        assert!(first("kw:") < first("emb:"));
        assert!(first("emb:") < first("vol:"));
        let v = fx.extract("u", &[post("x"), post("y")]).unwrap();
        assert_eq!(v.get("emb:0"), Some(1.0));
        assert_eq!(v.get("emb:1"), Some(3.0));
        assert!(matches!(fx.extract("nobody", &[post("x")]), Err(Error::MissingEmbedding(a)) if a == "nobody"));
    }

    #[test]
    fn embedding_family_requires_store() {
        let spec = FeatureSpec::new([Family::Embedding], 4).unwrap();
        assert!(FeatureExtractor::new(spec, DrugLexicon::demo(), CategoryLexicon::demo(), KeywordSet::default(), None).is_err());
        assert!(FeatureSpec::new([], 4).is_err());
        assert!(FeatureSpec::parse("drugs,bogus", 4).is_err());
        assert_eq!(FeatureSpec::parse("volume,drugs", 4).unwrap().to_string(), "drugs,volume");
    }

    #[test]
    fn embedding_file_parse() {
        let text = "a\t0\t1.0,2.0\na\t1\t3,4\nb\t0\t0,0\n";
        let store = EmbeddingStore::read(text.as_bytes(), None).unwrap();
        assert_eq!(store.dim(), 2);
        assert_eq!(store.len(), 3);
        assert_eq!(store.get("a", 1), Some(&[3.0, 4.0][..]));
        assert!(EmbeddingStore::read("a\t0\t1,2\na\t1\t3\n".as_bytes(), None).is_err());
        assert!(EmbeddingStore::read("a\tx\t1,2\n".as_bytes(), None).is_err());
    }

    #[test]
    fn kruskal_wallis_hand_example() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_relative_eq!(kw.statistic, 27.0 / 7.0, epsilon = 1e-12);
        assert_eq!(kw.df, 1);
        let swapped = kruskal_wallis(&[vec![4.0, 5.0, 6.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(kw.statistic, swapped.statistic);
    }

    #[test]
    fn kruskal_wallis_degenerate() {
        let kw = kruskal_wallis(&[vec![2.0, 2.0], vec![2.0]]).unwrap();
        assert_eq!((kw.statistic, kw.p_value), (0.0, 1.0));
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn kruskal_wallis_ties() {
        // Pooled [1,1,2,3,3,3]: ranks 1.5,1.5,3,5,5,5; tie term 6 + 24 = 30 over 210.
        let kw = kruskal_wallis(&[vec![1.0, 1.0, 3.0], vec![2.0, 3.0, 3.0]]).unwrap();
        let r1 = 1.5 + 1.5 + 5.0;
        let r2 = 3.0 + 5.0 + 5.0;
        let raw = 12.0 / 42.0 * (r1 * r1 / 3.0 + r2 * r2 / 3.0) - 21.0;
        assert_relative_eq!(kw.statistic, raw / (1.0 - 30.0 / 210.0), epsilon = 1e-12);
    }

    #[test]
    fn exact_p_value_small_fixture() {
        // Two groups of three: 20 equally likely splits, 2 of which are as
        // extreme as a perfect separation.
        let kw = kruskal_wallis_with(
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            PValueMethod::Exact { max_assignments: 1_000_000 },
        )
        .unwrap();
        assert_relative_eq!(kw.p_value, 2.0 / 20.0, epsilon = 1e-12);
        let err = kruskal_wallis_with(&[vec![1.0; 20], vec![2.0; 20]], PValueMethod::Exact { max_assignments: 1000 });
        assert!(err.is_err());
    }

    #[test]
    fn screening_selects_and_sorts() {
        let mut m = FeatureMatrix::new(vec!["constant".into(), "signal".into(), "weak".into()]);
        let mut labels = Vec::new();
        for i in 0..40 {
            let y = i % 2 == 0;
            let row = vec![1.0, f64::from(u8::from(y)) + 0.001 * i as f64, ((i * 7) % 11) as f64];
            m.push(format!("u{i}"), FeatureVector::new(m.names.clone(), row).unwrap()).unwrap();
            labels.push(y);
        }
        let sel = screen_features(&m, &labels, 0.05, PValueMethod::ChiSquare).unwrap();
        assert_eq!(sel[0].feature, "signal");
        assert!(sel[0].p < 1e-6);
        assert!(sel.iter().all(|r| r.feature != "constant"));
        let all = kruskal_wallis_table(&m, &labels, PValueMethod::ChiSquare).unwrap();
        assert_eq!(all[0].p, 1.0);
        assert!(screen_features(&m, &labels, 1.5, PValueMethod::ChiSquare).is_err());
    }

    #[test]
    fn type7_quartiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_relative_eq!(s.q25, 1.75);
        assert_relative_eq!(s.q50, 2.5);
        assert_relative_eq!(s.q75, 3.25);
        assert_relative_eq!(s.mean, 2.5);
        assert_relative_eq!(s.std, (5.0f64 / 3.0).sqrt());
        assert_eq!(summarize(&[7.0]).unwrap().q75, 7.0);
        assert!(summarize(&[]).is_none());
    }
}
