//! Tokenization and lexicon-driven text measures: drug utterances,
//! word-category scores and odds-ratio keywords.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Post};
use crate::error::{Error, Result};

/// Lowercases and splits on every character that is not a letter, a digit
/// or an apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines of a tab-separated lexicon file with comments and blanks removed.
fn tsv_lines<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            return None;
        }
        Some((i + 1, line.split('\t').map(str::trim).collect()))
    })
}

/// Maps surface forms (single words or phrases) to canonical drug names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugLexicon {
    names: Vec<String>,
    aliases: HashMap<Vec<String>, usize>,
    longest_alias: usize,
    risk_tiers: BTreeMap<String, String>,
}

impl DrugLexicon {
    /// Builds a lexicon from `(alias, canonical)` pairs. Every canonical name
    /// is also an alias of itself.
    pub fn new<I, A, C>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, C)>,
        A: AsRef<str>,
        C: AsRef<str>,
    {
        let pairs: Vec<(String, String)> = entries
            .into_iter()
            .map(|(a, c)| (a.as_ref().trim().to_owned(), c.as_ref().trim().to_owned()))
            .collect();
        Self::build(pairs, BTreeMap::new(), "drug lexicon")
    }

    fn build(pairs: Vec<(String, String)>, risk_tiers: BTreeMap<String, String>, file: &str) -> Result<Self> {
        let names: Vec<String> = pairs
            .iter()
            .map(|(_, c)| c.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if names.iter().any(String::is_empty) {
            return Err(Error::Parse {
                file: file.into(),
                line: 0,
                message: "empty canonical drug name".into(),
            });
        }
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut aliases: HashMap<Vec<String>, usize> = HashMap::new();
        let mut insert = |surface: &str, canonical: usize, explicit: bool| -> Result<()> {
            let tokens = tokenize(surface);
            if tokens.is_empty() {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 0,
                    message: format!("alias `{surface}` has no word characters"),
                });
            }
            match aliases.get(&tokens) {
                Some(&existing) if existing != canonical => {
                    if explicit {
                        Err(Error::Parse {
                            file: file.into(),
                            line: 0,
                            message: format!(
                                "alias `{surface}` maps to both `{}` and `{}`",
                                names[existing], names[canonical]
                            ),
                        })
                    } else {
                        Ok(())
                    }
                }
                Some(_) => Ok(()),
                None => {
                    aliases.insert(tokens, canonical);
                    Ok(())
                }
            }
        };
        for (alias, canonical) in &pairs {
            insert(alias, index[canonical.as_str()], true)?;
        }
        for (i, name) in names.iter().enumerate() {
            insert(name, i, false)?;
        }
        let longest_alias = aliases.keys().map(Vec::len).max().unwrap_or(0);
        Ok(DrugLexicon {
            names,
            aliases,
            longest_alias,
            risk_tiers,
        })
    }

    /// `alias<TAB>canonical[<TAB>risk tier]` lines, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut tiers: BTreeMap<String, String> = BTreeMap::new();
        for (line, fields) in tsv_lines(text) {
            let err = |message: String| Error::Parse {
                file: "drug lexicon".into(),
                line,
                message,
            };
            let (alias, canonical) = match fields.as_slice() {
                [a, c] | [a, c, _] if !a.is_empty() && !c.is_empty() => (*a, *c),
                _ => return Err(err("expected `alias<TAB>canonical[<TAB>tier]`".into())),
            };
            if let Some(tier) = fields.get(2).filter(|t| !t.is_empty()) {
                if let Some(prev) = tiers.insert(canonical.to_owned(), (*tier).to_owned()) {
                    if prev != *tier {
                        return Err(err(format!("`{canonical}` has conflicting risk tiers `{prev}` and `{tier}`")));
                    }
                }
            }
            pairs.push((alias.to_owned(), canonical.to_owned()));
        }
        Self::build(pairs, tiers, "drug lexicon")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    /// A small lexicon of common drugs and their street and brand names.
    pub fn demo() -> Self {
        Self::parse(include_str!("../data/demo_drugs.tsv")).expect("bundled drug lexicon is valid")
    }

    /// Canonical names in sorted order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn risk_tiers(&self) -> &BTreeMap<String, String> {
        &self.risk_tiers
    }

    pub fn canonical(&self, alias: &str) -> Option<&str> {
        self.aliases.get(&tokenize(alias)).map(|&i| self.names[i].as_str())
    }

    /// Adds mention counts for one token stream into `counts` (indexed like
    /// [`DrugLexicon::names`]). Matching is leftmost-longest and consumes the
    /// matched tokens.
    pub fn count_tokens(&self, tokens: &[String], counts: &mut [usize]) {
        let mut i = 0;
        while i < tokens.len() {
            let max = self.longest_alias.min(tokens.len() - i);
            let hit = (1..=max).rev().find_map(|len| {
                self.aliases.get(&tokens[i..i + len]).map(|&c| (len, c))
            });
            match hit {
                Some((len, canonical)) => {
                    counts[canonical] += 1;
                    i += len;
                }
                None => i += 1,
            }
        }
    }

    /// Mention counts per canonical name over a set of posts.
    pub fn mention_counts<'a>(&self, posts: impl IntoIterator<Item = &'a Post>) -> Vec<usize> {
        let mut counts = vec![0; self.names.len()];
        for post in posts {
            self.count_tokens(&tokenize(&post.text()), &mut counts);
        }
        counts
    }
}

/// Each drug's share of all drug mentions across the posts; empty when no
/// drug is mentioned.
pub fn count_drug_utterances(posts: &[Post], lex: &DrugLexicon) -> BTreeMap<String, f64> {
    let counts = lex.mention_counts(posts);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return BTreeMap::new();
    }
    lex.names()
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(name, c)| (name.clone(), c as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pattern {
    Word(String),
    Prefix(String),
}

impl Pattern {
    fn parse(raw: &str) -> Option<Pattern> {
        let raw = raw.trim().to_lowercase();
        match raw.strip_suffix('*') {
            Some(prefix) if !prefix.is_empty() => Some(Pattern::Prefix(prefix.to_owned())),
            Some(_) => None,
            None if !raw.is_empty() => Some(Pattern::Word(raw)),
            None => None,
        }
    }
}

/// Word categories in the style of psycholinguistic dictionaries. A pattern
/// is a literal word or a prefix ending in `*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLexicon {
    names: Vec<String>,
    words: HashMap<String, Vec<usize>>,
    prefixes: Vec<(String, usize)>,
}

impl CategoryLexicon {
    pub fn new<I, C, P>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, P)>,
        C: AsRef<str>,
        P: AsRef<str>,
    {
        let mut by_category: BTreeMap<String, Vec<Pattern>> = BTreeMap::new();
        for (category, pattern) in entries {
            let category = category.as_ref().trim();
            let parsed = Pattern::parse(pattern.as_ref()).ok_or_else(|| Error::Parse {
                file: "category lexicon".into(),
                line: 0,
                message: format!("invalid pattern `{}` for `{category}`", pattern.as_ref()),
            })?;
            if category.is_empty() {
                return Err(Error::Parse {
                    file: "category lexicon".into(),
                    line: 0,
                    message: "empty category name".into(),
                });
            }
            by_category.entry(category.to_owned()).or_default().push(parsed);
        }
        let mut lex = CategoryLexicon {
            names: Vec::with_capacity(by_category.len()),
            words: HashMap::new(),
            prefixes: Vec::new(),
        };
        for (idx, (name, patterns)) in by_category.into_iter().enumerate() {
            lex.names.push(name);
            for pattern in patterns {
                match pattern {
                    Pattern::Word(w) => {
                        let cats = lex.words.entry(w).or_default();
                        if !cats.contains(&idx) {
                            cats.push(idx);
                        }
                    }
                    Pattern::Prefix(p) => lex.prefixes.push((p, idx)),
                }
            }
        }
        Ok(lex)
    }

    /// `category<TAB>pattern` lines, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (line, fields) in tsv_lines(text) {
            match fields.as_slice() {
                [c, p] if !c.is_empty() && Pattern::parse(p).is_some() => entries.push((*c, *p)),
                _ => {
                    return Err(Error::Parse {
                        file: "category lexicon".into(),
                        line,
                        message: "expected `category<TAB>pattern` with a non-empty pattern".into(),
                    })
                }
            }
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    /// Seventeen open categories covering time focus, affect, social and
    /// informal-language words.
    pub fn demo() -> Self {
        Self::parse(include_str!("../data/demo_categories.tsv")).expect("bundled category lexicon is valid")
    }

    /// Category names in sorted order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds each category's matching-token count into `counts`; a token
    /// counts at most once per category.
    pub fn count_tokens(&self, tokens: &[String], counts: &mut [usize]) {
        let mut seen = vec![false; self.names.len()];
        for token in tokens {
            seen.iter_mut().for_each(|s| *s = false);
            if let Some(cats) = self.words.get(token) {
                for &c in cats {
                    seen[c] = true;
                }
            }
            for (prefix, c) in &self.prefixes {
                if token.starts_with(prefix.as_str()) {
                    seen[*c] = true;
                }
            }
            for (count, hit) in counts.iter_mut().zip(&seen) {
                *count += usize::from(*hit);
            }
        }
    }
}

/// Percentage of all tokens matching each category; every category is
/// present, and all are zero when the posts have no tokens.
pub fn category_scores(posts: &[Post], lex: &CategoryLexicon) -> BTreeMap<String, f64> {
    let mut counts = vec![0; lex.names().len()];
    let mut total = 0usize;
    for post in posts {
        let tokens = tokenize(&post.text());
        total += tokens.len();
        lex.count_tokens(&tokens, &mut counts);
    }
    lex.names()
        .iter()
        .zip(counts)
        .map(|(name, c)| {
            let score = if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
            (name.clone(), score)
        })
        .collect()
}

/// Odds that a class-`c` post contains the word relative to the odds for a
/// post outside `c`: `(with_c * without_not_c) / (with_not_c * without_c)`.
/// When any cell is zero, 0.5 is added to every cell.
pub fn odds_ratio(with_c: u64, without_c: u64, with_not_c: u64, without_not_c: u64) -> Result<f64> {
    let cells = [with_c, without_c, with_not_c, without_not_c];
    if cells.iter().all(|&c| c == 0) {
        return Err(Error::UndefinedOddsRatio);
    }
    let shift = if cells.contains(&0) { 0.5 } else { 0.0 };
    let [a, b, c, d] = cells.map(|v| v as f64 + shift);
    Ok((a * d) / (c * b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeywordParams {
    /// Minimum number of training posts (both classes) containing a word.
    pub min_posts: usize,
    pub min_odds_ratio: f64,
    pub min_gap: f64,
}

impl Default for KeywordParams {
    fn default() -> Self {
        KeywordParams {
            min_posts: 5,
            min_odds_ratio: 2.0,
            min_gap: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    pub odds_ratio: f64,
}

/// Discriminative words for each class, strongest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub cas: Vec<Keyword>,
    pub cas_to_recov: Vec<Keyword>,
}

impl KeywordSet {
    pub fn for_label(&self, label: Label) -> &[Keyword] {
        match label {
            Label::Cas => &self.cas,
            Label::CasToRecov => &self.cas_to_recov,
        }
    }

    pub fn contains(&self, label: Label, word: &str) -> bool {
        self.for_label(label).iter().any(|k| k.word == word)
    }

    pub fn matcher(&self, label: Label) -> HashSet<&str> {
        self.for_label(label).iter().map(|k| k.word.as_str()).collect()
    }
}

fn post_vocabulary(texts: &[impl AsRef<str>]) -> HashMap<String, u64> {
    let mut df: HashMap<String, u64> = HashMap::new();
    for text in texts {
        let unique: HashSet<String> = tokenize(text.as_ref()).into_iter().collect();
        for word in unique {
            *df.entry(word).or_default() += 1;
        }
    }
    df
}

/// Selects keywords from post-level presence counts of training posts.
///
/// `w` is a keyword for class `c` when `OR(c, w)` exceeds
/// `min_odds_ratio` and differs from `OR(not c, w)` by more than `min_gap`.
pub fn select_keywords<S: AsRef<str>>(
    cas_posts: &[S],
    recov_posts: &[S],
    params: &KeywordParams,
) -> Result<KeywordSet> {
    if cas_posts.is_empty() || recov_posts.is_empty() {
        return Err(Error::InvalidInput(
            "keyword selection needs training posts from both classes".into(),
        ));
    }
    let cas_df = post_vocabulary(cas_posts);
    let recov_df = post_vocabulary(recov_posts);
    let n_cas = cas_posts.len() as u64;
    let n_recov = recov_posts.len() as u64;
    let vocabulary: BTreeSet<&String> = cas_df.keys().chain(recov_df.keys()).collect();

    let mut set = KeywordSet::default();
    for word in vocabulary {
        let in_cas = cas_df.get(word).copied().unwrap_or(0);
        let in_recov = recov_df.get(word).copied().unwrap_or(0);
        if ((in_cas + in_recov) as usize) < params.min_posts {
            continue;
        }
        let or_recov = odds_ratio(in_recov, n_recov - in_recov, in_cas, n_cas - in_cas)?;
        let or_cas = odds_ratio(in_cas, n_cas - in_cas, in_recov, n_recov - in_recov)?;
        let gap = (or_recov - or_cas).abs();
        if gap <= params.min_gap {
            continue;
        }
        let keyword = |odds_ratio| Keyword {
            word: word.clone(),
            odds_ratio,
        };
        if or_recov > params.min_odds_ratio {
            set.cas_to_recov.push(keyword(or_recov));
        } else if or_cas > params.min_odds_ratio {
            set.cas.push(keyword(or_cas));
        }
    }
    for list in [&mut set.cas, &mut set.cas_to_recov] {
        list.sort_by(|a, b| b.odds_ratio.total_cmp(&a.odds_ratio).then_with(|| a.word.cmp(&b.word)));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(text: &str) -> Post {
        Post::new("u", "Drugs", 1, text, "").unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Finished my stash"), ["finished", "my", "stash"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("15 x 100mcg Fent patches"), ["15", "x", "100mcg", "fent", "patches"]);
        assert_eq!(tokenize("I don't--know!"), ["i", "don't", "know"]);
    }

    #[test]
    fn drug_utterances() {
        let lex = DrugLexicon::new([("coke", "cocaine"), ("oxy", "oxycodone"), ("heroin", "Heroin")]).unwrap();
        let got = count_drug_utterances(&[p("did some coke and oxy")], &lex);
        assert_eq!(got.len(), 2);
        assert_relative_eq!(got["cocaine"], 0.5);
        assert_relative_eq!(got["oxycodone"], 0.5);

        assert!(count_drug_utterances(&[p("nothing here")], &lex).is_empty());

        let got = count_drug_utterances(&[p("heroin heroin oxy")], &lex);
        assert_relative_eq!(got["Heroin"], 2.0 / 3.0);
        assert_relative_eq!(got["oxycodone"], 1.0 / 3.0);
    }

    #[test]
    fn multiword_aliases_are_leftmost_longest() {
        let lex = DrugLexicon::new([
            ("black tar", "Heroin"),
            ("black tar heroin", "Heroin"),
            ("tar", "tarwort"),
            ("crystal meth", "methamphetamine"),
        ])
        .unwrap();
        let mut counts = vec![0; lex.names().len()];
        lex.count_tokens(&tokenize("black tar heroin then tar and crystal meth"), &mut counts);
        let by_name: BTreeMap<_, _> = lex.names().iter().cloned().zip(counts).collect();
        assert_eq!(by_name["Heroin"], 1);
        assert_eq!(by_name["tarwort"], 1);
        assert_eq!(by_name["methamphetamine"], 1);
    }

    #[test]
    fn drug_lexicon_parse_and_conflicts() {
        let lex = DrugLexicon::parse("# demo\noxy\toxycodone\thigh\nOxyContin\toxycodone\n").unwrap();
        assert_eq!(lex.canonical("OXYCONTIN"), Some("oxycodone"));
        assert_eq!(lex.risk_tiers()["oxycodone"], "high");
        assert!(DrugLexicon::parse("oxy\toxycodone\noxy\tother\n").is_err());
        assert!(DrugLexicon::parse("oxy\n").is_err());
    }

    #[test]
    fn category_scores_examples() {
        let lex = CategoryLexicon::new([("focuspresent", "today"), ("focuspresent", "is"), ("focuspresent", "now")]).unwrap();
        let s = category_scores(&[p("today is now")], &lex);
        assert_relative_eq!(s["focuspresent"], 100.0);
        let s = category_scores(&[], &lex);
        assert_eq!(s["focuspresent"], 0.0);

        let lex = CategoryLexicon::new([("leisure", "movie"), ("leisure", "chat*"), ("focuspresent", "today")]).unwrap();
        let s = category_scores(&[p("the movie today")], &lex);
        assert_relative_eq!(s["leisure"], 100.0 / 3.0);
        assert_relative_eq!(s["focuspresent"], 100.0 / 3.0);
        let s = category_scores(&[p("chatting chats chat"), p("movie")], &lex);
        assert_relative_eq!(s["leisure"], 100.0);
    }

    #[test]
    fn token_counts_once_per_category_but_across_categories() {
        let lex = CategoryLexicon::new([("a", "work*"), ("a", "working"), ("b", "work*")]).unwrap();
        let s = category_scores(&[p("working hard")], &lex);
        assert_relative_eq!(s["a"], 50.0);
        assert_relative_eq!(s["b"], 50.0);
    }

    #[test]
    fn category_lexicon_rejects_bad_patterns() {
        assert!(CategoryLexicon::parse("cat\t*\n").is_err());
        assert!(CategoryLexicon::parse("cat\n").is_err());
        assert_eq!(CategoryLexicon::demo().names().len(), 17);
    }

    #[test]
    fn odds_ratio_examples() {
        assert_relative_eq!(odds_ratio(30, 70, 10, 90).unwrap(), 2700.0 / 700.0);
        assert_relative_eq!(odds_ratio(7, 3, 7, 3).unwrap(), 1.0);
        assert_relative_eq!(odds_ratio(5, 95, 0, 100).unwrap(), (5.5 * 100.5) / (0.5 * 95.5));
        assert!((odds_ratio(5, 95, 0, 100).unwrap() - 11.576).abs() < 1e-3);
        assert!(matches!(odds_ratio(0, 0, 0, 0), Err(Error::UndefinedOddsRatio)));
    }

    #[test]
    fn keyword_toy_corpus() {
        let mut pos: Vec<String> = (0..8).map(|i| format!("quit now {i}")).collect();
        pos.extend((0..2).map(|i| format!("stay {i}")));
        let mut neg: Vec<String> = vec!["quit maybe".into()];
        neg.extend((0..9).map(|i| format!("party {i}")));
        let set = select_keywords(&neg, &pos, &KeywordParams::default()).unwrap();
        let quit = set.cas_to_recov.iter().find(|k| k.word == "quit").unwrap();
        assert_eq!(quit.odds_ratio, 36.0);
        assert!(!set.contains(Label::Cas, "quit"));
        assert!(set.contains(Label::Cas, "party"));
        assert!(set.contains(Label::CasToRecov, "now"));
    }

    #[test]
    fn ubiquitous_word_is_not_a_keyword() {
        let pos: Vec<String> = (0..10).map(|i| format!("the a{i}")).collect();
        let neg: Vec<String> = (0..10).map(|i| format!("the b{i}")).collect();
        let set = select_keywords(&neg, &pos, &KeywordParams::default()).unwrap();
        assert!(!set.contains(Label::Cas, "the") && !set.contains(Label::CasToRecov, "the"));
    }

    #[test]
    fn rare_words_are_ignored() {
        let pos = vec!["zebra", "x", "y"];
        let neg = vec!["q", "r", "s"];
        let set = select_keywords(&neg, &pos, &KeywordParams::default()).unwrap();
        assert!(set.cas.is_empty() && set.cas_to_recov.is_empty());
        assert!(select_keywords::<&str>(&[], &pos, &KeywordParams::default()).is_err());
    }
}
