use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use transit_core::corpus::{DEFAULT_HORIZON_DAYS, DEFAULT_WINDOW_DAYS};

/// Flags shared by every subcommand. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// key=value file; keys are flag names without the dashes
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// JSON-lines post dump
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// venue file (`casual = a, b` / `recovery = c, d`); defaults to the four standard subreddits
    #[arg(long, global = true)]
    pub venues: Option<PathBuf>,
    /// `alias<TAB>canonical[<TAB>tier]` file; defaults to the bundled demo lexicon
    #[arg(long, global = true)]
    pub drug_lexicon: Option<PathBuf>,
    /// `category<TAB>pattern` file; defaults to the bundled demo lexicon
    #[arg(long, global = true)]
    pub category_lexicon: Option<PathBuf>,
    /// `author<TAB>post index<TAB>v1,v2,...` file
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// comma-separated families: drugs, categories, keywords, embedding, volume
    #[arg(long, global = true)]
    pub features: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub window_days: Option<i64>,
    #[arg(long, global = true)]
    pub horizon_days: Option<i64>,
    /// significance level for Kruskal-Wallis screening
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// comma-separated tree counts to cross-validate
    #[arg(long, global = true)]
    pub trees: Option<String>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// also render curves as SVG
    #[arg(long, global = true)]
    pub svg: bool,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub venues: Option<PathBuf>,
    pub drug_lexicon: Option<PathBuf>,
    pub category_lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub features: Option<String>,
    pub seed: u64,
    pub window_days: i64,
    pub horizon_days: i64,
    pub alpha: f64,
    pub trees: Vec<usize>,
    pub folds: usize,
    pub out: PathBuf,
    pub svg: bool,
}

const KEYS: [&str; 14] = [
    "corpus",
    "venues",
    "drug-lexicon",
    "category-lexicon",
    "embeddings",
    "features",
    "seed",
    "window-days",
    "horizon-days",
    "alpha",
    "trees",
    "folds",
    "out",
    "svg",
];

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{key}`", n + 1);
        }
        map.insert(key, value.trim().to_owned());
    }
    Ok(map)
}

pub fn parse_trees(list: &str) -> Result<Vec<usize>> {
    let trees = list
        .split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad tree count `{t}`")))
        .collect::<Result<Vec<_>>>()?;
    if trees.is_empty() || trees.contains(&0) {
        bail!("tree counts must be positive");
    }
    Ok(trees)
}

fn parsed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value.parse().with_context(|| format!("bad value for `{key}`: `{value}`"))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let base = args.config.as_deref().and_then(Path::parent).unwrap_or(Path::new(""));
        let path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
            flag.clone().or_else(|| file.get(key).map(|v| base.join(v)))
        };
        let value = |key: &str| file.get(key).map(String::as_str);

        let config = RunConfig {
            corpus: path(&args.corpus, "corpus"),
            venues: path(&args.venues, "venues"),
            drug_lexicon: path(&args.drug_lexicon, "drug-lexicon"),
            category_lexicon: path(&args.category_lexicon, "category-lexicon"),
            embeddings: path(&args.embeddings, "embeddings"),
            features: args.features.clone().or_else(|| value("features").map(str::to_owned)),
            seed: match (args.seed, value("seed")) {
                (Some(s), _) => s,
                (None, Some(v)) => parsed("seed", v)?,
                (None, None) => 42,
            },
            window_days: match (args.window_days, value("window-days")) {
                (Some(d), _) => d,
                (None, Some(v)) => parsed("window-days", v)?,
                (None, None) => DEFAULT_WINDOW_DAYS,
            },
            horizon_days: match (args.horizon_days, value("horizon-days")) {
                (Some(d), _) => d,
                (None, Some(v)) => parsed("horizon-days", v)?,
                (None, None) => DEFAULT_HORIZON_DAYS,
            },
            alpha: match (args.alpha, value("alpha")) {
                (Some(a), _) => a,
                (None, Some(v)) => parsed("alpha", v)?,
                (None, None) => 0.05,
            },
            trees: parse_trees(args.trees.as_deref().or(value("trees")).unwrap_or("170"))?,
            folds: match (args.folds, value("folds")) {
                (Some(k), _) => k,
                (None, Some(v)) => parsed("folds", v)?,
                (None, None) => 5,
            },
            out: args
                .out
                .clone()
                .or_else(|| file.get("out").map(|v| base.join(v)))
                .unwrap_or_else(|| PathBuf::from("out")),
            svg: args.svg || value("svg").is_some_and(|v| v == "true"),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        for path in [
            &self.corpus,
            &self.venues,
            &self.drug_lexicon,
            &self.category_lexicon,
            &self.embeddings,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                bail!("input path does not exist: {}", path.display());
            }
        }
        if self.window_days < 0 || self.horizon_days < 1 {
            bail!("window must be non-negative and horizon positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1)");
        }
        if self.folds < 2 {
            bail!("at least two folds are needed");
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<&Path> {
        self.corpus.as_deref().context("--corpus is required")
    }
}
