use serde::{Deserialize, Serialize};

use crate::corpus::SurvivalRecord;
use crate::error::{Error, Result};

/// Pair counts behind Harrell's C-index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub c_index: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted positions `< pos`.
    fn below(&self, pos: usize) -> u64 {
        let mut i = pos;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Harrell's C-index. A pair is comparable when the shorter observed time
/// is an event; it is concordant when that subject has the higher risk
/// score. Equal risk scores count one half.
///
/// Runs in `O(n log n)` by sweeping subjects from the longest time down and
/// counting later subjects by risk rank in a Fenwick tree.
pub fn concordance(risk: &[f64], times: &[f64], events: &[bool]) -> Result<ConcordanceReport> {
    let n = risk.len();
    if times.len() != n || events.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: times.len().min(events.len()),
        });
    }
    if risk.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("risk scores and times must be finite".into()));
    }
    let mut levels = risk.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank = |r: f64| levels.partition_point(|&l| l < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut tree = Fenwick::new(levels.len());
    let mut inserted = 0u64;
    let (mut concordant, mut discordant, mut tied) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && times[order[j]] == times[order[i]] {
            j += 1;
        }
        for &s in order[i..j].iter().filter(|&&s| events[s]) {
            let r = rank(risk[s]);
            let lower = tree.below(r);
            let equal = tree.below(r + 1) - lower;
            concordant += lower;
            tied += equal;
            discordant += inserted - lower - equal;
        }
        for &s in &order[i..j] {
            tree.add(rank(risk[s]));
            inserted += 1;
        }
        i = j;
    }
    let comparable = concordant + discordant + tied;
    if comparable == 0 {
        return Err(Error::UndefinedConcordance);
    }
    Ok(ConcordanceReport {
        c_index: (concordant as f64 + 0.5 * tied as f64) / comparable as f64,
        concordant,
        discordant,
        tied_risk: tied,
        comparable,
    })
}

/// Harrell's C-index of `risk_scores` (higher means earlier expected event).
pub fn c_index(risk_scores: &[f64], records: &[SurvivalRecord]) -> Result<ConcordanceReport> {
    let times: Vec<f64> = records.iter().map(|r| f64::from(r.time_days)).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    concordance(risk_scores, &times, &events)
}
