use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer, used to derive independent seeds.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B3_E50F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training-sample counts per class, `[negative, positive]`.
    Leaf { counts: [u64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub features_per_split: usize,
    pub min_samples_split: usize,
}

/// A binary classification tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn gini(n0: u64, n1: u64) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    params: TreeParams,
    n_features: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn counts(&self, sample: &[usize]) -> [u64; 2] {
        let pos = sample.iter().filter(|&&i| self.y[i]).count() as u64;
        [sample.len() as u64 - pos, pos]
    }

    fn best_split(&self, sample: &[usize], counts: [u64; 2], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let k = self.params.features_per_split.clamp(1, self.n_features);
        let mut candidates = sample_indices(rng, self.n_features, k).into_vec();
        candidates.sort_unstable();
        let n = sample.len() as u64;
        let parent = gini(counts[0], counts[1]);
        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(sample.len());
        for feature in candidates {
            column.clear();
            column.extend(sample.iter().map(|&i| (self.x[i][feature], self.y[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u64; 2];
            for w in 0..column.len() - 1 {
                left[usize::from(column[w].1)] += 1;
                let (lo, hi) = (column[w].0, column[w + 1].0);
                if lo == hi {
                    continue;
                }
                let nl = w as u64 + 1;
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let child = (nl as f64 * gini(left[0], left[1]) + (n - nl) as f64 * gini(right[0], right[1])) / n as f64;
                let gain = parent - child;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, sample: Vec<usize>, depth: usize, key: u64) -> usize {
        let counts = self.counts(&sample);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.params.max_depth || sample.len() < self.params.min_samples_split {
            return id;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let Some(split) = self.best_split(&sample, counts, &mut rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.x[i][split.feature] <= split.threshold);
        debug_assert!(!left.is_empty() && !right.is_empty());
        let l = self.grow(left, depth + 1, mix(key, 1));
        let r = self.grow(right, depth + 1, mix(key, 2));
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on `sample` (row indices, repeats allowed). Each node
    /// draws its candidate features from a generator keyed by its position
    /// in the tree, so a deeper tree refines a shallower one grown from the
    /// same `seed`.
    pub fn fit(x: &[Vec<f64>], y: &[bool], sample: &[usize], params: TreeParams, seed: u64) -> DecisionTree {
        let n_features = x.first().map_or(0, Vec::len);
        let mut builder = Builder {
            x,
            y,
            params,
            n_features,
            nodes: Vec::new(),
        };
        if n_features == 0 || sample.is_empty() {
            let counts = builder.counts(sample);
            return DecisionTree {
                nodes: vec![Node::Leaf { counts }],
            };
        }
        builder.grow(sample.to_vec(), 0, mix(seed, 0));
        DecisionTree { nodes: builder.nodes }
    }

    pub fn leaf_counts(&self, row: &[f64]) -> [u64; 2] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Majority class of the leaf reached by `row`; ties vote positive.
    pub fn predict(&self, row: &[f64]) -> bool {
        let [neg, pos] = self.leaf_counts(row);
        pos >= neg
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u64; 2]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(counts),
            Node::Split { .. } => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            features_per_split: 2,
            min_samples_split: 2,
        }
    }

    #[test]
    fn splits_at_midpoint() {
        let x = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0], vec![5.0, 0.0]];
        let y = vec![false, false, true, true];
        let tree = DecisionTree::fit(&x, &y, &[0, 1, 2, 3], params(5), 7);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 3.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.depth(), 1);
        assert!(tree.predict(&[4.5, 0.0]));
        assert!(!tree.predict(&[1.5, 0.0]));
    }

    #[test]
    fn leaf_counts_sum_to_sample_size() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<bool> = (0..30).map(|i| i % 5 < 2).collect();
        let sample: Vec<usize> = (0..30).chain(0..10).collect();
        let tree = DecisionTree::fit(&x, &y, &sample, params(12), 3);
        let total: u64 = tree.leaves().map(|c| c[0] + c[1]).sum();
        assert_eq!(total, sample.len() as u64);
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        let y = vec![true, false, true];
        let tree = DecisionTree::fit(&x, &y, &[0, 1, 2], params(4), 1);
        assert_eq!(tree.nodes, vec![Node::Leaf { counts: [1, 2] }]);
    }

    #[test]
    fn adjacent_floats_split_non_trivially() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = vec![vec![a], vec![b]];
        let y = vec![false, true];
        let tree = DecisionTree::fit(&x, &y, &[0, 1], params(3), 1);
        assert!(!tree.predict(&[a]));
        assert!(tree.predict(&[b]));
    }
}
