//! Binary random forest with Gini splits.

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// `None` grows until purity or `min_samples_split`.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_depth: Option<usize>) -> Self {
        ForestParams {
            n_estimators,
            max_depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

fn majority(counts: [usize; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &r in rows {
            c[self.y[r] as usize] += 1;
        }
        c
    }

    /// Best `(weighted gini, threshold)` split on one feature.
    fn best_on_feature(&self, rows: &mut [usize], feature: usize) -> Option<(f64, f64)> {
        rows.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let total = self.counts(rows);
        let n = rows.len();
        let mut left = [0usize; 2];
        let mut best: Option<(f64, f64)> = None;
        let min_leaf = self.params.min_samples_leaf.max(1);
        for i in 0..n - 1 {
            left[self.y[rows[i]] as usize] += 1;
            let (lo, hi) = (self.x[rows[i]][feature], self.x[rows[i + 1]][feature]);
            if lo == hi || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let score = (nl * gini(left) + nr * gini(right)) / n as f64;
            if best.is_none_or(|(s, _)| score < s) {
                let mut t = lo + (hi - lo) / 2.0;
                if t >= hi {
                    t = lo;
                }
                best = Some((score, t));
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let n_features = self.x[0].len();
        let mut features: Vec<usize> = (0..n_features).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        // like scikit-learn, keep drawing features past `mtry` while none
        // of the drawn ones admits a split
        for (i, &f) in features.iter().enumerate() {
            if i >= self.mtry && best.is_some() {
                break;
            }
            if let Some((score, t)) = self.best_on_feature(rows, f) {
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x[row][feature] <= threshold);
        let left = self.grow(&mut l, depth + 1, rng);
        let right = self.grow(&mut r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[u8],
        rows: &mut [usize],
        params: ForestParams,
        mtry: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            mtry: mtry.max(1),
            nodes: Vec::new(),
        };
        b.grow(rows, 0, rng);
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return majority(*counts),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves_nonempty(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Leaf { counts } => counts[0] + counts[1] > 0,
            Node::Split { .. } => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
    /// Set when the training labels held a single class.
    pub constant: Option<u8>,
}

impl RandomForestModel {
    /// Bootstrap-aggregated trees over `sqrt(F)` random features per node.
    /// Tree `t` draws from its own stream so the forest does not depend on
    /// how trees are scheduled.
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: ForestParams, seed: u64, exec: Exec) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty(), "random forest needs training rows");
        let positives = y.iter().filter(|&&l| l == 1).count();
        if positives == 0 || positives == y.len() {
            debug!("single-class training data; fitting a constant classifier");
            return RandomForestModel {
                params,
                trees: Vec::new(),
                constant: Some(y[0]),
            };
        }
        let n = x.len();
        let mtry = ((x[0].len() as f64).sqrt().floor() as usize).max(1);
        let trees = par::map_range(exec, params.n_estimators, |t| {
            let mut rng = par::stream_rng(seed, &[b"tree", &(t as u64).to_le_bytes()]);
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree::fit(x, y, &mut rows, params, mtry, &mut rng)
        });
        RandomForestModel {
            params,
            trees,
            constant: None,
        }
    }

    /// Majority vote over trees; ties go to class 0.
    pub fn predict_one(&self, row: &[f64]) -> u8 {
        if let Some(c) = self.constant {
            return c;
        }
        let votes: usize = self.trees.iter().map(|t| t.predict(row) as usize).sum();
        u8::from(2 * votes > self.trees.len())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<u8> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }
}
