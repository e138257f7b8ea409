//! Bagged CART regression forest with per-node feature subsampling,
//! out-of-bag error, permutation importance and partial dependence.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per node; `None` means `round(p / 3)`.
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 250,
            mtry: Some(7),
            max_depth: None,
            min_leaf: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    /// Effective mtry for `p` design columns.
    pub fn resolve_mtry(&self, p: usize) -> Result<usize> {
        let m = self.mtry.unwrap_or_else(|| ((p as f64 / 3.0).round() as usize).max(1));
        if m == 0 || m > p {
            return Err(Error::Config(format!("mtry = {m} must be between 1 and the number of features ({p})")));
        }
        Ok(m)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        self.resolve_mtry(p).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// Tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Parent SSE minus the children's SSE.
    pub gain: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t < b {
        t
    } else {
        a
    }
}

/// Variance-reduction split search over `features` for the node holding
/// `rows`. Candidates are midpoints of consecutive distinct values leaving at
/// least `min_leaf` rows per side. Ties go to the lowest feature index, then
/// the lowest threshold.
pub fn best_split(x: &Matrix, y: &[f64], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let mut feats = features.to_vec();
    feats.sort_unstable();
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in &feats {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[(r, f)], y[r] - mean)));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut left = 0.0;
        for i in 0..n - 1 {
            left += pairs[i].1;
            let nl = i + 1;
            if nl < min_leaf {
                continue;
            }
            if n - nl < min_leaf {
                break;
            }
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right = total - left;
            // SSE_parent − SSE_children on centred targets
            let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - total * total / n as f64;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(pairs[i].0, pairs[i + 1].0),
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

/// Grows one CART tree on `rows` (which may repeat, as in a bootstrap sample).
pub fn fit_tree(x: &Matrix, y: &[f64], rows: &[usize], mtry: usize, min_leaf: usize, max_depth: Option<usize>, rng: &mut impl Rng) -> Tree {
    let p = x.ncols();
    let mut nodes = Vec::new();
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows.to_vec(), 0usize)];
    nodes.push(Node::Leaf { value: 0.0, count: 0 });
    while let Some((slot, idx, depth)) = stack.pop() {
        let count = idx.len();
        let pure = idx.windows(2).all(|w| y[w[0]] == y[w[1]]);
        let value = match idx.first() {
            None => 0.0,
            Some(&r) if pure => y[r],
            Some(_) => idx.iter().map(|&r| y[r]).sum::<f64>() / count as f64,
        };
        let can_split = !pure && max_depth.is_none_or(|d| depth < d) && count >= 2 * min_leaf;
        let choice = if can_split {
            let feats = if mtry >= p {
                (0..p).collect()
            } else {
                index::sample(rng, p, mtry).into_vec()
            };
            best_split(x, y, &idx, &feats, min_leaf)
        } else {
            None
        };
        match choice {
            None => nodes[slot] = Node::Leaf { value, count },
            Some(c) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&row| x[(row, c.feature)] <= c.threshold);
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes[slot] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: li,
                    right: ri,
                };
                stack.push((ri, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
        }
    }
    Tree { nodes }
}

/// Per-tree RNG: the tree index selects an independent ChaCha stream.
pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Sorted bootstrap draws per tree (all rows once when bootstrap is off).
    pub samples: Vec<Vec<usize>>,
    /// Mean prediction over trees that did not see the row.
    pub oob_predictions: Vec<Option<f64>>,
}

impl ForestFit {
    pub fn fit(cfg: ForestConfig, x: &Matrix, y: &[f64]) -> Result<ForestFit> {
        let (n, p) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        if n == 0 {
            return Err(Error::Model("cannot fit a forest on zero rows".into()));
        }
        cfg.validate(p)?;
        let mtry = cfg.resolve_mtry(p)?;
        let grown: Vec<(Tree, Vec<usize>)> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(cfg.seed, t);
                let mut sample: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let tree = fit_tree(x, y, &sample, mtry, cfg.min_leaf, cfg.max_depth, &mut rng);
                sample.sort_unstable();
                (tree, sample)
            })
            .collect();
        let (trees, samples): (Vec<Tree>, Vec<Vec<usize>>) = grown.into_iter().unzip();

        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for (tree, sample) in trees.iter().zip(&samples) {
            for row in out_of_bag(sample, n) {
                sum[row] += tree.predict_row(x.row(row));
                cnt[row] += 1;
            }
        }
        let oob_predictions = sum.iter().zip(&cnt).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
        Ok(ForestFit {
            config: cfg,
            n_features: p,
            trees,
            samples,
            oob_predictions,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let k = self.trees.len() as f64;
        Ok(x.rows().map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k).collect())
    }

    /// MSE of the out-of-bag predictions over rows left out by at least one tree.
    pub fn oob_error(&self, y: &[f64]) -> Result<f64> {
        if !self.config.bootstrap {
            return Err(Error::Model("out-of-bag error needs bootstrap sampling".into()));
        }
        if y.len() != self.oob_predictions.len() {
            return Err(Error::Dimension {
                expected: self.oob_predictions.len(),
                got: y.len(),
            });
        }
        let (mut sse, mut m) = (0.0, 0usize);
        for (p, t) in self.oob_predictions.iter().zip(y) {
            if let Some(p) = p {
                sse += (p - t) * (p - t);
                m += 1;
            }
        }
        if m == 0 {
            return Err(Error::Model("no row is out of bag for any tree".into()));
        }
        Ok(sse / m as f64)
    }

    /// Breiman-style importance: per tree, permute a feature group among that
    /// tree's out-of-bag rows and average the increase in tree MSE.
    pub fn oob_permutation_importance(
        &self,
        x: &Matrix,
        y: &[f64],
        groups: &[(String, Vec<usize>)],
        repeats: usize,
        seed: u64,
    ) -> Result<Vec<Importance>> {
        if !self.config.bootstrap {
            return Err(Error::Model("out-of-bag importance needs bootstrap sampling".into()));
        }
        if x.ncols() != self.n_features || x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let n = x.nrows();
        let mut out = Vec::with_capacity(groups.len());
        for (g, (name, cols)) in groups.iter().enumerate() {
            let mut deltas = Vec::with_capacity(repeats);
            for rep in 0..repeats.max(1) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((g as u64) << 32) | rep as u64);
                let (mut total, mut trees_used) = (0.0, 0usize);
                for (tree, sample) in self.trees.iter().zip(&self.samples) {
                    let oob: Vec<usize> = out_of_bag(sample, n).collect();
                    if oob.len() < 2 {
                        continue;
                    }
                    let mut perm = oob.clone();
                    perm.shuffle(&mut rng);
                    let (mut base, mut permuted) = (0.0, 0.0);
                    let mut buf = vec![0.0; x.ncols()];
                    for (&row, &src) in oob.iter().zip(&perm) {
                        let r = x.row(row);
                        base += (tree.predict_row(r) - y[row]).powi(2);
                        buf.copy_from_slice(r);
                        for &c in cols {
                            buf[c] = x[(src, c)];
                        }
                        permuted += (tree.predict_row(&buf) - y[row]).powi(2);
                    }
                    total += (permuted - base) / oob.len() as f64;
                    trees_used += 1;
                }
                deltas.push(if trees_used == 0 { 0.0 } else { total / trees_used as f64 });
            }
            out.push(Importance::from_deltas(name, &deltas));
        }
        sort_importances(&mut out);
        Ok(out)
    }
}

/// Rows `0..n` absent from a sorted sample.
fn out_of_bag(sorted_sample: &[usize], n: usize) -> impl Iterator<Item = usize> + '_ {
    let mut it = sorted_sample.iter().peekable();
    (0..n).filter(move |&r| {
        while it.peek().is_some_and(|&&s| s < r) {
            it.next();
        }
        it.peek().is_none_or(|&&s| s != r)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    /// Mean increase in MSE over repeats.
    pub importance: f64,
    /// Standard deviation of the increase across repeats.
    pub std: f64,
}

impl Importance {
    fn from_deltas(name: &str, d: &[f64]) -> Importance {
        let m = d.len() as f64;
        let mean = d.iter().sum::<f64>() / m;
        let std = if d.len() > 1 {
            (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Importance {
            feature: name.to_string(),
            importance: mean,
            std,
        }
    }
}

fn sort_importances(v: &mut [Importance]) {
    v.sort_by(|a, b| b.importance.total_cmp(&a.importance));
}

pub fn importance_csv(v: &[Importance]) -> String {
    let mut out = String::from("feature,importance,std\n");
    for i in v {
        out.push_str(&format!("{},{},{}\n", crate::data::csv_field(&i.feature), i.importance, i.std));
    }
    out
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Model-agnostic permutation importance on an evaluation set. All design
/// columns of a feature group share one row permutation per repeat.
pub fn permutation_importance<F>(predict: F, x: &Matrix, y: &[f64], groups: &[(String, Vec<usize>)], repeats: usize, seed: u64) -> Result<Vec<Importance>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::Data("permutation importance needs a non-empty evaluation set".into()));
    }
    let baseline = mse(&predict(x)?, y);
    let mut out = Vec::with_capacity(groups.len());
    for (g, (name, cols)) in groups.iter().enumerate() {
        let mut deltas = Vec::with_capacity(repeats);
        for rep in 0..repeats.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((g as u64) << 32) | rep as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            deltas.push(mse(&predict(&permute_columns(x, cols, &perm))?, y) - baseline);
        }
        out.push(Importance::from_deltas(name, &deltas));
    }
    sort_importances(&mut out);
    Ok(out)
}

/// Copy of `x` whose `cols` take their values from row `perm[i]`.
pub fn permute_columns(x: &Matrix, cols: &[usize], perm: &[usize]) -> Matrix {
    let mut out = x.clone();
    for (i, &src) in perm.iter().enumerate() {
        for &c in cols {
            out[(i, c)] = x[(src, c)];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub value: f64,
    pub mean_prediction: f64,
}

/// Partial dependence of a numeric design column: each grid value is written
/// into every background row and predictions are averaged.
pub fn partial_dependence<F>(predict: F, background: &Matrix, column: usize, grid: &[f64]) -> Result<Vec<PdPoint>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    if grid.is_empty() {
        return Err(Error::Config("partial dependence grid is empty".into()));
    }
    if background.nrows() == 0 {
        return Err(Error::Data("partial dependence needs background rows".into()));
    }
    let col = background.column(column);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * (hi - lo).abs().max(1.0);
    if let Some(v) = grid.iter().find(|&&v| !(v >= lo - slack && v <= hi + slack)) {
        return Err(Error::Config(format!("grid value {v} lies outside the observed range [{lo}, {hi}]")));
    }
    grid.iter()
        .map(|&v| {
            let mut xb = background.clone();
            for i in 0..xb.nrows() {
                xb[(i, column)] = v;
            }
            let p = predict(&xb)?;
            Ok(PdPoint {
                value: v,
                mean_prediction: p.iter().sum::<f64>() / p.len() as f64,
            })
        })
        .collect()
}

/// Partial dependence over the levels of a one-hot block: for level `k`
/// column `level_columns[k]` is set to 1 and the rest of the block to 0.
pub fn categorical_partial_dependence<F>(predict: F, background: &Matrix, level_columns: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    if level_columns.is_empty() {
        return Err(Error::Config("no level columns given".into()));
    }
    level_columns
        .iter()
        .map(|&on| {
            let mut xb = background.clone();
            for i in 0..xb.nrows() {
                for &c in level_columns {
                    xb[(i, c)] = if c == on { 1.0 } else { 0.0 };
                }
            }
            let p = predict(&xb)?;
            Ok(p.iter().sum::<f64>() / p.len() as f64)
        })
        .collect()
}

/// `points` equally spaced values spanning `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points)
            .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
            .collect(),
    }
}

pub fn pd_csv(feature: &str, curve: &[PdPoint]) -> String {
    let mut out = String::from("feature,value,mean_prediction\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", crate::data::csv_field(feature), p.value, p.mean_prediction));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg1() -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            mtry: None,
            max_depth: None,
            min_leaf: 1,
            bootstrap: false,
            seed: 1,
        }
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let tree = fit_tree(&x, &y, &[0, 1, 2, 3], 1, 1, None, &mut tree_rng(0, 0));
        match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!((feature, threshold), (0, 2.5));
            }
            _ => panic!("root should split"),
        }
        assert_eq!(tree.predict_row(&[2.0]), 0.0);
        assert_eq!(tree.predict_row(&[2.6]), 10.0);
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let tree = fit_tree(&x, &[3.0; 4], &[0, 1, 2, 3], 1, 1, None, &mut tree_rng(0, 0));
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 3.0, count: 4 }]);
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let tree = fit_tree(&x, &[0.0, 0.0, 10.0, 10.0], &[0, 1, 2, 3], 1, 1, Some(0), &mut tree_rng(0, 0));
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 5.0, count: 4 }]);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both columns separate y identically
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]]);
        let c = best_split(&x, &[0.0, 0.0, 1.0, 1.0], &[0, 1, 2, 3], &[1, 0], 1).unwrap();
        assert_eq!(c.feature, 0);
    }

    #[test]
    fn min_leaf_is_respected() {
        let x = Matrix::from_fn(30, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..30).map(|i| if i < 2 { 100.0 } else { (i % 3) as f64 }).collect();
        let rows: Vec<usize> = (0..30).collect();
        let tree = fit_tree(&x, &y, &rows, 1, 5, None, &mut tree_rng(0, 0));
        for n in &tree.nodes {
            if let Node::Leaf { count, .. } = n {
                assert!(*count >= 5);
            }
        }
    }

    #[test]
    fn two_trees_average() {
        let x = Matrix::from_rows(&[[0.0]]);
        let f = ForestFit {
            config: cfg1(),
            n_features: 1,
            trees: vec![
                Tree {
                    nodes: vec![Node::Leaf { value: 1.0, count: 1 }],
                },
                Tree {
                    nodes: vec![Node::Leaf { value: 3.0, count: 1 }],
                },
            ],
            samples: vec![vec![0], vec![0]],
            oob_predictions: vec![None],
        };
        assert_eq!(f.predict(&x).unwrap(), vec![2.0]);
        assert!(f.predict(&Matrix::from_rows(&[[0.0, 1.0]])).is_err());
    }

    #[test]
    fn constant_target_forest() {
        let x = Matrix::from_fn(40, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y = vec![4.2; 40];
        let f = ForestFit::fit(
            ForestConfig {
                n_trees: 10,
                mtry: Some(2),
                ..Default::default()
            },
            &x,
            &y,
        )
        .unwrap();
        assert!(f.predict(&x).unwrap().iter().all(|&p| (p - 4.2).abs() < 1e-12));
        assert!(f.oob_error(&y).unwrap() < 1e-20);
    }

    #[test]
    fn single_tree_oob_rows_are_the_complement() {
        let x = Matrix::from_fn(50, 2, |i, j| (i * (j + 1)) as f64);
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let f = ForestFit::fit(
            ForestConfig {
                n_trees: 1,
                mtry: Some(2),
                min_leaf: 2,
                ..Default::default()
            },
            &x,
            &y,
        )
        .unwrap();
        assert_eq!(f.samples[0].len(), 50);
        for (r, p) in f.oob_predictions.iter().enumerate() {
            assert_eq!(p.is_some(), !f.samples[0].contains(&r));
        }
    }

    #[test]
    fn oob_without_bootstrap_is_an_error() {
        let x = Matrix::from_fn(10, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = ForestFit::fit(cfg1(), &x, &y).unwrap();
        assert!(f.oob_error(&y).is_err());
    }

    #[test]
    fn mtry_bounds() {
        let c = ForestConfig {
            mtry: Some(4),
            ..Default::default()
        };
        assert!(c.validate(3).is_err());
        assert_eq!(ForestConfig { mtry: None, ..c }.resolve_mtry(21).unwrap(), 7);
    }

    #[test]
    fn out_of_bag_complement() {
        let oob: Vec<usize> = out_of_bag(&[0, 0, 2, 5, 5], 7).collect();
        assert_eq!(oob, vec![1, 3, 4, 6]);
    }

    #[test]
    fn identity_permutation_changes_nothing() {
        let x = Matrix::from_fn(5, 2, |i, j| (i + j) as f64);
        let perm: Vec<usize> = (0..5).collect();
        assert_eq!(permute_columns(&x, &[0, 1], &perm), x);
    }

    #[test]
    fn pd_of_linear_surrogate_has_slope_two() {
        let x = Matrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let f = |m: &Matrix| -> Result<Vec<f64>> { Ok(m.rows().map(|r| 2.0 * r[0] + r[1]).collect()) };
        let curve = partial_dependence(f, &x, 0, &linear_grid(0.0, 9.0, 4)).unwrap();
        for w in curve.windows(2) {
            let slope = (w[1].mean_prediction - w[0].mean_prediction) / (w[1].value - w[0].value);
            assert!((slope - 2.0).abs() < 1e-12);
        }
        assert!(partial_dependence(f, &x, 0, &[]).is_err());
        assert!(partial_dependence(f, &x, 0, &[20.0]).is_err());
    }

    #[test]
    fn pd_of_ignored_feature_is_flat() {
        let x = Matrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let f = |m: &Matrix| -> Result<Vec<f64>> { Ok(m.rows().map(|r| r[1]).collect()) };
        let curve = partial_dependence(f, &x, 0, &linear_grid(0.0, 9.0, 5)).unwrap();
        assert!(curve.iter().all(|p| p.mean_prediction == curve[0].mean_prediction));
    }

    #[test]
    fn linear_grid_endpoints() {
        let g = linear_grid(1.0, 2.0, 5);
        assert_eq!(g, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }
}
