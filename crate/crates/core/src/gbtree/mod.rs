//! Gradient-boosted regression trees with squared-error loss and exact
//! greedy split finding.

mod io;
mod split;

pub use split::{find_best_split, SplitCandidate};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub eta: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            eta: 0.1,
            max_depth: 4,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 0.8,
            colsample: 0.8,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be non-negative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("colsample must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Nodes stored in preorder; `nodes[0]` is the root. Leaf weights are
/// unshrunk; the ensemble applies `eta` at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row(feature) < threshold { left } else { right },
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
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn fit(x: &DenseMatrix, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
        params.validate()?;
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if y.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: y.len(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFiniteInput("feature matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("target"));
        }
        // Half-width entries halve the memory traffic of the builder.
        let trees = if n <= 1 << 16 {
            boost::<u32>(x, y, params)
        } else {
            boost::<u64>(x, y, params)
        };
        Ok(GbtModel {
            params: params.clone(),
            base_score: y.iter().sum::<f64>() / n as f64,
            n_features: x.n_cols(),
            trees,
        })
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .map(|i| {
                self.trees
                    .iter()
                    .fold(self.base_score, |acc, t| acc + self.params.eta * t.predict_row(|f| x.get(i, f)))
            })
            .collect())
    }

    /// Total split gain per feature, indexed by column.
    pub fn importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { feature, gain, .. } = *node {
                    imp[feature] += gain;
                }
            }
        }
        imp
    }
}

fn boost<E: Entry>(x: &DenseMatrix, y: &[f64], params: &GbtParams) -> Vec<Tree> {
    let n = x.n_rows();
    let n_features = x.n_cols();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_col = ((params.colsample * n_features as f64).round() as usize).clamp(1, n_features.max(1));

    let sorted = Presorted::<E>::new(x);
    let mut builder = TreeBuilder::new(n, n_col, params);
    let mut in_sample = vec![true; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        if n_sub < n {
            in_sample.fill(false);
            for i in index::sample(&mut rng, n, n_sub) {
                in_sample[i] = true;
            }
        }
        let features: Vec<usize> = if n_col < n_features {
            let mut f = index::sample(&mut rng, n_features, n_col).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_features).collect()
        };
        let tree = builder.build(&sorted, &grad, &in_sample, &features);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.eta * tree.predict_row(|f| x.get(i, f));
        }
        trees.push(tree);
    }
    trees
}

/// A row index packed with the rank of its value among the feature's
/// distinct values. Entries sort by rank first.
trait Entry: Copy + Default {
    fn pack(rank: usize, row: usize) -> Self;
    fn row(self) -> usize;
    fn rank(self) -> u32;
}

impl Entry for u64 {
    #[inline]
    fn pack(rank: usize, row: usize) -> Self {
        ((rank as u64) << 32) | row as u64
    }
    #[inline]
    fn row(self) -> usize {
        (self & 0xffff_ffff) as usize
    }
    #[inline]
    fn rank(self) -> u32 {
        (self >> 32) as u32
    }
}

/// For at most 2^16 rows; ranks never exceed the row count.
impl Entry for u32 {
    #[inline]
    fn pack(rank: usize, row: usize) -> Self {
        ((rank as u32) << 16) | row as u32
    }
    #[inline]
    fn row(self) -> usize {
        (self & 0xffff) as usize
    }
    #[inline]
    fn rank(self) -> u32 {
        self >> 16
    }
}

/// Each feature's rows in ascending value order.
struct Presorted<E> {
    entries: Vec<Vec<E>>,
    distinct: Vec<Vec<f64>>,
}

impl<E: Entry> Presorted<E> {
    fn new(x: &DenseMatrix) -> Self {
        assert!(x.n_rows() <= u32::MAX as usize, "row index must fit in 32 bits");
        let (entries, distinct) = (0..x.n_cols())
            .map(|f| {
                let col = x.column(f);
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                let mut distinct: Vec<f64> = Vec::new();
                let entries = idx
                    .iter()
                    .map(|&r| {
                        let v = col[r as usize];
                        // -0.0 and 0.0 share a rank: splits separate values by `<`.
                        if distinct.last().is_none_or(|&last| last < v) {
                            distinct.push(v);
                        }
                        E::pack(distinct.len() - 1, r as usize)
                    })
                    .collect();
                (entries, distinct)
            })
            .unzip();
        Self { entries, distinct }
    }
}

struct Best {
    gain: f64,
    k: usize,
    lo: u32,
    hi: u32,
    gl: f64,
    n_left: usize,
}

/// Grows trees depth first over per-feature row lists. A node owns the
/// same `[begin, end)` range in every list, and each list segment stays in
/// ascending value order. Hessians are all 1 (squared error), so the
/// hessian sum of a prefix is its length.
struct TreeBuilder<'p, E> {
    params: &'p GbtParams,
    lists: Vec<Vec<E>>,
    go_left: Vec<bool>,
    scratch: Vec<E>,
    nodes: Vec<Node>,
}

impl<'p, E: Entry> TreeBuilder<'p, E> {
    fn new(n: usize, n_col: usize, params: &'p GbtParams) -> Self {
        Self {
            params,
            lists: vec![Vec::with_capacity(n); n_col],
            go_left: vec![false; n],
            scratch: vec![E::default(); n],
            nodes: Vec::new(),
        }
    }

    fn build(&mut self, sorted: &Presorted<E>, grad: &[f64], in_sample: &[bool], features: &[usize]) -> Tree {
        let lambda = self.params.lambda;
        let (mut g, mut h) = (0.0, 0.0);
        for (&gr, &s) in grad.iter().zip(in_sample) {
            if s {
                g += gr;
                h += 1.0;
            }
        }
        self.nodes.clear();
        if features.is_empty() {
            return Tree {
                nodes: vec![Node::Leaf { weight: -g / (h + lambda) }],
            };
        }
        for (list, &f) in self.lists.iter_mut().zip(features) {
            let src = &sorted.entries[f];
            list.clear();
            list.resize(src.len(), E::default());
            let mut w = 0;
            for &e in src {
                list[w] = e;
                w += in_sample[e.row()] as usize;
            }
            list.truncate(w);
        }
        let len = self.lists[0].len();
        self.grow(sorted, grad, features, 0, len, g, 0);
        Tree {
            nodes: std::mem::take(&mut self.nodes),
        }
    }

    /// Whether a node with `n` rows could be split at `depth`.
    fn splittable(&self, n: usize, depth: usize) -> bool {
        depth < self.params.max_depth && n >= 2 && n as f64 >= 2.0 * self.params.min_child_weight
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        sorted: &Presorted<E>,
        grad: &[f64],
        features: &[usize],
        begin: usize,
        end: usize,
        g: f64,
        depth: usize,
    ) -> usize {
        let GbtParams {
            lambda,
            gamma,
            min_child_weight: mcw,
            ..
        } = *self.params;
        let h = (end - begin) as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: -g / (h + lambda),
        });
        if !self.splittable(end - begin, depth) {
            return id;
        }
        let parent = g * g / (h + lambda);
        // Screening threshold of `split::may_beat`, refreshed when the
        // incumbent improves.
        let screen = |incumbent: f64| (2.0 * (incumbent + gamma) + parent) * (1.0 - 1e-9);
        // Both children need at least `mcw` rows: boundaries sit at
        // positions `lo..=hi`.
        let n = end - begin;
        let need = mcw.ceil() as usize;
        let (lo, hi) = (need.max(1), (n - need).min(n - 1));
        let mut best: Option<Best> = None;
        for (k, list) in self.lists.iter().enumerate() {
            let seg = &list[begin..end];
            let mut incumbent = best.as_ref().map_or(0.0, |b| b.gain);
            let mut t = screen(incumbent);
            let mut gl = 0.0;
            for &e in &seg[..lo] {
                gl += grad[e.row()];
            }
            let mut prev = seg[lo - 1].rank();
            let (mut dl, mut dr) = (lo as f64 + lambda, h - lo as f64 + lambda);
            for (i, &e) in seg.iter().enumerate().take(hi + 1).skip(lo) {
                let rank = e.rank();
                if rank != prev {
                    let gr = g - gl;
                    if gl * gl * dr + gr * gr * dl >= t * dl * dr {
                        let gain = split::split_gain(gl, i as f64, g, h, lambda, gamma);
                        if gain > incumbent {
                            incumbent = gain;
                            t = screen(incumbent);
                            best = Some(Best {
                                gain,
                                k,
                                lo: prev,
                                hi: rank,
                                gl,
                                n_left: i,
                            });
                        }
                    }
                    prev = rank;
                }
                gl += grad[e.row()];
                dl += 1.0;
                dr -= 1.0;
            }
        }
        let Some(b) = best else {
            return id;
        };
        let feature = features[b.k];
        let values = &sorted.distinct[feature];
        let threshold = split::midpoint(values[b.lo as usize], values[b.hi as usize]);
        let mid = begin + b.n_left;
        let n_right = end - mid;
        if self.splittable(b.n_left, depth + 1) || self.splittable(n_right, depth + 1) {
            self.partition(b.k, begin, mid, end);
        }
        let left = self.grow(sorted, grad, features, begin, mid, b.gl, depth + 1);
        let right = self.grow(sorted, grad, features, mid, end, g - b.gl, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            gain: b.gain,
            left,
            right,
        };
        id
    }

    /// Stable partition of every list so that rows left of the split come
    /// first. The split feature's own list is already in that order.
    fn partition(&mut self, split_k: usize, begin: usize, mid: usize, end: usize) {
        let lists = &mut self.lists;
        for &e in &lists[split_k][begin..mid] {
            self.go_left[e.row()] = true;
        }
        for &e in &lists[split_k][mid..end] {
            self.go_left[e.row()] = false;
        }
        for (k, list) in lists.iter_mut().enumerate() {
            if k == split_k {
                continue;
            }
            let seg = &mut list[begin..end];
            let (mut wl, mut wr) = (0, 0);
            for i in 0..seg.len() {
                let e = seg[i];
                let l = self.go_left[e.row()] as usize;
                seg[wl] = e;
                self.scratch[wr] = e;
                wl += l;
                wr += 1 - l;
            }
            seg[wl..].copy_from_slice(&self.scratch[..wr]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(n_rounds: usize) -> GbtParams {
        GbtParams {
            n_rounds,
            eta: 1.0,
            max_depth: 1,
            min_child_weight: 0.0,
            lambda: 0.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn four_row_stump() {
        let x = DenseMatrix::from_columns(4, vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let y = [1.0, 1.0, 3.0, 3.0];
        let m = GbtModel::fit(&x, &y, &plain(1)).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(m.importance(), vec![2.0]);
        match m.trees[0].nodes[0] {
            Node::Split { threshold, gain, .. } => {
                assert_eq!(threshold, 2.5);
                assert_eq!(gain, 2.0);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn constant_target_gives_no_splits() {
        let x = DenseMatrix::from_columns(5, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        let m = GbtModel::fit(&x, &[2.0; 5], &plain(3)).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(m.predict(&x).unwrap(), vec![2.0; 5]);
    }

    #[test]
    fn errors() {
        let x = DenseMatrix::zeros(0, 2);
        assert!(matches!(
            GbtModel::fit(&x, &[], &plain(1)),
            Err(Error::EmptyTrainingSet)
        ));
        let x = DenseMatrix::from_columns(2, vec![vec![1.0, f64::NAN]]);
        assert!(matches!(
            GbtModel::fit(&x, &[1.0, 2.0], &plain(1)),
            Err(Error::NonFiniteInput(_))
        ));
        let x = DenseMatrix::from_columns(2, vec![vec![1.0, 2.0]]);
        let m = GbtModel::fit(&x, &[1.0, 2.0], &plain(1)).unwrap();
        assert!(matches!(
            m.predict(&DenseMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { expected: 1, found: 3 })
        ));
    }

    #[test]
    fn huge_lambda_shrinks_to_base_score() {
        let x = DenseMatrix::from_columns(4, vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let y = [0.0, 1.0, 5.0, 9.0];
        let p = GbtParams {
            lambda: 1e12,
            ..plain(5)
        };
        let m = GbtModel::fit(&x, &y, &p).unwrap();
        for v in m.predict(&x).unwrap() {
            assert!((v - 3.75).abs() < 1e-9);
        }
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (DenseMatrix, Vec<f64>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let y = (0..n)
            .map(|i| cols[0][i].sin() + 0.5 * cols[d - 1][i] + rng.random_range(-0.1..0.1))
            .collect();
        (DenseMatrix::from_columns(n, cols), y)
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = random_problem(3, 200, 4);
        let p = GbtParams {
            seed: 11,
            ..GbtParams::default()
        };
        let a = GbtModel::fit(&x, &y, &p).unwrap();
        let b = GbtModel::fit(&x, &y, &p).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn training_loss_never_increases(seed in 0u64..500, depth in 1usize..5) {
            let (x, y) = random_problem(seed, 60, 3);
            let p = GbtParams { max_depth: depth, ..plain(0) };
            let mut last = f64::INFINITY;
            for rounds in [0usize, 1, 2, 4, 8] {
                let m = GbtModel::fit(&x, &y, &GbtParams { n_rounds: rounds, eta: 0.3, ..p.clone() }).unwrap();
                let pred = m.predict(&x).unwrap();
                let mse: f64 = pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
                prop_assert!(mse <= last + 1e-12);
                last = mse;
            }
        }

        #[test]
        fn invariant_to_monotone_feature_transform(seed in 0u64..500) {
            let (x, y) = random_problem(seed, 50, 2);
            let cols: Vec<Vec<f64>> = (0..2).map(|c| x.column(c).iter().map(|v| v.exp()).collect()).collect();
            let xt = DenseMatrix::from_columns(50, cols);
            let p = GbtParams { max_depth: 3, ..plain(4) };
            let a = GbtModel::fit(&x, &y, &p).unwrap().predict(&x).unwrap();
            let b = GbtModel::fit(&xt, &y, &p).unwrap().predict(&xt).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn every_split_is_the_best_split_of_its_rows(seed in 0u64..500, mcw in 0.0f64..4.0, gamma in 0.0f64..0.5) {
            // Coarse values so that ties between rows are common.
            let (x, y) = random_problem(seed, 80, 3);
            let cols: Vec<Vec<f64>> = (0..3).map(|c| x.column(c).iter().map(|v| (v * 2.0).round()).collect()).collect();
            let x = DenseMatrix::from_columns(80, cols);
            let p = GbtParams { max_depth: 3, min_child_weight: mcw, gamma, lambda: 0.7, ..plain(1) };
            let m = GbtModel::fit(&x, &y, &p).unwrap();
            let grad: Vec<f64> = y.iter().map(|v| m.base_score - v).collect();
            let hess = vec![1.0; 80];
            let mut stack = vec![(0usize, (0..80).collect::<Vec<usize>>(), 0usize)];
            while let Some((id, rows, depth)) = stack.pop() {
                let expected = if depth < 3 { find_best_split(&x, &grad, &hess, &rows, &[0, 1, 2], &p) } else { None };
                match (m.trees[0].nodes[id], expected) {
                    (Node::Leaf { .. }, None) => {}
                    (Node::Split { feature, threshold, gain, left, right }, Some(e)) => {
                        prop_assert_eq!(feature, e.feature);
                        prop_assert_eq!(threshold, e.threshold);
                        prop_assert!((gain - e.gain).abs() <= 1e-9 * e.gain.abs().max(1.0));
                        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, feature) < threshold);
                        stack.push((left, l, depth + 1));
                        stack.push((right, r, depth + 1));
                    }
                    (node, e) => prop_assert!(false, "node {:?} but best split {:?}", node, e),
                }
            }
        }

        #[test]
        fn depth_limit_respected(seed in 0u64..500, depth in 0usize..4) {
            let (x, y) = random_problem(seed, 40, 3);
            let m = GbtModel::fit(&x, &y, &GbtParams { max_depth: depth, ..plain(3) }).unwrap();
            for t in &m.trees {
                prop_assert!(t.depth() <= depth);
            }
        }
    }
}
