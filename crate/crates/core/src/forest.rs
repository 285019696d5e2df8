//! Random forest of CART classification trees (Gini impurity).
//!
//! Thresholds are midpoints between consecutive distinct feature values. Among
//! equally good splits the lowest feature index wins, then the lowest
//! threshold, which makes a full-feature tree without bootstrapping a
//! deterministic function of its training rows.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"RFST";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("empty training set")]
    EmptyInput,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("not a forest payload")]
    BadMagic,
    #[error("unsupported forest version {0}")]
    Version(u32),
    #[error("truncated or corrupt forest payload")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturesPerSplit {
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::Sqrt => (n_features as f64).sqrt().round() as usize,
            FeaturesPerSplit::All => n_features,
            FeaturesPerSplit::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed: 1,
        }
    }
}

impl ForestConfig {
    /// One unrestricted tree on all rows and all features.
    pub fn single_tree() -> Self {
        ForestConfig {
            n_trees: 1,
            features_per_split: FeaturesPerSplit::All,
            bootstrap: false,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidConfig("min_samples_split must be >= 2".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidConfig("max_depth must be positive".into()));
        }
        if self.features_per_split == FeaturesPerSplit::Count(0) {
            return Err(ForestError::InvalidConfig("features_per_split must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { probs } => return probs,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<TreeNode>,
    n_features: usize,
    n_classes: usize,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    cfg: &'a ForestConfig,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let mut probs = vec![0.0; self.n_classes];
        for &r in rows {
            probs[self.y[r]] += 1.0;
        }
        let n = rows.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        TreeNode::Leaf { probs }
    }

    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.counts(rows);
            for i in 0..order.len() - 1 {
                let c = self.y[order[i]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (self.x[order[i]][f], self.x[order[i + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = (i + 1) as f64;
                let imp = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                let threshold = lo + (hi - lo) / 2.0;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        imp < b.impurity
                            || (imp == b.impurity
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let counts = self.counts(rows);
        let parent = gini(&counts);
        let at_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if parent == 0.0 || at_limit || rows.len() < self.cfg.min_samples_split {
            return self.leaf(rows);
        }
        let n_features = self.x[0].len();
        let k = self.cfg.features_per_split.resolve(n_features);
        let mut features: Vec<usize> = if k >= n_features {
            (0..n_features).collect()
        } else {
            sample(rng, n_features, k).into_vec()
        };
        features.sort_unstable();
        match self.best_split(rows, &features) {
            Some(s) if s.impurity <= parent => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
                TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: Box::new(self.grow(&l, depth + 1, rng)),
                    right: Box::new(self.grow(&r, depth + 1, rng)),
                }
            }
            _ => self.leaf(rows),
        }
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[usize]) -> Result<usize, ForestError> {
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch {
            rows: x.len(),
            labels: y.len(),
        });
    }
    if x.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    let d = x[0].len();
    for row in x {
        if row.len() != d {
            return Err(ForestError::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
    }
    Ok(d)
}

/// Grows one tree on the given row indices (duplicates allowed).
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    config: &ForestConfig,
    seed: u64,
) -> TreeNode {
    let b = Builder {
        x,
        y,
        n_classes,
        cfg: config,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    b.grow(rows, 0, &mut rng)
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], config: &ForestConfig) -> Result<Forest, ForestError> {
        let n_features = check_inputs(x, y)?;
        config.validate()?;
        let n_classes = y.iter().max().map_or(1, |m| m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let plans: Vec<(Vec<usize>, u64)> = (0..config.n_trees)
            .map(|_| {
                let rows = if config.bootstrap {
                    (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                (rows, rng.random())
            })
            .collect();
        let trees = plans
            .par_iter()
            .map(|(rows, seed)| fit_tree(x, y, rows, n_classes, config, *seed))
            .collect();
        Ok(Forest {
            trees,
            n_features,
            n_classes,
        })
    }

    pub fn from_trees(trees: Vec<TreeNode>, n_features: usize, n_classes: usize) -> Forest {
        Forest {
            trees,
            n_features,
            n_classes,
        }
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict(x)) {
                *o += p;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Most probable class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ForestError> {
        let p = self.predict_proba(x)?;
        Ok(p.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.n_features as u32).unwrap();
        out.write_u32::<LittleEndian>(self.n_classes as u32).unwrap();
        out.write_u32::<LittleEndian>(self.trees.len() as u32).unwrap();
        fn node(out: &mut Vec<u8>, n: &TreeNode) {
            match n {
                TreeNode::Leaf { probs } => {
                    out.push(0);
                    for p in probs {
                        out.write_f64::<LittleEndian>(*p).unwrap();
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(1);
                    out.write_u32::<LittleEndian>(*feature as u32).unwrap();
                    out.write_f64::<LittleEndian>(*threshold).unwrap();
                    node(out, left);
                    node(out, right);
                }
            }
        }
        for t in &self.trees {
            node(&mut out, t);
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Forest, ForestError> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| ForestError::Truncated)?;
        if &magic != MAGIC {
            return Err(ForestError::BadMagic);
        }
        let t = |_| ForestError::Truncated;
        let version = cur.read_u32::<LittleEndian>().map_err(t)?;
        if version != VERSION {
            return Err(ForestError::Version(version));
        }
        let n_features = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
        let n_classes = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
        let n_trees = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
        fn node(cur: &mut Cursor<&[u8]>, nf: usize, nc: usize, depth: usize) -> Result<TreeNode, ForestError> {
            let t = |_| ForestError::Truncated;
            if depth > 100_000 {
                return Err(ForestError::Truncated);
            }
            match cur.read_u8().map_err(t)? {
                0 => {
                    let probs = (0..nc)
                        .map(|_| cur.read_f64::<LittleEndian>().map_err(t))
                        .collect::<Result<_, _>>()?;
                    Ok(TreeNode::Leaf { probs })
                }
                1 => {
                    let feature = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
                    if feature >= nf {
                        return Err(ForestError::Truncated);
                    }
                    let threshold = cur.read_f64::<LittleEndian>().map_err(t)?;
                    let left = Box::new(node(cur, nf, nc, depth + 1)?);
                    let right = Box::new(node(cur, nf, nc, depth + 1)?);
                    Ok(TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    })
                }
                _ => Err(ForestError::Truncated),
            }
        }
        if n_trees == 0 {
            return Err(ForestError::Truncated);
        }
        let trees = (0..n_trees)
            .map(|_| node(&mut cur, n_features, n_classes, 0))
            .collect::<Result<Vec<_>, _>>()?;
        if cur.position() as usize != bytes.len() {
            return Err(ForestError::Truncated);
        }
        Ok(Forest {
            trees,
            n_features,
            n_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn xor() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        (x, vec![0, 1, 1, 0])
    }

    #[test]
    fn xor_single_tree_fits_exactly() {
        let (x, y) = xor();
        let f = Forest::fit(&x, &y, &ForestConfig::single_tree()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(f.predict(xi).unwrap(), *yi);
        }
        assert_eq!(f.trees()[0].depth(), 2);
    }

    #[test]
    fn constant_labels_give_pure_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let f = Forest::fit(&x, &[1, 1, 1], &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        for xi in [[0.0], [2.5], [9.0]] {
            assert_eq!(f.predict_proba(&xi).unwrap(), vec![0.0, 1.0]);
        }
    }

    #[test]
    fn averaging_two_trees() {
        let f = Forest::from_trees(
            vec![
                TreeNode::Leaf { probs: vec![1.0, 0.0] },
                TreeNode::Leaf { probs: vec![0.0, 1.0] },
            ],
            1,
            2,
        );
        assert_eq!(f.predict_proba(&[0.3]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            f.predict_proba(&[0.3, 1.0]),
            Err(ForestError::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn input_errors() {
        assert_eq!(Forest::fit(&[], &[], &ForestConfig::default()), Err(ForestError::EmptyInput));
        assert!(matches!(
            Forest::fit(&[vec![1.0]], &[0, 1], &ForestConfig::default()),
            Err(ForestError::LengthMismatch { .. })
        ));
        let bad = ForestConfig { min_samples_split: 1, ..Default::default() };
        assert!(Forest::fit(&[vec![1.0]], &[0], &bad).is_err());
    }

    #[test]
    fn max_depth_is_respected() {
        let x: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..32).map(|i| i % 2).collect();
        let cfg = ForestConfig { max_depth: Some(3), ..ForestConfig::single_tree() };
        let f = Forest::fit(&x, &y, &cfg).unwrap();
        assert!(f.trees()[0].depth() <= 3);
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + r[2] > 1.0)).collect();
        let f = Forest::fit(&x, &y, &ForestConfig { n_trees: 7, ..Default::default() }).unwrap();
        let bytes = f.serialize();
        let g = Forest::deserialize(&bytes).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            assert_eq!(f.predict_proba(&q).unwrap(), g.predict_proba(&q).unwrap());
        }
        assert_eq!(Forest::deserialize(&bytes[..bytes.len() - 3]), Err(ForestError::Truncated));
        assert_eq!(Forest::deserialize(&[]), Err(ForestError::Truncated));
        let mut v = bytes.clone();
        v[4] = 9;
        assert_eq!(Forest::deserialize(&v), Err(ForestError::Version(9)));
        assert_eq!(Forest::deserialize(b"nope1234"), Err(ForestError::BadMagic));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<usize> = (0..60).map(|_| rng.random_range(0..3)).collect();
        let cfg = ForestConfig { n_trees: 10, ..Default::default() };
        assert_eq!(Forest::fit(&x, &y, &cfg).unwrap(), Forest::fit(&x, &y, &cfg).unwrap());
    }

    fn data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0u8..5, 3), n)
                    .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect()),
                prop::collection::vec(0usize..3, n),
            )
        })
    }

    fn check_splits(node: &TreeNode, rows: &[usize], x: &[Vec<f64>], y: &[usize], nc: usize) -> Result<(), TestCaseError> {
        if let TreeNode::Split { feature, threshold, left, right } = node {
            let count = |rs: &[usize]| {
                let mut c = vec![0; nc];
                rs.iter().for_each(|&r| c[y[r]] += 1);
                c
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][*feature] <= *threshold);
            let n = rows.len() as f64;
            let child = (l.len() as f64 * gini(&count(&l)) + r.len() as f64 * gini(&count(&r))) / n;
            prop_assert!(child <= gini(&count(rows)) + 1e-12);
            check_splits(left, &l, x, y, nc)?;
            check_splits(right, &r, x, y, nc)?;
        } else if let TreeNode::Leaf { probs } = node {
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn splits_never_increase_impurity((x, y) in data()) {
            let f = Forest::fit(&x, &y, &ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
            let t = fit_tree(&x, &y, &(0..x.len()).collect::<Vec<_>>(), f.n_classes(), &ForestConfig::single_tree(), 0);
            check_splits(&t, &(0..x.len()).collect::<Vec<_>>(), &x, &y, f.n_classes())?;
        }

        #[test]
        fn probabilities_sum_to_one((x, y) in data(), q in prop::collection::vec(-1.0f64..6.0, 3)) {
            let f = Forest::fit(&x, &y, &ForestConfig { n_trees: 4, ..Default::default() }).unwrap();
            let p = f.predict_proba(&q).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn tree_depends_on_row_multiset_only((x, y) in data(), seed in any::<u64>(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
            let nc = y.iter().max().unwrap() + 1;
            let rows: Vec<usize> = picks.iter().map(|p| p.index(x.len())).collect();
            let mut shuffled = rows.clone();
            shuffled.reverse();
            let cfg = ForestConfig { features_per_split: FeaturesPerSplit::Count(2), ..Default::default() };
            prop_assert_eq!(
                fit_tree(&x, &y, &rows, nc, &cfg, seed),
                fit_tree(&x, &y, &shuffled, nc, &cfg, seed)
            );
        }
    }
}
