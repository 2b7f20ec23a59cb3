//! Random forest: bootstrapped Gini decision trees with per-split feature
//! subsampling and vote-fraction scoring.
//!
//! Defaults mirror textbook classification settings: 100 trees, Gini
//! impurity, `floor(sqrt(p))` candidate features per split, unlimited depth,
//! `min_samples_split = 2`, bootstrap size n. Candidate thresholds are the
//! midpoints between consecutive distinct sorted feature values; ties in
//! gain break toward the lowest feature index, then the lowest threshold,
//! so builds are deterministic given the seed.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureMatrix, LabeledDataset};
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// candidate features per split; `None` means `floor(sqrt(p))`
    pub max_features: Option<usize>,
    /// `None` means unlimited
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Internal nodes route by `feature <= threshold`; leaves carry the
/// positive-class fraction of the training samples that reached them.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { fraction: f64, count: usize },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Leaf fraction for one feature row.
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { fraction, .. } => *fraction,
            TreeNode::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.score(row)
                } else {
                    right.score(row)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub config: ForestConfig,
    pub n_train: usize,
    pub n_features: usize,
}

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("gini impurity of an empty label set is undefined")]
    EmptyLabels,
    #[error("training partition is empty")]
    EmptyTraining,
    #[error("feature width {found} does not match training width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("bad forest file at line {line}: {message}")]
    BadForestFile { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Gini impurity of a binary label multiset: `1 - q^2 - (1-q)^2`.
pub fn gini_impurity(labels: &[u8]) -> Result<f64, ForestError> {
    if labels.is_empty() {
        return Err(ForestError::EmptyLabels);
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    Ok(gini_counts(pos, labels.len()))
}

#[inline]
fn gini_counts(pos: usize, n: usize) -> f64 {
    let q = pos as f64 / n as f64;
    1.0 - q * q - (1.0 - q) * (1.0 - q)
}

/// Deterministic RNG stream for one tree of a forest.
pub fn tree_stream(seed: u64, tree_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seeding::stable_hash64(seed, &["tree", &tree_index.to_string()]))
}

struct Resolved {
    mtry: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
}

/// Fits one tree on all rows of `features`. Exposed mainly for oracle tests;
/// forests go through [`fit_forest`].
pub fn fit_tree(
    features: &FeatureMatrix,
    labels: &[u8],
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    assert_eq!(features.n_rows, labels.len(), "fit_tree: row/label mismatch");
    assert!(features.n_rows > 0, "fit_tree: no samples");
    let p = features.n_cols;
    let resolved = Resolved {
        mtry: config.max_features.unwrap_or_else(|| sqrt_floor(p)).clamp(1, p),
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split.max(2),
    };
    let rows: Vec<usize> = (0..features.n_rows).collect();
    build_node(features, labels, rows, 0, &resolved, rng)
}

fn sqrt_floor(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

fn build_node(
    features: &FeatureMatrix,
    labels: &[u8],
    rows: Vec<usize>,
    depth: usize,
    cfg: &Resolved,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| labels[r] != 0).count();
    let make_leaf = || TreeNode::Leaf { fraction: pos as f64 / n as f64, count: n };

    if pos == 0 || pos == n || n < cfg.min_samples_split {
        return make_leaf();
    }
    if let Some(limit) = cfg.max_depth {
        if depth >= limit {
            return make_leaf();
        }
    }

    let p = features.n_cols;
    // draw mtry distinct features, then evaluate in ascending order so gain
    // ties resolve to the lowest feature index
    let mut pool: Vec<usize> = (0..p).collect();
    for i in 0..cfg.mtry {
        let j = i + seeding::uniform_index(rng, p - i);
        pool.swap(i, j);
    }
    let mut candidates = pool[..cfg.mtry].to_vec();
    candidates.sort_unstable();

    let parent_gini = gini_counts(pos, n);
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);

    for &f in &candidates {
        column.clear();
        column.extend(rows.iter().map(|&r| (features.row(r)[f], labels[r])));
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut pos_left = 0usize;
        for i in 1..n {
            pos_left += (column[i - 1].1 != 0) as usize;
            if column[i - 1].0 == column[i].0 {
                continue; // a threshold cannot separate equal values
            }
            let threshold = (column[i - 1].0 + column[i].0) / 2.0;
            let (nl, nr) = (i, n - i);
            let pos_right = pos - pos_left;
            let weighted = (nl as f64 * gini_counts(pos_left, nl)
                + nr as f64 * gini_counts(pos_right, nr))
                / n as f64;
            let gain = parent_gini - weighted;
            // strictly greater keeps the first (lowest feature, lowest
            // threshold) winner on ties
            if gain > 0.0 && best.map_or(true, |(bg, _, _)| gain > bg) {
                best = Some((gain, f, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return make_leaf();
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| features.row(r)[feature] <= threshold);
    debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

    let left = build_node(features, labels, left_rows, depth + 1, cfg, rng);
    let right = build_node(features, labels, right_rows, depth + 1, cfg, rng);
    TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
}

/// Fits `n_trees` trees on the dataset's training partition, each on its own
/// bootstrap resample and RNG stream. Trees fit in parallel; the result is a
/// pure function of (dataset, config).
pub fn fit_forest(dataset: &LabeledDataset, config: &ForestConfig) -> Result<ForestModel, ForestError> {
    let n = dataset.split_index;
    if n == 0 {
        return Err(ForestError::EmptyTraining);
    }
    let train = dataset.train_features();
    let labels = dataset.train_labels();
    let p = train.n_cols;
    let resolved = Resolved {
        mtry: config.max_features.unwrap_or_else(|| sqrt_floor(p)).clamp(1, p),
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split.max(2),
    };

    let trees: Vec<TreeNode> = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_stream(config.seed, i);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| seeding::uniform_index(&mut rng, n)).collect()
            } else {
                (0..n).collect()
            };
            build_node(&train, labels, rows, 0, &resolved, &mut rng)
        })
        .collect();

    Ok(ForestModel { trees, config: config.clone(), n_train: n, n_features: p })
}

/// Mean leaf fraction across trees, one score per row.
pub fn forest_predict_proba(
    model: &ForestModel,
    features: &FeatureMatrix,
) -> Result<Vec<f64>, ForestError> {
    if features.n_cols != model.n_features {
        return Err(ForestError::WidthMismatch {
            expected: model.n_features,
            found: features.n_cols,
        });
    }
    let n_trees = model.trees.len() as f64;
    Ok((0..features.n_rows)
        .map(|k| {
            let row = features.row(k);
            model.trees.iter().map(|t| t.score(row)).sum::<f64>() / n_trees
        })
        .collect())
}

fn write_node(out: &mut String, node: &TreeNode) {
    match node {
        TreeNode::Leaf { fraction, count } => {
            out.push_str(&format!("leaf {:016x} {count}\n", fraction.to_bits()));
        }
        TreeNode::Split { feature, threshold, left, right } => {
            out.push_str(&format!("split {feature} {:016x}\n", threshold.to_bits()));
            write_node(out, left);
            write_node(out, right);
        }
    }
}

/// Saves the model as a preorder node list per tree; floats as hex bits so
/// the round trip is exact.
pub fn save_forest(model: &ForestModel, path: &Path) -> Result<(), ForestError> {
    let mut out = String::new();
    out.push_str("sigmove-forest v1\n");
    out.push_str(&format!("n_trees {}\n", model.config.n_trees));
    out.push_str(&format!(
        "max_features {}\n",
        model.config.max_features.map_or("auto".into(), |v| v.to_string())
    ));
    out.push_str(&format!(
        "max_depth {}\n",
        model.config.max_depth.map_or("none".into(), |v| v.to_string())
    ));
    out.push_str(&format!("min_samples_split {}\n", model.config.min_samples_split));
    out.push_str(&format!("bootstrap {}\n", model.config.bootstrap));
    out.push_str(&format!("seed {}\n", model.config.seed));
    out.push_str(&format!("n_train {}\n", model.n_train));
    out.push_str(&format!("n_features {}\n", model.n_features));
    for (i, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree {i}\n"));
        write_node(&mut out, tree);
    }
    out.push_str("end\n");
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|source| ForestError::Io { path: path.display().to_string(), source })
}

pub fn load_forest(path: &Path) -> Result<ForestModel, ForestError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ForestError::Io { path: path.display().to_string(), source })?;
    let mut lines = text.lines().enumerate().peekable();
    let bad = |line: usize, message: String| ForestError::BadForestFile { line, message };

    fn expect<'a, I>(
        lines: &mut std::iter::Peekable<I>,
        prefix: &str,
    ) -> Result<(usize, String), ForestError>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        match lines.next() {
            Some((i, l)) if l.starts_with(prefix) => Ok((i + 1, l.to_owned())),
            Some((i, l)) => Err(ForestError::BadForestFile {
                line: i + 1,
                message: format!("expected `{prefix} ...`, found `{l}`"),
            }),
            None => Err(ForestError::BadForestFile { line: 0, message: "unexpected end".into() }),
        }
    }

    let (i, magic) = expect(&mut lines, "sigmove-forest")?;
    if magic != "sigmove-forest v1" {
        return Err(bad(i, "not a sigmove forest file".into()));
    }
    fn value(line: (usize, String)) -> Result<String, ForestError> {
        line.1.split_once(' ').map(|(_, v)| v.to_owned()).ok_or(ForestError::BadForestFile {
            line: line.0,
            message: "missing value".into(),
        })
    }
    let n_trees: usize =
        value(expect(&mut lines, "n_trees")?)?.parse().map_err(|_| bad(2, "bad n_trees".into()))?;
    let max_features = match value(expect(&mut lines, "max_features")?)?.as_str() {
        "auto" => None,
        v => Some(v.parse().map_err(|_| bad(3, "bad max_features".into()))?),
    };
    let max_depth = match value(expect(&mut lines, "max_depth")?)?.as_str() {
        "none" => None,
        v => Some(v.parse().map_err(|_| bad(4, "bad max_depth".into()))?),
    };
    let min_samples_split: usize = value(expect(&mut lines, "min_samples_split")?)?
        .parse()
        .map_err(|_| bad(5, "bad min_samples_split".into()))?;
    let bootstrap: bool =
        value(expect(&mut lines, "bootstrap")?)?.parse().map_err(|_| bad(6, "bad bootstrap".into()))?;
    let seed: u64 = value(expect(&mut lines, "seed")?)?.parse().map_err(|_| bad(7, "bad seed".into()))?;
    let n_train: usize =
        value(expect(&mut lines, "n_train")?)?.parse().map_err(|_| bad(8, "bad n_train".into()))?;
    let n_features: usize =
        value(expect(&mut lines, "n_features")?)?.parse().map_err(|_| bad(9, "bad n_features".into()))?;

    fn read_node<'a, I>(lines: &mut std::iter::Peekable<I>) -> Result<TreeNode, ForestError>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (i, line) = lines
            .next()
            .ok_or(ForestError::BadForestFile { line: 0, message: "unexpected end".into() })?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("leaf") => {
                let bits = parts
                    .next()
                    .and_then(|w| u64::from_str_radix(w, 16).ok())
                    .ok_or(ForestError::BadForestFile { line: i + 1, message: "bad leaf".into() })?;
                let count = parts.next().and_then(|w| w.parse().ok()).ok_or(
                    ForestError::BadForestFile { line: i + 1, message: "bad leaf count".into() },
                )?;
                Ok(TreeNode::Leaf { fraction: f64::from_bits(bits), count })
            }
            Some("split") => {
                let feature = parts.next().and_then(|w| w.parse().ok()).ok_or(
                    ForestError::BadForestFile { line: i + 1, message: "bad split feature".into() },
                )?;
                let bits = parts.next().and_then(|w| u64::from_str_radix(w, 16).ok()).ok_or(
                    ForestError::BadForestFile { line: i + 1, message: "bad split threshold".into() },
                )?;
                let left = read_node(lines)?;
                let right = read_node(lines)?;
                Ok(TreeNode::Split {
                    feature,
                    threshold: f64::from_bits(bits),
                    left: Box::new(left),
                    right: Box::new(right),
                })
            }
            _ => Err(ForestError::BadForestFile {
                line: i + 1,
                message: format!("expected leaf/split, found `{line}`"),
            }),
        }
    }

    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let (i, header) = expect(&mut lines, "tree")?;
        if header != format!("tree {t}") {
            return Err(bad(i, format!("expected `tree {t}`, found `{header}`")));
        }
        trees.push(read_node(&mut lines)?);
    }
    let (i, end) = expect(&mut lines, "end")?;
    if end != "end" {
        return Err(bad(i, "missing end marker".into()));
    }

    let config =
        ForestConfig { n_trees, max_features, max_depth, min_samples_split, bootstrap, seed };
    Ok(ForestModel { trees, config, n_train, n_features })
}
