//! CART random-forest training with bagging and per-split feature
//! subsampling.
//!
//! Split selection compares candidate scores in exact integer arithmetic,
//! so tie-breaking is deterministic and independent of evaluation order or
//! floating-point rounding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::io::Dataset;
use crate::tree::{LogicalTree, TreeMemoryImage, TreeNode};

/// Training protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_trees: usize,
    /// Decision-node levels per tree; the leaf level is not counted.
    pub max_levels: u32,
    /// Fraction of the training set drawn (without replacement) per tree.
    pub bagging_fraction: f64,
    /// Coordinates drawn per split; `None` means ceil(sqrt(p)).
    pub features_per_split: Option<usize>,
    pub rng_seed: u64,
    pub min_samples_leaf: usize,
}

impl TrainConfig {
    pub fn new(num_trees: usize, max_levels: u32) -> Self {
        Self {
            num_trees,
            max_levels,
            bagging_fraction: 0.75,
            features_per_split: None,
            rng_seed: 0,
            min_samples_leaf: 1,
        }
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn with_bagging_fraction(mut self, fraction: f64) -> Self {
        self.bagging_fraction = fraction;
        self
    }

    pub fn with_features_per_split(mut self, m: usize) -> Self {
        self.features_per_split = Some(m);
        self
    }

    pub fn with_min_samples_leaf(mut self, min: usize) -> Self {
        self.min_samples_leaf = min;
        self
    }

    /// The per-split coordinate count for a given feature dimensionality.
    pub fn resolved_features_per_split(&self, num_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (num_features as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.num_trees < 2 {
            return Err(Error::TooFewTrees(self.num_trees));
        }
        if self.max_levels < 1 {
            return Err(Error::TooFewLevels(self.max_levels));
        }
        if !(self.bagging_fraction > 0.0 && self.bagging_fraction <= 1.0) {
            return Err(Error::BadBaggingFraction(self.bagging_fraction));
        }
        let m = self.resolved_features_per_split(num_features);
        if m < 1 || m > num_features {
            return Err(Error::BadFeaturesPerSplit {
                got: m,
                num_features,
            });
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(40, 14)
    }
}

/// Gini impurity of a class histogram: 1 - sum((n_j / n)^2).
pub fn gini(class_histogram: &[u64]) -> Result<f64> {
    let n: u64 = class_histogram.iter().sum();
    if n == 0 {
        return Err(Error::EmptyHistogram);
    }
    let n = n as f64;
    Ok(1.0 - class_histogram.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// A split candidate: samples with x[coord] <= threshold go to the
/// taken branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCandidate {
    pub coord: u16,
    pub threshold: u8,
}

/// Split quality as the exact rational sum(nL_j^2)/nL + sum(nR_j^2)/nR.
/// Larger is better; minimizing weighted child Gini is equivalent to
/// maximizing this, with no rounding.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn of_children(sum_sq_le: u64, n_le: u64, sum_sq_gt: u64, n_gt: u64) -> Self {
        Self {
            num: u128::from(sum_sq_le) * u128::from(n_gt) + u128::from(sum_sq_gt) * u128::from(n_le),
            den: u128::from(n_le) * u128::from(n_gt),
        }
    }

    fn of_node(sum_sq: u64, n: u64) -> Self {
        Self {
            num: u128::from(sum_sq),
            den: u128::from(n),
        }
    }

    fn better_than(&self, other: &Self) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn class_histogram(data: &Dataset, samples: &[u32]) -> Vec<u64> {
    let mut hist = vec![0u64; data.num_classes() as usize];
    for &s in samples {
        hist[data.label(s) as usize] += 1;
    }
    hist
}

fn majority_label(hist: &[u64]) -> u8 {
    let mut best = 0usize;
    for (j, &count) in hist.iter().enumerate() {
        if count >= hist[best] {
            best = j;
        }
    }
    best as u8
}

/// Find the impurity-minimizing split over the candidate coordinates.
///
/// Thresholds are the distinct feature values observed at this node; ties
/// are broken by the lowest coordinate, then the lowest threshold. Returns
/// `None` when no split strictly reduces the weighted Gini impurity or no
/// split leaves both children with at least `min_child` samples.
pub fn best_split(
    data: &Dataset,
    samples: &[u32],
    candidate_coords: &[u16],
    min_child: usize,
) -> Option<SplitCandidate> {
    let k = data.num_classes() as usize;
    let n = samples.len() as u64;
    if n == 0 {
        return None;
    }
    let parent_hist = class_histogram(data, samples);
    if parent_hist.contains(&n) {
        return None; // pure node
    }
    let parent_sum_sq: u64 = parent_hist.iter().map(|&c| c * c).sum();
    let parent = SplitScore::of_node(parent_sum_sq, n);
    let min_child = min_child.max(1) as u64;

    let mut coords: Vec<u16> = candidate_coords.to_vec();
    coords.sort_unstable();
    coords.dedup();

    let mut bucket_counts = vec![0u32; 256 * k];
    let mut bucket_totals = [0u32; 256];
    let mut touched: Vec<u8> = Vec::with_capacity(256.min(samples.len()));
    let mut best: Option<(SplitScore, SplitCandidate)> = None;

    for &coord in &coords {
        for &s in samples {
            let v = data.feature(s, coord) as usize;
            if bucket_totals[v] == 0 {
                touched.push(v as u8);
            }
            bucket_totals[v] += 1;
            bucket_counts[v * k + data.label(s) as usize] += 1;
        }
        touched.sort_unstable();

        let mut hist_le = vec![0u64; k];
        let mut n_le = 0u64;
        let mut sum_sq_le = 0u64;
        let mut hist_gt = parent_hist.clone();
        let mut sum_sq_gt = parent_sum_sq;
        for (t, &v) in touched.iter().enumerate() {
            let vi = v as usize;
            for c in 0..k {
                let moved = u64::from(bucket_counts[vi * k + c]);
                if moved > 0 {
                    sum_sq_le += moved * (2 * hist_le[c] + moved);
                    hist_le[c] += moved;
                    sum_sq_gt -= moved * (2 * hist_gt[c] - moved);
                    hist_gt[c] -= moved;
                }
            }
            n_le += u64::from(bucket_totals[vi]);
            if t + 1 == touched.len() {
                break; // threshold at the maximum leaves the gt side empty
            }
            let n_gt = n - n_le;
            if n_le < min_child || n_gt < min_child {
                continue;
            }
            let score = SplitScore::of_children(sum_sq_le, n_le, sum_sq_gt, n_gt);
            let beats_best = match &best {
                Some((best_score, _)) => score.better_than(best_score),
                None => score.better_than(&parent),
            };
            if beats_best {
                best = Some((score, SplitCandidate { coord, threshold: v }));
            }
        }

        for &v in &touched {
            let vi = v as usize;
            bucket_totals[vi] = 0;
            for c in 0..k {
                bucket_counts[vi * k + c] = 0;
            }
        }
        touched.clear();
    }
    best.map(|(_, candidate)| candidate)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-tree random stream, stable regardless of which worker
/// trains the tree.
fn tree_rng(seed: u64, tree_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tree_index.wrapping_add(1))))
}

fn grow(
    data: &Dataset,
    samples: Vec<u32>,
    depth: u32,
    config: &TrainConfig,
    features_per_split: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let hist = class_histogram(data, &samples);
    let majority = majority_label(&hist);
    let pure = hist.contains(&(samples.len() as u64));
    if depth == config.max_levels || pure || samples.len() < 2 * config.min_samples_leaf.max(1) {
        return TreeNode::Leaf { label: majority };
    }
    let coords: Vec<u16> = rand::seq::index::sample(rng, data.num_features(), features_per_split)
        .iter()
        .map(|i| i as u16)
        .collect();
    match best_split(data, &samples, &coords, config.min_samples_leaf) {
        None => TreeNode::Leaf { label: majority },
        Some(split) => {
            let (le, gt): (Vec<u32>, Vec<u32>) = samples
                .into_iter()
                .partition(|&s| data.feature(s, split.coord) <= split.threshold);
            let le = grow(data, le, depth + 1, config, features_per_split, rng);
            let gt = grow(data, gt, depth + 1, config, features_per_split, rng);
            TreeNode::Split {
                coord: split.coord,
                value: split.threshold,
                le: Box::new(le),
                gt: Box::new(gt),
            }
        }
    }
}

/// Grow one CART tree on the given samples, drawing fresh candidate
/// coordinates at every split from the per-tree stream.
pub fn train_tree(
    data: &Dataset,
    samples: Vec<u32>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> LogicalTree {
    let m = config.resolved_features_per_split(data.num_features());
    LogicalTree::new(grow(data, samples, 0, config, m, rng))
}

/// Train the full forest: every tree gets an independent bagged subsample
/// (drawn without replacement) and its own random stream, so the result is
/// identical whether trees are trained in parallel or sequentially.
pub fn train_forest(data: &Dataset, config: &TrainConfig) -> Result<ForestModel> {
    config.validate(data.num_features())?;
    let n = data.num_samples();
    let bag_size = ((n as f64 * config.bagging_fraction).floor() as usize).clamp(1, n);
    let num_classes = data.num_classes().max(2);
    let num_features = data.num_features() as u32;

    let trees: Result<Vec<TreeMemoryImage>> = (0..config.num_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(config.rng_seed, i as u64);
            let bag: Vec<u32> = rand::seq::index::sample(&mut rng, n, bag_size)
                .iter()
                .map(|s| s as u32)
                .collect();
            let tree = train_tree(data, bag, config, &mut rng);
            TreeMemoryImage::from_logical(&tree, config.max_levels, num_features, num_classes)
        })
        .collect();

    let metadata = format!(
        "trees={} levels={} bagging={} features_per_split={} min_samples_leaf={} seed={}",
        config.num_trees,
        config.max_levels,
        config.bagging_fraction,
        config.resolved_features_per_split(data.num_features()),
        config.min_samples_leaf,
        config.rng_seed
    );
    ForestModel::new(trees?, metadata)
}
