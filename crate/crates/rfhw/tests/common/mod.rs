//! Shared generators and reference oracles for the integration suites.

#![allow(dead_code)] // each test binary uses its own subset

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rfhw::io::Dataset;
use rfhw::majority::VoteVector;
use rfhw::trainer::SplitCandidate;
use rfhw::tree::{LogicalTree, TreeNode};

/// A random binary tree with coordinates below `num_features`, labels below
/// `num_classes`, and depth at most `max_depth`.
pub fn random_tree(
    rng: &mut ChaCha8Rng,
    max_depth: u32,
    num_features: u32,
    num_classes: u16,
) -> LogicalTree {
    fn node(rng: &mut ChaCha8Rng, depth: u32, max_depth: u32, p: u32, k: u16) -> TreeNode {
        let leaf_probability = if max_depth == 0 {
            1.0
        } else {
            depth as f64 / max_depth as f64 * 0.7 + 0.1
        };
        if depth >= max_depth || rng.random::<f64>() < leaf_probability {
            TreeNode::Leaf {
                label: rng.random_range(0..k) as u8,
            }
        } else {
            TreeNode::Split {
                coord: rng.random_range(0..p) as u16,
                value: rng.random_range(0..=255u32) as u8,
                le: Box::new(node(rng, depth + 1, max_depth, p, k)),
                gt: Box::new(node(rng, depth + 1, max_depth, p, k)),
            }
        }
    }
    LogicalTree::new(node(rng, 0, max_depth, num_features, num_classes))
}

/// Uniformly random votes over `num_classes`.
pub fn random_votes(rng: &mut ChaCha8Rng, num_inputs: usize, num_classes: u16) -> VoteVector {
    let votes = (0..num_inputs)
        .map(|_| rng.random_range(0..num_classes))
        .collect();
    VoteVector::new(votes, num_classes).expect("generated votes are valid")
}

/// Votes where class 0 is drawn with probability `skew`, spreading the
/// winning count over its full range.
pub fn skewed_votes(
    rng: &mut ChaCha8Rng,
    num_inputs: usize,
    num_classes: u16,
    skew: f64,
) -> VoteVector {
    let votes = (0..num_inputs)
        .map(|_| {
            if rng.random::<f64>() < skew {
                0
            } else {
                rng.random_range(1..num_classes)
            }
        })
        .collect();
    VoteVector::new(votes, num_classes).expect("generated votes are valid")
}

/// Brute force split reference: enumerate every (coordinate, threshold)
/// pair, re-partitioning from scratch, and compare scores in exact
/// arithmetic. Independent of the trainer's incremental scan.
pub fn brute_force_split(
    data: &Dataset,
    samples: &[u32],
    coords: &[u16],
    min_child: usize,
) -> Option<SplitCandidate> {
    let k = data.num_classes() as usize;
    let n = samples.len() as u64;
    let min_child = min_child.max(1) as u64;
    let hist = |subset: &[u32]| {
        let mut h = vec![0u64; k];
        for &s in subset {
            h[data.label(s) as usize] += 1;
        }
        h
    };
    let sum_sq = |h: &[u64]| h.iter().map(|&c| c * c).sum::<u64>();
    let parent = hist(samples);
    if parent.contains(&n) {
        return None;
    }
    // score = sumL^2/nL + sumR^2/nR as the exact fraction (num, den)
    let parent_score = (u128::from(sum_sq(&parent)), u128::from(n));
    let better = |a: (u128, u128), b: (u128, u128)| a.0 * b.1 > b.0 * a.1;

    let mut sorted_coords = coords.to_vec();
    sorted_coords.sort_unstable();
    sorted_coords.dedup();
    let mut best: Option<((u128, u128), SplitCandidate)> = None;
    for &coord in &sorted_coords {
        let mut values: Vec<u8> = samples.iter().map(|&s| data.feature(s, coord)).collect();
        values.sort_unstable();
        values.dedup();
        for &threshold in &values {
            let (le, gt): (Vec<u32>, Vec<u32>) = samples
                .iter()
                .partition(|&&s| data.feature(s, coord) <= threshold);
            if gt.is_empty() || (le.len() as u64) < min_child || (gt.len() as u64) < min_child {
                continue;
            }
            let score = (
                u128::from(sum_sq(&hist(&le))) * gt.len() as u128
                    + u128::from(sum_sq(&hist(&gt))) * le.len() as u128,
                le.len() as u128 * gt.len() as u128,
            );
            let reference = best.as_ref().map(|(s, _)| *s).unwrap_or(parent_score);
            if better(score, reference) {
                best = Some((score, SplitCandidate { coord, threshold }));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// A small random classification dataset with every class present.
pub fn random_tiny_dataset(rng: &mut ChaCha8Rng) -> (Dataset, Vec<u32>, Vec<u16>) {
    let n = rng.random_range(2..=100usize);
    let p = rng.random_range(1..=5usize);
    let k = rng.random_range(2..=5u16);
    // low-cardinality features make score ties common, exercising tie-breaks
    let value_cap: u8 = if rng.random::<bool>() { 3 } else { 255 };
    let images: Vec<u8> = (0..n * p).map(|_| rng.random_range(0..=value_cap)).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..k) as u8).collect();
    // force every class to appear at least once when it fits
    for c in 0..k.min(n as u16) {
        labels[c as usize] = c as u8;
    }
    let data = Dataset::new(images, labels, p).unwrap();
    let samples: Vec<u32> = (0..n as u32).collect();
    let coords: Vec<u16> = (0..p as u16).collect();
    (data, samples, coords)
}
