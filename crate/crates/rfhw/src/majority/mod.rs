//! Bit- and cycle-accurate model of the majority-decision block.
//!
//! The block turns the class outputs of the ensemble members into the most
//! frequent class. Votes are one-hot decoded, counted by per-class adder
//! trees, and the counts are then driven negative by iteratively subtracting
//! the leading-one of the surviving counts; the last class standing wins.
//! Two variants are modeled: the iterative subtractor (one decision in
//! flight) and the fully pipelined unfolding (one decision per cycle).

mod adder;
mod formulas;
mod iterative;
mod pipelined;

pub use adder::{
    compute_class_counts, leading_one, AdderTreePlan, AdderTreeStage, ClassCounts,
    ClassCountsResult,
};
pub use formulas::{
    issue_interval, iter_worst_case, max_count_popcount, n_iter_max, n_iter_min, n_pipe,
};
pub use iterative::{run_iterative, IterMajority, IterPhase, IterativeStream, StreamOutput};
pub use pipelined::{run_pipelined, PipelinedMajority};

use crate::error::{Error, Result};

/// A class label as it travels through the majority block.
pub type ClassLabel = u16;

/// The per-tree class outputs entering the majority block.
///
/// Construction rejects degenerate sizes: a single input or a single class
/// makes the log-depth structure vacuous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteVector {
    votes: Vec<ClassLabel>,
    num_classes: u16,
}

impl VoteVector {
    pub fn new(votes: Vec<ClassLabel>, num_classes: u16) -> Result<Self> {
        if votes.len() < 2 {
            return Err(Error::TooFewInputs(votes.len()));
        }
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        for (index, &vote) in votes.iter().enumerate() {
            if vote >= num_classes {
                return Err(Error::VoteOutOfRange {
                    index,
                    vote,
                    num_classes,
                });
            }
        }
        Ok(Self { votes, num_classes })
    }

    /// Number of inputs feeding the block.
    pub fn num_inputs(&self) -> usize {
        self.votes.len()
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn votes(&self) -> &[ClassLabel] {
        &self.votes
    }

    /// Per-class tally, the reference histogram for the datapath oracles.
    pub fn histogram(&self) -> Vec<u32> {
        let mut hist = vec![0u32; self.num_classes as usize];
        for &v in &self.votes {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// One one-hot row per input, exactly one set bit each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotMatrix {
    bits: Vec<bool>,
    rows: usize,
    cols: usize,
}

impl OneHotMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    /// The column feeding class `j`'s adder tree.
    pub fn column(&self, j: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.rows).map(move |i| self.bits[i * self.cols + j])
    }
}

/// Combinational one-hot decode of the input votes.
pub fn decode_one_hot(votes: &VoteVector) -> OneHotMatrix {
    let rows = votes.num_inputs();
    let cols = votes.num_classes() as usize;
    let mut bits = vec![false; rows * cols];
    for (i, &v) in votes.votes().iter().enumerate() {
        bits[i * cols + v as usize] = true;
    }
    OneHotMatrix { bits, rows, cols }
}

/// Reference majority: histogram argmax, ties to the highest class index.
///
/// This is the behavioral oracle the datapath models are checked against;
/// it never touches the bit-level machinery.
pub fn oracle_majority(votes: &VoteVector) -> ClassLabel {
    let hist = votes.histogram();
    let mut best = 0usize;
    for (j, &count) in hist.iter().enumerate() {
        if count >= hist[best] {
            best = j;
        }
    }
    best as ClassLabel
}
