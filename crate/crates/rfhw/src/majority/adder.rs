//! Per-class adder trees and the signed class-count registers.
//!
//! Each class owns a log-depth adder tree that sums its one-hot column.
//! Adders run at the minimum width: one-bit inputs in the first stage,
//! one more bit per stage after that, with a register after every stage.

use super::{ClassLabel, OneHotMatrix};
use crate::error::{Error, Result};

/// One registered stage of an adder tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdderTreeStage {
    /// Number of adders in this stage: ceil(T / 2^(s+1)).
    pub adder_count: usize,
    /// Input operand width in bits (s + 1).
    pub input_width: u32,
    /// Output width in bits (s + 2).
    pub output_width: u32,
}

/// Stage layout of one adder tree for a given input count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdderTreePlan {
    num_inputs: usize,
    stages: Vec<AdderTreeStage>,
}

impl AdderTreePlan {
    pub fn for_inputs(num_inputs: usize) -> Result<Self> {
        if num_inputs < 2 {
            return Err(Error::TooFewInputs(num_inputs));
        }
        let depth = ceil_log2(num_inputs);
        let stages = (0..depth)
            .map(|s| AdderTreeStage {
                adder_count: num_inputs.div_ceil(1 << (s + 1)),
                input_width: s + 1,
                output_width: s + 2,
            })
            .collect();
        Ok(Self { num_inputs, stages })
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Pipeline depth in cycles: ceil(log2 T), one register per stage.
    pub fn depth(&self) -> u32 {
        self.stages.len() as u32
    }

    pub fn stages(&self) -> &[AdderTreeStage] {
        &self.stages
    }

    /// Apply stage `s` to the values held in the previous stage register.
    ///
    /// Adjacent values are paired; a trailing odd value passes through.
    /// Overflow past the declared output width is a plan bug, not an input
    /// condition, so it fails hard.
    pub fn advance_stage(&self, stage: usize, values: &[u32]) -> Vec<u32> {
        let spec = &self.stages[stage];
        let limit = 1u32 << spec.output_width;
        let out: Vec<u32> = values
            .chunks(2)
            .map(|pair| pair.iter().sum::<u32>())
            .collect();
        assert_eq!(out.len(), spec.adder_count, "stage {stage} adder count");
        for &v in &out {
            assert!(
                v < limit,
                "stage {stage} value {v} overflows {} bits",
                spec.output_width
            );
        }
        out
    }

    /// Stage-0 inputs for class `j`: its one-hot column as one-bit values.
    pub fn column_inputs(onehot: &OneHotMatrix, class: usize) -> Vec<u32> {
        onehot.column(class).map(u32::from).collect()
    }
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    debug_assert!(n >= 2);
    usize::BITS - (n - 1).leading_zeros()
}

pub(crate) fn floor_log2(n: usize) -> u32 {
    debug_assert!(n >= 1);
    usize::BITS - 1 - n.leading_zeros()
}

/// The K signed class-count registers feeding the subtractors.
///
/// Each count is held as a two's-complement word of W+1 bits, where
/// W = ceil(log2(T+1)) magnitude bits are wide enough for a unanimous
/// count, plus the appended sign bit on top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    raw: Vec<u32>,
    magnitude_width: u32,
}

impl ClassCounts {
    /// Latch fresh adder-tree outputs with a cleared sign bit in front.
    pub fn latch(magnitudes: &[u32], num_inputs: usize) -> Self {
        let magnitude_width = ceil_log2(num_inputs + 1);
        for &m in magnitudes {
            debug_assert!(m < (1 << magnitude_width));
        }
        Self {
            raw: magnitudes.to_vec(),
            magnitude_width,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.raw.len()
    }

    pub fn magnitude_width(&self) -> u32 {
        self.magnitude_width
    }

    /// Low W bits of the count word.
    pub fn magnitude(&self, class: usize) -> u32 {
        self.raw[class] & ((1 << self.magnitude_width) - 1)
    }

    pub fn magnitudes(&self) -> Vec<u32> {
        (0..self.raw.len()).map(|j| self.magnitude(j)).collect()
    }

    /// The appended two's-complement sign bit; set means negative.
    pub fn sign(&self, class: usize) -> bool {
        (self.raw[class] >> self.magnitude_width) & 1 == 1
    }

    pub fn signs(&self) -> Vec<bool> {
        (0..self.raw.len()).map(|j| self.sign(j)).collect()
    }

    pub fn all_signs_set(&self) -> bool {
        (0..self.raw.len()).all(|j| self.sign(j))
    }

    /// OR of the magnitudes of all sign-clear counts.
    pub fn or_of_clear(&self) -> u32 {
        (0..self.raw.len())
            .filter(|&j| !self.sign(j))
            .fold(0, |acc, j| acc | self.magnitude(j))
    }

    /// Priority encoder: the highest class index whose sign bit is clear.
    pub fn highest_clear(&self) -> Option<ClassLabel> {
        (0..self.raw.len()).rev().find(|&j| !self.sign(j)).map(|j| j as ClassLabel)
    }

    pub fn count_clear(&self) -> usize {
        (0..self.raw.len()).filter(|&j| !self.sign(j)).count()
    }

    /// Subtract `value` from every sign-clear count, wrapping in W+1 bits.
    /// Sign-set counts are masked off and stay untouched.
    pub fn subtract_from_clear(&mut self, value: u32) {
        let mask = (1u32 << (self.magnitude_width + 1)) - 1;
        for j in 0..self.raw.len() {
            if !self.sign(j) {
                self.raw[j] = self.raw[j].wrapping_sub(value) & mask;
            }
        }
    }
}

/// Most significant set bit of the OR word as its power-of-two value,
/// or `None` when the word is all zero (the zero flag).
pub fn leading_one(or_word: u32) -> Option<u32> {
    if or_word == 0 {
        None
    } else {
        Some(1 << (u32::BITS - 1 - or_word.leading_zeros()))
    }
}

/// Result of running the K adder trees to completion.
#[derive(Debug, Clone)]
pub struct ClassCountsResult {
    pub counts: ClassCounts,
    /// One cycle per registered stage: ceil(log2 T).
    pub latency: u64,
    /// Per class, per stage, the register contents after that stage.
    /// Exposed so tests can audit that every value fits its stage width.
    pub stage_values: Vec<Vec<Vec<u32>>>,
}

/// Run all K adder trees over the one-hot matrix.
pub fn compute_class_counts(onehot: &OneHotMatrix, plan: &AdderTreePlan) -> ClassCountsResult {
    assert_eq!(
        plan.num_inputs(),
        onehot.rows(),
        "plan built for a different input count"
    );
    let num_inputs = onehot.rows();
    let mut magnitudes = Vec::with_capacity(onehot.cols());
    let mut stage_values = Vec::with_capacity(onehot.cols());
    for class in 0..onehot.cols() {
        let mut values = AdderTreePlan::column_inputs(onehot, class);
        let mut per_stage = Vec::with_capacity(plan.stages().len());
        for s in 0..plan.stages().len() {
            values = plan.advance_stage(s, &values);
            per_stage.push(values.clone());
        }
        debug_assert_eq!(values.len(), 1);
        magnitudes.push(values[0]);
        stage_values.push(per_stage);
    }
    ClassCountsResult {
        counts: ClassCounts::latch(&magnitudes, num_inputs),
        latency: u64::from(plan.depth()),
        stage_values,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{decode_one_hot, VoteVector};
    use super::*;

    #[test]
    fn plan_matches_declared_shape() {
        let plan = AdderTreePlan::for_inputs(40).unwrap();
        assert_eq!(plan.depth(), 6);
        let first = plan.stages()[0];
        assert_eq!(first.adder_count, 20); // ceil(40 / 2)
        assert_eq!(first.input_width, 1);
        assert_eq!(first.output_width, 2);
        let last = *plan.stages().last().unwrap();
        assert_eq!(last.adder_count, 1);

        let plan5 = AdderTreePlan::for_inputs(5).unwrap();
        assert_eq!(plan5.depth(), 3);
        assert_eq!(plan5.stages()[0].adder_count, 3); // ceil(5 / 2)
    }

    #[test]
    fn counts_and_latency_small() {
        let v = VoteVector::new(vec![1, 0, 1, 1, 2], 3).unwrap();
        let plan = AdderTreePlan::for_inputs(v.num_inputs()).unwrap();
        let r = compute_class_counts(&decode_one_hot(&v), &plan);
        assert_eq!(r.counts.magnitudes(), vec![1, 3, 1]);
        assert_eq!(r.latency, 3); // ceil(log2 5)
        assert!(r.counts.signs().iter().all(|&s| !s));
    }

    #[test]
    fn unanimous_forty_fits_six_bits() {
        let v = VoteVector::new(vec![0; 40], 10).unwrap();
        let plan = AdderTreePlan::for_inputs(40).unwrap();
        let r = compute_class_counts(&decode_one_hot(&v), &plan);
        let mut expected = vec![0u32; 10];
        expected[0] = 40;
        assert_eq!(r.counts.magnitudes(), expected);
        assert_eq!(r.latency, 6);
        assert_eq!(r.counts.magnitude_width(), 6); // ceil(log2 41)
    }

    #[test]
    fn stage_values_respect_widths() {
        // Every intermediate register value must fit in its stage width,
        // even for the unanimous worst case.
        for t in [2usize, 3, 7, 8, 40, 63, 64] {
            let v = VoteVector::new(vec![0; t], 2).unwrap();
            let plan = AdderTreePlan::for_inputs(t).unwrap();
            let r = compute_class_counts(&decode_one_hot(&v), &plan);
            for per_class in &r.stage_values {
                for (s, values) in per_class.iter().enumerate() {
                    let spec = plan.stages()[s];
                    assert_eq!(values.len(), spec.adder_count);
                    for &val in values {
                        assert!(val < (1 << spec.output_width));
                    }
                }
            }
        }
    }

    #[test]
    fn large_block_counts_match_histogram() {
        // T = 512, K = 500, pseudo-random votes against direct counting
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let votes: Vec<u16> = (0..512)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 500) as u16
            })
            .collect();
        let v = VoteVector::new(votes, 500).unwrap();
        let plan = AdderTreePlan::for_inputs(512).unwrap();
        let r = compute_class_counts(&decode_one_hot(&v), &plan);
        assert_eq!(r.counts.magnitudes(), v.histogram());
        assert_eq!(r.latency, 9);
    }

    #[test]
    fn leading_one_examples() {
        assert_eq!(leading_one(0b0110), Some(4));
        assert_eq!(leading_one(0b0001), Some(1));
        assert_eq!(leading_one(0), None);
    }

    #[test]
    fn subtract_wraps_into_sign() {
        let mut counts = ClassCounts::latch(&[1, 2, 1], 4);
        assert_eq!(counts.magnitude_width(), 3); // ceil(log2 5)
        counts.subtract_from_clear(2);
        assert_eq!(counts.signs(), vec![true, false, true]);
        assert_eq!(counts.or_of_clear(), 0);
        assert_eq!(counts.highest_clear(), Some(1));
    }
}
