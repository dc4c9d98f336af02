//! Pipelined majority block: the subtractor loop unfolded into stages so a
//! new decision can be strobed in at every clock cycle.

use super::adder::{floor_log2, leading_one, AdderTreePlan, ClassCounts};
use super::iterative::StreamOutput;
use super::{decode_one_hot, ClassLabel, VoteVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct AdderSlot {
    tag: u64,
    strobe: u64,
    partials: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
struct SubSlot {
    tag: u64,
    strobe: u64,
    counts: ClassCounts,
    /// Once set, later stages pass the slot through unchanged.
    resolved: bool,
    label: ClassLabel,
}

impl SubSlot {
    /// One unfolded subtraction stage: OR, LOD, masked subtract, and the
    /// early-out checks that let resolved decisions bypass the rest.
    fn advance(&mut self) {
        if self.resolved {
            return;
        }
        let or_word = self.counts.or_of_clear();
        match leading_one(or_word) {
            None => {
                // All survivors sit at exactly zero; one more subtraction
                // would drive them negative together, so the decision is
                // already the highest surviving index.
                self.resolved = true;
                self.label = self.counts.highest_clear().expect("unresolved slot has a survivor");
            }
            Some(decrement) => {
                let latched = self.counts.highest_clear().expect("unresolved slot has a survivor");
                self.counts.subtract_from_clear(decrement);
                match self.counts.count_clear() {
                    0 => {
                        self.resolved = true;
                        self.label = latched;
                    }
                    1 => {
                        self.resolved = true;
                        self.label = self.counts.highest_clear().unwrap();
                    }
                    _ => {}
                }
            }
        }
    }

    fn decision(&self) -> ClassLabel {
        if self.resolved {
            self.label
        } else {
            // The final-stage priority encoder; with floor(log2 T) + 1
            // stages every reachable input resolves earlier, but the
            // encoder output is defined regardless.
            self.counts.highest_clear().unwrap_or(self.label)
        }
    }
}

/// Fully pipelined majority unit: ceil(log2 T) adder stages followed by
/// floor(log2 T) + 1 subtraction stages, every register advancing once
/// per clock tick.
#[derive(Debug, Clone)]
pub struct PipelinedMajority {
    plan: AdderTreePlan,
    num_classes: u16,
    adder_regs: Vec<Option<AdderSlot>>,
    sub_regs: Vec<Option<SubSlot>>,
    cycle: u64,
    next_tag: u64,
}

impl PipelinedMajority {
    pub fn new(num_inputs: usize, num_classes: u16) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        let plan = AdderTreePlan::for_inputs(num_inputs)?;
        let adder_depth = plan.depth() as usize;
        let sub_depth = floor_log2(num_inputs) as usize + 1;
        Ok(Self {
            plan,
            num_classes,
            adder_regs: vec![None; adder_depth],
            sub_regs: vec![None; sub_depth],
            cycle: 0,
            next_tag: 0,
        })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Advance one clock cycle, optionally strobing a new vote vector in.
    ///
    /// Returns the decision reaching the output this edge, if any.
    pub fn tick(&mut self, input: Option<&VoteVector>) -> Result<Option<StreamOutput>> {
        self.cycle += 1;
        let now = self.cycle;
        let adder_depth = self.adder_regs.len();
        let sub_depth = self.sub_regs.len();

        // The slot entering the final subtraction register is the output;
        // its priority encoder is combinational, no extra register.
        let leaving = self.sub_regs[sub_depth - 1].take();
        drop(leaving);
        for j in (1..sub_depth).rev() {
            self.sub_regs[j] = self.sub_regs[j - 1].take().map(|mut slot| {
                slot.advance();
                slot
            });
        }

        // First subtraction stage: append the sign bit to the adder output
        // and perform its subtraction in the same stage.
        self.sub_regs[0] = self.adder_regs[adder_depth - 1].take().map(|slot| {
            let magnitudes: Vec<u32> = slot.partials.iter().map(|c| c[0]).collect();
            let mut sub = SubSlot {
                tag: slot.tag,
                strobe: slot.strobe,
                counts: ClassCounts::latch(&magnitudes, self.plan.num_inputs()),
                resolved: false,
                label: 0,
            };
            sub.advance();
            sub
        });

        for s in (1..adder_depth).rev() {
            self.adder_regs[s] = self.adder_regs[s - 1].take().map(|mut slot| {
                for column in &mut slot.partials {
                    *column = self.plan.advance_stage(s, column);
                }
                slot
            });
        }

        self.adder_regs[0] = match input {
            Some(votes) => {
                if votes.num_inputs() != self.plan.num_inputs()
                    || votes.num_classes() != self.num_classes
                {
                    return Err(Error::VoteShapeMismatch {
                        inputs: votes.num_inputs(),
                        classes: votes.num_classes(),
                        expected_inputs: self.plan.num_inputs(),
                        expected_classes: self.num_classes,
                    });
                }
                let onehot = decode_one_hot(votes);
                let partials = (0..onehot.cols())
                    .map(|j| self.plan.advance_stage(0, &AdderTreePlan::column_inputs(&onehot, j)))
                    .collect();
                let tag = self.next_tag;
                self.next_tag += 1;
                Some(AdderSlot {
                    tag,
                    strobe: now,
                    partials,
                })
            }
            None => None,
        };

        Ok(self.sub_regs[sub_depth - 1].as_ref().map(|slot| StreamOutput {
            input_index: slot.tag,
            class: slot.decision(),
            latency: now - slot.strobe + 1,
        }))
    }
}

/// Run a single vote vector through the pipelined block.
///
/// The latency is the constant fill time ceil(log2 T) + floor(log2 T) + 1.
pub fn run_pipelined(votes: &VoteVector) -> Result<(ClassLabel, u64)> {
    let mut unit = PipelinedMajority::new(votes.num_inputs(), votes.num_classes())?;
    if let Some(out) = unit.tick(Some(votes))? {
        return Ok((out.class, out.latency));
    }
    loop {
        if let Some(out) = unit.tick(None)? {
            return Ok((out.class, out.latency));
        }
        assert!(unit.cycle() < 128, "pipelined unit failed to drain");
    }
}

#[cfg(test)]
mod tests {
    use super::super::{n_pipe, oracle_majority};
    use super::*;

    #[test]
    fn fill_latency_is_constant() {
        for t in [2usize, 3, 5, 8, 17, 40, 64, 100] {
            let votes = VoteVector::new((0..t).map(|i| (i % 3) as u16).collect(), 3).unwrap();
            let (_, latency) = run_pipelined(&votes).unwrap();
            assert_eq!(latency, n_pipe(t), "T={t}");
        }
    }

    #[test]
    fn forty_inputs_fill_in_twelve_cycles() {
        let votes = VoteVector::new(vec![0u16; 40], 10).unwrap();
        let (class, latency) = run_pipelined(&votes).unwrap();
        assert_eq!(class, 0);
        assert_eq!(latency, 12);
    }

    #[test]
    fn full_tie_picks_highest_class() {
        // one vote per class: T = K
        for k in [2u16, 3, 5, 8] {
            let votes = VoteVector::new((0..k).collect(), k).unwrap();
            let (class, _) = run_pipelined(&votes).unwrap();
            assert_eq!(class, k - 1);
        }
    }

    #[test]
    fn matches_oracle_on_small_exhaustive() {
        for t in 2usize..=7 {
            for pattern in 0..(3usize.pow(t as u32)) {
                let mut x = pattern;
                let votes: Vec<u16> = (0..t)
                    .map(|_| {
                        let v = (x % 3) as u16;
                        x /= 3;
                        v
                    })
                    .collect();
                let v = VoteVector::new(votes, 3).unwrap();
                let (class, _) = run_pipelined(&v).unwrap();
                assert_eq!(class, oracle_majority(&v), "votes {:?}", v.votes());
            }
        }
    }

    #[test]
    fn back_to_back_streaming_one_output_per_cycle() {
        let t = 17;
        let k = 5;
        let inputs: Vec<VoteVector> = (0..200u64)
            .map(|i| {
                let votes = (0..t).map(|j| ((i * 7 + j as u64 * 13) % k as u64) as u16).collect();
                VoteVector::new(votes, k).unwrap()
            })
            .collect();
        let mut unit = PipelinedMajority::new(t, k).unwrap();
        let mut outputs = Vec::new();
        let mut feed = inputs.iter();
        let total_ticks = inputs.len() as u64 + n_pipe(t) + 4;
        for _ in 0..total_ticks {
            let out = unit.tick(feed.next()).unwrap();
            if let Some(o) = out {
                outputs.push(o);
            }
        }
        assert_eq!(outputs.len(), inputs.len());
        for (i, out) in outputs.iter().enumerate() {
            assert_eq!(out.input_index, i as u64);
            assert_eq!(out.class, oracle_majority(&inputs[i]));
            assert_eq!(out.latency, n_pipe(t));
        }
        // consecutive outputs appear on consecutive cycles after the fill
        for pair in outputs.windows(2) {
            assert_eq!(
                pair[1].latency + pair[1].input_index,
                pair[0].latency + pair[0].input_index + 1
            );
        }
    }
}
