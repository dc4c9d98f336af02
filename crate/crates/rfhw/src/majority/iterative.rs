//! Iterative majority block: one decision in flight through the shared
//! subtractor loop, new inputs admissible every issue interval.

use super::adder::{leading_one, AdderTreePlan, ClassCounts};
use super::{decode_one_hot, ClassLabel, VoteVector};
use crate::error::{Error, Result};

/// Phase of a single decision working through the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterPhase {
    Idle,
    /// Next step performs adder stage `s`.
    Adding(u32),
    /// Counts sit at the adder output; next step latches them into the
    /// subtractor registers with the sign bit appended.
    Latched,
    Subtracting,
    Done,
}

impl IterPhase {
    fn name(self) -> &'static str {
        match self {
            IterPhase::Idle => "idle",
            IterPhase::Adding(_) => "adding",
            IterPhase::Latched => "latched",
            IterPhase::Subtracting => "subtracting",
            IterPhase::Done => "done",
        }
    }
}

/// One decision stepped a clock cycle at a time.
///
/// All state updates are computed from the pre-tick state and committed
/// atomically per `step`, mirroring registered hardware.
#[derive(Debug, Clone)]
pub struct IterMajority {
    plan: AdderTreePlan,
    phase: IterPhase,
    cycle: u64,
    /// Per-class partial sums at the current adder stage boundary.
    partials: Vec<Vec<u32>>,
    counts: Option<ClassCounts>,
    /// The delayed encoder register: highest sign-clear class latched at
    /// the start of each subtraction cycle.
    last_non_negative: Option<ClassLabel>,
    output: Option<ClassLabel>,
    trace: Option<Vec<String>>,
}

impl IterMajority {
    /// Strobe a vote vector into the block; the decode is combinational.
    pub fn new(votes: &VoteVector) -> Result<Self> {
        let plan = AdderTreePlan::for_inputs(votes.num_inputs())?;
        let onehot = decode_one_hot(votes);
        let partials = (0..onehot.cols())
            .map(|j| AdderTreePlan::column_inputs(&onehot, j))
            .collect();
        Ok(Self {
            plan,
            phase: IterPhase::Adding(0),
            cycle: 0,
            partials,
            counts: None,
            last_non_negative: None,
            output: None,
            trace: None,
        })
    }

    /// Start at the subtraction phase with the counts already latched.
    /// Used to drive the subtractor loop directly in tests and traces.
    pub fn from_counts(counts: ClassCounts, num_inputs: usize) -> Result<Self> {
        let plan = AdderTreePlan::for_inputs(num_inputs)?;
        let num_classes = counts.num_classes() as u16;
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        Ok(Self {
            plan,
            phase: IterPhase::Subtracting,
            cycle: 0,
            partials: Vec::new(),
            counts: Some(counts),
            last_non_negative: None,
            output: None,
            trace: None,
        })
    }

    /// Record one formatted line per clock tick from now on.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn phase(&self) -> IterPhase {
        self.phase
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn counts(&self) -> Option<&ClassCounts> {
        self.counts.as_ref()
    }

    pub fn last_non_negative(&self) -> Option<ClassLabel> {
        self.last_non_negative
    }

    pub fn output_valid(&self) -> bool {
        self.phase == IterPhase::Done
    }

    pub fn output(&self) -> Option<ClassLabel> {
        self.output
    }

    /// Advance exactly one clock cycle.
    pub fn step(&mut self) -> Result<()> {
        let mut line_signs = String::from("-");
        let mut line_or = String::from("-");
        let mut line_lod = String::from("-");
        match self.phase {
            IterPhase::Idle | IterPhase::Done => {
                return Err(Error::InvalidStep(self.phase.name()));
            }
            IterPhase::Adding(stage) => {
                for column in &mut self.partials {
                    *column = self.plan.advance_stage(stage as usize, column);
                }
                self.phase = if stage + 1 == self.plan.depth() {
                    IterPhase::Latched
                } else {
                    IterPhase::Adding(stage + 1)
                };
            }
            IterPhase::Latched => {
                let magnitudes: Vec<u32> = self.partials.iter().map(|c| c[0]).collect();
                self.counts = Some(ClassCounts::latch(&magnitudes, self.plan.num_inputs()));
                self.partials.clear();
                self.phase = IterPhase::Subtracting;
            }
            IterPhase::Subtracting => {
                let counts = self.counts.as_mut().expect("subtracting without counts");
                // The encoder output is latched before the subtraction commits.
                self.last_non_negative = counts.highest_clear();
                let or_word = counts.or_of_clear();
                let decrement = leading_one(or_word).unwrap_or(1);
                counts.subtract_from_clear(decrement);
                if self.trace.is_some() {
                    line_signs = counts.signs().iter().map(|&s| if s { '1' } else { '0' }).collect();
                    let width = counts.magnitude_width() as usize;
                    line_or = format!("{or_word:0width$b}");
                    line_lod = if or_word == 0 {
                        "zero".to_string()
                    } else {
                        decrement.to_string()
                    };
                }
                if counts.all_signs_set() {
                    self.output = self.last_non_negative;
                    self.phase = IterPhase::Done;
                }
            }
        }
        self.cycle += 1;
        if let Some(trace) = &mut self.trace {
            let out = match self.output {
                Some(label) => label.to_string(),
                None => "-".to_string(),
            };
            trace.push(format!(
                "cycle={:04} phase={} signs={} or={} lod={} out={}",
                self.cycle,
                self.phase.name(),
                line_signs,
                line_or,
                line_lod,
                out
            ));
        }
        Ok(())
    }
}

/// Run one vote vector through the iterative block to completion.
///
/// Returns the majority class and the measured latency in clock cycles
/// from the input-valid strobe to output-valid.
pub fn run_iterative(votes: &VoteVector) -> Result<(ClassLabel, u64)> {
    let mut unit = IterMajority::new(votes)?;
    while !unit.output_valid() {
        unit.step()?;
    }
    Ok((unit.output().expect("done without output"), unit.cycle()))
}

/// One completed decision leaving a streaming unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOutput {
    /// Zero-based index of the injected vote vector this decision belongs to.
    pub input_index: u64,
    pub class: ClassLabel,
    /// Cycles from that input's strobe to its output-valid.
    pub latency: u64,
}

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
}

/// Iterative block with its adder pipeline exposed for overlapped issue.
///
/// Only the subtractor loop is iterative; the adder stages are registered,
/// so a new vote vector may enter while an older decision is still being
/// subtracted down. Injecting faster than the issue interval trips the
/// single set of subtractor registers and is reported as contention.
#[derive(Debug, Clone)]
pub struct IterativeStream {
    plan: AdderTreePlan,
    num_classes: u16,
    stage_regs: Vec<Option<AdderSlot>>,
    sub: Option<SubSlot>,
    cycle: u64,
    next_tag: u64,
}

impl IterativeStream {
    pub fn new(num_inputs: usize, num_classes: u16) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        let plan = AdderTreePlan::for_inputs(num_inputs)?;
        let depth = plan.depth() as usize;
        Ok(Self {
            plan,
            num_classes,
            stage_regs: vec![None; depth],
            sub: None,
            cycle: 0,
            next_tag: 0,
        })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Advance one clock cycle, optionally strobing a new vote vector in.
    ///
    /// Returns the decision completing at this edge, if any.
    pub fn tick(&mut self, input: Option<&VoteVector>) -> Result<Option<StreamOutput>> {
        self.cycle += 1;
        let now = self.cycle;

        // Subtractor loop: one OR/LOD/subtract cycle.
        let mut completed = None;
        let mut sub_next = None;
        if let Some(mut slot) = self.sub.take() {
            let winner_latch = slot.counts.highest_clear().expect("live slot has a survivor");
            let decrement = leading_one(slot.counts.or_of_clear()).unwrap_or(1);
            slot.counts.subtract_from_clear(decrement);
            if slot.counts.all_signs_set() {
                completed = Some(StreamOutput {
                    input_index: slot.tag,
                    class: winner_latch,
                    latency: now - slot.strobe + 1,
                });
            } else {
                sub_next = Some(slot);
            }
        }

        // Counts leave the final adder register one cycle after arriving.
        // The load may coincide with the edge that finishes the previous
        // decision, but not overtake a subtraction still in flight.
        let depth = self.stage_regs.len();
        if let Some(slot) = self.stage_regs[depth - 1].take() {
            if sub_next.is_some() {
                return Err(Error::IssueContention { input: slot.tag });
            }
            let magnitudes: Vec<u32> = slot.partials.iter().map(|c| c[0]).collect();
            sub_next = Some(SubSlot {
                tag: slot.tag,
                strobe: slot.strobe,
                counts: ClassCounts::latch(&magnitudes, self.plan.num_inputs()),
            });
        }
        self.sub = sub_next;

        // Adder pipeline advances every stage once.
        for s in (1..depth).rev() {
            self.stage_regs[s] = self.stage_regs[s - 1].take().map(|mut slot| {
                for column in &mut slot.partials {
                    *column = self.plan.advance_stage(s, column);
                }
                slot
            });
        }

        // Stage 0 captures the decoded input presented this cycle.
        self.stage_regs[0] = match input {
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

        Ok(completed)
    }
}
