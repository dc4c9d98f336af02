//! Full engine: parallel tree-processing units feeding one majority block,
//! with exact cycle accounting and throughput conversion.

use crate::error::{Error, Result};
use crate::majority::{
    issue_interval, iter_worst_case, n_pipe, oracle_majority, run_iterative, run_pipelined,
    ClassLabel, IterativeStream, PipelinedMajority, VoteVector,
};
use crate::tree::{step_tree, tree_cycles, FeatureVector, TreeMemoryImage, TreeUnitState};

/// A trained forest in hardware form: T memory images plus the shared
/// shape parameters.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<TreeMemoryImage>,
    num_classes: u16,
    num_features: u32,
    levels: u32,
    metadata: String,
}

/// Structural equality: the memory contents and shape. The free-form
/// provenance text is display-only and not part of the model.
impl PartialEq for ForestModel {
    fn eq(&self, other: &Self) -> bool {
        self.trees == other.trees
            && self.num_classes == other.num_classes
            && self.num_features == other.num_features
            && self.levels == other.levels
    }
}

impl Eq for ForestModel {}

impl ForestModel {
    pub fn new(trees: Vec<TreeMemoryImage>, metadata: String) -> Result<Self> {
        if trees.len() < 2 {
            return Err(Error::TooFewTrees(trees.len()));
        }
        let levels = trees[0].levels();
        let num_features = trees[0].num_features();
        let num_classes = trees[0].num_classes();
        for (index, tree) in trees.iter().enumerate() {
            if tree.levels() != levels
                || tree.num_features() != num_features
                || tree.num_classes() != num_classes
            {
                return Err(Error::MixedForest {
                    index,
                    levels: tree.levels(),
                    features: tree.num_features(),
                    classes: tree.num_classes(),
                    expected_levels: levels,
                    expected_features: num_features,
                    expected_classes: num_classes,
                });
            }
        }
        Ok(Self {
            trees,
            num_classes,
            num_features,
            levels,
            metadata,
        })
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn num_features(&self) -> u32 {
        self.num_features
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn trees(&self) -> &[TreeMemoryImage] {
        &self.trees
    }

    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    /// Interval between admitted inputs: the tree phase, unless the
    /// majority block's issue interval is longer and throttles it.
    pub fn admission_interval(&self) -> u64 {
        tree_cycles(self.levels).max(issue_interval(self.num_trees()))
    }
}

/// Which majority-block variant closes the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Iterative,
    Pipelined,
}

/// Record of one end-to-end classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationTrace {
    pub per_tree_outputs: Vec<ClassLabel>,
    pub majority_output: ClassLabel,
    /// Cycles from the input strobe to output-valid.
    pub first_latency: u64,
    /// Cycles between consecutive outputs under streaming.
    pub steady_interval: u64,
}

/// Step all tree units in lockstep for the full 3l + 1 schedule and
/// return their leaf outputs.
fn run_tree_bank(forest: &ForestModel, x: &FeatureVector) -> Result<Vec<ClassLabel>> {
    if x.num_features() != forest.num_features() as usize {
        return Err(Error::FeatureCountMismatch {
            got: x.num_features(),
            expected: forest.num_features() as usize,
        });
    }
    let mut units: Vec<TreeUnitState> = forest.trees.iter().map(|_| TreeUnitState::new()).collect();
    let cycles = tree_cycles(forest.levels);
    for _ in 0..cycles {
        for (unit, tree) in units.iter_mut().zip(&forest.trees) {
            step_tree(unit, tree, x)?;
        }
    }
    Ok(units
        .iter()
        .map(|u| ClassLabel::from(u.output().expect("tree bank finished")))
        .collect())
}

/// Classify one input, measuring the true completion latency.
///
/// The tree outputs are valid in the same cycle the majority decoder
/// consumes them, so the total is the tree phase plus the measured
/// majority latency with a zero-cycle handoff.
pub fn classify_one(
    forest: &ForestModel,
    x: &FeatureVector,
    variant: Variant,
) -> Result<ClassificationTrace> {
    let per_tree_outputs = run_tree_bank(forest, x)?;
    let votes = VoteVector::new(per_tree_outputs.clone(), forest.num_classes)?;
    let (majority_output, majority_latency) = match variant {
        Variant::Iterative => run_iterative(&votes)?,
        Variant::Pipelined => run_pipelined(&votes)?,
    };
    debug_assert_eq!(majority_output, oracle_majority(&votes));
    Ok(ClassificationTrace {
        per_tree_outputs,
        majority_output,
        first_latency: tree_cycles(forest.levels) + majority_latency,
        steady_interval: forest.admission_interval(),
    })
}

/// Worst-case completion offset from an input strobe: the readout slot the
/// streaming engine samples results at.
fn readout_offset(forest: &ForestModel, variant: Variant) -> u64 {
    tree_cycles(forest.levels)
        + match variant {
            Variant::Iterative => iter_worst_case(forest.num_trees()),
            Variant::Pipelined => n_pipe(forest.num_trees()),
        }
}

/// Streamed classification: a new input is admitted every admission
/// interval and each result is read out a fixed worst-case offset after
/// its strobe, so outputs are spaced exactly one interval apart.
///
/// The whole engine is simulated clock edge by clock edge; the fixed
/// readout only succeeds because every decision verifiably completes
/// within its slot.
pub fn classify_stream(
    forest: &ForestModel,
    inputs: &[FeatureVector],
    variant: Variant,
) -> Result<Vec<ClassificationTrace>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let interval = forest.admission_interval();
    let tree_phase = tree_cycles(forest.levels);
    let offset = readout_offset(forest, variant);
    let num_trees = forest.num_trees();
    let num_classes = forest.num_classes;

    // Tree banks do not interact, so each admission window is stepped in
    // lockstep on its own; outputs land at strobe + tree_phase and feed
    // the majority block on the following edge.
    let mut votes_at: Vec<(u64, VoteVector)> = Vec::with_capacity(inputs.len());
    let mut per_tree: Vec<Vec<ClassLabel>> = Vec::with_capacity(inputs.len());
    for (i, x) in inputs.iter().enumerate() {
        let strobe = i as u64 * interval;
        let outputs = run_tree_bank(forest, x)?;
        let votes = VoteVector::new(outputs.clone(), num_classes)?;
        votes_at.push((strobe + tree_phase + 1, votes));
        per_tree.push(outputs);
    }

    enum MajorityUnit {
        Iterative(IterativeStream),
        Pipelined(PipelinedMajority),
    }
    let mut unit = match variant {
        Variant::Iterative => MajorityUnit::Iterative(IterativeStream::new(num_trees, num_classes)?),
        Variant::Pipelined => MajorityUnit::Pipelined(PipelinedMajority::new(num_trees, num_classes)?),
    };

    let mut completions: Vec<Option<(u64, ClassLabel)>> = vec![None; inputs.len()];
    let mut pending = votes_at.iter().peekable();
    let end_edge = (inputs.len() as u64 - 1) * interval + offset;
    for edge in 1..=end_edge {
        let input = match pending.peek() {
            Some(&&(at, ref votes)) if at == edge => {
                pending.next();
                Some(votes)
            }
            _ => None,
        };
        let out = match &mut unit {
            MajorityUnit::Iterative(u) => u.tick(input)?,
            MajorityUnit::Pipelined(u) => u.tick(input)?,
        };
        if let Some(out) = out {
            completions[out.input_index as usize] = Some((edge, out.class));
        }
    }

    let mut traces = Vec::with_capacity(inputs.len());
    for (i, outputs) in per_tree.into_iter().enumerate() {
        let strobe = i as u64 * interval;
        let (completed_at, class) =
            completions[i].expect("every decision completes before the stream drains");
        assert!(
            completed_at <= strobe + offset,
            "decision {i} missed its readout slot"
        );
        traces.push(ClassificationTrace {
            per_tree_outputs: outputs,
            majority_output: class,
            first_latency: offset,
            steady_interval: interval,
        });
    }
    Ok(traces)
}

/// Worst-case cycles to finish a single classification:
/// 3l + ceil(log2 T) + floor(log2 T) + 3.
pub fn first_latency(num_trees: usize, levels: u32) -> u64 {
    tree_cycles(levels) + crate::majority::n_iter_max(num_trees)
}

/// Steady-state interval between classifications under streaming: 3l + 1.
pub fn steady_interval(levels: u32) -> u64 {
    tree_cycles(levels)
}

/// Classifications per second at a given clock frequency.
pub fn throughput_at(clock_hz: f64, levels: u32) -> u64 {
    assert!(clock_hz > 0.0, "clock frequency must be positive");
    (clock_hz / steady_interval(levels) as f64).floor() as u64
}
