//! Cycle-accurate model of the tree-processing unit: two node-indexed
//! memories, shift-based node addressing, three cycles per decision level
//! and one cycle to emit the leaf.
//!
//! Node numbering starts at the root with 1; the children of node `a` are
//! `2a` and `2a + 1`, so descending a level is a left shift of the node
//! address plus setting the least significant bit when the comparison
//! was true.

use crate::error::{Error, Result};

/// One input vector of 8-bit feature values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    values: Vec<u8>,
}

impl FeatureVector {
    pub fn new(values: Vec<u8>) -> Self {
        Self { values }
    }

    pub fn num_features(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, coord: usize) -> u8 {
        self.values[coord]
    }
}

/// A trained binary decision tree in pointer form, the logical source a
/// memory image is built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Split {
        coord: u16,
        value: u8,
        /// Taken when x[coord] <= value; mapped to the odd child address.
        le: Box<TreeNode>,
        /// The complement branch, mapped to the even child address.
        gt: Box<TreeNode>,
    },
    Leaf { label: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalTree {
    root: TreeNode,
}

impl LogicalTree {
    pub fn new(root: TreeNode) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Decision-node depth: a lone leaf has depth 0.
    pub fn depth(&self) -> u32 {
        fn depth(node: &TreeNode) -> u32 {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { le, gt, .. } => 1 + depth(le).max(depth(gt)),
            }
        }
        depth(&self.root)
    }

    /// Reference recursive evaluation, independent of the memory image.
    pub fn predict(&self, x: &[u8]) -> u8 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split { coord, value, le, gt } => {
                    node = if x[*coord as usize] <= *value { le } else { gt };
                }
            }
        }
    }
}

/// Node-address update: left shift, then set the least significant bit
/// when the comparison at the current node was true.
pub fn child_address(addr: u32, taken: bool) -> u32 {
    debug_assert!(addr >= 1);
    (addr << 1) | u32::from(taken)
}

/// Clock cycles for one full inference: three per decision level plus one
/// to output the terminal value.
pub fn tree_cycles(levels: u32) -> u64 {
    assert!(levels >= 1, "tree needs at least 1 decision level");
    3 * u64::from(levels) + 1
}

/// Address-indexed split-coordinate and split-value memories for a tree of
/// fixed depth.
///
/// Decision nodes occupy addresses 1..2^l - 1 in both memories; the value
/// memory additionally holds the leaf labels at addresses 2^l..2^(l+1) - 1.
/// Address 0 is unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMemoryImage {
    levels: u32,
    num_features: u32,
    num_classes: u16,
    /// Indexed by node address; entry 0 is a placeholder.
    coord_mem: Vec<u16>,
    /// Indexed by node address; entry 0 is a placeholder.
    value_mem: Vec<u8>,
}

impl TreeMemoryImage {
    /// Wrap raw memory contents, validating sizes and entry ranges.
    ///
    /// `coords` covers addresses 1..2^l - 1 and `values` addresses
    /// 1..2^(l+1) - 1, both in address order.
    pub fn from_raw(
        levels: u32,
        num_features: u32,
        num_classes: u16,
        coords: Vec<u16>,
        values: Vec<u8>,
    ) -> Result<Self> {
        if levels < 1 {
            return Err(Error::TooFewLevels(levels));
        }
        let coord_len = (1usize << levels) - 1;
        let value_len = (1usize << (levels + 1)) - 1;
        if coords.len() != coord_len {
            return Err(Error::MemoryShape {
                what: "split coordinate memory",
                got: coords.len(),
                expected: coord_len,
            });
        }
        if values.len() != value_len {
            return Err(Error::MemoryShape {
                what: "split value memory",
                got: values.len(),
                expected: value_len,
            });
        }
        let mut coord_mem = Vec::with_capacity(coord_len + 1);
        coord_mem.push(0);
        coord_mem.extend_from_slice(&coords);
        let mut value_mem = Vec::with_capacity(value_len + 1);
        value_mem.push(0);
        value_mem.extend_from_slice(&values);
        for (addr, &coord) in coord_mem.iter().enumerate().skip(1) {
            if u32::from(coord) >= num_features {
                return Err(Error::CoordOutOfRange {
                    address: addr as u32,
                    coord,
                    num_features,
                });
            }
        }
        for (addr, &label) in value_mem.iter().enumerate().skip(1 << levels) {
            if u16::from(label) >= num_classes {
                return Err(Error::LeafOutOfRange {
                    address: addr as u32,
                    label,
                    num_classes,
                });
            }
        }
        Ok(Self {
            levels,
            num_features,
            num_classes,
            coord_mem,
            value_mem,
        })
    }

    /// Place a logical tree into the fixed-depth layout.
    ///
    /// Branches shorter than `levels` are padded with pass-through nodes
    /// whose both descendants inherit the branch's leaf label, so the
    /// constant 3l + 1 schedule always lands on the right leaf.
    pub fn from_logical(
        tree: &LogicalTree,
        levels: u32,
        num_features: u32,
        num_classes: u16,
    ) -> Result<Self> {
        if levels < 1 {
            return Err(Error::TooFewLevels(levels));
        }
        let depth = tree.depth();
        if depth > levels {
            return Err(Error::TreeTooDeep { depth, levels });
        }
        let mut coord_mem = vec![0u16; 1 << levels];
        let mut value_mem = vec![0u8; 1 << (levels + 1)];

        fn place(
            node: &TreeNode,
            addr: u32,
            level: u32,
            levels: u32,
            coord_mem: &mut [u16],
            value_mem: &mut [u8],
        ) {
            if level == levels {
                let label = match node {
                    TreeNode::Leaf { label } => *label,
                    TreeNode::Split { .. } => unreachable!("depth checked before placement"),
                };
                value_mem[addr as usize] = label;
                return;
            }
            match node {
                TreeNode::Split { coord, value, le, gt } => {
                    coord_mem[addr as usize] = *coord;
                    value_mem[addr as usize] = *value;
                    place(le, child_address(addr, true), level + 1, levels, coord_mem, value_mem);
                    place(gt, child_address(addr, false), level + 1, levels, coord_mem, value_mem);
                }
                TreeNode::Leaf { .. } => {
                    // pass-through padding: both children inherit the leaf
                    coord_mem[addr as usize] = 0;
                    value_mem[addr as usize] = 0;
                    place(node, child_address(addr, true), level + 1, levels, coord_mem, value_mem);
                    place(node, child_address(addr, false), level + 1, levels, coord_mem, value_mem);
                }
            }
        }
        place(tree.root(), 1, 0, levels, &mut coord_mem, &mut value_mem);

        Self::from_raw(
            levels,
            num_features,
            num_classes,
            coord_mem[1..].to_vec(),
            value_mem[1..].to_vec(),
        )
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn num_features(&self) -> u32 {
        self.num_features
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    /// Split coordinate at a decision address.
    pub fn coord_at(&self, addr: u32) -> u16 {
        assert!(
            addr >= 1 && addr < (1 << self.levels),
            "coordinate read at {addr} outside decision addresses"
        );
        self.coord_mem[addr as usize]
    }

    /// Split value (decision address) or leaf label (leaf address).
    pub fn value_at(&self, addr: u32) -> u8 {
        assert!(
            addr >= 1 && addr < (1 << (self.levels + 1)),
            "value read at {addr} outside the value memory"
        );
        self.value_mem[addr as usize]
    }

    /// Coordinate entries in address order (1..2^l - 1).
    pub fn coord_entries(&self) -> &[u16] {
        &self.coord_mem[1..]
    }

    /// Value entries in address order (1..2^(l+1) - 1).
    pub fn value_entries(&self) -> &[u8] {
        &self.value_mem[1..]
    }

    /// Step a fresh unit through a full inference; returns the leaf label
    /// and the elapsed cycle count (always `tree_cycles(levels)`).
    pub fn infer(&self, x: &FeatureVector) -> Result<(u8, u64)> {
        let mut unit = TreeUnitState::new();
        while !unit.finished() {
            step_tree(&mut unit, self, x)?;
        }
        Ok((unit.output().expect("finished unit has an output"), unit.cycle()))
    }
}

/// Micro-phase within the three-cycle processing of one decision level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroPhase {
    /// Present the node address; memory outputs latch at the cycle edge.
    FetchNode,
    /// Access the addressed coordinate of the input vector.
    FetchFeature,
    /// Compare and update the node address.
    Compare,
    /// Read the terminal value and output it.
    EmitLeaf,
    Done,
}

/// Architectural state of one tree-processing unit.
#[derive(Debug, Clone)]
pub struct TreeUnitState {
    node_address: u32,
    micro_phase: MicroPhase,
    level: u32,
    cycle: u64,
    fetched_coord: u16,
    fetched_value: u8,
    fetched_feature: u8,
    output: Option<u8>,
}

impl TreeUnitState {
    pub fn new() -> Self {
        Self {
            node_address: 1,
            micro_phase: MicroPhase::FetchNode,
            level: 0,
            cycle: 0,
            fetched_coord: 0,
            fetched_value: 0,
            fetched_feature: 0,
            output: None,
        }
    }

    pub fn node_address(&self) -> u32 {
        self.node_address
    }

    pub fn micro_phase(&self) -> MicroPhase {
        self.micro_phase
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn finished(&self) -> bool {
        self.micro_phase == MicroPhase::Done
    }

    pub fn output(&self) -> Option<u8> {
        self.output
    }
}

impl Default for TreeUnitState {
    fn default() -> Self {
        Self::new()
    }
}

/// Advance one clock cycle of the tree unit.
pub fn step_tree(state: &mut TreeUnitState, mem: &TreeMemoryImage, x: &FeatureVector) -> Result<()> {
    if x.num_features() != mem.num_features() as usize {
        return Err(Error::FeatureCountMismatch {
            got: x.num_features(),
            expected: mem.num_features() as usize,
        });
    }
    match state.micro_phase {
        MicroPhase::FetchNode => {
            state.fetched_coord = mem.coord_at(state.node_address);
            state.fetched_value = mem.value_at(state.node_address);
            state.micro_phase = MicroPhase::FetchFeature;
        }
        MicroPhase::FetchFeature => {
            state.fetched_feature = x.get(state.fetched_coord as usize);
            state.micro_phase = MicroPhase::Compare;
        }
        MicroPhase::Compare => {
            let taken = state.fetched_feature <= state.fetched_value;
            state.node_address = child_address(state.node_address, taken);
            state.level += 1;
            state.micro_phase = if state.level == mem.levels() {
                MicroPhase::EmitLeaf
            } else {
                MicroPhase::FetchNode
            };
        }
        MicroPhase::EmitLeaf => {
            state.output = Some(mem.value_at(state.node_address));
            state.micro_phase = MicroPhase::Done;
        }
        MicroPhase::Done => return Err(Error::TreeUnitFinished),
    }
    state.cycle += 1;
    // address/level consistency: after processing level d the address lies
    // in [2^d, 2^(d+1) - 1]
    debug_assert!(
        state.node_address >= (1 << state.level)
            && state.node_address < (1 << (state.level + 1))
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_level_image() -> TreeMemoryImage {
        // coordMem[1]=0, valueMem[1]=128, leaves valueMem[2]=7, valueMem[3]=4
        TreeMemoryImage::from_raw(1, 1, 10, vec![0], vec![128, 7, 4]).unwrap()
    }

    #[test]
    fn child_address_shift_and_set() {
        assert_eq!(child_address(1, true), 3);
        assert_eq!(child_address(1, false), 2);
        assert_eq!(child_address(5, true), 11);
    }

    #[test]
    fn tree_cycles_formula() {
        assert_eq!(tree_cycles(14), 43);
        assert_eq!(tree_cycles(1), 4);
        assert_eq!(tree_cycles(20), 61);
    }

    #[test]
    #[should_panic(expected = "at least 1 decision level")]
    fn tree_cycles_rejects_zero() {
        tree_cycles(0);
    }

    #[test]
    fn one_level_inference_taken_branch() {
        let mem = one_level_image();
        let (label, cycles) = mem.infer(&FeatureVector::new(vec![100])).unwrap();
        assert_eq!(label, 4); // 100 <= 128 takes the odd child
        assert_eq!(cycles, 4);
    }

    #[test]
    fn one_level_inference_complement_branch() {
        let mem = one_level_image();
        let (label, cycles) = mem.infer(&FeatureVector::new(vec![200])).unwrap();
        assert_eq!(label, 7);
        assert_eq!(cycles, 4);
    }

    #[test]
    fn fourteen_levels_take_forty_three_cycles() {
        let tree = LogicalTree::new(TreeNode::Leaf { label: 3 });
        let mem = TreeMemoryImage::from_logical(&tree, 14, 4, 10).unwrap();
        let (label, cycles) = mem.infer(&FeatureVector::new(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(label, 3);
        assert_eq!(cycles, 43);
    }

    #[test]
    fn stepping_finished_unit_is_rejected() {
        let mem = one_level_image();
        let x = FeatureVector::new(vec![0]);
        let mut unit = TreeUnitState::new();
        while !unit.finished() {
            step_tree(&mut unit, &mem, &x).unwrap();
        }
        assert!(matches!(
            step_tree(&mut unit, &mem, &x),
            Err(Error::TreeUnitFinished)
        ));
    }

    #[test]
    fn constant_tree_fills_all_leaves() {
        let tree = LogicalTree::new(TreeNode::Leaf { label: 5 });
        let mem = TreeMemoryImage::from_logical(&tree, 3, 2, 10).unwrap();
        let leaves: Vec<u8> = (8..16).map(|a| mem.value_at(a)).collect();
        assert_eq!(leaves, vec![5; 8]);
    }

    #[test]
    fn padded_depth_one_tree_replicates_labels_downward() {
        let tree = LogicalTree::new(TreeNode::Split {
            coord: 0,
            value: 100,
            le: Box::new(TreeNode::Leaf { label: 1 }),
            gt: Box::new(TreeNode::Leaf { label: 2 }),
        });
        let mem = TreeMemoryImage::from_logical(&tree, 2, 1, 3).unwrap();
        // the taken child sits at address 3, its grandchildren at 6 and 7;
        // the complement child at address 2, grandchildren 4 and 5
        assert_eq!(mem.value_at(6), 1);
        assert_eq!(mem.value_at(7), 1);
        assert_eq!(mem.value_at(4), 2);
        assert_eq!(mem.value_at(5), 2);
        let (label_le, _) = mem.infer(&FeatureVector::new(vec![50])).unwrap();
        let (label_gt, _) = mem.infer(&FeatureVector::new(vec![150])).unwrap();
        assert_eq!(label_le, 1);
        assert_eq!(label_gt, 2);
    }

    #[test]
    fn deep_tree_is_rejected() {
        let tree = LogicalTree::new(TreeNode::Split {
            coord: 0,
            value: 10,
            le: Box::new(TreeNode::Split {
                coord: 0,
                value: 5,
                le: Box::new(TreeNode::Leaf { label: 0 }),
                gt: Box::new(TreeNode::Leaf { label: 1 }),
            }),
            gt: Box::new(TreeNode::Leaf { label: 1 }),
        });
        assert!(matches!(
            TreeMemoryImage::from_logical(&tree, 1, 1, 2),
            Err(Error::TreeTooDeep { depth: 2, levels: 1 })
        ));
    }

    #[test]
    fn memory_image_matches_logical_evaluation() {
        // depth-2 tree over 2 features, checked exhaustively on the input
        // grid corners and a sweep
        let tree = LogicalTree::new(TreeNode::Split {
            coord: 0,
            value: 100,
            le: Box::new(TreeNode::Split {
                coord: 1,
                value: 50,
                le: Box::new(TreeNode::Leaf { label: 0 }),
                gt: Box::new(TreeNode::Leaf { label: 1 }),
            }),
            gt: Box::new(TreeNode::Leaf { label: 2 }),
        });
        let mem = TreeMemoryImage::from_logical(&tree, 2, 2, 3).unwrap();
        for a in (0u8..=255).step_by(5) {
            for b in (0u8..=255).step_by(5) {
                let x = FeatureVector::new(vec![a, b]);
                let (label, cycles) = mem.infer(&x).unwrap();
                assert_eq!(label, tree.predict(x.values()));
                assert_eq!(cycles, 7);
            }
        }
    }
}
