//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ----- construction / contract violations -----
    #[error("majority block needs at least 2 inputs, got {0}")]
    TooFewInputs(usize),
    #[error("majority block needs at least 2 classes, got {0}")]
    TooFewClasses(u16),
    #[error("vote {vote} at index {index} out of range for {num_classes} classes")]
    VoteOutOfRange {
        index: usize,
        vote: u16,
        num_classes: u16,
    },
    #[error("cannot step a majority block in the {0} phase")]
    InvalidStep(&'static str),
    #[error("new class counts latched while a subtraction was still in flight (input #{input})")]
    IssueContention { input: u64 },
    #[error("vote vector shape ({inputs} inputs, {classes} classes) does not match the unit ({expected_inputs}, {expected_classes})")]
    VoteShapeMismatch {
        inputs: usize,
        classes: u16,
        expected_inputs: usize,
        expected_classes: u16,
    },

    // ----- tree / forest -----
    #[error("tree needs at least 1 decision level, got {0}")]
    TooFewLevels(u32),
    #[error("logical tree depth {depth} exceeds the {levels} decision levels of the memory image")]
    TreeTooDeep { depth: u32, levels: u32 },
    #[error("cannot step a finished tree unit")]
    TreeUnitFinished,
    #[error("memory image shape mismatch: {what} has {got} entries, expected {expected}")]
    MemoryShape {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("split coordinate {coord} at address {address} out of range for {num_features} features")]
    CoordOutOfRange {
        address: u32,
        coord: u16,
        num_features: u32,
    },
    #[error("leaf label {label} at address {address} out of range for {num_classes} classes")]
    LeafOutOfRange {
        address: u32,
        label: u8,
        num_classes: u16,
    },
    #[error("forest needs at least 2 trees, got {0}")]
    TooFewTrees(usize),
    #[error("tree {index} has shape ({levels} levels, {features} features, {classes} classes), expected ({expected_levels}, {expected_features}, {expected_classes})")]
    MixedForest {
        index: usize,
        levels: u32,
        features: u32,
        classes: u16,
        expected_levels: u32,
        expected_features: u32,
        expected_classes: u16,
    },
    #[error("feature vector has {got} features, forest expects {expected}")]
    FeatureCountMismatch { got: usize, expected: usize },

    // ----- trainer -----
    #[error("bagging fraction must be in (0, 1], got {0}")]
    BadBaggingFraction(f64),
    #[error("features per split must be in [1, {num_features}], got {got}")]
    BadFeaturesPerSplit { got: usize, num_features: usize },
    #[error("class histogram is all zero")]
    EmptyHistogram,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("image data length {got} is not a multiple of {num_features} features")]
    RaggedDataset { got: usize, num_features: usize },
    #[error("dataset has {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    // ----- file formats -----
    #[error("{path}: bad magic at byte 0: expected {expected:#010x}, found {found:#010x}")]
    IdxBadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: bad forest magic at byte 0: expected \"RFHW\", found {found:02x?}")]
    ForestBadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported forest format version {found} at byte 4 (expected {expected})")]
    ForestBadVersion {
        path: PathBuf,
        expected: u8,
        found: u8,
    },
    #[error("{path}: {extra} trailing bytes after byte {offset}")]
    TrailingBytes {
        path: PathBuf,
        offset: usize,
        extra: usize,
    },
    #[error("{path}:{line}: malformed memory-image line: {reason}")]
    MemLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: address gap: expected {expected:#x}, found {found:#x}")]
    AddressGap {
        path: PathBuf,
        line: usize,
        expected: u32,
        found: u32,
    },
    #[error("{path}: missing or malformed metadata entry '{key}'")]
    BadMeta { path: PathBuf, key: &'static str },
    #[error("{path}: header field {field} = {value} at byte {offset} out of range")]
    BadHeaderField {
        path: PathBuf,
        field: &'static str,
        value: u64,
        offset: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
