//! Bit-accurate, cycle-accurate software model of a random-forest hardware
//! inference engine: shift-addressed tree-processing units feeding a
//! logarithmic-depth majority-vote block, plus the CART trainer and dataset
//! plumbing needed to reproduce the engine's reference workload.
//!
//! The crate is organized around the hardware structure:
//!
//! - [`majority`]: the majority-decision block (iterative and pipelined
//!   variants) with its adder trees, leading-one detector, and the
//!   closed-form cycle-count formulas.
//! - [`tree`]: the tree-processing unit with its two node-indexed memories
//!   and three-cycles-per-level schedule.
//! - [`forest`]: the full engine, orchestrating parallel tree units into
//!   the majority block with exact cycle accounting.
//! - [`trainer`]: CART random-forest training with bagging and per-split
//!   feature subsampling.
//! - [`io`]: forest file format, memory-image export, and IDX datasets.

pub mod error;
pub mod forest;
pub mod io;
pub mod majority;
pub mod trainer;
pub mod tree;

pub use error::{Error, Result};
