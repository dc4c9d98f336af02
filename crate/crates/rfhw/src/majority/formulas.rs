//! Closed-form clock-cycle counts for the majority block.

use super::adder::{ceil_log2, floor_log2};

/// Best-case iterative latency: the winning count is a power of two.
pub fn n_iter_min(num_inputs: usize) -> u64 {
    assert!(num_inputs >= 2, "majority block needs at least 2 inputs");
    u64::from(ceil_log2(num_inputs)) + 3
}

/// Worst-case iterative latency under the dense-bit count bound.
///
/// For input counts of the form 2^k - 1 the true worst case exceeds this
/// by one cycle; see [`max_count_popcount`].
pub fn n_iter_max(num_inputs: usize) -> u64 {
    assert!(num_inputs >= 2, "majority block needs at least 2 inputs");
    u64::from(ceil_log2(num_inputs)) + u64::from(floor_log2(num_inputs)) + 2
}

/// Fill latency of the pipelined variant; afterwards one decision per cycle.
pub fn n_pipe(num_inputs: usize) -> u64 {
    assert!(num_inputs >= 2, "majority block needs at least 2 inputs");
    u64::from(ceil_log2(num_inputs)) + u64::from(floor_log2(num_inputs)) + 1
}

/// Minimum spacing between input strobes the iterative block sustains.
pub fn issue_interval(num_inputs: usize) -> u64 {
    assert!(num_inputs >= 2, "majority block needs at least 2 inputs");
    u64::from(ceil_log2(num_inputs)) + 1
}

/// Largest popcount any class count can reach with `num_inputs` votes.
///
/// floor(log2 T) in general; one more when T itself is an all-ones
/// pattern (T = 2^k - 1), where a unanimous count has k set bits. That
/// extra bit is what pushes the measured worst case past [`n_iter_max`].
pub fn max_count_popcount(num_inputs: usize) -> u32 {
    assert!(num_inputs >= 2, "majority block needs at least 2 inputs");
    floor_log2(num_inputs) + u32::from((num_inputs + 1).is_power_of_two())
}

/// Measured worst-case iterative latency over all inputs.
pub fn iter_worst_case(num_inputs: usize) -> u64 {
    u64::from(ceil_log2(num_inputs)) + 2 + u64::from(max_count_popcount(num_inputs))
}
