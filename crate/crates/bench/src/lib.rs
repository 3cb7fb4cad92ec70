//! Fixtures shared by the criterion benches.

use meandim_core::systems::{circle_rotation, truncated_shift, SampledAction};

/// Golden-ratio rotation on `n` grid points.
pub fn golden_circle(n: usize) -> SampledAction {
    circle_rotation((5f64.sqrt() - 1.0) / 2.0, n).expect("valid circle parameters")
}

/// Truncated one-cube shift with five subintervals per coordinate.
pub fn small_shift(window: usize) -> SampledAction {
    truncated_shift(1, 5, window).expect("valid shift parameters")
}
