//! Arithmetic on the circle `ℝ/ℤ`: continued fractions, certified orbit
//! points, distances and the scans built on them.

mod alpha;
mod point;
mod scan;

pub use alpha::{
    bigint_to_f64, AlphaKind, AlphaSpec, ContinuedFraction, Denominators, FixedAlpha, TailPolicy,
    DEFAULT_PRECISION_BITS,
};
pub use point::{
    circle_dist, exp_to_fixed, f64_to_fixed, ln_ratio, orbit_point, ratio_to_f64, CircleDistance,
    CirclePoint, Rotation,
};
pub use scan::{
    check_separation, count_in_interval, dc_check, discrepancy_estimate, discrepancy_estimate_big,
    discrepancy_with, first_hit_arc, hits_in_arc, min_hit, DcVerdict, DiscrepancyReport,
    SeparationReport, DEFAULT_SCAN_CAP,
};

/// `cf_expand` as a free function.
pub fn cf_expand(alpha: &AlphaSpec, depth: usize) -> crate::Result<ContinuedFraction> {
    alpha.cf_expand(depth)
}
