//! Normalization primitives and weighted hierarchical aggregation.
//!
//! Metric values are normalized into `[0, 1]`, then combined bottom-up:
//! metric → notion → pillar → trust. All arithmetic runs at full `f64`
//! precision; two-decimal rounding is applied only when displaying.

mod normalize;
mod tree;
mod weights;

pub use normalize::{
    normalize_linear_direct, normalize_linear_inverse, normalize_log_buckets,
    normalize_selection_rate, NormalizationRule, COUNT_ANCHORS, SELECTION_RATE_SPAN,
    VOLUME_ANCHORS,
};
pub use tree::{trust_score, NodeKind, PartialScore, ScoreNode, WEIGHT_SUM_TOLERANCE};
pub use weights::WeightConfig;

/// Rounds half-to-even at `decimals` places.
pub fn round_half_even(value: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    (value * factor).round_ties_even() / factor
}

/// Two-decimal display value used throughout reports.
pub fn display2(value: f64) -> f64 {
    round_half_even(value, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_display() {
        assert_eq!(display2(0.125), 0.12);
        assert_eq!(display2(0.375), 0.38);
        assert_eq!(display2(0.0781), 0.08);
        assert_eq!(display2(0.9373), 0.94);
        assert_eq!(display2(1.0), 1.0);
        assert_eq!(display2(0.0), 0.0);
    }
}
