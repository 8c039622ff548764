use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-bucket anchors for counts: global rounds, clients, local rounds.
pub const COUNT_ANCHORS: [(f64, f64); 6] = [
    (1e1, 1.0),
    (1e2, 0.8),
    (1e3, 0.6),
    (1e4, 0.4),
    (1e5, 0.2),
    (1e6, 0.0),
];

/// Log-bucket anchors for volumes: dataset size and model size.
pub const VOLUME_ANCHORS: [(f64, f64); 6] = [
    (1e5, 1.0),
    (1e6, 0.8),
    (1e7, 0.6),
    (1e8, 0.4),
    (1e9, 0.2),
    (1e10, 0.0),
];

/// Denominator of the selection-rate rule `(1 - rate) / span`.
pub const SELECTION_RATE_SPAN: f64 = 0.9;

fn finite(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("{value} is not finite")))
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    finite("lo", lo)?;
    finite("hi", hi)?;
    if lo >= hi {
        return Err(Error::invalid(
            "bounds",
            format!("lower bound {lo} must be below upper bound {hi}"),
        ));
    }
    Ok(())
}

/// `clamp((hi - value) / (hi - lo), 0, 1)`: lower raw values score higher.
pub fn normalize_linear_inverse(value: f64, lo: f64, hi: f64) -> Result<f64> {
    finite("value", value)?;
    check_bounds(lo, hi)?;
    Ok(((hi - value) / (hi - lo)).clamp(0.0, 1.0))
}

/// `clamp((value - lo) / (hi - lo), 0, 1)`: higher raw values score higher.
pub fn normalize_linear_direct(value: f64, lo: f64, hi: f64) -> Result<f64> {
    finite("value", value)?;
    check_bounds(lo, hi)?;
    Ok(((value - lo) / (hi - lo)).clamp(0.0, 1.0))
}

fn check_anchors(anchors: &[(f64, f64)]) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::invalid("anchors", "at least one anchor is required"));
    }
    for (i, &(raw, norm)) in anchors.iter().enumerate() {
        if !(raw.is_finite() && raw > 0.0) {
            return Err(Error::invalid("anchors", format!("raw value {raw} must be positive")));
        }
        if !(0.0..=1.0).contains(&norm) {
            return Err(Error::invalid("anchors", format!("normalized value {norm} outside [0, 1]")));
        }
        if i > 0 && anchors[i - 1].0 >= raw {
            return Err(Error::invalid("anchors", "raw values must be strictly increasing"));
        }
    }
    Ok(())
}

/// Piecewise-linear interpolation in `log10(value)` between anchors,
/// clamped to the first/last normalized value outside the anchor range.
pub fn normalize_log_buckets(value: f64, anchors: &[(f64, f64)]) -> Result<f64> {
    finite("value", value)?;
    if value <= 0.0 {
        return Err(Error::invalid("value", format!("{value} must be positive")));
    }
    check_anchors(anchors)?;

    let (first_raw, first_norm) = anchors[0];
    let (last_raw, last_norm) = anchors[anchors.len() - 1];
    if value <= first_raw {
        return Ok(first_norm);
    }
    if value >= last_raw {
        return Ok(last_norm);
    }

    let x = value.log10();
    for pair in anchors.windows(2) {
        let (lo_raw, lo_norm) = pair[0];
        let (hi_raw, hi_norm) = pair[1];
        if value == lo_raw {
            return Ok(lo_norm);
        }
        if value < hi_raw {
            let (lx, hx) = (lo_raw.log10(), hi_raw.log10());
            let t = (x - lx) / (hx - lx);
            return Ok((lo_norm + t * (hi_norm - lo_norm)).clamp(0.0, 1.0));
        }
    }
    Ok(last_norm)
}

/// `clamp((1 - rate) / 0.9, 0, 1)`.
pub fn normalize_selection_rate(rate: f64) -> Result<f64> {
    selection_rate_with_span(rate, SELECTION_RATE_SPAN)
}

fn selection_rate_with_span(rate: f64, span: f64) -> Result<f64> {
    finite("selection_rate", rate)?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid("selection_rate", format!("{rate} outside [0, 1]")));
    }
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::invalid("span", format!("{span} must be positive")));
    }
    Ok(((1.0 - rate) / span).clamp(0.0, 1.0))
}

/// How a metric's raw value becomes a score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum NormalizationRule {
    LinearInverse { lo: f64, hi: f64 },
    LinearDirect { lo: f64, hi: f64 },
    LogBucket { anchors: Vec<(f64, f64)> },
    SelectionRate { span: f64 },
    /// Raw value is already a score; clamped into `[0, 1]`.
    Identity,
}

impl NormalizationRule {
    pub fn log_bucket(anchors: &[(f64, f64)]) -> Self {
        NormalizationRule::LogBucket {
            anchors: anchors.to_vec(),
        }
    }

    pub fn selection_rate() -> Self {
        NormalizationRule::SelectionRate {
            span: SELECTION_RATE_SPAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NormalizationRule::LinearInverse { lo, hi } | NormalizationRule::LinearDirect { lo, hi } => {
                check_bounds(*lo, *hi)
            }
            NormalizationRule::LogBucket { anchors } => check_anchors(anchors),
            NormalizationRule::SelectionRate { span } => {
                if span.is_finite() && *span > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("span", format!("{span} must be positive")))
                }
            }
            NormalizationRule::Identity => Ok(()),
        }
    }

    pub fn apply(&self, value: f64) -> Result<f64> {
        match self {
            NormalizationRule::LinearInverse { lo, hi } => normalize_linear_inverse(value, *lo, *hi),
            NormalizationRule::LinearDirect { lo, hi } => normalize_linear_direct(value, *lo, *hi),
            NormalizationRule::LogBucket { anchors } => normalize_log_buckets(value, anchors),
            NormalizationRule::SelectionRate { span } => selection_rate_with_span(value, *span),
            NormalizationRule::Identity => Ok(finite("value", value)?.clamp(0.0, 1.0)),
        }
    }
}
