use serde::{Deserialize, Serialize};

use super::NormalizationRule;
use crate::error::{Error, Result};

/// Allowed deviation of a sibling group's weight sum from 1.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Metric,
    Notion,
    Pillar,
    Root,
}

/// One node of the metric → notion → pillar → trust tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNode {
    pub id: String,
    pub kind: NodeKind,
    pub weight: f64,
    pub rule: Option<NormalizationRule>,
    pub children: Vec<ScoreNode>,
    pub raw: Option<f64>,
    pub score: Option<f64>,
}

/// Result of a partial aggregation: the score plus the ids that were missing.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialScore {
    pub score: f64,
    pub missing: Vec<String>,
}

impl ScoreNode {
    pub fn metric(id: impl Into<String>, weight: f64, rule: NormalizationRule) -> Self {
        ScoreNode {
            id: id.into(),
            kind: NodeKind::Metric,
            weight,
            rule: Some(rule),
            children: Vec::new(),
            raw: None,
            score: None,
        }
    }

    pub fn group(id: impl Into<String>, kind: NodeKind, weight: f64, children: Vec<ScoreNode>) -> Self {
        ScoreNode {
            id: id.into(),
            kind,
            weight,
            rule: None,
            children,
            raw: None,
            score: None,
        }
    }

    /// Group whose children share the weight equally.
    pub fn equal_group(id: impl Into<String>, kind: NodeKind, weight: f64, mut children: Vec<ScoreNode>) -> Self {
        let n = children.len().max(1) as f64;
        for child in &mut children {
            child.weight = 1.0 / n;
        }
        Self::group(id, kind, weight, children)
    }

    pub fn with_raw(mut self, raw: f64) -> Self {
        self.raw = Some(raw);
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Metric
    }

    /// Checks structure and weights for the whole subtree.
    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && (0.0..=1.0).contains(&self.weight)) {
            return Err(Error::invalid(&self.id, format!("weight {} outside [0, 1]", self.weight)));
        }
        if self.is_leaf() {
            if !self.children.is_empty() {
                return Err(Error::invalid(&self.id, "metric nodes cannot have children"));
            }
            return match &self.rule {
                Some(rule) => rule.validate(),
                None => Err(Error::invalid(&self.id, "metric node has no normalization rule")),
            };
        }
        if self.children.is_empty() {
            return Err(Error::invalid(&self.id, "non-metric node needs at least one child"));
        }
        let sum: f64 = self.children.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid(&self.id, format!("child weights sum to {sum}, expected 1")));
        }
        self.children.iter().try_for_each(ScoreNode::validate)
    }

    /// Computes and stores scores for every node in the subtree.
    ///
    /// Parents are weighted means of their children's full-precision scores.
    /// A metric without a raw value fails with [`Error::MissingMetric`].
    pub fn aggregate(&mut self) -> Result<f64> {
        let score = if self.is_leaf() {
            let raw = self.raw.ok_or_else(|| Error::MissingMetric(self.id.clone()))?;
            let rule = self
                .rule
                .as_ref()
                .ok_or_else(|| Error::invalid(&self.id, "metric node has no normalization rule"))?;
            rule.apply(raw)?
        } else {
            if self.children.is_empty() {
                return Err(Error::invalid(&self.id, "non-metric node needs at least one child"));
            }
            // Dividing by the weight sum absorbs rounding in weights like 1/6.
            let mut sum = 0.0;
            let mut weight_sum = 0.0;
            for child in &mut self.children {
                sum += child.weight * child.aggregate()?;
                weight_sum += child.weight;
            }
            if weight_sum <= 0.0 {
                return Err(Error::invalid(&self.id, "child weights sum to zero"));
            }
            (sum / weight_sum).clamp(0.0, 1.0)
        };
        self.score = Some(score);
        Ok(score)
    }

    /// Like [`aggregate`](Self::aggregate), but missing metrics are dropped and
    /// the weights of their present siblings are rescaled to sum to 1.
    pub fn aggregate_partial(&mut self) -> Result<PartialScore> {
        let mut missing = Vec::new();
        match self.aggregate_present(&mut missing)? {
            Some(score) => Ok(PartialScore { score, missing }),
            None => Err(Error::MissingMetric(self.id.clone())),
        }
    }

    fn aggregate_present(&mut self, missing: &mut Vec<String>) -> Result<Option<f64>> {
        self.score = None;
        if self.is_leaf() {
            let Some(raw) = self.raw else {
                missing.push(self.id.clone());
                return Ok(None);
            };
            let rule = self
                .rule
                .as_ref()
                .ok_or_else(|| Error::invalid(&self.id, "metric node has no normalization rule"))?;
            let score = rule.apply(raw)?;
            self.score = Some(score);
            return Ok(Some(score));
        }

        let mut present = Vec::with_capacity(self.children.len());
        for child in &mut self.children {
            if let Some(score) = child.aggregate_present(missing)? {
                present.push((child.weight, score));
            }
        }
        let weight_sum: f64 = present.iter().map(|(w, _)| w).sum();
        if present.is_empty() || weight_sum <= 0.0 {
            return Ok(None);
        }
        let score = (present.iter().map(|(w, s)| w * s).sum::<f64>() / weight_sum).clamp(0.0, 1.0);
        self.score = Some(score);
        Ok(Some(score))
    }

    pub fn find(&self, id: &str) -> Option<&ScoreNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut ScoreNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    /// Sets the raw value of a metric node.
    pub fn set_raw(&mut self, id: &str, raw: f64) -> Result<()> {
        let node = self
            .find_mut(id)
            .ok_or_else(|| Error::invalid(id, "no such node in score tree"))?;
        if !node.is_leaf() {
            return Err(Error::invalid(id, "raw values can only be set on metric nodes"));
        }
        node.raw = Some(raw);
        Ok(())
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&ScoreNode> {
        let mut out = vec![self];
        for child in &self.children {
            out.extend(child.nodes());
        }
        out
    }
}

/// Weighted mean of pillar scores.
pub fn trust_score(pillar_scores: &[f64], weights: &[f64]) -> Result<f64> {
    if pillar_scores.len() != weights.len() {
        return Err(Error::invalid(
            "weights",
            format!("{} pillar scores but {} weights", pillar_scores.len(), weights.len()),
        ));
    }
    if pillar_scores.is_empty() {
        return Err(Error::invalid("pillar_scores", "at least one pillar is required"));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid("weights", format!("weight {w} must be non-negative")));
    }
    if let Some(s) = pillar_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::invalid("pillar_scores", format!("score {s} outside [0, 1]")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::invalid("weights", format!("weights sum to {sum}, expected 1")));
    }
    let score: f64 = pillar_scores.iter().zip(weights).map(|(s, w)| s * w).sum();
    Ok(score.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::display2;
    use proptest::prelude::*;

    fn leaf(id: &str, weight: f64, score: f64) -> ScoreNode {
        ScoreNode::metric(id, weight, NormalizationRule::Identity).with_raw(score)
    }

    #[test]
    fn carbon_notion_uc_b() {
        let mut notion = ScoreNode::group(
            "carbon",
            NodeKind::Notion,
            0.5,
            vec![leaf("client", 0.5, 0.0781), leaf("server", 0.5, 0.1110)],
        );
        let s = notion.aggregate().unwrap();
        assert!((s - 0.09455).abs() < 1e-9);
        assert_eq!(display2(s), 0.09);
    }

    #[test]
    fn sustainability_pillar_uc_d() {
        let mut pillar = ScoreNode::group(
            "sustainability",
            NodeKind::Pillar,
            1.0,
            vec![
                leaf("carbon", 0.5, 0.1110),
                leaf("hardware", 0.25, 0.9373),
                leaf("complexity", 0.25, 0.96),
            ],
        );
        let s = pillar.aggregate().unwrap();
        assert!((s - 0.529825).abs() < 1e-9);
        assert_eq!(display2(s), 0.53);
    }

    #[test]
    fn full_precision_propagation() {
        // Hardware notion of UC B: mean of the unrounded client/server scores.
        let client = (30.76 - 20.0) / 1427.0;
        let server = (51.67 - 20.0) / 1427.0;
        let mut notion = ScoreNode::equal_group(
            "hw",
            NodeKind::Notion,
            1.0,
            vec![leaf("c", 0.0, client), leaf("s", 0.0, server)],
        );
        let s = notion.aggregate().unwrap();
        assert!((s - 0.0149).abs() < 5e-5);
        assert_eq!(display2(s), 0.01);
        // Averaging the displayed children would give 0.015 -> 0.02.
        assert_eq!(display2((display2(client) + display2(server)) / 2.0), 0.02);
    }

    #[test]
    fn missing_metric_names_node() {
        let mut node = ScoreNode::equal_group(
            "n",
            NodeKind::Notion,
            1.0,
            vec![leaf("a", 0.0, 0.5), ScoreNode::metric("b", 0.0, NormalizationRule::Identity)],
        );
        match node.aggregate() {
            Err(Error::MissingMetric(id)) => assert_eq!(id, "b"),
            other => panic!("unexpected {other:?}"),
        }
        let partial = node.aggregate_partial().unwrap();
        assert_eq!(partial.score, 0.5);
        assert_eq!(partial.missing, vec!["b".to_string()]);
    }

    #[test]
    fn partial_with_nothing_present_fails() {
        let mut node = ScoreNode::group(
            "n",
            NodeKind::Notion,
            1.0,
            vec![ScoreNode::metric("b", 1.0, NormalizationRule::Identity)],
        );
        assert!(matches!(node.aggregate_partial(), Err(Error::MissingMetric(id)) if id == "n"));
    }

    #[test]
    fn validate_structure() {
        let bad_sum = ScoreNode::group("n", NodeKind::Notion, 1.0, vec![leaf("a", 0.4, 0.1), leaf("b", 0.4, 0.1)]);
        assert!(bad_sum.validate().is_err());
        let empty = ScoreNode::group("n", NodeKind::Notion, 1.0, vec![]);
        assert!(empty.validate().is_err());
        let mut with_child = leaf("a", 1.0, 0.1);
        with_child.children.push(leaf("b", 1.0, 0.1));
        assert!(with_child.validate().is_err());
    }

    #[test]
    fn trust_score_examples() {
        let eq = |n: usize| vec![1.0 / n as f64; n];
        let a7 = [0.33, 0.55, 0.16, 0.90, 0.73, 0.79, 0.25];
        assert_eq!(display2(trust_score(&a7, &eq(7)).unwrap()), 0.53);
        let a6 = &a7[..6];
        let s = trust_score(a6, &eq(6)).unwrap();
        assert!((s - 0.576_666_666).abs() < 1e-6);
        assert_eq!(display2(s), 0.58);
        let b7 = [0.30, 0.49, 0.59, 0.90, 0.73, 0.79, 0.79];
        assert!((trust_score(&b7, &eq(7)).unwrap() - 0.655_714_285).abs() < 1e-6);
    }

    #[test]
    fn trust_score_errors() {
        assert!(trust_score(&[0.5, 0.5], &[1.0]).is_err());
        assert!(trust_score(&[0.5, 0.5], &[0.6, 0.6]).is_err());
        assert!(trust_score(&[1.5], &[1.0]).is_err());
        assert!(trust_score(&[], &[]).is_err());
    }

    fn weights_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, n).prop_map(|w| {
            let sum: f64 = w.iter().sum();
            w.into_iter().map(|x| x / sum).collect()
        })
    }

    proptest! {
        #[test]
        fn aggregate_is_convex(scores in proptest::collection::vec(0.0f64..=1.0, 1..8), seed in any::<u64>()) {
            let n = scores.len();
            let weights: Vec<f64> = (0..n).map(|i| ((seed >> (i * 7)) & 0x7f) as f64 + 1.0).collect();
            let total: f64 = weights.iter().sum();
            let children = scores
                .iter()
                .zip(&weights)
                .enumerate()
                .map(|(i, (s, w))| leaf(&format!("m{i}"), w / total, *s))
                .collect();
            let mut node = ScoreNode::group("n", NodeKind::Notion, 1.0, children);
            let s = node.aggregate().unwrap();
            let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn aggregate_is_idempotent(s in 0.0f64..=1.0, w in weights_strategy(5)) {
            let children = w.iter().enumerate().map(|(i, w)| leaf(&format!("m{i}"), *w, s)).collect();
            let mut node = ScoreNode::group("n", NodeKind::Notion, 1.0, children);
            prop_assert!((node.aggregate().unwrap() - s).abs() < 1e-12);
        }

        #[test]
        fn ranking_survives_weight_rescaling(
            a in proptest::collection::vec(0.0f64..=1.0, 7),
            b in proptest::collection::vec(0.0f64..=1.0, 7),
            w in weights_strategy(7),
            k in 0.1f64..10.0,
        ) {
            let before = trust_score(&a, &w).unwrap() - trust_score(&b, &w).unwrap();
            let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
            let sum: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = scaled.iter().map(|x| x / sum).collect();
            let after = trust_score(&a, &renorm).unwrap() - trust_score(&b, &renorm).unwrap();
            prop_assume!(before.abs() > 1e-9);
            prop_assert_eq!(before > 0.0, after > 0.0);
        }
    }
}
