//! FactSheet and TrustReport: what a run records and what gets written out.
//!
//! Both serialize canonically. Object keys are sorted (struct fields are
//! declared in alphabetical order and maps are `BTreeMap`s), displayed scores
//! carry exactly two decimals next to a full-precision `_raw` twin, and the
//! pretty-printed text ends with a newline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::config::FederationConfig;
use crate::emissions::{EmissionsLog, Totals};
use crate::error::{Error, Result};
use crate::fedsim::{Evaluation, FederationState, RunStatistics};
use crate::refdata::ReferenceData;
use crate::score::{display2, NodeKind, ScoreNode};
use crate::sustainability::SustainabilityAssessment;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FILE: &str = "trust_report.json";
pub const FACTSHEET_FILE: &str = "factsheet.json";
pub const EMISSIONS_FILE: &str = "emissions.csv";

/// Pillars scored outside this crate and supplied as inputs.
pub const EXTERNAL_PILLARS: [&str; 6] = [
    "privacy",
    "robustness",
    "fairness",
    "explainability",
    "accountability",
    "federation",
];

/// Writes a score with exactly two decimals.
pub fn two_decimals<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    // Adding 0.0 turns -0.0 into 0.0.
    let text = format!("{:.2}", display2(*value) + 0.0);
    RawValue::from_string(text).map_err(S::Error::custom)?.serialize(s)
}

fn two_decimals_opt<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(v) => two_decimals(v, s),
        None => s.serialize_none(),
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

/// Replaces `path` with `bytes` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Checks externally supplied pillar scores.
pub fn external_pillars(scores: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    for (id, v) in scores {
        if !EXTERNAL_PILLARS.contains(&id.as_str()) {
            return Err(Error::invalid(format!("pillars.{id}"), "unknown pillar"));
        }
        if !(v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("pillars.{id}"), format!("{v} outside [0, 1]")));
        }
    }
    Ok(scores.clone())
}

/// Pillar fixture file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PillarFixture {
    pub pillars: BTreeMap<String, f64>,
    /// Sustainability score to use instead of the computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sustainability_override: Option<f64>,
}

impl PillarFixture {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let fixture: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "pillar fixture".into(),
            source,
        })?;
        external_pillars(&fixture.pillars)?;
        if let Some(v) = fixture.sustainability_override {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::invalid("sustainability_override", format!("{v} outside [0, 1]")));
            }
        }
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                context: format!("pillar fixture {}", path.display()),
                source,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionsSummary {
    pub by_phase: BTreeMap<String, Totals>,
    pub by_role: BTreeMap<String, Totals>,
    pub total: Totals,
}

impl EmissionsSummary {
    pub fn from_log(log: &EmissionsLog) -> Self {
        EmissionsSummary {
            by_phase: log.by_phase().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            by_role: log.by_role().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            total: log.totals(),
        }
    }
}

/// Configuration echo. Locations are resolved to country codes so that no
/// client address leaves the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreTraining {
    pub client_hardware: BTreeMap<String, f64>,
    pub client_locations: BTreeMap<String, f64>,
    pub config_digest: String,
    pub dataset_size_avg: f64,
    pub local_rounds_avg: f64,
    pub model_size: f64,
    pub num_clients: u64,
    pub sample_size: u64,
    pub selection_rate: f64,
    pub server_hardware: String,
    pub server_location: String,
    pub total_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuringTraining {
    pub class_distribution: BTreeMap<String, u64>,
    pub emissions: EmissionsSummary,
    pub rounds_completed: u64,
    /// Hashed client id → rounds selected.
    pub selection_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostTraining {
    pub evaluation: Evaluation,
    pub scores: BTreeMap<String, f64>,
    pub statistics: RunStatistics,
}

/// Accountability record of one run. An absent section serializes as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSheet {
    pub during_training: Option<DuringTraining>,
    pub post_training: Option<PostTraining>,
    pub pre_training: Option<PreTraining>,
}

impl FactSheet {
    /// Fills each section from whatever the run produced.
    pub fn populate(
        config: &FederationConfig,
        refdata: &ReferenceData,
        state: Option<&FederationState>,
        statistics: Option<&RunStatistics>,
        evaluation: Option<&Evaluation>,
        scores: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut client_hardware = BTreeMap::new();
        for h in &config.client_hardware {
            *client_hardware.entry(h.model.clone()).or_insert(0.0) += h.share;
        }
        let mut client_locations = BTreeMap::new();
        for l in &config.client_locations {
            *client_locations.entry(refdata.resolve_location(&l.location)?).or_insert(0.0) += l.share;
        }
        let pre = PreTraining {
            client_hardware,
            client_locations,
            config_digest: config.digest(),
            dataset_size_avg: config.dataset_size.mean(),
            local_rounds_avg: config.local_rounds.mean(),
            model_size: config.model_size,
            num_clients: config.num_clients,
            sample_size: config.sample_size(),
            selection_rate: config.selection_rate,
            server_hardware: config.server_hardware.clone(),
            server_location: refdata.resolve_location(&config.server_location)?,
            total_rounds: config.total_rounds,
        };
        let during = state.map(|s| DuringTraining {
            class_distribution: s.class_distribution.clone(),
            emissions: EmissionsSummary::from_log(&s.emissions),
            rounds_completed: s.round,
            selection_counts: s.selection_counts.clone(),
        });
        let post = match (statistics, evaluation) {
            (Some(st), Some(ev)) if !st.clients.is_empty() => Some(PostTraining {
                evaluation: ev.clone(),
                scores: scores.clone(),
                statistics: st.clone(),
            }),
            _ => None,
        };
        Ok(FactSheet {
            during_training: during,
            post_training: post,
            pre_training: Some(pre),
        })
    }

    /// Every mandatory field with whether it is populated. Pass-through
    /// statistics are optional and not listed.
    pub fn fields(&self) -> Vec<(&'static str, bool)> {
        let during = self.during_training.as_ref();
        let post = self.post_training.as_ref();
        vec![
            ("pre_training", self.pre_training.is_some()),
            (
                "during_training.selection_counts",
                during.is_some_and(|d| !d.selection_counts.is_empty()),
            ),
            (
                "during_training.class_distribution",
                during.is_some_and(|d| !d.class_distribution.is_empty()),
            ),
            ("during_training.emissions", during.is_some_and(|d| d.emissions.total.records > 0)),
            ("post_training.statistics", post.is_some_and(|p| !p.statistics.clients.is_empty())),
            ("post_training.evaluation", post.is_some()),
            ("post_training.scores", post.is_some_and(|p| !p.scores.is_empty())),
        ]
    }

    pub fn absent_fields(&self) -> Vec<String> {
        self.fields()
            .into_iter()
            .filter(|(_, present)| !present)
            .map(|(name, _)| name.to_string())
            .collect()
    }

    /// Fraction of mandatory fields populated.
    pub fn completeness(&self) -> f64 {
        let fields = self.fields();
        fields.iter().filter(|(_, p)| *p).count() as f64 / fields.len() as f64
    }

    /// Strict mode: fails listing every absent field.
    pub fn require_complete(&self) -> Result<()> {
        let absent = self.absent_fields();
        if absent.is_empty() {
            Ok(())
        } else {
            Err(Error::Incomplete(absent))
        }
    }

    pub fn render(&self) -> Vec<u8> {
        to_canonical_json(self)
    }
}

/// One scored node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    /// Metric input value; absent for notions and pillars.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
    #[serde(serialize_with = "two_decimals")]
    pub score: f64,
    pub score_raw: f64,
    pub weight: f64,
}

impl ScoreEntry {
    fn from_node(node: &ScoreNode, score: f64) -> Self {
        ScoreEntry {
            raw: node.raw.filter(|_| node.is_leaf()),
            score: display2(score),
            score_raw: score,
            weight: node.weight,
        }
    }
}

/// The serialized result of an assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub assessment: SustainabilityAssessment,
    pub config_digest: String,
    pub emissions: Option<EmissionsSummary>,
    pub flags: Vec<String>,
    pub metrics: BTreeMap<String, ScoreEntry>,
    pub missing: Vec<String>,
    pub notions: BTreeMap<String, ScoreEntry>,
    pub partial: bool,
    pub pillars: BTreeMap<String, ScoreEntry>,
    pub tool_version: String,
    #[serde(serialize_with = "two_decimals")]
    pub trust_score: f64,
    pub trust_score_raw: f64,
    #[serde(serialize_with = "two_decimals_opt")]
    pub trust_score_without_sustainability: Option<f64>,
    pub trust_score_without_sustainability_raw: Option<f64>,
    /// Weight of every node under the root, by id.
    pub weights: BTreeMap<String, f64>,
}

impl TrustReport {
    /// Builds a report from an aggregated trust tree.
    ///
    /// Nodes without a score (dropped in partial mode) are left out of the
    /// score maps but keep their weight.
    pub fn from_tree(
        tree: &ScoreNode,
        assessment: SustainabilityAssessment,
        config_digest: String,
        emissions: Option<EmissionsSummary>,
        missing: Vec<String>,
        flags: Vec<String>,
    ) -> Result<Self> {
        let root = tree
            .score
            .ok_or_else(|| Error::MissingMetric(tree.id.clone()))?;
        let mut report = TrustReport {
            assessment,
            config_digest,
            emissions,
            flags,
            metrics: BTreeMap::new(),
            partial: !missing.is_empty(),
            missing,
            notions: BTreeMap::new(),
            pillars: BTreeMap::new(),
            tool_version: TOOL_VERSION.to_string(),
            trust_score: display2(root),
            trust_score_raw: root,
            trust_score_without_sustainability: None,
            trust_score_without_sustainability_raw: None,
            weights: BTreeMap::new(),
        };
        for node in tree.nodes().into_iter().skip(1) {
            report.weights.insert(node.id.clone(), node.weight);
            let Some(score) = node.score else { continue };
            let entry = ScoreEntry::from_node(node, score);
            let map = match node.kind {
                NodeKind::Metric => &mut report.metrics,
                NodeKind::Notion => &mut report.notions,
                NodeKind::Pillar => &mut report.pillars,
                NodeKind::Root => continue,
            };
            map.insert(node.id.clone(), entry);
        }
        let others: Vec<&ScoreNode> = tree
            .children
            .iter()
            .filter(|p| p.id != crate::sustainability::PILLAR && p.score.is_some())
            .collect();
        let weight: f64 = others.iter().map(|p| p.weight).sum();
        if !others.is_empty() && weight > 0.0 {
            let s = others.iter().map(|p| p.weight * p.score.unwrap_or(0.0)).sum::<f64>() / weight;
            report.trust_score_without_sustainability = Some(display2(s));
            report.trust_score_without_sustainability_raw = Some(s);
        }
        Ok(report)
    }

    /// Weighted mean of the recorded full-precision pillar scores.
    pub fn reaggregate(&self) -> f64 {
        let mut sum = 0.0;
        let mut weight = 0.0;
        for (id, p) in &self.pillars {
            let w = self.weights.get(id).copied().unwrap_or(p.weight);
            sum += w * p.score_raw;
            weight += w;
        }
        sum / weight
    }

    pub fn render(&self) -> Vec<u8> {
        to_canonical_json(self)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|source| Error::Json {
            context: "trust report".into(),
            source,
        })
    }
}

/// Canonical report bytes.
pub fn render_report(report: &TrustReport) -> Vec<u8> {
    report.render()
}
