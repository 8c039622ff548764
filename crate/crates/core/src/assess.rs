//! End-to-end operations behind the command line: static scoring,
//! simulation and comparison. All three share one validator.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::FederationConfig;
use crate::error::{Error, Result};
use crate::fedsim::{self, RunOutcome};
use crate::refdata::ReferenceData;
use crate::report::{
    to_canonical_json, two_decimals, write_atomic, EmissionsSummary, FactSheet, PillarFixture, TrustReport,
    EMISSIONS_FILE, EXTERNAL_PILLARS, FACTSHEET_FILE, REPORT_FILE,
};
use crate::score::{NodeKind, NormalizationRule, ScoreNode, WeightConfig};
use crate::sustainability::{self, SustainabilityAssessment};

pub const ROOT: &str = "trust";
pub const OVERRIDE_FLAG: &str = "sustainability_override";

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    pub weights: Option<WeightConfig>,
    pub pillars: Option<PillarFixture>,
    pub allow_partial: bool,
}

/// Checks a scenario and resolves every hardware model and location it names.
pub fn validate(config: &FederationConfig, refdata: &ReferenceData) -> Result<SustainabilityAssessment> {
    config.validate()?;
    SustainabilityAssessment::new(config, refdata)
}

fn pillar_from_score(id: &str, weight: f64, score: Option<f64>) -> ScoreNode {
    let mut metric = ScoreNode::metric(format!("{id}.score"), 1.0, NormalizationRule::Identity);
    metric.raw = score;
    ScoreNode::group(id, NodeKind::Pillar, weight, vec![metric])
}

/// The trust tree: the sustainability pillar alone, or all seven pillars
/// with equal weights when external scores are supplied.
pub fn trust_tree(sustainability: ScoreNode, pillars: Option<&PillarFixture>) -> ScoreNode {
    let Some(fixture) = pillars else {
        let mut pillar = sustainability;
        pillar.weight = 1.0;
        return ScoreNode::group(ROOT, NodeKind::Root, 1.0, vec![pillar]);
    };
    let sustainability = match fixture.sustainability_override {
        Some(v) => pillar_from_score(sustainability::PILLAR, 0.0, Some(v)),
        None => sustainability,
    };
    let mut children = vec![sustainability];
    for id in EXTERNAL_PILLARS {
        children.push(pillar_from_score(id, 0.0, fixture.pillars.get(id).copied()));
    }
    ScoreNode::equal_group(ROOT, NodeKind::Root, 1.0, children)
}

fn build_report(
    config: &FederationConfig,
    refdata: &ReferenceData,
    opts: &ScoreOptions,
    emissions: Option<EmissionsSummary>,
    mut flags: Vec<String>,
) -> Result<TrustReport> {
    let assessment = validate(config, refdata)?;
    let mut tree = trust_tree(assessment.pillar(), opts.pillars.as_ref());
    if let Some(weights) = &opts.weights {
        if opts.pillars.is_some() {
            weights.apply_to(&mut tree)?;
        } else {
            weights.without_pillar_weights().apply_to(&mut tree)?;
        }
    }
    tree.validate()?;
    let missing = if opts.allow_partial {
        tree.aggregate_partial()?.missing
    } else {
        tree.aggregate()?;
        Vec::new()
    };
    if opts.pillars.as_ref().is_some_and(|p| p.sustainability_override.is_some()) {
        flags.push(OVERRIDE_FLAG.to_string());
    }
    if !missing.is_empty() {
        flags.push("partial".to_string());
    }
    flags.sort();
    TrustReport::from_tree(&tree, assessment, config.digest(), emissions, missing, flags)
}

/// Static assessment from configuration and reference data alone.
pub fn score(config: &FederationConfig, refdata: &ReferenceData, opts: &ScoreOptions) -> Result<TrustReport> {
    build_report(config, refdata, opts, None, Vec::new())
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub outcome: RunOutcome,
    pub report: TrustReport,
    pub factsheet: FactSheet,
}

impl SimulationOutput {
    pub fn report_bytes(&self) -> Vec<u8> {
        self.report.render()
    }

    pub fn factsheet_bytes(&self) -> Vec<u8> {
        self.factsheet.render()
    }

    pub fn emissions_csv(&self) -> String {
        self.outcome.state.emissions.to_csv()
    }

    /// Writes the report, factsheet and emissions file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let files = [
            (REPORT_FILE, self.report_bytes()),
            (FACTSHEET_FILE, self.factsheet_bytes()),
            (EMISSIONS_FILE, self.emissions_csv().into_bytes()),
        ];
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in files {
            write_atomic(&dir.join(name), &bytes)?;
        }
        Ok(())
    }
}

/// Runs the federation, then scores it and fills the factsheet.
pub fn run_federation(config: &FederationConfig, refdata: &ReferenceData, opts: &ScoreOptions) -> Result<SimulationOutput> {
    validate(config, refdata)?;
    let outcome = fedsim::run(config, refdata)?;
    let mut flags = Vec::new();
    if outcome.state.hash_collisions > 0 {
        flags.push(format!("label_hash_collisions={}", outcome.state.hash_collisions));
    }
    let emissions = EmissionsSummary::from_log(&outcome.state.emissions);
    let report = build_report(config, refdata, opts, Some(emissions), flags)?;

    let mut scores: BTreeMap<String, f64> = report.pillars.iter().map(|(k, v)| (k.clone(), v.score)).collect();
    scores.insert(ROOT.to_string(), report.trust_score);
    let factsheet = FactSheet::populate(
        config,
        refdata,
        Some(&outcome.state),
        Some(&outcome.statistics),
        Some(&outcome.evaluation),
        &scores,
    )?;
    factsheet.require_complete()?;
    Ok(SimulationOutput {
        outcome,
        report,
        factsheet,
    })
}

/// Signed difference, second minus first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    #[serde(serialize_with = "two_decimals")]
    pub delta: f64,
    pub delta_raw: f64,
}

impl Delta {
    fn new(a: f64, b: f64) -> Self {
        let d = b - a;
        Delta {
            delta: crate::score::display2(d) + 0.0,
            delta_raw: d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalScore {
    pub name: String,
    pub pillars: BTreeMap<String, f64>,
    #[serde(serialize_with = "two_decimals")]
    pub trust_score: f64,
    pub trust_score_raw: f64,
    pub trust_score_without_sustainability: Option<f64>,
    pub trust_score_without_sustainability_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Per pillar, plus `trust` and `trust_without_sustainability`.
    pub deltas: BTreeMap<String, Delta>,
    pub proposals: Vec<ProposalScore>,
    /// Proposal names, best first.
    pub ranking: Vec<String>,
}

impl Comparison {
    pub fn render(&self) -> Vec<u8> {
        to_canonical_json(self)
    }

    /// Plain-text table for the terminal.
    pub fn table(&self) -> String {
        let mut ids: Vec<&String> = self.proposals.iter().flat_map(|p| p.pillars.keys()).collect();
        ids.sort();
        ids.dedup();
        let width = ids.iter().map(|s| s.len()).chain([30]).max().unwrap_or(30);
        let mut out = format!("{:width$}", "pillar");
        for p in &self.proposals {
            out.push_str(&format!("  {:>12}", p.name));
        }
        out.push_str(&format!("  {:>8}\n", "delta"));
        let mut row = |label: &str, values: Vec<Option<f64>>, delta: Option<&Delta>| {
            out.push_str(&format!("{label:width$}"));
            for v in values {
                match v {
                    Some(v) => out.push_str(&format!("  {:>12.2}", v)),
                    None => out.push_str(&format!("  {:>12}", "-")),
                }
            }
            match delta {
                Some(d) => out.push_str(&format!("  {:>+8.2}\n", d.delta)),
                None => out.push_str(&format!("  {:>8}\n", "-")),
            }
        };
        for id in ids {
            let values = self.proposals.iter().map(|p| p.pillars.get(id).copied()).collect();
            row(id, values, self.deltas.get(id.as_str()));
        }
        let values = self
            .proposals
            .iter()
            .map(|p| p.trust_score_without_sustainability)
            .collect();
        row("trust (without sustainability)", values, self.deltas.get("trust_without_sustainability"));
        let values = self.proposals.iter().map(|p| Some(p.trust_score)).collect();
        row("trust", values, self.deltas.get(ROOT));
        out.push_str(&format!("ranking: {}\n", self.ranking.join(" > ")));
        out
    }
}

/// Scores two proposals and reports second-minus-first deltas.
pub fn compare(
    proposals: &[(String, FederationConfig, Option<PillarFixture>)],
    refdata: &ReferenceData,
    weights: Option<&WeightConfig>,
    allow_partial: bool,
) -> Result<Comparison> {
    if proposals.len() != 2 {
        return Err(Error::invalid("config", format!("compare needs 2 scenarios, got {}", proposals.len())));
    }
    let mut reports = Vec::with_capacity(2);
    for (_, config, pillars) in proposals {
        let opts = ScoreOptions {
            weights: weights.cloned(),
            pillars: pillars.clone(),
            allow_partial,
        };
        reports.push(score(config, refdata, &opts)?);
    }
    let scored: Vec<ProposalScore> = proposals
        .iter()
        .zip(&reports)
        .map(|((name, _, _), r)| ProposalScore {
            name: name.clone(),
            pillars: r.pillars.iter().map(|(k, v)| (k.clone(), v.score)).collect(),
            trust_score: r.trust_score,
            trust_score_raw: r.trust_score_raw,
            trust_score_without_sustainability: r.trust_score_without_sustainability,
            trust_score_without_sustainability_raw: r.trust_score_without_sustainability_raw,
        })
        .collect();

    let (a, b) = (&reports[0], &reports[1]);
    let mut deltas: BTreeMap<String, Delta> = a
        .pillars
        .iter()
        .filter_map(|(id, pa)| {
            let pb = b.pillars.get(id)?;
            Some((id.clone(), Delta::new(pa.score_raw, pb.score_raw)))
        })
        .collect();
    deltas.insert(ROOT.to_string(), Delta::new(a.trust_score_raw, b.trust_score_raw));
    if let (Some(x), Some(y)) = (
        a.trust_score_without_sustainability_raw,
        b.trust_score_without_sustainability_raw,
    ) {
        deltas.insert("trust_without_sustainability".to_string(), Delta::new(x, y));
    }

    let mut order: Vec<&ProposalScore> = scored.iter().collect();
    order.sort_by(|x, y| y.trust_score_raw.total_cmp(&x.trust_score_raw).then(x.name.cmp(&y.name)));
    let ranking = order.iter().map(|p| p.name.clone()).collect();
    Ok(Comparison {
        deltas,
        proposals: scored,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{HardwareShare, LocationShare, PerClient};
    use crate::score::display2;

    fn uc_d() -> FederationConfig {
        FederationConfig {
            num_clients: 8,
            sample_size: None,
            total_rounds: 500,
            local_rounds: PerClient::Uniform(50.0),
            selection_rate: 0.3,
            dataset_size: PerClient::Uniform(500.0),
            model_size: 1e4,
            client_hardware: vec![
                HardwareShare {
                    share: 0.5,
                    model: "Intel Core i7-1250U".into(),
                },
                HardwareShare {
                    share: 0.5,
                    model: "Intel Core i5-1335U".into(),
                },
            ],
            client_locations: vec![
                LocationShare {
                    share: 0.5,
                    location: "XK".into(),
                },
                LocationShare {
                    share: 0.5,
                    location: "GM".into(),
                },
            ],
            server_hardware: "Intel Core i7-1250U".into(),
            server_location: "ZA".into(),
            seed: 3,
            num_classes: 10,
            energy_model: Default::default(),
            workload: Default::default(),
        }
    }

    fn refdata() -> ReferenceData {
        ReferenceData::bundled().unwrap()
    }

    fn fixture(pillars: &[(&str, f64)], over: Option<f64>) -> PillarFixture {
        PillarFixture {
            pillars: pillars.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            sustainability_override: over,
        }
    }

    #[test]
    fn sustainability_only_tree() {
        let r = score(&uc_d(), &refdata(), &ScoreOptions::default()).unwrap();
        assert_eq!(r.trust_score_raw, r.pillars["sustainability"].score_raw);
        assert_eq!(r.weights["sustainability"], 1.0);
        assert!(!r.partial);
    }

    #[test]
    fn all_pillars_one() {
        let all: Vec<(&str, f64)> = EXTERNAL_PILLARS.iter().map(|p| (*p, 1.0)).collect();
        let r = score(&uc_d(), &refdata(), &ScoreOptions {
            pillars: Some(fixture(&all, Some(1.0))),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.trust_score, 1.0);
        assert_eq!(r.flags, vec![OVERRIDE_FLAG.to_string()]);
        assert!((r.reaggregate() - r.trust_score_raw).abs() < 1e-9);
    }

    #[test]
    fn missing_pillar_needs_allow_partial() {
        let some = fixture(&[("privacy", 0.5), ("fairness", 0.7)], None);
        let opts = ScoreOptions {
            pillars: Some(some),
            ..Default::default()
        };
        assert!(matches!(score(&uc_d(), &refdata(), &opts), Err(Error::MissingMetric(_))));
        let opts = ScoreOptions {
            allow_partial: true,
            ..opts
        };
        let r = score(&uc_d(), &refdata(), &opts).unwrap();
        assert!(r.partial);
        assert_eq!(r.missing.len(), 4);
        assert_eq!(r.pillars.len(), 3);
        assert!((r.reaggregate() - r.trust_score_raw).abs() < 1e-9);
    }

    #[test]
    fn weights_override_notions() {
        let w = WeightConfig::from_json_str(
            r#"{"sustainability": {"carbon_intensity": 1.0, "hardware_efficiency": 0.0, "federation_complexity": 0.0}}"#,
        )
        .unwrap();
        let r = score(&uc_d(), &refdata(), &ScoreOptions {
            weights: Some(w),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.trust_score_raw, r.notions[sustainability::CARBON].score_raw);
    }

    #[test]
    fn validate_rejects_unknown_references() {
        let mut c = uc_d();
        c.server_location = "QQ".into();
        assert_eq!(validate(&c, &refdata()).unwrap_err().kind(), crate::ErrorKind::Reference);
        let mut c = uc_d();
        c.total_rounds = 0;
        assert_eq!(validate(&c, &refdata()).unwrap_err().kind(), crate::ErrorKind::Validation);
    }

    #[test]
    fn identical_configs_have_zero_deltas() {
        let p = fixture(&EXTERNAL_PILLARS.iter().map(|p| (*p, 0.4)).collect::<Vec<_>>(), None);
        let entries = vec![
            ("a".to_string(), uc_d(), Some(p.clone())),
            ("b".to_string(), uc_d(), Some(p)),
        ];
        let c = compare(&entries, &refdata(), None, false).unwrap();
        assert_eq!(c.deltas.len(), 7 + 2);
        assert!(c.deltas.values().all(|d| d.delta_raw == 0.0));
        assert_eq!(c.ranking, vec!["a", "b"]);
        crate::report::tests::assert_sorted_keys(&c.render());
        assert!(c.table().contains("ranking: a > b"));
    }

    #[test]
    fn simulate_outputs_are_consistent() {
        let mut c = uc_d();
        c.total_rounds = 20;
        let out = run_federation(&c, &refdata(), &ScoreOptions::default()).unwrap();
        assert_eq!(out.factsheet.completeness(), 1.0);
        let expected_rows = 20 * c.sample_size() + 20;
        assert_eq!(out.outcome.state.emissions.len() as u64, expected_rows);
        let em = out.report.emissions.as_ref().unwrap();
        assert_eq!(em.total.records, expected_rows);
        // Scores depend on the configuration only.
        let static_report = score(&c, &refdata(), &ScoreOptions::default()).unwrap();
        assert_eq!(static_report.metrics, out.report.metrics);
        assert_eq!(display2(out.report.trust_score_raw), out.report.trust_score);
    }
}
