//! The ten raw sustainability metrics of a federation and the default
//! sustainability pillar tree that scores them.
//!
//! Grid intensity and hardware efficiency are each reported twice: once as
//! the server-plus-client-average total, and once as two separate metrics.
//! Only the separate metrics are scored.

use serde::{Deserialize, Serialize};

use crate::config::FederationConfig;
use crate::error::Result;
use crate::refdata::{ReferenceData, COUNTRY_INTENSITY_BOUNDS, POWER_PERFORMANCE_BOUNDS};
use crate::score::{NodeKind, NormalizationRule, ScoreNode, COUNT_ANCHORS, VOLUME_ANCHORS};

pub const PILLAR: &str = "sustainability";
pub const CARBON: &str = "sustainability.carbon_intensity";
pub const HARDWARE: &str = "sustainability.hardware_efficiency";
pub const COMPLEXITY: &str = "sustainability.federation_complexity";

pub const CARBON_CLIENT: &str = "sustainability.carbon_intensity.client";
pub const CARBON_SERVER: &str = "sustainability.carbon_intensity.server";
pub const HARDWARE_CLIENT: &str = "sustainability.hardware_efficiency.client";
pub const HARDWARE_SERVER: &str = "sustainability.hardware_efficiency.server";
pub const GLOBAL_ROUNDS: &str = "sustainability.federation_complexity.global_rounds";
pub const NUM_CLIENTS: &str = "sustainability.federation_complexity.num_clients";
pub const SELECTION_RATE: &str = "sustainability.federation_complexity.selection_rate";
pub const LOCAL_ROUNDS: &str = "sustainability.federation_complexity.local_rounds";
pub const DATASET_SIZE: &str = "sustainability.federation_complexity.dataset_size";
pub const MODEL_SIZE: &str = "sustainability.federation_complexity.model_size";

// Field order is alphabetical throughout so serialized reports have sorted keys.

/// Grid carbon intensity seen by the federation, gCO₂eq/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensityAssessment {
    pub client_avg: f64,
    pub server: f64,
    /// `server + client_avg`.
    pub total: f64,
}

/// Power performance (marks per watt) of the federation's processors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareAssessment {
    pub client_avg_pp: f64,
    pub server_pp: f64,
    /// `server_pp + client_avg_pp`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityAssessment {
    pub avg_dataset_size: f64,
    pub avg_local_rounds: f64,
    pub global_rounds: u64,
    pub model_size: f64,
    pub num_clients: u64,
    pub selection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SustainabilityAssessment {
    pub carbon: CarbonIntensityAssessment,
    pub complexity: ComplexityAssessment,
    pub hardware: HardwareAssessment,
}

impl SustainabilityAssessment {
    pub fn new(config: &FederationConfig, refdata: &ReferenceData) -> Result<Self> {
        Ok(SustainabilityAssessment {
            carbon: assess_carbon(config, refdata)?,
            hardware: assess_hardware(config, refdata)?,
            complexity: assess_complexity(config)?,
        })
    }

    /// `(metric id, raw value)` for all ten metrics.
    pub fn raw_metrics(&self) -> [(&'static str, f64); 10] {
        let c = &self.complexity;
        [
            (CARBON_CLIENT, self.carbon.client_avg),
            (CARBON_SERVER, self.carbon.server),
            (HARDWARE_CLIENT, self.hardware.client_avg_pp),
            (HARDWARE_SERVER, self.hardware.server_pp),
            (GLOBAL_ROUNDS, c.global_rounds as f64),
            (NUM_CLIENTS, c.num_clients as f64),
            (SELECTION_RATE, c.selection_rate),
            (LOCAL_ROUNDS, c.avg_local_rounds),
            (DATASET_SIZE, c.avg_dataset_size),
            (MODEL_SIZE, c.model_size),
        ]
    }

    /// The default pillar tree with every metric's raw value filled in.
    pub fn pillar(&self) -> ScoreNode {
        let mut tree = pillar_tree();
        for (id, raw) in self.raw_metrics() {
            tree.set_raw(id, raw).expect("metric ids match the pillar tree");
        }
        tree
    }
}

fn weighted_mean<T>(items: &[T], mut f: impl FnMut(&T) -> Result<(f64, f64)>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for item in items {
        let (share, value) = f(item)?;
        num += share * value;
        den += share;
    }
    Ok(num / den)
}

/// Client grid intensity averaged by population share, plus the server's.
pub fn assess_carbon(config: &FederationConfig, refdata: &ReferenceData) -> Result<CarbonIntensityAssessment> {
    let client_avg = weighted_mean(&config.client_locations, |l| {
        Ok((l.share, refdata.intensity_at(&l.location)?))
    })?;
    let server = refdata.intensity_at(&config.server_location)?;
    Ok(CarbonIntensityAssessment {
        client_avg,
        server,
        total: server + client_avg,
    })
}

/// Client power performance averaged by fleet share, plus the server's.
pub fn assess_hardware(config: &FederationConfig, refdata: &ReferenceData) -> Result<HardwareAssessment> {
    let client_avg_pp = weighted_mean(&config.client_hardware, |h| {
        Ok((h.share, refdata.hardware.lookup(&h.model)?.power_performance))
    })?;
    let server_pp = refdata.hardware.lookup(&config.server_hardware)?.power_performance;
    Ok(HardwareAssessment {
        client_avg_pp,
        server_pp,
        total: server_pp + client_avg_pp,
    })
}

pub fn assess_complexity(config: &FederationConfig) -> Result<ComplexityAssessment> {
    config.validate()?;
    Ok(ComplexityAssessment {
        global_rounds: config.total_rounds,
        num_clients: config.num_clients,
        selection_rate: config.selection_rate,
        avg_local_rounds: config.local_rounds.mean(),
        avg_dataset_size: config.dataset_size.mean(),
        model_size: config.model_size,
    })
}

/// Sustainability pillar with default weights: carbon 0.5, hardware 0.25,
/// complexity 0.25, and equal metric weights inside each notion.
pub fn pillar_tree() -> ScoreNode {
    let (ci_lo, ci_hi) = COUNTRY_INTENSITY_BOUNDS;
    let (pp_lo, pp_hi) = POWER_PERFORMANCE_BOUNDS;
    let carbon_rule = || NormalizationRule::LinearInverse { lo: ci_lo, hi: ci_hi };
    let hardware_rule = || NormalizationRule::LinearDirect { lo: pp_lo, hi: pp_hi };
    let counts = || NormalizationRule::log_bucket(&COUNT_ANCHORS);
    let volumes = || NormalizationRule::log_bucket(&VOLUME_ANCHORS);

    ScoreNode::group(
        PILLAR,
        NodeKind::Pillar,
        1.0,
        vec![
            ScoreNode::equal_group(
                CARBON,
                NodeKind::Notion,
                0.5,
                vec![
                    ScoreNode::metric(CARBON_CLIENT, 0.0, carbon_rule()),
                    ScoreNode::metric(CARBON_SERVER, 0.0, carbon_rule()),
                ],
            ),
            ScoreNode::equal_group(
                HARDWARE,
                NodeKind::Notion,
                0.25,
                vec![
                    ScoreNode::metric(HARDWARE_CLIENT, 0.0, hardware_rule()),
                    ScoreNode::metric(HARDWARE_SERVER, 0.0, hardware_rule()),
                ],
            ),
            ScoreNode::equal_group(
                COMPLEXITY,
                NodeKind::Notion,
                0.25,
                vec![
                    ScoreNode::metric(GLOBAL_ROUNDS, 0.0, counts()),
                    ScoreNode::metric(NUM_CLIENTS, 0.0, counts()),
                    ScoreNode::metric(SELECTION_RATE, 0.0, NormalizationRule::selection_rate()),
                    ScoreNode::metric(LOCAL_ROUNDS, 0.0, counts()),
                    ScoreNode::metric(DATASET_SIZE, 0.0, volumes()),
                    ScoreNode::metric(MODEL_SIZE, 0.0, volumes()),
                ],
            ),
        ],
    )
}
