//! TDP-based energy and CO₂eq estimates for each federation phase.
//!
//! Energy is `TDP × utilization × duration`; emissions are energy times the
//! grid intensity at the node. Durations come from [`WorkloadModel`], which is
//! an explicit model input rather than a measurement.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refdata::{HardwareProfile, ReferenceData};

const JOULES_PER_KWH: f64 = 3.6e6;

pub const EMISSIONS_HEADER: &str = "round,role,node_id,phase,duration_s,energy_kwh,intensity_gco2_kwh,co2eq_g";

fn default_utilization() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    /// Fraction of TDP drawn while computing.
    #[serde(default = "default_utilization")]
    pub cpu_utilization: f64,
    /// kWh per transferred byte; 0 disables communication records.
    #[serde(default)]
    pub comm_energy_per_byte: f64,
    /// Fraction of TDP the server draws while waiting for client updates.
    #[serde(default)]
    pub idle_fraction: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            cpu_utilization: 1.0,
            comm_energy_per_byte: 0.0,
            idle_fraction: 0.0,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        unit("energy_model.cpu_utilization", self.cpu_utilization)?;
        unit("energy_model.idle_fraction", self.idle_fraction)?;
        non_negative("energy_model.comm_energy_per_byte", self.comm_energy_per_byte)
    }
}

fn default_train_seconds() -> f64 {
    1e-10
}
fn default_aggregation_seconds() -> f64 {
    1e-9
}
fn default_bytes_per_parameter() -> f64 {
    4.0
}

/// Simulated wall time of each phase.
///
/// - training: `train_seconds_per_unit × local_rounds × dataset_size × model_size`
/// - aggregation: `aggregation_seconds_per_unit × updates × model_size`
/// - communication: `2 × bytes_per_parameter × model_size` bytes per selected client
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadModel {
    #[serde(default = "default_train_seconds")]
    pub train_seconds_per_unit: f64,
    #[serde(default = "default_aggregation_seconds")]
    pub aggregation_seconds_per_unit: f64,
    #[serde(default = "default_bytes_per_parameter")]
    pub bytes_per_parameter: f64,
}

impl Default for WorkloadModel {
    fn default() -> Self {
        WorkloadModel {
            train_seconds_per_unit: default_train_seconds(),
            aggregation_seconds_per_unit: default_aggregation_seconds(),
            bytes_per_parameter: default_bytes_per_parameter(),
        }
    }
}

impl WorkloadModel {
    pub fn validate(&self) -> Result<()> {
        non_negative("workload.train_seconds_per_unit", self.train_seconds_per_unit)?;
        non_negative("workload.aggregation_seconds_per_unit", self.aggregation_seconds_per_unit)?;
        non_negative("workload.bytes_per_parameter", self.bytes_per_parameter)
    }

    pub fn training_seconds(&self, local_rounds: f64, dataset_size: f64, model_size: f64) -> f64 {
        self.train_seconds_per_unit * local_rounds * dataset_size * model_size
    }

    pub fn aggregation_seconds(&self, updates: usize, model_size: f64) -> f64 {
        self.aggregation_seconds_per_unit * updates as f64 * model_size
    }

    pub fn exchanged_bytes(&self, model_size: f64) -> f64 {
        2.0 * self.bytes_per_parameter * model_size
    }
}

fn unit(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} outside [0, 1]")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} must be non-negative")))
    }
}

/// kWh drawn by a processor at `utilization` of its TDP for `duration_s` seconds.
pub fn estimate_energy(tdp_watts: f64, utilization: f64, duration_s: f64) -> Result<f64> {
    if !(tdp_watts.is_finite() && tdp_watts > 0.0) {
        return Err(Error::invalid("tdp", format!("{tdp_watts} must be positive")));
    }
    unit("utilization", utilization)?;
    non_negative("duration", duration_s)?;
    Ok(tdp_watts * utilization * duration_s / JOULES_PER_KWH)
}

/// Grams of CO₂eq for `energy_kwh` drawn from a grid of `intensity` gCO₂eq/kWh.
pub fn energy_to_co2(energy_kwh: f64, intensity: f64) -> Result<f64> {
    non_negative("energy", energy_kwh)?;
    non_negative("intensity", intensity)?;
    Ok(energy_kwh * intensity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Server,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Client => "client",
            Role::Server => "server",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Aggregation,
    Communication,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Training => "training",
            Phase::Aggregation => "aggregation",
            Phase::Communication => "communication",
        })
    }
}

/// A node with its hardware and resolved grid intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub node_id: String,
    pub role: Role,
    pub hardware: HardwareProfile,
    pub country: String,
    pub intensity: f64,
}

impl NodeProfile {
    pub fn resolve(
        node_id: impl Into<String>,
        role: Role,
        hardware_model: &str,
        location: &str,
        refdata: &ReferenceData,
    ) -> Result<Self> {
        let hardware = refdata.hardware.lookup(hardware_model)?.clone();
        let country = refdata.resolve_location(location)?;
        let intensity = refdata.lookup_intensity(&country)?;
        Ok(NodeProfile {
            node_id: node_id.into(),
            role,
            hardware,
            country,
            intensity,
        })
    }
}

/// One tracked phase of one node in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub node_id: String,
    pub role: Role,
    pub phase: Phase,
    pub round: u64,
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub intensity: f64,
    pub co2eq_g: f64,
}

impl EmissionRecord {
    fn sort_key(&self) -> (u64, Role, &str, Phase) {
        (self.round, self.role, self.node_id.as_str(), self.phase)
    }
}

/// Records a compute phase (training or aggregation) at the model's utilization.
pub fn track_phase(
    node: &NodeProfile,
    phase: Phase,
    round: u64,
    model: &EnergyModel,
    duration_s: f64,
) -> Result<EmissionRecord> {
    let energy_kwh = estimate_energy(node.hardware.tdp, model.cpu_utilization, duration_s)?;
    record(node, phase, round, duration_s, energy_kwh)
}

/// Records an aggregation phase plus the server's idle draw while it waited.
pub fn track_aggregation(
    node: &NodeProfile,
    round: u64,
    model: &EnergyModel,
    duration_s: f64,
    wait_s: f64,
) -> Result<EmissionRecord> {
    let busy = estimate_energy(node.hardware.tdp, model.cpu_utilization, duration_s)?;
    let idle = estimate_energy(node.hardware.tdp, model.idle_fraction, wait_s)?;
    record(node, Phase::Aggregation, round, duration_s, busy + idle)
}

/// Records a model exchange of `bytes`; duration is not modelled.
pub fn track_communication(node: &NodeProfile, round: u64, model: &EnergyModel, bytes: f64) -> Result<EmissionRecord> {
    non_negative("bytes", bytes)?;
    record(node, Phase::Communication, round, 0.0, bytes * model.comm_energy_per_byte)
}

fn record(node: &NodeProfile, phase: Phase, round: u64, duration_s: f64, energy_kwh: f64) -> Result<EmissionRecord> {
    Ok(EmissionRecord {
        node_id: node.node_id.clone(),
        role: node.role,
        phase,
        round,
        duration_s,
        energy_kwh,
        intensity: node.intensity,
        co2eq_g: energy_to_co2(energy_kwh, node.intensity)?,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub co2eq_g: f64,
    pub energy_kwh: f64,
    pub records: u64,
}

impl Totals {
    pub fn add(&mut self, r: &EmissionRecord) {
        self.co2eq_g += r.co2eq_g;
        self.energy_kwh += r.energy_kwh;
        self.records += 1;
    }
}

/// The run's emissions file, kept in canonical order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmissionsLog {
    records: Vec<EmissionRecord>,
}

impl EmissionsLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merges records and restores the (round, role, node_id, phase) order.
    pub fn extend(&mut self, records: impl IntoIterator<Item = EmissionRecord>) {
        let start = self.records.len();
        self.records.extend(records);
        self.records[start..].sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        // Appending whole rounds in order keeps the log sorted without a full pass.
        if start > 0
            && start < self.records.len()
            && self.records[start - 1].sort_key() > self.records[start].sort_key()
        {
            self.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        }
    }

    pub fn push(&mut self, record: EmissionRecord) {
        self.extend([record]);
    }

    pub fn records(&self) -> &[EmissionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        self.records.iter().for_each(|r| t.add(r));
        t
    }

    pub fn by_phase(&self) -> BTreeMap<Phase, Totals> {
        let mut out: BTreeMap<Phase, Totals> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.phase).or_default().add(r);
        }
        out
    }

    pub fn by_role(&self) -> BTreeMap<Role, Totals> {
        let mut out: BTreeMap<Role, Totals> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.role).or_default().add(r);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(EMISSIONS_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.round,
                r.role,
                r.node_id,
                r.phase,
                format_sig6(r.duration_s),
                format_sig6(r.energy_kwh),
                format_sig6(r.intensity),
                format_sig6(r.co2eq_g),
            ));
        }
        out
    }
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
