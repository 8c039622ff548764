//! Scenario description shared by static scoring and simulation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emissions::{EnergyModel, WorkloadModel};
use crate::error::{Error, Result};
use crate::score::WEIGHT_SUM_TOLERANCE;

/// A per-client quantity: one value for every client, or one value each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerClient {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerClient {
    pub fn mean(&self) -> f64 {
        match self {
            PerClient::Uniform(v) => *v,
            PerClient::Each(vs) => vs.iter().sum::<f64>() / vs.len().max(1) as f64,
        }
    }

    pub fn for_client(&self, idx: usize) -> f64 {
        match self {
            PerClient::Uniform(v) => *v,
            PerClient::Each(vs) => vs[idx],
        }
    }

    fn validate(&self, field: &str, num_clients: u64) -> Result<()> {
        let check = |name: String, v: f64| {
            if v.is_finite() && v >= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be at least 1")))
            }
        };
        match self {
            PerClient::Uniform(v) => check(field.to_string(), *v),
            PerClient::Each(vs) => {
                if vs.len() as u64 != num_clients {
                    return Err(Error::invalid(
                        field,
                        format!("{} per-client values for {num_clients} clients", vs.len()),
                    ));
                }
                vs.iter()
                    .enumerate()
                    .try_for_each(|(i, v)| check(format!("{field}[{i}]"), *v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareShare {
    pub share: f64,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationShare {
    pub share: f64,
    /// Country code or an address resolved through the location map.
    pub location: String,
}

fn default_num_classes() -> u32 {
    10
}

/// Everything needed to score or simulate a federation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub num_clients: u64,
    /// Clients sampled per round. Derived as `round(selection_rate * num_clients)`
    /// (at least 1) when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<u64>,
    pub total_rounds: u64,
    pub local_rounds: PerClient,
    pub selection_rate: f64,
    pub dataset_size: PerClient,
    pub model_size: f64,
    pub client_hardware: Vec<HardwareShare>,
    pub client_locations: Vec<LocationShare>,
    pub server_hardware: String,
    pub server_location: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_num_classes")]
    pub num_classes: u32,
    #[serde(default)]
    pub energy_model: EnergyModel,
    #[serde(default)]
    pub workload: WorkloadModel,
}

impl FederationConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "scenario".into(),
            source,
        })
    }

    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("scenario {}", path.display()),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients < 1 {
            return Err(Error::invalid("num_clients", "at least one client is required"));
        }
        if self.total_rounds < 1 {
            return Err(Error::invalid("total_rounds", "at least one round is required"));
        }
        let rate = self.selection_rate;
        if !(rate.is_finite() && rate > 0.0 && rate <= 1.0) {
            return Err(Error::invalid("selection_rate", format!("{rate} outside (0, 1]")));
        }
        if let Some(m) = self.sample_size {
            if m < 1 || m > self.num_clients {
                return Err(Error::invalid(
                    "sample_size",
                    format!("{m} outside [1, {}]", self.num_clients),
                ));
            }
            let implied = m as f64 / self.num_clients as f64;
            if (implied - rate).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::invalid(
                    "sample_size",
                    format!("{m}/{} = {implied} disagrees with selection_rate {rate}", self.num_clients),
                ));
            }
        }
        self.local_rounds.validate("local_rounds", self.num_clients)?;
        self.dataset_size.validate("dataset_size", self.num_clients)?;
        if !(self.model_size.is_finite() && self.model_size >= 1.0) {
            return Err(Error::invalid("model_size", format!("{} must be at least 1", self.model_size)));
        }
        check_shares(
            "client_hardware",
            self.client_hardware.iter().map(|h| (h.share, h.model.as_str())),
        )?;
        check_shares(
            "client_locations",
            self.client_locations.iter().map(|l| (l.share, l.location.as_str())),
        )?;
        if self.server_hardware.trim().is_empty() {
            return Err(Error::invalid("server_hardware", "empty model name"));
        }
        if self.server_location.trim().is_empty() {
            return Err(Error::invalid("server_location", "empty location"));
        }
        if self.num_classes < 1 {
            return Err(Error::invalid("num_classes", "at least one class is required"));
        }
        self.energy_model.validate()?;
        self.workload.validate()
    }

    /// Clients sampled per round.
    pub fn sample_size(&self) -> u64 {
        self.sample_size.unwrap_or_else(|| {
            ((self.selection_rate * self.num_clients as f64).round() as u64).clamp(1, self.num_clients)
        })
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Hardware model of every client, by index.
    pub fn client_hardware_assignment(&self) -> Vec<&str> {
        let shares: Vec<f64> = self.client_hardware.iter().map(|h| h.share).collect();
        assign(&shares, self.num_clients)
            .into_iter()
            .map(|k| self.client_hardware[k].model.as_str())
            .collect()
    }

    /// Location of every client, by index.
    pub fn client_location_assignment(&self) -> Vec<&str> {
        let shares: Vec<f64> = self.client_locations.iter().map(|l| l.share).collect();
        assign(&shares, self.num_clients)
            .into_iter()
            .map(|k| self.client_locations[k].location.as_str())
            .collect()
    }
}

fn check_shares<'a>(field: &str, items: impl Iterator<Item = (f64, &'a str)>) -> Result<()> {
    let mut sum = 0.0;
    let mut n = 0;
    for (i, (share, name)) in items.enumerate() {
        if !(share.is_finite() && (0.0..=1.0).contains(&share)) {
            return Err(Error::invalid(format!("{field}[{i}].share"), format!("{share} outside [0, 1]")));
        }
        if name.trim().is_empty() {
            return Err(Error::invalid(format!("{field}[{i}]"), "empty name"));
        }
        sum += share;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(field, "at least one entry is required"));
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::invalid(field, format!("shares sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Splits `total` items over `shares` by largest remainder; ties go to the
/// earlier entry.
pub fn allocate(shares: &[f64], total: u64) -> Vec<u64> {
    let exact: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        counts[k] += 1;
    }
    counts
}

/// Entry index for each of `total` items, in contiguous blocks.
fn assign(shares: &[f64], total: u64) -> Vec<usize> {
    allocate(shares, total)
        .into_iter()
        .enumerate()
        .flat_map(|(k, c)| std::iter::repeat(k).take(c as usize))
        .collect()
}
