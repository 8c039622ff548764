//! Deterministic federation run: per-round client sampling, simulated local
//! training, unweighted aggregation and emissions tracking.
//!
//! No learning happens. A client's "update" is a seeded perturbation of the
//! global vector, enough to exercise the orchestration and bookkeeping.
//! Every random draw comes from [`SplitMix64`] streams keyed by the scenario
//! seed, so results do not depend on thread scheduling.
//!
//! Sampling uses one stream for the whole run, seeded with
//! `SplitMix64::keyed(seed, &[SAMPLER_TAG])`. Each round runs a partial
//! Fisher–Yates shuffle over `0..N`: for `j` in `0..m`, swap position `j`
//! with `j + below(N - j)`. The first `m` ids, sorted, are the round's set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{allocate, FederationConfig};
use crate::emissions::{
    track_aggregation, track_communication, track_phase, EmissionRecord, EmissionsLog, NodeProfile, Phase, Role,
    Totals,
};
use crate::error::{Error, Result};
use crate::refdata::ReferenceData;
use crate::rng::SplitMix64;

/// Longest simulated parameter vector, whatever the declared model size.
pub const MODEL_VECTOR_CAP: usize = 4096;

pub const SAMPLER_TAG: u64 = 0x5341_4d50;
const SALT_TAG: u64 = 0x5341_4c54;
const INIT_TAG: u64 = 0x494e_4954;
const TRAIN_TAG: u64 = 0x5452_4149;
const CLASS_TAG: u64 = 0x434c_4153;

const DECAY: f64 = 0.99;
const NOISE: f64 = 0.02;

/// Uniform `m`-subset of `0..n`, sorted ascending.
pub fn sample_clients(n: u64, m: u64, rng: &mut SplitMix64) -> Result<Vec<u64>> {
    if m < 1 || m > n {
        return Err(Error::invalid("sample_size", format!("cannot sample {m} of {n} clients")));
    }
    let mut ids: Vec<u64> = (0..n).collect();
    for j in 0..m {
        let k = j + rng.below(n - j);
        ids.swap(j as usize, k as usize);
    }
    ids.truncate(m as usize);
    ids.sort_unstable();
    Ok(ids)
}

/// Element-wise mean of equally long parameter vectors.
pub fn aggregate_model(updates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::invalid("updates", "nothing to aggregate"))?;
    let len = first.len();
    if let Some(bad) = updates.iter().find(|u| u.len() != len) {
        return Err(Error::invalid(
            "updates",
            format!("length mismatch: {} vs {len}", bad.len()),
        ));
    }
    let mut out = vec![0.0; len];
    for u in updates {
        for (acc, x) in out.iter_mut().zip(u) {
            *acc += x;
        }
    }
    let n = updates.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

/// Salted SHA-256 pseudonyms for client ids and class labels.
///
/// The salt is drawn from the run seed and never written anywhere, so the
/// same run always yields the same pseudonyms while raw ids stay out of
/// every output file.
#[derive(Clone)]
pub struct Pseudonymizer {
    salt: [u8; 8],
}

impl std::fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Pseudonymizer { .. }")
    }
}

impl Pseudonymizer {
    pub fn for_seed(seed: u64) -> Self {
        Pseudonymizer {
            salt: SplitMix64::keyed(seed, &[SALT_TAG]).next_u64().to_le_bytes(),
        }
    }

    fn hash(&self, domain: &str, idx: u64) -> String {
        let mut h = Sha256::new();
        h.update(self.salt);
        h.update(domain.as_bytes());
        h.update(b":");
        h.update(idx.to_string().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn client(&self, idx: u64) -> String {
        self.hash("client", idx)
    }

    pub fn label(&self, label: u64) -> String {
        self.hash("label", label)
    }

    /// Hashes a client's per-label counts; colliding labels are merged and counted.
    pub fn hash_labels(&self, counts: &BTreeMap<u64, u64>) -> (BTreeMap<String, u64>, u64) {
        let mut out = BTreeMap::new();
        let mut collisions = 0;
        for (label, count) in counts {
            let slot = out.entry(self.label(*label)).or_insert(0);
            if *slot > 0 {
                collisions += 1;
            }
            *slot += count;
        }
        (out, collisions)
    }
}

/// Adds a client's hashed label counts into the federation-wide map.
pub fn accumulate_class_distribution(distribution: &mut BTreeMap<String, u64>, client_labels: &BTreeMap<String, u64>) {
    for (label, count) in client_labels {
        *distribution.entry(label.clone()).or_insert(0) += count;
    }
}

/// Synthetic, deterministic label counts for one client's local dataset.
pub fn synthetic_labels(seed: u64, client: u64, dataset_size: u64, num_classes: u32) -> BTreeMap<u64, u64> {
    let mut rng = SplitMix64::keyed(seed, &[CLASS_TAG, client]);
    let raw: Vec<f64> = (0..num_classes).map(|_| rng.next_f64() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let shares: Vec<f64> = raw.iter().map(|r| r / total).collect();
    allocate(&shares, dataset_size)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(label, c)| (label as u64, c))
        .collect()
}

/// Mutable run state, advanced one round at a time.
#[derive(Debug, Clone)]
pub struct FederationState {
    pub round: u64,
    pub model: Vec<f64>,
    /// Hashed client id → rounds selected.
    pub selection_counts: BTreeMap<String, u64>,
    /// Hashed label → samples across all clients.
    pub class_distribution: BTreeMap<String, u64>,
    pub emissions: EmissionsLog,
    pub rng: SplitMix64,
    /// Sampled client indices per round; kept in memory only.
    pub selection_history: Vec<Vec<u64>>,
    /// Running totals as the server receives records.
    pub server_totals: Totals,
    pub hash_collisions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientStatistics {
    pub avg_training_time_s: f64,
    pub class_balance: BTreeMap<String, u64>,
    pub dataset_size: u64,
    pub participation_rate: f64,
}

/// Per-client statistics keyed by hashed id, plus pass-through fields that
/// are supplied externally and never computed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub clever_score: Option<f64>,
    pub clients: BTreeMap<String, ClientStatistics>,
    pub feature_importance: Option<BTreeMap<String, f64>>,
    pub mean_participation_rate: f64,
    pub mean_training_time_s: f64,
}

/// Aggregate evaluation of the final global vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub clients_evaluated: u64,
    pub model_l2_norm: f64,
    pub model_parameters: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: FederationState,
    pub statistics: RunStatistics,
    pub evaluation: Evaluation,
}

struct Client {
    hashed_id: String,
    profile: NodeProfile,
    local_rounds: f64,
    dataset_size: f64,
}

fn initial_model(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = SplitMix64::keyed(seed, &[INIT_TAG]);
    (0..len).map(|_| rng.next_f64() - 0.5).collect()
}

fn local_update(global: &[f64], seed: u64, round: u64, client: u64) -> Vec<f64> {
    let mut rng = SplitMix64::keyed(seed, &[TRAIN_TAG, round, client]);
    global
        .iter()
        .map(|w| DECAY * w + NOISE * (rng.next_f64() - 0.5))
        .collect()
}

/// Runs every round of the federation described by `config`.
pub fn run(config: &FederationConfig, refdata: &ReferenceData) -> Result<RunOutcome> {
    config.validate()?;
    let seed = config.seed;
    let n = config.num_clients;
    let m = config.sample_size();
    let pseudo = Pseudonymizer::for_seed(seed);

    let hardware = config.client_hardware_assignment();
    let locations = config.client_location_assignment();
    let clients: Vec<Client> = (0..n)
        .map(|i| {
            let hashed_id = pseudo.client(i);
            let profile = NodeProfile::resolve(
                hashed_id.clone(),
                Role::Client,
                hardware[i as usize],
                locations[i as usize],
                refdata,
            )?;
            Ok(Client {
                hashed_id,
                profile,
                local_rounds: config.local_rounds.for_client(i as usize),
                dataset_size: config.dataset_size.for_client(i as usize),
            })
        })
        .collect::<Result<_>>()?;
    let server = NodeProfile::resolve("server", Role::Server, &config.server_hardware, &config.server_location, refdata)?;

    let model_len = (config.model_size.min(MODEL_VECTOR_CAP as f64) as usize).max(1);
    let mut state = FederationState {
        round: 0,
        model: initial_model(seed, model_len),
        selection_counts: clients.iter().map(|c| (c.hashed_id.clone(), 0)).collect(),
        class_distribution: BTreeMap::new(),
        emissions: EmissionsLog::new(),
        rng: SplitMix64::keyed(seed, &[SAMPLER_TAG]),
        selection_history: Vec::with_capacity(config.total_rounds as usize),
        server_totals: Totals::default(),
        hash_collisions: 0,
    };

    // Class distribution is gathered once, before training.
    let mut class_balance = Vec::with_capacity(clients.len());
    for (i, client) in clients.iter().enumerate() {
        let labels = synthetic_labels(seed, i as u64, client.dataset_size.round() as u64, config.num_classes);
        let (hashed, collisions) = pseudo.hash_labels(&labels);
        state.hash_collisions += collisions;
        accumulate_class_distribution(&mut state.class_distribution, &hashed);
        class_balance.push(hashed);
    }

    let mut training_time = vec![0.0f64; clients.len()];
    let exchanged = config.workload.exchanged_bytes(config.model_size);
    let communicate = config.energy_model.comm_energy_per_byte > 0.0;

    for round in 1..=config.total_rounds {
        let selected = sample_clients(n, m, &mut state.rng)?;
        for &i in &selected {
            *state
                .selection_counts
                .get_mut(&clients[i as usize].hashed_id)
                .expect("every client has a counter") += 1;
        }

        let global = &state.model;
        let results: Vec<(Vec<f64>, f64, Vec<EmissionRecord>)> = selected
            .par_iter()
            .map(|&i| {
                let c = &clients[i as usize];
                let update = local_update(global, seed, round, i);
                let seconds = config
                    .workload
                    .training_seconds(c.local_rounds, c.dataset_size, config.model_size);
                let mut records = vec![track_phase(&c.profile, Phase::Training, round, &config.energy_model, seconds)?];
                if communicate {
                    records.push(track_communication(&c.profile, round, &config.energy_model, exchanged)?);
                }
                Ok((update, seconds, records))
            })
            .collect::<Result<_>>()?;

        // Round barrier: aggregation starts once every selected client reported.
        let mut updates = Vec::with_capacity(results.len());
        let mut round_records = Vec::with_capacity(results.len() + 1);
        let mut wait = 0.0f64;
        for (&i, (update, seconds, records)) in selected.iter().zip(results) {
            training_time[i as usize] += seconds;
            wait = wait.max(seconds);
            updates.push(update);
            round_records.extend(records);
        }
        state.model = aggregate_model(&updates)?;
        let agg_seconds = config.workload.aggregation_seconds(updates.len(), config.model_size);
        round_records.push(track_aggregation(&server, round, &config.energy_model, agg_seconds, wait)?);
        if communicate {
            round_records.push(track_communication(&server, round, &config.energy_model, exchanged * m as f64)?);
        }

        round_records.iter().for_each(|r| state.server_totals.add(r));
        state.emissions.extend(round_records);
        state.selection_history.push(selected);
        state.round = round;
    }

    let rounds = config.total_rounds as f64;
    let stats: BTreeMap<String, ClientStatistics> = clients
        .iter()
        .zip(class_balance)
        .zip(&training_time)
        .map(|((c, balance), time)| {
            let count = state.selection_counts[&c.hashed_id];
            let stat = ClientStatistics {
                participation_rate: count as f64 / rounds,
                avg_training_time_s: if count > 0 { time / count as f64 } else { 0.0 },
                dataset_size: c.dataset_size.round() as u64,
                class_balance: balance,
            };
            (c.hashed_id.clone(), stat)
        })
        .collect();
    let k = stats.len() as f64;
    let statistics = RunStatistics {
        mean_participation_rate: stats.values().map(|s| s.participation_rate).sum::<f64>() / k,
        mean_training_time_s: stats.values().map(|s| s.avg_training_time_s).sum::<f64>() / k,
        clients: stats,
        clever_score: None,
        feature_importance: None,
    };
    let evaluation = Evaluation {
        clients_evaluated: n,
        model_parameters: state.model.len() as u64,
        model_l2_norm: state.model.iter().map(|w| w * w).sum::<f64>().sqrt(),
    };

    Ok(RunOutcome {
        state,
        statistics,
        evaluation,
    })
}
