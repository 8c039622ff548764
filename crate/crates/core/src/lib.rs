//! Sustainability and trustworthiness scoring for federated-learning setups.
//!
//! The crate is split along the data flow of an assessment:
//!
//! - [`score`]: normalization rules and the weighted metric → notion → pillar → trust tree.
//! - [`refdata`]: bundled grid-intensity, processor and address-mapping tables.
//! - [`sustainability`]: the ten raw sustainability metrics of a [`FederationConfig`].
//! - [`emissions`]: TDP-based energy and CO₂eq estimates per federation phase.
//! - [`fedsim`]: a deterministic federation run (sampling, pseudo-training, aggregation).
//! - [`report`]: FactSheet bookkeeping and the canonical `trust_report.json`.
//! - [`assess`]: the glue used by the CLI (`score`, `simulate`, `compare`).

pub mod assess;
pub mod config;
pub mod emissions;
pub mod error;
pub mod fedsim;
pub mod refdata;
pub mod report;
pub mod rng;
pub mod score;
pub mod sustainability;

pub use config::FederationConfig;
pub use error::{Error, ErrorKind, Result};
