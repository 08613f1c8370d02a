//! Deterministic simulator for an edge/cloud knowledge-adaptation lifecycle.
//!
//! An off-grid monitoring station keeps a small typed knowledge graph on the
//! device, classifies incoming observation frames against it, and escalates
//! only the ambiguous ones. The crate models the full loop:
//!
//! - [`graph`]: the community-partitioned knowledge graph, its on-disk
//!   format, and atomic patch integration
//! - [`perception`]: observation streams and token-to-node activation
//! - [`trigger`]: support scoring, softmax distribution, entropy, and the
//!   routine/insight decision
//! - [`power`]: battery bookkeeping, energy budgets, harvest traces, LOLP
//! - [`scheduler`]: the insight queue and the uplink transmission policies
//! - [`eviction`]: community-level LRU eviction under a capacity cap
//! - [`cloud`]: simulated cloud-side resolution (master graph, expert
//!   script, anomaly log) and patch manufacture
//! - [`sim`]: the slot-by-slot lifecycle engine, scenario files, run
//!   outputs, and run comparison
//!
//! Everything is deterministic: the only randomness is perception dropout
//! and trace jitter, both driven by seeds recorded in the scenario. Two runs
//! of the same scenario with the same seed produce byte-identical outputs.

pub mod cloud;
pub mod error;
pub mod eviction;
pub mod graph;
pub mod perception;
pub mod power;
pub mod scheduler;
pub mod sim;
pub mod trigger;

pub use cloud::{AnomalyRecord, Cloud, ExpertRule, ExpertScript, Resolution};
pub use error::{Error, ErrorCategory, Result};
pub use eviction::{CapacityConfig, CapacityMetric, EvictionReport};
pub use graph::{
    Community, Edge, EdgeKey, EdgeKind, IntegrationReport, KnowledgeGraph, KnowledgePatch, Node,
    NodeKind,
};
pub use perception::{ActivationOutcome, ActivationSet, ObservationRecord, ObservationStream};
pub use power::{BatteryState, EnergyTrace, HarvestShape, PowerConfig, TraceGenerator};
pub use scheduler::{InsightQueue, TransmitReport, UplinkPolicy};
pub use sim::{RunMetrics, RunOutput, RunSummary, Scenario, ScenarioStamp, SimConfig};
pub use trigger::{EntityDistribution, InsightPacket, SupportScores, TriggerDecision};
