//! Scenario files: the declarative description of one simulation run, and
//! its resolution into a fully loaded, validated configuration.
//!
//! A scenario is a TOML document referencing its assets (graph, stream,
//! harvest trace or generator, optional expert script) by paths relative to
//! the scenario file. `Scenario` mirrors the document; `SimConfig` is the
//! loaded form the engine runs on.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::cloud::{ExpertScript, DEFAULT_EXPERT_DELAY_SLOTS};
use crate::error::{Error, Result};
use crate::eviction::{self, CapacityConfig};
use crate::graph::KnowledgeGraph;
use crate::perception::ObservationStream;
use crate::power::{EnergyTrace, PowerConfig, TraceGenerator};
use crate::scheduler::{UplinkPolicy, DEFAULT_QUEUE_MAX_LEN};
use crate::trigger::DEFAULT_TAU_TRIGGER;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

fn default_tau() -> f64 {
    DEFAULT_TAU_TRIGGER
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub horizon_slots: u64,
    pub slot_minutes: u32,
    pub seed: u64,
    #[serde(default = "default_tau")]
    pub tau_trigger: f64,
    /// Initial station graph.
    pub graph: String,
    /// Cloud-side graph; defaults to the station's initial graph.
    #[serde(default)]
    pub master_graph: Option<String>,
    pub stream: String,
    pub energy: EnergySection,
    pub power: PowerSection,
    pub policy: UplinkPolicy,
    #[serde(default)]
    pub queue: QueueSection,
    #[serde(default)]
    pub cloud: CloudSection,
    #[serde(default)]
    pub perception: PerceptionSection,
    #[serde(default)]
    pub capacity: Option<CapacityConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Exactly one of `trace` (path) or `generator` (inline config).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    #[serde(default)]
    pub trace: Option<String>,
    #[serde(default)]
    pub generator: Option<TraceGenerator>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub capacity_wh: f64,
    pub initial_soc_wh: f64,
    /// Scheduler reserve, absolute. Exactly one of this or
    /// `b_safe_percent`.
    #[serde(default)]
    pub b_safe_wh: Option<f64>,
    /// Scheduler reserve as a percentage of capacity.
    #[serde(default)]
    pub b_safe_percent: Option<f64>,
    pub base_load_wh: f64,
    pub e_pkt_wh: f64,
    /// Critical level for loss-of-load accounting; defaults to the reserve.
    #[serde(default)]
    pub lolp_threshold_wh: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSection {
    pub max_len: usize,
}

impl Default for QueueSection {
    fn default() -> Self {
        QueueSection {
            max_len: DEFAULT_QUEUE_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSection {
    #[serde(default)]
    pub expert_script: Option<String>,
    #[serde(default = "default_expert_delay")]
    pub expert_delay_slots: u64,
}

fn default_expert_delay() -> u64 {
    DEFAULT_EXPERT_DELAY_SLOTS
}

impl Default for CloudSection {
    fn default() -> Self {
        CloudSection {
            expert_script: None,
            expert_delay_slots: DEFAULT_EXPERT_DELAY_SLOTS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionSection {
    #[serde(default)]
    pub p_drop: f64,
    #[serde(default)]
    pub context_support: bool,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        PerceptionSection {
            p_drop: 0.0,
            context_support: false,
        }
    }
}

/// Fully loaded run configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub name: String,
    pub horizon_slots: u64,
    pub slot_minutes: u32,
    pub seed: u64,
    pub tau_trigger: f64,
    pub graph: KnowledgeGraph,
    pub master: KnowledgeGraph,
    pub stream: ObservationStream,
    pub trace: EnergyTrace,
    pub power: PowerConfig,
    pub policy: UplinkPolicy,
    pub queue_max_len: usize,
    pub script: Option<ExpertScript>,
    pub expert_delay_slots: u64,
    pub p_drop: f64,
    pub context_support: bool,
    pub capacity: Option<CapacityConfig>,
    /// Hashes of the canonical serializations, stamped into the run
    /// summary so two runs can prove they saw the same inputs.
    pub graph_sha256: String,
    pub stream_sha256: String,
    pub trace_sha256: String,
}

impl SimConfig {
    pub fn slots_per_day(&self) -> u64 {
        1440 / self.slot_minutes as u64
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

impl Scenario {
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::schema(origin, e.to_string()))?;
        if scenario.version != SCENARIO_FORMAT_VERSION {
            return Err(Error::schema(
                origin,
                format!(
                    "unsupported scenario version {} (expected {SCENARIO_FORMAT_VERSION})",
                    scenario.version
                ),
            ));
        }
        scenario.base_dir = base_dir.to_path_buf();
        Ok(scenario)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&origin, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, &origin, base)
    }

    fn reject(&self, message: impl Into<String>) -> Error {
        Error::Scenario(format!("{}: {}", self.name, message.into()))
    }

    /// Load every referenced asset and cross-check the whole configuration.
    pub fn resolve(&self) -> Result<SimConfig> {
        if self.name.trim().is_empty() {
            return Err(Error::Scenario("scenario name is empty".to_string()));
        }
        if self.horizon_slots == 0 {
            return Err(self.reject("horizon_slots must be at least 1"));
        }
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return Err(self.reject(format!(
                "slot_minutes {} must evenly divide a day",
                self.slot_minutes
            )));
        }
        if !self.tau_trigger.is_finite() || self.tau_trigger < 0.0 {
            return Err(self.reject("tau_trigger must be finite and non-negative"));
        }
        let slots_per_day = 1440 / self.slot_minutes as u64;

        let power = self.resolve_power()?;
        let policy = self.resolve_policy(slots_per_day)?;

        if !(0.0..=1.0).contains(&self.perception.p_drop) {
            return Err(self.reject("perception.p_drop must lie in [0, 1]"));
        }
        if self.queue.max_len == 0 {
            return Err(self.reject("queue.max_len must be at least 1"));
        }

        let graph = KnowledgeGraph::load_path(&self.base_dir.join(&self.graph))?;
        let master = match &self.master_graph {
            Some(p) => KnowledgeGraph::load_path(&self.base_dir.join(p))?,
            None => graph.clone(),
        };
        let stream = ObservationStream::load_path(&self.base_dir.join(&self.stream))?;
        if let Some(last) = stream.records.last() {
            if last.slot >= self.horizon_slots {
                return Err(self.reject(format!(
                    "stream runs to slot {} but the horizon is {} slots",
                    last.slot, self.horizon_slots
                )));
            }
        }

        let trace = self.resolve_trace()?;
        if (trace.values.len() as u64) < self.horizon_slots {
            return Err(self.reject(format!(
                "harvest trace covers {} slots but the horizon is {}",
                trace.values.len(),
                self.horizon_slots
            )));
        }
        if trace.slot_minutes != self.slot_minutes {
            return Err(self.reject(format!(
                "harvest trace uses {}-minute slots, scenario uses {}",
                trace.slot_minutes, self.slot_minutes
            )));
        }

        let script = match &self.cloud.expert_script {
            Some(p) => Some(ExpertScript::load_path(&self.base_dir.join(p))?),
            None => None,
        };

        if let Some(cap) = &self.capacity {
            // The cap must be reachable with every unpinned community gone,
            // or eviction is doomed from the start.
            let mut pinned_only = graph.clone();
            let unpinned: Vec<String> = pinned_only
                .communities()
                .filter(|c| !c.pinned)
                .map(|c| c.id.clone())
                .collect();
            for id in unpinned {
                pinned_only.remove_community(&id)?;
            }
            let floor = eviction::usage(&pinned_only, cap.metric);
            if floor > cap.cap {
                return Err(self.reject(format!(
                    "capacity cap {} is below the pinned floor {}",
                    cap.cap, floor
                )));
            }
        }

        let graph_sha256 = sha256_hex(graph.save().as_bytes());
        let stream_sha256 = sha256_hex(stream.save().as_bytes());
        let trace_sha256 = sha256_hex(trace.save().as_bytes());

        Ok(SimConfig {
            name: self.name.clone(),
            horizon_slots: self.horizon_slots,
            slot_minutes: self.slot_minutes,
            seed: self.seed,
            tau_trigger: self.tau_trigger,
            graph,
            master,
            stream,
            trace,
            power,
            policy,
            queue_max_len: self.queue.max_len,
            script,
            expert_delay_slots: self.cloud.expert_delay_slots,
            p_drop: self.perception.p_drop,
            context_support: self.perception.context_support,
            capacity: self.capacity,
            graph_sha256,
            stream_sha256,
            trace_sha256,
        })
    }

    fn resolve_power(&self) -> Result<PowerConfig> {
        let p = &self.power;
        if !(p.capacity_wh > 0.0) {
            return Err(self.reject("power.capacity_wh must be positive"));
        }
        if !(0.0..=p.capacity_wh).contains(&p.initial_soc_wh) {
            return Err(self.reject("power.initial_soc_wh must lie in [0, capacity]"));
        }
        let b_safe_wh = match (p.b_safe_wh, p.b_safe_percent) {
            (Some(v), None) => v,
            (None, Some(pct)) => {
                if !(0.0..=100.0).contains(&pct) {
                    return Err(self.reject("power.b_safe_percent must lie in [0, 100]"));
                }
                p.capacity_wh * pct / 100.0
            }
            _ => {
                return Err(
                    self.reject("set exactly one of power.b_safe_wh or power.b_safe_percent")
                )
            }
        };
        if !(0.0..=p.capacity_wh).contains(&b_safe_wh) {
            return Err(self.reject("reserve must lie in [0, capacity]"));
        }
        if !(p.base_load_wh >= 0.0) {
            return Err(self.reject("power.base_load_wh must be non-negative"));
        }
        if !(p.e_pkt_wh > 0.0) {
            return Err(self.reject("power.e_pkt_wh must be positive"));
        }
        let lolp_threshold_wh = p.lolp_threshold_wh.unwrap_or(b_safe_wh);
        if !(0.0..=p.capacity_wh).contains(&lolp_threshold_wh) {
            return Err(self.reject("power.lolp_threshold_wh must lie in [0, capacity]"));
        }
        Ok(PowerConfig {
            capacity_wh: p.capacity_wh,
            initial_soc_wh: p.initial_soc_wh,
            b_safe_wh,
            base_load_wh: p.base_load_wh,
            e_pkt_wh: p.e_pkt_wh,
            lolp_threshold_wh,
        })
    }

    fn resolve_policy(&self, slots_per_day: u64) -> Result<UplinkPolicy> {
        match &self.policy {
            UplinkPolicy::Adaptive => {}
            UplinkPolicy::FixedWindow {
                start_slot_of_day,
                window_slots,
            } => {
                if *window_slots == 0 {
                    return Err(self.reject("policy.window_slots must be at least 1"));
                }
                if start_slot_of_day + window_slots > slots_per_day {
                    return Err(self.reject(format!(
                        "transmit window [{start_slot_of_day}, {}) does not fit a {} slot day",
                        start_slot_of_day + window_slots,
                        slots_per_day
                    )));
                }
            }
            UplinkPolicy::AlwaysOn { link_load_wh } => {
                if !(*link_load_wh >= 0.0) {
                    return Err(self.reject("policy.link_load_wh must be non-negative"));
                }
            }
        }
        Ok(self.policy.clone())
    }

    fn resolve_trace(&self) -> Result<EnergyTrace> {
        match (&self.energy.trace, &self.energy.generator) {
            (Some(path), None) => EnergyTrace::load_path(&self.base_dir.join(path)),
            (None, Some(gen)) => {
                let mut gen = gen.clone();
                if gen.slots == 0 {
                    gen.slots = self.horizon_slots;
                }
                if gen.slot_minutes == 0 {
                    gen.slot_minutes = self.slot_minutes;
                }
                gen.generate()
            }
            _ => Err(self.reject("set exactly one of energy.trace or energy.generator")),
        }
    }
}
