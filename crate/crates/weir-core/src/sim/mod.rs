//! The discrete-event lifecycle engine and its run artifacts.
//!
//! Each slot advances through a fixed order: harvest and base load hit the
//! battery, frames arriving in the slot are assessed (possibly queueing
//! insight packets), the uplink policy transmits and the cloud resolves
//! what was sent, then due patches are delivered on downlink contact and
//! the storage cap is enforced. State of charge is sampled at the end of
//! the slot. Two runs of the same configuration produce byte-identical
//! artifacts.

mod events;
mod metrics;
mod scenario;

pub use events::{Event, SlotRow, EVENTS_FORMAT, EVENTS_FORMAT_VERSION};
pub use metrics::{score_entities, EntityScore, RunMetrics};
pub use scenario::{
    CloudSection, EnergySection, PerceptionSection, PowerSection, QueueSection, Scenario,
    SimConfig, SCENARIO_FORMAT_VERSION,
};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{AnomalyRecord, Cloud, Resolution};
use crate::error::{Error, Result};
use crate::eviction::{self, enforce_eviction, CapacityMetric};
use crate::graph::{KnowledgeGraph, KnowledgePatch};
use crate::perception::activate;
use crate::power::{energy_budget, lolp, BatteryState};
use crate::scheduler::{transmit, InsightQueue};
use crate::trigger::{evaluate_with, TriggerDecision};

/// Identity of the inputs a run saw, stamped into its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStamp {
    pub name: String,
    pub seed: u64,
    pub horizon_slots: u64,
    pub slot_minutes: u32,
    pub tau_trigger: f64,
    pub policy: String,
    pub graph_sha256: String,
    pub stream_sha256: String,
    pub trace_sha256: String,
}

/// The persisted half of a run: what `run_summary.toml` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioStamp,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stamp: ScenarioStamp,
    pub metrics: RunMetrics,
    pub slot_rows: Vec<SlotRow>,
    pub events: Vec<Event>,
    pub anomalies: Vec<AnomalyRecord>,
    pub final_graph: KnowledgeGraph,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            scenario: self.stamp.clone(),
            metrics: self.metrics.clone(),
        }
    }

    pub fn summary_toml(&self) -> Result<String> {
        toml::to_string(&self.summary()).map_err(|e| Error::schema("run_summary", e))
    }

    pub fn slots_csv(&self) -> String {
        let mut out = String::from(SlotRow::CSV_HEADER);
        out.push('\n');
        for row in &self.slot_rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn events_jsonl(&self) -> Result<String> {
        let mut out = format!(
            "{{\"format\":\"{EVENTS_FORMAT}\",\"version\":{EVENTS_FORMAT_VERSION}}}\n"
        );
        for event in &self.events {
            let line = serde_json::to_string(event)
                .map_err(|e| Error::schema("events", e))?;
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn anomalies_jsonl(&self) -> Result<String> {
        let mut out = String::from("{\"format\":\"anomalies\",\"version\":1}\n");
        for record in &self.anomalies {
            let line = serde_json::to_string(record)
                .map_err(|e| Error::schema("anomalies", e))?;
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }

    /// Write the full artifact set into a directory.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        let write = |name: &str, contents: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(path.display(), e))
        };
        write("run_summary.toml", self.summary_toml()?)?;
        write("slots.csv", self.slots_csv())?;
        write("events.jsonl", self.events_jsonl()?)?;
        write("anomalies.jsonl", self.anomalies_jsonl()?)?;
        write("final_graph.toml", self.final_graph.save())?;
        Ok(())
    }
}

struct PendingPatch {
    ready_at: u64,
    seq: u64,
    obs_id: String,
    source: &'static str,
    patch: KnowledgePatch,
}

/// Execute one scenario end to end.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let power = &config.power;
    let slots_per_day = config.slots_per_day();

    let mut graph = config.graph.clone();
    let mut cloud = Cloud::new(
        config.master.clone(),
        config.script.clone(),
        config.tau_trigger,
        config.context_support,
    );
    let mut battery = BatteryState::new(power.initial_soc_wh, power.capacity_wh);
    let mut queue = InsightQueue::new(config.queue_max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut events: Vec<Event> = Vec::new();
    let mut slot_rows: Vec<SlotRow> = Vec::with_capacity(config.horizon_slots as usize);
    let mut soc_history: Vec<f64> = Vec::with_capacity(config.horizon_slots as usize);
    let mut pending: Vec<PendingPatch> = Vec::new();
    let mut seq = 0u64;
    let mut labeled: Vec<(String, Option<String>)> = Vec::new();

    let mut frames_total = 0u64;
    let mut frames_insight = 0u64;
    let mut packets_sent = 0u64;
    let mut packets_dropped = 0u64;
    let mut bytes_uplinked = 0u64;
    let mut harvested = 0.0f64;
    let mut wasted = 0.0f64;
    let mut base_nominal = 0.0f64;
    let mut tx_nominal = 0.0f64;
    let mut link_nominal = 0.0f64;
    let mut unmet = 0.0f64;
    let mut res_master = 0u64;
    let mut res_expert = 0u64;
    let mut res_anomaly = 0u64;
    let mut patches_delivered = 0u64;
    let mut evictions = 0u64;
    let mut min_soc = f64::INFINITY;

    let records = &config.stream.records;
    let mut cursor = 0usize;

    for slot in 0..config.horizon_slots {
        // Harvest, then the always-on sensing load.
        let harvest = config.trace.values[slot as usize];
        harvested += harvest;
        let before = battery.soc_wh;
        battery.soc_wh = (before + harvest).min(battery.capacity_wh);
        wasted += before + harvest - battery.soc_wh;
        let before = battery.soc_wh;
        battery.soc_wh = (before - power.base_load_wh).max(0.0);
        base_nominal += power.base_load_wh;
        unmet += power.base_load_wh - (before - battery.soc_wh);

        // Phase 1: assess every frame arriving this slot.
        let mut frames_this = 0u32;
        let mut insights_this = 0u32;
        while cursor < records.len() && records[cursor].slot == slot {
            let record = &records[cursor];
            cursor += 1;
            let outcome = activate(&graph, record, config.p_drop, &mut rng);
            let (decision, assessment) = evaluate_with(
                &mut graph,
                record,
                &outcome,
                config.tau_trigger,
                slot,
                config.context_support,
            )?;
            frames_total += 1;
            frames_this += 1;
            let (decision_name, predicted) = match &decision {
                TriggerDecision::Routine { predicted, .. } => ("routine", predicted.clone()),
                TriggerDecision::Insight { .. } => ("insight", None),
            };
            if let Some(truth) = &record.true_entity {
                labeled.push((truth.clone(), predicted.clone()));
            }
            events.push(Event::Frame {
                slot,
                obs_id: record.obs_id.clone(),
                site: record.site.clone(),
                decision: decision_name.to_string(),
                entropy: assessment.entropy,
                sentinel: assessment.sentinel,
                predicted,
                true_entity: record.true_entity.clone(),
                scores: assessment.scores.scores.clone(),
                excluded: assessment.scores.excluded.iter().cloned().collect(),
                unmatched_feat: outcome.unmatched_feat.clone(),
                unmatched_ctx: outcome.unmatched_ctx.clone(),
                dropped_nodes: outcome.dropped.clone(),
            });
            if let TriggerDecision::Insight { packet } = decision {
                frames_insight += 1;
                insights_this += 1;
                if let Some(dropped) = queue.enqueue(packet) {
                    packets_dropped += 1;
                    events.push(Event::QueueDrop {
                        slot,
                        obs_id: dropped.obs_id,
                        entropy: dropped.entropy,
                    });
                }
            }
        }

        // Phase 2: uplink and cloud resolution.
        let pre_tx_soc = battery.soc_wh;
        let (report, sent) = transmit(
            &mut queue,
            &mut battery,
            power.b_safe_wh,
            power.e_pkt_wh,
            &config.policy,
            slot,
            slots_per_day,
        )?;
        tx_nominal += report.energy_spent_wh;
        link_nominal += report.link_load_wh;
        unmet += report.energy_spent_wh + report.link_load_wh - (pre_tx_soc - battery.soc_wh);
        packets_sent += report.k_selected as u64;
        bytes_uplinked += report.bytes_sent;
        if report.k_selected > 0 {
            events.push(Event::Transmit {
                slot,
                k: report.k_selected,
                obs_ids: report.packets_sent.clone(),
                energy_wh: report.energy_spent_wh,
                bytes: report.bytes_sent,
            });
        }
        for packet in &sent {
            let resolution = cloud.resolve(packet)?;
            let (outcome_name, predicted, rule_index, community, ready_at) = match resolution {
                Resolution::MasterPatch { patch, predicted } => {
                    res_master += 1;
                    let community = patch.community_id.clone();
                    pending.push(PendingPatch {
                        ready_at: slot,
                        seq,
                        obs_id: packet.obs_id.clone(),
                        source: "master",
                        patch,
                    });
                    ("master_patch", Some(predicted), None, Some(community), Some(slot))
                }
                Resolution::ExpertPatch { patch, rule_index } => {
                    res_expert += 1;
                    let ready = slot + config.expert_delay_slots;
                    let community = patch.community_id.clone();
                    pending.push(PendingPatch {
                        ready_at: ready,
                        seq,
                        obs_id: packet.obs_id.clone(),
                        source: "expert",
                        patch,
                    });
                    ("expert_patch", None, Some(rule_index), Some(community), Some(ready))
                }
                Resolution::Anomaly { .. } => {
                    res_anomaly += 1;
                    ("anomaly", None, None, None, None)
                }
            };
            seq += 1;
            events.push(Event::Resolved {
                slot,
                obs_id: packet.obs_id.clone(),
                outcome: outcome_name.to_string(),
                predicted,
                rule_index,
                community,
                ready_at,
            });
        }

        // Phase 3: deliver due patches while the link is up, then enforce
        // the storage cap.
        let mut delivered_this = 0u32;
        if !pending.is_empty()
            && config
                .policy
                .contact(&battery, power.b_safe_wh, power.e_pkt_wh, slot, slots_per_day)
        {
            let mut due: Vec<PendingPatch> = Vec::new();
            let mut later: Vec<PendingPatch> = Vec::new();
            for p in pending.drain(..) {
                if p.ready_at <= slot {
                    due.push(p);
                } else {
                    later.push(p);
                }
            }
            pending = later;
            due.sort_by(|a, b| (a.ready_at, a.seq).cmp(&(b.ready_at, b.seq)));
            for p in due {
                let integration = graph.integrate_patch(&p.patch, slot)?;
                patches_delivered += 1;
                delivered_this += 1;
                events.push(Event::PatchDelivered {
                    slot,
                    community: integration.community,
                    source: p.source.to_string(),
                    issued_at: p.patch.issued_at,
                    obs_id: p.obs_id,
                    replaced: integration.replaced,
                    added_nodes: integration.added_nodes.len(),
                    removed_nodes: integration.removed_nodes.len(),
                    added_edges: integration.added_edges.len(),
                    removed_edges: integration.removed_edges.len(),
                });
            }
        }

        let mut evicted_this = 0u32;
        let usage_now = match &config.capacity {
            Some(cap) => {
                let report = enforce_eviction(&mut graph, cap)?;
                for victim in &report.evicted {
                    evictions += 1;
                    evicted_this += 1;
                    events.push(Event::Eviction {
                        slot,
                        community: victim.id.clone(),
                        last_used: victim.last_used,
                        size: victim.size,
                    });
                }
                report.usage_after
            }
            None => eviction::usage(&graph, CapacityMetric::NodeCount),
        };

        min_soc = min_soc.min(battery.soc_wh);
        soc_history.push(battery.soc_wh);
        slot_rows.push(SlotRow {
            slot,
            harvest_wh: harvest,
            soc_wh: battery.soc_wh,
            budget_wh: energy_budget(&battery, power.b_safe_wh),
            frames: frames_this,
            insights: insights_this,
            tx_k: report.k_selected as u32,
            queue_len: queue.len() as u32,
            usage: usage_now,
            delivered: delivered_this,
            evicted: evicted_this,
        });
    }

    let lolp_value = lolp(&soc_history, power.lolp_threshold_wh)?;
    let (per_entity, macro_f1, correct) = score_entities(&labeled);
    let bytes_observed = config.stream.total_payload_bytes();
    let metrics = RunMetrics {
        slots: config.horizon_slots,
        frames_total,
        frames_routine: frames_total - frames_insight,
        frames_insight,
        insight_rate: metrics::fraction(frames_insight, frames_total),
        packets_sent,
        packets_dropped,
        queue_len_final: queue.len() as u64,
        bytes_observed,
        bytes_uplinked,
        uplink_fraction: metrics::fraction(bytes_uplinked, bytes_observed),
        energy_harvested_wh: harvested,
        energy_wasted_wh: wasted,
        energy_base_load_wh: base_nominal,
        energy_tx_wh: tx_nominal,
        energy_link_wh: link_nominal,
        energy_unmet_wh: unmet,
        soc_initial_wh: power.initial_soc_wh,
        soc_final_wh: battery.soc_wh,
        min_soc_wh: min_soc,
        lolp: lolp_value,
        lolp_threshold_wh: power.lolp_threshold_wh,
        resolutions_master: res_master,
        resolutions_expert: res_expert,
        resolutions_anomaly: res_anomaly,
        patches_delivered,
        patches_pending_final: pending.len() as u64,
        evictions,
        labeled_frames: labeled.len() as u64,
        correct_predictions: correct,
        accuracy: metrics::fraction(correct, labeled.len() as u64),
        macro_f1,
        per_entity,
    };
    let stamp = ScenarioStamp {
        name: config.name.clone(),
        seed: config.seed,
        horizon_slots: config.horizon_slots,
        slot_minutes: config.slot_minutes,
        tau_trigger: config.tau_trigger,
        policy: policy_name(&config.policy).to_string(),
        graph_sha256: config.graph_sha256.clone(),
        stream_sha256: config.stream_sha256.clone(),
        trace_sha256: config.trace_sha256.clone(),
    };
    Ok(RunOutput {
        stamp,
        metrics,
        slot_rows,
        events,
        anomalies: cloud.anomalies().to_vec(),
        final_graph: graph,
    })
}

fn policy_name(policy: &crate::scheduler::UplinkPolicy) -> &'static str {
    match policy {
        crate::scheduler::UplinkPolicy::Adaptive => "adaptive",
        crate::scheduler::UplinkPolicy::FixedWindow { .. } => "fixed_window",
        crate::scheduler::UplinkPolicy::AlwaysOn { .. } => "always_on",
    }
}

// ----------------------------------------------------------------------
// Run comparison
// ----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub identical: bool,
    /// True when the runs saw different inputs (any hash differs), which
    /// makes metric differences expected rather than a determinism failure.
    pub input_mismatch: bool,
    /// Dotted key paths that differ, with both values.
    pub differences: Vec<String>,
}

/// Compare two run summaries field by field.
pub fn compare_summaries(a_text: &str, b_text: &str) -> Result<ComparisonReport> {
    let a: toml::Value =
        toml::from_str(a_text).map_err(|e| Error::NotComparable(format!("first summary: {e}")))?;
    let b: toml::Value =
        toml::from_str(b_text).map_err(|e| Error::NotComparable(format!("second summary: {e}")))?;
    let mut differences = Vec::new();
    diff_values("", &a, &b, &mut differences);
    let input_mismatch = differences.iter().any(|d| d.contains("sha256"));
    Ok(ComparisonReport {
        identical: differences.is_empty(),
        input_mismatch,
        differences,
    })
}

fn diff_values(path: &str, a: &toml::Value, b: &toml::Value, out: &mut Vec<String>) {
    match (a, b) {
        (toml::Value::Table(ta), toml::Value::Table(tb)) => {
            let keys: std::collections::BTreeSet<&String> =
                ta.keys().chain(tb.keys()).collect();
            for key in keys {
                let sub = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match (ta.get(key), tb.get(key)) {
                    (Some(va), Some(vb)) => diff_values(&sub, va, vb, out),
                    (Some(va), None) => out.push(format!("{sub}: {va} vs <absent>")),
                    (None, Some(vb)) => out.push(format!("{sub}: <absent> vs {vb}")),
                    (None, None) => unreachable!(),
                }
            }
        }
        _ if a == b => {}
        _ => out.push(format!("{path}: {a} vs {b}")),
    }
}
