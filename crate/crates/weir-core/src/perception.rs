//! Observation streams and token activation.
//!
//! A stream is the abstracted output of an on-device perception model: per
//! frame, a bag of feature tokens and context tokens plus the size the raw
//! frame would occupy. Activation grounds those tokens in the knowledge
//! graph by exact label match; tokens that match nothing are carried along
//! unmatched so the cloud can still reason about them later.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, NodeKind};

pub const STREAM_FORMAT: &str = "stream";
pub const STREAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub obs_id: String,
    pub slot: u64,
    pub site: String,
    #[serde(default)]
    pub feature_tokens: Vec<String>,
    #[serde(default)]
    pub context_tokens: Vec<String>,
    /// Ground-truth entity, present only in labeled evaluation streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_entity: Option<String>,
    /// Size of the raw frame this record stands in for.
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ObservationStream {
    pub records: Vec<ObservationRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamHeader {
    format: String,
    version: u32,
}

impl ObservationStream {
    /// Parse a line-delimited stream: one header line, then one record per
    /// line. Slot indices must be non-decreasing and obs ids unique; any
    /// violation or malformed line is reported with its line number.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| Error::schema(origin, "empty stream file"))?;
        let header: StreamHeader = serde_json::from_str(header_line).map_err(|e| Error::Line {
            path: origin.to_string(),
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.format != STREAM_FORMAT || header.version != STREAM_FORMAT_VERSION {
            return Err(Error::Line {
                path: origin.to_string(),
                line: 1,
                message: format!(
                    "expected {{\"format\":\"{STREAM_FORMAT}\",\"version\":{STREAM_FORMAT_VERSION}}}, found format `{}` version {}",
                    header.format, header.version
                ),
            });
        }
        let mut records: Vec<ObservationRecord> = Vec::new();
        let mut seen_ids: BTreeSet<String> = BTreeSet::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let record: ObservationRecord =
                serde_json::from_str(line).map_err(|e| Error::Line {
                    path: origin.to_string(),
                    line: lineno,
                    message: e.to_string(),
                })?;
            if let Some(prev) = records.last() {
                if record.slot < prev.slot {
                    return Err(Error::Line {
                        path: origin.to_string(),
                        line: lineno,
                        message: format!(
                            "slot {} decreases below previous slot {}",
                            record.slot, prev.slot
                        ),
                    });
                }
            }
            if !seen_ids.insert(record.obs_id.clone()) {
                return Err(Error::Line {
                    path: origin.to_string(),
                    line: lineno,
                    message: format!("duplicate obs_id `{}`", record.obs_id),
                });
            }
            records.push(record);
        }
        Ok(ObservationStream { records })
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"format\":\"{STREAM_FORMAT}\",\"version\":{STREAM_FORMAT_VERSION}}}\n"
        ));
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn total_payload_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.payload_bytes).sum()
    }
}

/// Grounded activation: node ids, split by kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActivationSet {
    pub a_feat: BTreeSet<String>,
    pub a_ctx: BTreeSet<String>,
}

impl ActivationSet {
    pub fn seeds(&self) -> BTreeSet<String> {
        self.a_feat.union(&self.a_ctx).cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.a_feat.is_empty() && self.a_ctx.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActivationOutcome {
    pub activation: ActivationSet,
    /// Feature tokens with no matching attribute label.
    pub unmatched_feat: Vec<String>,
    /// Context tokens with no matching context label.
    pub unmatched_ctx: Vec<String>,
    /// Attribute ids removed by simulated perception dropout.
    pub dropped: Vec<String>,
}

impl ActivationOutcome {
    /// The evidence that survives on the device: labels of everything still
    /// activated plus the tokens nothing matched. This is what an escalation
    /// packet carries.
    pub fn surviving_feature_tokens(&self, graph: &KnowledgeGraph) -> Vec<String> {
        let mut tokens: BTreeSet<String> = self.unmatched_feat.iter().cloned().collect();
        for id in &self.activation.a_feat {
            if let Some(node) = graph.node(id) {
                tokens.insert(node.label.clone());
            }
        }
        tokens.into_iter().collect()
    }

    pub fn surviving_context_tokens(&self, graph: &KnowledgeGraph) -> Vec<String> {
        let mut tokens: BTreeSet<String> = self.unmatched_ctx.iter().cloned().collect();
        for id in &self.activation.a_ctx {
            if let Some(node) = graph.node(id) {
                tokens.insert(node.label.clone());
            }
        }
        tokens.into_iter().collect()
    }
}

/// Match a record's tokens against the graph by exact label comparison.
/// Feature tokens activate attribute nodes, context tokens activate context
/// nodes; one token activates every node sharing its label. With `p_drop`
/// greater than zero, each matched attribute is then independently dropped
/// with that probability (deterministic given the caller's seeded RNG,
/// drawing in sorted id order).
pub fn activate<R: Rng>(
    graph: &KnowledgeGraph,
    record: &ObservationRecord,
    p_drop: f64,
    rng: &mut R,
) -> ActivationOutcome {
    let mut out = ActivationOutcome::default();
    let feat_tokens: BTreeSet<&String> = record.feature_tokens.iter().collect();
    let ctx_tokens: BTreeSet<&String> = record.context_tokens.iter().collect();
    for token in feat_tokens {
        let mut hit = false;
        for (node, _) in graph.nodes() {
            if node.kind == NodeKind::Attribute && &node.label == token {
                out.activation.a_feat.insert(node.id.clone());
                hit = true;
            }
        }
        if !hit {
            out.unmatched_feat.push(token.clone());
        }
    }
    for token in ctx_tokens {
        let mut hit = false;
        for (node, _) in graph.nodes() {
            if node.kind == NodeKind::Context && &node.label == token {
                out.activation.a_ctx.insert(node.id.clone());
                hit = true;
            }
        }
        if !hit {
            out.unmatched_ctx.push(token.clone());
        }
    }
    if p_drop > 0.0 {
        let ids: Vec<String> = out.activation.a_feat.iter().cloned().collect();
        for id in ids {
            if rng.random::<f64>() < p_drop {
                out.activation.a_feat.remove(&id);
                out.dropped.push(id);
            }
        }
    }
    out
}
