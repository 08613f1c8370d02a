//! Cloud side of the loop: the authoritative master graph, packet
//! resolution, expert curation scripts, and the anomaly log.
//!
//! Resolution of an uplinked packet has three outcomes, tried in order:
//! the master graph already disambiguates the evidence (ship a snapshot of
//! the winning community), an expert rule matches the packet (apply its
//! curated patch to the master first, then forward it), or nobody can
//! explain it (append to the anomaly log and touch nothing).

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, KnowledgePatch};
use crate::perception::{activate, ObservationRecord};
use crate::trigger::{assess, InsightPacket};

pub const DEFAULT_EXPERT_DELAY_SLOTS: u64 = 4;

/// One curation rule: fires when every match token appears among the
/// packet's tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRule {
    pub match_tokens: BTreeSet<String>,
    pub patch: KnowledgePatch,
}

/// Ordered rule list; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpertScript {
    pub rules: Vec<ExpertRule>,
}

pub const SCRIPT_FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDoc {
    version: u32,
    #[serde(default)]
    rules: Vec<RuleDecl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDecl {
    match_tokens: Vec<String>,
    patch: String,
}

impl ExpertScript {
    pub fn new(rules: Vec<ExpertRule>) -> Self {
        ExpertScript { rules }
    }

    /// Load a script file; patch paths are resolved relative to it.
    pub fn load_path(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&origin, e))?;
        let doc: ScriptDoc =
            toml::from_str(&text).map_err(|e| Error::schema(&origin, e.to_string()))?;
        if doc.version != SCRIPT_FORMAT_VERSION {
            return Err(Error::schema(
                &origin,
                format!(
                    "unsupported script version {} (expected {SCRIPT_FORMAT_VERSION})",
                    doc.version
                ),
            ));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut rules = Vec::with_capacity(doc.rules.len());
        for (i, decl) in doc.rules.into_iter().enumerate() {
            if decl.match_tokens.is_empty() {
                return Err(Error::schema(
                    &origin,
                    format!("rule {i} has no match tokens"),
                ));
            }
            let patch = KnowledgePatch::load_path(&base.join(&decl.patch))?;
            rules.push(ExpertRule {
                match_tokens: decl.match_tokens.into_iter().collect(),
                patch,
            });
        }
        Ok(ExpertScript { rules })
    }

    /// Index of the first rule whose tokens are all present.
    pub fn first_match(&self, tokens: &BTreeSet<String>) -> Option<usize> {
        self.rules
            .iter()
            .position(|r| r.match_tokens.is_subset(tokens))
    }
}

/// A packet nobody could explain. Append-only; feeds later curation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub obs_id: String,
    pub slot: u64,
    pub site: String,
    pub feature_tokens: Vec<String>,
    pub context_tokens: Vec<String>,
    /// Tokens with no counterpart in the master graph.
    pub unmatched: Vec<String>,
    /// Ambiguity reported by the station.
    pub edge_entropy: f64,
    /// Ambiguity after re-grounding on the master graph.
    pub master_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    /// The master already disambiguates: snapshot of the winning entity's
    /// community, deliverable immediately.
    MasterPatch {
        patch: KnowledgePatch,
        predicted: String,
    },
    /// An expert rule fired; the master was updated before forwarding.
    ExpertPatch {
        patch: KnowledgePatch,
        rule_index: usize,
    },
    /// Unexplained; logged.
    Anomaly { record: AnomalyRecord },
}

impl Resolution {
    pub fn kind(&self) -> &'static str {
        match self {
            Resolution::MasterPatch { .. } => "master_patch",
            Resolution::ExpertPatch { .. } => "expert_patch",
            Resolution::Anomaly { .. } => "anomaly",
        }
    }
}

/// Simulated cloud endpoint.
#[derive(Debug, Clone)]
pub struct Cloud {
    master: KnowledgeGraph,
    script: Option<ExpertScript>,
    tau: f64,
    context_support: bool,
    anomalies: Vec<AnomalyRecord>,
}

impl Cloud {
    pub fn new(
        master: KnowledgeGraph,
        script: Option<ExpertScript>,
        tau: f64,
        context_support: bool,
    ) -> Self {
        Cloud {
            master,
            script,
            tau,
            context_support,
            anomalies: Vec::new(),
        }
    }

    pub fn master(&self) -> &KnowledgeGraph {
        &self.master
    }

    pub fn anomalies(&self) -> &[AnomalyRecord] {
        &self.anomalies
    }

    /// Full-community snapshot patch from the master, for refetching
    /// previously evicted knowledge.
    pub fn snapshot_patch(&self, community: &str, issued_at: u64) -> Result<KnowledgePatch> {
        KnowledgePatch::snapshot(&self.master, community, issued_at)
    }

    /// Resolve one uplinked packet. Patches are stamped with the packet's
    /// slot; delivery timing is the caller's concern.
    pub fn resolve(&mut self, packet: &InsightPacket) -> Result<Resolution> {
        // Re-ground the raw tokens on the master graph, noise-free.
        let record = ObservationRecord {
            obs_id: packet.obs_id.clone(),
            slot: packet.slot,
            site: packet.site.clone(),
            feature_tokens: packet.feature_tokens.clone(),
            context_tokens: packet.context_tokens.clone(),
            true_entity: None,
            payload_bytes: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let outcome = activate(&self.master, &record, 0.0, &mut rng);
        let assessment = assess(&self.master, &outcome.activation, self.context_support)?;

        if !assessment.sentinel && assessment.entropy <= self.tau {
            let predicted = assessment
                .argmax
                .clone()
                .expect("non-sentinel assessment always has a winner");
            let community = self
                .master
                .community_of(&predicted)
                .ok_or_else(|| Error::UnknownNode(predicted.clone()))?
                .to_string();
            let patch = KnowledgePatch::snapshot(&self.master, &community, packet.slot)?;
            return Ok(Resolution::MasterPatch { patch, predicted });
        }

        let tokens: BTreeSet<String> = packet
            .feature_tokens
            .iter()
            .chain(packet.context_tokens.iter())
            .cloned()
            .collect();
        if let Some(script) = &self.script {
            if let Some(rule_index) = script.first_match(&tokens) {
                let mut patch = script.rules[rule_index].patch.clone();
                patch.issued_at = packet.slot;
                // Master first: the authority must already contain whatever
                // it tells a station.
                self.master.integrate_patch(&patch, packet.slot)?;
                return Ok(Resolution::ExpertPatch { patch, rule_index });
            }
        }

        let mut unmatched = outcome.unmatched_feat.clone();
        unmatched.extend(outcome.unmatched_ctx.iter().cloned());
        unmatched.sort();
        unmatched.dedup();
        let record = AnomalyRecord {
            obs_id: packet.obs_id.clone(),
            slot: packet.slot,
            site: packet.site.clone(),
            feature_tokens: packet.feature_tokens.clone(),
            context_tokens: packet.context_tokens.clone(),
            unmatched,
            edge_entropy: packet.entropy,
            master_entropy: assessment.entropy,
        };
        self.anomalies.push(record.clone());
        Ok(Resolution::Anomaly { record })
    }
}
