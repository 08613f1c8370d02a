//! Structural scoring and the routine/insight decision.
//!
//! Given an activation, each candidate entity is scored by summing the
//! weights of support edges from activated attributes (context support is
//! opt-in and off by default). A conflict edge from an activated attribute
//! is a hard veto: the entity scores zero and is excluded outright. The
//! surviving positive scores are turned into a softmax distribution whose
//! Shannon entropy, in nats, is compared against the trigger threshold:
//! at or below it the frame is handled on-device as a routine prediction,
//! above it the frame escalates as an insight packet.
//!
//! An empty candidate set means the station cannot ground the observation
//! at all. That case bypasses the threshold entirely: entropy is pinned to
//! a sentinel strictly above any achievable value, ln(entity count) + 1,
//! and the frame always escalates.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::Result;
use crate::graph::{EdgeKind, KnowledgeGraph, NodeKind, Subgraph};
use crate::perception::{ActivationOutcome, ActivationSet, ObservationRecord};

pub const DEFAULT_TAU_TRIGGER: f64 = 0.6;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SupportScores {
    /// Candidate entity id -> summed support weight (0.0 when excluded).
    pub scores: BTreeMap<String, f64>,
    /// Entities vetoed by a conflict edge from an activated attribute.
    pub excluded: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EntityDistribution {
    /// Softmax over the valid entities only.
    pub probs: BTreeMap<String, f64>,
    /// Entities with positive score and no conflict veto.
    pub valid: BTreeSet<String>,
}

/// Everything the pipeline derived for one frame. Kept around for packets,
/// event logs, and cloud-side re-evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct Assessment {
    pub activation: ActivationSet,
    pub candidates: BTreeSet<String>,
    pub scores: SupportScores,
    pub distribution: EntityDistribution,
    /// Conflict pairs that fired: (activated attribute, vetoed entity).
    pub conflicts: Vec<(String, String)>,
    pub entropy: f64,
    /// True when the valid set was empty and entropy is the sentinel.
    pub sentinel: bool,
    pub argmax: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InsightPacket {
    pub obs_id: String,
    pub slot: u64,
    pub site: String,
    pub entropy: f64,
    /// Evidence tokens that survived on-device perception (labels of
    /// activated nodes plus unmatched tokens), re-groundable on the master.
    pub feature_tokens: Vec<String>,
    pub context_tokens: Vec<String>,
    /// On-device grounding at escalation time.
    pub activation: ActivationSet,
    pub unmatched_feat: Vec<String>,
    pub unmatched_ctx: Vec<String>,
    pub candidate_scores: BTreeMap<String, f64>,
    pub excluded: BTreeSet<String>,
    /// Wire size of this packet's serialized form.
    #[serde(skip)]
    pub size_bytes: u64,
}

#[derive(Debug, Clone)]
pub enum TriggerDecision {
    /// Confident enough to handle locally.
    Routine {
        predicted: Option<String>,
        entropy: f64,
    },
    /// Ambiguous or ungroundable: escalate to the cloud.
    Insight { packet: InsightPacket },
}

impl TriggerDecision {
    pub fn entropy(&self) -> f64 {
        match self {
            TriggerDecision::Routine { entropy, .. } => *entropy,
            TriggerDecision::Insight { packet } => packet.entropy,
        }
    }

    pub fn is_insight(&self) -> bool {
        matches!(self, TriggerDecision::Insight { .. })
    }
}

/// Entropy value reported when nothing can be grounded: strictly above
/// ln(n), the maximum any real distribution over n entities can reach.
pub fn sentinel_entropy(graph: &KnowledgeGraph) -> f64 {
    (graph.entity_count().max(1) as f64).ln() + 1.0
}

/// Sum support weights from activated nodes to each candidate entity in the
/// subgraph, applying conflict vetoes. Context activations contribute
/// weight only when `context_support` is set; conflict edges, which can
/// only originate from attributes, always apply.
pub fn support_scores(
    graph: &KnowledgeGraph,
    sub: &Subgraph,
    activation: &ActivationSet,
    context_support: bool,
) -> SupportScores {
    let mut out = SupportScores::default();
    for id in &sub.nodes {
        if matches!(graph.node(id), Some(n) if n.kind == NodeKind::Entity) {
            out.scores.insert(id.clone(), 0.0);
        }
    }
    for edge in &sub.edges {
        if !out.scores.contains_key(&edge.to) {
            continue;
        }
        match edge.kind {
            EdgeKind::Support { weight } => {
                let active = activation.a_feat.contains(&edge.from)
                    || (context_support && activation.a_ctx.contains(&edge.from));
                if active {
                    *out.scores.get_mut(&edge.to).unwrap() += weight;
                }
            }
            EdgeKind::Conflict => {
                if activation.a_feat.contains(&edge.from) {
                    out.excluded.insert(edge.to.clone());
                }
            }
        }
    }
    for id in &out.excluded {
        out.scores.insert(id.clone(), 0.0);
    }
    out
}

/// Softmax over the entities with positive, unvetoed score. Uses
/// max-subtraction so huge weights cannot overflow.
pub fn entity_distribution(scores: &SupportScores) -> EntityDistribution {
    let mut dist = EntityDistribution::default();
    for (id, s) in &scores.scores {
        if *s > 0.0 && !scores.excluded.contains(id) {
            dist.valid.insert(id.clone());
        }
    }
    if dist.valid.is_empty() {
        return dist;
    }
    let max = dist
        .valid
        .iter()
        .map(|id| scores.scores[id])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut exps: Vec<(String, f64)> = Vec::with_capacity(dist.valid.len());
    for id in &dist.valid {
        let e = (scores.scores[id] - max).exp();
        denom += e;
        exps.push((id.clone(), e));
    }
    for (id, e) in exps {
        dist.probs.insert(id, e / denom);
    }
    dist
}

/// Shannon entropy of the distribution, in nats. Zero for a singleton;
/// the caller handles the empty case via the sentinel.
pub fn structural_entropy(dist: &EntityDistribution) -> f64 {
    -dist
        .probs
        .values()
        .map(|p| if *p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Run the scoring pipeline for one activation without touching any
/// lifecycle state. Ties at the top probability resolve to the
/// lexicographically smallest entity id.
pub fn assess(
    graph: &KnowledgeGraph,
    activation: &ActivationSet,
    context_support: bool,
) -> Result<Assessment> {
    let candidates = graph.candidate_entities(&activation.seeds())?;
    let mut nodes = activation.seeds();
    nodes.extend(candidates.iter().cloned());
    let sub = graph.induced_subgraph(&nodes)?;
    let scores = support_scores(graph, &sub, activation, context_support);
    let conflicts: Vec<(String, String)> = sub
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Conflict && activation.a_feat.contains(&e.from))
        .map(|e| (e.from.clone(), e.to.clone()))
        .collect();
    let distribution = entity_distribution(&scores);
    let (entropy, sentinel, argmax) = if distribution.valid.is_empty() {
        (sentinel_entropy(graph), true, None)
    } else {
        let mut best: Option<(&String, f64)> = None;
        for (id, p) in &distribution.probs {
            if best.map_or(true, |(_, bp)| *p > bp) {
                best = Some((id, *p));
            }
        }
        (
            structural_entropy(&distribution),
            false,
            best.map(|(id, _)| id.clone()),
        )
    };
    Ok(Assessment {
        activation: activation.clone(),
        candidates,
        scores,
        distribution,
        conflicts,
        entropy,
        sentinel,
        argmax,
    })
}

/// Full per-frame evaluation: assess, refresh `last_used` on every
/// community that contributed a node, and decide routine versus insight.
/// An ungroundable frame (empty valid set) always escalates, regardless of
/// the threshold.
pub fn evaluate(
    graph: &mut KnowledgeGraph,
    record: &ObservationRecord,
    outcome: &ActivationOutcome,
    tau_trigger: f64,
    now: u64,
) -> Result<(TriggerDecision, Assessment)> {
    evaluate_with(graph, record, outcome, tau_trigger, now, false)
}

pub fn evaluate_with(
    graph: &mut KnowledgeGraph,
    record: &ObservationRecord,
    outcome: &ActivationOutcome,
    tau_trigger: f64,
    now: u64,
    context_support: bool,
) -> Result<(TriggerDecision, Assessment)> {
    let assessment = assess(graph, &outcome.activation, context_support)?;
    let mut touched: BTreeSet<String> = BTreeSet::new();
    for id in assessment
        .activation
        .seeds()
        .iter()
        .chain(assessment.candidates.iter())
    {
        if let Some(c) = graph.community_of(id) {
            touched.insert(c.to_string());
        }
    }
    for community in &touched {
        graph.touch(community, now)?;
    }
    let decision = if assessment.sentinel || assessment.entropy > tau_trigger {
        let mut packet = InsightPacket {
            obs_id: record.obs_id.clone(),
            slot: record.slot,
            site: record.site.clone(),
            entropy: assessment.entropy,
            feature_tokens: outcome.surviving_feature_tokens(graph),
            context_tokens: outcome.surviving_context_tokens(graph),
            activation: outcome.activation.clone(),
            unmatched_feat: outcome.unmatched_feat.clone(),
            unmatched_ctx: outcome.unmatched_ctx.clone(),
            candidate_scores: assessment.scores.scores.clone(),
            excluded: assessment.scores.excluded.clone(),
            size_bytes: 0,
        };
        packet.size_bytes =
            serde_json::to_string(&packet).expect("packet serializes").len() as u64;
        TriggerDecision::Insight { packet }
    } else {
        TriggerDecision::Routine {
            predicted: assessment.argmax.clone(),
            entropy: assessment.entropy,
        }
    };
    Ok((decision, assessment))
}
