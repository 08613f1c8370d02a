//! Shared fixtures and reference implementations for the integration
//! suites. The references deliberately avoid the library's graph and queue
//! machinery: everything is recomputed from flat lists so that an indexing
//! bug in the real code cannot hide in the check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use weir_core::graph::{Edge, KnowledgeGraph, Node, NodeKind};
use weir_core::perception::{activate, ObservationRecord};
use weir_core::power::BatteryState;
use weir_core::scheduler::{select_k, transmit, InsightQueue, UplinkPolicy};
use weir_core::sim::{run, RunOutput, Scenario, SimConfig};
use weir_core::trigger::{assess, InsightPacket};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load_scenario(rel: &str) -> SimConfig {
    let path = scenarios_dir().join(rel);
    let scenario =
        Scenario::load_path(&path).unwrap_or_else(|e| panic!("load {rel}: {e}"));
    scenario
        .resolve()
        .unwrap_or_else(|e| panic!("resolve {rel}: {e}"))
}

pub fn run_bundled(rel: &str) -> RunOutput {
    run(&load_scenario(rel)).unwrap_or_else(|e| panic!("run {rel}: {e}"))
}

/* ---------- random recognition instances ---------- */

pub const FEATURE_POOL: [&str; 8] = [
    "ring", "stripe", "spot", "glare", "plume", "mottle", "chirr", "sheen",
];
pub const CONTEXT_POOL: [&str; 4] = ["dawn", "dusk", "estuary", "upstream"];

/// Flat description of a station graph: plain lists, no adjacency.
#[derive(Debug, Default, Clone)]
pub struct FlatGraph {
    /// (entity id, community id)
    pub entities: Vec<(String, String)>,
    /// (attribute id, label, community id)
    pub attrs: Vec<(String, String, String)>,
    /// (context id, label); contexts always live in the core
    pub contexts: Vec<(String, String)>,
    /// (from, to, weight)
    pub supports: Vec<(String, String, f64)>,
    /// (from, to)
    pub conflicts: Vec<(String, String)>,
}

impl FlatGraph {
    pub fn build(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let mut communities: BTreeSet<&str> = BTreeSet::new();
        for (_, com) in &self.entities {
            communities.insert(com);
        }
        for (_, _, com) in &self.attrs {
            communities.insert(com);
        }
        for com in communities {
            g.add_community(com, false).unwrap();
        }
        for (id, com) in &self.entities {
            let node = Node {
                id: id.clone(),
                kind: NodeKind::Entity,
                label: id.clone(),
            };
            g.add_node(node, com).unwrap();
        }
        for (id, label, com) in &self.attrs {
            let node = Node {
                id: id.clone(),
                kind: NodeKind::Attribute,
                label: label.clone(),
            };
            g.add_node(node, com).unwrap();
        }
        for (id, label) in &self.contexts {
            let node = Node {
                id: id.clone(),
                kind: NodeKind::Context,
                label: label.clone(),
            };
            g.add_node(node, "core").unwrap();
        }
        for (from, to, w) in &self.supports {
            g.add_edge(Edge::support(from, to, *w)).unwrap();
        }
        for (from, to) in &self.conflicts {
            g.add_edge(Edge::conflict(from, to)).unwrap();
        }
        g
    }
}

/// Weights are multiples of 0.25, so score sums are exact in binary and two
/// distinct scores always differ by at least 0.25. That keeps argmax and
/// validity comparisons against the reference free of rounding ambiguity.
/// Instances stay small on purpose: at most 6 entities, 10 attributes and
/// 25 edges, so the flat reference scan is obviously correct by inspection.
pub fn random_flat_graph(rng: &mut ChaCha8Rng) -> FlatGraph {
    let mut flat = FlatGraph::default();
    let n_com = rng.random_range(1..=6usize);
    let mut attr_budget = 10usize;
    for c in 0..n_com {
        let entity = format!("e{c}");
        flat.entities.push((entity.clone(), format!("c{c}")));
        let n_attr = rng.random_range(0..=3usize).min(attr_budget);
        attr_budget -= n_attr;
        for k in 0..n_attr {
            let id = format!("a{c}x{k}");
            let label = FEATURE_POOL[rng.random_range(0..FEATURE_POOL.len())];
            flat.attrs
                .push((id.clone(), label.to_string(), format!("c{c}")));
            let w = 0.25 * rng.random_range(1..=12) as f64;
            flat.supports.push((id.clone(), entity.clone(), w));
            if n_com > 1 && rng.random_bool(0.25) {
                let other = rng.random_range(0..n_com);
                if other != c {
                    let w = 0.25 * rng.random_range(1..=12) as f64;
                    flat.supports.push((id.clone(), format!("e{other}"), w));
                }
            }
        }
    }
    if !flat.attrs.is_empty() {
        for _ in 0..rng.random_range(0..=2usize) {
            let from = flat.attrs[rng.random_range(0..flat.attrs.len())].0.clone();
            let to = flat.entities[rng.random_range(0..flat.entities.len())]
                .0
                .clone();
            if !flat.conflicts.contains(&(from.clone(), to.clone())) {
                flat.conflicts.push((from, to));
            }
        }
    }
    for k in 0..rng.random_range(0..=2usize) {
        let id = format!("ctx{k}");
        let label = CONTEXT_POOL[rng.random_range(0..CONTEXT_POOL.len())];
        flat.contexts.push((id.clone(), label.to_string()));
        let to = flat.entities[rng.random_range(0..flat.entities.len())]
            .0
            .clone();
        let w = 0.25 * rng.random_range(1..=8) as f64;
        flat.supports.push((id, to, w));
    }
    flat
}

/* ---------- trigger reference ---------- */

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAssessment {
    pub candidates: BTreeSet<String>,
    pub scores: BTreeMap<String, f64>,
    pub excluded: BTreeSet<String>,
    /// Softmax over the valid entities; empty on the sentinel path.
    pub probs: BTreeMap<String, f64>,
    pub entropy: f64,
    pub sentinel: bool,
    pub argmax: Option<String>,
}

/// Recompute the full scoring pipeline from the flat lists: label matching,
/// candidate nomination, weight sums, conflict vetoes, direct softmax (no
/// max subtraction; scores here are far too small to overflow), entropy.
pub fn reference_assess(
    flat: &FlatGraph,
    feature_tokens: &[String],
    context_tokens: &[String],
    context_support: bool,
) -> ReferenceAssessment {
    let a_feat: BTreeSet<String> = flat
        .attrs
        .iter()
        .filter(|(_, label, _)| feature_tokens.contains(label))
        .map(|(id, _, _)| id.clone())
        .collect();
    let a_ctx: BTreeSet<String> = flat
        .contexts
        .iter()
        .filter(|(_, label)| context_tokens.contains(label))
        .map(|(id, _)| id.clone())
        .collect();
    let mut seeds = a_feat.clone();
    seeds.extend(a_ctx.iter().cloned());

    let entity_ids: BTreeSet<&String> = flat.entities.iter().map(|(id, _)| id).collect();
    let mut candidates: BTreeSet<String> = BTreeSet::new();
    for (from, to, _) in &flat.supports {
        if seeds.contains(from) && entity_ids.contains(to) {
            candidates.insert(to.clone());
        }
    }
    for (from, to) in &flat.conflicts {
        if seeds.contains(from) && entity_ids.contains(to) {
            candidates.insert(to.clone());
        }
    }

    let mut scores: BTreeMap<String, f64> =
        candidates.iter().map(|id| (id.clone(), 0.0)).collect();
    for (from, to, w) in &flat.supports {
        let active =
            a_feat.contains(from) || (context_support && a_ctx.contains(from));
        if active {
            if let Some(s) = scores.get_mut(to) {
                *s += w;
            }
        }
    }
    let mut excluded: BTreeSet<String> = BTreeSet::new();
    for (from, to) in &flat.conflicts {
        if a_feat.contains(from) && candidates.contains(to) {
            excluded.insert(to.clone());
        }
    }
    for id in &excluded {
        scores.insert(id.clone(), 0.0);
    }

    let valid: Vec<String> = scores
        .iter()
        .filter(|(id, s)| **s > 0.0 && !excluded.contains(*id))
        .map(|(id, _)| id.clone())
        .collect();
    if valid.is_empty() {
        return ReferenceAssessment {
            candidates,
            scores,
            excluded,
            probs: BTreeMap::new(),
            entropy: (flat.entities.len().max(1) as f64).ln() + 1.0,
            sentinel: true,
            argmax: None,
        };
    }
    let denom: f64 = valid.iter().map(|id| scores[id].exp()).sum();
    let mut probs = BTreeMap::new();
    let mut entropy = 0.0;
    let mut argmax: Option<(String, f64)> = None;
    for id in &valid {
        let p = scores[id].exp() / denom;
        probs.insert(id.clone(), p);
        entropy -= p * p.ln();
        if argmax.as_ref().map_or(true, |(_, best)| p > *best) {
            argmax = Some((id.clone(), p));
        }
    }
    ReferenceAssessment {
        candidates,
        scores,
        excluded,
        probs,
        entropy,
        sentinel: false,
        argmax: argmax.map(|(id, _)| id),
    }
}

/* ---------- scheduler reference ---------- */

/// Exhaustive best batch under a budget where every packet costs the same:
/// maximum total entropy over all subsets with |S| * e_pkt <= budget.
pub fn best_batch(entropies: &[f64], budget_wh: f64, e_pkt_wh: f64) -> (usize, f64) {
    let n = entropies.len();
    assert!(n <= 16, "exhaustive search is exponential");
    let mut best = (0usize, 0.0f64);
    for mask in 0u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size as f64 * e_pkt_wh > budget_wh {
            continue;
        }
        let total: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| entropies[i])
            .sum();
        if total > best.1 || (total == best.1 && size > best.0) {
            best = (size, total);
        }
    }
    best
}

/* ---------- eviction reference ---------- */

/// One community in the brute-force cache model.
#[derive(Debug, Clone)]
pub struct RefCommunity {
    pub id: String,
    pub pinned: bool,
    pub last_used: u64,
    pub nodes: u64,
    /// Edges owned by this community, by live endpoint community.
    pub internal_edges: u64,
    /// (other community id owning the far endpoint)
    pub cross_edges: Vec<String>,
}

/// Brute-force LRU: repeatedly drop the least-recently-used unpinned
/// community until usage fits, counting cross edges as gone once either
/// endpoint community is gone. Returns victims in eviction order, or None
/// when even an empty unpinned set cannot fit.
pub fn reference_evict(
    communities: &[RefCommunity],
    metric_nodes: bool,
    cap: u64,
) -> Option<Vec<String>> {
    let mut alive: BTreeMap<&str, &RefCommunity> =
        communities.iter().map(|c| (c.id.as_str(), c)).collect();
    let usage = |alive: &BTreeMap<&str, &RefCommunity>| -> u64 {
        if metric_nodes {
            alive.values().map(|c| c.nodes).sum()
        } else {
            alive
                .values()
                .map(|c| {
                    c.internal_edges
                        + c.cross_edges
                            .iter()
                            .filter(|other| alive.contains_key(other.as_str()))
                            .count() as u64
                })
                .sum()
        }
    };
    let mut victims = Vec::new();
    while usage(&alive) > cap {
        let victim = alive
            .values()
            .filter(|c| !c.pinned)
            .min_by_key(|c| (c.last_used, c.id.clone()))?
            .id
            .clone();
        alive.remove(victim.as_str());
        victims.push(victim);
    }
    Some(victims)
}

/* ---------- seeded single-case checks ---------- */
//
// One function per randomized comparison, shared by the developer-tier
// suite (a few hundred seeds, panics with the seed) and the release gate
// (the full count, collected into one criterion line). Keeping the body in
// one place means the two tiers cannot drift apart.

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

pub fn sample_tokens(rng: &mut ChaCha8Rng, pool: &[&str], max: usize) -> Vec<String> {
    let mut picks: Vec<String> = pool.iter().map(|s| s.to_string()).collect();
    picks.shuffle(rng);
    picks.truncate(rng.random_range(0..=max));
    picks
}

/// One random recognition instance: random station graph, random token
/// sample, engine assessment versus the flat reference, field by field.
pub fn check_trigger_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = random_flat_graph(&mut rng);
    let graph = flat.build();
    let feature_tokens = sample_tokens(&mut rng, &FEATURE_POOL, 4);
    let context_tokens = sample_tokens(&mut rng, &CONTEXT_POOL, 2);
    let context_support = seed % 2 == 0;

    let rec = ObservationRecord {
        obs_id: "r".to_string(),
        slot: 0,
        site: "test".to_string(),
        feature_tokens: feature_tokens.clone(),
        context_tokens: context_tokens.clone(),
        true_entity: None,
        payload_bytes: 0,
    };
    let outcome = activate(&graph, &rec, 0.0, &mut rng);
    let got = assess(&graph, &outcome.activation, context_support)
        .map_err(|e| format!("seed {seed}: {e}"))?;
    let want = reference_assess(&flat, &feature_tokens, &context_tokens, context_support);

    check(
        got.candidates == want.candidates,
        format!("seed {seed}: candidates {:?} vs {:?}", got.candidates, want.candidates),
    )?;
    check(
        got.scores.scores.keys().eq(want.scores.keys()),
        format!("seed {seed}: score keys differ"),
    )?;
    for (id, s) in &want.scores {
        let g = got.scores.scores[id];
        check(
            (g - s).abs() < 1e-12,
            format!("seed {seed}: score {id}: {g} vs {s}"),
        )?;
    }
    check(
        got.scores.excluded == want.excluded,
        format!("seed {seed}: excluded {:?} vs {:?}", got.scores.excluded, want.excluded),
    )?;
    check(
        got.sentinel == want.sentinel,
        format!("seed {seed}: sentinel {} vs {}", got.sentinel, want.sentinel),
    )?;
    check(
        got.distribution.probs.keys().eq(want.probs.keys()),
        format!("seed {seed}: probability keys differ"),
    )?;
    for (id, p) in &want.probs {
        let g = got.distribution.probs[id];
        check(
            (g - p).abs() < 1e-9,
            format!("seed {seed}: probability {id}: {g} vs {p}"),
        )?;
    }
    if !got.sentinel {
        let total: f64 = got.distribution.probs.values().sum();
        check(
            (total - 1.0).abs() < 1e-9,
            format!("seed {seed}: probabilities sum to {total}"),
        )?;
    }
    for id in &got.scores.excluded {
        let p = got.distribution.probs.get(id).copied().unwrap_or(0.0);
        check(
            p == 0.0,
            format!("seed {seed}: excluded {id} kept probability {p}"),
        )?;
    }
    check(
        (got.entropy - want.entropy).abs() < 1e-9,
        format!("seed {seed}: entropy {} vs {}", got.entropy, want.entropy),
    )?;
    check(
        got.argmax == want.argmax,
        format!("seed {seed}: argmax {:?} vs {:?}", got.argmax, want.argmax),
    )?;
    Ok(())
}

/// Insight packet carrying nothing but an identity and a priority.
pub fn bare_packet(obs_id: String, slot: u64, entropy: f64) -> InsightPacket {
    InsightPacket {
        obs_id,
        slot,
        site: "test".to_string(),
        entropy,
        feature_tokens: Vec::new(),
        context_tokens: Vec::new(),
        activation: Default::default(),
        unmatched_feat: Vec::new(),
        unmatched_ctx: Vec::new(),
        candidate_scores: Default::default(),
        excluded: Default::default(),
        size_bytes: 64,
    }
}

/// One random uplink instance: the quota rule and the transmitted batch
/// against an exhaustive subset search, and the reserve untouched.
pub fn check_transmit_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.random_range(0..=12usize);
    let mut queue = InsightQueue::new(64);
    let mut entropies = Vec::with_capacity(n);
    for i in 0..n {
        // Entropies on a coarse lattice: distinct values stay distinct
        // after the queue's total-order sort.
        let h = 0.61 + 0.01 * rng.random_range(0..=150) as f64;
        entropies.push(h);
        queue.enqueue(bare_packet(format!("p{i:02}"), rng.random_range(0..50), h));
    }
    let e_pkt = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let b_safe = 10.0;
    let soc = b_safe + rng.random_range(0..=30) as f64;
    let mut battery = BatteryState::new(soc, 1000.0);
    let budget = soc - b_safe;

    let k = select_k(queue.len(), budget, e_pkt).map_err(|e| format!("seed {seed}: {e}"))?;
    let (want_k, want_total) = best_batch(&entropies, budget, e_pkt);
    check(k == want_k, format!("seed {seed}: k {k} vs {want_k}"))?;

    let (report, sent) = transmit(
        &mut queue,
        &mut battery,
        b_safe,
        e_pkt,
        &UplinkPolicy::Adaptive,
        0,
        96,
    )
    .map_err(|e| format!("seed {seed}: {e}"))?;
    check(
        report.k_selected as usize == want_k,
        format!("seed {seed}: report k {} vs {want_k}", report.k_selected),
    )?;
    let total: f64 = sent.iter().map(|p| p.entropy).sum();
    check(
        (total - want_total).abs() < 1e-9,
        format!("seed {seed}: batch entropy {total} vs {want_total}"),
    )?;
    check(
        battery.soc_wh >= b_safe - 1e-9,
        format!("seed {seed}: reserve violated, soc {}", battery.soc_wh),
    )?;
    check(
        queue.len() == n - want_k,
        format!("seed {seed}: remainder {} vs {}", queue.len(), n - want_k),
    )?;
    Ok(())
}
