//! Deterministic fixture builders for the hot-path benchmarks. No RNG:
//! sizes and weights follow fixed cycles so benchmark inputs never drift
//! between runs or machines.

use weir_core::graph::{Edge, KnowledgeGraph, Node, NodeKind};
use weir_core::scheduler::InsightQueue;
use weir_core::trigger::InsightPacket;

/// A station graph of `communities` communities, each holding one entity
/// and `attrs_per` attributes. Attribute labels repeat across communities
/// (`t0`, `t1`, ...), so one token activates an attribute in every
/// community and the scorer has to fan out across all of them.
pub fn station_graph(communities: usize, attrs_per: usize) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::new();
    for c in 0..communities {
        let com = format!("c{c:03}");
        graph.add_community(&com, false).unwrap();
        let entity = format!("e{c:03}");
        graph
            .add_node(
                Node {
                    id: entity.clone(),
                    kind: NodeKind::Entity,
                    label: entity.clone(),
                },
                &com,
            )
            .unwrap();
        for k in 0..attrs_per {
            let attr = format!("a{c:03}x{k}");
            graph
                .add_node(
                    Node {
                        id: attr.clone(),
                        kind: NodeKind::Attribute,
                        label: format!("t{k}"),
                    },
                    &com,
                )
                .unwrap();
            let weight = 0.5 + ((c + k) % 7) as f64 * 0.25;
            graph
                .add_edge(Edge::support(&attr, &entity, weight))
                .unwrap();
        }
    }
    graph
}

/// Tokens that light up the first `n` attribute labels of `station_graph`.
pub fn tokens(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("t{k}")).collect()
}

pub fn packet(i: usize) -> InsightPacket {
    InsightPacket {
        obs_id: format!("p{i:05}"),
        slot: (i % 96) as u64,
        site: "bench".to_string(),
        entropy: 0.61 + ((i * 37) % 150) as f64 * 0.01,
        feature_tokens: Vec::new(),
        context_tokens: Vec::new(),
        activation: Default::default(),
        unmatched_feat: Vec::new(),
        unmatched_ctx: Vec::new(),
        candidate_scores: Default::default(),
        excluded: Default::default(),
        size_bytes: 256,
    }
}

/// A queue holding `n` packets with interleaved priorities.
pub fn loaded_queue(n: usize) -> InsightQueue {
    let mut queue = InsightQueue::new(n.max(1));
    for i in 0..n {
        queue.enqueue(packet(i));
    }
    queue
}
