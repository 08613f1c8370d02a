//! Station storage limits: capacity accounting and least-recently-used
//! eviction of whole communities.
//!
//! Eviction only ever removes entire non-pinned communities. Victims are
//! chosen by oldest `last_used`, ties broken by lexicographic community id,
//! until usage fits the cap. If everything left is pinned and the graph
//! still does not fit, that is a configuration error, not something to
//! paper over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMetric {
    NodeCount,
    EdgeCount,
    /// Size of the canonical on-disk serialization.
    Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub metric: CapacityMetric,
    pub cap: u64,
}

/// Current usage of the graph under a metric.
pub fn usage(graph: &KnowledgeGraph, metric: CapacityMetric) -> u64 {
    match metric {
        CapacityMetric::NodeCount => graph.node_count() as u64,
        CapacityMetric::EdgeCount => graph.edge_count() as u64,
        CapacityMetric::Bytes => graph.save().len() as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvictedCommunity {
    pub id: String,
    pub last_used: u64,
    /// Usage reclaimed by removing it, in the configured metric. Includes
    /// edges from other communities that dangled and were pruned with it.
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvictionReport {
    /// Oldest first, the order they were removed in.
    pub evicted: Vec<EvictedCommunity>,
    pub usage_before: u64,
    pub usage_after: u64,
}

impl EvictionReport {
    pub fn is_empty(&self) -> bool {
        self.evicted.is_empty()
    }
}

/// Evict least-recently-used communities until the graph fits the cap.
pub fn enforce_eviction(graph: &mut KnowledgeGraph, config: &CapacityConfig) -> Result<EvictionReport> {
    let usage_before = usage(graph, config.metric);
    let mut current = usage_before;
    let mut evicted = Vec::new();
    while current > config.cap {
        let victim = graph
            .communities()
            .filter(|c| !c.pinned)
            .min_by(|a, b| a.last_used.cmp(&b.last_used).then_with(|| a.id.cmp(&b.id)))
            .map(|c| (c.id.clone(), c.last_used));
        let Some((id, last_used)) = victim else {
            return Err(Error::CapacityInfeasible {
                cap: config.cap,
                pinned_usage: current,
            });
        };
        graph.remove_community(&id)?;
        let after = usage(graph, config.metric);
        evicted.push(EvictedCommunity {
            id,
            last_used,
            size: current - after,
        });
        current = after;
    }
    Ok(EvictionReport {
        evicted,
        usage_before,
        usage_after: current,
    })
}
