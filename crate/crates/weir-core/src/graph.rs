//! Community-partitioned typed knowledge graph.
//!
//! Nodes are entities (things the station can report), attributes (visual
//! or acoustic traits), and contexts (site/season facts). Support edges carry
//! a positive weight from an attribute or context to an entity; conflict
//! edges are hard exclusions from an attribute to an entity. Every entity and
//! attribute belongs to exactly one community; context nodes all live in a
//! single pinned `core` community. Communities are the unit of eviction and
//! of cloud patching.
//!
//! ## On-disk format
//!
//! Graphs and patches are versioned TOML documents. `save` always emits the
//! canonical form (sections sorted by id), so `load` followed by `save`
//! reproduces a canonical document byte for byte. Community `last_used`
//! stamps are runtime state and are not persisted.
//!
//! ## Edge ownership
//!
//! An edge is stored in the community of its `from` node. Cross-community
//! edges (for example a conflict from one community's attribute to another
//! community's entity) are owned by the attribute's side, travel with that
//! community's patches, and are pruned if either endpoint's community is
//! evicted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAPH_FORMAT_VERSION: u32 = 1;
const DEFAULT_CORE_ID: &str = "core";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entity,
    Attribute,
    Context,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Entity => write!(f, "entity"),
            NodeKind::Attribute => write!(f, "attribute"),
            NodeKind::Context => write!(f, "context"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Token text this node matches during activation. Labels are not
    /// unique: duplicating a shared trait per community is the supported way
    /// to let one token support entities in several communities.
    pub label: String,
}

/// Edge kind discriminant, also the third component of an edge's identity:
/// a support and a conflict edge may coexist between the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeTag {
    Support,
    Conflict,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKind {
    Support { weight: f64 },
    Conflict,
}

impl EdgeKind {
    pub fn tag(&self) -> EdgeTag {
        match self {
            EdgeKind::Support { .. } => EdgeTag::Support,
            EdgeKind::Conflict => EdgeTag::Conflict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeKey {
    pub from: String,
    pub to: String,
    pub tag: EdgeTag,
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.tag {
            EdgeTag::Support => "support",
            EdgeTag::Conflict => "conflict",
        };
        write!(f, "{} -[{}]-> {}", self.from, tag, self.to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn support(from: impl Into<String>, to: impl Into<String>, weight: f64) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
            kind: EdgeKind::Support { weight },
        }
    }

    pub fn conflict(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
            kind: EdgeKind::Conflict,
        }
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            from: self.from.clone(),
            to: self.to.clone(),
            tag: self.kind.tag(),
        }
    }

    pub fn weight(&self) -> Option<f64> {
        match self.kind {
            EdgeKind::Support { weight } => Some(weight),
            EdgeKind::Conflict => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Community {
    pub id: String,
    pub pinned: bool,
    /// Slot of the last inference or patch that involved this community.
    pub last_used: u64,
    pub nodes: BTreeSet<String>,
    edges: BTreeMap<EdgeKey, Edge>,
}

impl Community {
    fn new(id: impl Into<String>, pinned: bool) -> Self {
        Community {
            id: id.into(),
            pinned,
            last_used: 0,
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> u64 {
        self.nodes.len() as u64
    }

    pub fn edge_count(&self) -> u64 {
        self.edges.len() as u64
    }
}

/// Node set plus every stored edge with both endpoints inside the set.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<Edge>,
}

/// What a committed patch actually changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntegrationReport {
    pub community: String,
    /// True when the community already existed and was updated in place.
    pub replaced: bool,
    pub added_nodes: Vec<String>,
    pub removed_nodes: Vec<String>,
    pub added_edges: Vec<String>,
    pub removed_edges: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    core_id: String,
    communities: BTreeMap<String, Community>,
    /// node id -> (node, owning community id)
    nodes: BTreeMap<String, (Node, String)>,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeGraph {
    /// Empty graph with a pinned, empty core community.
    pub fn new() -> Self {
        let mut communities = BTreeMap::new();
        let mut core = Community::new(DEFAULT_CORE_ID, true);
        core.pinned = true;
        communities.insert(core.id.clone(), core);
        KnowledgeGraph {
            core_id: DEFAULT_CORE_ID.to_string(),
            communities,
            nodes: BTreeMap::new(),
        }
    }

    pub fn core_id(&self) -> &str {
        &self.core_id
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id).map(|(n, _)| n)
    }

    pub fn community_of(&self, node_id: &str) -> Option<&str> {
        self.nodes.get(node_id).map(|(_, c)| c.as_str())
    }

    pub fn community(&self, id: &str) -> Option<&Community> {
        self.communities.get(id)
    }

    pub fn communities(&self) -> impl Iterator<Item = &Community> {
        self.communities.values()
    }

    /// All nodes paired with their owning community id, in id order.
    pub fn nodes(&self) -> impl Iterator<Item = (&Node, &str)> {
        self.nodes.values().map(|(n, c)| (n, c.as_str()))
    }

    // ------------------------------------------------------------------
    // Incremental construction
    // ------------------------------------------------------------------

    pub fn add_community(&mut self, id: impl Into<String>, pinned: bool) -> Result<()> {
        let id = id.into();
        if self.communities.contains_key(&id) {
            return Err(Error::DuplicateCommunity(id));
        }
        self.communities.insert(id.clone(), Community::new(id, pinned));
        Ok(())
    }

    pub fn add_node(&mut self, node: Node, community_id: &str) -> Result<()> {
        if self.nodes.contains_key(&node.id) {
            return Err(Error::DuplicateNode(node.id));
        }
        if (node.kind == NodeKind::Context) != (community_id == self.core_id) {
            return Err(Error::BadNode {
                node: node.id,
                message: format!("{} node placement conflicts with the core rule", node.kind),
            });
        }
        let com = self
            .communities
            .get_mut(community_id)
            .ok_or_else(|| Error::UnknownCommunity(community_id.to_string()))?;
        com.nodes.insert(node.id.clone());
        self.nodes
            .insert(node.id.clone(), (node, community_id.to_string()));
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        self.validate_edge(&edge)?;
        let owner = self
            .community_of(&edge.from)
            .expect("validated endpoint")
            .to_string();
        let com = self.communities.get_mut(&owner).unwrap();
        let key = edge.key();
        if com.edges.insert(key.clone(), edge).is_some() {
            return Err(Error::DuplicateEdge(key.to_string()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> u64 {
        self.nodes.len() as u64
    }

    pub fn edge_count(&self) -> u64 {
        self.communities.values().map(Community::edge_count).sum()
    }

    pub fn entity_count(&self) -> u64 {
        self.nodes
            .values()
            .filter(|(n, _)| n.kind == NodeKind::Entity)
            .count() as u64
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.communities.values().flat_map(|c| c.edges.values())
    }

    pub fn touch(&mut self, community_id: &str, now: u64) -> Result<()> {
        let com = self
            .communities
            .get_mut(community_id)
            .ok_or_else(|| Error::UnknownCommunity(community_id.to_string()))?;
        com.last_used = now;
        Ok(())
    }

    /// Nodes adjacent to any seed via any edge kind, in either direction,
    /// excluding the seeds themselves.
    pub fn neighbors(&self, seeds: &BTreeSet<String>) -> Result<BTreeSet<String>> {
        for id in seeds {
            if !self.nodes.contains_key(id) {
                return Err(Error::UnknownNode(id.clone()));
            }
        }
        let mut out = BTreeSet::new();
        for edge in self.edges() {
            if seeds.contains(&edge.from) {
                out.insert(edge.to.clone());
            }
            if seeds.contains(&edge.to) {
                out.insert(edge.from.clone());
            }
        }
        for id in seeds {
            out.remove(id);
        }
        Ok(out)
    }

    /// Entity nodes adjacent to the activation seeds.
    pub fn candidate_entities(&self, seeds: &BTreeSet<String>) -> Result<BTreeSet<String>> {
        let mut out = self.neighbors(seeds)?;
        out.retain(|id| {
            matches!(self.nodes.get(id), Some((n, _)) if n.kind == NodeKind::Entity)
        });
        Ok(out)
    }

    pub fn induced_subgraph(&self, node_ids: &BTreeSet<String>) -> Result<Subgraph> {
        for id in node_ids {
            if !self.nodes.contains_key(id) {
                return Err(Error::UnknownNode(id.clone()));
            }
        }
        let mut edges: Vec<Edge> = self
            .edges()
            .filter(|e| node_ids.contains(&e.from) && node_ids.contains(&e.to))
            .cloned()
            .collect();
        edges.sort_by(|a, b| a.key().cmp(&b.key()));
        Ok(Subgraph {
            nodes: node_ids.clone(),
            edges,
        })
    }

    /// Remove a community outright, then prune any edge elsewhere left
    /// without both endpoints. Returns (nodes removed, edges removed
    /// including pruned cross-community edges).
    pub fn remove_community(&mut self, id: &str) -> Result<(u64, u64)> {
        let com = self
            .communities
            .remove(id)
            .ok_or_else(|| Error::UnknownCommunity(id.to_string()))?;
        let node_count = com.node_count();
        let mut edge_count = com.edge_count();
        for node_id in &com.nodes {
            self.nodes.remove(node_id);
        }
        for other in self.communities.values_mut() {
            let before = other.edges.len();
            let nodes = &self.nodes;
            other
                .edges
                .retain(|k, _| nodes.contains_key(&k.from) && nodes.contains_key(&k.to));
            edge_count += (before - other.edges.len()) as u64;
        }
        Ok((node_count, edge_count))
    }

    /// Apply a patch atomically: the graph is only mutated if the patched
    /// result passes full validation. On success the target community's
    /// `last_used` is refreshed to `now`.
    ///
    /// Node and edge additions are upserts, so re-applying a patch is a
    /// no-op apart from the `last_used` refresh. Removals of absent ids are
    /// ignored for the same reason.
    pub fn integrate_patch(&mut self, patch: &KnowledgePatch, now: u64) -> Result<IntegrationReport> {
        let reject = |message: &str| Error::PatchRejected {
            community: patch.community_id.clone(),
            message: message.to_string(),
        };
        if patch.community_id == self.core_id {
            return Err(reject("the core community is not patchable"));
        }

        let mut next = self.clone();
        let mut report = IntegrationReport {
            community: patch.community_id.clone(),
            replaced: next.communities.contains_key(&patch.community_id),
            ..IntegrationReport::default()
        };

        next.communities
            .entry(patch.community_id.clone())
            .or_insert_with(|| Community::new(patch.community_id.clone(), false));

        for node in &patch.nodes {
            if node.kind == NodeKind::Context {
                return Err(reject(&format!(
                    "node `{}` is a context node; contexts live only in the core",
                    node.id
                )));
            }
            match next.nodes.get(&node.id) {
                Some((existing, owner)) if owner != &patch.community_id => {
                    return Err(reject(&format!(
                        "node `{}` already belongs to community `{}`",
                        existing.id, owner
                    )));
                }
                Some((existing, _)) if existing.kind != node.kind => {
                    return Err(reject(&format!(
                        "node `{}` cannot change kind from {} to {}",
                        node.id, existing.kind, node.kind
                    )));
                }
                _ => {}
            }
            let newly_added = !next.nodes.contains_key(&node.id);
            next.nodes
                .insert(node.id.clone(), (node.clone(), patch.community_id.clone()));
            let com = next.communities.get_mut(&patch.community_id).unwrap();
            com.nodes.insert(node.id.clone());
            if newly_added {
                report.added_nodes.push(node.id.clone());
            }
        }

        {
            let com = next.communities.get_mut(&patch.community_id).unwrap();
            for edge in &patch.edges {
                if !com.nodes.contains(&edge.from) {
                    return Err(reject(&format!(
                        "edge `{}` is not owned by this community (from-node outside it)",
                        edge.key()
                    )));
                }
                if com.edges.insert(edge.key(), edge.clone()).is_none() {
                    report.added_edges.push(edge.key().to_string());
                }
            }
            for key in &patch.removed_edges {
                if com.edges.remove(key).is_some() {
                    report.removed_edges.push(key.to_string());
                }
            }
        }

        for id in &patch.removed_nodes {
            let owned = matches!(next.nodes.get(id), Some((_, owner)) if owner == &patch.community_id);
            if !owned {
                continue;
            }
            next.nodes.remove(id);
            let com = next.communities.get_mut(&patch.community_id).unwrap();
            com.nodes.remove(id);
            report.removed_nodes.push(id.clone());
        }

        next.validate().map_err(|e| Error::PatchRejected {
            community: patch.community_id.clone(),
            message: e.to_string(),
        })?;
        next.touch(&patch.community_id, now)?;
        *self = next;
        Ok(report)
    }

    /// Full-scan invariant check: node partition, edge endpoint resolution,
    /// edge typing, positive support weights, context placement, pinned core.
    pub fn validate(&self) -> Result<()> {
        let core = self
            .communities
            .get(&self.core_id)
            .ok_or_else(|| Error::UnknownCommunity(self.core_id.clone()))?;
        if !core.pinned {
            return Err(Error::Schema {
                path: String::new(),
                message: format!("core community `{}` must be pinned", self.core_id),
            });
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for com in self.communities.values() {
            for node_id in &com.nodes {
                if !seen.insert(node_id) {
                    return Err(Error::DuplicateNode(node_id.clone()));
                }
                let (node, owner) = self
                    .nodes
                    .get(node_id)
                    .ok_or_else(|| Error::UnknownNode(node_id.clone()))?;
                if owner != &com.id {
                    return Err(Error::BadNode {
                        node: node_id.clone(),
                        message: format!("indexed under `{owner}` but stored in `{}`", com.id),
                    });
                }
                if (node.kind == NodeKind::Context) != (com.id == self.core_id) {
                    return Err(Error::BadNode {
                        node: node_id.clone(),
                        message: match node.kind {
                            NodeKind::Context => {
                                format!("context node must live in core `{}`", self.core_id)
                            }
                            _ => format!("{} node may not live in the core", node.kind),
                        },
                    });
                }
            }
        }
        if seen.len() != self.nodes.len() {
            let stray = self
                .nodes
                .keys()
                .find(|id| !seen.contains(id.as_str()))
                .cloned()
                .unwrap_or_default();
            return Err(Error::BadNode {
                node: stray,
                message: "indexed but not stored in any community".to_string(),
            });
        }
        for com in self.communities.values() {
            for (key, edge) in &com.edges {
                if key != &edge.key() {
                    return Err(Error::BadEdge {
                        edge: key.to_string(),
                        message: "stored under a mismatched key".to_string(),
                    });
                }
                self.validate_edge(edge)?;
                if self.community_of(&edge.from) != Some(com.id.as_str()) {
                    return Err(Error::BadEdge {
                        edge: key.to_string(),
                        message: format!("owned by `{}` but its from-node is not", com.id),
                    });
                }
            }
        }
        Ok(())
    }

    fn validate_edge(&self, edge: &Edge) -> Result<()> {
        let key = edge.key();
        let from = match self.nodes.get(&edge.from) {
            Some((n, _)) => n,
            None => {
                return Err(Error::DanglingEdge {
                    edge: key.to_string(),
                    node: edge.from.clone(),
                })
            }
        };
        let to = match self.nodes.get(&edge.to) {
            Some((n, _)) => n,
            None => {
                return Err(Error::DanglingEdge {
                    edge: key.to_string(),
                    node: edge.to.clone(),
                })
            }
        };
        if to.kind != NodeKind::Entity {
            return Err(Error::BadEdge {
                edge: key.to_string(),
                message: format!("target must be an entity, found {}", to.kind),
            });
        }
        match edge.kind {
            EdgeKind::Support { weight } => {
                if from.kind == NodeKind::Entity {
                    return Err(Error::BadEdge {
                        edge: key.to_string(),
                        message: "support must originate from an attribute or context".to_string(),
                    });
                }
                if !(weight > 0.0) {
                    return Err(Error::NonPositiveWeight(key.to_string()));
                }
            }
            EdgeKind::Conflict => {
                if from.kind != NodeKind::Attribute {
                    return Err(Error::BadEdge {
                        edge: key.to_string(),
                        message: format!(
                            "conflict must originate from an attribute, found {}",
                            from.kind
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Structural equality: same nodes, edges, communities, and pinned
    /// flags, ignoring `last_used` stamps.
    pub fn structurally_equal(&self, other: &KnowledgeGraph) -> bool {
        self.save() == other.save()
    }

    // ------------------------------------------------------------------
    // Document I/O
    // ------------------------------------------------------------------

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc: GraphDoc = toml::from_str(text).map_err(|e| Error::schema(origin, e))?;
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(Error::schema(
                origin,
                format!(
                    "unsupported format version {} (expected {})",
                    doc.version, GRAPH_FORMAT_VERSION
                ),
            ));
        }
        let mut graph = KnowledgeGraph {
            core_id: doc.core.clone(),
            communities: BTreeMap::new(),
            nodes: BTreeMap::new(),
        };
        for decl in &doc.communities {
            if graph.communities.contains_key(&decl.id) {
                return Err(Error::DuplicateCommunity(decl.id.clone()));
            }
            graph
                .communities
                .insert(decl.id.clone(), Community::new(decl.id.clone(), decl.pinned));
        }
        match graph.communities.get(&doc.core) {
            Some(core) if !core.pinned => {
                return Err(Error::schema(
                    origin,
                    format!("core community `{}` must be declared pinned", doc.core),
                ))
            }
            Some(_) => {}
            None => {
                graph
                    .communities
                    .insert(doc.core.clone(), Community::new(doc.core.clone(), true));
            }
        }
        for decl in &doc.nodes {
            if graph.nodes.contains_key(&decl.id) {
                return Err(Error::DuplicateNode(decl.id.clone()));
            }
            let community = decl.community.clone().unwrap_or_else(|| doc.core.clone());
            let com = graph
                .communities
                .get_mut(&community)
                .ok_or_else(|| Error::UnknownCommunity(community.clone()))?;
            com.nodes.insert(decl.id.clone());
            graph.nodes.insert(
                decl.id.clone(),
                (
                    Node {
                        id: decl.id.clone(),
                        kind: decl.kind,
                        label: decl.label.clone(),
                    },
                    community,
                ),
            );
        }
        for decl in &doc.edges {
            let edge = decl.to_edge(origin)?;
            let owner = graph
                .community_of(&edge.from)
                .ok_or_else(|| Error::DanglingEdge {
                    edge: edge.key().to_string(),
                    node: edge.from.clone(),
                })?
                .to_string();
            let com = graph.communities.get_mut(&owner).unwrap();
            let key = edge.key();
            if com.edges.insert(key.clone(), edge).is_some() {
                return Err(Error::DuplicateEdge(key.to_string()));
            }
        }
        graph.validate()?;
        Ok(graph)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Canonical document: communities, nodes, and edges each sorted by id.
    pub fn save(&self) -> String {
        let doc = GraphDoc {
            version: GRAPH_FORMAT_VERSION,
            core: self.core_id.clone(),
            communities: self
                .communities
                .values()
                .map(|c| CommunityDecl {
                    id: c.id.clone(),
                    pinned: c.pinned,
                })
                .collect(),
            nodes: self
                .nodes
                .values()
                .map(|(n, community)| NodeDecl {
                    id: n.id.clone(),
                    kind: n.kind,
                    label: n.label.clone(),
                    community: Some(community.clone()),
                })
                .collect(),
            edges: {
                let mut keys: Vec<&Edge> = self.edges().collect();
                keys.sort_by_key(|e| e.key());
                keys.iter().map(|e| EdgeDecl::from_edge(e)).collect()
            },
        };
        toml::to_string(&doc).expect("graph document serializes")
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.save()).map_err(|e| Error::io(path.display(), e))
    }
}

// ----------------------------------------------------------------------
// Patches
// ----------------------------------------------------------------------

/// Community-granularity change set. Additions are upserts; removals of
/// absent ids are no-ops, which keeps application idempotent.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgePatch {
    pub community_id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub removed_nodes: Vec<String>,
    pub removed_edges: Vec<EdgeKey>,
    /// Slot the cloud issued this patch at.
    pub issued_at: u64,
}

impl KnowledgePatch {
    /// Snapshot of one community: all of its nodes and owned edges, no
    /// removals.
    pub fn snapshot(graph: &KnowledgeGraph, community_id: &str, issued_at: u64) -> Result<Self> {
        let com = graph
            .community(community_id)
            .ok_or_else(|| Error::UnknownCommunity(community_id.to_string()))?;
        let mut nodes: Vec<Node> = com
            .nodes
            .iter()
            .filter_map(|id| graph.node(id).cloned())
            .collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(KnowledgePatch {
            community_id: community_id.to_string(),
            nodes,
            edges: com.edges().cloned().collect(),
            removed_nodes: Vec::new(),
            removed_edges: Vec::new(),
            issued_at,
        })
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc: PatchDoc = toml::from_str(text).map_err(|e| Error::schema(origin, e))?;
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(Error::schema(
                origin,
                format!(
                    "unsupported format version {} (expected {})",
                    doc.version, GRAPH_FORMAT_VERSION
                ),
            ));
        }
        let mut nodes = Vec::new();
        let mut ids = BTreeSet::new();
        for decl in &doc.nodes {
            if !ids.insert(decl.id.clone()) {
                return Err(Error::DuplicateNode(decl.id.clone()));
            }
            if decl.kind == NodeKind::Context {
                return Err(Error::BadNode {
                    node: decl.id.clone(),
                    message: "patches may not carry context nodes".to_string(),
                });
            }
            if let Some(community) = &decl.community {
                if community != &doc.community_id {
                    return Err(Error::BadNode {
                        node: decl.id.clone(),
                        message: format!(
                            "community `{community}` does not match patch target `{}`",
                            doc.community_id
                        ),
                    });
                }
            }
            nodes.push(Node {
                id: decl.id.clone(),
                kind: decl.kind,
                label: decl.label.clone(),
            });
        }
        let mut edges = Vec::new();
        let mut keys = BTreeSet::new();
        for decl in &doc.edges {
            let edge = decl.to_edge(origin)?;
            if !keys.insert(edge.key()) {
                return Err(Error::DuplicateEdge(edge.key().to_string()));
            }
            edges.push(edge);
        }
        let removed_edges: Vec<EdgeKey> = doc
            .removed_edges
            .iter()
            .map(|d| EdgeKey {
                from: d.from.clone(),
                to: d.to.clone(),
                tag: d.kind,
            })
            .collect();
        for id in &doc.removed_nodes {
            if ids.contains(id) {
                return Err(Error::BadNode {
                    node: id.clone(),
                    message: "node is both added and removed by the patch".to_string(),
                });
            }
        }
        for key in &removed_edges {
            if keys.contains(key) {
                return Err(Error::BadEdge {
                    edge: key.to_string(),
                    message: "edge is both added and removed by the patch".to_string(),
                });
            }
        }
        Ok(KnowledgePatch {
            community_id: doc.community_id,
            nodes,
            edges,
            removed_nodes: doc.removed_nodes,
            removed_edges,
            issued_at: doc.issued_at,
        })
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self) -> String {
        let mut nodes: Vec<&Node> = self.nodes.iter().collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut edges: Vec<&Edge> = self.edges.iter().collect();
        edges.sort_by_key(|e| e.key());
        let mut removed_nodes = self.removed_nodes.clone();
        removed_nodes.sort();
        let mut removed_edges = self.removed_edges.clone();
        removed_edges.sort();
        let doc = PatchDoc {
            version: GRAPH_FORMAT_VERSION,
            community_id: self.community_id.clone(),
            issued_at: self.issued_at,
            removed_nodes,
            removed_edges: removed_edges
                .iter()
                .map(|k| RemovedEdgeDecl {
                    from: k.from.clone(),
                    to: k.to.clone(),
                    kind: k.tag,
                })
                .collect(),
            nodes: nodes
                .iter()
                .map(|n| NodeDecl {
                    id: n.id.clone(),
                    kind: n.kind,
                    label: n.label.clone(),
                    community: None,
                })
                .collect(),
            edges: edges.iter().map(|e| EdgeDecl::from_edge(e)).collect(),
        };
        toml::to_string(&doc).expect("patch document serializes")
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.save()).map_err(|e| Error::io(path.display(), e))
    }
}

// ----------------------------------------------------------------------
// Document schemas
// ----------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    version: u32,
    #[serde(default = "default_core_id")]
    core: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    communities: Vec<CommunityDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<NodeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edges: Vec<EdgeDecl>,
}

fn default_core_id() -> String {
    DEFAULT_CORE_ID.to_string()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommunityDecl {
    id: String,
    #[serde(default)]
    pinned: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDecl {
    id: String,
    kind: NodeKind,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    community: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDecl {
    from: String,
    to: String,
    kind: EdgeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

impl EdgeDecl {
    fn from_edge(edge: &Edge) -> Self {
        EdgeDecl {
            from: edge.from.clone(),
            to: edge.to.clone(),
            kind: edge.kind.tag(),
            weight: edge.weight(),
        }
    }

    fn to_edge(&self, origin: &str) -> Result<Edge> {
        let kind = match (self.kind, self.weight) {
            (EdgeTag::Support, Some(w)) => EdgeKind::Support { weight: w },
            (EdgeTag::Support, None) => {
                return Err(Error::schema(
                    origin,
                    format!("support edge {} -> {} requires a weight", self.from, self.to),
                ))
            }
            (EdgeTag::Conflict, None) => EdgeKind::Conflict,
            (EdgeTag::Conflict, Some(_)) => {
                return Err(Error::schema(
                    origin,
                    format!(
                        "conflict edge {} -> {} must not carry a weight",
                        self.from, self.to
                    ),
                ))
            }
        };
        Ok(Edge {
            from: self.from.clone(),
            to: self.to.clone(),
            kind,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchDoc {
    version: u32,
    community_id: String,
    #[serde(default)]
    issued_at: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    removed_nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    removed_edges: Vec<RemovedEdgeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<NodeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edges: Vec<EdgeDecl>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemovedEdgeDecl {
    from: String,
    to: String,
    kind: EdgeTag,
}
