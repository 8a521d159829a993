//! Finite directed graphs, graph morphisms and typed graphs.
//!
//! Nodes and edges carry string identities: every quotient construction
//! records where each item came from, so later stages can speak about "the
//! complement of edge `in12`" by name. Positional ids ([`NodeId`], [`EdgeId`])
//! index into the creation-ordered item vectors and are what morphisms map.

mod embed;
mod limits;

pub use embed::{
    canonical_key, enumerate_morphisms, enumerate_typed_monos, enumerate_typed_monos_extending,
    extend_mono, find_iso, find_typed_iso,
};
pub use limits::{
    colimit, initial_pushout, pullback, pushout, pushout_complement, Colimit, InitialPushout,
    Pullback, Pushout, PushoutComplement,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Positional id of a node, in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Positional id of an edge, in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

/// A node or an edge, when an operation is generic over both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item {
    Node(NodeId),
    Edge(EdgeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error("morphism is not total or maps outside the target graph")]
    MalformedMorphism,
    #[error("morphism does not preserve sources and targets at edge `{0}`")]
    NotStructurePreserving(String),
    #[error("morphism endpoints do not compose (target of one is not source of the next)")]
    NotComposable,
    #[error("the two morphisms do not share the required endpoint graph")]
    EndpointMismatch,
    #[error("expected a monomorphism")]
    NotMono,
    #[error("dangling condition: edge `{edge}` of the host is incident to a deleted node `{node}`")]
    DanglingCondition { edge: String, node: String },
    #[error("constraint morphism is an iso: no negative items, rule can never apply")]
    IsoConstraint,
    #[error("colimit diagram is malformed: {0}")]
    MalformedDiagram(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeData {
    name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct EdgeData {
    name: String,
    src: NodeId,
    tgt: NodeId,
}

/// A finite directed graph with identity-carrying nodes and edges.
///
/// Item names are unique within their kind. Equality is structural: two
/// graphs are equal when they list the same named items in the same order
/// with the same incidences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    nodes: Vec<NodeData>,
    edges: Vec<EdgeData>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Builds a graph from `(name)` nodes and `(name, src, tgt)` edges.
    pub fn from_parts<S: AsRef<str>>(nodes: &[S], edges: &[(S, S, S)]) -> Arc<Graph> {
        let mut g = Graph::new();
        for n in nodes {
            g.add_node(n.as_ref());
        }
        for (name, src, tgt) in edges {
            let s = g.node(src.as_ref()).expect("edge source must exist");
            let t = g.node(tgt.as_ref()).expect("edge target must exist");
            g.add_edge(name.as_ref(), s, t);
        }
        Arc::new(g)
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        assert!(
            self.node(name).is_none(),
            "duplicate node identity `{name}`"
        );
        self.nodes.push(NodeData { name: name.to_string() });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_edge(&mut self, name: &str, src: NodeId, tgt: NodeId) -> EdgeId {
        assert!(
            self.edge(name).is_none(),
            "duplicate edge identity `{name}`"
        );
        assert!(src.0 < self.nodes.len() && tgt.0 < self.nodes.len());
        self.edges.push(EdgeData { name: name.to_string(), src, tgt });
        EdgeId(self.edges.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn edge(&self, name: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.name == name).map(EdgeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn edge_name(&self, id: EdgeId) -> &str {
        &self.edges[id.0].name
    }

    pub fn src(&self, id: EdgeId) -> NodeId {
        self.edges[id.0].src
    }

    pub fn tgt(&self, id: EdgeId) -> NodeId {
        self.edges[id.0].tgt
    }

    pub fn item_name(&self, item: Item) -> &str {
        match item {
            Item::Node(n) => self.node_name(n),
            Item::Edge(e) => self.edge_name(e),
        }
    }

    /// Edges having `node` as source or target.
    pub fn incident_edges(&self, node: NodeId) -> Vec<EdgeId> {
        self.edge_ids()
            .filter(|&e| self.src(e) == node || self.tgt(e) == node)
            .collect()
    }

    /// A copy of this graph with items renamed through `f`.
    pub fn renamed(&self, mut f: impl FnMut(Item, &str) -> String) -> Arc<Graph> {
        let mut g = Graph::new();
        for (i, n) in self.nodes.iter().enumerate() {
            g.add_node(&f(Item::Node(NodeId(i)), &n.name));
        }
        for (i, e) in self.edges.iter().enumerate() {
            g.add_edge(&f(Item::Edge(EdgeId(i)), &e.name), e.src, e.tgt);
        }
        Arc::new(g)
    }

    /// The subgraph induced by the given items, with its inclusion morphism.
    ///
    /// Panics if an edge is selected without its endpoints.
    pub fn subgraph(self: &Arc<Graph>, nodes: &[NodeId], edges: &[EdgeId]) -> (Arc<Graph>, GraphMorphism) {
        let mut nodes: Vec<NodeId> = nodes.to_vec();
        nodes.sort();
        nodes.dedup();
        let mut edges: Vec<EdgeId> = edges.to_vec();
        edges.sort();
        edges.dedup();
        let mut g = Graph::new();
        let mut node_back = BTreeMap::new();
        for &n in &nodes {
            let id = g.add_node(self.node_name(n));
            node_back.insert(n, id);
        }
        for &e in &edges {
            let s = node_back[&self.src(e)];
            let t = node_back[&self.tgt(e)];
            g.add_edge(self.edge_name(e), s, t);
        }
        let sub = Arc::new(g);
        let m = GraphMorphism::new(
            Arc::clone(&sub),
            Arc::clone(self),
            nodes.clone(),
            edges.clone(),
        )
        .expect("inclusion of an induced subgraph is a morphism");
        (sub, m)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nodes {{")?;
        for n in &self.nodes {
            write!(f, " {}", n.name)?;
        }
        write!(f, " }} edges {{")?;
        for e in &self.edges {
            write!(
                f,
                " {}:{}->{}",
                e.name,
                self.nodes[e.src.0].name,
                self.nodes[e.tgt.0].name
            )?;
        }
        write!(f, " }}")
    }
}

/// A structure-preserving total mapping between two graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMorphism {
    source: Arc<Graph>,
    target: Arc<Graph>,
    node_map: Vec<NodeId>,
    edge_map: Vec<EdgeId>,
}

impl GraphMorphism {
    /// Checks totality and commutation with `src`/`tgt` before accepting.
    pub fn new(
        source: Arc<Graph>,
        target: Arc<Graph>,
        node_map: Vec<NodeId>,
        edge_map: Vec<EdgeId>,
    ) -> Result<Self, Error> {
        if node_map.len() != source.node_count()
            || edge_map.len() != source.edge_count()
            || node_map.iter().any(|n| n.0 >= target.node_count())
            || edge_map.iter().any(|e| e.0 >= target.edge_count())
        {
            return Err(Error::MalformedMorphism);
        }
        for e in source.edge_ids() {
            let im = edge_map[e.0];
            if target.src(im) != node_map[source.src(e).0]
                || target.tgt(im) != node_map[source.tgt(e).0]
            {
                return Err(Error::NotStructurePreserving(
                    source.edge_name(e).to_string(),
                ));
            }
        }
        Ok(GraphMorphism { source, target, node_map, edge_map })
    }

    /// Builds a morphism from `(source item name, target item name)` pairs.
    pub fn from_names(
        source: Arc<Graph>,
        target: Arc<Graph>,
        nodes: &[(&str, &str)],
        edges: &[(&str, &str)],
    ) -> Result<Self, Error> {
        let mut node_map = vec![None; source.node_count()];
        for (a, b) in nodes {
            let sa = source.node(a).ok_or(Error::MalformedMorphism)?;
            let tb = target.node(b).ok_or(Error::MalformedMorphism)?;
            node_map[sa.0] = Some(tb);
        }
        let mut edge_map = vec![None; source.edge_count()];
        for (a, b) in edges {
            let sa = source.edge(a).ok_or(Error::MalformedMorphism)?;
            let tb = target.edge(b).ok_or(Error::MalformedMorphism)?;
            edge_map[sa.0] = Some(tb);
        }
        let node_map = node_map.into_iter().collect::<Option<Vec<_>>>().ok_or(Error::MalformedMorphism)?;
        let edge_map = edge_map.into_iter().collect::<Option<Vec<_>>>().ok_or(Error::MalformedMorphism)?;
        GraphMorphism::new(source, target, node_map, edge_map)
    }

    /// Inclusion-style morphism matching items of `source` to the items of
    /// `target` with the same name.
    pub fn by_common_names(source: Arc<Graph>, target: Arc<Graph>) -> Result<Self, Error> {
        let node_map = source
            .node_ids()
            .map(|n| target.node(source.node_name(n)).ok_or(Error::MalformedMorphism))
            .collect::<Result<Vec<_>, _>>()?;
        let edge_map = source
            .edge_ids()
            .map(|e| target.edge(source.edge_name(e)).ok_or(Error::MalformedMorphism))
            .collect::<Result<Vec<_>, _>>()?;
        GraphMorphism::new(source, target, node_map, edge_map)
    }

    pub fn identity(g: Arc<Graph>) -> Self {
        let node_map = g.node_ids().collect();
        let edge_map = g.edge_ids().collect();
        GraphMorphism { source: Arc::clone(&g), target: g, node_map, edge_map }
    }

    pub fn source(&self) -> &Arc<Graph> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Graph> {
        &self.target
    }

    pub fn node(&self, n: NodeId) -> NodeId {
        self.node_map[n.0]
    }

    pub fn edge(&self, e: EdgeId) -> EdgeId {
        self.edge_map[e.0]
    }

    pub fn item(&self, item: Item) -> Item {
        match item {
            Item::Node(n) => Item::Node(self.node(n)),
            Item::Edge(e) => Item::Edge(self.edge(e)),
        }
    }

    /// Composition `other ∘ self` (apply `self` first).
    pub fn then(&self, other: &GraphMorphism) -> Result<GraphMorphism, Error> {
        if *self.target != *other.source {
            return Err(Error::NotComposable);
        }
        let node_map = self.node_map.iter().map(|n| other.node_map[n.0]).collect();
        let edge_map = self.edge_map.iter().map(|e| other.edge_map[e.0]).collect();
        Ok(GraphMorphism {
            source: Arc::clone(&self.source),
            target: Arc::clone(&other.target),
            node_map,
            edge_map,
        })
    }

    pub fn is_mono(&self) -> bool {
        let mut seen_n = vec![false; self.target.node_count()];
        for n in &self.node_map {
            if std::mem::replace(&mut seen_n[n.0], true) {
                return false;
            }
        }
        let mut seen_e = vec![false; self.target.edge_count()];
        for e in &self.edge_map {
            if std::mem::replace(&mut seen_e[e.0], true) {
                return false;
            }
        }
        true
    }

    pub fn is_iso(&self) -> bool {
        self.is_mono()
            && self.source.node_count() == self.target.node_count()
            && self.source.edge_count() == self.target.edge_count()
    }

    /// The inverse of an isomorphism.
    pub fn inverse(&self) -> Result<GraphMorphism, Error> {
        if !self.is_iso() {
            return Err(Error::NotMono);
        }
        let mut node_map = vec![NodeId(0); self.target.node_count()];
        for n in self.source.node_ids() {
            node_map[self.node(n).0] = n;
        }
        let mut edge_map = vec![EdgeId(0); self.target.edge_count()];
        for e in self.source.edge_ids() {
            edge_map[self.edge(e).0] = e;
        }
        Ok(GraphMorphism {
            source: Arc::clone(&self.target),
            target: Arc::clone(&self.source),
            node_map,
            edge_map,
        })
    }

    /// Preimage of a target node, if any (unique when the morphism is mono).
    pub fn node_preimage(&self, n: NodeId) -> Option<NodeId> {
        self.node_map.iter().position(|&m| m == n).map(NodeId)
    }

    pub fn edge_preimage(&self, e: EdgeId) -> Option<EdgeId> {
        self.edge_map.iter().position(|&m| m == e).map(EdgeId)
    }

    /// Whether two morphisms out of the same source agree pointwise.
    pub fn agrees_with(&self, other: &GraphMorphism) -> bool {
        self.node_map == other.node_map && self.edge_map == other.edge_map
    }

    /// The same mapping onto a structurally identical replacement target
    /// (same item ids, e.g. a renamed copy).
    pub fn with_target(&self, target: Arc<Graph>) -> Result<GraphMorphism, Error> {
        GraphMorphism::new(
            Arc::clone(&self.source),
            target,
            self.node_map.clone(),
            self.edge_map.clone(),
        )
    }

    /// The same mapping from a structurally identical replacement source.
    pub fn with_source(&self, source: Arc<Graph>) -> Result<GraphMorphism, Error> {
        GraphMorphism::new(
            source,
            Arc::clone(&self.target),
            self.node_map.clone(),
            self.edge_map.clone(),
        )
    }
}

impl fmt::Display for GraphMorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for n in self.source.node_ids() {
            write!(
                f,
                " {}=>{}",
                self.source.node_name(n),
                self.target.node_name(self.node(n))
            )?;
        }
        for e in self.source.edge_ids() {
            write!(
                f,
                " {}=>{}",
                self.source.edge_name(e),
                self.target.edge_name(self.edge(e))
            )?;
        }
        write!(f, " }}")
    }
}

/// A graph together with its typing morphism into a type graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedGraph {
    typing: GraphMorphism,
}

impl TypedGraph {
    pub fn new(typing: GraphMorphism) -> Self {
        TypedGraph { typing }
    }

    pub fn empty_over(type_graph: Arc<Graph>) -> Self {
        let empty = Arc::new(Graph::new());
        TypedGraph {
            typing: GraphMorphism::new(empty, type_graph, vec![], vec![]).unwrap(),
        }
    }

    /// Instance graph whose items use the given names but are typed by the
    /// type-graph item named after the `:`-separated type component.
    pub fn from_names(
        type_graph: &Arc<Graph>,
        nodes: &[(&str, &str)],
        edges: &[(&str, &str, &str, &str)],
    ) -> Self {
        let mut g = Graph::new();
        let mut node_map = Vec::new();
        for (name, ty) in nodes {
            g.add_node(name);
            node_map.push(type_graph.node(ty).expect("node type must exist"));
        }
        let mut edge_map = Vec::new();
        for (name, ty, src, tgt) in edges {
            let s = g.node(src).expect("edge source must exist");
            let t = g.node(tgt).expect("edge target must exist");
            g.add_edge(name, s, t);
            edge_map.push(type_graph.edge(ty).expect("edge type must exist"));
        }
        let typing =
            GraphMorphism::new(Arc::new(g), Arc::clone(type_graph), node_map, edge_map)
                .expect("typing must preserve structure");
        TypedGraph { typing }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        self.typing.source()
    }

    pub fn type_graph(&self) -> &Arc<Graph> {
        self.typing.target()
    }

    pub fn typing(&self) -> &GraphMorphism {
        &self.typing
    }

    pub fn node_type(&self, n: NodeId) -> NodeId {
        self.typing.node(n)
    }

    pub fn edge_type(&self, e: EdgeId) -> EdgeId {
        self.typing.edge(e)
    }

    /// Safe-mode check: the typing embeds the instance into the type graph.
    pub fn has_injective_typing(&self) -> bool {
        self.typing.is_mono()
    }

    /// Canonical key of a safe instance: the sorted set of type-graph item
    /// names in the typing image. Two safe instances over the same type graph
    /// are isomorphic iff their keys are equal.
    pub fn safe_key(&self) -> Vec<String> {
        debug_assert!(self.has_injective_typing());
        let tg = self.type_graph();
        let mut key: Vec<String> = self
            .graph()
            .node_ids()
            .map(|n| format!("n:{}", tg.node_name(self.node_type(n))))
            .chain(
                self.graph()
                    .edge_ids()
                    .map(|e| format!("e:{}", tg.edge_name(self.edge_type(e)))),
            )
            .collect();
        key.sort();
        key
    }

    /// Retypes along a morphism out of the current type graph
    /// (post-composition; the instance graph is untouched).
    pub fn retype_along(&self, f: &GraphMorphism) -> Result<TypedGraph, Error> {
        Ok(TypedGraph { typing: self.typing.then(f)? })
    }
}

/// Does `f` commute with the typings of `a` and `b`?
pub fn is_typed_morphism(f: &GraphMorphism, a: &TypedGraph, b: &TypedGraph) -> bool {
    if f.source() != a.graph() || f.target() != b.graph() {
        return false;
    }
    match f.then(b.typing()) {
        Ok(c) => c.agrees_with(a.typing()),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loop_graph() -> Arc<Graph> {
        Graph::from_parts(&["v"], &[("l", "v", "v")])
    }

    #[test]
    fn morphism_must_preserve_incidence() {
        let a = Graph::from_parts(&["x", "y"], &[("e", "x", "y")]);
        let b = Graph::from_parts(&["u", "v"], &[("f", "u", "v")]);
        // x->v, y->u flips the edge: rejected.
        let bad = GraphMorphism::new(
            Arc::clone(&a),
            Arc::clone(&b),
            vec![NodeId(1), NodeId(0)],
            vec![EdgeId(0)],
        );
        assert_eq!(bad, Err(Error::NotStructurePreserving("e".into())));
        let good = GraphMorphism::new(a, b, vec![NodeId(0), NodeId(1)], vec![EdgeId(0)]);
        assert!(good.is_ok());
    }

    #[test]
    fn composition_checks_endpoints() {
        let a = loop_graph();
        let b = Graph::from_parts(&["w"], &[("m", "w", "w")]);
        let id_a = GraphMorphism::identity(Arc::clone(&a));
        let ab = GraphMorphism::from_names(a, b, &[("v", "w")], &[("l", "m")]).unwrap();
        assert!(id_a.then(&ab).is_ok());
        assert_eq!(ab.then(&id_a), Err(Error::NotComposable));
    }

    #[test]
    fn mono_and_iso_detection() {
        let a = Graph::from_parts::<&str>(&["x", "y"], &[]);
        let b = Graph::from_parts::<&str>(&["u"], &[]);
        let collapse =
            GraphMorphism::new(a, Arc::clone(&b), vec![NodeId(0), NodeId(0)], vec![]).unwrap();
        assert!(!collapse.is_mono());
        let id = GraphMorphism::identity(b);
        assert!(id.is_iso());
        assert!(id.inverse().is_ok());
    }

    #[test]
    fn typed_graph_from_names_and_safe_key() {
        let tg = Graph::from_parts(&["A", "B"], &[("e", "A", "B")]);
        let g = TypedGraph::from_names(&tg, &[("a1", "A"), ("b1", "B")], &[("x", "e", "a1", "b1")]);
        assert!(g.has_injective_typing());
        assert_eq!(g.safe_key(), vec!["e:e", "n:A", "n:B"]);
    }
}
