//! Incrementality checking and classification of constraint shapes.
//!
//! The shape of a constraint `n: L -> N` is the initial-pushout
//! decomposition `n⁻: L⁻ -> N⁻`: the border holds the attachment nodes, the
//! body the forbidden items. Incremental constraints over plain graphs fall
//! into six forms; over a type graph each distinct typing of the body is its
//! own shape.

use std::fmt;

use thiserror::Error;

use crate::grammar::{ConditionalGrammar, Constraint};
use crate::graph::{
    self, canonical_key, initial_pushout, EdgeId, GraphMorphism, NodeId, TypedGraph,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("constraint `{0}` is not incremental: factorisations `{1}` and `{2}` are incomparable")]
    NotIncremental(String, String, String),
    #[error("constraint `{0}` is incremental but matches none of the six shape forms")]
    UnclassifiableShape(String),
    #[error(transparent)]
    Graph(#[from] graph::Error),
}

/// The six incremental shape forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShapeKind {
    /// A forbidden node with an edge into the border node.
    In,
    /// A forbidden node with an edge out of the border node.
    Out,
    /// A forbidden edge between two border nodes.
    E,
    /// A forbidden loop on the border node.
    L,
    /// A forbidden isolated node, empty border.
    N,
    /// A forbidden node carrying a loop, empty border.
    Nl,
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ShapeKind::In => "IN",
            ShapeKind::Out => "OUT",
            ShapeKind::E => "E",
            ShapeKind::L => "L",
            ShapeKind::N => "N",
            ShapeKind::Nl => "NL",
        };
        f.write_str(s)
    }
}

/// A typed shape: border, body, the shape morphism between them, and the
/// `(rule, constraint)` pairs it came from.
#[derive(Debug, Clone)]
pub struct TypedShape {
    pub kind: ShapeKind,
    /// `L⁻`, typed over the grammar's type graph. Always discrete.
    pub border: TypedGraph,
    /// `N⁻`, typed over the grammar's type graph.
    pub body: TypedGraph,
    /// `n⁻: L⁻ -> N⁻`.
    pub shape: GraphMorphism,
    pub origins: Vec<(String, String)>,
}

impl TypedShape {
    /// Nodes of the body outside the border image (the forbidden nodes).
    pub fn negative_nodes(&self) -> Vec<NodeId> {
        self.body
            .graph()
            .node_ids()
            .filter(|&v| self.shape.node_preimage(v).is_none())
            .collect()
    }

    /// All body edges are forbidden.
    pub fn negative_edges(&self) -> Vec<EdgeId> {
        self.body.graph().edge_ids().collect()
    }

    /// Canonical dedup key: body labelled with type names and a border flag.
    pub fn dedup_key(&self) -> String {
        let body = &self.body;
        let in_border: Vec<bool> = body
            .graph()
            .node_ids()
            .map(|v| self.shape.node_preimage(v).is_some())
            .collect();
        let tg = body.type_graph();
        let key = canonical_key(
            body.graph(),
            &|v: NodeId| {
                format!(
                    "{}{}",
                    tg.node_name(body.node_type(v)),
                    if in_border[v.0] { "^" } else { "-" }
                )
            },
            &|e: EdgeId| tg.edge_name(body.edge_type(e)).to_string(),
        );
        format!("{}:{}", self.kind, key)
    }
}

/// Is every pair of mono factorisations `L -> X -> N` comparable?
///
/// Factorisations are represented, up to iso, by subgraphs of `N` between
/// the lhs image and `N` itself; comparability is inclusion of images. The
/// enumeration walks every endpoint-closed subset of the negative items.
pub fn is_incremental(c: &Constraint) -> bool {
    incomparable_pair(c).is_none()
}

/// A witness pair of incomparable factorisations, if any, rendered as item
/// name lists.
pub fn incomparable_pair(c: &Constraint) -> Option<(String, String)> {
    let n = c.embedding();
    let target = n.target();
    let neg_nodes: Vec<NodeId> = target
        .node_ids()
        .filter(|&v| n.node_preimage(v).is_none())
        .collect();
    let neg_edges: Vec<EdgeId> = target
        .edge_ids()
        .filter(|&e| n.edge_preimage(e).is_none())
        .collect();
    let k = neg_nodes.len() + neg_edges.len();
    assert!(k <= 20, "constraint too large for exhaustive factorisation");

    let in_image = |v: NodeId| n.node_preimage(v).is_some();
    let mut closed_subsets: Vec<u64> = Vec::new();
    'subset: for mask in 0u64..(1 << k) {
        for (i, &e) in neg_edges.iter().enumerate() {
            if mask & (1 << (neg_nodes.len() + i)) == 0 {
                continue;
            }
            for v in [target.src(e), target.tgt(e)] {
                if in_image(v) {
                    continue;
                }
                let vi = neg_nodes.iter().position(|&x| x == v).unwrap();
                if mask & (1 << vi) == 0 {
                    continue 'subset;
                }
            }
        }
        closed_subsets.push(mask);
    }
    for (i, &a) in closed_subsets.iter().enumerate() {
        for &b in &closed_subsets[i + 1..] {
            if a & b != a && a & b != b {
                let render = |mask: u64| {
                    let mut items: Vec<&str> = Vec::new();
                    for (j, &v) in neg_nodes.iter().enumerate() {
                        if mask & (1 << j) != 0 {
                            items.push(target.node_name(v));
                        }
                    }
                    for (j, &e) in neg_edges.iter().enumerate() {
                        if mask & (1 << (neg_nodes.len() + j)) != 0 {
                            items.push(target.edge_name(e));
                        }
                    }
                    format!("L+{{{}}}", items.join(","))
                };
                return Some((render(a), render(b)));
            }
        }
    }
    None
}

/// Classifies an incremental constraint into its typed shape.
pub fn classify(rule: &str, c: &Constraint) -> Result<TypedShape, ShapeError> {
    if let Some((a, b)) = incomparable_pair(c) {
        return Err(ShapeError::NotIncremental(c.id().to_string(), a, b));
    }
    let ip = initial_pushout(c.embedding())?;

    // Type the border through L and the body through N.
    let border = TypedGraph::new(
        ip.border_in_context
            .then(&lhs_typing_of(c))
            .expect("border typing composes"),
    );
    let body = TypedGraph::new(
        ip.body_in_target
            .then(c.forbidden().typing())
            .expect("body typing composes"),
    );

    let neg_nodes: Vec<NodeId> = body
        .graph()
        .node_ids()
        .filter(|&v| ip.shape.node_preimage(v).is_none())
        .collect();
    let edges: Vec<EdgeId> = body.graph().edge_ids().collect();
    let border_n = border.graph().node_count();

    let kind = match (border_n, neg_nodes.len(), edges.len()) {
        (2, 0, 1) => {
            let e = edges[0];
            let (s, t) = (body.graph().src(e), body.graph().tgt(e));
            if s != t {
                Some(ShapeKind::E)
            } else {
                None
            }
        }
        (1, 0, 1) => {
            let e = edges[0];
            (body.graph().src(e) == body.graph().tgt(e)).then_some(ShapeKind::L)
        }
        (1, 1, 1) => {
            let e = edges[0];
            let u = neg_nodes[0];
            let (s, t) = (body.graph().src(e), body.graph().tgt(e));
            if s == u && t != u {
                Some(ShapeKind::In)
            } else if t == u && s != u {
                Some(ShapeKind::Out)
            } else {
                None
            }
        }
        (0, 1, 0) => Some(ShapeKind::N),
        (0, 1, 1) => {
            let e = edges[0];
            (body.graph().src(e) == neg_nodes[0] && body.graph().tgt(e) == neg_nodes[0])
                .then_some(ShapeKind::Nl)
        }
        _ => None,
    };
    let kind = kind.ok_or_else(|| ShapeError::UnclassifiableShape(c.id().to_string()))?;
    Ok(TypedShape {
        kind,
        border,
        body,
        shape: ip.shape,
        origins: vec![(rule.to_string(), c.id().to_string())],
    })
}

fn lhs_typing_of(c: &Constraint) -> GraphMorphism {
    // The lhs typing factors through the forbidden graph's typing.
    c.embedding()
        .then(c.forbidden().typing())
        .expect("constraint embedding is typed")
}

/// All typed shapes of the grammar, deduplicated up to typed iso, with
/// origin bookkeeping, in first-occurrence order.
pub fn shapes_of(g: &ConditionalGrammar) -> Result<Vec<TypedShape>, ShapeError> {
    let mut shapes: Vec<TypedShape> = Vec::new();
    for rule in g.rules() {
        for c in g.nacs_of(rule.name()) {
            let s = classify(rule.name(), c)?;
            let key = s.dedup_key();
            match shapes.iter_mut().find(|t| t.dedup_key() == key) {
                Some(existing) => existing.origins.extend(s.origins),
                None => shapes.push(s),
            }
        }
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, client_server, safe_nac, safe_rule};
    use crate::graph::Graph;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn every_client_server_nac_is_incremental() {
        let cs = client_server();
        for rule in cs.rules() {
            for c in cs.nacs_of(rule.name()) {
                assert!(is_incremental(c), "{}", c.id());
            }
        }
    }

    #[test]
    fn two_independent_forbidden_edges_are_not_incremental() {
        let tg = Graph::from_parts(
            &["A", "B"],
            &[("e", "A", "B"), ("f", "B", "A")],
        );
        let lhs = fixtures::safe_instance(&tg, &["A", "B"], &[]);
        let n = fixtures::safe_instance(&tg, &["A", "B"], &["e", "f"]);
        let emb = GraphMorphism::by_common_names(
            Arc::clone(lhs.graph()),
            Arc::clone(n.graph()),
        )
        .unwrap();
        let c = Constraint::new("two-edges", &lhs, emb, n).unwrap();
        assert!(!is_incremental(&c));
        let (a, b) = incomparable_pair(&c).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn classification_matches_the_running_example() {
        let cs = client_server();
        let kind_of = |rule: &str| {
            classify(rule, &cs.nacs_of(rule)[0]).unwrap().kind
        };
        assert_eq!(kind_of("sm(S1)"), ShapeKind::In);
        assert_eq!(kind_of("pc(C2)"), ShapeKind::Out);
        assert_eq!(kind_of("jm(C3,M2)"), ShapeKind::E);
    }

    #[test]
    fn client_server_has_eight_distinct_typed_shapes() {
        let cs = client_server();
        let shapes = shapes_of(&cs).unwrap();
        assert_eq!(shapes.len(), 8);
        let count = |k: ShapeKind| shapes.iter().filter(|s| s.kind == k).count();
        assert_eq!(count(ShapeKind::Out), 2);
        assert_eq!(count(ShapeKind::In), 2);
        assert_eq!(count(ShapeKind::E), 4);
    }

    #[test]
    fn grammar_without_nacs_has_no_shapes() {
        let cs = client_server().without_nacs();
        assert!(shapes_of(&cs).unwrap().is_empty());
    }

    #[test]
    fn identically_typed_shapes_merge_with_two_origins() {
        // Two rules over the same types forbidding the same edge.
        let tg = Graph::from_parts(&["A", "B"], &[("e", "A", "B")]);
        let start = fixtures::safe_instance(&tg, &["A", "B"], &[]);
        let r1 = safe_rule(&tg, "r1", (&["A", "B"], &[]), (&["A", "B"], &[]), (&["A", "B"], &["e"]));
        let r2 = safe_rule(&tg, "r2", (&["A", "B"], &[]), (&["A", "B"], &[]), (&["A", "B"], &[]));
        let mut nacs = BTreeMap::new();
        nacs.insert("r1".into(), vec![safe_nac(&tg, &r1, "n1", (&["A", "B"], &["e"]))]);
        nacs.insert("r2".into(), vec![safe_nac(&tg, &r2, "n2", (&["A", "B"], &["e"]))]);
        let g = ConditionalGrammar::new(tg, start, vec![r1, r2], nacs, true).unwrap();
        let shapes = shapes_of(&g).unwrap();
        assert_eq!(shapes.len(), 1);
        assert_eq!(shapes[0].origins.len(), 2);
    }

    #[test]
    fn isolated_forbidden_node_classifies_as_n_shape() {
        let tg = Graph::from_parts::<&str>(&["A", "B"], &[]);
        let lhs = fixtures::safe_instance(&tg, &["A"], &[]);
        let n = fixtures::safe_instance(&tg, &["A", "B"], &[]);
        let emb =
            GraphMorphism::by_common_names(Arc::clone(lhs.graph()), Arc::clone(n.graph())).unwrap();
        let c = Constraint::new("iso-node", &lhs, emb, n).unwrap();
        let shape = classify("r", &c).unwrap();
        assert_eq!(shape.kind, ShapeKind::N);
        assert!(shape.border.graph().is_empty());
    }
}
