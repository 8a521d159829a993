//! Counter-based encoding of constraints for attributed grammars.
//!
//! Per constraint shape:
//! - shape `E` gets a complement edge type `bar(<edge>)` carrying a counter
//!   `n` equal to the number of parallel real edges;
//! - shapes `IN`/`OUT` get a counter attribute `num(<edge>)` on the border
//!   node type, equal to the number of incident occurrences.
//!
//! Rules are rewritten to test the counters instead of the constraints and
//! to keep them accurate: rules that create or delete occurrences adjust
//! the counters, rules that create or delete a border node of an `E` shape
//! gain the complement edges for every partner, with a multiobject role
//! standing for the partners the rule does not mention. Node types touched
//! this way also carry `nbar(<edge>)` attributes counting their attached
//! complement edges.
//!
//! The start graph is closed with a complement edge per border pair and all
//! counters initialised from actual occurrence counts.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::grammar::Rule;
use crate::graph::{initial_pushout, Graph, GraphMorphism, NodeId, TypedGraph};
use crate::shapes::{classify, shapes_of, ShapeKind, TypedShape};

use super::{
    AttrError, AttrExpr, AttrFamily, AttrFamilyMember, AttrGrammar, AttrRule, AttrTypeGraph,
    AttributedGraph, CmpOp, GuardAtom, ItemKind, ItemRef, Update,
};

/// A cardinality equation maintained by the encoded grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CounterInvariant {
    /// Every `complement_type` edge's `n` equals the number of parallel
    /// `real_type` edges (same endpoints).
    ParallelEdges { complement_type: String, real_type: String },
    /// Every node of `node_type` carries `attr` equal to the number of its
    /// incident `real_type` edges (incoming when `incoming`).
    BorderOccurrences { node_type: String, attr: String, real_type: String, incoming: bool },
    /// Every node of `node_type` carries `attr` equal to the number of its
    /// attached `complement_type` edges (at the source end when
    /// `at_source`).
    AttachedComplements { node_type: String, attr: String, complement_type: String, at_source: bool },
}

/// The encoded grammar plus everything needed to check and erase it.
#[derive(Debug, Clone)]
pub struct CounterEncoding {
    pub grammar: AttrGrammar,
    pub invariants: Vec<CounterInvariant>,
    /// Names of the complement edge types added to the type graph.
    pub complement_types: Vec<String>,
    /// `(node type, attr)` pairs added by the encoding.
    pub added_node_attrs: Vec<(String, String)>,
    /// Encoded rule (or instance) name to original rule name.
    pub rule_origin: BTreeMap<String, String>,
}

// Shape bookkeeping resolved to type names.
#[derive(Debug, Clone)]
struct EShape {
    real: String,
    complement: String,
    src_ty: String,
    tgt_ty: String,
}

#[derive(Debug, Clone)]
struct BorderShape {
    real: String,
    attr: String,
    /// True when the negative edge points at the border node (shape IN).
    incoming: bool,
    border_ty: String,
}

/// Encodes the grammar's constraints into counters; the result has no
/// constraints. `k_max` bounds multiobject expansion per role; the default
/// is the number of nodes of the role's type in the start graph.
pub fn encode_counters(
    g: &AttrGrammar,
    k_max: Option<usize>,
) -> Result<CounterEncoding, AttrError> {
    g.validate()?;
    let structural = g.structural()?;
    let shapes = shapes_of(&structural)?;

    let tg = &g.type_graph.graph;
    let mut e_shapes: Vec<EShape> = Vec::new();
    let mut b_shapes: Vec<BorderShape> = Vec::new();
    for s in &shapes {
        match s.kind {
            ShapeKind::E => {
                let e = s.body.graph().edge_ids().next().expect("E shape has one edge");
                let real = tg.edge_name(s.body.edge_type(e)).to_string();
                e_shapes.push(EShape {
                    complement: format!("bar({real})"),
                    src_ty: tg
                        .node_name(s.body.node_type(s.body.graph().src(e)))
                        .to_string(),
                    tgt_ty: tg
                        .node_name(s.body.node_type(s.body.graph().tgt(e)))
                        .to_string(),
                    real,
                });
            }
            ShapeKind::In | ShapeKind::Out => {
                let e = s.body.graph().edge_ids().next().expect("shape has one edge");
                let real = tg.edge_name(s.body.edge_type(e)).to_string();
                let border_v = s.shape.node(NodeId(0));
                b_shapes.push(BorderShape {
                    attr: format!("num({real})"),
                    incoming: s.kind == ShapeKind::In,
                    border_ty: tg.node_name(s.body.node_type(border_v)).to_string(),
                    real,
                });
            }
            other => return Err(AttrError::UnsupportedShape(other)),
        }
    }

    // Node types created or deleted by some rule need complement-count
    // attributes for every E shape they border.
    let mut touched_types: Vec<String> = Vec::new();
    for r in &g.rules {
        for v in r.base.created_nodes() {
            touched_types.push(tg.node_name(r.base.rhs().node_type(v)).to_string());
        }
        for v in r.base.deleted_nodes() {
            touched_types.push(tg.node_name(r.base.lhs().node_type(v)).to_string());
        }
    }
    touched_types.sort();
    touched_types.dedup();

    // Enriched type graph and attribute declarations.
    let mut bar_graph = (**tg).clone();
    for es in &e_shapes {
        let s = bar_graph.node(&es.src_ty).expect("source type exists");
        let t = bar_graph.node(&es.tgt_ty).expect("target type exists");
        bar_graph.add_edge(&es.complement, s, t);
    }
    let bar_graph = Arc::new(bar_graph);
    let mut node_attrs = g.type_graph.node_attrs.clone();
    let mut edge_attrs = g.type_graph.edge_attrs.clone();
    let mut added_node_attrs = Vec::new();
    for es in &e_shapes {
        edge_attrs
            .entry(es.complement.clone())
            .or_default()
            .push("n".to_string());
    }
    for bs in &b_shapes {
        node_attrs
            .entry(bs.border_ty.clone())
            .or_default()
            .push(bs.attr.clone());
        added_node_attrs.push((bs.border_ty.clone(), bs.attr.clone()));
    }
    let mut invariants: Vec<CounterInvariant> = e_shapes
        .iter()
        .map(|es| CounterInvariant::ParallelEdges {
            complement_type: es.complement.clone(),
            real_type: es.real.clone(),
        })
        .chain(b_shapes.iter().map(|bs| CounterInvariant::BorderOccurrences {
            node_type: bs.border_ty.clone(),
            attr: bs.attr.clone(),
            real_type: bs.real.clone(),
            incoming: bs.incoming,
        }))
        .collect();
    for ty in &touched_types {
        for es in &e_shapes {
            let at_source = es.src_ty == *ty;
            let at_target = es.tgt_ty == *ty;
            if !at_source && !at_target {
                continue;
            }
            let attr = format!("nbar({})", es.real);
            node_attrs.entry(ty.clone()).or_default().push(attr.clone());
            added_node_attrs.push((ty.clone(), attr.clone()));
            invariants.push(CounterInvariant::AttachedComplements {
                node_type: ty.clone(),
                attr,
                complement_type: es.complement.clone(),
                at_source,
            });
        }
    }
    let bar_tg = AttrTypeGraph { graph: Arc::clone(&bar_graph), node_attrs, edge_attrs };

    // Transform every rule.
    let mut encoded_rules = Vec::new();
    let mut rule_origin = BTreeMap::new();
    for r in &g.rules {
        let enc = encode_rule(g, &bar_tg, r, &e_shapes, &b_shapes, &touched_types)?;
        rule_origin.insert(enc.base.name().to_string(), r.name().to_string());
        encoded_rules.push(enc);
    }

    // Close the start graph.
    let start = close_start(g, &bar_tg, &e_shapes, &b_shapes, &touched_types)?;

    // Expand multiobject schemata into bounded instance families.
    let mut final_rules = Vec::new();
    let mut schemata = Vec::new();
    let mut final_origin = BTreeMap::new();
    for enc in encoded_rules {
        let original = rule_origin[enc.base.name()].clone();
        if enc.multiobjects.is_empty() {
            final_origin.insert(enc.base.name().to_string(), original);
            final_rules.push(enc);
            continue;
        }
        // Per-role bound: the explicit override, or the number of nodes of
        // the role's type in the start graph.
        let mut bounds: BTreeMap<String, usize> = BTreeMap::new();
        for role in &enc.multiobjects {
            let role_ty = role_type(&enc, role);
            let count = g
                .start
                .skeleton
                .graph()
                .node_ids()
                .filter(|&v| {
                    g.type_graph
                        .graph
                        .node_name(g.start.skeleton.node_type(v))
                        == role_ty
                })
                .count();
            bounds.insert(role.clone(), k_max.unwrap_or(count));
        }
        let instances = super::expand_multiobjects_with(&enc, &|role| bounds[role]);
        let core = instances
            .iter()
            .min_by_key(|r| r.base.lhs().graph().node_count() + r.base.lhs().graph().edge_count())
            .expect("at least the zero-copy instance")
            .base
            .lhs()
            .clone();
        let mut members: Vec<AttrFamilyMember> = Vec::new();
        let mut with_sizes: Vec<(usize, AttrRule)> = instances
            .into_iter()
            .map(|r| {
                let size =
                    r.base.lhs().graph().node_count() + r.base.lhs().graph().edge_count();
                (size, r)
            })
            .collect();
        with_sizes.sort_by(|(sa, ra), (sb, rb)| {
            sb.cmp(sa).then(ra.base.name().cmp(rb.base.name()))
        });
        for (_, inst) in with_sizes {
            let core_to_lhs = GraphMorphism::by_common_names(
                Arc::clone(core.graph()),
                Arc::clone(inst.base.lhs().graph()),
            )
            .expect("instances extend the zero-copy core");
            members.push(AttrFamilyMember {
                rule: inst.base.name().to_string(),
                core_to_lhs,
            });
            final_origin.insert(inst.base.name().to_string(), original.clone());
            final_rules.push(inst);
        }
        schemata.push(AttrFamily { original: original.clone(), core, members });
    }

    let grammar = AttrGrammar {
        type_graph: bar_tg,
        start,
        rules: final_rules,
        nacs: BTreeMap::new(),
        schemata,
    };
    grammar.validate()?;
    Ok(CounterEncoding {
        grammar,
        invariants,
        complement_types: e_shapes.iter().map(|e| e.complement.clone()).collect(),
        added_node_attrs,
        rule_origin: final_origin,
    })
}

fn role_type(rule: &AttrRule, role: &str) -> String {
    let v = rule.base.lhs().graph().node(role).expect("role exists");
    rule.base
        .lhs()
        .type_graph()
        .node_name(rule.base.lhs().node_type(v))
        .to_string()
}

// A mutable name-based rule description; preserved items share names across
// the three graphs.
struct RuleBuilder {
    name: String,
    l_nodes: Vec<(String, String)>,
    l_edges: Vec<(String, String, String, String)>,
    k_nodes: Vec<String>,
    k_edges: Vec<String>,
    r_nodes: Vec<(String, String)>,
    r_edges: Vec<(String, String, String, String)>,
    guard: Vec<GuardAtom>,
    updates: Vec<Update>,
    roles: Vec<String>,
}

impl RuleBuilder {
    fn from_rule(r: &AttrRule) -> Result<RuleBuilder, AttrError> {
        let base = &r.base;
        let tg = base.lhs().type_graph();
        let graph_items = |g: &TypedGraph| {
            let nodes: Vec<(String, String)> = g
                .graph()
                .node_ids()
                .map(|v| {
                    (
                        g.graph().node_name(v).to_string(),
                        tg.node_name(g.node_type(v)).to_string(),
                    )
                })
                .collect();
            let edges: Vec<(String, String, String, String)> = g
                .graph()
                .edge_ids()
                .map(|e| {
                    (
                        g.graph().edge_name(e).to_string(),
                        tg.edge_name(g.edge_type(e)).to_string(),
                        g.graph().node_name(g.graph().src(e)).to_string(),
                        g.graph().node_name(g.graph().tgt(e)).to_string(),
                    )
                })
                .collect();
            (nodes, edges)
        };
        // The encoder relies on preserved items sharing their name in all
        // three rule graphs.
        for v in base.interface().graph().node_ids() {
            let name = base.interface().graph().node_name(v);
            let in_l = base.lhs().graph().node_name(base.to_lhs().node(v));
            let in_r = base.rhs().graph().node_name(base.to_rhs().node(v));
            if name != in_l || name != in_r {
                return Err(AttrError::BadRole(format!(
                    "preserved item `{name}` must keep its name in lhs and rhs"
                )));
            }
        }
        let (l_nodes, l_edges) = graph_items(base.lhs());
        let (r_nodes, r_edges) = graph_items(base.rhs());
        let k_nodes = base
            .interface()
            .graph()
            .node_ids()
            .map(|v| base.interface().graph().node_name(v).to_string())
            .collect();
        let k_edges = base
            .interface()
            .graph()
            .edge_ids()
            .map(|e| base.interface().graph().edge_name(e).to_string())
            .collect();
        Ok(RuleBuilder {
            name: format!("bar({})", base.name()),
            l_nodes,
            l_edges,
            k_nodes,
            k_edges,
            r_nodes,
            r_edges,
            guard: r.guard.clone(),
            updates: r.updates.clone(),
            roles: r.multiobjects.clone(),
        })
    }

    fn fresh_edge_name(&self, base: &str) -> String {
        let taken: Vec<&str> = self
            .l_edges
            .iter()
            .chain(self.r_edges.iter())
            .map(|(n, _, _, _)| n.as_str())
            .collect();
        let mut name = base.to_string();
        let mut k = 2;
        while taken.contains(&name.as_str()) {
            name = format!("{base}#{k}");
            k += 1;
        }
        name
    }

    fn fresh_node_name(&self, base: &str) -> String {
        let taken: Vec<&str> = self
            .l_nodes
            .iter()
            .chain(self.r_nodes.iter())
            .map(|(n, _)| n.as_str())
            .collect();
        let mut name = base.to_string();
        let mut k = 2;
        while taken.contains(&name.as_str()) {
            name = format!("{base}#{k}");
            k += 1;
        }
        name
    }

    /// A preserved complement edge between preserved nodes; reused when one
    /// of the same type already links the pair.
    fn ensure_preserved_edge(&mut self, ty: &str, src: &str, tgt: &str) -> String {
        if let Some((n, ..)) = self
            .l_edges
            .iter()
            .find(|(n, t, s, g)| t == ty && s == src && g == tgt && self.k_edges.contains(n))
        {
            return n.clone();
        }
        let name = self.fresh_edge_name(&format!("{ty}@{src}-{tgt}"));
        self.l_edges.push((name.clone(), ty.into(), src.into(), tgt.into()));
        self.k_edges.push(name.clone());
        self.r_edges.push((name.clone(), ty.into(), src.into(), tgt.into()));
        name
    }

    fn add_deleted_edge(&mut self, ty: &str, src: &str, tgt: &str) -> String {
        let name = self.fresh_edge_name(&format!("{ty}@{src}-{tgt}"));
        self.l_edges.push((name.clone(), ty.into(), src.into(), tgt.into()));
        name
    }

    fn add_created_edge(&mut self, ty: &str, src: &str, tgt: &str) -> String {
        let name = self.fresh_edge_name(&format!("{ty}@{src}-{tgt}"));
        self.r_edges.push((name.clone(), ty.into(), src.into(), tgt.into()));
        name
    }

    fn add_role_node(&mut self, ty: &str, base: &str) -> String {
        let name = self.fresh_node_name(base);
        self.l_nodes.push((name.clone(), ty.into()));
        self.k_nodes.push(name.clone());
        self.r_nodes.push((name.clone(), ty.into()));
        self.roles.push(name.clone());
        name
    }

    fn require_zero(&mut self, edge: &str) {
        self.guard.push(GuardAtom::Cmp(
            AttrExpr::read(ItemRef::edge(edge), "n"),
            CmpOp::Eq,
            AttrExpr::Const(0),
        ));
    }

    fn emit(self, tg: &AttrTypeGraph) -> Result<AttrRule, AttrError> {
        let build = |nodes: &[(String, String)],
                     edges: &[(String, String, String, String)]|
         -> TypedGraph {
            let nodes: Vec<(&str, &str)> =
                nodes.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let edges: Vec<(&str, &str, &str, &str)> = edges
                .iter()
                .map(|(a, b, c, d)| (a.as_str(), b.as_str(), c.as_str(), d.as_str()))
                .collect();
            TypedGraph::from_names(&tg.graph, &nodes, &edges)
        };
        let l = build(&self.l_nodes, &self.l_edges);
        let k_nodes: Vec<(String, String)> = self
            .l_nodes
            .iter()
            .filter(|(n, _)| self.k_nodes.contains(n))
            .cloned()
            .collect();
        let k_edges: Vec<(String, String, String, String)> = self
            .l_edges
            .iter()
            .filter(|(n, ..)| self.k_edges.contains(n))
            .cloned()
            .collect();
        let k = build(&k_nodes, &k_edges);
        let r = build(&self.r_nodes, &self.r_edges);
        let to_lhs =
            GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(l.graph()))
                .expect("interface embeds in lhs by name");
        let to_rhs =
            GraphMorphism::by_common_names(Arc::clone(k.graph()), Arc::clone(r.graph()))
                .expect("interface embeds in rhs by name");
        let base = Rule::new(&self.name, l, k, r, to_lhs, to_rhs)
            .map_err(AttrError::Grammar)?;
        let rule = AttrRule {
            base,
            guard: self.guard,
            updates: self.updates,
            multiobjects: self.roles,
        };
        rule.validate(tg)?;
        Ok(rule)
    }
}

/// Encodes one rule: constraint tests become counter guards, counter
/// maintenance updates are added, border-node creation/deletion grows
/// complement edges and multiobject roles.
fn encode_rule(
    g: &AttrGrammar,
    bar_tg: &AttrTypeGraph,
    r: &AttrRule,
    e_shapes: &[EShape],
    b_shapes: &[BorderShape],
    touched_types: &[String],
) -> Result<AttrRule, AttrError> {
    let mut rb = RuleBuilder::from_rule(r)?;
    let tg = &g.type_graph.graph;
    let base = &r.base;
    let lhs = base.lhs();

    // Constraint tests (each constraint, by its shape).
    for c in g.nacs_of(r.name()) {
        let shape = classify(r.name(), c)?;
        let ip = initial_pushout(c.embedding())?;
        match shape.kind {
            ShapeKind::E => {
                let e = shape.body.graph().edge_ids().next().unwrap();
                let real = tg.edge_name(shape.body.edge_type(e)).to_string();
                let es = e_shapes.iter().find(|s| s.real == real).unwrap();
                // Border nodes located in the lhs by the initial pushout.
                let src_b = ip
                    .body_in_target
                    .node_preimage(c.embedding().node(NodeId(0)))
                    .is_some();
                let _ = src_b;
                let find_l = |body_node: NodeId| -> String {
                    let in_n = ip.body_in_target.node(body_node);
                    let in_l = c
                        .embedding()
                        .node_preimage(in_n)
                        .expect("border nodes come from the lhs");
                    lhs.graph().node_name(in_l).to_string()
                };
                let src = find_l(shape.body.graph().src(e));
                let tgt = find_l(shape.body.graph().tgt(e));
                let edge = rb.ensure_preserved_edge(&es.complement, &src, &tgt);
                rb.require_zero(&edge);
            }
            ShapeKind::In | ShapeKind::Out => {
                let e = shape.body.graph().edge_ids().next().unwrap();
                let real = tg.edge_name(shape.body.edge_type(e)).to_string();
                let bs = b_shapes.iter().find(|s| s.real == real).unwrap();
                let border_body = shape.shape.node(NodeId(0));
                let in_l = c
                    .embedding()
                    .node_preimage(ip.body_in_target.node(border_body))
                    .expect("border node comes from the lhs");
                let border = lhs.graph().node_name(in_l).to_string();
                rb.guard.push(GuardAtom::Cmp(
                    AttrExpr::read(ItemRef::node(&border), &bs.attr),
                    CmpOp::Eq,
                    AttrExpr::Const(0),
                ));
            }
            other => return Err(AttrError::UnsupportedShape(other)),
        }
    }

    // Counter maintenance for real edges created or deleted between
    // preserved endpoints.
    let preserved_node = |side: &TypedGraph, leg: &GraphMorphism, v: NodeId| -> Option<String> {
        leg.node_preimage(v)
            .map(|_| side.graph().node_name(v).to_string())
    };
    let mut adjust: BTreeMap<String, i64> = BTreeMap::new(); // complement edge -> delta
    let mut border_adjust: BTreeMap<(String, String), i64> = BTreeMap::new(); // (node, attr) -> delta
    for e in base.created_edges() {
        let real = tg.edge_name(base.rhs().edge_type(e)).to_string();
        let (s, t) = (base.rhs().graph().src(e), base.rhs().graph().tgt(e));
        if let Some(es) = e_shapes.iter().find(|x| x.real == real) {
            if let (Some(sn), Some(tn)) = (
                preserved_node(base.rhs(), base.to_rhs(), s),
                preserved_node(base.rhs(), base.to_rhs(), t),
            ) {
                let edge = rb.ensure_preserved_edge(&es.complement, &sn, &tn);
                *adjust.entry(edge).or_insert(0) += 1;
            }
        }
        if let Some(bs) = b_shapes.iter().find(|x| x.real == real) {
            let border = if bs.incoming { t } else { s };
            if let Some(bn) = preserved_node(base.rhs(), base.to_rhs(), border) {
                *border_adjust.entry((bn, bs.attr.clone())).or_insert(0) += 1;
            }
        }
    }
    for e in base.deleted_edges() {
        let real = tg.edge_name(base.lhs().edge_type(e)).to_string();
        let (s, t) = (base.lhs().graph().src(e), base.lhs().graph().tgt(e));
        if let Some(es) = e_shapes.iter().find(|x| x.real == real) {
            if let (Some(sn), Some(tn)) = (
                preserved_node(base.lhs(), base.to_lhs(), s),
                preserved_node(base.lhs(), base.to_lhs(), t),
            ) {
                let edge = rb.ensure_preserved_edge(&es.complement, &sn, &tn);
                *adjust.entry(edge).or_insert(0) -= 1;
            }
        }
        if let Some(bs) = b_shapes.iter().find(|x| x.real == real) {
            let border = if bs.incoming { t } else { s };
            if let Some(bn) = preserved_node(base.lhs(), base.to_lhs(), border) {
                *border_adjust.entry((bn, bs.attr.clone())).or_insert(0) -= 1;
            }
        }
    }
    for (edge, delta) in &adjust {
        if *delta == 0 {
            continue;
        }
        rb.updates.push(Update {
            item: ItemRef::edge(edge),
            attr: "n".into(),
            expr: AttrExpr::read(ItemRef::edge(edge), "n").plus(*delta),
        });
    }
    for ((node, attr), delta) in &border_adjust {
        if *delta == 0 {
            continue;
        }
        rb.updates.push(Update {
            item: ItemRef::node(node),
            attr: attr.clone(),
            expr: AttrExpr::read(ItemRef::node(node), attr).plus(*delta),
        });
    }

    // Created border node of an IN/OUT shape: its counter starts at the
    // number of occurrences created with it.
    for v in base.created_nodes() {
        let ty = tg.node_name(base.rhs().node_type(v)).to_string();
        for bs in b_shapes.iter().filter(|b| b.border_ty == ty) {
            let count = base
                .created_edges()
                .iter()
                .filter(|&&e| {
                    let border =
                        if bs.incoming { base.rhs().graph().tgt(e) } else { base.rhs().graph().src(e) };
                    tg.edge_name(base.rhs().edge_type(e)) == bs.real && border == v
                })
                .count() as i64;
            rb.updates.push(Update {
                item: ItemRef::node(base.rhs().graph().node_name(v)),
                attr: bs.attr.clone(),
                expr: AttrExpr::Const(count),
            });
        }
    }

    // Border-node creation/deletion for E shapes: complement edges for
    // every explicit partner, a multiobject role for the rest, and the
    // attached-complement counters on the node itself.
    encode_border_node_changes(&mut rb, g, base, e_shapes, touched_types, true)?;
    encode_border_node_changes(&mut rb, g, base, e_shapes, touched_types, false)?;

    rb.emit(bar_tg)
}

fn encode_border_node_changes(
    rb: &mut RuleBuilder,
    g: &AttrGrammar,
    base: &Rule,
    e_shapes: &[EShape],
    touched_types: &[String],
    creation: bool,
) -> Result<(), AttrError> {
    let tg = &g.type_graph.graph;
    let (side, changed_nodes) = if creation {
        (base.rhs(), base.created_nodes())
    } else {
        (base.lhs(), base.deleted_nodes())
    };
    for v in changed_nodes {
        let vty = tg.node_name(side.node_type(v)).to_string();
        if !touched_types.contains(&vty) {
            continue;
        }
        let v_name = side.graph().node_name(v).to_string();
        // Partner types over all E shapes at this node type.
        let mut partner_types: Vec<String> = Vec::new();
        for es in e_shapes {
            if es.src_ty == vty {
                partner_types.push(es.tgt_ty.clone());
            }
            if es.tgt_ty == vty {
                partner_types.push(es.src_ty.clone());
            }
        }
        partner_types.sort();
        partner_types.dedup();

        for w_ty in partner_types {
            let shapes_here: Vec<&EShape> = e_shapes
                .iter()
                .filter(|es| {
                    (es.src_ty == vty && es.tgt_ty == w_ty)
                        || (es.tgt_ty == vty && es.src_ty == w_ty)
                })
                .collect();
            // Explicit partners: nodes of the partner type on the relevant
            // side of the rule, other than the changed node itself.
            let explicit: Vec<String> = side
                .graph()
                .node_ids()
                .filter(|&w| {
                    w != v && tg.node_name(side.node_type(w)) == w_ty
                })
                .map(|w| side.graph().node_name(w).to_string())
                .collect();
            // Count real parallel edges per shape and partner.
            let real_count = |es: &EShape, w: &str| -> i64 {
                let edges = if creation { base.created_edges() } else { base.deleted_edges() };
                edges
                    .iter()
                    .filter(|&&e| {
                        let (s, t) = (side.graph().src(e), side.graph().tgt(e));
                        tg.edge_name(side.edge_type(e)) == es.real
                            && ((side.graph().node_name(s) == v_name
                                && side.graph().node_name(t) == w)
                                || (side.graph().node_name(s) == w
                                    && side.graph().node_name(t) == v_name))
                    })
                    .count() as i64
            };
            let mut explicit_per_shape: BTreeMap<String, i64> = BTreeMap::new();
            for w in &explicit {
                for es in &shapes_here {
                    let (src, tgt) = if es.src_ty == vty {
                        (v_name.clone(), w.clone())
                    } else {
                        (w.clone(), v_name.clone())
                    };
                    let n = real_count(es, w);
                    if creation {
                        let edge = rb.add_created_edge(&es.complement, &src, &tgt);
                        rb.updates.push(Update {
                            item: ItemRef::edge(&edge),
                            attr: "n".into(),
                            expr: AttrExpr::Const(n),
                        });
                    } else {
                        let edge = rb.add_deleted_edge(&es.complement, &src, &tgt);
                        rb.guard.push(GuardAtom::Cmp(
                            AttrExpr::read(ItemRef::edge(&edge), "n"),
                            CmpOp::Eq,
                            AttrExpr::Const(n),
                        ));
                    }
                    *explicit_per_shape.entry(es.complement.clone()).or_insert(0) += 1;
                }
            }
            // A role is needed when some shape here has no real-edge
            // activity at the changed node (partners the rule does not
            // determine).
            let needs_role = shapes_here.iter().any(|es| {
                let edges = if creation { base.created_edges() } else { base.deleted_edges() };
                !edges.iter().any(|&e| {
                    tg.edge_name(side.edge_type(e)) == es.real && {
                        let (s, t) = (side.graph().src(e), side.graph().tgt(e));
                        side.graph().node_name(s) == v_name || side.graph().node_name(t) == v_name
                    }
                })
            });
            let role = if needs_role {
                Some(rb.add_role_node(&w_ty, &format!("all{}", w_ty)))
            } else {
                None
            };
            if let Some(role_name) = &role {
                for es in &shapes_here {
                    let (src, tgt) = if es.src_ty == vty {
                        (v_name.clone(), role_name.clone())
                    } else {
                        (role_name.clone(), v_name.clone())
                    };
                    if creation {
                        let edge = rb.add_created_edge(&es.complement, &src, &tgt);
                        rb.updates.push(Update {
                            item: ItemRef::edge(&edge),
                            attr: "n".into(),
                            expr: AttrExpr::Const(0),
                        });
                    } else {
                        let edge = rb.add_deleted_edge(&es.complement, &src, &tgt);
                        rb.require_zero(&edge);
                    }
                }
            }
            // Attached-complement counters on the changed node.
            for es in &shapes_here {
                let attr = format!("nbar({})", es.real);
                let explicit_n = explicit_per_shape.get(&es.complement).copied().unwrap_or(0);
                let total = if let Some(role_name) = &role {
                    AttrExpr::Add(
                        Box::new(AttrExpr::Const(explicit_n)),
                        Box::new(AttrExpr::RoleCount(role_name.clone())),
                    )
                } else {
                    AttrExpr::Const(explicit_n)
                };
                if creation {
                    rb.updates.push(Update {
                        item: ItemRef::node(&v_name),
                        attr,
                        expr: total,
                    });
                } else {
                    rb.guard.push(GuardAtom::Cmp(
                        AttrExpr::read(ItemRef::node(&v_name), &attr),
                        CmpOp::Eq,
                        total,
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Extends the start graph with one complement edge per border pair and
/// initialises every counter from actual occurrence counts.
fn close_start(
    g: &AttrGrammar,
    bar_tg: &AttrTypeGraph,
    e_shapes: &[EShape],
    b_shapes: &[BorderShape],
    touched_types: &[String],
) -> Result<AttributedGraph, AttrError> {
    let tg = &g.type_graph.graph;
    let skel = &g.start.skeleton;
    let sg = skel.graph();

    let mut out = Graph::new();
    let mut node_types = Vec::new();
    for v in sg.node_ids() {
        out.add_node(sg.node_name(v));
        node_types.push(bar_tg.graph.node(tg.node_name(skel.node_type(v))).unwrap());
    }
    let mut edge_types = Vec::new();
    for e in sg.edge_ids() {
        let s = out.node(sg.node_name(sg.src(e))).unwrap();
        let t = out.node(sg.node_name(sg.tgt(e))).unwrap();
        out.add_edge(sg.edge_name(e), s, t);
        edge_types.push(bar_tg.graph.edge(tg.edge_name(skel.edge_type(e))).unwrap());
    }
    let mut values = g.start.values.clone();

    // Complement edges for every border pair present in the start graph.
    for es in e_shapes {
        let sources: Vec<String> = sg
            .node_ids()
            .filter(|&v| tg.node_name(skel.node_type(v)) == es.src_ty)
            .map(|v| sg.node_name(v).to_string())
            .collect();
        let targets: Vec<String> = sg
            .node_ids()
            .filter(|&v| tg.node_name(skel.node_type(v)) == es.tgt_ty)
            .map(|v| sg.node_name(v).to_string())
            .collect();
        for s in &sources {
            for t in &targets {
                let parallel = sg
                    .edge_ids()
                    .filter(|&e| {
                        tg.edge_name(skel.edge_type(e)) == es.real
                            && sg.node_name(sg.src(e)) == s
                            && sg.node_name(sg.tgt(e)) == t
                    })
                    .count() as i64;
                let name = format!("{}@{s}-{t}", es.complement);
                let si = out.node(s).unwrap();
                let ti = out.node(t).unwrap();
                out.add_edge(&name, si, ti);
                edge_types.push(bar_tg.graph.edge(&es.complement).unwrap());
                values
                    .entry((ItemKind::Edge, name))
                    .or_default()
                    .insert("n".into(), parallel);
            }
        }
    }
    // Border-node counters.
    for bs in b_shapes {
        for v in sg.node_ids() {
            if tg.node_name(skel.node_type(v)) != bs.border_ty {
                continue;
            }
            let count = sg
                .edge_ids()
                .filter(|&e| {
                    tg.edge_name(skel.edge_type(e)) == bs.real
                        && (if bs.incoming { sg.tgt(e) } else { sg.src(e) }) == v
                })
                .count() as i64;
            values
                .entry((ItemKind::Node, sg.node_name(v).to_string()))
                .or_default()
                .insert(bs.attr.clone(), count);
        }
    }
    let out = Arc::new(out);
    // Attached-complement counters for touched node types.
    for ty in touched_types {
        for es in e_shapes {
            let at_source = es.src_ty == *ty;
            let at_target = es.tgt_ty == *ty;
            if !at_source && !at_target {
                continue;
            }
            let attr = format!("nbar({})", es.real);
            let cty = bar_tg.graph.edge(&es.complement).unwrap();
            for v in out.node_ids() {
                if bar_tg.graph.node_name(node_types[v.0]) != ty {
                    continue;
                }
                let count = out
                    .edge_ids()
                    .filter(|&e| {
                        edge_types[e.0] == cty
                            && (if at_source { out.src(e) } else { out.tgt(e) }) == v
                    })
                    .count() as i64;
                values
                    .entry((ItemKind::Node, out.node_name(v).to_string()))
                    .or_default()
                    .insert(attr.clone(), count);
            }
        }
    }

    let typing = GraphMorphism::new(
        Arc::clone(&out),
        Arc::clone(&bar_tg.graph),
        node_types,
        edge_types,
    )
    .expect("closed start graph is typed");
    let closed = AttributedGraph { skeleton: TypedGraph::new(typing), values };
    closed.validate(bar_tg)?;
    Ok(closed)
}

/// Restricted shape check used by the encoder's callers: every constraint
/// classifies as IN, OUT or E.
pub fn supported_shapes(g: &AttrGrammar) -> Result<Vec<TypedShape>, AttrError> {
    let structural = g.structural()?;
    let shapes = shapes_of(&structural)?;
    for s in &shapes {
        if !matches!(s.kind, ShapeKind::In | ShapeKind::Out | ShapeKind::E) {
            return Err(AttrError::UnsupportedShape(s.kind));
        }
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::tcr;

    #[test]
    fn tcr_type_graph_gains_five_complement_edge_types() {
        let enc = encode_counters(&tcr(), None).unwrap();
        let mut types = enc.complement_types.clone();
        types.sort();
        assert_eq!(
            types,
            vec!["bar(ched)", "bar(cher)", "bar(on)", "bar(rwd)", "bar(voteYay)"]
        );
        assert_eq!(enc.grammar.type_graph.graph.edge_count(), 6 + 5);
        // The challenged-candidate counter sits on the candidate type.
        assert!(enc
            .grammar
            .type_graph
            .node_attrs
            .get("Candidate")
            .unwrap()
            .contains(&"num(ched)".to_string()));
        // Challenge nodes carry attached-complement counters.
        let ch_attrs = enc.grammar.type_graph.node_attrs.get("Challenge").unwrap();
        for a in ["nbar(voteYay)", "nbar(cher)", "nbar(rwd)", "nbar(ched)"] {
            assert!(ch_attrs.contains(&a.to_string()), "missing {a}");
        }
    }

    #[test]
    fn encoded_apply_guards_and_bumps_the_on_counter() {
        let enc = encode_counters(&tcr(), None).unwrap();
        let apply = enc
            .grammar
            .rules
            .iter()
            .find(|r| r.name() == "bar(apply)")
            .unwrap();
        assert!(apply.guard.iter().any(|g| matches!(
            g,
            GuardAtom::Cmp(AttrExpr::Read(item, attr), CmpOp::Eq, AttrExpr::Const(0))
                if attr == "n" && item.kind == ItemKind::Edge
        )));
        assert!(apply.updates.iter().any(|u| {
            u.attr == "n"
                && matches!(
                    &u.expr,
                    AttrExpr::Add(a, b)
                        if matches!(**a, AttrExpr::Read(..)) && matches!(**b, AttrExpr::Const(1))
                )
        }));
    }

    #[test]
    fn encoded_challenge_has_a_curator_role_but_no_candidate_role() {
        let enc = encode_counters(&tcr(), None).unwrap();
        let family = enc
            .grammar
            .schemata
            .iter()
            .find(|f| f.original == "challenge")
            .unwrap();
        // Default bound: four curators in the start graph, instances 0..=4.
        assert_eq!(family.members.len(), 5);
        // Instances ordered by decreasing size.
        let first = enc.grammar.rule(&family.members[0].rule).unwrap();
        let last = enc
            .grammar
            .rule(&family.members.last().unwrap().rule)
            .unwrap();
        assert!(
            first.base.lhs().graph().node_count() > last.base.lhs().graph().node_count()
        );
        // Exactly one role was expanded (the curator), no candidate role.
        assert!(family.members.iter().all(|m| !m.rule.contains("Candidate=")));
    }

    #[test]
    fn encoded_start_graph_has_the_on_complement() {
        let enc = encode_counters(&tcr(), None).unwrap();
        let start = &enc.grammar.start;
        let g = start.skeleton.graph();
        let bar_on = g
            .edge_ids()
            .filter(|&e| {
                enc.grammar
                    .type_graph
                    .graph
                    .edge_name(start.skeleton.edge_type(e))
                    == "bar(on)"
            })
            .count();
        assert_eq!(bar_on, 1, "one candidate-registry pair");
        assert_eq!(
            start.get(&ItemRef::node("c"), "num(ched)"),
            Some(0),
            "candidate challenge counter initialised"
        );
    }

    #[test]
    fn expanding_with_explicit_bound_gives_four_challenge_instances() {
        let enc = encode_counters(&tcr(), Some(3)).unwrap();
        let family = enc
            .grammar
            .schemata
            .iter()
            .find(|f| f.original == "challenge")
            .unwrap();
        assert_eq!(family.members.len(), 4, "copy counts 0 through 3");
    }

    #[test]
    fn nac_free_attributed_grammar_is_unchanged_in_essence() {
        let mut g = tcr();
        g.nacs.clear();
        let enc = encode_counters(&g, None).unwrap();
        assert!(enc.complement_types.is_empty());
        assert_eq!(enc.grammar.rules.len(), g.rules.len());
        assert_eq!(
            enc.grammar.type_graph.graph.edge_count(),
            g.type_graph.graph.edge_count()
        );
    }
}
