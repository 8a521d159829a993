//! Encoding of incremental NACs into complemented graph structure.
//!
//! The pipeline for a safe conditional grammar:
//!
//! 1. [`enrich_type_graph`] builds the enriched type graph as the colimit of
//!    the type graph, all constraint shapes and their border typings. Each
//!    shape contributes a fresh complement copy of its forbidden items.
//! 2. [`invariant_formula`] / [`eval_invariant`] express the complementation
//!    invariant: wherever a shape's border occurs, exactly one of the body
//!    and its complement occurs.
//! 3. [`invariant_closure`] extends a start graph with the complement copies
//!    it needs to satisfy the invariant.
//! 4. [`complement_rule`] rewrites each conditional rule so that it consumes
//!    the complement of every constraint instead of testing the constraint.
//! 5. [`make_invariant_preserving`] compensates each rule for the shapes of
//!    the other rules, producing a family of derived rules whose members are
//!    applied largest-match-first.
//! 6. [`enrich_grammar`] assembles the enriched grammar; [`drop_nacs`]
//!    removes the (now redundant) constraints.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{
    self, apply, derived_rule, ApplyError, ConditionalGrammar, Constraint, FamilyMember,
    FreshNames, GrammarError, Rule, RuleFamilyInfo,
};
use crate::graph::{
    self, colimit, enumerate_typed_monos, extend_mono, pushout, pushout_complement, EdgeId, Graph,
    GraphMorphism, Item, NodeId, TypedGraph,
};
use crate::shapes::{shapes_of, ShapeError, ShapeKind, TypedShape};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("shape {0} (from {1}) has an empty border and is not supported by the encoder")]
    UnsupportedShape(ShapeKind, String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Graph(#[from] graph::Error),
    #[error("complementation failed while rewriting a rule: {0}")]
    Apply(#[from] ApplyError),
    #[error("constraint `{0}` has a body that does not factor through the original type graph")]
    BodyNotOriginal(String),
    #[error("the grammar must be safe for the complementation encoding")]
    NotSafe,
}

/// One shape of the source grammar together with its complement copy in the
/// enriched type graph.
#[derive(Debug, Clone)]
pub struct ShapeEntry {
    /// The shape over the original type graph.
    pub shape: TypedShape,
    /// Border retyped over the enriched type graph.
    pub border_up: TypedGraph,
    /// Body retyped over the enriched type graph (through the original).
    pub body_up: TypedGraph,
    /// The body graph typed by its complement copy.
    pub complement_up: TypedGraph,
    /// Instance of the complement whose forbidden items carry the complement
    /// type names, for gluing into rules and closures.
    pub attach: TypedGraph,
    /// `border -> attach.graph()`, the shape morphism transplanted.
    pub attach_shape: GraphMorphism,
}

/// The enriched type graph: the original plus one complement copy of each
/// shape's forbidden items.
#[derive(Debug, Clone)]
pub struct EnrichedTypeGraph {
    pub enriched: Arc<Graph>,
    /// `in_TG`, a mono.
    pub embed: GraphMorphism,
    pub entries: Vec<ShapeEntry>,
}

impl EnrichedTypeGraph {
    pub fn original(&self) -> &Arc<Graph> {
        self.embed.source()
    }

    /// Retypes a graph over the original type graph into the enriched one.
    pub fn lift_instance(&self, g: &TypedGraph) -> TypedGraph {
        g.retype_along(&self.embed).expect("embedding composes")
    }

    pub fn lift_rule(&self, rule: &Rule) -> Rule {
        Rule::new(
            rule.name(),
            self.lift_instance(rule.lhs()),
            self.lift_instance(rule.interface()),
            self.lift_instance(rule.rhs()),
            rule.to_lhs().clone(),
            rule.to_rhs().clone(),
        )
        .expect("retyped rule stays well-formed")
    }

    pub fn lift_constraint(&self, c: &Constraint) -> Constraint {
        Constraint::new(
            c.id(),
            &self.lift_instance(&lhs_of(c)),
            c.embedding().clone(),
            self.lift_instance(c.forbidden()),
        )
        .expect("retyped constraint stays well-formed")
    }
}

fn lhs_of(c: &Constraint) -> TypedGraph {
    TypedGraph::new(
        c.embedding()
            .then(c.forbidden().typing())
            .expect("constraint embedding is typed"),
    )
}

/// Builds the enriched type graph from the grammar's shapes.
///
/// Shapes `N` and `NL` have an empty border; their compensation steps are
/// not covered by the rule constructions, so they are rejected here.
pub fn enrich_type_graph(g: &ConditionalGrammar) -> Result<EnrichedTypeGraph, EncodeError> {
    if !g.is_safe() {
        return Err(EncodeError::NotSafe);
    }
    let shapes = shapes_of(g)?;
    for s in &shapes {
        if matches!(s.kind, ShapeKind::N | ShapeKind::Nl) {
            let origin = s
                .origins
                .first()
                .map(|(r, c)| format!("{r}/{c}"))
                .unwrap_or_default();
            return Err(EncodeError::UnsupportedShape(s.kind, origin));
        }
    }
    let tg = Arc::clone(g.type_graph());

    // Diagram: TG, then per shape its border and body, with the shape
    // morphism and the border typing as arrows.
    let mut objects = vec![Arc::clone(&tg)];
    let mut arrows = Vec::new();
    for s in &shapes {
        let border_idx = objects.len();
        objects.push(Arc::clone(s.border.graph()));
        let body_idx = objects.len();
        objects.push(Arc::clone(s.body.graph()));
        arrows.push((border_idx, body_idx, s.shape.clone()));
        arrows.push((border_idx, 0, s.border.typing().clone()));
    }
    let col = colimit(&objects, &arrows)?;

    // Rename: original items keep their names, complement items become
    // `bar(<type>,<shape>)`.
    let tg_inj = &col.injections[0];
    let mut names: BTreeMap<Item, String> = BTreeMap::new();
    for v in tg.node_ids() {
        names.insert(Item::Node(tg_inj.node(v)), tg.node_name(v).to_string());
    }
    for e in tg.edge_ids() {
        names.insert(Item::Edge(tg_inj.edge(e)), tg.edge_name(e).to_string());
    }
    for (i, s) in shapes.iter().enumerate() {
        let body_inj = &col.injections[2 + 2 * i];
        for v in s.body.graph().node_ids() {
            let it = Item::Node(body_inj.node(v));
            names.entry(it).or_insert_with(|| {
                format!("bar({},{})", tg.node_name(s.body.node_type(v)), i)
            });
        }
        for e in s.body.graph().edge_ids() {
            let it = Item::Edge(body_inj.edge(e));
            names.entry(it).or_insert_with(|| {
                format!("bar({},{})", tg.edge_name(s.body.edge_type(e)), i)
            });
        }
    }
    let enriched = col.object.renamed(|item, old| {
        names.get(&item).cloned().unwrap_or_else(|| old.to_string())
    });
    let embed = tg_inj.with_target(Arc::clone(&enriched))?;
    if !embed.is_mono() {
        return Err(EncodeError::BodyNotOriginal("type graph embedding".into()));
    }

    let mut entries = Vec::new();
    for (i, s) in shapes.iter().enumerate() {
        let body_inj = col.injections[2 + 2 * i].with_target(Arc::clone(&enriched))?;
        let border_up = s
            .border
            .retype_along(&embed)
            .expect("border typing composes");
        let body_up = s.body.retype_along(&embed).expect("body typing composes");
        let complement_up = TypedGraph::new(body_inj.clone());
        // Attach instance: forbidden items renamed to their complement types.
        let body_g = s.body.graph();
        let attach_graph = body_g.renamed(|item, old| match item {
            Item::Node(v) if s.shape.node_preimage(v).is_none() => {
                enriched.node_name(body_inj.node(v)).to_string()
            }
            Item::Edge(e) => enriched.edge_name(body_inj.edge(e)).to_string(),
            _ => old.to_string(),
        });
        let attach = TypedGraph::new(body_inj.with_source(Arc::clone(&attach_graph))?);
        let attach_shape = s.shape.with_target(attach_graph)?;
        entries.push(ShapeEntry {
            shape: s.clone(),
            border_up,
            body_up,
            complement_up,
            attach,
            attach_shape,
        });
    }
    Ok(EnrichedTypeGraph { enriched, embed, entries })
}

/// One xor clause of the complementation invariant.
#[derive(Debug, Clone)]
pub struct InvariantClause {
    pub label: String,
    pub border: TypedGraph,
    pub body: TypedGraph,
    pub complement: TypedGraph,
    /// `border.graph() -> body.graph()`; body and complement share the graph.
    pub attach: GraphMorphism,
}

/// The complementation invariant: one clause per shape.
#[derive(Debug, Clone)]
pub struct InvariantFormula {
    pub clauses: Vec<InvariantClause>,
}

/// A clause violation at one border occurrence.
#[derive(Debug, Clone)]
pub struct InvariantViolation {
    pub clause: String,
    /// Sorted border-item/host-item name pairs of the occurrence.
    pub occurrence: Vec<(String, String)>,
    /// True when both body and complement were found, false when neither.
    pub both_present: bool,
}

pub fn invariant_formula(etg: &EnrichedTypeGraph) -> InvariantFormula {
    let clauses = etg
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| InvariantClause {
            label: format!("shape{}[{}]", i, e.shape.kind),
            border: e.border_up.clone(),
            body: e.body_up.clone(),
            complement: e.complement_up.clone(),
            attach: e.shape.shape.clone(),
        })
        .collect();
    InvariantFormula { clauses }
}

/// Evaluates the invariant on a graph over the enriched type graph,
/// returning every violating `(clause, border occurrence)`.
pub fn eval_invariant(g: &TypedGraph, phi: &InvariantFormula) -> Vec<InvariantViolation> {
    let mut violations = Vec::new();
    for clause in &phi.clauses {
        for occ in enumerate_typed_monos(&clause.border, g) {
            let body = extend_mono(&clause.attach, &occ, &clause.body, g).is_some();
            let compl = extend_mono(&clause.attach, &occ, &clause.complement, g).is_some();
            if body == compl {
                violations.push(InvariantViolation {
                    clause: clause.label.clone(),
                    occurrence: grammar::match_digest(&occ),
                    both_present: body,
                });
            }
        }
    }
    violations
}

/// The invariant closure of a safe graph over the original type graph:
/// the colimit of the graph with one complement copy per shape whose border
/// occurs while its body does not.
pub fn invariant_closure(
    etg: &EnrichedTypeGraph,
    g: &TypedGraph,
) -> Result<TypedGraph, EncodeError> {
    let lifted = etg.lift_instance(g);
    let mut objects = vec![Arc::clone(lifted.graph())];
    let mut arrows = Vec::new();
    let mut attach_typings: Vec<(usize, GraphMorphism)> = Vec::new();
    for entry in &etg.entries {
        for occ in enumerate_typed_monos(&entry.border_up, &lifted) {
            let body_occurs =
                extend_mono(&entry.shape.shape, &occ, &entry.body_up, &lifted).is_some();
            if body_occurs {
                continue;
            }
            let border_idx = objects.len();
            objects.push(Arc::clone(entry.border_up.graph()));
            let attach_idx = objects.len();
            objects.push(Arc::clone(entry.attach.graph()));
            arrows.push((border_idx, 0, occ));
            arrows.push((border_idx, attach_idx, entry.attach_shape.clone()));
            attach_typings.push((attach_idx, entry.attach.typing().clone()));
        }
    }
    let col = colimit(&objects, &arrows)?;
    // Typing: instance items keep theirs, complement items get theirs.
    let object = Arc::clone(&col.object);
    let mut node_ty: Vec<Option<NodeId>> = vec![None; object.node_count()];
    let mut edge_ty: Vec<Option<EdgeId>> = vec![None; object.edge_count()];
    let mut paint = |inj: &GraphMorphism, typing: &GraphMorphism| {
        for v in inj.source().node_ids() {
            node_ty[inj.node(v).0].get_or_insert(typing.node(v));
        }
        for e in inj.source().edge_ids() {
            edge_ty[inj.edge(e).0].get_or_insert(typing.edge(e));
        }
    };
    paint(&col.injections[0], lifted.typing());
    for (idx, typing) in &attach_typings {
        paint(&col.injections[*idx], typing);
    }
    drop(paint);
    let typing = GraphMorphism::new(
        object,
        Arc::clone(&etg.enriched),
        node_ty.into_iter().map(Option::unwrap).collect(),
        edge_ty.into_iter().map(Option::unwrap).collect(),
    )?;
    Ok(TypedGraph::new(typing))
}

/// Result of gluing `attach` onto `base` along a shared discrete graph.
struct Glued {
    object: TypedGraph,
    from_base: GraphMorphism,
    #[allow(dead_code)]
    from_attach: GraphMorphism,
}

/// Pushout of `base <- at -> attach` with base-preferred naming and the
/// induced typing.
fn glue_typed(
    base: &TypedGraph,
    attach: &TypedGraph,
    at_base: &GraphMorphism,
    at_attach: &GraphMorphism,
) -> Result<Glued, EncodeError> {
    let po = pushout(at_base, at_attach)?;
    // Prefer base names, then attach names (suffixing is done by the
    // colimit already; rename only to restore base names where possible).
    let mut names: BTreeMap<Item, String> = BTreeMap::new();
    for v in base.graph().node_ids() {
        names.insert(
            Item::Node(po.left.node(v)),
            base.graph().node_name(v).to_string(),
        );
    }
    for e in base.graph().edge_ids() {
        names.insert(
            Item::Edge(po.left.edge(e)),
            base.graph().edge_name(e).to_string(),
        );
    }
    for v in attach.graph().node_ids() {
        names
            .entry(Item::Node(po.right.node(v)))
            .or_insert_with(|| attach.graph().node_name(v).to_string());
    }
    for e in attach.graph().edge_ids() {
        names
            .entry(Item::Edge(po.right.edge(e)))
            .or_insert_with(|| attach.graph().edge_name(e).to_string());
    }
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    let object = po.object.renamed(|item, old| {
        let base_name = names.get(&item).cloned().unwrap_or_else(|| old.to_string());
        let n = used.entry(base_name.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base_name
        } else {
            format!("{base_name}#{n}")
        }
    });
    let from_base = po.left.with_target(Arc::clone(&object))?;
    let from_attach = po.right.with_target(Arc::clone(&object))?;
    // Typing via preimages; merged items agree because both legs are typed.
    let mut node_ty: Vec<Option<NodeId>> = vec![None; object.node_count()];
    let mut edge_ty: Vec<Option<EdgeId>> = vec![None; object.edge_count()];
    for v in base.graph().node_ids() {
        node_ty[from_base.node(v).0] = Some(base.node_type(v));
    }
    for e in base.graph().edge_ids() {
        edge_ty[from_base.edge(e).0] = Some(base.edge_type(e));
    }
    for v in attach.graph().node_ids() {
        node_ty[from_attach.node(v).0].get_or_insert(attach.node_type(v));
    }
    for e in attach.graph().edge_ids() {
        edge_ty[from_attach.edge(e).0].get_or_insert(attach.edge_type(e));
    }
    let typing = GraphMorphism::new(
        Arc::clone(&object),
        Arc::clone(base.type_graph()),
        node_ty.into_iter().map(Option::unwrap).collect(),
        edge_ty.into_iter().map(Option::unwrap).collect(),
    )?;
    Ok(Glued { object: TypedGraph::new(typing), from_base, from_attach })
}

/// A conditional rule in construction: the rule, its constraints tagged with
/// their shape index, and the embedding of the family core lhs.
#[derive(Debug, Clone)]
struct WorkRule {
    rule: Rule,
    nacs: Vec<(Constraint, usize)>,
    core_to_lhs: GraphMorphism,
    note: String,
}

/// A complemented, invariant-preserving family of rules for one original
/// rule. Members are ordered by decreasing lhs size; at application time
/// only the largest member with a match extending the core match fires.
#[derive(Debug, Clone)]
pub struct RuleFamily {
    pub original: String,
    pub members: Vec<FamilyRule>,
    /// The shared core lhs (the smallest member's lhs).
    pub core: TypedGraph,
}

/// One family member with its lifted constraints and provenance note.
#[derive(Debug, Clone)]
pub struct FamilyRule {
    pub rule: Rule,
    pub nacs: Vec<Constraint>,
    pub core_to_lhs: GraphMorphism,
    pub note: String,
}

/// The complemented constraint `n̄: L -> N̄`: same embedding, but the
/// forbidden items are typed by their complement copy.
fn complemented_constraint(
    etg: &EnrichedTypeGraph,
    c: &Constraint,
    shape_idx: usize,
) -> Result<(Constraint, TypedGraph), EncodeError> {
    let entry = &etg.entries[shape_idx];
    let ip = graph::initial_pushout(c.embedding())?;
    // The body must be typed by original items (complementation needs a
    // complement copy to swap in).
    let body_typed = TypedGraph::new(
        ip.body_in_target
            .then(c.forbidden().typing())
            .expect("body typing composes"),
    );
    for v in body_typed.graph().node_ids() {
        if etg.embed.node_preimage(body_typed.node_type(v)).is_none() {
            return Err(EncodeError::BodyNotOriginal(c.id().to_string()));
        }
    }
    for e in body_typed.graph().edge_ids() {
        if etg.embed.edge_preimage(body_typed.edge_type(e)).is_none() {
            return Err(EncodeError::BodyNotOriginal(c.id().to_string()));
        }
    }
    // Identify the current body with the shape's canonical body.
    let iso = enumerate_typed_monos(&body_typed, &entry.body_up)
        .into_iter()
        .find(|m| m.is_iso())
        .ok_or_else(|| EncodeError::BodyNotOriginal(c.id().to_string()))?;
    // Retype the forbidden graph: body items get complement types.
    let fg = c.forbidden().graph();
    let mut node_ty: Vec<NodeId> = (0..fg.node_count())
        .map(|v| c.forbidden().node_type(NodeId(v)))
        .collect();
    let mut edge_ty: Vec<EdgeId> = (0..fg.edge_count())
        .map(|e| c.forbidden().edge_type(EdgeId(e)))
        .collect();
    for v in ip.body.node_ids() {
        let in_n = ip.body_in_target.node(v);
        node_ty[in_n.0] = entry.complement_up.node_type(iso.node(v));
    }
    for e in ip.body.edge_ids() {
        let in_n = ip.body_in_target.edge(e);
        edge_ty[in_n.0] = entry.complement_up.edge_type(iso.edge(e));
    }
    let complemented = TypedGraph::new(GraphMorphism::new(
        Arc::clone(fg),
        Arc::clone(&etg.enriched),
        node_ty,
        edge_ty,
    )?);
    let lhs = TypedGraph::new(
        c.embedding()
            .then(complemented.typing())
            .expect("embedding is typed into the complemented graph"),
    );
    let constraint = Constraint::new(c.id(), &lhs, c.embedding().clone(), complemented.clone())
        .map_err(EncodeError::Grammar)?;
    Ok((constraint, complemented))
}

/// Lifts `c` along `along: L -> L'` by pushout; the new constraint has lhs
/// `L'`.
fn lift_constraint(
    c: &Constraint,
    lhs_after: &TypedGraph,
    along: &GraphMorphism,
) -> Result<Constraint, EncodeError> {
    let glued = glue_typed(lhs_after, c.forbidden(), along, c.embedding())?;
    Constraint::new(c.id(), lhs_after, glued.from_base, glued.object)
        .map_err(EncodeError::Grammar)
}

/// Construction of the complemented rule: processes each constraint in id
/// order, replacing the rule by its derived rule over the complemented
/// constraint (or extending the lhs when the rule preserves the forbidden
/// structure), and lifting the remaining constraints.
pub fn complement_rule(
    etg: &EnrichedTypeGraph,
    rule: &Rule,
    nacs: &[Constraint],
    shape_of_nac: &dyn Fn(&str) -> usize,
) -> Result<(Rule, Vec<(Constraint, usize)>), EncodeError> {
    let mut current = etg.lift_rule(rule);
    let mut todo: Vec<(Constraint, usize)> = nacs
        .iter()
        .map(|c| (etg.lift_constraint(c), shape_of_nac(c.id())))
        .collect();
    let mut done: Vec<(Constraint, usize)> = Vec::new();

    while !todo.is_empty() {
        let (c, si) = todo.remove(0);
        let (cbar, forbidden_bar) = complemented_constraint(etg, &c, si)?;

        // Step (a): rewrite the complemented constraint if the DPO exists
        // and the rule does not preserve or recreate the body.
        let body_in_rhs = !enumerate_typed_monos(&etg.entries[si].body_up, current.rhs()).is_empty();
        let dpo = pushout_complement(current.to_lhs(), cbar.embedding());
        let next = if !body_in_rhs && dpo.is_ok() {
            let step = match apply(
                &current,
                &[],
                &forbidden_bar,
                cbar.embedding(),
                &FreshNames::TypeImage,
            ) {
                Ok(s) => s,
                Err(ApplyError::SafetyViolated(_)) => apply(
                    &current,
                    &[],
                    &forbidden_bar,
                    cbar.embedding(),
                    &FreshNames::Tagged(rule.name().to_string()),
                )?,
                Err(e) => return Err(e.into()),
            };
            derived_rule(&step).renamed(rule.name())
        } else {
            // Extend the lhs to N̄: the complement items become deleted.
            let to_lhs = current
                .to_lhs()
                .then(cbar.embedding())
                .expect("interface embeds into the complemented constraint");
            Rule::new(
                rule.name(),
                forbidden_bar.clone(),
                current.interface().clone(),
                current.rhs().clone(),
                to_lhs,
                current.to_rhs().clone(),
            )?
        };
        current = next;

        // Step (c): lift every other constraint along n̄.
        let new_lhs = current.lhs().clone();
        for (other, _) in todo.iter_mut().chain(done.iter_mut()) {
            *other = lift_constraint(other, &new_lhs, cbar.embedding())?;
        }
        done.push((lift_constraint_self(&c, &new_lhs, cbar.embedding())?, si));
    }
    Ok((current, done))
}

// The processed constraint itself is lifted along its own complementation.
fn lift_constraint_self(
    c: &Constraint,
    lhs_after: &TypedGraph,
    along: &GraphMorphism,
) -> Result<Constraint, EncodeError> {
    lift_constraint(c, lhs_after, along)
}

/// Locates the unique occurrence of `pattern` inside `host` (both safe).
fn locate(pattern: &TypedGraph, host: &TypedGraph) -> Option<GraphMorphism> {
    enumerate_typed_monos(pattern, host).into_iter().next()
}

/// Construction of the invariant-preserving rule family.
///
/// Steps for every shape of the other rules: compensate body deletion and
/// creation, complete full border creation, and split into variants for
/// border deletion and partial border creation (the variant including the
/// complement is preferred at application time by the maximality policy).
pub fn make_invariant_preserving(
    etg: &EnrichedTypeGraph,
    original: &str,
    rule: Rule,
    nacs: Vec<(Constraint, usize)>,
    other_shapes: &[usize],
) -> Result<RuleFamily, EncodeError> {
    let mut work = WorkRule {
        core_to_lhs: GraphMorphism::identity(Arc::clone(rule.lhs().graph())),
        rule,
        nacs,
        note: "complemented".to_string(),
    };

    // Step 1: body deleted, border preserved, body not re-created.
    for &si in other_shapes {
        let entry = &etg.entries[si];
        let Some(body_in_l) = locate(&entry.body_up, work.rule.lhs()) else {
            continue;
        };
        let body_deleted = entry
            .body_up
            .graph()
            .node_ids()
            .any(|v| work.rule.to_lhs().node_preimage(body_in_l.node(v)).is_none())
            || entry
                .body_up
                .graph()
                .edge_ids()
                .any(|e| work.rule.to_lhs().edge_preimage(body_in_l.edge(e)).is_none());
        let border_preserved = entry.shape.border.graph().node_ids().all(|v| {
            work.rule
                .to_lhs()
                .node_preimage(body_in_l.node(entry.shape.shape.node(v)))
                .is_some()
        });
        let body_recreated = locate(&entry.body_up, work.rule.rhs()).is_some();
        let complement_already = locate(&entry.complement_up, work.rule.rhs()).is_some();
        if body_deleted && border_preserved && !body_recreated && !complement_already {
            work = extend_rhs_with_complement(etg, si, work, "compensates body deletion")?;
        }
    }

    // Step 2: body created, border preserved, body not already required.
    for &si in other_shapes {
        let entry = &etg.entries[si];
        let Some(body_in_r) = locate(&entry.body_up, work.rule.rhs()) else {
            continue;
        };
        let body_created = entry
            .body_up
            .graph()
            .node_ids()
            .any(|v| work.rule.to_rhs().node_preimage(body_in_r.node(v)).is_none())
            || entry
                .body_up
                .graph()
                .edge_ids()
                .any(|e| work.rule.to_rhs().edge_preimage(body_in_r.edge(e)).is_none());
        let border_preserved = entry.shape.border.graph().node_ids().all(|v| {
            work.rule
                .to_rhs()
                .node_preimage(body_in_r.node(entry.shape.shape.node(v)))
                .is_some()
        });
        let body_in_lhs = locate(&entry.body_up, work.rule.lhs()).is_some();
        let complement_already = locate(&entry.complement_up, work.rule.lhs()).is_some();
        if body_created && border_preserved && !body_in_lhs && !complement_already {
            work = extend_lhs_with_complement(etg, si, work, "compensates body creation")?;
        }
    }

    // Step 3: border fully created (present in R, partly outside K), body
    // not created along with it.
    for &si in other_shapes {
        let entry = &etg.entries[si];
        let Some(border_in_r) = locate(&entry.border_up, work.rule.rhs()) else {
            continue;
        };
        let border_partly_created = entry
            .border_up
            .graph()
            .node_ids()
            .any(|v| work.rule.to_rhs().node_preimage(border_in_r.node(v)).is_none());
        let body_in_r = locate(&entry.body_up, work.rule.rhs()).is_some();
        let complement_already = locate(&entry.complement_up, work.rule.rhs()).is_some();
        if border_partly_created && !body_in_r && !complement_already {
            work = extend_rhs_with_complement(etg, si, work, "completes border creation")?;
        }
    }

    // Steps 4a/4b: variants. Border deletion extends the lhs with the
    // complement (and, for shape E, the possibly-absent partner node);
    // partial border creation extends the rhs with partner and complement.
    let mut family = vec![work];
    for &si in other_shapes {
        let entry = &etg.entries[si];
        let mut new_members = Vec::new();
        for member in &family {
            if let Some(variant) = border_deletion_variant(etg, si, member)? {
                new_members.push(variant);
            }
            if entry.shape.kind == ShapeKind::E {
                if let Some(variant) = partial_border_creation_variant(etg, si, member)? {
                    new_members.push(variant);
                }
            }
        }
        family.extend(new_members);
    }

    // Order members by decreasing lhs size, ties by generation order.
    let mut indexed: Vec<(usize, WorkRule)> = family.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        let size = |w: &WorkRule| w.rule.lhs().graph().node_count() + w.rule.lhs().graph().edge_count();
        size(b).cmp(&size(a)).then(ia.cmp(ib))
    });

    let members = indexed
        .into_iter()
        .enumerate()
        .map(|(rank, (_, w))| {
            let name = if rank == 0 {
                format!("bar({original})")
            } else {
                format!("bar({original})/{}", rank + 1)
            };
            FamilyRule {
                rule: w.rule.renamed(&name),
                nacs: w.nacs.into_iter().map(|(c, _)| c).collect(),
                core_to_lhs: w.core_to_lhs,
                note: w.note,
            }
        })
        .collect::<Vec<_>>();
    let core = members
        .iter()
        .min_by_key(|m| m.rule.lhs().graph().node_count() + m.rule.lhs().graph().edge_count())
        .expect("family is never empty")
        .rule
        .lhs()
        .clone();
    Ok(RuleFamily { original: original.to_string(), members, core })
}

/// Glues the shape's complement onto the rhs along the border (located in
/// the rhs). The complement items become created.
fn extend_rhs_with_complement(
    etg: &EnrichedTypeGraph,
    si: usize,
    work: WorkRule,
    why: &str,
) -> Result<WorkRule, EncodeError> {
    let entry = &etg.entries[si];
    let border_in_r = locate(&entry.border_up, work.rule.rhs())
        .expect("caller checked the border occurs in the rhs");
    let glued = glue_typed(work.rule.rhs(), &entry.attach, &border_in_r, &entry.attach_shape)?;
    let rule = Rule::new(
        work.rule.name(),
        work.rule.lhs().clone(),
        work.rule.interface().clone(),
        glued.object,
        work.rule.to_lhs().clone(),
        work.rule.to_rhs().then(&glued.from_base).expect("rhs extends"),
    )?;
    Ok(WorkRule {
        rule,
        nacs: work.nacs,
        core_to_lhs: work.core_to_lhs,
        note: format!("{}; {why}", work.note),
    })
}

/// Glues the shape's complement onto the lhs along the border. The
/// complement items become deleted; constraints are lifted.
fn extend_lhs_with_complement(
    etg: &EnrichedTypeGraph,
    si: usize,
    work: WorkRule,
    why: &str,
) -> Result<WorkRule, EncodeError> {
    let entry = &etg.entries[si];
    let border_in_l = locate(&entry.border_up, work.rule.lhs())
        .expect("caller checked the border occurs in the lhs");
    let glued = glue_typed(work.rule.lhs(), &entry.attach, &border_in_l, &entry.attach_shape)?;
    let to_lhs = work.rule.to_lhs().then(&glued.from_base).expect("lhs extends");
    let rule = Rule::new(
        work.rule.name(),
        glued.object.clone(),
        work.rule.interface().clone(),
        work.rule.rhs().clone(),
        to_lhs,
        work.rule.to_rhs().clone(),
    )?;
    let nacs = work
        .nacs
        .iter()
        .map(|(c, si)| Ok((lift_constraint(c, &glued.object, &glued.from_base)?, *si)))
        .collect::<Result<Vec<_>, EncodeError>>()?;
    Ok(WorkRule {
        rule,
        nacs,
        core_to_lhs: work.core_to_lhs.then(&glued.from_base).expect("core extends"),
        note: format!("{}; {why}", work.note),
    })
}

/// Variant for a rule deleting part of a shape's border: the extended rule
/// also deletes the complement (and preserves an absent partner node).
fn border_deletion_variant(
    etg: &EnrichedTypeGraph,
    si: usize,
    member: &WorkRule,
) -> Result<Option<WorkRule>, EncodeError> {
    let entry = &etg.entries[si];
    let rule = &member.rule;
    // Border nodes present in the lhs, located by type (safe world).
    let lhs_types: Vec<NodeId> = rule
        .lhs()
        .graph()
        .node_ids()
        .map(|v| rule.lhs().node_type(v))
        .collect();
    let mut deletes_border_node = false;
    for v in entry.border_up.graph().node_ids() {
        let ty = entry.border_up.node_type(v);
        if let Some(pos) = lhs_types.iter().position(|&t| t == ty) {
            if rule.to_lhs().node_preimage(NodeId(pos)).is_none() {
                deletes_border_node = true;
            }
        }
    }
    if !deletes_border_node {
        return Ok(None);
    }
    // The complement must not already be handled by the member.
    if locate(&entry.complement_up, rule.lhs()).is_some() {
        return Ok(None);
    }
    // Glue complement onto the lhs along the present part of the border.
    let present: Vec<NodeId> = entry
        .border_up
        .graph()
        .node_ids()
        .filter(|&v| {
            let ty = entry.border_up.node_type(v);
            lhs_types.contains(&ty)
        })
        .collect();
    let (present_border, present_incl) = entry.border_up.graph().subgraph(&present, &[]);
    let present_typed = TypedGraph::new(
        present_incl
            .then(entry.border_up.typing())
            .expect("border subgraph typing"),
    );
    let Some(present_in_l) = locate(&present_typed, rule.lhs()) else {
        return Ok(None);
    };
    let present_in_attach = present_incl
        .then(&entry.attach_shape)
        .expect("border embeds in its complement");
    let _ = present_border;
    let glued = glue_typed(rule.lhs(), &entry.attach, &present_in_l, &present_in_attach)?;

    // Added border nodes (absent partners) must be preserved: extend the
    // interface and rhs with them.
    let mut added_nodes: Vec<(NodeId, String, NodeId)> = Vec::new(); // (lhs' node, name, type)
    for v in entry.attach.graph().node_ids() {
        if entry.attach_shape.node_preimage(v).is_some()
            && present_in_attach.node_preimage(v).is_none()
        {
            // A border node that was not present in the old lhs.
            let in_new = glued.from_attach.node(v);
            added_nodes.push((
                in_new,
                glued.object.graph().node_name(in_new).to_string(),
                glued.object.node_type(in_new),
            ));
        }
    }
    let (interface2, k_old_incl) = extend_discrete(rule.interface(), &added_nodes)?;
    let (rhs2, r_old_incl) = extend_discrete(rule.rhs(), &added_nodes)?;
    // Rebuild span legs.
    let to_lhs = rebuild_leg(
        &interface2,
        &k_old_incl,
        rule.to_lhs(),
        &glued.from_base,
        &glued.object,
        &added_nodes,
    )?;
    let to_rhs_ext = rebuild_leg_plain(&interface2, &k_old_incl, rule.to_rhs(), &r_old_incl, &rhs2, &added_nodes)?;
    let new_rule = Rule::new(
        rule.name(),
        glued.object.clone(),
        interface2,
        rhs2,
        to_lhs,
        to_rhs_ext,
    )?;
    let nacs = member
        .nacs
        .iter()
        .map(|(c, s)| Ok((lift_constraint(c, &glued.object, &glued.from_base)?, *s)))
        .collect::<Result<Vec<_>, EncodeError>>()?;
    Ok(Some(WorkRule {
        rule: new_rule,
        nacs,
        core_to_lhs: member
            .core_to_lhs
            .then(&glued.from_base)
            .expect("core extends"),
        note: format!("{}; deletes border of shape {si} with its complement", member.note),
    }))
}

/// Variant for a rule creating one node of an E-shape border while the
/// other is absent: the extended rule preserves the partner and creates the
/// complement edge.
fn partial_border_creation_variant(
    etg: &EnrichedTypeGraph,
    si: usize,
    member: &WorkRule,
) -> Result<Option<WorkRule>, EncodeError> {
    let entry = &etg.entries[si];
    let rule = &member.rule;
    // X = border nodes present in R; require 0 < |X| < |border| and some
    // X-node created (outside K).
    let border_nodes: Vec<NodeId> = entry.border_up.graph().node_ids().collect();
    let mut in_r: Vec<(NodeId, NodeId)> = Vec::new(); // (border node, rhs node)
    for &v in &border_nodes {
        let ty = entry.border_up.node_type(v);
        if let Some(rv) = rule
            .rhs()
            .graph()
            .node_ids()
            .find(|&x| rule.rhs().node_type(x) == ty)
        {
            in_r.push((v, rv));
        }
    }
    if in_r.is_empty() || in_r.len() == border_nodes.len() {
        return Ok(None);
    }
    let created = in_r
        .iter()
        .any(|&(_, rv)| rule.to_rhs().node_preimage(rv).is_none());
    if !created {
        return Ok(None);
    }
    if locate(&entry.complement_up, rule.rhs()).is_some() {
        return Ok(None);
    }
    // Missing partner nodes, to be added as preserved context.
    let missing: Vec<NodeId> = border_nodes
        .iter()
        .copied()
        .filter(|v| in_r.iter().all(|(b, _)| b != v))
        .collect();
    let missing_items: Vec<(NodeId, String, NodeId)> = missing
        .iter()
        .map(|&v| {
            (
                v,
                entry
                    .border_up
                    .graph()
                    .node_name(v)
                    .to_string(),
                entry.border_up.node_type(v),
            )
        })
        .collect();
    let (lhs2, l_old_incl) = extend_discrete(rule.lhs(), &missing_items)?;
    let (interface2, k_old_incl) = extend_discrete(rule.interface(), &missing_items)?;
    let (rhs2, r_old_incl) = extend_discrete(rule.rhs(), &missing_items)?;
    // Glue the complement onto rhs2 along the full border.
    let Some(border_in_r2) = locate(&entry.border_up, &rhs2) else {
        return Ok(None);
    };
    let glued = glue_typed(&rhs2, &entry.attach, &border_in_r2, &entry.attach_shape)?;
    let to_lhs2 = rebuild_leg_plain(&interface2, &k_old_incl, rule.to_lhs(), &l_old_incl, &lhs2, &missing_items)?;
    let to_rhs2 = rebuild_leg_plain(&interface2, &k_old_incl, rule.to_rhs(), &r_old_incl, &rhs2, &missing_items)?
        .then(&glued.from_base)
        .expect("rhs extends");
    let new_rule = Rule::new(rule.name(), lhs2.clone(), interface2, glued.object, to_lhs2, to_rhs2)?;
    let nacs = member
        .nacs
        .iter()
        .map(|(c, s)| Ok((lift_constraint(c, &lhs2, &l_old_incl)?, *s)))
        .collect::<Result<Vec<_>, EncodeError>>()?;
    Ok(Some(WorkRule {
        rule: new_rule,
        nacs,
        core_to_lhs: member.core_to_lhs.then(&l_old_incl).expect("core extends"),
        note: format!("{}; completes partial border creation of shape {si}", member.note),
    }))
}

/// Extends a typed graph with fresh isolated nodes; returns the extension
/// and the inclusion of the original.
fn extend_discrete(
    g: &TypedGraph,
    nodes: &[(NodeId, String, NodeId)],
) -> Result<(TypedGraph, GraphMorphism), EncodeError> {
    let mut h = (**g.graph()).clone();
    let mut types: Vec<NodeId> = g.graph().node_ids().map(|v| g.node_type(v)).collect();
    for (_, name, ty) in nodes {
        let mut fresh = name.clone();
        let mut k = 2;
        while h.node(&fresh).is_some() {
            fresh = format!("{name}#{k}");
            k += 1;
        }
        h.add_node(&fresh);
        types.push(*ty);
    }
    let h = Arc::new(h);
    let typing = GraphMorphism::new(
        Arc::clone(&h),
        Arc::clone(g.type_graph()),
        types,
        g.graph().edge_ids().map(|e| g.edge_type(e)).collect(),
    )?;
    let incl = GraphMorphism::new(
        Arc::clone(g.graph()),
        h,
        g.graph().node_ids().collect(),
        g.graph().edge_ids().collect(),
    )?;
    Ok((TypedGraph::new(typing), incl))
}

/// Rebuilds `K' -> X'` from `K -> X` when both sides were extended with the
/// same discrete nodes (matched by type).
fn rebuild_leg_plain(
    interface2: &TypedGraph,
    k_old_incl: &GraphMorphism,
    old_leg: &GraphMorphism,
    x_old_incl: &GraphMorphism,
    x2: &TypedGraph,
    added: &[(NodeId, String, NodeId)],
) -> Result<GraphMorphism, EncodeError> {
    let k2 = interface2.graph();
    let mut node_map = vec![NodeId(0); k2.node_count()];
    for v in k_old_incl.source().node_ids() {
        node_map[k_old_incl.node(v).0] = x_old_incl.node(old_leg.node(v));
    }
    // Added nodes: match by type among the appended tail.
    let old_k_nodes = k_old_incl.source().node_count();
    let old_x_nodes = x_old_incl.source().node_count();
    for (i, _) in added.iter().enumerate() {
        node_map[old_k_nodes + i] = NodeId(old_x_nodes + i);
    }
    let mut edge_map = vec![EdgeId(0); k2.edge_count()];
    for e in k_old_incl.source().edge_ids() {
        edge_map[k_old_incl.edge(e).0] = x_old_incl.edge(old_leg.edge(e));
    }
    Ok(GraphMorphism::new(
        Arc::clone(k2),
        Arc::clone(x2.graph()),
        node_map,
        edge_map,
    )?)
}

/// Rebuilds `K' -> L'` where `L'` came from gluing the complement onto the
/// old lhs and `K'` was extended with the added border nodes.
fn rebuild_leg(
    interface2: &TypedGraph,
    k_old_incl: &GraphMorphism,
    old_leg: &GraphMorphism,
    l_to_new: &GraphMorphism,
    lhs2: &TypedGraph,
    added: &[(NodeId, String, NodeId)],
) -> Result<GraphMorphism, EncodeError> {
    let k2 = interface2.graph();
    let mut node_map = vec![NodeId(0); k2.node_count()];
    for v in k_old_incl.source().node_ids() {
        node_map[k_old_incl.node(v).0] = l_to_new.node(old_leg.node(v));
    }
    let old_k_nodes = k_old_incl.source().node_count();
    for (i, (lhs_node, _, _)) in added.iter().enumerate() {
        node_map[old_k_nodes + i] = *lhs_node;
    }
    let mut edge_map = vec![EdgeId(0); k2.edge_count()];
    for e in k_old_incl.source().edge_ids() {
        edge_map[k_old_incl.edge(e).0] = l_to_new.edge(old_leg.edge(e));
    }
    Ok(GraphMorphism::new(
        Arc::clone(k2),
        Arc::clone(lhs2.graph()),
        node_map,
        edge_map,
    )?)
}

/// The fully encoded grammar with family metadata.
#[derive(Debug, Clone)]
pub struct EnrichedGrammar {
    pub grammar: ConditionalGrammar,
    pub etg: EnrichedTypeGraph,
    pub families: Vec<RuleFamily>,
}

/// Assembles the enriched grammar: enriched type graph, closed start graph,
/// complemented invariant-preserving rule families and lifted constraints.
pub fn enrich_grammar(g: &ConditionalGrammar) -> Result<EnrichedGrammar, EncodeError> {
    let etg = enrich_type_graph(g)?;
    let start = invariant_closure(&etg, g.start())?;

    // Map constraint ids to shape indices.
    let mut shape_by_nac: BTreeMap<String, usize> = BTreeMap::new();
    for (i, entry) in etg.entries.iter().enumerate() {
        for (_, cid) in &entry.shape.origins {
            shape_by_nac.insert(cid.clone(), i);
        }
    }

    let mut families = Vec::new();
    for rule in g.rules() {
        let nacs = g.nacs_of(rule.name());
        let own_shapes: Vec<usize> = nacs.iter().map(|c| shape_by_nac[c.id()]).collect();
        let other_shapes: Vec<usize> = (0..etg.entries.len())
            .filter(|i| {
                etg.entries[*i]
                    .shape
                    .origins
                    .iter()
                    .any(|(r, _)| r != rule.name())
                    && !own_shapes.contains(i)
            })
            .collect();
        let lookup = |cid: &str| shape_by_nac[cid];
        let (complemented, lifted) = complement_rule(&etg, rule, nacs, &lookup)?;
        let family =
            make_invariant_preserving(&etg, rule.name(), complemented, lifted, &other_shapes)?;
        families.push(family);
    }

    let mut rules = Vec::new();
    let mut nacs: BTreeMap<String, Vec<Constraint>> = BTreeMap::new();
    let mut infos = Vec::new();
    for f in &families {
        let mut members = Vec::new();
        for m in &f.members {
            rules.push(m.rule.clone());
            if !m.nacs.is_empty() {
                nacs.insert(m.rule.name().to_string(), m.nacs.clone());
            }
            members.push(FamilyMember {
                rule: m.rule.name().to_string(),
                core_to_lhs: m.core_to_lhs.clone(),
            });
        }
        infos.push(RuleFamilyInfo {
            original: f.original.clone(),
            core: f.core.clone(),
            members,
        });
    }
    let grammar =
        ConditionalGrammar::new(Arc::clone(&etg.enriched), start, rules, nacs, true)?
            .with_families(infos);
    Ok(EnrichedGrammar { grammar, etg, families })
}

/// Deletes every constraint; rules, start graph and family metadata stay.
pub fn drop_nacs(g: &ConditionalGrammar) -> ConditionalGrammar {
    let families = g.families().to_vec();
    g.without_nacs().with_families(families)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::client_server;

    fn enriched() -> EnrichedGrammar {
        enrich_grammar(&client_server()).expect("client-server encodes")
    }

    #[test]
    fn enriched_type_graph_has_expected_size() {
        let etg = enrich_type_graph(&client_server()).unwrap();
        assert_eq!(etg.enriched.node_count(), 11);
        assert_eq!(etg.enriched.edge_count(), 14);
        assert!(etg.embed.is_mono());
    }

    #[test]
    fn nac_free_grammar_enriches_to_itself() {
        let plain = client_server().without_nacs();
        let etg = enrich_type_graph(&plain).unwrap();
        assert!(etg.embed.is_iso());
    }

    #[test]
    fn closure_of_start_graph_adds_two_complement_copies() {
        let e = enriched();
        let start = e.grammar.start();
        assert_eq!(start.graph().node_count(), 5);
        assert_eq!(start.graph().edge_count(), 2);
        let phi = invariant_formula(&e.etg);
        assert!(eval_invariant(start, &phi).is_empty());
    }

    #[test]
    fn plain_start_violates_the_invariant_when_retyped() {
        let e = enriched();
        let g0 = client_server().start().clone();
        let lifted = e.etg.lift_instance(&g0);
        let phi = invariant_formula(&e.etg);
        let violations = eval_invariant(&lifted, &phi);
        // Borders C1 and C2 occur with neither body nor complement.
        assert_eq!(violations.len(), 2);
        assert!(violations.iter().all(|v| !v.both_present));
    }

    #[test]
    fn closure_of_full_type_graph_adds_nothing() {
        let cs = client_server();
        let e = enriched();
        let full = crate::fixtures::safe_instance(
            cs.type_graph(),
            &["C1", "C2", "C3", "M1", "M2", "S1", "S2"],
            &["in12", "in21", "in32", "in31", "by1", "by2"],
        );
        let closed = invariant_closure(&e.etg, &full).unwrap();
        assert_eq!(closed.graph().node_count(), 7);
        assert_eq!(closed.graph().edge_count(), 6);
    }

    #[test]
    fn sm_family_has_four_members() {
        let e = enriched();
        let f = e.families.iter().find(|f| f.original == "sm(S1)").unwrap();
        assert_eq!(f.members.len(), 4, "maximal rule plus three subrules");
        let sizes: Vec<usize> = f
            .members
            .iter()
            .map(|m| m.rule.lhs().graph().node_count() + m.rule.lhs().graph().edge_count())
            .collect();
        let mut sorted = sizes.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        assert_eq!(sizes, sorted, "members ordered by decreasing lhs size");
    }

    #[test]
    fn jm_c2_m1_deletes_both_complement_edges() {
        let e = enriched();
        let f = e
            .families
            .iter()
            .find(|f| f.original == "jm(C2,M1)")
            .unwrap();
        assert_eq!(f.members.len(), 1);
        let rule = &f.members[0].rule;
        let tg = rule.lhs().type_graph();
        let deleted_types: Vec<String> = rule
            .deleted_edges()
            .iter()
            .map(|&e2| tg.edge_name(rule.lhs().edge_type(e2)).to_string())
            .collect();
        assert!(deleted_types.iter().any(|t| t.starts_with("bar(in21")));
        assert_eq!(deleted_types.len(), 2, "deletes both complement copies of in21");
        // It creates the real edge.
        let created: Vec<String> = rule
            .created_edges()
            .iter()
            .map(|&e2| tg.edge_name(rule.rhs().edge_type(e2)).to_string())
            .collect();
        assert_eq!(created, vec!["in21".to_string()]);
    }

    #[test]
    fn pc_c1_family_consumes_complement_and_completes_server_border() {
        let e = enriched();
        let f = e.families.iter().find(|f| f.original == "pc(C1)").unwrap();
        // Base rule plus the variant deleting the E-shape complement when M2
        // exists.
        assert_eq!(f.members.len(), 2);
        let maximal = &f.members[0].rule;
        let tg = maximal.lhs().type_graph();
        let deleted: Vec<String> = maximal
            .deleted_edges()
            .iter()
            .map(|&e2| tg.edge_name(maximal.lhs().edge_type(e2)).to_string())
            .collect();
        assert!(deleted.iter().any(|t| t.starts_with("bar(in12")));
        // The rhs gains the complement of the server's meeting shape.
        let created: Vec<String> = maximal
            .created_edges()
            .iter()
            .map(|&e2| tg.edge_name(maximal.rhs().edge_type(e2)).to_string())
            .collect();
        assert!(created.iter().any(|t| t.starts_with("bar(by1")));
    }

    #[test]
    fn rule_without_nacs_is_returned_unchanged_by_complementation() {
        let cs = client_server();
        let etg = enrich_type_graph(&cs).unwrap();
        let rule = cs.rule("jm(C1,M2)").unwrap();
        let lookup = |_: &str| 0usize;
        let (complemented, done) = complement_rule(&etg, rule, &[], &lookup).unwrap();
        assert!(done.is_empty());
        assert!(graph::find_iso(complemented.lhs().graph(), rule.lhs().graph()).is_some());
    }

    #[test]
    fn drop_nacs_is_idempotent_and_preserves_families() {
        let e = enriched();
        let de = drop_nacs(&e.grammar);
        assert!(de.all_nacs().is_empty());
        let de2 = drop_nacs(&de);
        assert!(de2.all_nacs().is_empty());
        assert_eq!(de2.families().len(), e.grammar.families().len());
    }

    #[test]
    fn lifted_nacs_contain_body_and_complement() {
        // Lemma core: every lifted constraint embeds both the shape body and
        // its complement, so it can never match an invariant-satisfying
        // graph.
        let e = enriched();
        let phi = invariant_formula(&e.etg);
        let mut seen = 0;
        for (rule, cs) in e.grammar.all_nacs() {
            let _ = rule;
            for c in cs {
                let violations = eval_invariant(c.forbidden(), &phi);
                assert!(
                    violations.iter().any(|v| v.both_present),
                    "constraint {} should contain body and complement",
                    c.id()
                );
                seen += 1;
            }
        }
        assert!(seen > 0);
    }
}
