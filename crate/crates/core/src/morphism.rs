//! Conditional grammar morphisms, retyping functors and the checks for
//! their three defining conditions.
//!
//! A morphism between grammars is a span of type graphs (left leg mono) plus
//! a mapping of rule names. Retyping an instance first pulls back along the
//! left leg (dropping items whose types are outside it) and then renames
//! types along the right leg. The conditions: the start graph is preserved
//! up to retyping, every retyped rule is derived from its target rule, and
//! target constraints pushed back along the lhs embedding are subsumed by
//! source constraints.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{
    self, apply, find_matches, subsumes, ConditionalGrammar, Constraint, DerivationStep,
    FreshNames, Rule,
};
use crate::graph::{
    self, enumerate_typed_monos, find_typed_iso, pullback, pushout, EdgeId, GraphMorphism, NodeId,
    TypedGraph,
};

#[derive(Debug, Error)]
pub enum MorphismError {
    #[error(transparent)]
    Graph(#[from] graph::Error),
    #[error("derivation step {index} does not map: {reason}")]
    MappingFailed { index: usize, reason: String },
}

/// A span `TG1 <- TG0 -> TG2` with mono left leg.
#[derive(Debug, Clone)]
pub struct TypeSpan {
    left: GraphMorphism,
    right: GraphMorphism,
}

impl TypeSpan {
    pub fn new(left: GraphMorphism, right: GraphMorphism) -> Result<TypeSpan, graph::Error> {
        if left.source() != right.source() {
            return Err(graph::Error::EndpointMismatch);
        }
        if !left.is_mono() {
            return Err(graph::Error::NotMono);
        }
        Ok(TypeSpan { left, right })
    }

    pub fn identity(tg: Arc<crate::graph::Graph>) -> TypeSpan {
        let id = GraphMorphism::identity(tg);
        TypeSpan { left: id.clone(), right: id }
    }

    pub fn left(&self) -> &GraphMorphism {
        &self.left
    }

    pub fn right(&self) -> &GraphMorphism {
        &self.right
    }
}

/// A retyped instance with its projection back to the original instance and
/// the anchor typing over the span's middle type graph.
#[derive(Debug, Clone)]
pub struct Retyped {
    pub typed: TypedGraph,
    /// Mono into the original instance graph.
    pub to_instance: GraphMorphism,
    /// Typing over the span's middle object.
    pub anchor: GraphMorphism,
}

/// Applies the span's retyping functor to an instance over the left target.
pub fn retype(span: &TypeSpan, g: &TypedGraph) -> Retyped {
    let pb = pullback(g.typing(), span.left()).expect("typing and left leg share the type graph");
    let typing = pb
        .to_right
        .then(span.right())
        .expect("anchor typing composes with the right leg");
    Retyped {
        typed: TypedGraph::new(typing),
        to_instance: pb.to_left,
        anchor: pb.to_right,
    }
}

/// Transports a typed morphism through the retyping functor.
pub fn retype_morphism(m: &GraphMorphism, src: &Retyped, tgt: &Retyped) -> GraphMorphism {
    let node_map: Vec<NodeId> = src
        .typed
        .graph()
        .node_ids()
        .map(|a| {
            let x = m.node(src.to_instance.node(a));
            let t = src.anchor.node(a);
            tgt.typed
                .graph()
                .node_ids()
                .find(|&b| tgt.to_instance.node(b) == x && tgt.anchor.node(b) == t)
                .expect("retyping preserves morphisms")
        })
        .collect();
    let edge_map: Vec<EdgeId> = src
        .typed
        .graph()
        .edge_ids()
        .map(|a| {
            let x = m.edge(src.to_instance.edge(a));
            let t = src.anchor.edge(a);
            tgt.typed
                .graph()
                .edge_ids()
                .find(|&b| tgt.to_instance.edge(b) == x && tgt.anchor.edge(b) == t)
                .expect("retyping preserves morphisms")
        })
        .collect();
    GraphMorphism::new(
        Arc::clone(src.typed.graph()),
        Arc::clone(tgt.typed.graph()),
        node_map,
        edge_map,
    )
    .expect("retyped morphism preserves structure")
}

/// A conditional grammar morphism: type span plus rule-name mapping.
#[derive(Debug, Clone)]
pub struct GrammarMorphism {
    pub span: TypeSpan,
    pub rule_map: BTreeMap<String, String>,
}

/// A violated condition, with enough context to debug it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionViolation {
    /// Condition 1: the retyped start graph differs from the target's.
    StartNotPreserved,
    /// Condition 2: no rule of the target under this name.
    RuleNotMapped(String),
    /// Condition 2: no mono DPO witness from the target rule onto the
    /// retyped rule.
    NoDpoWitness(String),
    /// Condition 3: a target constraint pushed along the lhs embedding is
    /// not subsumed by any source constraint.
    ConstraintNotReflected { rule: String, target_nac: String },
}

/// Outcome of [`check_morphism`]: violations (empty when well-defined) and
/// the lhs embeddings found for condition 2.
#[derive(Debug, Clone)]
pub struct MorphismReport {
    pub violations: Vec<ConditionViolation>,
    pub lhs_embeddings: BTreeMap<String, GraphMorphism>,
}

impl MorphismReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies the three morphism conditions of `f: source -> target`.
pub fn check_morphism(
    f: &GrammarMorphism,
    source: &ConditionalGrammar,
    target: &ConditionalGrammar,
) -> MorphismReport {
    let mut violations = Vec::new();
    let mut lhs_embeddings = BTreeMap::new();

    // Condition 1: the input graph is preserved up to retyping.
    let retyped_start = retype(&f.span, source.start());
    if find_typed_iso(&retyped_start.typed, target.start()).is_none() {
        violations.push(ConditionViolation::StartNotPreserved);
    }

    // Condition 2: rules map to ancestor rules.
    for rule in source.rules() {
        let Some(target_name) = f.rule_map.get(rule.name()) else {
            violations.push(ConditionViolation::RuleNotMapped(rule.name().to_string()));
            continue;
        };
        let Some(target_rule) = target.rule(target_name) else {
            violations.push(ConditionViolation::RuleNotMapped(rule.name().to_string()));
            continue;
        };
        match dpo_witness(&f.span, rule, target_rule) {
            Some(embedding) => {
                lhs_embeddings.insert(rule.name().to_string(), embedding);
            }
            None => violations.push(ConditionViolation::NoDpoWitness(rule.name().to_string())),
        }
    }

    // Condition 3: constraints are reflected up to subsumption.
    for rule in source.rules() {
        let Some(i_p) = lhs_embeddings.get(rule.name()) else {
            continue;
        };
        let target_name = &f.rule_map[rule.name()];
        let retyped_lhs = retype(&f.span, rule.lhs());
        for n2 in target.nacs_of(target_name) {
            let Some(h) = pushed_back_constraint(&f.span, rule, i_p, &retyped_lhs, n2) else {
                // The target constraint mentions types outside the span's
                // image; no square of the required form exists for it.
                continue;
            };
            let reflected = source
                .nacs_of(rule.name())
                .iter()
                .any(|n| subsumes(n, &h).unwrap_or(false));
            if !reflected {
                violations.push(ConditionViolation::ConstraintNotReflected {
                    rule: rule.name().to_string(),
                    target_nac: n2.id().to_string(),
                });
            }
        }
    }

    MorphismReport { violations, lhs_embeddings }
}

/// Searches for the mono triple making the retyped rule derived from the
/// target rule (both squares pushouts). Returns the lhs embedding.
fn dpo_witness(span: &TypeSpan, rule: &Rule, target_rule: &Rule) -> Option<GraphMorphism> {
    let rl = retype(span, rule.lhs());
    let rk = retype(span, rule.interface());
    let rr = retype(span, rule.rhs());
    let bottom_l = retype_morphism(rule.to_lhs(), &rk, &rl);
    let bottom_r = retype_morphism(rule.to_rhs(), &rk, &rr);

    for j in enumerate_typed_monos(target_rule.interface(), &rk.typed) {
        for i_p in enumerate_typed_monos(target_rule.lhs(), &rl.typed) {
            // Left square commutes: bottom_l ∘ j = i_p ∘ l'.
            let lhs_path = j.then(&bottom_l).expect("span legs compose");
            let rhs_path = target_rule.to_lhs().then(&i_p).expect("embedding composes");
            if !lhs_path.agrees_with(&rhs_path) {
                continue;
            }
            if !is_pushout(target_rule.to_lhs(), &j, &i_p, &bottom_l, &rl.typed) {
                continue;
            }
            for k in enumerate_typed_monos(target_rule.rhs(), &rr.typed) {
                let lhs_path = j.then(&bottom_r).expect("span legs compose");
                let rhs_path = target_rule.to_rhs().then(&k).expect("embedding composes");
                if !lhs_path.agrees_with(&rhs_path) {
                    continue;
                }
                if is_pushout(target_rule.to_rhs(), &j, &k, &bottom_r, &rr.typed) {
                    return Some(i_p);
                }
            }
        }
    }
    None
}

/// Is the commuting square `(top: A -> B, left: A -> C, right: B -> D,
/// bottom: C -> D)` a pushout? Checked by building the pushout of the span
/// and finding a compatible iso onto `d`.
fn is_pushout(
    top: &GraphMorphism,
    left: &GraphMorphism,
    right: &GraphMorphism,
    bottom: &GraphMorphism,
    d: &TypedGraph,
) -> bool {
    let Ok(po) = pushout(top, left) else {
        return false;
    };
    let _ = d;
    // Mediating u: PO -> D with u ∘ inj_B = right and u ∘ inj_C = bottom.
    let mut node_map = vec![None; po.object.node_count()];
    let mut edge_map = vec![None; po.object.edge_count()];
    for v in top.target().node_ids() {
        node_map[po.left.node(v).0] = Some(right.node(v));
    }
    for v in left.target().node_ids() {
        let want = bottom.node(v);
        let slot = &mut node_map[po.right.node(v).0];
        match slot {
            Some(x) if *x != want => return false,
            _ => *slot = Some(want),
        }
    }
    for e in top.target().edge_ids() {
        edge_map[po.left.edge(e).0] = Some(right.edge(e));
    }
    for e in left.target().edge_ids() {
        let want = bottom.edge(e);
        let slot = &mut edge_map[po.right.edge(e).0];
        match slot {
            Some(x) if *x != want => return false,
            _ => *slot = Some(want),
        }
    }
    let (Some(node_map), Some(edge_map)) = (
        node_map.into_iter().collect::<Option<Vec<_>>>(),
        edge_map.into_iter().collect::<Option<Vec<_>>>(),
    ) else {
        return false;
    };
    match GraphMorphism::new(
        Arc::clone(&po.object),
        Arc::clone(bottom.target()),
        node_map,
        edge_map,
    ) {
        Ok(u) => u.is_iso(),
        Err(_) => false,
    }
}

/// Builds the source-side constraint `h: L_p -> N` whose retyping completes
/// the condition-3 pushout square for the target constraint `n2`.
///
/// Types of the forbidden items are transported backwards through the span;
/// this is exact when the right leg is injective on the types involved
/// (always the case for the encoding and forgetting morphisms).
fn pushed_back_constraint(
    span: &TypeSpan,
    rule: &Rule,
    i_p: &GraphMorphism,
    retyped_lhs: &Retyped,
    n2: &Constraint,
) -> Option<Constraint> {
    // c: L' -> L_p in raw graphs (mono).
    let c = i_p
        .then(&retyped_lhs.to_instance)
        .expect("lhs embedding composes with the projection");
    let po = pushout(n2.embedding(), &c).ok()?;
    // Type the pushout object over the source type graph.
    let tg1 = rule.lhs().type_graph();
    let mut node_ty = vec![None; po.object.node_count()];
    let mut edge_ty = vec![None; po.object.edge_count()];
    for v in rule.lhs().graph().node_ids() {
        node_ty[po.right.node(v).0] = Some(rule.lhs().node_type(v));
    }
    for e in rule.lhs().graph().edge_ids() {
        edge_ty[po.right.edge(e).0] = Some(rule.lhs().edge_type(e));
    }
    for v in n2.forbidden().graph().node_ids() {
        let slot = &mut node_ty[po.left.node(v).0];
        if slot.is_none() {
            let t2 = n2.forbidden().node_type(v);
            let t0 = span.right().node_preimage(t2)?;
            *slot = Some(span.left().node(t0));
        }
    }
    for e in n2.forbidden().graph().edge_ids() {
        let slot = &mut edge_ty[po.left.edge(e).0];
        if slot.is_none() {
            let t2 = n2.forbidden().edge_type(e);
            let t0 = span.right().edge_preimage(t2)?;
            *slot = Some(span.left().edge(t0));
        }
    }
    let typing = GraphMorphism::new(
        Arc::clone(&po.object),
        Arc::clone(tg1),
        node_ty.into_iter().collect::<Option<Vec<_>>>()?,
        edge_ty.into_iter().collect::<Option<Vec<_>>>()?,
    )
    .ok()?;
    let forbidden = TypedGraph::new(typing);
    if po.right.is_iso() {
        // The pushout added nothing: the square exists only degenerately and
        // constrains nothing.
        return None;
    }
    Constraint::new(
        &format!("pushed({})", n2.id()),
        rule.lhs(),
        po.right,
        forbidden,
    )
    .ok()
}

/// The encoding morphism from an enriched grammar back to its original:
/// span `TG_bar <- TG -> TG` and the family-member-to-original rule map.
pub fn build_e(
    original: &ConditionalGrammar,
    enriched: &ConditionalGrammar,
    embed: &GraphMorphism,
) -> GrammarMorphism {
    let span = TypeSpan::new(
        embed.clone(),
        GraphMorphism::identity(Arc::clone(original.type_graph())),
    )
    .expect("embedding is a mono out of the original type graph");
    let mut rule_map = BTreeMap::new();
    for family in enriched.families() {
        for member in &family.members {
            rule_map.insert(member.rule.clone(), family.original.clone());
        }
    }
    GrammarMorphism { span, rule_map }
}

/// The forgetting morphism from an enriched grammar to its NAC-free copy:
/// identity span, identity rule map.
pub fn build_d(enriched: &ConditionalGrammar) -> GrammarMorphism {
    let span = TypeSpan::identity(Arc::clone(enriched.type_graph()));
    let rule_map = enriched
        .rules()
        .iter()
        .map(|r| (r.name().to_string(), r.name().to_string()))
        .collect();
    GrammarMorphism { span, rule_map }
}

/// Maps a derivation through the morphism, re-verifying every image step as
/// a conditional DPO step of the target grammar.
pub fn map_derivation(
    f: &GrammarMorphism,
    target: &ConditionalGrammar,
    report: &MorphismReport,
    steps: &[DerivationStep],
) -> Result<Vec<DerivationStep>, MorphismError> {
    let mut out = Vec::new();
    for (index, step) in steps.iter().enumerate() {
        let fail = |reason: &str| MorphismError::MappingFailed {
            index,
            reason: reason.to_string(),
        };
        let source_rule = step.rule.name();
        let target_name = f
            .rule_map
            .get(source_rule)
            .ok_or_else(|| fail("rule not mapped"))?;
        let target_rule = target
            .rule(target_name)
            .ok_or_else(|| fail("target rule missing"))?;
        let i_p = report
            .lhs_embeddings
            .get(source_rule)
            .ok_or_else(|| fail("no lhs embedding witness"))?;

        let before = retype(&f.span, &step.before);
        let after = retype(&f.span, &step.after);
        let retyped_lhs = retype(&f.span, step.rule.lhs());
        let retyped_match = retype_morphism(&step.match_morphism, &retyped_lhs, &before);
        let image_match = i_p
            .then(&retyped_match)
            .map_err(|_| fail("image match does not compose"))?;
        let image = apply(
            target_rule,
            target.nacs_of(target_name),
            &before.typed,
            &image_match,
            &FreshNames::Tagged(format!("map{index}")),
        )
        .map_err(|e| fail(&format!("image step is not a valid transformation: {e}")))?;
        if find_typed_iso(&image.after, &after.typed).is_none() {
            return Err(fail("image result differs from the retyped result"));
        }
        out.push(image);
    }
    Ok(out)
}

/// Convenience: all matches of every rule of `g` in `host`, used by tests.
pub fn all_matches<'g>(
    g: &'g ConditionalGrammar,
    host: &TypedGraph,
) -> Vec<(&'g Rule, GraphMorphism)> {
    g.rules()
        .iter()
        .flat_map(|r| find_matches(r, host).into_iter().map(move |m| (r, m)))
        .collect()
}

/// Checks `satisfies` for every constraint of `rule` at `m`.
pub fn satisfies_all(
    g: &ConditionalGrammar,
    rule: &str,
    m: &GraphMorphism,
    host: &TypedGraph,
) -> bool {
    g.nacs_of(rule)
        .iter()
        .all(|c| grammar::satisfies(m, c, host))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{drop_nacs, enrich_grammar};
    use crate::fixtures::client_server;

    #[test]
    fn identity_span_retype_is_identity() {
        let cs = client_server();
        let span = TypeSpan::identity(Arc::clone(cs.type_graph()));
        let r = retype(&span, cs.start());
        assert!(find_typed_iso(&r.typed, cs.start()).is_some());
    }

    #[test]
    fn encoding_span_retypes_closure_back_to_start() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let r = retype(&f.span, e.grammar.start());
        assert!(find_typed_iso(&r.typed, cs.start()).is_some());
    }

    #[test]
    fn retyping_the_enriched_type_graph_as_instance_recovers_the_original() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let bar_as_instance = TypedGraph::new(GraphMorphism::identity(Arc::clone(&e.etg.enriched)));
        let span = TypeSpan::new(
            e.etg.embed.clone(),
            GraphMorphism::identity(Arc::clone(cs.type_graph())),
        )
        .unwrap();
        let r = retype(&span, &bar_as_instance);
        assert_eq!(r.typed.graph().node_count(), cs.type_graph().node_count());
        assert_eq!(r.typed.graph().edge_count(), cs.type_graph().edge_count());
    }

    #[test]
    fn encoding_morphism_is_well_defined() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let report = check_morphism(&f, &e.grammar, &cs);
        assert!(report.ok(), "violations: {:?}", report.violations);
        assert_eq!(report.lhs_embeddings.len(), e.grammar.rules().len());
    }

    #[test]
    fn forgetting_morphism_is_well_defined() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let de = drop_nacs(&e.grammar);
        let d = build_d(&e.grammar);
        let report = check_morphism(&d, &e.grammar, &de);
        assert!(report.ok(), "violations: {:?}", report.violations);
    }

    #[test]
    fn corrupted_rule_map_fails_condition_two() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let mut f = build_e(&cs, &e.grammar, &e.etg.embed);
        // Send the encoded pc(C1) family to sm(S1) instead.
        for family in e.grammar.families() {
            if family.original == "pc(C1)" {
                for m in &family.members {
                    f.rule_map.insert(m.rule.clone(), "sm(S1)".to_string());
                }
            }
        }
        let report = check_morphism(&f, &e.grammar, &cs);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ConditionViolation::NoDpoWitness(_))));
    }

    #[test]
    fn subrule_members_map_to_their_original() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let members: Vec<&String> = f
            .rule_map
            .iter()
            .filter(|(_, v)| v.as_str() == "sm(S1)")
            .map(|(k, _)| k)
            .collect();
        assert_eq!(members.len(), 4);
    }

    #[test]
    fn derivation_maps_along_the_encoding() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let report = check_morphism(&f, &e.grammar, &cs);
        assert!(report.ok());

        // One encoded step: the maximal pc(C1) member applicable at the
        // start graph.
        let start = e.grammar.start().clone();
        let family = e
            .grammar
            .families()
            .iter()
            .find(|fam| fam.original == "pc(C1)")
            .unwrap();
        let step = family
            .members
            .iter()
            .find_map(|m| {
                let rule = e.grammar.rule(&m.rule)?;
                let mm = find_matches(rule, &start).into_iter().next()?;
                e.grammar.apply_rule(&m.rule, &start, &mm).ok()
            })
            .expect("some member applies at the start graph");
        let mapped = map_derivation(&f, &cs, &report, &[step]).unwrap();
        assert_eq!(mapped.len(), 1);
        assert_eq!(mapped[0].rule_name(), "pc(C1)");
        let expected = crate::fixtures::run(&cs, &["pc(C1)"]);
        assert!(find_typed_iso(&mapped[0].after, &expected).is_some());
    }

    #[test]
    fn empty_derivation_maps_to_empty() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let report = check_morphism(&f, &e.grammar, &cs);
        assert!(map_derivation(&f, &cs, &report, &[]).unwrap().is_empty());
    }
}
