//! Bounded exhaustive state-space construction and the theorem test bench.
//!
//! States are deduplicated up to isomorphism (safe grammars use the
//! typing-image key, general ones canonical labelling). Grammars carrying
//! rule families are explored under the maximality policy: per family and
//! core match, only the largest member with an extending match fires.
//!
//! On top of the transition system sit the checks used to machine-verify
//! the encoding: invariant preservation on all reachable states, redundancy
//! of the lifted constraints, reflection of derivations, bisimilarity of
//! the original grammar with its encoded-and-forgotten version, and
//! preservation/reflection of sequential independence.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::encoder::{eval_invariant, invariant_closure, EnrichedTypeGraph, InvariantFormula};
use crate::grammar::{
    apply, find_matches, match_digest, satisfies, sequential_independent, ConditionalGrammar,
    DerivationStep, FreshNames, RuleFamilyInfo,
};
use crate::graph::{
    canonical_key, enumerate_typed_monos, enumerate_typed_monos_extending, find_typed_iso, EdgeId, NodeId, TypedGraph,
};
use crate::morphism::{self, retype, retype_morphism, GrammarMorphism, MorphismReport};

/// One labelled transition: source state, rule name, match digest, target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub rule: String,
    pub digest: Vec<(String, String)>,
    pub to: usize,
}

/// A reachable-state transition system.
#[derive(Debug, Clone)]
pub struct Lts {
    pub states: Vec<TypedGraph>,
    pub initial: usize,
    pub transitions: Vec<Transition>,
    /// Breadth-first depth of each state.
    pub depth: Vec<usize>,
    /// True when the step bound cut off unexplored states.
    pub bound_reached: bool,
}

impl Lts {
    pub fn successors(&self, state: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == state)
    }
}

/// Canonical key of a state for deduplication.
pub fn state_key(g: &ConditionalGrammar, state: &TypedGraph) -> String {
    if g.is_safe() {
        state.safe_key().join(",")
    } else {
        let tg = Arc::clone(state.type_graph());
        let s = state.clone();
        canonical_key(
            state.graph(),
            &|v: NodeId| tg.node_name(s.node_type(v)).to_string(),
            &|e: EdgeId| tg.edge_name(s.edge_type(e)).to_string(),
        )
    }
}

/// All transitions enabled in `state`, in canonical order.
pub fn enabled_steps(g: &ConditionalGrammar, state: &TypedGraph) -> Vec<DerivationStep> {
    let mut out = Vec::new();
    let family_members: Vec<&str> = g
        .families()
        .iter()
        .flat_map(|f| f.members.iter().map(|m| m.rule.as_str()))
        .collect();

    for family in g.families() {
        out.extend(family_steps(g, family, state));
    }
    for rule in g.rules() {
        if family_members.contains(&rule.name()) {
            continue;
        }
        for m in find_matches(rule, state) {
            if let Ok(step) = apply(
                rule,
                g.nacs_of(rule.name()),
                state,
                &m,
                &g.fresh_names(rule.name()),
            ) {
                out.push(step);
            }
        }
    }
    out
}

/// Maximal-member application: per match of the family's core lhs, the
/// largest member with an extending match fires.
fn family_steps(
    g: &ConditionalGrammar,
    family: &RuleFamilyInfo,
    state: &TypedGraph,
) -> Vec<DerivationStep> {
    let mut out = Vec::new();
    for core_match in enumerate_typed_monos(&family.core, state) {
        'members: for member in &family.members {
            let rule = g.rule(&member.rule).expect("family member is a rule");
            let mut fixed_nodes = BTreeMap::new();
            for v in member.core_to_lhs.source().node_ids() {
                fixed_nodes.insert(member.core_to_lhs.node(v), core_match.node(v));
            }
            let mut fixed_edges = BTreeMap::new();
            for e in member.core_to_lhs.source().edge_ids() {
                fixed_edges.insert(member.core_to_lhs.edge(e), core_match.edge(e));
            }
            let extending =
                enumerate_typed_monos_extending(rule.lhs(), state, &fixed_nodes, &fixed_edges);
            if extending.is_empty() {
                continue;
            }
            for m in extending {
                if let Ok(step) = apply(
                    rule,
                    g.nacs_of(&member.rule),
                    state,
                    &m,
                    &g.fresh_names(&member.rule),
                ) {
                    out.push(step);
                }
            }
            break 'members;
        }
    }
    out
}

/// Breadth-first exploration up to `max_steps` (unbounded when `None`).
///
/// The frontier may be expanded by several workers (`NACFORGE_WORKERS`);
/// results are merged in frontier order, so the transition system is
/// deterministic regardless of worker count.
pub fn explore(g: &ConditionalGrammar, max_steps: Option<usize>) -> Lts {
    let workers: usize = std::env::var("NACFORGE_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1);

    let mut states: Vec<TypedGraph> = vec![g.start().clone()];
    let mut depth = vec![0usize];
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    index.insert(state_key(g, g.start()), 0);
    let mut transitions = Vec::new();
    let mut bound_reached = false;

    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let cut = max_steps.is_some_and(|b| depth[frontier[0]] >= b);
        if cut {
            bound_reached = true;
            break;
        }
        // Expand the whole frontier (one BFS layer) in parallel.
        let layer: Vec<(usize, Vec<DerivationStep>)> = if workers > 1 {
            let chunk = frontier.len().div_ceil(workers);
            let mut results: Vec<Vec<(usize, Vec<DerivationStep>)>> = Vec::new();
            std::thread::scope(|scope| {
                let handles: Vec<_> = frontier
                    .chunks(chunk)
                    .map(|part| {
                        let states = &states;
                        scope.spawn(move || {
                            part.iter()
                                .map(|&s| (s, enabled_steps(g, &states[s])))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for h in handles {
                    results.push(h.join().expect("worker does not panic"));
                }
            });
            results.into_iter().flatten().collect()
        } else {
            frontier
                .iter()
                .map(|&s| (s, enabled_steps(g, &states[s])))
                .collect()
        };

        let mut next_frontier = Vec::new();
        for (from, steps) in layer {
            for step in steps {
                let key = state_key(g, &step.after);
                let to = match index.get(&key) {
                    Some(&i) => i,
                    None => {
                        let i = states.len();
                        states.push(step.after.clone());
                        depth.push(depth[from] + 1);
                        index.insert(key, i);
                        next_frontier.push(i);
                        i
                    }
                };
                transitions.push(Transition {
                    from,
                    rule: step.rule_name().to_string(),
                    digest: match_digest(&step.match_morphism),
                    to,
                });
            }
        }
        frontier = next_frontier;
    }

    Lts { states, initial: 0, transitions, depth, bound_reached }
}

/// Rebuilds the derivation step of a transition (the match is recovered
/// from the digest).
pub fn transition_step(g: &ConditionalGrammar, lts: &Lts, t: &Transition) -> DerivationStep {
    let state = &lts.states[t.from];
    let rule = g.rule(&t.rule).expect("transition rule exists");
    let m = find_matches(rule, state)
        .into_iter()
        .find(|m| match_digest(m) == t.digest)
        .expect("transition match is reproducible");
    apply(rule, g.nacs_of(&t.rule), state, &m, &g.fresh_names(&t.rule))
        .expect("recorded transition applies")
}

/// A state violating the complementation invariant.
#[derive(Debug, Clone)]
pub struct InvariantStateViolation {
    pub state: usize,
    pub clause: String,
    pub both_present: bool,
}

/// Evaluates the invariant on every reachable state.
pub fn check_invariant_reachable(lts: &Lts, phi: &InvariantFormula) -> Vec<InvariantStateViolation> {
    let mut out = Vec::new();
    for (i, state) in lts.states.iter().enumerate() {
        for v in eval_invariant(state, phi) {
            out.push(InvariantStateViolation {
                state: i,
                clause: v.clause,
                both_present: v.both_present,
            });
        }
    }
    out
}

/// A match violating a supposedly redundant constraint.
#[derive(Debug, Clone)]
pub struct RedundancyViolation {
    pub state: usize,
    pub rule: String,
    pub nac: String,
}

/// Checks that every constraint of every rule is satisfied at every match
/// in every reachable state.
pub fn check_nac_redundancy(g: &ConditionalGrammar, lts: &Lts) -> Vec<RedundancyViolation> {
    let mut out = Vec::new();
    for (i, state) in lts.states.iter().enumerate() {
        for rule in g.rules() {
            let nacs = g.nacs_of(rule.name());
            if nacs.is_empty() {
                continue;
            }
            for m in find_matches(rule, state) {
                for c in nacs {
                    if !satisfies(&m, c, state) {
                        out.push(RedundancyViolation {
                            state: i,
                            rule: rule.name().to_string(),
                            nac: c.id().to_string(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// A transition of the original grammar that could not be reflected into
/// the enriched one.
#[derive(Debug, Clone)]
pub struct ReflectionFailure {
    pub transition: Transition,
    pub reason: String,
}

/// Theorem bench: every transition `G =p=> H` of the original grammar is
/// matched by an enriched transition from the closure of `G` whose result
/// retypes back to `H`.
pub fn check_reflection(
    etg: &EnrichedTypeGraph,
    enriched: &ConditionalGrammar,
    original: &ConditionalGrammar,
    lts: &Lts,
    e: &GrammarMorphism,
) -> Vec<ReflectionFailure> {
    let mut failures = Vec::new();
    for t in &lts.transitions {
        match reflect_transition(etg, enriched, original, lts, t, e) {
            Ok(()) => {}
            Err(reason) => failures.push(ReflectionFailure { transition: t.clone(), reason }),
        }
    }
    failures
}

fn reflect_transition(
    etg: &EnrichedTypeGraph,
    enriched: &ConditionalGrammar,
    original: &ConditionalGrammar,
    lts: &Lts,
    t: &Transition,
    e: &GrammarMorphism,
) -> Result<(), String> {
    let _ = original;
    let g = &lts.states[t.from];
    let h = &lts.states[t.to];
    let closed = invariant_closure(etg, g).map_err(|e| e.to_string())?;
    if find_typed_iso(&retype(&e.span, &closed).typed, g).is_none() {
        return Err("closure does not retype back to the source state".into());
    }
    let family = enriched
        .families()
        .iter()
        .find(|f| f.original == t.rule)
        .ok_or_else(|| format!("no family encodes rule {}", t.rule))?;
    let steps = family_steps(enriched, family, &closed);
    for step in steps {
        let back = retype(&e.span, &step.after);
        if find_typed_iso(&back.typed, h).is_some() {
            return Ok(());
        }
    }
    Err("no enriched step retypes to the target state".into())
}

/// Outcome of the bisimulation check between an original grammar and a
/// retyped encoded grammar.
#[derive(Debug, Clone)]
pub struct EquivReport {
    pub bisimilar: bool,
    pub left_states: usize,
    pub right_states: usize,
    pub issues: Vec<String>,
}

/// Verifies that retyping is a functional bisimulation between the encoded
/// grammar's transition system and the original's.
///
/// `label_map` sends encoded rule names to original rule names.
pub fn check_equiv(
    original_lts: &Lts,
    encoded_lts: &Lts,
    span: &crate::morphism::TypeSpan,
    label_map: &dyn Fn(&str) -> String,
) -> EquivReport {
    let mut issues = Vec::new();

    // Functional state map: every encoded state retypes onto an original one.
    let mut map = Vec::with_capacity(encoded_lts.states.len());
    for (i, s) in encoded_lts.states.iter().enumerate() {
        let r = retype(span, s);
        match original_lts
            .states
            .iter()
            .position(|o| find_typed_iso(&r.typed, o).is_some())
        {
            Some(j) => map.push(j),
            None => {
                issues.push(format!("encoded state {i} retypes outside the original system"));
                map.push(usize::MAX);
            }
        }
    }
    if map.is_empty() || map[encoded_lts.initial] != original_lts.initial {
        issues.push("initial states do not correspond".into());
    }

    if issues.is_empty() {
        // Forth: encoded transitions map to original transitions.
        for t in &encoded_lts.transitions {
            let label = label_map(&t.rule);
            let ok = original_lts
                .transitions
                .iter()
                .any(|o| o.from == map[t.from] && o.rule == label && o.to == map[t.to]);
            if !ok {
                issues.push(format!(
                    "encoded transition {} -{}-> {} has no original counterpart",
                    t.from, t.rule, t.to
                ));
            }
        }
        // Back: original transitions are matched from every preimage state.
        for (i, _) in encoded_lts.states.iter().enumerate() {
            for o in original_lts.transitions.iter().filter(|o| o.from == map[i]) {
                let ok = encoded_lts.transitions.iter().any(|t| {
                    t.from == i && label_map(&t.rule) == o.rule && map[t.to] == o.to
                });
                if !ok {
                    issues.push(format!(
                        "original transition {} -{}-> {} is not matched from encoded state {i}",
                        o.from, o.rule, o.to
                    ));
                }
            }
        }
    }

    EquivReport {
        bisimilar: issues.is_empty(),
        left_states: original_lts.states.len(),
        right_states: encoded_lts.states.len(),
        issues,
    }
}

/// Greatest-fixpoint relational bisimilarity between two transition systems
/// with relabelled transitions; the independent oracle for [`check_equiv`].
pub fn relational_bisimilar(
    a: &Lts,
    b: &Lts,
    a_label: &dyn Fn(&str) -> String,
    b_label: &dyn Fn(&str) -> String,
    related: &dyn Fn(usize, usize) -> bool,
) -> bool {
    let mut rel = vec![vec![false; b.states.len()]; a.states.len()];
    for (i, row) in rel.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = related(i, j);
        }
    }
    loop {
        let mut changed = false;
        for i in 0..a.states.len() {
            for j in 0..b.states.len() {
                if !rel[i][j] {
                    continue;
                }
                let forth = a.successors(i).all(|ta| {
                    b.successors(j).any(|tb| {
                        a_label(&ta.rule) == b_label(&tb.rule) && rel[ta.to][tb.to]
                    })
                });
                let back = b.successors(j).all(|tb| {
                    a.successors(i).any(|ta| {
                        a_label(&ta.rule) == b_label(&tb.rule) && rel[ta.to][tb.to]
                    })
                });
                if !(forth && back) {
                    rel[i][j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return rel[a.initial][b.initial];
        }
    }
}

/// Outcome of the independence preservation/reflection sweep.
#[derive(Debug, Clone)]
pub struct IndependenceReport {
    /// Consecutive pairs independent in the source whose images are not.
    pub preservation_violations: Vec<String>,
    /// Consecutive pairs whose images are independent while the source pair
    /// is not; counterexamples to the reflection conjecture, not failures.
    pub reflection_findings: Vec<String>,
    pub pairs_checked: usize,
}

/// Sweeps every consecutive transition pair of the source system, compares
/// sequential independence before and after mapping along the morphism.
pub fn check_independence(
    f: &GrammarMorphism,
    report: &MorphismReport,
    source: &ConditionalGrammar,
    source_lts: &Lts,
    target: &ConditionalGrammar,
) -> IndependenceReport {
    let mut preservation_violations = Vec::new();
    let mut reflection_findings = Vec::new();
    let mut pairs = 0usize;

    for t1 in &source_lts.transitions {
        let step1 = transition_step(source, source_lts, t1);
        for t2 in source_lts.transitions.iter().filter(|t| t.from == t1.to) {
            pairs += 1;
            // Rebase the second step onto step1.after (states are canonical
            // representatives, iso but not identical).
            let mid = &source_lts.states[t2.from];
            let rule2 = source.rule(&t2.rule).expect("rule exists");
            let m2_canon = find_matches(rule2, mid)
                .into_iter()
                .find(|m| match_digest(m) == t2.digest)
                .expect("transition match is reproducible");
            let iso = find_typed_iso(mid, &step1.after).expect("states are isomorphic");
            let m2 = m2_canon.then(&iso).expect("match transports along the iso");
            let Ok(step2) = apply(
                rule2,
                source.nacs_of(&t2.rule),
                &step1.after,
                &m2,
                &source.fresh_names(&t2.rule),
            ) else {
                continue;
            };
            let src_indep = sequential_independent(
                &step1,
                &step2,
                source.nacs_of(&t1.rule),
                source.nacs_of(&t2.rule),
            )
            .expect("steps are consecutive by construction");

            let Some((img1, img2)) = map_consecutive(f, report, target, &step1, &step2) else {
                preservation_violations.push(format!(
                    "pair {} ; {} failed to map",
                    t1.rule, t2.rule
                ));
                continue;
            };
            let tgt_indep = sequential_independent(
                &img1,
                &img2,
                target.nacs_of(img1.rule.name()),
                target.nacs_of(img2.rule.name()),
            )
            .expect("image steps are consecutive by construction");

            if src_indep && !tgt_indep {
                preservation_violations.push(format!(
                    "independent pair {} ; {} maps to a dependent pair",
                    t1.rule, t2.rule
                ));
            }
            if tgt_indep && !src_indep {
                reflection_findings.push(format!(
                    "dependent pair {} ; {} maps to an independent pair",
                    t1.rule, t2.rule
                ));
            }
        }
    }
    IndependenceReport { preservation_violations, reflection_findings, pairs_checked: pairs }
}

/// Maps two consecutive steps along a grammar morphism so that the images
/// are consecutive as well.
pub fn map_consecutive(
    f: &GrammarMorphism,
    report: &MorphismReport,
    target: &ConditionalGrammar,
    step1: &DerivationStep,
    step2: &DerivationStep,
) -> Option<(DerivationStep, DerivationStep)> {
    let img1 = morphism::map_derivation(f, target, report, std::slice::from_ref(step1))
        .ok()?
        .pop()?;
    // Image of the second match, transported onto img1.after.
    let retyped_mid = retype(&f.span, &step2.before);
    let retyped_lhs = retype(&f.span, step2.rule.lhs());
    let retyped_match = retype_morphism(&step2.match_morphism, &retyped_lhs, &retyped_mid);
    let i_p = report.lhs_embeddings.get(step2.rule.name())?;
    let toward_mid = i_p.then(&retyped_match).ok()?;
    let iso = find_typed_iso(&retyped_mid.typed, &img1.after)?;
    let m2 = toward_mid.then(&iso).ok()?;
    let target_name = f.rule_map.get(step2.rule.name())?;
    let rule2 = target.rule(target_name)?;
    let img2 = apply(
        rule2,
        target.nacs_of(target_name),
        &img1.after,
        &m2,
        &FreshNames::Tagged("map2".into()),
    )
    .ok()?;
    Some((img1, img2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{drop_nacs, enrich_grammar, invariant_formula};
    use crate::fixtures::client_server;
    use crate::morphism::{build_d, build_e, check_morphism};

    #[test]
    fn client_server_exploration_matches_golden_counts() {
        let cs = client_server();
        let lts = explore(&cs, None);
        assert!(!lts.bound_reached);
        assert_eq!(lts.states.len(), 20);
        assert_eq!(lts.transitions.len(), 30);
    }

    #[test]
    fn zero_step_bound_keeps_only_the_start_state() {
        let cs = client_server();
        let lts = explore(&cs, Some(0));
        assert_eq!(lts.states.len(), 1);
        assert!(lts.transitions.is_empty());
        assert!(lts.bound_reached);
    }

    #[test]
    fn start_graph_enables_exactly_the_promotions() {
        let cs = client_server();
        let lts = explore(&cs, Some(1));
        let mut labels: Vec<&str> = lts
            .successors(0)
            .map(|t| t.rule.as_str())
            .collect();
        labels.sort();
        assert_eq!(labels, vec!["pc(C1)", "pc(C2)"]);
    }

    #[test]
    fn exploration_is_deterministic_across_worker_counts() {
        let cs = client_server();
        let base = explore(&cs, None);
        std::env::set_var("NACFORGE_WORKERS", "3");
        let par = explore(&cs, None);
        std::env::remove_var("NACFORGE_WORKERS");
        assert_eq!(base.states.len(), par.states.len());
        assert_eq!(base.transitions, par.transitions);
    }

    #[test]
    fn encoded_exploration_satisfies_invariant_everywhere() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let lts = explore(&e.grammar, None);
        assert_eq!(lts.states.len(), 20, "encoding preserves the state count");
        let phi = invariant_formula(&e.etg);
        assert!(check_invariant_reachable(&lts, &phi).is_empty());
    }

    #[test]
    fn encoded_nacs_are_redundant_everywhere() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let lts = explore(&e.grammar, None);
        assert!(check_nac_redundancy(&e.grammar, &lts).is_empty());
    }

    #[test]
    fn original_transitions_reflect_into_the_encoding() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let lts = explore(&cs, None);
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let failures = check_reflection(&e.etg, &e.grammar, &cs, &lts, &f);
        assert!(failures.is_empty(), "{failures:?}");
    }

    #[test]
    fn original_and_forgotten_encoding_are_bisimilar() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let de = drop_nacs(&e.grammar);
        let f = build_e(&cs, &de, &e.etg.embed);
        let cg_lts = explore(&cs, None);
        let de_lts = explore(&de, None);
        let report = check_equiv(&cg_lts, &de_lts, &f.span, &|r| {
            f.rule_map.get(r).cloned().unwrap_or_else(|| r.to_string())
        });
        assert!(report.bisimilar, "{:?}", report.issues);
        assert_eq!(report.left_states, report.right_states);
    }

    #[test]
    fn identical_grammars_are_trivially_bisimilar() {
        let cs = client_server();
        let lts = explore(&cs, None);
        let span = crate::morphism::TypeSpan::identity(Arc::clone(cs.type_graph()));
        let report = check_equiv(&lts, &lts, &span, &|r| r.to_string());
        assert!(report.bisimilar);
    }

    #[test]
    fn deleting_a_rule_breaks_bisimilarity() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let mut de = drop_nacs(&e.grammar);
        // Remove one whole family from the encoded grammar.
        let families: Vec<_> = de
            .families()
            .iter()
            .filter(|f| f.original != "sm(S1)")
            .cloned()
            .collect();
        de = de.with_families(families);
        let f = build_e(&cs, &de, &e.etg.embed);
        let cg_lts = explore(&cs, None);
        let de_lts = explore(&de, None);
        let report = check_equiv(&cg_lts, &de_lts, &f.span, &|r| {
            f.rule_map.get(r).cloned().unwrap_or_else(|| r.to_string())
        });
        assert!(!report.bisimilar);
    }

    #[test]
    fn functional_and_relational_bisimulation_agree() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let de = drop_nacs(&e.grammar);
        let f = build_e(&cs, &de, &e.etg.embed);
        let cg_lts = explore(&cs, None);
        let de_lts = explore(&de, None);
        let label = |r: &str| f.rule_map.get(r).cloned().unwrap_or_else(|| r.to_string());
        let functional = check_equiv(&cg_lts, &de_lts, &f.span, &label);
        let relational = relational_bisimilar(
            &cg_lts,
            &de_lts,
            &|r| r.to_string(),
            &label,
            &|i, j| {
                let r = retype(&f.span, &de_lts.states[j]);
                find_typed_iso(&r.typed, &cg_lts.states[i]).is_some()
            },
        );
        assert_eq!(functional.bisimilar, relational);
        assert!(relational);
    }

    #[test]
    fn independence_is_preserved_along_the_encoding() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let f = build_e(&cs, &e.grammar, &e.etg.embed);
        let report = check_morphism(&f, &e.grammar, &cs);
        assert!(report.ok());
        let lts = explore(&e.grammar, None);
        let indep = check_independence(&f, &report, &e.grammar, &lts, &cs);
        assert!(indep.pairs_checked > 0);
        assert!(
            indep.preservation_violations.is_empty(),
            "{:?}",
            indep.preservation_violations
        );
    }

    #[test]
    fn forgetting_preserves_and_reflects_independence() {
        let cs = client_server();
        let e = enrich_grammar(&cs).unwrap();
        let de = drop_nacs(&e.grammar);
        let d = build_d(&e.grammar);
        let report = check_morphism(&d, &e.grammar, &de);
        assert!(report.ok());
        let lts = explore(&e.grammar, None);
        let indep = check_independence(&d, &report, &e.grammar, &lts, &de);
        assert!(indep.preservation_violations.is_empty());
        assert!(indep.reflection_findings.is_empty());
    }

    #[test]
    fn local_church_rosser_on_all_independent_pairs() {
        use crate::grammar::swap_steps;
        let cs = client_server();
        let lts = explore(&cs, None);
        let mut checked = 0;
        for t1 in &lts.transitions {
            let step1 = transition_step(&cs, &lts, t1);
            for t2 in lts.transitions.iter().filter(|t| t.from == t1.to) {
                let mid = &lts.states[t2.from];
                let rule2 = cs.rule(&t2.rule).unwrap();
                let m2_canon = find_matches(rule2, mid)
                    .into_iter()
                    .find(|m| match_digest(m) == t2.digest)
                    .unwrap();
                let iso = find_typed_iso(mid, &step1.after).unwrap();
                let m2 = m2_canon.then(&iso).unwrap();
                let Ok(step2) = apply(
                    rule2,
                    cs.nacs_of(&t2.rule),
                    &step1.after,
                    &m2,
                    &cs.fresh_names(&t2.rule),
                ) else {
                    continue;
                };
                let indep = sequential_independent(
                    &step1,
                    &step2,
                    cs.nacs_of(&t1.rule),
                    cs.nacs_of(&t2.rule),
                )
                .unwrap();
                if indep {
                    let (first, second) = swap_steps(
                        &step1,
                        &step2,
                        cs.nacs_of(&t1.rule),
                        cs.nacs_of(&t2.rule),
                    )
                    .unwrap()
                    .expect("independent steps swap");
                    assert_eq!(first.rule_name(), step2.rule_name());
                    assert!(find_typed_iso(&second.after, &step2.after).is_some());
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "some independent pairs must exist");
    }
}
