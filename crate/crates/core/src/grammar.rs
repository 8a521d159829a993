//! Rules, negative application conditions, conditional grammars and DPO
//! rewriting steps.
//!
//! Matches are monomorphisms. A rewrite first checks the rule's constraints,
//! then builds the double-pushout diagram: the deletion square through
//! [`pushout_complement`](crate::graph::pushout_complement), the creation
//! square by gluing fresh right-hand side items onto the context.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{
    self, enumerate_typed_monos, enumerate_typed_monos_extending, extend_mono, pushout_complement,
    EdgeId, Graph, GraphMorphism, NodeId, TypedGraph,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApplyError {
    #[error("match is not a monomorphism")]
    NonMonoMatch,
    #[error("match target is not the given host graph")]
    WrongHost,
    #[error("match violates constraint `{0}`")]
    NacViolated(String),
    #[error(transparent)]
    Graph(#[from] graph::Error),
    #[error("created item `{0}` would duplicate an existing type occurrence in a safe grammar")]
    SafetyViolated(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndependenceError {
    #[error("steps are not consecutive: first.after differs from second.before")]
    NotConsecutive,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("rule `{0}`: {1}")]
    BadRule(String, String),
    #[error("constraint `{0}`: {1}")]
    BadConstraint(String, String),
    #[error("graph `{0}` is not typed over the grammar's type graph")]
    WrongTypeGraph(String),
    #[error("safe grammar requires injective typing on `{0}`")]
    NotSafe(String),
    #[error("no rule named `{0}`")]
    UnknownRule(String),
    #[error("subsumption is only defined for constraints over the same left-hand side")]
    SubsumptionDomainMismatch,
}

/// How freshly created items are named by [`apply`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FreshNames {
    /// Created items take the identity of their type-graph image. Only
    /// unambiguous for safe grammars.
    TypeImage,
    /// Created items are named `<tag>#<rhs-item>`, suffixed on collision.
    Tagged(String),
}

/// A span of monos `L <- K -> R` typed over one type graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    name: String,
    lhs: TypedGraph,
    interface: TypedGraph,
    rhs: TypedGraph,
    to_lhs: GraphMorphism,
    to_rhs: GraphMorphism,
}

impl Rule {
    pub fn new(
        name: &str,
        lhs: TypedGraph,
        interface: TypedGraph,
        rhs: TypedGraph,
        to_lhs: GraphMorphism,
        to_rhs: GraphMorphism,
    ) -> Result<Rule, GrammarError> {
        let bad = |msg: &str| Err(GrammarError::BadRule(name.to_string(), msg.to_string()));
        if !to_lhs.is_mono() || !to_rhs.is_mono() {
            return bad("the rule span must consist of monos");
        }
        if to_lhs.source() != interface.graph() || to_rhs.source() != interface.graph() {
            return bad("span legs must share the interface graph");
        }
        if to_lhs.target() != lhs.graph() || to_rhs.target() != rhs.graph() {
            return bad("span legs must land in the lhs and rhs");
        }
        if lhs.type_graph() != interface.type_graph() || rhs.type_graph() != interface.type_graph()
        {
            return bad("all three graphs must share one type graph");
        }
        for (leg, side) in [(&to_lhs, &lhs), (&to_rhs, &rhs)] {
            if !graph::is_typed_morphism(leg, &interface, side) {
                return bad("span legs must be typed morphisms");
            }
        }
        Ok(Rule { name: name.to_string(), lhs, interface, rhs, to_lhs, to_rhs })
    }

    /// A rule `L = K = R` that rewrites nothing.
    pub fn identity(name: &str, graph: TypedGraph) -> Rule {
        let id = GraphMorphism::identity(Arc::clone(graph.graph()));
        Rule {
            name: name.to_string(),
            lhs: graph.clone(),
            interface: graph.clone(),
            rhs: graph,
            to_lhs: id.clone(),
            to_rhs: id,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lhs(&self) -> &TypedGraph {
        &self.lhs
    }

    pub fn interface(&self) -> &TypedGraph {
        &self.interface
    }

    pub fn rhs(&self) -> &TypedGraph {
        &self.rhs
    }

    pub fn to_lhs(&self) -> &GraphMorphism {
        &self.to_lhs
    }

    pub fn to_rhs(&self) -> &GraphMorphism {
        &self.to_rhs
    }

    pub fn renamed(&self, name: &str) -> Rule {
        let mut r = self.clone();
        r.name = name.to_string();
        r
    }

    /// Items of the lhs with no preimage in the interface.
    pub fn deleted_nodes(&self) -> Vec<NodeId> {
        self.lhs
            .graph()
            .node_ids()
            .filter(|&v| self.to_lhs.node_preimage(v).is_none())
            .collect()
    }

    pub fn deleted_edges(&self) -> Vec<EdgeId> {
        self.lhs
            .graph()
            .edge_ids()
            .filter(|&e| self.to_lhs.edge_preimage(e).is_none())
            .collect()
    }

    /// Items of the rhs with no preimage in the interface.
    pub fn created_nodes(&self) -> Vec<NodeId> {
        self.rhs
            .graph()
            .node_ids()
            .filter(|&v| self.to_rhs.node_preimage(v).is_none())
            .collect()
    }

    pub fn created_edges(&self) -> Vec<EdgeId> {
        self.rhs
            .graph()
            .edge_ids()
            .filter(|&e| self.to_rhs.edge_preimage(e).is_none())
            .collect()
    }
}

/// A negative application condition `n: L -> N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    id: String,
    embedding: GraphMorphism,
    forbidden: TypedGraph,
}

impl Constraint {
    pub fn new(
        id: &str,
        lhs: &TypedGraph,
        embedding: GraphMorphism,
        forbidden: TypedGraph,
    ) -> Result<Constraint, GrammarError> {
        let bad = |msg: &str| Err(GrammarError::BadConstraint(id.to_string(), msg.to_string()));
        if embedding.source() != lhs.graph() || embedding.target() != forbidden.graph() {
            return bad("embedding endpoints must be the rule lhs and the forbidden graph");
        }
        if !embedding.is_mono() {
            return bad("constraint embedding must be a mono");
        }
        if embedding.is_iso() {
            return bad("constraint embedding must not be an iso (rule would never apply)");
        }
        if !graph::is_typed_morphism(&embedding, lhs, &forbidden) {
            return bad("embedding must be a typed morphism");
        }
        Ok(Constraint { id: id.to_string(), embedding, forbidden })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// `n: L -> N`.
    pub fn embedding(&self) -> &GraphMorphism {
        &self.embedding
    }

    /// The forbidden context `N`.
    pub fn forbidden(&self) -> &TypedGraph {
        &self.forbidden
    }
}

/// One member of an encoded rule family, carrying the embedding of the
/// family's shared core left-hand side into its own.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub rule: String,
    pub core_to_lhs: GraphMorphism,
}

/// Application-policy metadata for encoded rule families: per core match,
/// only the largest member with an extending match fires.
#[derive(Debug, Clone)]
pub struct RuleFamilyInfo {
    /// Name of the rule this family encodes.
    pub original: String,
    /// The shared core left-hand side of all members.
    pub core: TypedGraph,
    /// Members ordered by decreasing lhs size (ties by construction order).
    pub members: Vec<FamilyMember>,
}

/// A conditional graph grammar: type graph, start graph, named rules and
/// their constraint sets.
#[derive(Debug, Clone)]
pub struct ConditionalGrammar {
    type_graph: Arc<Graph>,
    start: TypedGraph,
    rules: Vec<Rule>,
    nacs: BTreeMap<String, Vec<Constraint>>,
    safe: bool,
    families: Vec<RuleFamilyInfo>,
}

impl ConditionalGrammar {
    pub fn new(
        type_graph: Arc<Graph>,
        start: TypedGraph,
        rules: Vec<Rule>,
        nacs: BTreeMap<String, Vec<Constraint>>,
        safe: bool,
    ) -> Result<ConditionalGrammar, GrammarError> {
        if start.type_graph() != &type_graph {
            return Err(GrammarError::WrongTypeGraph("start graph".into()));
        }
        if safe && !start.has_injective_typing() {
            return Err(GrammarError::NotSafe("start graph".into()));
        }
        for r in &rules {
            if r.lhs().type_graph() != &type_graph {
                return Err(GrammarError::WrongTypeGraph(r.name().to_string()));
            }
            if safe {
                for (side, g) in [("lhs", r.lhs()), ("interface", r.interface()), ("rhs", r.rhs())]
                {
                    if !g.has_injective_typing() {
                        return Err(GrammarError::NotSafe(format!("{} of {}", side, r.name())));
                    }
                }
            }
        }
        for (rule, cs) in &nacs {
            let r = rules
                .iter()
                .find(|r| r.name() == rule)
                .ok_or_else(|| GrammarError::UnknownRule(rule.clone()))?;
            // Constraint graphs may type non-injectively even in safe
            // grammars (lifted constraints contain a body and its
            // complement); only start and rule graphs are restricted.
            for c in cs {
                if c.embedding.source() != r.lhs().graph() {
                    return Err(GrammarError::BadConstraint(
                        c.id.clone(),
                        "constraint lhs differs from the rule lhs".into(),
                    ));
                }
            }
        }
        Ok(ConditionalGrammar { type_graph, start, rules, nacs, safe, families: Vec::new() })
    }

    pub fn type_graph(&self) -> &Arc<Graph> {
        &self.type_graph
    }

    pub fn start(&self) -> &TypedGraph {
        &self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name() == name)
    }

    pub fn nacs_of(&self, rule: &str) -> &[Constraint] {
        self.nacs.get(rule).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_nacs(&self) -> &BTreeMap<String, Vec<Constraint>> {
        &self.nacs
    }

    pub fn is_safe(&self) -> bool {
        self.safe
    }

    pub fn families(&self) -> &[RuleFamilyInfo] {
        &self.families
    }

    pub fn with_families(mut self, families: Vec<RuleFamilyInfo>) -> Self {
        self.families = families;
        self
    }

    /// The naming policy for items created by this grammar's rewrites.
    pub fn fresh_names(&self, rule: &str) -> FreshNames {
        if self.safe {
            FreshNames::TypeImage
        } else {
            FreshNames::Tagged(rule.to_string())
        }
    }

    /// Removes every constraint, keeping rules and start graph untouched.
    pub fn without_nacs(&self) -> ConditionalGrammar {
        let mut g = self.clone();
        g.nacs = BTreeMap::new();
        g
    }

    /// Applies `rule` at `m` in `host`, naming created items by the
    /// grammar's policy.
    pub fn apply_rule(
        &self,
        rule: &str,
        host: &TypedGraph,
        m: &GraphMorphism,
    ) -> Result<DerivationStep, ApplyError> {
        let r = self
            .rule(rule)
            .unwrap_or_else(|| panic!("unknown rule `{rule}`"));
        apply(r, self.nacs_of(rule), host, m, &self.fresh_names(rule))
    }
}

/// A conditional DPO transformation `G =(p,m)=> H` with its full witness.
#[derive(Debug, Clone)]
pub struct DerivationStep {
    pub rule: Rule,
    /// `m: L -> G`.
    pub match_morphism: GraphMorphism,
    pub before: TypedGraph,
    pub after: TypedGraph,
    /// The context `D`.
    pub context: TypedGraph,
    /// `d: K -> D`.
    pub interface_in_context: GraphMorphism,
    /// `g: D -> G`.
    pub to_before: GraphMorphism,
    /// `h: D -> H`.
    pub to_after: GraphMorphism,
    /// `m*: R -> H`.
    pub comatch: GraphMorphism,
}

impl DerivationStep {
    pub fn rule_name(&self) -> &str {
        self.rule.name()
    }

    /// Checks that both witness squares commute and are pushouts (by
    /// regluing and comparing up to iso). Used by tests and the bench.
    pub fn verify(&self) -> bool {
        let commutes = |a: Result<GraphMorphism, graph::Error>,
                        b: Result<GraphMorphism, graph::Error>| match (a, b) {
            (Ok(a), Ok(b)) => a.agrees_with(&b),
            _ => false,
        };
        if !commutes(
            self.interface_in_context.then(&self.to_before),
            self.rule.to_lhs().then(&self.match_morphism),
        ) || !commutes(
            self.interface_in_context.then(&self.to_after),
            self.rule.to_rhs().then(&self.comatch),
        ) {
            return false;
        }
        let left = graph::pushout(self.rule.to_lhs(), &self.interface_in_context);
        let right = graph::pushout(self.rule.to_rhs(), &self.interface_in_context);
        match (left, right) {
            (Ok(l), Ok(r)) => {
                graph::find_iso(&l.object, self.before.graph()).is_some()
                    && graph::find_iso(&r.object, self.after.graph()).is_some()
            }
            _ => false,
        }
    }
}

/// The match digest used in transition labels: the sorted list of
/// `(lhs item, host item)` name pairs.
pub fn match_digest(m: &GraphMorphism) -> Vec<(String, String)> {
    let mut d: Vec<(String, String)> = m
        .source()
        .node_ids()
        .map(|n| {
            (
                format!("n:{}", m.source().node_name(n)),
                format!("n:{}", m.target().node_name(m.node(n))),
            )
        })
        .chain(m.source().edge_ids().map(|e| {
            (
                format!("e:{}", m.source().edge_name(e)),
                format!("e:{}", m.target().edge_name(m.edge(e))),
            )
        }))
        .collect();
    d.sort();
    d
}

/// All injective typing-compatible matches of the rule's lhs into the host,
/// in canonical order. Constraints are not consulted here.
pub fn find_matches(rule: &Rule, host: &TypedGraph) -> Vec<GraphMorphism> {
    enumerate_typed_monos(rule.lhs(), host)
}

/// Does `m` satisfy the constraint, i.e. is there no mono `q: N -> G`
/// extending it?
pub fn satisfies(m: &GraphMorphism, c: &Constraint, host: &TypedGraph) -> bool {
    extend_mono(c.embedding(), m, c.forbidden(), host).is_none()
}

/// Sound subsumption check: `n` subsumes `n2` when a mono `N -> N2`
/// commuting with the two embeddings exists (any occurrence of `N2` then
/// contains one of `N`, so violating `n2` violates `n`).
pub fn subsumes(n: &Constraint, n2: &Constraint) -> Result<bool, GrammarError> {
    if n.embedding.source() != n2.embedding.source() {
        return Err(GrammarError::SubsumptionDomainMismatch);
    }
    let mut fixed_nodes = BTreeMap::new();
    for v in n.embedding.source().node_ids() {
        fixed_nodes.insert(n.embedding.node(v), n2.embedding.node(v));
    }
    let mut fixed_edges = BTreeMap::new();
    for e in n.embedding.source().edge_ids() {
        fixed_edges.insert(n.embedding.edge(e), n2.embedding.edge(e));
    }
    Ok(!enumerate_typed_monos_extending(
        n.forbidden(),
        n2.forbidden(),
        &fixed_nodes,
        &fixed_edges,
    )
    .is_empty())
}

/// Performs a conditional DPO step at the mono `m: L -> host`.
pub fn apply(
    rule: &Rule,
    nacs: &[Constraint],
    host: &TypedGraph,
    m: &GraphMorphism,
    fresh: &FreshNames,
) -> Result<DerivationStep, ApplyError> {
    if !m.is_mono() {
        return Err(ApplyError::NonMonoMatch);
    }
    if m.target() != host.graph() || m.source() != rule.lhs().graph() {
        return Err(ApplyError::WrongHost);
    }
    for c in nacs {
        if !satisfies(m, c, host) {
            return Err(ApplyError::NacViolated(c.id().to_string()));
        }
    }

    let pc = pushout_complement(rule.to_lhs(), m)?;

    // Build H: the context D plus fresh copies of R \ r(K).
    let r_graph = rule.rhs().graph();
    let k_to_r = rule.to_rhs();
    let tg = Arc::clone(rule.lhs().type_graph());
    let mut h = (*pc.object).clone();

    let mut r_node_in_h: Vec<Option<NodeId>> = vec![None; r_graph.node_count()];
    for v in rule.interface().graph().node_ids() {
        r_node_in_h[k_to_r.node(v).0] = Some(pc.interface.node(v));
    }
    let mut created_nodes = Vec::new();
    for v in r_graph.node_ids() {
        if r_node_in_h[v.0].is_some() {
            continue;
        }
        let base = match fresh {
            FreshNames::TypeImage => tg.node_name(rule.rhs().node_type(v)).to_string(),
            FreshNames::Tagged(tag) => format!("{tag}#{}", r_graph.node_name(v)),
        };
        if matches!(fresh, FreshNames::TypeImage) && h.node(&base).is_some() {
            return Err(ApplyError::SafetyViolated(base));
        }
        let mut name = base.clone();
        let mut k = 2;
        while h.node(&name).is_some() {
            name = format!("{base}#{k}");
            k += 1;
        }
        let id = h.add_node(&name);
        r_node_in_h[v.0] = Some(id);
        created_nodes.push((v, id));
    }
    let mut r_edge_in_h: Vec<Option<EdgeId>> = vec![None; r_graph.edge_count()];
    for e in rule.interface().graph().edge_ids() {
        r_edge_in_h[k_to_r.edge(e).0] = Some(pc.interface.edge(e));
    }
    let mut created_edges = Vec::new();
    for e in r_graph.edge_ids() {
        if r_edge_in_h[e.0].is_some() {
            continue;
        }
        let base = match fresh {
            FreshNames::TypeImage => tg.edge_name(rule.rhs().edge_type(e)).to_string(),
            FreshNames::Tagged(tag) => format!("{tag}#{}", r_graph.edge_name(e)),
        };
        if matches!(fresh, FreshNames::TypeImage) && h.edge(&base).is_some() {
            return Err(ApplyError::SafetyViolated(base));
        }
        let mut name = base.clone();
        let mut k = 2;
        while h.edge(&name).is_some() {
            name = format!("{base}#{k}");
            k += 1;
        }
        let s = r_node_in_h[r_graph.src(e).0].expect("rhs endpoints already placed");
        let t = r_node_in_h[r_graph.tgt(e).0].expect("rhs endpoints already placed");
        let id = h.add_edge(&name, s, t);
        r_edge_in_h[e.0] = Some(id);
        created_edges.push((e, id));
    }
    let h = Arc::new(h);

    // Typing of H: context items keep the host typing, created items use R's.
    let mut h_node_types = vec![NodeId(0); h.node_count()];
    for v in pc.object.node_ids() {
        h_node_types[v.0] = host.node_type(pc.embedding.node(v));
    }
    for &(rv, hv) in &created_nodes {
        h_node_types[hv.0] = rule.rhs().node_type(rv);
    }
    let mut h_edge_types = vec![EdgeId(0); h.edge_count()];
    for e in pc.object.edge_ids() {
        h_edge_types[e.0] = host.edge_type(pc.embedding.edge(e));
    }
    for &(re, he) in &created_edges {
        h_edge_types[he.0] = rule.rhs().edge_type(re);
    }
    let after = TypedGraph::new(
        GraphMorphism::new(Arc::clone(&h), tg, h_node_types, h_edge_types)
            .expect("result typing preserves structure"),
    );

    let to_after = GraphMorphism::new(
        Arc::clone(&pc.object),
        Arc::clone(&h),
        pc.object.node_ids().collect(),
        pc.object.edge_ids().collect(),
    )
    .expect("context embeds into the result");
    let comatch = GraphMorphism::new(
        Arc::clone(r_graph),
        Arc::clone(&h),
        r_node_in_h.into_iter().map(Option::unwrap).collect(),
        r_edge_in_h.into_iter().map(Option::unwrap).collect(),
    )
    .expect("comatch preserves structure");

    let context = TypedGraph::new(
        pc.embedding
            .then(host.typing())
            .expect("context typing composes"),
    );

    Ok(DerivationStep {
        rule: rule.clone(),
        match_morphism: m.clone(),
        before: host.clone(),
        after,
        context,
        interface_in_context: pc.interface,
        to_before: pc.embedding,
        to_after,
        comatch,
    })
}

/// The bottom span of a step's DPO diagram, as a rule.
pub fn derived_rule(step: &DerivationStep) -> Rule {
    Rule::new(
        &format!("derived({})", step.rule.name()),
        step.before.clone(),
        step.context.clone(),
        step.after.clone(),
        step.to_before.clone(),
        step.to_after.clone(),
    )
    .expect("a DPO bottom span is a valid rule")
}

/// Sequential independence of two consecutive conditional steps.
///
/// Requires the two witness morphisms `i: R1 -> D2` and `j: L2 -> D1` of the
/// classical characterisation, plus the two NAC conditions of the
/// conditional definition: the swapped match of the second rule satisfies
/// its constraints in the common predecessor, and the induced match of the
/// first rule after swapping satisfies its constraints.
pub fn sequential_independent(
    s1: &DerivationStep,
    s2: &DerivationStep,
    nacs1: &[Constraint],
    nacs2: &[Constraint],
) -> Result<bool, IndependenceError> {
    if s1.after != s2.before {
        return Err(IndependenceError::NotConsecutive);
    }
    // i: R1 -> D2 with g2 ∘ i = m1*.
    if factor_through(&s1.comatch, &s2.to_before).is_none() {
        return Ok(false);
    }
    // j: L2 -> D1 with h1 ∘ j = m2.
    let j = match factor_through(&s2.match_morphism, &s1.to_after) {
        Some(j) => j,
        None => return Ok(false),
    };
    let m2_swapped = j.then(&s1.to_before).expect("j lands in the first context");
    for c in nacs2 {
        if !satisfies(&m2_swapped, c, &s1.before) {
            return Ok(false);
        }
    }
    // Perform the swapped first step and check the induced match of rule 1.
    let fresh = FreshNames::Tagged(format!("swap({})", s2.rule.name()));
    let swapped = match apply(&s2.rule, &[], &s1.before, &m2_swapped, &fresh) {
        Ok(step) => step,
        Err(_) => return Ok(false),
    };
    let m1_induced = match factor_through(&s1.match_morphism, &swapped.to_before) {
        Some(f) => f.then(&swapped.to_after).expect("induced match composes"),
        None => return Ok(false),
    };
    for c in nacs1 {
        if !satisfies(&m1_induced, c, &swapped.after) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Executes the swapped order of two consecutive steps, if possible,
/// returning the two new steps (second rule first). Callers compare final
/// graphs for the Local Church-Rosser property.
pub fn swap_steps(
    s1: &DerivationStep,
    s2: &DerivationStep,
    nacs1: &[Constraint],
    nacs2: &[Constraint],
) -> Result<Option<(DerivationStep, DerivationStep)>, IndependenceError> {
    if s1.after != s2.before {
        return Err(IndependenceError::NotConsecutive);
    }
    let j = match factor_through(&s2.match_morphism, &s1.to_after) {
        Some(j) => j,
        None => return Ok(None),
    };
    let m2_swapped = j.then(&s1.to_before).expect("j lands in the first context");
    let fresh2 = FreshNames::Tagged(format!("swap({})", s2.rule.name()));
    let first = match apply(&s2.rule, nacs2, &s1.before, &m2_swapped, &fresh2) {
        Ok(s) => s,
        Err(_) => return Ok(None),
    };
    let m1_induced = match factor_through(&s1.match_morphism, &first.to_before) {
        Some(f) => f.then(&first.to_after).expect("induced match composes"),
        None => return Ok(None),
    };
    let fresh1 = FreshNames::Tagged(format!("swap({})", s1.rule.name()));
    let second = match apply(&s1.rule, nacs1, &first.after, &m1_induced, &fresh1) {
        Ok(s) => s,
        Err(_) => return Ok(None),
    };
    Ok(Some((first, second)))
}

/// Factors `m: X -> G` through a mono `e: D -> G`, returning `X -> D`.
pub fn factor_through(m: &GraphMorphism, e: &GraphMorphism) -> Option<GraphMorphism> {
    if m.target() != e.target() {
        return None;
    }
    let node_map = m
        .source()
        .node_ids()
        .map(|v| e.node_preimage(m.node(v)))
        .collect::<Option<Vec<_>>>()?;
    let edge_map = m
        .source()
        .edge_ids()
        .map(|x| e.edge_preimage(m.edge(x)))
        .collect::<Option<Vec<_>>>()?;
    GraphMorphism::new(
        Arc::clone(m.source()),
        Arc::clone(e.source()),
        node_map,
        edge_map,
    )
    .ok()
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} <- {} -> {}",
            self.name,
            self.lhs.graph(),
            self.interface.graph(),
            self.rhs.graph()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identity_rule_preserves_host_up_to_iso() {
        let cs = fixtures::client_server();
        let host = cs.start().clone();
        let lhs = TypedGraph::from_names(cs.type_graph(), &[("c1", "C1")], &[]);
        let rule = Rule::identity("id", lhs);
        let matches = find_matches(&rule, &host);
        assert_eq!(matches.len(), 1);
        let step = apply(&rule, &[], &host, &matches[0], &FreshNames::TypeImage).unwrap();
        assert!(graph::find_typed_iso(&step.before, &step.after).is_some());
        assert!(step.verify());
    }

    #[test]
    fn promote_client_deletes_client_and_creates_server() {
        let cs = fixtures::client_server();
        let host = cs.start().clone();
        let rule = cs.rule("pc(C1)").unwrap();
        let matches = find_matches(rule, &host);
        assert_eq!(matches.len(), 1, "G0 has one C1 node");
        let step = cs.apply_rule("pc(C1)", &host, &matches[0]).unwrap();
        assert_eq!(step.after.safe_key(), vec!["n:C2", "n:C3", "n:S1"]);
        assert!(step.verify());
    }

    #[test]
    fn no_matches_without_required_types() {
        let cs = fixtures::client_server();
        // jm(C3,M1) needs an M1 node; G0 has none.
        let rule = cs.rule("jm(C3,M1)").unwrap();
        assert!(find_matches(rule, cs.start()).is_empty());
    }

    #[test]
    fn empty_lhs_matches_once() {
        let cs = fixtures::client_server();
        let rule = Rule::identity("empty", TypedGraph::empty_over(Arc::clone(cs.type_graph())));
        assert_eq!(find_matches(&rule, cs.start()).len(), 1);
    }

    #[test]
    fn double_meeting_start_violates_nac() {
        // Fire pc(C1), then sm(S1); a second sm(S1) must report NacViolated.
        let cs = fixtures::client_server();
        let s1 = fixtures::run(&cs, &["pc(C1)", "sm(S1)"]);
        let rule = cs.rule("sm(S1)").unwrap();
        let m = &find_matches(rule, &s1)[0];
        let err = cs.apply_rule("sm(S1)", &s1, m).unwrap_err();
        assert!(matches!(err, ApplyError::NacViolated(_)));
    }

    #[test]
    fn nac_violated_iff_brute_force_extension_exists() {
        let cs = fixtures::client_server();
        let state = fixtures::run(&cs, &["pc(C1)", "sm(S1)", "jm(C2,M1)"]);
        for rule in cs.rules() {
            for m in find_matches(rule, &state) {
                for c in cs.nacs_of(rule.name()) {
                    let by_search = extend_mono(c.embedding(), &m, c.forbidden(), &state);
                    let verdict = apply(rule, &[c.clone()], &state, &m, &FreshNames::TypeImage);
                    match by_search {
                        Some(_) => assert!(matches!(verdict, Err(ApplyError::NacViolated(_)))),
                        None => assert!(!matches!(verdict, Err(ApplyError::NacViolated(_)))),
                    }
                }
            }
        }
    }

    #[test]
    fn dangling_condition_is_reported() {
        // Delete a node that still has an unmatched incident edge.
        let tg = Graph::from_parts(&["A", "B"], &[("e", "A", "B")]);
        let lhs = TypedGraph::from_names(&tg, &[("a", "A")], &[]);
        let interface = TypedGraph::empty_over(Arc::clone(&tg));
        let rhs = TypedGraph::empty_over(Arc::clone(&tg));
        let to_lhs =
            GraphMorphism::new(Arc::clone(interface.graph()), Arc::clone(lhs.graph()), vec![], vec![])
                .unwrap();
        let to_rhs = GraphMorphism::identity(Arc::clone(rhs.graph()));
        let rule = Rule::new("del", lhs, interface, rhs, to_lhs, to_rhs).unwrap();
        let host = TypedGraph::from_names(&tg, &[("a", "A"), ("b", "B")], &[("x", "e", "a", "b")]);
        let m = &find_matches(&rule, &host)[0];
        let err = apply(&rule, &[], &host, m, &FreshNames::TypeImage).unwrap_err();
        assert!(matches!(
            err,
            ApplyError::Graph(graph::Error::DanglingCondition { .. })
        ));
    }

    #[test]
    fn derived_rule_of_promotion_has_host_as_lhs() {
        let cs = fixtures::client_server();
        let host = cs.start().clone();
        let rule = cs.rule("pc(C1)").unwrap();
        let m = &find_matches(rule, &host)[0];
        let step = cs.apply_rule("pc(C1)", &host, m).unwrap();
        let derived = derived_rule(&step);
        assert_eq!(derived.lhs().graph(), host.graph());
        assert!(derived.to_lhs().is_mono() && derived.to_rhs().is_mono());
    }

    #[test]
    fn disjoint_promotions_are_independent() {
        let cs = fixtures::client_server();
        let host = cs.start().clone();
        let m1 = &find_matches(cs.rule("pc(C1)").unwrap(), &host)[0];
        let s1 = cs.apply_rule("pc(C1)", &host, m1).unwrap();
        let m2 = &find_matches(cs.rule("pc(C2)").unwrap(), &s1.after)[0];
        let s2 = cs.apply_rule("pc(C2)", &s1.after, m2).unwrap();
        let verdict = sequential_independent(
            &s1,
            &s2,
            cs.nacs_of("pc(C1)"),
            cs.nacs_of("pc(C2)"),
        )
        .unwrap();
        assert!(verdict);
        // The swap commutes to an isomorphic result.
        let (first, second) = swap_steps(&s1, &s2, cs.nacs_of("pc(C1)"), cs.nacs_of("pc(C2)"))
            .unwrap()
            .expect("independent steps swap");
        assert_eq!(first.rule_name(), "pc(C2)");
        assert!(graph::find_typed_iso(&second.after, &s2.after).is_some());
    }

    #[test]
    fn meeting_creation_then_join_is_dependent() {
        // sm(S1) creates the M1 that jm(C2,M1) needs.
        let cs = fixtures::client_server();
        let g1 = fixtures::run(&cs, &["pc(C1)"]);
        let m1 = &find_matches(cs.rule("sm(S1)").unwrap(), &g1)[0];
        let s1 = cs.apply_rule("sm(S1)", &g1, m1).unwrap();
        let m2 = &find_matches(cs.rule("jm(C2,M1)").unwrap(), &s1.after)[0];
        let s2 = cs.apply_rule("jm(C2,M1)", &s1.after, m2).unwrap();
        let verdict = sequential_independent(
            &s1,
            &s2,
            cs.nacs_of("sm(S1)"),
            cs.nacs_of("jm(C2,M1)"),
        )
        .unwrap();
        assert!(!verdict);
    }

    #[test]
    fn identity_step_is_independent_of_anything_applicable() {
        let cs = fixtures::client_server();
        let host = cs.start().clone();
        let lhs = TypedGraph::from_names(cs.type_graph(), &[("c3", "C3")], &[]);
        let id_rule = Rule::identity("noop", lhs);
        let m = &find_matches(&id_rule, &host)[0];
        let s1 = apply(&id_rule, &[], &host, m, &FreshNames::TypeImage).unwrap();
        let m2 = &find_matches(cs.rule("pc(C1)").unwrap(), &s1.after)[0];
        let s2 = cs.apply_rule("pc(C1)", &s1.after, m2).unwrap();
        assert!(sequential_independent(&s1, &s2, &[], cs.nacs_of("pc(C1)")).unwrap());
    }

    #[test]
    fn subsumption_is_reflexive_and_respects_factorisation() {
        let cs = fixtures::client_server();
        let nac = &cs.nacs_of("pc(C1)")[0];
        assert!(subsumes(nac, nac).unwrap());
        let other = &cs.nacs_of("jm(C1,M2)")[0];
        // Different lhs: precondition violation.
        assert_eq!(
            subsumes(nac, other).unwrap_err(),
            GrammarError::SubsumptionDomainMismatch
        );
    }

    #[test]
    fn matches_agree_with_brute_force_enumeration() {
        let cs = fixtures::client_server();
        let state = fixtures::run(&cs, &["pc(C2)", "sm(S2)"]);
        for rule in cs.rules() {
            let fast = find_matches(rule, &state);
            let slow = brute_force_monos(rule.lhs(), &state);
            assert_eq!(fast.len(), slow, "rule {}", rule.name());
        }
    }

    // Independent oracle: try every injective node/edge assignment and count
    // the ones that commute with sources, targets and typing.
    fn brute_force_monos(pattern: &TypedGraph, host: &TypedGraph) -> usize {
        let pg = pattern.graph();
        let hg = host.graph();
        let mut count = 0;
        let node_choices: Vec<Vec<NodeId>> =
            pg.node_ids().map(|_| hg.node_ids().collect()).collect();
        let mut node_map = vec![NodeId(0); pg.node_count()];
        fn rec_nodes(
            i: usize,
            node_choices: &[Vec<NodeId>],
            node_map: &mut Vec<NodeId>,
            pattern: &TypedGraph,
            host: &TypedGraph,
            count: &mut usize,
        ) {
            if i == node_choices.len() {
                // injectivity
                let mut seen = std::collections::BTreeSet::new();
                if !node_map.iter().all(|n| seen.insert(*n)) {
                    return;
                }
                if !node_map
                    .iter()
                    .enumerate()
                    .all(|(p, h)| pattern.node_type(NodeId(p)) == host.node_type(*h))
                {
                    return;
                }
                rec_edges(pattern, host, node_map, count);
                return;
            }
            for &c in &node_choices[i] {
                node_map[i] = c;
                rec_nodes(i + 1, node_choices, node_map, pattern, host, count);
            }
        }
        fn rec_edges(
            pattern: &TypedGraph,
            host: &TypedGraph,
            node_map: &[NodeId],
            count: &mut usize,
        ) {
            let pg = pattern.graph();
            let hg = host.graph();
            let mut assignments: Vec<Vec<EdgeId>> = Vec::new();
            for e in pg.edge_ids() {
                let ok: Vec<EdgeId> = hg
                    .edge_ids()
                    .filter(|&f| {
                        host.edge_type(f) == pattern.edge_type(e)
                            && hg.src(f) == node_map[pg.src(e).0]
                            && hg.tgt(f) == node_map[pg.tgt(e).0]
                    })
                    .collect();
                if ok.is_empty() {
                    return;
                }
                assignments.push(ok);
            }
            fn pick(
                assignments: &[Vec<EdgeId>],
                i: usize,
                chosen: &mut Vec<EdgeId>,
                count: &mut usize,
            ) {
                if i == assignments.len() {
                    let mut seen = std::collections::BTreeSet::new();
                    if chosen.iter().all(|e| seen.insert(*e)) {
                        *count += 1;
                    }
                    return;
                }
                for &c in &assignments[i] {
                    chosen.push(c);
                    pick(assignments, i + 1, chosen, count);
                    chosen.pop();
                }
            }
            pick(&assignments, 0, &mut Vec::new(), count);
        }
        rec_nodes(0, &node_choices, &mut node_map, pattern, host, &mut count);
        count
    }
}
