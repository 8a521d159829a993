//! Morphism enumeration, monomorphism matching and isomorphism machinery.
//!
//! Enumeration order is fixed: source nodes are assigned in creation order,
//! candidate targets are tried in creation order, then edges likewise. Every
//! caller in the crate relies on this for deterministic output.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{EdgeId, Graph, GraphMorphism, NodeId, TypedGraph};

/// All graph morphisms `a -> b` (not just monos), untyped.
///
/// Exponential; intended for the small mediating-morphism searches in the
/// universal-property checks.
pub fn enumerate_morphisms(a: &Arc<Graph>, b: &Arc<Graph>) -> Vec<GraphMorphism> {
    let mut out = Vec::new();
    let mut node_map = vec![NodeId(0); a.node_count()];
    assign_nodes_all(a, b, 0, &mut node_map, &mut out);
    out
}

fn assign_nodes_all(
    a: &Arc<Graph>,
    b: &Arc<Graph>,
    i: usize,
    node_map: &mut Vec<NodeId>,
    out: &mut Vec<GraphMorphism>,
) {
    if i == a.node_count() {
        complete_edges_all(a, b, node_map, out);
        return;
    }
    if b.node_count() == 0 {
        return;
    }
    for cand in b.node_ids() {
        node_map[i] = cand;
        assign_nodes_all(a, b, i + 1, node_map, out);
    }
}

fn complete_edges_all(
    a: &Arc<Graph>,
    b: &Arc<Graph>,
    node_map: &[NodeId],
    out: &mut Vec<GraphMorphism>,
) {
    // Each edge independently picks any b-edge with matching endpoints.
    let mut choices: Vec<Vec<EdgeId>> = Vec::with_capacity(a.edge_count());
    for e in a.edge_ids() {
        let s = node_map[a.src(e).0];
        let t = node_map[a.tgt(e).0];
        let c: Vec<EdgeId> = b
            .edge_ids()
            .filter(|&f| b.src(f) == s && b.tgt(f) == t)
            .collect();
        if c.is_empty() {
            return;
        }
        choices.push(c);
    }
    let mut idx = vec![0usize; choices.len()];
    loop {
        let edge_map: Vec<EdgeId> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        out.push(
            GraphMorphism::new(Arc::clone(a), Arc::clone(b), node_map.to_vec(), edge_map)
                .expect("constructed maps preserve structure"),
        );
        // Odometer increment.
        let mut k = choices.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// All injective typing-compatible morphisms `pattern -> host`, both typed
/// over the same type graph, in canonical order.
pub fn enumerate_typed_monos(pattern: &TypedGraph, host: &TypedGraph) -> Vec<GraphMorphism> {
    enumerate_typed_monos_extending(pattern, host, &BTreeMap::new(), &BTreeMap::new())
}

/// Like [`enumerate_typed_monos`] but with some source items pre-assigned.
pub fn enumerate_typed_monos_extending(
    pattern: &TypedGraph,
    host: &TypedGraph,
    fixed_nodes: &BTreeMap<NodeId, NodeId>,
    fixed_edges: &BTreeMap<EdgeId, EdgeId>,
) -> Vec<GraphMorphism> {
    if pattern.type_graph() != host.type_graph() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut node_map = vec![None; pattern.graph().node_count()];
    let mut used = vec![false; host.graph().node_count()];
    for (&p, &h) in fixed_nodes {
        if pattern.node_type(p) != host.node_type(h) || used[h.0] {
            return Vec::new();
        }
        node_map[p.0] = Some(h);
        used[h.0] = true;
    }
    assign_nodes_mono(
        pattern,
        host,
        0,
        &mut node_map,
        &mut used,
        fixed_edges,
        &mut out,
    );
    out
}

fn assign_nodes_mono(
    pattern: &TypedGraph,
    host: &TypedGraph,
    i: usize,
    node_map: &mut Vec<Option<NodeId>>,
    used: &mut Vec<bool>,
    fixed_edges: &BTreeMap<EdgeId, EdgeId>,
    out: &mut Vec<GraphMorphism>,
) {
    if i == node_map.len() {
        complete_edges_mono(pattern, host, node_map, fixed_edges, out);
        return;
    }
    if node_map[i].is_some() {
        assign_nodes_mono(pattern, host, i + 1, node_map, used, fixed_edges, out);
        return;
    }
    let want = pattern.node_type(NodeId(i));
    for cand in host.graph().node_ids() {
        if used[cand.0] || host.node_type(cand) != want {
            continue;
        }
        node_map[i] = Some(cand);
        used[cand.0] = true;
        assign_nodes_mono(pattern, host, i + 1, node_map, used, fixed_edges, out);
        node_map[i] = None;
        used[cand.0] = false;
    }
}

fn complete_edges_mono(
    pattern: &TypedGraph,
    host: &TypedGraph,
    node_map: &[Option<NodeId>],
    fixed_edges: &BTreeMap<EdgeId, EdgeId>,
    out: &mut Vec<GraphMorphism>,
) {
    let pg = pattern.graph();
    let hg = host.graph();
    let mut edge_map = vec![None; pg.edge_count()];
    let mut used = vec![false; hg.edge_count()];
    for (&p, &h) in fixed_edges {
        if used[h.0] {
            return;
        }
        edge_map[p.0] = Some(h);
        used[h.0] = true;
    }
    fn rec(
        pattern: &TypedGraph,
        host: &TypedGraph,
        node_map: &[Option<NodeId>],
        i: usize,
        edge_map: &mut Vec<Option<EdgeId>>,
        used: &mut Vec<bool>,
        out: &mut Vec<GraphMorphism>,
    ) {
        if i == edge_map.len() {
            let nodes: Vec<NodeId> = node_map.iter().map(|n| n.unwrap()).collect();
            let edges: Vec<EdgeId> = edge_map.iter().map(|e| e.unwrap()).collect();
            if let Ok(m) = GraphMorphism::new(
                Arc::clone(pattern.graph()),
                Arc::clone(host.graph()),
                nodes,
                edges,
            ) {
                out.push(m);
            }
            return;
        }
        let e = EdgeId(i);
        if let Some(h) = edge_map[i] {
            // Pre-assigned: validate incidence and typing.
            let pg = pattern.graph();
            let hg = host.graph();
            if host.edge_type(h) == pattern.edge_type(e)
                && hg.src(h) == node_map[pg.src(e).0].unwrap()
                && hg.tgt(h) == node_map[pg.tgt(e).0].unwrap()
            {
                rec(pattern, host, node_map, i + 1, edge_map, used, out);
            }
            return;
        }
        let pg = pattern.graph();
        let hg = host.graph();
        let s = node_map[pg.src(e).0].unwrap();
        let t = node_map[pg.tgt(e).0].unwrap();
        let want = pattern.edge_type(e);
        for cand in hg.edge_ids() {
            if used[cand.0]
                || host.edge_type(cand) != want
                || hg.src(cand) != s
                || hg.tgt(cand) != t
            {
                continue;
            }
            edge_map[i] = Some(cand);
            used[cand.0] = true;
            rec(pattern, host, node_map, i + 1, edge_map, used, out);
            edge_map[i] = None;
            used[cand.0] = false;
        }
    }
    rec(pattern, host, node_map, 0, &mut edge_map, &mut used, out);
}

/// First mono `q: N -> G` with `q ∘ n = m`, if any.
///
/// `n: L -> N` and `m: L -> G` must be typed morphisms over the same type
/// graph (with `N` and `G` given as typed graphs).
pub fn extend_mono(
    n: &GraphMorphism,
    m: &GraphMorphism,
    n_typed: &TypedGraph,
    g_typed: &TypedGraph,
) -> Option<GraphMorphism> {
    let mut fixed_nodes = BTreeMap::new();
    for v in n.source().node_ids() {
        fixed_nodes.insert(n.node(v), m.node(v));
    }
    let mut fixed_edges = BTreeMap::new();
    for e in n.source().edge_ids() {
        fixed_edges.insert(n.edge(e), m.edge(e));
    }
    enumerate_typed_monos_extending(n_typed, g_typed, &fixed_nodes, &fixed_edges)
        .into_iter()
        .next()
}

/// An (untyped) isomorphism `a -> b`, if one exists.
pub fn find_iso(a: &Arc<Graph>, b: &Arc<Graph>) -> Option<GraphMorphism> {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return None;
    }
    // Reuse the typed matcher with a trivial common type graph.
    let point = Graph::from_parts(&["*"], &[("*", "*", "*")]);
    let ta = trivially_typed(a, &point);
    let tb = trivially_typed(b, &point);
    enumerate_typed_monos(&ta, &tb).into_iter().next()
}

fn trivially_typed(g: &Arc<Graph>, point: &Arc<Graph>) -> TypedGraph {
    let typing = GraphMorphism::new(
        Arc::clone(g),
        Arc::clone(point),
        vec![NodeId(0); g.node_count()],
        vec![EdgeId(0); g.edge_count()],
    )
    .expect("anything maps to the point graph");
    TypedGraph::new(typing)
}

/// A typing-compatible isomorphism between instances of one type graph.
pub fn find_typed_iso(a: &TypedGraph, b: &TypedGraph) -> Option<GraphMorphism> {
    if a.graph().node_count() != b.graph().node_count()
        || a.graph().edge_count() != b.graph().edge_count()
    {
        return None;
    }
    enumerate_typed_monos(a, b).into_iter().next()
}

/// Canonical key of a labelled graph, equal for two graphs iff they are
/// isomorphic respecting the labels.
///
/// Iterative colour refinement on `(label, in/out neighbourhood colours)`
/// with individualisation backtracking when the partition stays coarse.
/// Colours are interned integers; the string key is rendered once per
/// discrete partition. Adequate at desk scale.
pub fn canonical_key(
    g: &Arc<Graph>,
    node_label: &dyn Fn(NodeId) -> String,
    edge_label: &dyn Fn(EdgeId) -> String,
) -> String {
    let node_labels: Vec<String> = g.node_ids().map(|v| node_label(v)).collect();
    let edge_labels: Vec<String> = g.edge_ids().map(|e| edge_label(e)).collect();
    if g.node_count() == 0 {
        let mut es = edge_labels;
        es.sort();
        return format!("|{}", es.join(","));
    }
    // Intern labels.
    let mut node_lookup = node_labels.clone();
    node_lookup.sort();
    node_lookup.dedup();
    let node_colors: Vec<usize> = node_labels
        .iter()
        .map(|l| node_lookup.binary_search(l).unwrap())
        .collect();
    let mut edge_lookup = edge_labels.clone();
    edge_lookup.sort();
    edge_lookup.dedup();
    let edge_ids: Vec<usize> = edge_labels
        .iter()
        .map(|l| edge_lookup.binary_search(l).unwrap())
        .collect();
    // Adjacency with interned edge labels: (edge label, neighbour, is_out).
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); g.node_count()];
    for e in g.edge_ids() {
        adj[g.src(e).0].push((edge_ids[e.0], g.tgt(e).0, true));
        adj[g.tgt(e).0].push((edge_ids[e.0], g.src(e).0, false));
    }

    let ctx = CanonCtx {
        adj,
        edge_ids,
        node_init: node_colors.clone(),
        node_lookup,
        edge_lookup,
    };
    let mut best: Option<(String, Vec<usize>)> = None;
    let mut visited = 0usize;
    search_orders(g, &ctx, node_colors, &mut best, &mut visited);
    best.expect("at least one order explored").0
}

struct CanonCtx {
    adj: Vec<Vec<(usize, usize, bool)>>,
    edge_ids: Vec<usize>,
    /// Initial (label-derived) colour of each node.
    node_init: Vec<usize>,
    node_lookup: Vec<String>,
    edge_lookup: Vec<String>,
}

fn refine(ctx: &CanonCtx, colors: &mut Vec<usize>) {
    loop {
        let mut sig: Vec<(usize, Vec<(usize, usize, bool)>)> = Vec::with_capacity(colors.len());
        for (v, nb) in ctx.adj.iter().enumerate() {
            let mut around: Vec<(usize, usize, bool)> = nb
                .iter()
                .map(|&(el, u, out)| (el, colors[u], out))
                .collect();
            around.sort_unstable();
            sig.push((colors[v], around));
        }
        let mut sorted = sig.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let mut next = Vec::with_capacity(colors.len());
        for s in &sig {
            next.push(sorted.binary_search(s).unwrap());
        }
        if next == *colors {
            return;
        }
        *colors = next;
    }
}

fn search_orders(
    g: &Arc<Graph>,
    ctx: &CanonCtx,
    mut colors: Vec<usize>,
    best: &mut Option<(String, Vec<usize>)>,
    visited: &mut usize,
) {
    // Individualisation bound; plenty for desk-scale graphs.
    if *visited > 50_000 {
        return;
    }
    *visited += 1;
    refine(ctx, &mut colors);
    // First colour class with more than one member.
    let mut by_color: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &c) in colors.iter().enumerate() {
        by_color.entry(c).or_default().push(v);
    }
    if let Some((_, class)) = by_color.iter().find(|(_, vs)| vs.len() > 1) {
        let class = class.clone();
        let fresh = colors.iter().max().unwrap() + 1;
        for v in class {
            let mut c = colors.clone();
            c[v] = fresh;
            search_orders(g, ctx, c, best, visited);
        }
        return;
    }
    // Discrete partition: order nodes by colour and render.
    let mut order: Vec<usize> = (0..colors.len()).collect();
    order.sort_unstable_by_key(|&v| colors[v]);
    let key = render(g, ctx, &order);
    if best.as_ref().map_or(true, |(b, _)| key < *b) {
        *best = Some((key, order));
    }
}

fn render(g: &Arc<Graph>, ctx: &CanonCtx, order: &[usize]) -> String {
    let mut pos = vec![0usize; g.node_count()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut edges: Vec<(usize, usize, usize)> = g
        .edge_ids()
        .map(|e| (ctx.edge_ids[e.0], pos[g.src(e).0], pos[g.tgt(e).0]))
        .collect();
    edges.sort_unstable();
    // Render label text (not interned indices) so keys stay comparable
    // across graphs.
    let mut out = String::new();
    for &v in order {
        out.push_str(&ctx.node_lookup[ctx.node_init[v]]);
        out.push(',');
    }
    out.push('|');
    for (el, s, t) in edges {
        out.push_str(&ctx.edge_lookup[el]);
        out.push(':');
        out.push_str(&s.to_string());
        out.push('>');
        out.push_str(&t.to_string());
        out.push(',');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn typed_pair() -> (Arc<Graph>, TypedGraph, TypedGraph) {
        let tg = Graph::from_parts(&["A", "B"], &[("e", "A", "B")]);
        let pat = TypedGraph::from_names(&tg, &[("x", "A")], &[]);
        let host = TypedGraph::from_names(
            &tg,
            &[("a1", "A"), ("a2", "A"), ("b", "B")],
            &[("f", "e", "a1", "b")],
        );
        (tg, pat, host)
    }

    #[test]
    fn typed_monos_respect_types_and_are_ordered() {
        let (_, pat, host) = typed_pair();
        let ms = enumerate_typed_monos(&pat, &host);
        assert_eq!(ms.len(), 2);
        assert_eq!(host.graph().node_name(ms[0].node(NodeId(0))), "a1");
        assert_eq!(host.graph().node_name(ms[1].node(NodeId(0))), "a2");
    }

    #[test]
    fn empty_pattern_has_exactly_one_match() {
        let tg = Graph::from_parts::<&str>(&["A"], &[]);
        let pat = TypedGraph::empty_over(Arc::clone(&tg));
        let host = TypedGraph::from_names(&tg, &[("a", "A")], &[]);
        assert_eq!(enumerate_typed_monos(&pat, &host).len(), 1);
    }

    #[test]
    fn parallel_edges_of_same_type_yield_distinct_matches() {
        let tg = Graph::from_parts(&["A"], &[("e", "A", "A")]);
        let pat = TypedGraph::from_names(&tg, &[("x", "A")], &[("p", "e", "x", "x")]);
        let host = TypedGraph::from_names(
            &tg,
            &[("a", "A")],
            &[("f1", "e", "a", "a"), ("f2", "e", "a", "a")],
        );
        assert_eq!(enumerate_typed_monos(&pat, &host).len(), 2);
    }

    #[test]
    fn canonical_key_separates_non_isomorphic_and_merges_isomorphic() {
        let g1 = Graph::from_parts(&["a", "b"], &[("e", "a", "b")]);
        let g2 = Graph::from_parts(&["u", "v"], &[("f", "v", "u")]);
        let g3 = Graph::from_parts(&["u", "v"], &[("f", "u", "u")]);
        let lbl = |_: NodeId| "n".to_string();
        let elb = |_: EdgeId| "e".to_string();
        let k1 = canonical_key(&g1, &lbl, &elb);
        let k2 = canonical_key(&g2, &lbl, &elb);
        let k3 = canonical_key(&g3, &lbl, &elb);
        assert_eq!(k1, k2);
        assert_ne!(k1, k3);
    }

    #[test]
    fn canonical_key_handles_symmetric_graphs() {
        // Two disjoint same-labelled triangles vs a six-cycle.
        let mk_cycle = |names: &[&str]| {
            let mut g = Graph::new();
            let ids: Vec<NodeId> = names.iter().map(|n| g.add_node(n)).collect();
            for i in 0..ids.len() {
                g.add_edge(&format!("e{i}"), ids[i], ids[(i + 1) % ids.len()]);
            }
            Arc::new(g)
        };
        let hexagon = mk_cycle(&["a", "b", "c", "d", "e", "f"]);
        let mut two_triangles = Graph::new();
        for part in [["a", "b", "c"], ["d", "e", "f"]] {
            let ids: Vec<NodeId> = part.iter().map(|n| two_triangles.add_node(n)).collect();
            for i in 0..3 {
                two_triangles.add_edge(&format!("{}x{}", part[0], i), ids[i], ids[(i + 1) % 3]);
            }
        }
        let two_triangles = Arc::new(two_triangles);
        let lbl = |_: NodeId| "n".to_string();
        let elb = |_: EdgeId| "e".to_string();
        assert_ne!(
            canonical_key(&hexagon, &lbl, &elb),
            canonical_key(&two_triangles, &lbl, &elb)
        );
    }
}
