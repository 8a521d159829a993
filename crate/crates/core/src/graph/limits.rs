//! Finite (co)limit constructions: pushout, pullback, pushout complement,
//! initial pushout and general finite colimits.
//!
//! Quotients always mint fresh canonical identities. The identity of a
//! colimit item is the name of the least `(object, item)` pair in its
//! equivalence class (disambiguated with a `#k` suffix on collision), so the
//! provenance of every glued item stays readable.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{EdgeId, Error, Graph, GraphMorphism, NodeId};

/// Result of [`pushout`]: the apex and its two injections.
#[derive(Debug, Clone)]
pub struct Pushout {
    pub object: Arc<Graph>,
    /// Injection of the left leg's target (`B -> D`).
    pub left: GraphMorphism,
    /// Injection of the right leg's target (`C -> D`).
    pub right: GraphMorphism,
}

/// Result of [`colimit`]: the apex and one injection per diagram object.
#[derive(Debug, Clone)]
pub struct Colimit {
    pub object: Arc<Graph>,
    pub injections: Vec<GraphMorphism>,
}

/// Result of [`pullback`]: the limit object and its two projections.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub object: Arc<Graph>,
    pub to_left: GraphMorphism,
    pub to_right: GraphMorphism,
}

/// Result of [`pushout_complement`] for the DPO deletion square.
#[derive(Debug, Clone)]
pub struct PushoutComplement {
    /// The context graph `D` (the host minus the deleted items).
    pub object: Arc<Graph>,
    /// `K -> D`.
    pub interface: GraphMorphism,
    /// `D -> G`, an inclusion.
    pub embedding: GraphMorphism,
}

/// Result of [`initial_pushout`] over a mono `n: L -> N`.
#[derive(Debug, Clone)]
pub struct InitialPushout {
    /// The border `L⁻`, a discrete subgraph of `L`.
    pub border: Arc<Graph>,
    /// The body `N⁻`: the negative items plus their attachment nodes.
    pub body: Arc<Graph>,
    /// The shape `n⁻: L⁻ -> N⁻`.
    pub shape: GraphMorphism,
    /// Embedding `L⁻ -> L`.
    pub border_in_context: GraphMorphism,
    /// Embedding `N⁻ -> N`.
    pub body_in_target: GraphMorphism,
}

/// Pushout of a span `B <-f- A -g-> C`.
pub fn pushout(f: &GraphMorphism, g: &GraphMorphism) -> Result<Pushout, Error> {
    if f.source() != g.source() {
        return Err(Error::EndpointMismatch);
    }
    let objects = vec![
        Arc::clone(f.source()),
        Arc::clone(f.target()),
        Arc::clone(g.target()),
    ];
    let arrows = vec![(0, 1, f.clone()), (0, 2, g.clone())];
    let col = colimit(&objects, &arrows)?;
    Ok(Pushout {
        object: col.object,
        left: col.injections[1].clone(),
        right: col.injections[2].clone(),
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    // The smaller index wins, keeping representatives deterministic.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Colimit of a finite diagram.
///
/// `arrows` are `(source object index, target object index, morphism)`
/// triples; the morphism endpoints must be the named objects. The result is
/// the disjoint union of all objects quotiented by the least equivalence
/// generated by `x ~ m(x)` for every arrow `m`.
pub fn colimit(
    objects: &[Arc<Graph>],
    arrows: &[(usize, usize, GraphMorphism)],
) -> Result<Colimit, Error> {
    for (s, t, m) in arrows {
        if *s >= objects.len() || *t >= objects.len() {
            return Err(Error::MalformedDiagram("arrow endpoint out of range".into()));
        }
        if m.source() != &objects[*s] || m.target() != &objects[*t] {
            return Err(Error::MalformedDiagram(
                "arrow endpoints do not match the diagram objects".into(),
            ));
        }
    }

    // Global offsets into the disjoint union.
    let mut node_off = vec![0usize; objects.len()];
    let mut edge_off = vec![0usize; objects.len()];
    let (mut nn, mut ne) = (0usize, 0usize);
    for (i, g) in objects.iter().enumerate() {
        node_off[i] = nn;
        edge_off[i] = ne;
        nn += g.node_count();
        ne += g.edge_count();
    }

    let mut uf_n = UnionFind::new(nn);
    let mut uf_e = UnionFind::new(ne);
    for (s, t, m) in arrows {
        for n in objects[*s].node_ids() {
            uf_n.union(node_off[*s] + n.0, node_off[*t] + m.node(n).0);
        }
        for e in objects[*s].edge_ids() {
            uf_e.union(edge_off[*s] + e.0, edge_off[*t] + m.edge(e).0);
        }
    }

    // Classes in order of their (least) representative.
    let mut node_class: BTreeMap<usize, usize> = BTreeMap::new();
    for x in 0..nn {
        let r = uf_n.find(x);
        let next = node_class.len();
        node_class.entry(r).or_insert(next);
    }
    let mut edge_class: BTreeMap<usize, usize> = BTreeMap::new();
    for x in 0..ne {
        let r = uf_e.find(x);
        let next = edge_class.len();
        edge_class.entry(r).or_insert(next);
    }

    let mut out = Graph::new();
    let mut used = std::collections::BTreeSet::new();
    let fresh = |base: &str, used: &mut std::collections::BTreeSet<String>| {
        let mut name = base.to_string();
        let mut k = 2;
        while used.contains(&name) {
            name = format!("{base}#{k}");
            k += 1;
        }
        used.insert(name.clone());
        name
    };

    let mut class_node_ids = vec![NodeId(0); node_class.len()];
    for (&rep, &cls) in &node_class {
        let (i, local) = split(&node_off, rep);
        let name = fresh(objects[i].node_name(NodeId(local)), &mut used);
        class_node_ids[cls] = out.add_node(&name);
    }
    let mut used_e = std::collections::BTreeSet::new();
    let mut class_edge_ids = vec![EdgeId(0); edge_class.len()];
    for (&rep, &cls) in &edge_class {
        let (i, local) = split(&edge_off, rep);
        let e = EdgeId(local);
        let s_cls = node_class[&uf_n.find(node_off[i] + objects[i].src(e).0)];
        let t_cls = node_class[&uf_n.find(node_off[i] + objects[i].tgt(e).0)];
        let name = fresh(objects[i].edge_name(e), &mut used_e);
        class_edge_ids[cls] = out.add_edge(&name, class_node_ids[s_cls], class_node_ids[t_cls]);
    }

    let object = Arc::new(out);
    let mut injections = Vec::with_capacity(objects.len());
    for (i, g) in objects.iter().enumerate() {
        let node_map = g
            .node_ids()
            .map(|n| class_node_ids[node_class[&uf_n.find(node_off[i] + n.0)]])
            .collect();
        let edge_map = g
            .edge_ids()
            .map(|e| class_edge_ids[edge_class[&uf_e.find(edge_off[i] + e.0)]])
            .collect();
        injections.push(GraphMorphism::new(
            Arc::clone(g),
            Arc::clone(&object),
            node_map,
            edge_map,
        )?);
    }
    Ok(Colimit { object, injections })
}

// Object index and local item index of a disjoint-union position.
fn split(offsets: &[usize], global: usize) -> (usize, usize) {
    let i = match offsets.binary_search(&global) {
        Ok(mut i) => {
            // Skip empty objects sharing the same offset.
            while i + 1 < offsets.len() && offsets[i + 1] == global {
                i += 1;
            }
            i
        }
        Err(i) => i - 1,
    };
    (i, global - offsets[i])
}

/// Pullback of a cospan `B -f-> D <-g- C`.
///
/// The object's items are the pairs agreeing in `D`. An item keeps the name
/// of its `B` component when that component appears in a single pair,
/// otherwise the pair `b&c` is used.
pub fn pullback(f: &GraphMorphism, g: &GraphMorphism) -> Result<Pullback, Error> {
    if f.target() != g.target() {
        return Err(Error::EndpointMismatch);
    }
    let b = f.source();
    let c = g.source();

    let node_pairs: Vec<(NodeId, NodeId)> = b
        .node_ids()
        .flat_map(|nb| {
            c.node_ids()
                .filter(move |&nc| f.node(nb) == g.node(nc))
                .map(move |nc| (nb, nc))
        })
        .collect();
    let edge_pairs: Vec<(EdgeId, EdgeId)> = b
        .edge_ids()
        .flat_map(|eb| {
            c.edge_ids()
                .filter(move |&ec| f.edge(eb) == g.edge(ec))
                .map(move |ec| (eb, ec))
        })
        .collect();

    let mut out = Graph::new();
    let mut used = std::collections::BTreeSet::new();
    let node_pos: BTreeMap<(NodeId, NodeId), NodeId> = {
        let mut m = BTreeMap::new();
        for &(nb, nc) in &node_pairs {
            let unique = node_pairs.iter().filter(|(x, _)| *x == nb).count() == 1;
            let base = if unique {
                b.node_name(nb).to_string()
            } else {
                format!("{}&{}", b.node_name(nb), c.node_name(nc))
            };
            let mut name = base.clone();
            let mut k = 2;
            while used.contains(&name) {
                name = format!("{base}#{k}");
                k += 1;
            }
            used.insert(name.clone());
            m.insert((nb, nc), out.add_node(&name));
        }
        m
    };
    let mut used_e = std::collections::BTreeSet::new();
    let mut to_left_e = Vec::new();
    let mut to_right_e = Vec::new();
    for &(eb, ec) in &edge_pairs {
        // Endpoint pairs agree in D by commutation, so they are pullback nodes.
        let s = node_pos[&(b.src(eb), c.src(ec))];
        let t = node_pos[&(b.tgt(eb), c.tgt(ec))];
        let unique = edge_pairs.iter().filter(|(x, _)| *x == eb).count() == 1;
        let base = if unique {
            b.edge_name(eb).to_string()
        } else {
            format!("{}&{}", b.edge_name(eb), c.edge_name(ec))
        };
        let mut name = base.clone();
        let mut k = 2;
        while used_e.contains(&name) {
            name = format!("{base}#{k}");
            k += 1;
        }
        used_e.insert(name.clone());
        out.add_edge(&name, s, t);
        to_left_e.push(eb);
        to_right_e.push(ec);
    }

    let object = Arc::new(out);
    let to_left = GraphMorphism::new(
        Arc::clone(&object),
        Arc::clone(b),
        node_pairs.iter().map(|&(nb, _)| nb).collect(),
        to_left_e,
    )?;
    let to_right = GraphMorphism::new(
        Arc::clone(&object),
        Arc::clone(c),
        node_pairs.iter().map(|&(_, nc)| nc).collect(),
        to_right_e,
    )?;
    Ok(Pullback { object, to_left, to_right })
}

/// Pushout complement of monos `K -l-> L -m-> G`.
///
/// Deletes `m(L) \ m(l(K))` from `G`; fails with the dangling condition when
/// an edge outside the match is incident to a deleted node.
pub fn pushout_complement(
    l: &GraphMorphism,
    m: &GraphMorphism,
) -> Result<PushoutComplement, Error> {
    if l.target() != m.source() {
        return Err(Error::NotComposable);
    }
    if !l.is_mono() || !m.is_mono() {
        return Err(Error::NotMono);
    }
    let host = m.target();
    let lhs = m.source();

    let mut kept_node = vec![true; host.node_count()];
    for n in lhs.node_ids() {
        if l.node_preimage(n).is_none() {
            kept_node[m.node(n).0] = false;
        }
    }
    let mut kept_edge = vec![true; host.edge_count()];
    let mut matched_edge = vec![false; host.edge_count()];
    for e in lhs.edge_ids() {
        matched_edge[m.edge(e).0] = true;
        if l.edge_preimage(e).is_none() {
            kept_edge[m.edge(e).0] = false;
        }
    }
    for e in host.edge_ids() {
        if matched_edge[e.0] {
            continue;
        }
        for endpoint in [host.src(e), host.tgt(e)] {
            if !kept_node[endpoint.0] {
                return Err(Error::DanglingCondition {
                    edge: host.edge_name(e).to_string(),
                    node: host.node_name(endpoint).to_string(),
                });
            }
        }
    }

    let nodes: Vec<NodeId> = host.node_ids().filter(|n| kept_node[n.0]).collect();
    let edges: Vec<EdgeId> = host.edge_ids().filter(|e| kept_edge[e.0]).collect();
    let (object, embedding) = host.subgraph(&nodes, &edges);

    // K -> D is m∘l corestricted to D.
    let k = l.source();
    let node_map = k
        .node_ids()
        .map(|n| embedding.node_preimage(m.node(l.node(n))).expect("interface is preserved"))
        .collect();
    let edge_map = k
        .edge_ids()
        .map(|e| embedding.edge_preimage(m.edge(l.edge(e))).expect("interface is preserved"))
        .collect();
    let interface = GraphMorphism::new(Arc::clone(k), Arc::clone(&object), node_map, edge_map)?;
    Ok(PushoutComplement { object, interface, embedding })
}

/// Initial pushout over a mono `n: L -> N`.
///
/// The body is the smallest subgraph of `N` containing every item outside
/// `n(L)`; the border is the preimage in `L` of the body's attachment nodes.
pub fn initial_pushout(n: &GraphMorphism) -> Result<InitialPushout, Error> {
    if !n.is_mono() {
        return Err(Error::NotMono);
    }
    let l = n.source();
    let target = n.target();

    let neg_edges: Vec<EdgeId> = target
        .edge_ids()
        .filter(|&e| n.edge_preimage(e).is_none())
        .collect();
    let mut body_nodes: Vec<NodeId> = target
        .node_ids()
        .filter(|&v| n.node_preimage(v).is_none())
        .collect();
    for &e in &neg_edges {
        for v in [target.src(e), target.tgt(e)] {
            if !body_nodes.contains(&v) {
                body_nodes.push(v);
            }
        }
    }
    if neg_edges.is_empty() && body_nodes.is_empty() {
        return Err(Error::IsoConstraint);
    }
    body_nodes.sort();

    let (body, body_in_target) = target.subgraph(&body_nodes, &neg_edges);

    // Border: nodes of L landing inside the body.
    let border_nodes: Vec<NodeId> = l
        .node_ids()
        .filter(|&v| body_nodes.contains(&n.node(v)))
        .collect();
    let (border, border_in_context) = l.subgraph(&border_nodes, &[]);

    let shape_nodes = border
        .node_ids()
        .map(|v| {
            let in_l = border_in_context.node(v);
            body_in_target
                .node_preimage(n.node(in_l))
                .expect("border nodes are attachment nodes of the body")
        })
        .collect();
    let shape = GraphMorphism::new(Arc::clone(&border), Arc::clone(&body), shape_nodes, vec![])?;
    Ok(InitialPushout { border, body, shape, border_in_context, body_in_target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::find_iso;

    #[test]
    fn pushout_of_empty_span_is_coproduct() {
        let a = Arc::new(Graph::new());
        let b = Graph::from_parts::<&str>(&["x"], &[]);
        let c = Graph::from_parts::<&str>(&["y"], &[]);
        let f = GraphMorphism::new(Arc::clone(&a), b, vec![], vec![]).unwrap();
        let g = GraphMorphism::new(a, c, vec![], vec![]).unwrap();
        let po = pushout(&f, &g).unwrap();
        assert_eq!(po.object.node_count(), 2);
        assert!(po.left.is_mono() && po.right.is_mono());
    }

    #[test]
    fn pushout_of_identities_is_iso() {
        let a = Graph::from_parts(&["v", "w"], &[("e", "v", "w")]);
        let id = GraphMorphism::identity(Arc::clone(&a));
        let po = pushout(&id, &id).unwrap();
        assert!(po.left.is_iso());
        assert!(find_iso(&a, &po.object).is_some());
    }

    #[test]
    fn pushout_glues_along_shared_node() {
        // A = v; B = v with loop; C = v plus w. D = 2 nodes + loop.
        let a = Graph::from_parts::<&str>(&["v"], &[]);
        let b = Graph::from_parts(&["v"], &[("l", "v", "v")]);
        let c = Graph::from_parts::<&str>(&["v", "w"], &[]);
        let f = GraphMorphism::from_names(Arc::clone(&a), b, &[("v", "v")], &[]).unwrap();
        let g = GraphMorphism::from_names(a, c, &[("v", "v")], &[]).unwrap();
        let po = pushout(&f, &g).unwrap();
        assert_eq!((po.object.node_count(), po.object.edge_count()), (2, 1));
        let lp = po.object.edge(po.object.edge_name(EdgeId(0))).unwrap();
        assert_eq!(po.object.src(lp), po.object.tgt(lp));
    }

    #[test]
    fn pushout_complement_removes_deleted_items() {
        // L = {v}, K = {}, G = {v}. D should be empty.
        let l_graph = Graph::from_parts::<&str>(&["v"], &[]);
        let k = Arc::new(Graph::new());
        let l = GraphMorphism::new(k, Arc::clone(&l_graph), vec![], vec![]).unwrap();
        let m = GraphMorphism::identity(l_graph);
        let pc = pushout_complement(&l, &m).unwrap();
        assert!(pc.object.is_empty());
    }

    #[test]
    fn pushout_complement_detects_dangling_edge() {
        let l_graph = Graph::from_parts::<&str>(&["v"], &[]);
        let k = Arc::new(Graph::new());
        let host = Graph::from_parts(&["v", "w"], &[("e", "v", "w")]);
        let l = GraphMorphism::new(k, Arc::clone(&l_graph), vec![], vec![]).unwrap();
        let m = GraphMorphism::from_names(l_graph, host, &[("v", "v")], &[]).unwrap();
        assert!(matches!(
            pushout_complement(&l, &m),
            Err(Error::DanglingCondition { .. })
        ));
    }

    #[test]
    fn pushout_complement_then_pushout_restores_host() {
        let l_graph = Graph::from_parts(&["v", "w"], &[("e", "v", "w")]);
        let k_graph = Graph::from_parts::<&str>(&["v"], &[]);
        let host = Graph::from_parts(&["v", "w", "u"], &[("e", "v", "w"), ("f", "u", "v")]);
        let l = GraphMorphism::from_names(k_graph, Arc::clone(&l_graph), &[("v", "v")], &[]).unwrap();
        let m = GraphMorphism::by_common_names(l_graph, host.clone()).unwrap();
        let pc = pushout_complement(&l, &m).unwrap();
        let po = pushout(&l, &pc.interface).unwrap();
        assert!(find_iso(&host, &po.object).is_some());
    }

    #[test]
    fn pullback_of_identities_is_identity() {
        let d = Graph::from_parts(&["v", "w"], &[("e", "v", "w")]);
        let id = GraphMorphism::identity(Arc::clone(&d));
        let pb = pullback(&id, &id).unwrap();
        assert!(pb.to_left.is_iso());
        assert!(find_iso(&d, &pb.object).is_some());
    }

    #[test]
    fn pullback_of_disjoint_images_is_empty() {
        let d = Graph::from_parts::<&str>(&["v", "w"], &[]);
        let b = Graph::from_parts::<&str>(&["v"], &[]);
        let c = Graph::from_parts::<&str>(&["w"], &[]);
        let f = GraphMorphism::from_names(b, Arc::clone(&d), &[("v", "v")], &[]).unwrap();
        let g = GraphMorphism::from_names(c, d, &[("w", "w")], &[]).unwrap();
        let pb = pullback(&f, &g).unwrap();
        assert!(pb.object.is_empty());
    }

    #[test]
    fn initial_pushout_of_added_edge_and_node() {
        // L = {v}, N = v --e--> u: border {v}, body {v, u, e} (shape OUT).
        let l = Graph::from_parts::<&str>(&["v"], &[]);
        let n_graph = Graph::from_parts(&["v", "u"], &[("e", "v", "u")]);
        let n = GraphMorphism::from_names(l, n_graph, &[("v", "v")], &[]).unwrap();
        let ip = initial_pushout(&n).unwrap();
        assert_eq!(ip.border.node_count(), 1);
        assert_eq!((ip.body.node_count(), ip.body.edge_count()), (2, 1));
    }

    #[test]
    fn initial_pushout_of_isolated_node_has_empty_border() {
        let l = Arc::new(Graph::new());
        let n_graph = Graph::from_parts::<&str>(&["u"], &[]);
        let n = GraphMorphism::new(l, n_graph, vec![], vec![]).unwrap();
        let ip = initial_pushout(&n).unwrap();
        assert!(ip.border.is_empty());
        assert_eq!(ip.body.node_count(), 1);
    }

    #[test]
    fn initial_pushout_rejects_iso() {
        let g = Graph::from_parts::<&str>(&["v"], &[]);
        let id = GraphMorphism::identity(g);
        assert_eq!(initial_pushout(&id).err(), Some(Error::IsoConstraint));
    }

    #[test]
    fn colimit_of_single_graph_is_that_graph() {
        let g = Graph::from_parts(&["v"], &[("l", "v", "v")]);
        let col = colimit(&[Arc::clone(&g)], &[]).unwrap();
        assert!(find_iso(&g, &col.object).is_some());
    }

    #[test]
    fn colimit_of_span_agrees_with_pushout() {
        let a = Graph::from_parts::<&str>(&["v"], &[]);
        let b = Graph::from_parts(&["v", "w"], &[("e", "v", "w")]);
        let c = Graph::from_parts(&["v"], &[("l", "v", "v")]);
        let f = GraphMorphism::from_names(Arc::clone(&a), b, &[("v", "v")], &[]).unwrap();
        let g = GraphMorphism::from_names(a, c, &[("v", "v")], &[]).unwrap();
        let po = pushout(&f, &g).unwrap();
        let col = colimit(
            &[
                Arc::clone(f.source()),
                Arc::clone(f.target()),
                Arc::clone(g.target()),
            ],
            &[(0, 1, f.clone()), (0, 2, g.clone())],
        )
        .unwrap();
        assert!(find_iso(&po.object, &col.object).is_some());
    }
}
