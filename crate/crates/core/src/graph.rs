//! Directed concept graphs and the structural algorithms the rest of the
//! crate is built on.
//!
//! Every traversal that has a choice to make resolves it by ascending
//! [`ConceptId`], so results are reproducible across runs and platforms.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Weight given to edges that were inserted without an explicit weight.
pub const DEFAULT_WEIGHT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(ConceptId),
    #[error("self-loop on `{0}`")]
    SelfLoop(ConceptId),
    #[error("graph contains a directed cycle through `{0}`")]
    CyclicGraph(ConceptId),
    #[error("edge weight {weight} on {parent} -> {child} is outside (0, 1]")]
    InvalidWeight {
        parent: ConceptId,
        child: ConceptId,
        weight: f64,
    },
    #[error("parent `{0}` is not in the taxonomy")]
    UnknownParent(ConceptId),
    #[error("concept `{0}` is already in the taxonomy")]
    DuplicateConcept(ConceptId),
}

/// Stable, opaque concept identifier. Ordering is byte-wise on the token.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(Arc<str>);

impl ConceptId {
    pub fn new(id: impl AsRef<str>) -> Self {
        ConceptId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConceptId {
    fn from(s: &str) -> Self {
        ConceptId::new(s)
    }
}

impl From<String> for ConceptId {
    fn from(s: String) -> Self {
        ConceptId(Arc::from(s))
    }
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_surface(name: &str) -> String {
    name.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A concept with its normalized surface name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub id: ConceptId,
    surface_name: String,
}

impl Concept {
    /// Returns `None` when the name is empty after normalization.
    pub fn new(id: impl Into<ConceptId>, surface_name: &str) -> Option<Self> {
        let surface_name = normalize_surface(surface_name);
        if surface_name.is_empty() {
            return None;
        }
        Some(Concept {
            id: id.into(),
            surface_name,
        })
    }

    pub fn surface_name(&self) -> &str {
        &self.surface_name
    }
}

/// Simple directed graph over concept ids with optionally weighted edges.
///
/// No self-loops, no duplicate edges, and every edge endpoint is a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectedGraph {
    nodes: BTreeSet<ConceptId>,
    children: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    parents: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    weights: BTreeMap<(ConceptId, ConceptId), f64>,
}

impl DirectedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from a node list and an edge list; duplicate edges are
    /// merged.
    pub fn build<I, E>(nodes: I, edges: E) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = ConceptId>,
        E: IntoIterator<Item = (ConceptId, ConceptId)>,
    {
        let mut g = DirectedGraph::new();
        for n in nodes {
            g.add_node(n);
        }
        for (p, c) in edges {
            g.add_edge(p, c)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, id: ConceptId) -> bool {
        self.nodes.insert(id)
    }

    /// Adds an unweighted edge. Returns `Ok(false)` if it already existed.
    pub fn add_edge(&mut self, parent: ConceptId, child: ConceptId) -> Result<bool, GraphError> {
        self.add_weighted_edge(parent, child, DEFAULT_WEIGHT)
    }

    /// Adds an edge with a weight in (0, 1]. An existing edge keeps its
    /// original weight.
    pub fn add_weighted_edge(
        &mut self,
        parent: ConceptId,
        child: ConceptId,
        weight: f64,
    ) -> Result<bool, GraphError> {
        if !self.nodes.contains(&parent) {
            return Err(GraphError::UnknownConcept(parent));
        }
        if !self.nodes.contains(&child) {
            return Err(GraphError::UnknownConcept(child));
        }
        if parent == child {
            return Err(GraphError::SelfLoop(parent));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(GraphError::InvalidWeight {
                parent,
                child,
                weight,
            });
        }
        let key = (parent.clone(), child.clone());
        if self.weights.contains_key(&key) {
            return Ok(false);
        }
        self.weights.insert(key, weight);
        self.children
            .entry(parent.clone())
            .or_default()
            .insert(child.clone());
        self.parents.entry(child).or_default().insert(parent);
        Ok(true)
    }

    pub fn remove_edge(&mut self, parent: &ConceptId, child: &ConceptId) -> bool {
        if self
            .weights
            .remove(&(parent.clone(), child.clone()))
            .is_none()
        {
            return false;
        }
        if let Some(cs) = self.children.get_mut(parent) {
            cs.remove(child);
            if cs.is_empty() {
                self.children.remove(parent);
            }
        }
        if let Some(ps) = self.parents.get_mut(child) {
            ps.remove(parent);
            if ps.is_empty() {
                self.parents.remove(child);
            }
        }
        true
    }

    /// Removes a node together with all incident edges.
    pub fn remove_node(&mut self, id: &ConceptId) -> bool {
        if !self.nodes.remove(id) {
            return false;
        }
        let kids: Vec<_> = self.children(id).cloned().collect();
        for c in kids {
            self.remove_edge(id, &c);
        }
        let ps: Vec<_> = self.parents(id).cloned().collect();
        for p in ps {
            self.remove_edge(&p, id);
        }
        true
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.nodes.contains(id)
    }

    pub fn has_edge(&self, parent: &ConceptId, child: &ConceptId) -> bool {
        self.weights
            .contains_key(&(parent.clone(), child.clone()))
    }

    pub fn weight(&self, parent: &ConceptId, child: &ConceptId) -> Option<f64> {
        self.weights.get(&(parent.clone(), child.clone())).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &ConceptId> + '_ {
        self.nodes.iter()
    }

    /// Edges in lexicographic `(parent, child)` order.
    pub fn edges(&self) -> impl Iterator<Item = (&ConceptId, &ConceptId)> + '_ {
        self.weights.keys().map(|(p, c)| (p, c))
    }

    pub fn weighted_edges(&self) -> impl Iterator<Item = (&ConceptId, &ConceptId, f64)> + '_ {
        self.weights.iter().map(|((p, c), w)| (p, c, *w))
    }

    pub fn edge_set(&self) -> BTreeSet<(ConceptId, ConceptId)> {
        self.weights.keys().cloned().collect()
    }

    pub fn children<'a>(&'a self, id: &ConceptId) -> impl Iterator<Item = &'a ConceptId> + 'a {
        self.children.get(id).into_iter().flatten()
    }

    pub fn parents<'a>(&'a self, id: &ConceptId) -> impl Iterator<Item = &'a ConceptId> + 'a {
        self.parents.get(id).into_iter().flatten()
    }

    pub fn out_degree(&self, id: &ConceptId) -> usize {
        self.children.get(id).map_or(0, BTreeSet::len)
    }

    pub fn in_degree(&self, id: &ConceptId) -> usize {
        self.parents.get(id).map_or(0, BTreeSet::len)
    }

    /// Nodes without parents.
    pub fn roots(&self) -> BTreeSet<ConceptId> {
        self.nodes
            .iter()
            .filter(|n| self.in_degree(n) == 0)
            .cloned()
            .collect()
    }

    /// Nodes with out-degree zero.
    pub fn leaves(&self) -> BTreeSet<ConceptId> {
        self.nodes
            .iter()
            .filter(|n| self.out_degree(n) == 0)
            .cloned()
            .collect()
    }

    /// The subgraph induced by `keep`; ids absent from the graph are ignored.
    pub fn induced_subgraph(&self, keep: &BTreeSet<ConceptId>) -> DirectedGraph {
        let mut g = DirectedGraph::new();
        for n in self.nodes.iter().filter(|n| keep.contains(*n)) {
            g.add_node(n.clone());
        }
        for ((p, c), w) in &self.weights {
            if keep.contains(p) && keep.contains(c) {
                g.add_weighted_edge(p.clone(), c.clone(), *w)
                    .expect("edge of a valid graph");
            }
        }
        g
    }

    /// True if `to` is reachable from `from` by a directed path of length ≥ 0.
    pub fn reaches(&self, from: &ConceptId, to: &ConceptId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for c in self.children(n) {
                if c == to {
                    return true;
                }
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_sort().is_ok()
    }

    /// Kahn's algorithm; among ready nodes the smallest id goes first.
    pub fn topological_sort(&self) -> Result<Vec<ConceptId>, GraphError> {
        let mut indeg: BTreeMap<&ConceptId, usize> =
            self.nodes.iter().map(|n| (n, self.in_degree(n))).collect();
        let mut ready: BTreeSet<&ConceptId> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.clone());
            for c in self.children(n) {
                let d = indeg.get_mut(c).expect("child is a node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < self.nodes.len() {
            let stuck = indeg
                .into_iter()
                .find(|(_, d)| *d > 0)
                .map(|(n, _)| n.clone())
                .expect("some node is left with positive in-degree");
            return Err(GraphError::CyclicGraph(stuck));
        }
        Ok(order)
    }

    /// All nodes with a directed path to `n`, excluding `n`.
    pub fn ancestors(&self, n: &ConceptId) -> Result<BTreeSet<ConceptId>, GraphError> {
        self.walk(n, |g, x| g.parents.get(x))
    }

    /// All nodes reachable from `n`, excluding `n`.
    pub fn descendants(&self, n: &ConceptId) -> Result<BTreeSet<ConceptId>, GraphError> {
        self.walk(n, |g, x| g.children.get(x))
    }

    fn walk<'a, F>(&'a self, n: &ConceptId, next: F) -> Result<BTreeSet<ConceptId>, GraphError>
    where
        F: Fn(&'a Self, &ConceptId) -> Option<&'a BTreeSet<ConceptId>>,
    {
        if !self.nodes.contains(n) {
            return Err(GraphError::UnknownConcept(n.clone()));
        }
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([n]);
        while let Some(x) = queue.pop_front() {
            for y in next(self, x).into_iter().flatten() {
                if y != n && out.insert(y.clone()) {
                    queue.push_back(y);
                }
            }
        }
        Ok(out)
    }

    /// Strongly connected components with at least two members, largest
    /// first; equal sizes are ordered by their smallest member.
    pub fn find_cycles(&self) -> Vec<BTreeSet<ConceptId>> {
        let mut comps: Vec<_> = tarjan_scc(self)
            .into_iter()
            .filter(|c| c.len() >= 2)
            .collect();
        comps.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then_with(|| a.first().cmp(&b.first()))
        });
        comps
    }

    /// Breaks every cycle by repeatedly removing, from the current largest
    /// SCC, its lowest-weight edge (ties: smallest `(parent, child)`).
    pub fn cut_cycles(&self) -> DirectedGraph {
        let mut g = self.clone();
        loop {
            let comps = g.find_cycles();
            let Some(scc) = comps.first() else {
                return g;
            };
            let victim = g
                .weights
                .iter()
                .filter(|((p, c), _)| scc.contains(p) && scc.contains(c))
                .min_by(|(ka, wa), (kb, wb)| wa.total_cmp(wb).then_with(|| ka.cmp(kb)))
                .map(|(k, _)| k.clone())
                .expect("an SCC of size >= 2 has internal edges");
            g.remove_edge(&victim.0, &victim.1);
        }
    }

    /// Adds an edge from every ancestor to every descendant.
    pub fn ancestor_closure(&self) -> Result<DirectedGraph, GraphError> {
        let order = self.topological_sort()?;
        let mut anc: BTreeMap<&ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();
        for n in &order {
            let mut set = BTreeSet::new();
            for p in self.parents(n) {
                set.insert(p.clone());
                set.extend(anc[p].iter().cloned());
            }
            anc.insert(n, set);
        }
        let mut out = DirectedGraph::new();
        for n in &self.nodes {
            out.add_node(n.clone());
        }
        for (n, set) in anc {
            for a in set {
                let w = self.weight(&a, n).unwrap_or(DEFAULT_WEIGHT);
                out.add_weighted_edge(a, n.clone(), w)?;
            }
        }
        Ok(out)
    }
}

/// Iterative Tarjan; every node ends up in exactly one component.
fn tarjan_scc(g: &DirectedGraph) -> Vec<BTreeSet<ConceptId>> {
    let ids: Vec<&ConceptId> = g.nodes.iter().collect();
    let index_of: BTreeMap<&ConceptId, usize> =
        ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let adj: Vec<Vec<usize>> = ids
        .iter()
        .map(|n| g.children(n).map(|c| index_of[c]).collect())
        .collect();

    const UNSEEN: usize = usize::MAX;
    let n = ids.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next edge position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = BTreeSet::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.insert(ids[w].clone());
                    if w == v {
                        break;
                    }
                }
                out.push(comp);
            }
        }
    }
    out
}

/// A directed acyclic graph of concepts. Forests and multi-parent nodes are
/// allowed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Taxonomy {
    graph: DirectedGraph,
}

impl Taxonomy {
    pub fn new(graph: DirectedGraph) -> Result<Self, GraphError> {
        graph.topological_sort()?;
        Ok(Taxonomy { graph })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> DirectedGraph {
        self.graph
    }

    /// Attaches a fresh concept below an existing node.
    pub fn insert(&self, parent: &ConceptId, query: &ConceptId) -> Result<Taxonomy, GraphError> {
        let mut next = self.clone();
        next.insert_in_place(parent, query)?;
        Ok(next)
    }

    pub fn insert_in_place(
        &mut self,
        parent: &ConceptId,
        query: &ConceptId,
    ) -> Result<(), GraphError> {
        if !self.graph.contains(parent) {
            return Err(GraphError::UnknownParent(parent.clone()));
        }
        if self.graph.contains(query) {
            return Err(GraphError::DuplicateConcept(query.clone()));
        }
        self.graph.add_node(query.clone());
        self.graph.add_edge(parent.clone(), query.clone())?;
        Ok(())
    }

    /// Removes the given nodes and their incident edges.
    pub fn without(&self, removed: &BTreeSet<ConceptId>) -> Taxonomy {
        let keep = self
            .graph
            .nodes()
            .filter(|n| !removed.contains(*n))
            .cloned()
            .collect();
        Taxonomy {
            graph: self.graph.induced_subgraph(&keep),
        }
    }
}

impl std::ops::Deref for Taxonomy {
    type Target = DirectedGraph;

    fn deref(&self) -> &DirectedGraph {
        &self.graph
    }
}
