//! Marked graphs, edge paths, and label immersions (G-graphs).
//!
//! A [`MarkedGraph`] is a finite graph together with a marking: a word label
//! on each edge identifying circuits with conjugacy classes of the ambient
//! free group, and a system of base loops realizing each basis element. All
//! homotopy moves elsewhere in the crate (subdivision, folds, collapses) keep
//! both halves of the marking synchronized by gauge transformations at
//! vertices.
//!
//! A [`GGraph`] is a graph whose edges carry oriented-edge labels of a base
//! graph, i.e. a combinatorial map to the base that is an immersion after
//! [`GGraph::fold`]. Stallings subgroup graphs, fiber products and the
//! fixed-point graphs are all G-graphs.

use crate::words::{Letter, Word};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}
impl fmt::Debug for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// An oriented edge: an edge pair id plus a direction. The positive
/// orientation runs `from → to`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OEdge {
    pub id: EdgeId,
    pub rev: bool,
}

impl OEdge {
    pub fn fwd(id: EdgeId) -> OEdge {
        OEdge { id, rev: false }
    }
    pub fn back(id: EdgeId) -> OEdge {
        OEdge { id, rev: true }
    }
    pub fn reversed(self) -> OEdge {
        OEdge {
            id: self.id,
            rev: !self.rev,
        }
    }
}

impl fmt::Debug for OEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", if self.rev { "~" } else { "" }, self.id.0)
    }
}

/// A tightened edge path. `circuit` marks closed paths considered up to
/// rotation (cyclic words); tightening then also reduces across the seam.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Path {
    pub edges: Vec<OEdge>,
    pub circuit: bool,
}

impl Path {
    pub fn empty() -> Path {
        Path {
            edges: Vec::new(),
            circuit: false,
        }
    }

    pub fn one(e: OEdge) -> Path {
        Path {
            edges: vec![e],
            circuit: false,
        }
    }

    pub fn from_edges(edges: Vec<OEdge>, circuit: bool) -> Path {
        Path { edges, circuit }.tightened()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn reversed(&self) -> Path {
        Path {
            edges: self.edges.iter().rev().map(|e| e.reversed()).collect(),
            circuit: self.circuit,
        }
    }

    /// Free reduction; cyclic reduction too for circuits.
    pub fn tightened(&self) -> Path {
        let mut out: Vec<OEdge> = Vec::with_capacity(self.edges.len());
        for &e in &self.edges {
            if out.last() == Some(&e.reversed()) {
                out.pop();
            } else {
                out.push(e);
            }
        }
        if self.circuit {
            while out.len() >= 2 && out.first().copied() == out.last().map(|e| e.reversed()) {
                out.remove(0);
                out.pop();
            }
        }
        Path {
            edges: out,
            circuit: self.circuit,
        }
    }

    /// Reduced concatenation (non-circuit).
    pub fn concat(&self, other: &Path) -> Path {
        let mut edges = self.edges.clone();
        for &e in &other.edges {
            if edges.last() == Some(&e.reversed()) {
                edges.pop();
            } else {
                edges.push(e);
            }
        }
        Path {
            edges,
            circuit: false,
        }
    }

    pub fn subpath(&self, a: usize, b: usize) -> Path {
        Path {
            edges: self.edges[a..b].to_vec(),
            circuit: false,
        }
    }

    /// Does `self` begin with `prefix`?
    pub fn starts_with(&self, prefix: &Path) -> bool {
        self.edges.len() >= prefix.edges.len() && self.edges[..prefix.edges.len()] == prefix.edges
    }

    /// Longest common prefix length with `other`.
    pub fn common_prefix_len(&self, other: &Path) -> usize {
        self.edges
            .iter()
            .zip(other.edges.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.edges.is_empty() {
            return write!(f, "ε");
        }
        for e in &self.edges {
            write!(f, "{:?} ", e)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeData {
    pub from: VertexId,
    pub to: VertexId,
    /// Marking word μ(e): the label of the positive orientation in the
    /// ambient free group. Circuit labels are well defined up to conjugacy.
    pub label: Word,
    pub name: String,
}

/// A finite connected graph with a marking to the rank-`rank` free group.
///
/// The marking has two synchronized halves: per-edge labels `μ` (reading a
/// circuit's edges gives its conjugacy class) and base loops `ν` (one loop at
/// `base` per basis element, with `μ(ν(x)) = x` exactly).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkedGraph {
    pub rank: usize,
    pub n_verts: usize,
    pub edges: Vec<EdgeData>,
    pub base: VertexId,
    /// ν: for each basis element, a loop at `base` whose μ-label is that
    /// basis element.
    pub base_loops: Vec<Path>,
}

impl MarkedGraph {
    /// The rose: one vertex, `rank` loops named `a, b, …`, identity marking.
    pub fn rose(rank: usize) -> MarkedGraph {
        assert!(rank >= 1 && rank <= 26);
        let edges = (0..rank)
            .map(|i| EdgeData {
                from: VertexId(0),
                to: VertexId(0),
                label: Word::letter(Letter::gen_pos(i)),
                name: ((b'a' + i as u8) as char).to_string(),
            })
            .collect();
        MarkedGraph {
            rank,
            n_verts: 1,
            edges,
            base: VertexId(0),
            base_loops: (0..rank)
                .map(|i| Path::one(OEdge::fwd(EdgeId(i as u32))))
                .collect(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn from(&self, e: OEdge) -> VertexId {
        let d = &self.edges[e.id.0 as usize];
        if e.rev {
            d.to
        } else {
            d.from
        }
    }

    pub fn to(&self, e: OEdge) -> VertexId {
        self.from(e.reversed())
    }

    pub fn edge_name(&self, e: OEdge) -> String {
        let n = &self.edges[e.id.0 as usize].name;
        if n.len() == 1 && n.chars().next().unwrap().is_ascii_lowercase() {
            if e.rev {
                n.to_uppercase()
            } else {
                n.clone()
            }
        } else if e.rev {
            format!("~{}", n)
        } else {
            n.clone()
        }
    }

    /// Graph rank (first Betti number), assuming connected.
    pub fn graph_rank(&self) -> usize {
        self.edges.len() + 1 - self.n_verts
    }

    /// Oriented edges leaving `v`.
    pub fn out_edges(&self, v: VertexId) -> Vec<OEdge> {
        let mut out = Vec::new();
        for (i, d) in self.edges.iter().enumerate() {
            if d.from == v {
                out.push(OEdge::fwd(EdgeId(i as u32)));
            }
            if d.to == v {
                out.push(OEdge::back(EdgeId(i as u32)));
            }
        }
        out
    }

    pub fn valence(&self, v: VertexId) -> usize {
        self.out_edges(v).len()
    }

    /// μ applied to a path: the marking word.
    pub fn path_label(&self, p: &Path) -> Word {
        let mut w = Word::identity();
        for &e in &p.edges {
            let l = &self.edges[e.id.0 as usize].label;
            w = w.concat(&if e.rev { l.inverse() } else { l.clone() });
        }
        w
    }

    /// Is `p` a composable edge path (and closed if a circuit)?
    pub fn path_valid(&self, p: &Path) -> bool {
        for pair in p.edges.windows(2) {
            if self.to(pair[0]) != self.from(pair[1]) {
                return false;
            }
        }
        if p.circuit && !p.edges.is_empty() {
            self.to(*p.edges.last().unwrap()) == self.from(p.edges[0])
        } else {
            true
        }
    }

    /// Parse a path in the single-letter-name convention (`abAB`). Fails if
    /// an edge name is absent or the path is not composable.
    pub fn parse_path(&self, s: &str, circuit: bool) -> Result<Path> {
        let mut edges = Vec::new();
        for c in s.chars() {
            if c.is_whitespace() {
                continue;
            }
            let lower = c.to_ascii_lowercase().to_string();
            let id = self
                .edges
                .iter()
                .position(|d| d.name == lower)
                .ok_or_else(|| Error::Input(format!("no edge named {lower}")))?;
            edges.push(OEdge {
                id: EdgeId(id as u32),
                rev: c.is_ascii_uppercase(),
            });
        }
        let p = Path { edges, circuit };
        if !self.path_valid(&p) {
            return Err(Error::Input(format!("path {s} is not composable")));
        }
        Ok(p)
    }

    pub fn show_path(&self, p: &Path) -> String {
        if p.edges.is_empty() {
            return "1".into();
        }
        let compact = self
            .edges
            .iter()
            .all(|d| d.name.len() == 1 && d.name.chars().next().unwrap().is_ascii_lowercase());
        let parts: Vec<String> = p.edges.iter().map(|&e| self.edge_name(e)).collect();
        if compact {
            parts.concat()
        } else {
            parts.join(".")
        }
    }

    /// Connected components as vertex sets.
    pub fn vertex_components(&self) -> Vec<Vec<VertexId>> {
        let mut seen = vec![false; self.n_verts];
        let mut comps = Vec::new();
        for s in 0..self.n_verts {
            if seen[s] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![VertexId(s as u32)];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for e in self.out_edges(v) {
                    let w = self.to(e);
                    if !seen[w.0 as usize] {
                        seen[w.0 as usize] = true;
                        stack.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// A spanning tree of the component of `root`: for each reachable vertex
    /// the tightened tree path from `root`.
    pub fn tree_paths(&self, root: VertexId) -> HashMap<VertexId, Path> {
        let mut paths: HashMap<VertexId, Path> = HashMap::new();
        paths.insert(root, Path::empty());
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let base = paths[&v].clone();
            let mut outs = self.out_edges(v);
            outs.sort_by_key(|e| (e.id, e.rev));
            for e in outs {
                let w = self.to(e);
                if !paths.contains_key(&w) {
                    let mut p = base.clone();
                    p.edges.push(e);
                    paths.insert(w, p);
                    queue.push_back(w);
                }
            }
        }
        paths
    }

    /// A free basis of π₁ at `root` as loops (tree path + back edge + tree
    /// path back), in deterministic order.
    pub fn pi1_basis(&self, root: VertexId) -> Vec<Path> {
        let tree = self.tree_paths(root);
        let tree_edges: HashSet<EdgeId> = {
            let mut s = HashSet::new();
            for p in tree.values() {
                for e in &p.edges {
                    s.insert(e.id);
                }
            }
            s
        };
        let mut basis = Vec::new();
        for (i, _) in self.edges.iter().enumerate() {
            let id = EdgeId(i as u32);
            let e = OEdge::fwd(id);
            if tree_edges.contains(&id) {
                continue;
            }
            let (Some(pu), Some(pv)) = (tree.get(&self.from(e)), tree.get(&self.to(e))) else {
                continue; // other component
            };
            basis.push(pu.concat(&Path::one(e)).concat(&pv.reversed()));
        }
        basis
    }

    /// Subdivide edge `e` into two new edges `e₁ e₂` meeting at a fresh
    /// vertex. Returns `(e1, e2, mid)`; `e` keeps its id as `e₁` and a new
    /// edge is appended as `e₂`. The marking word stays on `e₁`. Any stored
    /// paths must be rewritten with [`MarkedGraph::rewrite_after_subdivide`].
    pub fn subdivide(&mut self, e: EdgeId, name1: String, name2: String) -> (EdgeId, EdgeId, VertexId) {
        let mid = VertexId(self.n_verts as u32);
        self.n_verts += 1;
        let old_to = self.edges[e.0 as usize].to;
        let e2 = EdgeId(self.edges.len() as u32);
        self.edges.push(EdgeData {
            from: mid,
            to: old_to,
            label: Word::identity(),
            name: name2,
        });
        let d = &mut self.edges[e.0 as usize];
        d.to = mid;
        d.name = name1;
        for p in self.base_loops.iter_mut() {
            *p = rewrite_subdivide(p, e, e2);
        }
        (e, e2, mid)
    }

    /// Rewrite a path after `subdivide(e) = (e, e2, _)`.
    pub fn rewrite_after_subdivide(p: &Path, e: EdgeId, e2: EdgeId) -> Path {
        rewrite_subdivide(p, e, e2)
    }

    /// Fresh edge name based on `stem`, avoiding collisions.
    pub fn fresh_name(&self, stem: &str) -> String {
        if !self.edges.iter().any(|d| d.name == stem) {
            return stem.to_string();
        }
        for i in 1.. {
            let cand = format!("{stem}{i}");
            if !self.edges.iter().any(|d| d.name == cand) {
                return cand;
            }
        }
        unreachable!()
    }

    /// Export in DOT format; marking labels shown on edges.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph G {\n");
        for v in 0..self.n_verts {
            let mark = if VertexId(v as u32) == self.base { " [shape=doublecircle]" } else { "" };
            s.push_str(&format!("  v{v}{mark};\n"));
        }
        for d in &self.edges {
            s.push_str(&format!(
                "  v{} -> v{} [label=\"{} ({})\"];\n",
                d.from.0, d.to.0, d.name, d.label
            ));
        }
        s.push_str("}\n");
        s
    }
}

fn rewrite_subdivide(p: &Path, e: EdgeId, e2: EdgeId) -> Path {
    let mut edges = Vec::with_capacity(p.edges.len() + 4);
    for &o in &p.edges {
        if o.id == e {
            if o.rev {
                edges.push(OEdge::back(e2));
                edges.push(OEdge::back(e));
            } else {
                edges.push(OEdge::fwd(e));
                edges.push(OEdge::fwd(e2));
            }
        } else {
            edges.push(o);
        }
    }
    Path {
        edges,
        circuit: p.circuit,
    }
    .tightened()
}

// ---------------------------------------------------------------------------
// G-graphs: label immersions over a base graph.
// ---------------------------------------------------------------------------

/// An edge of a [`GGraph`]: its endpoints and the positive base edge it maps
/// to (traversing `from → to` reads the base edge forward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GEdgelet {
    pub from: u32,
    pub to: u32,
    pub label: EdgeId,
}

/// A graph mapping to a base graph, edges labeled by base edges and vertices
/// lying over base vertices. After [`GGraph::fold`] the map is an immersion;
/// the core of a folded G-graph over the rose is a Stallings subgroup graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GGraph {
    /// Base vertex under each vertex.
    pub vert_over: Vec<VertexId>,
    pub edges: Vec<GEdgelet>,
    /// Optional distinguished vertex (subgroup basepoint).
    pub basepoint: Option<u32>,
}

impl GGraph {
    pub fn n_verts(&self) -> usize {
        self.vert_over.len()
    }

    /// Number of edgelets — the complexity measure used throughout.
    pub fn complexity(&self) -> usize {
        self.edges.len()
    }

    /// The wedge of loops reading `words` at a single vertex over the rose
    /// base vertex. Not yet folded.
    pub fn wedge(words: &[Word]) -> GGraph {
        let mut g = GGraph {
            vert_over: vec![VertexId(0)],
            edges: Vec::new(),
            basepoint: Some(0),
        };
        for w in words {
            if w.is_empty() {
                continue;
            }
            let mut prev = 0u32;
            for (i, &l) in w.0.iter().enumerate() {
                let next = if i + 1 == w.len() {
                    0
                } else {
                    g.vert_over.push(VertexId(0));
                    (g.vert_over.len() - 1) as u32
                };
                let label = EdgeId(l.gen() as u32);
                if l.is_positive() {
                    g.edges.push(GEdgelet {
                        from: prev,
                        to: next,
                        label,
                    });
                } else {
                    g.edges.push(GEdgelet {
                        from: next,
                        to: prev,
                        label,
                    });
                }
                prev = next;
            }
        }
        g
    }

    /// A loop subdivided along a base-graph path (for conjugacy classes over
    /// an arbitrary base). Empty/trivial paths give a single vertex over
    /// `over`.
    pub fn circuit_over(base: &MarkedGraph, p: &Path, over: VertexId) -> GGraph {
        let p = Path {
            edges: p.edges.clone(),
            circuit: true,
        }
        .tightened();
        if p.is_empty() {
            return GGraph {
                vert_over: vec![over],
                edges: Vec::new(),
                basepoint: None,
            };
        }
        let n = p.len();
        let mut g = GGraph {
            vert_over: (0..n).map(|i| base.from(p.edges[i])).collect(),
            edges: Vec::new(),
            basepoint: None,
        };
        for (i, &o) in p.edges.iter().enumerate() {
            let a = i as u32;
            let b = ((i + 1) % n) as u32;
            if o.rev {
                g.edges.push(GEdgelet {
                    from: b,
                    to: a,
                    label: o.id,
                });
            } else {
                g.edges.push(GEdgelet {
                    from: a,
                    to: b,
                    label: o.id,
                });
            }
        }
        g
    }

    /// Stallings fold to an immersion: while two distinct edgelets leave one
    /// vertex with the same oriented label, identify their far ends.
    pub fn fold(&mut self) {
        self.fold_marked(&mut []);
    }

    /// Fold while tracking a set of marked vertices through every vertex
    /// identification (each mark is replaced by its new id).
    pub fn fold_marked(&mut self, marks: &mut [u32]) {
        loop {
            // Union-find over vertices.
            let mut parent: Vec<u32> = (0..self.n_verts() as u32).collect();
            fn find(parent: &mut Vec<u32>, x: u32) -> u32 {
                if parent[x as usize] != x {
                    let r = find(parent, parent[x as usize]);
                    parent[x as usize] = r;
                    r
                } else {
                    x
                }
            }
            let mut merged = false;
            let mut seen: HashMap<(u32, EdgeId, bool), (u32, usize)> = HashMap::new();
            for (i, e) in self.edges.iter().enumerate() {
                for (v, far, fwd) in [(e.from, e.to, true), (e.to, e.from, false)] {
                    let key = (find(&mut parent, v), e.label, fwd);
                    let farr = find(&mut parent, far);
                    if let Some(&(other_far, j)) = seen.get(&key) {
                        if j != i && other_far != farr {
                            let (a, b) = (find(&mut parent, other_far), farr);
                            if a != b {
                                parent[a as usize] = b;
                                merged = true;
                            }
                        }
                    } else {
                        seen.insert(key, (farr, i));
                    }
                }
            }
            if !merged {
                // Also deduplicate exactly parallel edgelets.
                let before = self.edges.len();
                self.dedup_edges();
                if self.edges.len() == before {
                    break;
                }
                continue;
            }
            // Apply vertex identification and compact.
            let map: Vec<u32> = (0..self.n_verts() as u32)
                .map(|v| find(&mut parent, v))
                .collect();
            let composed = self.quotient_vertices(&map);
            for m in marks.iter_mut() {
                *m = composed[*m as usize];
            }
            self.dedup_edges();
        }
    }

    /// Returns the old-vertex → new-vertex map.
    fn quotient_vertices(&mut self, map: &[u32]) -> Vec<u32> {
        let mut newid: BTreeMap<u32, u32> = BTreeMap::new();
        let mut vert_over = Vec::new();
        for v in 0..self.n_verts() as u32 {
            let r = map[v as usize];
            newid.entry(r).or_insert_with(|| {
                vert_over.push(self.vert_over[r as usize]);
                (vert_over.len() - 1) as u32
            });
        }
        let composed: Vec<u32> = (0..self.n_verts() as u32)
            .map(|v| newid[&map[v as usize]])
            .collect();
        for e in self.edges.iter_mut() {
            e.from = composed[e.from as usize];
            e.to = composed[e.to as usize];
        }
        self.basepoint = self.basepoint.map(|b| composed[b as usize]);
        self.vert_over = vert_over;
        composed
    }

    fn dedup_edges(&mut self) {
        let mut seen = HashSet::new();
        self.edges.retain(|e| {
            let k = if e.from <= e.to {
                (e.from, e.to, e.label, false)
            } else {
                (e.to, e.from, e.label, true)
            };
            seen.insert(k)
        });
    }

    /// Oriented edgelets leaving vertex `v` as `(edgelet index, forward?)`.
    pub fn out_halves(&self, v: u32) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.from == v {
                out.push((i, true));
            }
            if e.to == v {
                out.push((i, false));
            }
        }
        out
    }

    /// Remove valence-0/1 vertices (except `keep`) repeatedly. The result is
    /// the core provided the graph was connected with positive rank.
    pub fn core(&mut self, keep: Option<u32>) {
        loop {
            let mut val = vec![0usize; self.n_verts()];
            for e in &self.edges {
                val[e.from as usize] += 1;
                val[e.to as usize] += 1;
            }
            let doomed: Vec<u32> = (0..self.n_verts() as u32)
                .filter(|&v| Some(v) != keep && val[v as usize] <= 1)
                .collect();
            if doomed.is_empty() {
                break;
            }
            let dead: HashSet<u32> = doomed.into_iter().collect();
            self.edges
                .retain(|e| !dead.contains(&e.from) && !dead.contains(&e.to));
            // compact vertices
            let mut newid = vec![u32::MAX; self.n_verts()];
            let mut vert_over = Vec::new();
            for v in 0..self.n_verts() as u32 {
                if !dead.contains(&v) {
                    newid[v as usize] = vert_over.len() as u32;
                    vert_over.push(self.vert_over[v as usize]);
                }
            }
            for e in self.edges.iter_mut() {
                e.from = newid[e.from as usize];
                e.to = newid[e.to as usize];
            }
            self.basepoint = self.basepoint.and_then(|b| {
                let n = newid[b as usize];
                (n != u32::MAX).then_some(n)
            });
            self.vert_over = vert_over;
        }
        // Drop isolated vertices entirely (unless kept).
        let mut used = vec![false; self.n_verts()];
        for e in &self.edges {
            used[e.from as usize] = true;
            used[e.to as usize] = true;
        }
        if let Some(k) = self.basepoint {
            used[k as usize] = true;
            if Some(k) != keep && self.edges.is_empty() {
                // fully trivial subgroup graph: keep just the basepoint
            }
        }
        let mut newid = vec![u32::MAX; self.n_verts()];
        let mut vert_over = Vec::new();
        for v in 0..self.n_verts() {
            if used[v] || Some(v as u32) == keep {
                newid[v] = vert_over.len() as u32;
                vert_over.push(self.vert_over[v]);
            }
        }
        for e in self.edges.iter_mut() {
            e.from = newid[e.from as usize];
            e.to = newid[e.to as usize];
        }
        self.basepoint = self.basepoint.and_then(|b| {
            let n = newid[b as usize];
            (n != u32::MAX).then_some(n)
        });
        self.vert_over = vert_over;
    }

    /// Connected components (each with its own vertex numbering).
    pub fn components(&self) -> Vec<GGraph> {
        let n = self.n_verts();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = count;
            while let Some(v) = stack.pop() {
                for (i, _) in self.out_halves(v as u32) {
                    for w in [self.edges[i].from, self.edges[i].to] {
                        if comp[w as usize] == usize::MAX {
                            comp[w as usize] = count;
                            stack.push(w as usize);
                        }
                    }
                }
            }
            count += 1;
        }
        let mut out = Vec::new();
        for c in 0..count {
            let mut newid = vec![u32::MAX; n];
            let mut vert_over = Vec::new();
            for v in 0..n {
                if comp[v] == c {
                    newid[v] = vert_over.len() as u32;
                    vert_over.push(self.vert_over[v]);
                }
            }
            let edges: Vec<GEdgelet> = self
                .edges
                .iter()
                .filter(|e| comp[e.from as usize] == c)
                .map(|e| GEdgelet {
                    from: newid[e.from as usize],
                    to: newid[e.to as usize],
                    label: e.label,
                })
                .collect();
            let basepoint = self.basepoint.and_then(|b| {
                (comp[b as usize] == c).then(|| newid[b as usize])
            });
            out.push(GGraph {
                vert_over,
                edges,
                basepoint,
            });
        }
        out
    }

    /// First Betti number, assuming connected.
    pub fn rank(&self) -> usize {
        (self.edges.len() + 1).saturating_sub(self.n_verts())
    }

    /// Deterministic transition: the unique half-edge at `v` with oriented
    /// label `(label, fwd)`, if any. Only meaningful after folding.
    pub fn step(&self, v: u32, label: EdgeId, fwd: bool) -> Option<u32> {
        for (i, e) in self.edges.iter().enumerate() {
            let _ = i;
            if fwd && e.from == v && e.label == label {
                return Some(e.to);
            }
            if !fwd && e.to == v && e.label == label {
                return Some(e.from);
            }
        }
        None
    }

    /// Read a base path from `start`; `None` if the path leaves the graph.
    pub fn read_path(&self, start: u32, p: &Path) -> Option<u32> {
        let mut v = start;
        for &o in &p.edges {
            v = self.step(v, o.id, !o.rev)?;
        }
        Some(v)
    }

    /// Membership for based subgroup graphs over the rose: does `w` read a
    /// loop at the basepoint?
    pub fn reads_loop(&self, w: &Word) -> bool {
        let Some(b) = self.basepoint else {
            return false;
        };
        let p = Path {
            edges: w
                .0
                .iter()
                .map(|&l| OEdge {
                    id: EdgeId(l.gen() as u32),
                    rev: !l.is_positive(),
                })
                .collect(),
            circuit: false,
        };
        self.read_path(b, &p) == Some(b)
    }

    /// Canonical signature of a connected folded G-graph: the
    /// lexicographically least BFS labeling over all start vertices.
    /// Complete isomorphism invariant of (graph, labels, base fibers).
    pub fn canonical(&self) -> Vec<u64> {
        let n = self.n_verts();
        if n == 0 {
            return Vec::new();
        }
        let mut best: Option<Vec<u64>> = None;
        for start in 0..n as u32 {
            let sig = self.bfs_signature(start);
            if best.as_ref().map_or(true, |b| sig < *b) {
                best = Some(sig);
            }
        }
        best.unwrap()
    }

    fn bfs_signature(&self, start: u32) -> Vec<u64> {
        let n = self.n_verts();
        let mut order = vec![u32::MAX; n];
        order[start as usize] = 0;
        let mut next = 1u32;
        let mut queue = VecDeque::from([start]);
        let mut sig: Vec<u64> = vec![self.vert_over[start as usize].0 as u64];
        // labels sorted: (+e0, −e0, +e1, −e1, …)
        let mut labels: Vec<EdgeId> = self.edges.iter().map(|e| e.label).collect();
        labels.sort();
        labels.dedup();
        while let Some(v) = queue.pop_front() {
            for &l in &labels {
                for fwd in [true, false] {
                    match self.step(v, l, fwd) {
                        None => sig.push(u64::MAX),
                        Some(w) => {
                            if order[w as usize] == u32::MAX {
                                order[w as usize] = next;
                                next += 1;
                                queue.push_back(w);
                                sig.push(
                                    ((l.0 as u64) << 34)
                                        | ((fwd as u64) << 33)
                                        | (1 << 32)
                                        | order[w as usize] as u64,
                                );
                            } else {
                                sig.push(
                                    ((l.0 as u64) << 34)
                                        | ((fwd as u64) << 33)
                                        | order[w as usize] as u64,
                                );
                            }
                        }
                    }
                }
            }
        }
        sig.push(self.edges.len() as u64);
        sig.push(n as u64);
        sig
    }

    /// Fiber product with `other` over the common base, restricted to
    /// matching vertex fibers. Returns the full product; callers typically
    /// take components and cores.
    pub fn pullback(&self, other: &GGraph) -> GGraph {
        let mut vid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut vert_over = Vec::new();
        for (i, &bi) in self.vert_over.iter().enumerate() {
            for (j, &bj) in other.vert_over.iter().enumerate() {
                if bi == bj {
                    vid.insert((i as u32, j as u32), vert_over.len() as u32);
                    vert_over.push(bi);
                }
            }
        }
        let mut edges = Vec::new();
        for e in &self.edges {
            for f in &other.edges {
                if e.label == f.label {
                    if let (Some(&a), Some(&b)) =
                        (vid.get(&(e.from, f.from)), vid.get(&(e.to, f.to)))
                    {
                        edges.push(GEdgelet {
                            from: a,
                            to: b,
                            label: e.label,
                        });
                    }
                }
            }
        }
        let basepoint = match (self.basepoint, other.basepoint) {
            (Some(a), Some(b)) => vid.get(&(a, b)).copied(),
            _ => None,
        };
        GGraph {
            vert_over,
            edges,
            basepoint,
        }
    }

    /// Is there a label- and fiber-preserving graph morphism `self → into`?
    /// For core graphs over the rose this decides "π₁ conjugate into".
    pub fn morphism_exists(&self, into: &GGraph) -> bool {
        if self.edges.is_empty() {
            return true;
        }
        let start = self.edges[0].from;
        'cand: for t0 in 0..into.n_verts() as u32 {
            if into.vert_over[t0 as usize] != self.vert_over[start as usize] {
                continue;
            }
            // Propagate the partial map by BFS; both sides need not be
            // deterministic, but `into` is folded in all our uses, making
            // the extension forced.
            let mut img = vec![u32::MAX; self.n_verts()];
            img[start as usize] = t0;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for (i, fwd) in self.out_halves(v) {
                    let e = &self.edges[i];
                    let far = if fwd { e.to } else { e.from };
                    match into.step(img[v as usize], e.label, fwd) {
                        None => continue 'cand,
                        Some(w) => {
                            if img[far as usize] == u32::MAX {
                                img[far as usize] = w;
                                queue.push_back(far);
                            } else if img[far as usize] != w {
                                continue 'cand;
                            }
                        }
                    }
                }
            }
            return true;
        }
        false
    }

    /// Free basis of π₁ at the basepoint, as words over the rose base.
    /// Panics if there is no basepoint. Requires a folded graph.
    pub fn basis_at_basepoint(&self) -> Vec<Word> {
        let b = self.basepoint.expect("basis_at_basepoint needs a basepoint");
        // BFS tree from b.
        let mut tree_word: HashMap<u32, Word> = HashMap::new();
        tree_word.insert(b, Word::identity());
        let mut tree_edges: HashSet<usize> = HashSet::new();
        let mut queue = VecDeque::from([b]);
        while let Some(v) = queue.pop_front() {
            let mut halves = self.out_halves(v);
            halves.sort_by_key(|&(i, fwd)| (self.edges[i].label, !fwd, i));
            for (i, fwd) in halves {
                let e = &self.edges[i];
                let far = if fwd { e.to } else { e.from };
                if !tree_word.contains_key(&far) {
                    let l = Letter::gen_pos(e.label.0 as usize);
                    let step = if fwd { l } else { l.inverse() };
                    tree_word.insert(far, tree_word[&v].concat(&Word::letter(step)));
                    tree_edges.insert(i);
                    queue.push_back(far);
                }
            }
        }
        let mut basis = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if tree_edges.contains(&i) {
                continue;
            }
            let (Some(wu), Some(wv)) = (tree_word.get(&e.from), tree_word.get(&e.to)) else {
                continue;
            };
            let l = Word::letter(Letter::gen_pos(e.label.0 as usize));
            basis.push(wu.concat(&l).concat(&wv.inverse()));
        }
        basis
    }

    /// All immersed circuits of length ≤ `max_len` (up to rotation and
    /// basepoint, not up to inversion), as label paths in the base. Stops
    /// early at `max_count` circuits.
    pub fn circuits_up_to(&self, max_len: usize, max_count: usize) -> Vec<Path> {
        let mut seen: HashSet<Vec<OEdge>> = HashSet::new();
        let mut out = Vec::new();
        // DFS over non-backtracking closed walks from each vertex.
        for start in 0..self.n_verts() as u32 {
            let mut stack: Vec<(u32, Option<(usize, bool)>, Vec<OEdge>)> =
                vec![(start, None, Vec::new())];
            while let Some((v, last, path)) = stack.pop() {
                if out.len() >= max_count {
                    return out;
                }
                if !path.is_empty() && v == start {
                    // candidate circuit — also continue extending
                    let p = Path {
                        edges: path.clone(),
                        circuit: true,
                    };
                    let t = p.tightened();
                    if t.len() == path.len() {
                        // canonical rotation key
                        let key = canonical_rotation(&t.edges);
                        if seen.insert(key) {
                            out.push(t);
                        }
                    }
                }
                if path.len() >= max_len {
                    continue;
                }
                for (i, fwd) in self.out_halves(v) {
                    if let Some((j, jf)) = last {
                        if i == j && fwd != jf {
                            continue; // backtrack
                        }
                    }
                    let e = &self.edges[i];
                    let far = if fwd { e.to } else { e.from };
                    let mut p2 = path.clone();
                    p2.push(OEdge {
                        id: e.label,
                        rev: !fwd,
                    });
                    stack.push((far, Some((i, fwd)), p2));
                }
            }
        }
        out
    }
}

fn canonical_rotation(edges: &[OEdge]) -> Vec<OEdge> {
    if edges.is_empty() {
        return Vec::new();
    }
    let n = edges.len();
    let mut best: Option<Vec<OEdge>> = None;
    for s in 0..n {
        let rot: Vec<OEdge> = (0..n).map(|i| edges[(s + i) % n]).collect();
        if best.as_ref().map_or(true, |b| rot < *b) {
            best = Some(rot);
        }
    }
    best.unwrap()
}

/// Stallings graph of the subgroup generated by `words` (base = rose of the
/// ambient rank): wedge, fold, core keeping the basepoint.
pub fn stallings_graph(words: &[Word]) -> GGraph {
    let mut g = GGraph::wedge(words);
    g.fold();
    let b = g.basepoint;
    g.core(b);
    g
}

/// Stallings graph of the conjugacy class of a subgroup: full core, no
/// basepoint.
pub fn stallings_graph_class(words: &[Word]) -> GGraph {
    let mut g = stallings_graph(words);
    g.basepoint = None;
    g.core(None);
    g
}

/// Decide `t ∈ A·B` for finitely generated subgroups `A = ⟨a_words⟩` and
/// `B = ⟨b_words⟩` of the free group: double-coset membership. Uses the
/// equivalence `t ∈ A·B ⟺ (A·t) ∩ B ≠ ∅`, deciding the intersection by a
/// product reachability search between the folded automaton of the coset
/// `A·t` (base vertex to a marked tail vertex) and the folded subgroup
/// automaton of `B`.
pub fn double_coset_contains(a_words: &[Word], t: &Word, b_words: &[Word]) -> bool {
    // wedge of A at vertex 0, plus a tail spelling t from 0 to a mark
    let mut g = GGraph::wedge(a_words);
    let mut prev = 0u32;
    for &l in &t.0 {
        g.vert_over.push(VertexId(0));
        let next = (g.vert_over.len() - 1) as u32;
        let label = EdgeId(l.gen() as u32);
        if l.is_positive() {
            g.edges.push(GEdgelet {
                from: prev,
                to: next,
                label,
            });
        } else {
            g.edges.push(GEdgelet {
                from: next,
                to: prev,
                label,
            });
        }
        prev = next;
    }
    let mut marks = [0u32, prev];
    g.fold_marked(&mut marks);
    let (star, x) = (marks[0], marks[1]);
    let mut h = GGraph::wedge(b_words);
    h.fold();
    let hb = h.basepoint.unwrap_or(0);
    // transitions keyed by (vertex, letter-with-direction); folded graphs
    // are deterministic so each key has at most one target
    let steps = |gr: &GGraph| -> HashMap<(u32, u32, bool), u32> {
        let mut m = HashMap::new();
        for e in &gr.edges {
            m.insert((e.from, e.label.0, true), e.to);
            m.insert((e.to, e.label.0, false), e.from);
        }
        m
    };
    let sg = steps(&g);
    let sh = steps(&h);
    let letters: BTreeSet<u32> = g
        .edges
        .iter()
        .chain(h.edges.iter())
        .map(|e| e.label.0)
        .collect();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(star, hb)]);
    seen.insert((star, hb));
    while let Some((u, v)) = queue.pop_front() {
        if (u, v) == (x, hb) {
            return true;
        }
        for &l in &letters {
            for dir in [true, false] {
                if let (Some(&u2), Some(&v2)) = (sg.get(&(u, l, dir)), sh.get(&(v, l, dir))) {
                    if seen.insert((u2, v2)) {
                        queue.push_back((u2, v2));
                    }
                }
            }
        }
    }
    false
}

/// Core of the fiber product of two G-graphs: list of nontrivial component
/// cores (components of rank 0 are dropped).
pub fn pullback_core(a: &GGraph, b: &GGraph) -> Vec<GGraph> {
    let prod = a.pullback(b);
    let mut out = Vec::new();
    for mut c in prod.components() {
        c.basepoint = None;
        c.core(None);
        if !c.edges.is_empty() && c.rank() >= 1 {
            out.push(c);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Covering balls.
// ---------------------------------------------------------------------------

/// A lazily grown ball in the universal cover of a marked graph, centered at
/// a lift of `center`. Cover vertices are the tightened edge paths from the
/// center; operations beyond the current radius fail with a radius error and
/// the ball can be extended.
pub struct CoverBall<'g> {
    pub graph: &'g MarkedGraph,
    pub center: VertexId,
    pub radius: usize,
}

impl<'g> CoverBall<'g> {
    pub fn new(graph: &'g MarkedGraph, center: VertexId, radius: usize) -> CoverBall<'g> {
        CoverBall {
            graph,
            center,
            radius,
        }
    }

    /// The cover vertex reached from the center along `p` (a path from
    /// `center` in the base). Errors if it leaves the ball.
    pub fn vertex(&self, p: &Path) -> Result<Path> {
        let t = p.tightened();
        if t.len() > self.radius {
            return Err(Error::Budget(format!(
                "radius exceeded: path of length {} in ball of radius {}",
                t.len(),
                self.radius
            )));
        }
        if !self.graph.path_valid(&t) || (!t.is_empty() && self.graph.from(t.edges[0]) != self.center)
        {
            return Err(Error::Input("not a path from the ball center".into()));
        }
        Ok(t)
    }

    pub fn extend(&mut self, new_radius: usize) {
        if new_radius > self.radius {
            self.radius = new_radius;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn tighten_path_examples() {
        let g = MarkedGraph::rose(3);
        // aA → trivial
        let p = g.parse_path("aA", false).unwrap().tightened();
        assert!(p.is_empty());
        // abBc → ac
        let p = g.parse_path("abBc", false).unwrap().tightened();
        assert_eq!(g.show_path(&p), "ac");
        // circuit abaBAA → baBA (cyclic reduction)
        let p = g.parse_path("abaBAA", true).unwrap().tightened();
        assert_eq!(g.show_path(&p), "baBA");
    }

    #[test]
    fn rose_marking_consistency() {
        let g = MarkedGraph::rose(2);
        for (i, bl) in g.base_loops.iter().enumerate() {
            assert_eq!(g.path_label(bl), Word::letter(Letter::gen_pos(i)));
        }
    }

    #[test]
    fn fold_wedge_a_babinverse() {
        // ⟨a, baB⟩: folding the wedge gives loop a at the basepoint v, an
        // edge b from v to w, and loop a at w — 3 edgelets, 2 vertices.
        let g = stallings_graph(&[w("a"), w("baB")]);
        assert_eq!(g.complexity(), 3);
        assert_eq!(g.n_verts(), 2);
        assert!(g.reads_loop(&w("a")));
        assert!(g.reads_loop(&w("baB")));
        assert!(g.reads_loop(&w("abaBA")));
        assert!(!g.reads_loop(&w("b")));
        assert!(!g.reads_loop(&w("ab")));
    }

    #[test]
    fn pullback_examples() {
        // R⟨a⟩ × R⟨b⟩ = empty.
        let ra = stallings_graph_class(&[w("a")]);
        let rb = stallings_graph_class(&[w("b")]);
        assert!(pullback_core(&ra, &rb).is_empty());
        // R⟨a,b⟩ × R⟨a⟩ = the circle a.
        let rab = stallings_graph_class(&[w("a"), w("b")]);
        let cores = pullback_core(&rab, &ra);
        assert_eq!(cores.len(), 1);
        assert_eq!(cores[0].complexity(), 1);
        assert_eq!(cores[0].canonical(), ra.canonical());
    }

    #[test]
    fn canonical_form_iso_invariance() {
        let g1 = stallings_graph_class(&[w("a"), w("bab")]);
        let g2 = stallings_graph_class(&[w("bab"), w("a")]);
        assert_eq!(g1.canonical(), g2.canonical());
        let g3 = stallings_graph_class(&[w("a"), w("b")]);
        assert_ne!(g1.canonical(), g3.canonical());
    }

    #[test]
    fn morphism_carries() {
        // ⟨a⟩ is conjugate into ⟨a, b⟩.
        let ra = stallings_graph_class(&[w("a")]);
        let rab = stallings_graph_class(&[w("a"), w("b")]);
        assert!(ra.morphism_exists(&rab));
        assert!(!rab.morphism_exists(&ra));
        // ⟨bab⁻¹⟩ is conjugate into ⟨a⟩? bab⁻¹ is conjugate to a: yes as
        // conjugacy classes of subgroups.
        let rbab = stallings_graph_class(&[w("baB")]);
        assert!(rbab.morphism_exists(&ra));
    }

    #[test]
    fn basis_reading() {
        let g = stallings_graph(&[w("a"), w("baB")]);
        let basis = g.basis_at_basepoint();
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(g.reads_loop(b));
        }
    }

    #[test]
    fn circuit_enumeration_circle() {
        // Circle reading abAB (over rose 2): circuits up to length 8 are
        // (abAB)^±1, (abAB)^±2.
        let base = MarkedGraph::rose(2);
        let p = base.parse_path("abAB", true).unwrap();
        let g = GGraph::circuit_over(&base, &p, VertexId(0));
        let circuits = g.circuits_up_to(8, 100);
        assert_eq!(circuits.len(), 4);
    }

    #[test]
    fn subdivide_keeps_marking() {
        let mut g = MarkedGraph::rose(2);
        let (e1, e2, _mid) = g.subdivide(EdgeId(0), "a1".into(), "a2".into());
        assert_eq!(g.n_verts, 2);
        // base loop for x₁ should now read e1·e2 and still label x₁
        let bl = g.base_loops[0].clone();
        assert_eq!(bl.edges, vec![OEdge::fwd(e1), OEdge::fwd(e2)]);
        assert_eq!(g.path_label(&bl), w("a"));
    }
}
