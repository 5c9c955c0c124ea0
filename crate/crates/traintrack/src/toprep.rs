//! Topological representatives of outer automorphisms: filtrations, stratum
//! classification, transition matrices, exact Perron–Frobenius data, the
//! relative train track algorithm, and normalization to the five structural
//! properties (V), (P), (Z), (NEG), (F).
//!
//! A representative is a marked graph together with a vertex map and a
//! tightened edge-path image for every edge. All improvement moves (tighten,
//! collapse, subdivide, fold, slide, valence cleanup) maintain the marking by
//! vertex gauge transformations, so the induced outer automorphism can be
//! re-validated against the input at any point.

use crate::auto::Automorphism;
use crate::ffs::FreeFactorSystem;
use crate::graphs::{EdgeData, MarkedGraph, OEdge, Path, VertexId};
use crate::pf::{cmp_lambda_seq, Mat, PFValue};
use crate::words::{Letter, Word};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub use crate::graphs::EdgeId;

/// Stratum classification. `Eg` carries the exact Perron–Frobenius value of
/// its transition block. Linear edges store the root-free axis `w` and the
/// exponent `d` with `f(E) = E·w^d`. `Mixed` marks a stratum whose block is
/// neither zero nor irreducible (only possible before refinement).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum StratumKind {
    Eg,
    NegFixed,
    NegLinear { w: Path, d: i64 },
    NegNonlinear,
    Zero,
    Mixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stratum {
    pub edges: Vec<EdgeId>,
    pub kind: StratumKind,
    pub matrix: Mat,
    #[serde(skip)]
    pub pf: Option<PFValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Filtration {
    pub strata: Vec<Stratum>,
}

impl Filtration {
    /// Height of each edge (1-based; stratum index + 1).
    pub fn heights(&self, n_edges: usize) -> Vec<usize> {
        let mut h = vec![0usize; n_edges];
        for (i, s) in self.strata.iter().enumerate() {
            for &e in &s.edges {
                h[e.0 as usize] = i + 1;
            }
        }
        h
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct TopRep {
    pub graph: MarkedGraph,
    pub vertex_image: Vec<VertexId>,
    pub edge_image: Vec<Path>,
    pub filtration: Filtration,
    /// Invariant edge sets (innermost first) that refinement must realize as
    /// filtration elements; maintained through every move.
    #[serde(default)]
    pub tracked: Vec<Vec<bool>>,
}

impl std::fmt::Debug for TopRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "TopRep (rank {}):", self.graph.rank)?;
        for (i, d) in self.graph.edges.iter().enumerate() {
            writeln!(
                f,
                "  {} : v{}→v{}  ↦  {}   [h{}]",
                d.name,
                d.from.0,
                d.to.0,
                self.graph.show_path(&self.edge_image[i]),
                self.heights()[i]
            )?;
        }
        Ok(())
    }
}

/// Per-stratum outcome of the three train track conditions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RttStratumReport {
    pub stratum: usize,
    pub rtt_i: bool,
    pub rtt_ii: bool,
    pub rtt_iii: bool,
    pub detail: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RttReport {
    pub pass: bool,
    pub eg_strata: Vec<RttStratumReport>,
}

impl TopRep {
    // ------------------------------------------------------------------
    // Construction.
    // ------------------------------------------------------------------

    /// The rose representative of an automorphism, as a single (unrefined)
    /// stratum. Fails if the images do not define an automorphism.
    pub fn from_automorphism(phi: &Automorphism) -> Result<TopRep> {
        phi.inverse()?; // invertibility gate
        let graph = MarkedGraph::rose(phi.rank);
        let mut edge_image = Vec::new();
        for w in &phi.images {
            let mut p = Path::empty();
            for &l in &w.0 {
                let e = OEdge {
                    id: EdgeId(l.gen() as u32),
                    rev: !l.is_positive(),
                };
                p = p.concat(&Path::one(e));
            }
            edge_image.push(p.tightened());
        }
        let all: Vec<EdgeId> = (0..phi.rank).map(|i| EdgeId(i as u32)).collect();
        let mut rep = TopRep {
            graph,
            vertex_image: vec![VertexId(0)],
            edge_image,
            filtration: Filtration {
                strata: vec![Stratum {
                    edges: all,
                    kind: StratumKind::Mixed,
                    matrix: Vec::new(),
                    pf: None,
                }],
            },
            tracked: Vec::new(),
        };
        rep.classify();
        Ok(rep)
    }

    pub fn rank(&self) -> usize {
        self.graph.rank
    }

    pub fn heights(&self) -> Vec<usize> {
        self.filtration.heights(self.graph.n_edges())
    }

    // ------------------------------------------------------------------
    // The map on paths, directions and turns.
    // ------------------------------------------------------------------

    pub fn image_of(&self, o: OEdge) -> Path {
        let p = &self.edge_image[o.id.0 as usize];
        if o.rev {
            p.reversed()
        } else {
            p.clone()
        }
    }

    /// `f_#` on tightened paths.
    pub fn map_path(&self, p: &Path) -> Path {
        let mut out = Path::empty();
        for &o in &p.edges {
            out = out.concat(&self.image_of(o));
        }
        let mut t = out.tightened();
        t.circuit = p.circuit;
        t
    }

    pub fn map_path_pow(&self, p: &Path, k: usize) -> Path {
        let mut q = p.clone();
        for _ in 0..k {
            q = self.map_path(&q);
        }
        q
    }

    /// The direction map on oriented edges. Requires nontrivial images.
    pub fn df(&self, d: OEdge) -> Result<OEdge> {
        let p = self.image_of(d);
        p.edges.first().copied().ok_or_else(|| {
            Error::Internal(format!(
                "direction map undefined: edge {} has trivial image",
                self.graph.edge_name(d)
            ))
        })
    }

    /// Is the (unordered, nondegenerate) turn `{d1, d2}` illegal — i.e. does
    /// some `Df` iterate make it degenerate?
    pub fn turn_illegal(&self, d1: OEdge, d2: OEdge) -> Result<bool> {
        let mut seen = BTreeSet::new();
        let (mut a, mut b) = (d1, d2);
        loop {
            if a == b {
                return Ok(true);
            }
            let key = turn_key(a, b);
            if !seen.insert(key) {
                return Ok(false); // cycled without degenerating
            }
            a = self.df(a)?;
            b = self.df(b)?;
        }
    }

    /// Turns crossed by a path: `{ē_i, e_{i+1}}` at each interior vertex
    /// (plus the wrap turn for circuits).
    pub fn turns_of_path(p: &Path) -> Vec<(OEdge, OEdge)> {
        let mut out = Vec::new();
        for w in p.edges.windows(2) {
            out.push((w[0].reversed(), w[1]));
        }
        if p.circuit && p.len() >= 2 {
            out.push((p.edges[p.len() - 1].reversed(), p.edges[0]));
        }
        out
    }

    pub fn height_of_path(&self, p: &Path) -> usize {
        let h = self.heights();
        p.edges
            .iter()
            .map(|o| h[o.id.0 as usize])
            .max()
            .unwrap_or(0)
    }

    /// `r`-legality: every turn of the path with both edges in stratum `r`
    /// (1-based) is legal.
    pub fn is_r_legal(&self, p: &Path, r: usize) -> Result<bool> {
        let h = self.heights();
        for (a, b) in Self::turns_of_path(p) {
            if h[a.id.0 as usize] == r && h[b.id.0 as usize] == r && self.turn_illegal(a, b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    // ------------------------------------------------------------------
    // Validation.
    // ------------------------------------------------------------------

    /// Structural sanity: path endpoints match the vertex map, images are
    /// immersions after tightening, the filtration is preserved.
    pub fn check_structure(&self) -> Result<()> {
        let h = self.heights();
        if h.iter().any(|&x| x == 0) {
            return Err(Error::Internal("edge missing from filtration".into()));
        }
        for (i, d) in self.graph.edges.iter().enumerate() {
            let p = &self.edge_image[i];
            if !self.graph.path_valid(p) {
                return Err(Error::Internal(format!("image of {} is not a path", d.name)));
            }
            if p.is_empty() {
                return Err(Error::Internal(format!(
                    "image of {} is trivial (not an immersion)",
                    d.name
                )));
            }
            if *p != p.tightened() {
                return Err(Error::Internal(format!("image of {} is not tight", d.name)));
            }
            let (pf, pt) = (
                self.graph.from(p.edges[0]),
                self.graph.to(*p.edges.last().unwrap()),
            );
            if pf != self.vertex_image[d.from.0 as usize]
                || pt != self.vertex_image[d.to.0 as usize]
            {
                return Err(Error::Internal(format!(
                    "image endpoints of {} disagree with the vertex map",
                    d.name
                )));
            }
            // filtration preserved edgewise
            let he = h[i];
            if p.edges.iter().any(|o| h[o.id.0 as usize] > he) {
                return Err(Error::Internal(format!(
                    "image of {} climbs above its stratum",
                    d.name
                )));
            }
        }
        Ok(())
    }

    /// The outer automorphism induced via the marking.
    pub fn induced_outer(&self) -> Result<Automorphism> {
        let base = self.graph.base;
        let fbase = self.vertex_image[base.0 as usize];
        let trees = self.graph.tree_paths(base);
        let conn = trees
            .get(&fbase)
            .cloned()
            .ok_or_else(|| Error::Internal("graph is disconnected".into()))?;
        let mut images = Vec::new();
        for nu in &self.graph.base_loops {
            let img = conn.concat(&self.map_path(nu)).concat(&conn.reversed());
            images.push(self.graph.path_label(&img.tightened()));
        }
        Automorphism::new(self.rank(), images)
    }

    /// Does this representative induce the outer class of `phi`?
    pub fn represents(&self, phi: &Automorphism) -> bool {
        match self.induced_outer() {
            Ok(psi) => psi.outer_equal(phi).is_some(),
            Err(_) => false,
        }
    }

    // ------------------------------------------------------------------
    // Transition matrices, classification, Λ.
    // ------------------------------------------------------------------

    /// One unsigned-crossing matrix per stratum of the current filtration.
    pub fn transition_matrices(&self) -> Vec<Mat> {
        self.filtration
            .strata
            .iter()
            .map(|s| self.stratum_matrix(&s.edges))
            .collect()
    }

    fn stratum_matrix(&self, edges: &[EdgeId]) -> Mat {
        let index: BTreeMap<EdgeId, usize> =
            edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut m = vec![vec![0u64; edges.len()]; edges.len()];
        for (i, &e) in edges.iter().enumerate() {
            for o in &self.edge_image[e.0 as usize].edges {
                if let Some(&j) = index.get(&o.id) {
                    m[i][j] += 1;
                }
            }
        }
        m
    }

    /// Recompute matrices, kinds and PF data for the current strata.
    pub fn classify(&mut self) {
        let strata = std::mem::take(&mut self.filtration.strata);
        let mut out = Vec::new();
        for s in strata {
            let m = self.stratum_matrix(&s.edges);
            let kind = self.classify_kind(&s.edges, &m);
            let pf = match kind {
                StratumKind::Eg | StratumKind::NegFixed
                | StratumKind::NegLinear { .. } | StratumKind::NegNonlinear => {
                    Some(PFValue::of_matrix(&m))
                }
                _ => None,
            };
            out.push(Stratum {
                edges: s.edges,
                kind,
                matrix: m,
                pf,
            });
        }
        self.filtration.strata = out;
    }

    fn classify_kind(&self, edges: &[EdgeId], m: &Mat) -> StratumKind {
        if m.iter().all(|row| row.iter().all(|&x| x == 0)) {
            return StratumKind::Zero;
        }
        if !crate::pf::is_irreducible(m) {
            return StratumKind::Mixed;
        }
        let pf = PFValue::of_matrix(m);
        if pf.gt_one() {
            return StratumKind::Eg;
        }
        // λ = 1: a cyclic permutation block.
        if edges.len() == 1 {
            let e = edges[0];
            let img = &self.edge_image[e.0 as usize];
            if img.len() == 1 && img.edges[0] == OEdge::fwd(e) {
                return StratumKind::NegFixed;
            }
            if let Some((w, d)) = self.linear_form(e) {
                return StratumKind::NegLinear { w, d };
            }
        }
        StratumKind::NegNonlinear
    }

    /// If `f(E) = E·w^d` with `w` a closed root-free Nielsen path of lower
    /// height, return `(w, d)`.
    fn linear_form(&self, e: EdgeId) -> Option<(Path, i64)> {
        let img = &self.edge_image[e.0 as usize];
        if img.len() < 2 || img.edges[0] != OEdge::fwd(e) {
            return None;
        }
        let u = img.subpath(1, img.len());
        if u.edges.iter().any(|o| o.id == e) {
            return None;
        }
        // u must be a closed path at term(E)
        let d = &self.graph.edges[e.0 as usize];
        if self.graph.from(u.edges[0]) != d.to || self.graph.to(*u.edges.last().unwrap()) != d.to {
            return None;
        }
        // root-free core: u = w^k as an edge path
        let (w, k) = path_root(&u);
        // Nielsen: f_#(w) = w as a based closed path
        let mut wc = w.clone();
        wc.circuit = false;
        if self.map_path(&wc) != wc {
            return None;
        }
        Some((w, k))
    }

    /// Descending list of EG Perron–Frobenius values (the sequence Λ(f)).
    pub fn lambda(&self) -> Vec<PFValue> {
        let mut ls: Vec<PFValue> = self
            .filtration
            .strata
            .iter()
            .filter(|s| s.kind == StratumKind::Eg)
            .filter_map(|s| s.pf.clone())
            .collect();
        ls.sort_by(|a, b| b.cmp_exact(a));
        ls
    }

    // ------------------------------------------------------------------
    // Filtration refinement (Tarjan SCC with deterministic tie-break).
    // ------------------------------------------------------------------

    /// Refine to a maximal filtration (every stratum zero or irreducible).
    /// `required` lists nested f-invariant edge sets that must appear as
    /// filtration elements.
    pub fn refine(&mut self, required: &[Vec<bool>]) -> Result<()> {
        let n = self.graph.n_edges();
        // crossing digraph: i → j iff f(e_i) crosses e_j
        let mut adj = vec![BTreeSet::new(); n];
        for i in 0..n {
            for o in &self.edge_image[i].edges {
                adj[i].insert(o.id.0 as usize);
            }
        }
        let sccs = tarjan_sccs(&adj);
        // key: smallest required set containing the SCC; a set that meets an
        // SCC without containing it cannot be a filtration element
        let mut keyed: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        for (pos, scc) in sccs.iter().enumerate() {
            let mut key = required.len();
            for (ri, rset) in required.iter().enumerate() {
                let meets = scc.iter().any(|&e| rset[e]);
                let contained = scc.iter().all(|&e| rset[e]);
                if meets && !contained {
                    return Err(Error::Input(
                        "required subgraph is not a union of irreducible blocks".into(),
                    ));
                }
                if contained && key == required.len() {
                    key = ri;
                }
            }
            keyed.push((key, pos, scc.clone()));
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        // verify the order respects the crossing digraph
        let mut order = vec![0usize; n];
        for (rank, (_, _, scc)) in keyed.iter().enumerate() {
            for &e in scc {
                order[e] = rank;
            }
        }
        for i in 0..n {
            for &j in &adj[i] {
                if order[j] > order[i] {
                    return Err(Error::Input(
                        "required sets are inconsistent with the map (not invariant)".into(),
                    ));
                }
            }
        }
        self.filtration.strata = keyed
            .into_iter()
            .map(|(_, _, scc)| Stratum {
                edges: scc.into_iter().map(|e| EdgeId(e as u32)).collect(),
                kind: StratumKind::Mixed,
                matrix: Vec::new(),
                pf: None,
            })
            .collect();
        self.classify();
        Ok(())
    }

    // ------------------------------------------------------------------
    // The three train track conditions.
    // ------------------------------------------------------------------

    pub fn check_rtt(&self) -> Result<RttReport> {
        let h = self.heights();
        let mut reports = Vec::new();
        let mut pass = true;
        for (si, s) in self.filtration.strata.iter().enumerate() {
            if s.kind != StratumKind::Eg {
                continue;
            }
            let r = si + 1;
            let mut rep = RttStratumReport {
                stratum: r,
                rtt_i: true,
                rtt_ii: true,
                rtt_iii: true,
                detail: Vec::new(),
            };
            // RTT-i: Df maps H_r directions to H_r directions — the first
            // and last edges of f(E) lie in H_r for each E in H_r.
            for &e in &s.edges {
                for o in [OEdge::fwd(e), OEdge::back(e)] {
                    let d = self.df(o)?;
                    if h[d.id.0 as usize] != r {
                        rep.rtt_i = false;
                        rep.detail.push(format!(
                            "(i) direction {} leaves the stratum under Df",
                            self.graph.edge_name(o)
                        ));
                    }
                }
            }
            // RTT-ii: nontrivial connecting paths in G_{r-1} with endpoints
            // at attaching points stay nontrivial with such endpoints.
            if let Some(msg) = self.rtt_ii_violation(r)? {
                rep.rtt_ii = false;
                rep.detail.push(format!("(ii) {msg}"));
            }
            // RTT-iii: legal images of r-legal paths — it suffices that each
            // f(E) is r-legal once (i) and (ii) hold.
            for &e in &s.edges {
                if !self.is_r_legal(&self.edge_image[e.0 as usize], r)? {
                    rep.rtt_iii = false;
                    rep.detail.push(format!(
                        "(iii) image of {} crosses an illegal height-{} turn",
                        self.graph.edges[e.0 as usize].name, r
                    ));
                }
            }
            pass &= rep.rtt_i && rep.rtt_ii && rep.rtt_iii;
            reports.push(rep);
        }
        Ok(RttReport {
            pass,
            eg_strata: reports,
        })
    }

    /// Attaching vertices of EG stratum `r`: vertices of G_{r-1} that are
    /// endpoints of H_r edges and lie on a lower edge.
    fn attaching_vertices(&self, r: usize) -> Vec<VertexId> {
        let h = self.heights();
        let mut lower = vec![false; self.graph.n_verts];
        for (i, d) in self.graph.edges.iter().enumerate() {
            if h[i] < r {
                lower[d.from.0 as usize] = true;
                lower[d.to.0 as usize] = true;
            }
        }
        let mut att = BTreeSet::new();
        for (i, d) in self.graph.edges.iter().enumerate() {
            if h[i] == r {
                for v in [d.from, d.to] {
                    if lower[v.0 as usize] {
                        att.insert(v);
                    }
                }
            }
        }
        att.into_iter().collect()
    }

    /// Search for an RTT-ii violation at EG stratum `r`; returns a message.
    fn rtt_ii_violation(&self, r: usize) -> Result<Option<String>> {
        let h = self.heights();
        let att = self.attaching_vertices(r);
        if att.is_empty() {
            return Ok(None);
        }
        let att_set: BTreeSet<VertexId> = att.iter().copied().collect();
        // endpoint condition: attaching vertices map to attaching vertices
        for &v in &att {
            let fv = self.vertex_image[v.0 as usize];
            if !att_set.contains(&fv) {
                return Ok(Some(format!(
                    "attaching vertex v{} maps off the attaching set",
                    v.0
                )));
            }
        }
        // nontriviality: within each component of G_{r-1}, no connecting
        // path between attaching vertices dies under f_#.
        let lower_edges: Vec<bool> = h.iter().map(|&x| x > 0 && x < r).collect();
        let comps = subgraph_components(&self.graph, &lower_edges);
        for comp in &comps {
            let verts: BTreeSet<VertexId> = comp.verts.iter().copied().collect();
            let pts: Vec<VertexId> = att.iter().copied().filter(|v| verts.contains(v)).collect();
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    if self.connecting_path_dies(comp, pts[i], pts[j])? {
                        return Ok(Some(format!(
                            "a connecting path from v{} to v{} in G_{} has trivial image",
                            pts[i].0,
                            pts[j].0,
                            r - 1
                        )));
                    }
                }
            }
        }
        Ok(None)
    }

    /// Does some nontrivial path from `v1` to `v2` inside `comp` have
    /// trivial `f_#`-image? Decided exactly: with σ₀ a fixed connecting path
    /// and P_i = π₁(comp, v_i), every connecting path is γ·σ₀·γ' with loops
    /// γ ∈ P₁, γ' ∈ P₂, and its image dies iff the base-conjugated element T
    /// of f_#(σ₀) satisfies T ∈ f_#(P₁)·f_#(P₂) — a double-coset membership
    /// solved on a product automaton. (Since v1 ≠ v2 every connecting path
    /// is nontrivial; loops never die because f is a homotopy equivalence.)
    fn connecting_path_dies(
        &self,
        comp: &SubgraphComponent,
        v1: VertexId,
        v2: VertexId,
    ) -> Result<bool> {
        if self.vertex_image[v1.0 as usize] != self.vertex_image[v2.0 as usize] {
            // endpoints of the image differ, so the image cannot be trivial
            // unless loops shift them — conjugating by group elements keeps
            // endpoints, so a trivial image forces f(v1) = f(v2).
            return Ok(false);
        }
        let sigma0 = comp
            .path_between(v1, v2)
            .ok_or_else(|| Error::Internal("component lost a connecting path".into()))?;
        let t = self.element_of_path(&self.map_path(&sigma0));
        let p1 = self.pi1_words(comp, v1);
        let p2 = self.pi1_words(comp, v2);
        let a: Vec<Word> = p1
            .iter()
            .map(|p| self.element_of_path(&self.map_path(p)))
            .collect();
        let b: Vec<Word> = p2
            .iter()
            .map(|p| self.element_of_path(&self.map_path(p)))
            .collect();
        Ok(crate::graphs::double_coset_contains(&a, &t, &b))
    }

    /// Conjugate a path into a base-rooted F_n element via tree paths.
    fn element_of_path(&self, p: &Path) -> Word {
        if p.is_empty() {
            return Word::identity();
        }
        let trees = self.graph.tree_paths(self.graph.base);
        let from = self.graph.from(p.edges[0]);
        let to = self.graph.to(*p.edges.last().unwrap());
        let tf = trees.get(&from).cloned().unwrap_or_else(Path::empty);
        let tt = trees.get(&to).cloned().unwrap_or_else(Path::empty);
        self.graph
            .path_label(&tf.concat(p).concat(&tt.reversed()).tightened())
    }

    /// Loops generating π₁ of a subgraph component at `root`.
    fn pi1_words(&self, comp: &SubgraphComponent, root: VertexId) -> Vec<Path> {
        comp.pi1_loops(&self.graph, root)
    }

    // ------------------------------------------------------------------
    // Moves. Each preserves the induced outer class.
    // ------------------------------------------------------------------

    pub(crate) fn tighten_all(&mut self) {
        for p in self.edge_image.iter_mut() {
            *p = p.tightened();
        }
    }

    /// The marking label read along an oriented edge.
    fn oriented_label(&self, o: OEdge) -> Word {
        let l = self.graph.edges[o.id.0 as usize].label.clone();
        if o.rev {
            l.inverse()
        } else {
            l
        }
    }

    /// Gauge the marking at vertex `v` by `g`: labels into `v` get `·g`,
    /// labels out of `v` get `g⁻¹·`. Never gauges the base vertex.
    fn gauge(&mut self, v: VertexId, g: &Word) {
        debug_assert!(v != self.graph.base);
        if g.is_empty() {
            return;
        }
        for d in self.graph.edges.iter_mut() {
            let mut label = d.label.clone();
            if d.to == v {
                label = label.concat(g);
            }
            if d.from == v {
                label = g.inverse().concat(&label);
            }
            d.label = label;
        }
    }

    /// Collapse an f-invariant forest given by an edge set. Labels are
    /// gauged trivial first, so the marking survives verbatim.
    fn collapse_forest(&mut self, forest: &BTreeSet<EdgeId>) -> Result<()> {
        if forest.is_empty() {
            return Ok(());
        }
        // verify forest: no cycles within the edge set
        let keep: Vec<bool> = (0..self.graph.n_edges())
            .map(|i| forest.contains(&EdgeId(i as u32)))
            .collect();
        if subgraph_has_cycle(&self.graph, &keep) {
            return Err(Error::Internal(
                "collapse target contains a cycle (would change rank)".into(),
            ));
        }
        // verify invariance: images of forest edges stay in the forest
        for &e in forest {
            if self.edge_image[e.0 as usize]
                .edges
                .iter()
                .any(|o| !forest.contains(&o.id))
            {
                return Err(Error::Internal(
                    "collapse target is not f-invariant".into(),
                ));
            }
        }
        // gauge each forest edge's label trivial, working leaf-inward with
        // the base vertex (if present in a component) as the root
        let mut remaining: Vec<EdgeId> = forest.iter().copied().collect();
        while !remaining.is_empty() {
            let mut progressed = false;
            // a vertex is "free" if it is not the base; gauge at a free
            // endpoint that no other remaining edge path constrains — any
            // free endpoint works since gauging is local
            let mut next = Vec::new();
            for &e in &remaining {
                let d = &self.graph.edges[e.0 as usize];
                let (from, to, label) = (d.from, d.to, d.label.clone());
                if label.is_empty() {
                    progressed = true;
                    continue;
                }
                if to != self.graph.base {
                    self.gauge(to, &label.inverse());
                    progressed = true;
                } else if from != self.graph.base {
                    self.gauge(from, &label);
                    progressed = true;
                } else {
                    next.push(e); // loop at base — impossible in a forest
                }
            }
            if !next.is_empty() {
                return Err(Error::Internal("forest edge loops at the base".into()));
            }
            remaining = remaining
                .iter()
                .copied()
                .filter(|&e| !self.graph.edges[e.0 as usize].label.is_empty())
                .collect();
            if !progressed && !remaining.is_empty() {
                return Err(Error::Internal("gauge loop stalled".into()));
            }
        }
        // merge vertices with union-find over collapsed edges
        let nv = self.graph.n_verts;
        let mut uf: Vec<u32> = (0..nv as u32).collect();
        fn find(uf: &mut Vec<u32>, x: u32) -> u32 {
            if uf[x as usize] != x {
                let r = find(uf, uf[x as usize]);
                uf[x as usize] = r;
            }
            uf[x as usize]
        }
        for &e in forest {
            let d = &self.graph.edges[e.0 as usize];
            let (a, b) = (find(&mut uf, d.from.0), find(&mut uf, d.to.0));
            if a != b {
                // keep the base's root stable by always pointing away from it
                let base_root = find(&mut uf, self.graph.base.0);
                if b == base_root {
                    uf[a as usize] = b;
                } else {
                    uf[b as usize] = a;
                }
            }
        }
        let drop_path = |p: &Path| -> Path {
            Path::from_edges(
                p.edges
                    .iter()
                    .copied()
                    .filter(|o| !forest.contains(&o.id))
                    .collect(),
                p.circuit,
            )
        };
        let for_refs: Vec<EdgeId> = forest.iter().copied().collect();
        self.rebuild(
            |e| {
                if for_refs.contains(&e) {
                    None
                } else {
                    Some((e, false))
                }
            },
            |v| VertexId(find(&mut uf.clone(), v.0)),
            drop_path,
        )
    }

    /// Rebuild the representative through an edge relabeling, a vertex
    /// merge/relabel map, and a path rewriter (applied before renumbering).
    fn rebuild(
        &mut self,
        edge_map: impl Fn(EdgeId) -> Option<(EdgeId, bool)>,
        vert_map: impl Fn(VertexId) -> VertexId,
        path_rewrite: impl Fn(&Path) -> Path,
    ) -> Result<()> {
        let old_edges = self.graph.edges.clone();
        let n_old = old_edges.len();
        // survivors in old-id order, after mapping
        let mut new_ids: Vec<Option<(usize, bool)>> = vec![None; n_old];
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..n_old {
            if let Some((tgt, flip)) = edge_map(EdgeId(i as u32)) {
                let t = tgt.0 as usize;
                if t == i {
                    kept.push(i);
                    new_ids[i] = Some((kept.len() - 1, flip));
                }
            }
        }
        for i in 0..n_old {
            if new_ids[i].is_none() {
                if let Some((tgt, flip)) = edge_map(EdgeId(i as u32)) {
                    let t = tgt.0 as usize;
                    let (pos, tflip) = new_ids[t].ok_or_else(|| {
                        Error::Internal("edge mapped onto a deleted edge".into())
                    })?;
                    new_ids[i] = Some((pos, flip != tflip));
                }
            }
        }
        // vertex renumbering: classes under vert_map that touch a kept edge
        // or the base survive; everything else is dropped
        let mut vseen: BTreeMap<u32, u32> = BTreeMap::new();
        let mut vcount = 0u32;
        {
            let mut touch = |v: VertexId| {
                let m = vert_map(v);
                vseen.entry(m.0).or_insert_with(|| {
                    vcount += 1;
                    vcount - 1
                });
            };
            touch(self.graph.base);
            for &i in &kept {
                touch(old_edges[i].from);
                touch(old_edges[i].to);
            }
        }
        let vnum = |v: VertexId| -> Result<VertexId> {
            vseen
                .get(&vert_map(v).0)
                .map(|&id| VertexId(id))
                .ok_or_else(|| Error::Internal("vertex class dropped while still in use".into()))
        };
        let mut edges = Vec::new();
        for &i in &kept {
            let d = &old_edges[i];
            edges.push(EdgeData {
                from: vnum(d.from)?,
                to: vnum(d.to)?,
                label: d.label.clone(),
                name: d.name.clone(),
            });
        }
        let remap_path = |p: &Path| -> Result<Path> {
            let q = path_rewrite(p);
            let mut out = Vec::new();
            for o in q.edges {
                let (pos, flip) =
                    new_ids[o.id.0 as usize].ok_or_else(|| {
                        Error::Internal("path crosses a deleted edge".into())
                    })?;
                out.push(OEdge {
                    id: EdgeId(pos as u32),
                    rev: o.rev != flip,
                });
            }
            Ok(Path::from_edges(out, p.circuit).tightened())
        };
        let base = vnum(self.graph.base)?;
        let base_loops: Vec<Path> = self
            .graph
            .base_loops
            .iter()
            .map(|p| remap_path(p))
            .collect::<Result<_>>()?;
        // vertex images and edge images
        let mut vertex_image = vec![VertexId(0); vcount as usize];
        let mut assigned = vec![false; vcount as usize];
        for old_v in 0..self.graph.n_verts {
            let Ok(nv) = vnum(VertexId(old_v as u32)) else {
                continue; // dropped class
            };
            let img = vnum(self.vertex_image[old_v])?;
            if assigned[nv.0 as usize] && vertex_image[nv.0 as usize] != img {
                return Err(Error::Internal(
                    "merged vertices have different images".into(),
                ));
            }
            vertex_image[nv.0 as usize] = img;
            assigned[nv.0 as usize] = true;
        }
        if !assigned.iter().all(|&x| x) {
            return Err(Error::Internal("surviving vertex missing an image".into()));
        }
        let mut edge_image = vec![Path::empty(); kept.len()];
        for i in 0..n_old {
            if let Some((pos, flip)) = new_ids[i] {
                // only fill from the edge that owns the slot
                if kept[pos] == i {
                    let img = remap_path(&self.edge_image[i])?;
                    edge_image[pos] = if flip { img.reversed() } else { img };
                }
            }
        }
        // strata: map surviving edges, drop empties
        let mut strata = Vec::new();
        for s in &self.filtration.strata {
            let mut es: Vec<EdgeId> = s
                .edges
                .iter()
                .filter_map(|&e| new_ids[e.0 as usize].map(|(pos, _)| EdgeId(pos as u32)))
                .collect();
            es.sort();
            es.dedup();
            if !es.is_empty() {
                strata.push(Stratum {
                    edges: es,
                    kind: StratumKind::Mixed,
                    matrix: Vec::new(),
                    pf: None,
                });
            }
        }
        // tracked sets: a merged pair must agree on membership, else the
        // tracked subgraph is no longer well-defined
        let mut tracked = Vec::new();
        for set in &self.tracked {
            let mut t = vec![false; kept.len()];
            let mut t_set = vec![false; kept.len()];
            for i in 0..n_old {
                if let Some((pos, _)) = new_ids[i] {
                    if t_set[pos] && t[pos] != set[i] {
                        return Err(Error::Internal(
                            "fold crosses a tracked subgraph boundary".into(),
                        ));
                    }
                    t[pos] = set[i];
                    t_set[pos] = true;
                }
            }
            tracked.push(t);
        }
        self.graph = MarkedGraph {
            rank: self.graph.rank,
            n_verts: vcount as usize,
            edges,
            base,
            base_loops,
        };
        self.vertex_image = vertex_image;
        self.edge_image = edge_image;
        self.filtration = Filtration { strata };
        self.tracked = tracked;
        self.classify();
        Ok(())
    }

    /// Collapse the maximal invariant forest of trivially-mapped edges.
    fn collapse_trivial(&mut self) -> Result<bool> {
        let trivial: BTreeSet<EdgeId> = (0..self.graph.n_edges())
            .filter(|&i| self.edge_image[i].is_empty())
            .map(|i| EdgeId(i as u32))
            .collect();
        if trivial.is_empty() {
            return Ok(false);
        }
        let keep: Vec<bool> = (0..self.graph.n_edges())
            .map(|i| trivial.contains(&EdgeId(i as u32)))
            .collect();
        if subgraph_has_cycle(&self.graph, &keep) {
            return Err(Error::Input(
                "not a homotopy equivalence: a nontrivial loop dies".into(),
            ));
        }
        self.collapse_forest(&trivial)?;
        Ok(true)
    }

    /// Homotope the image of vertex `v` along `sigma` (a path from the old
    /// image to the new one). Graph and marking are untouched.
    fn slide_vertex_image(&mut self, v: VertexId, sigma: &Path) {
        if sigma.is_empty() {
            return;
        }
        for i in 0..self.graph.n_edges() {
            let d = &self.graph.edges[i];
            let mut p = self.edge_image[i].clone();
            if d.from == v {
                p = sigma.reversed().concat(&p);
            }
            if d.to == v {
                p = p.concat(sigma);
            }
            self.edge_image[i] = p.tightened();
        }
        self.vertex_image[v.0 as usize] = self.graph.to(*sigma.edges.last().unwrap());
    }

    /// Remove a valence-1 vertex and its edge by deformation retraction.
    fn erase_valence_one(&mut self) -> Result<bool> {
        let mut target = None;
        for v in 0..self.graph.n_verts {
            let vid = VertexId(v as u32);
            if self.graph.valence(vid) == 1 {
                target = Some(vid);
                break;
            }
        }
        let Some(v) = target else { return Ok(false) };
        let e = self.graph.out_edges(v)[0];
        let far = self.graph.to(e);
        if v == self.graph.base {
            // rebase along e; marking becomes conjugate, which the outer
            // validation absorbs
            let enew: Vec<Path> = self
                .graph
                .base_loops
                .iter()
                .map(|p| {
                    Path::one(e.reversed())
                        .concat(p)
                        .concat(&Path::one(e))
                        .tightened()
                })
                .collect();
            self.graph.base_loops = enew;
            self.graph.base = far;
        }
        // redirect any vertex mapping to v (reduced images may end there)
        let retreat = Path::one(e);
        for w in 0..self.graph.n_verts {
            if self.vertex_image[w] == v {
                self.slide_vertex_image(VertexId(w as u32), &retreat);
            }
        }
        let eid = e.id;
        self.rebuild(
            |x| if x == eid { None } else { Some((x, false)) },
            |x| x,
            |p| {
                Path::from_edges(
                    p.edges.iter().copied().filter(|o| o.id != eid).collect(),
                    p.circuit,
                )
            },
        )?;
        Ok(true)
    }

    /// Merge one valence-2 vertex that is neither the base nor in the image
    /// of the vertex map, and whose two edges lie in a common stratum.
    /// Returns false if none exists.
    fn merge_valence_two(&mut self) -> Result<bool> {
        let images: BTreeSet<VertexId> = self.vertex_image.iter().copied().collect();
        let h = self.heights();
        let mut free = None;
        let mut blocked = None;
        for v in 0..self.graph.n_verts {
            let vid = VertexId(v as u32);
            if vid == self.graph.base {
                continue;
            }
            if self.graph.valence(vid) == 2 {
                let outs = self.graph.out_edges(vid);
                if outs.len() == 2
                    && outs[0].id != outs[1].id
                    && h[outs[0].id.0 as usize] == h[outs[1].id.0 as usize]
                {
                    if !images.contains(&vid) {
                        free = Some((vid, outs[0], outs[1]));
                        break;
                    }
                    if blocked.is_none() {
                        // a valence-two homotopy can free the vertex by
                        // sliding preimages' images off it, provided the
                        // slide edge sits no higher than any edge whose
                        // image it enters
                        let ho = h[outs[0].id.0 as usize];
                        let safe = (0..self.graph.n_verts).all(|w| {
                            self.vertex_image[w] != vid
                                || self
                                    .graph
                                    .out_edges(VertexId(w as u32))
                                    .iter()
                                    .all(|o| h[o.id.0 as usize] >= ho)
                        });
                        if safe {
                            blocked = Some((vid, outs[0], outs[1]));
                        }
                    }
                }
            }
        }
        let Some((v, o1, o2)) = free.or(blocked) else {
            return Ok(false);
        };
        if images.contains(&v) {
            // slide every preimage's image along o1 to the far endpoint,
            // so nothing maps to the vertex being merged away
            let sigma = Path::one(o1);
            for w in 0..self.graph.n_verts {
                if self.vertex_image[w] == v {
                    self.slide_vertex_image(VertexId(w as u32), &sigma);
                }
            }
            self.tighten_all();
        }
        // merge ē1·e2: keep o1's edge id as u → w
        let e1 = o1.id;
        let e2 = o2.id;
        let keep_rev = o1.rev; // orientation of e1 as "into v"
        // new data for e1: from = far end of o1 (as from), to = far end of o2
        let u = self.graph.to(o1); // o1 leaves v, so far end is to(o1)
        let w = self.graph.to(o2);
        let lbl1 = if keep_rev {
            self.graph.edges[e1.0 as usize].label.clone()
        } else {
            self.graph.edges[e1.0 as usize].label.inverse()
        };
        // e1 oriented from u through v ... label of ō1 then o2
        let lbl2 = if o2.rev {
            self.graph.edges[e2.0 as usize].label.inverse()
        } else {
            self.graph.edges[e2.0 as usize].label.clone()
        };
        let img1 = self.image_of(o1.reversed());
        let img2 = self.image_of(o2);
        let d1 = &mut self.graph.edges[e1.0 as usize];
        d1.from = u;
        d1.to = w;
        d1.label = lbl1.concat(&lbl2);
        self.edge_image[e1.0 as usize] = img1.concat(&img2).tightened();
        // paths: ō1·o2 → e1-forward; crossings of e2 simply drop (they are
        // always adjacent to the matching e1 crossing, since reduced paths
        // pass straight through the valence-2 vertex)
        let fix_or = move |o: OEdge| -> OEdge {
            if o.id == e1 {
                // old ō1 (pointing u→v) becomes the new forward edge u→w
                OEdge {
                    id: e1,
                    rev: o.rev == o1.rev,
                }
            } else {
                o
            }
        };
        self.rebuild(
            |x| if x == e2 { None } else { Some((x, false)) },
            |x| x,
            |p| {
                Path::from_edges(
                    p.edges
                        .iter()
                        .copied()
                        .filter(|o| o.id != e2)
                        .map(fix_or)
                        .collect(),
                    p.circuit,
                )
            },
        )?;
        Ok(true)
    }

    /// Subdivide edge `e` so that the first piece maps to the first `k`
    /// edges of `f(e)` (0 < k < len). Returns (first, second, mid vertex).
    fn subdivide_map_edge(&mut self, e: EdgeId, k: usize) -> Result<(EdgeId, EdgeId, VertexId)> {
        let img = self.edge_image[e.0 as usize].clone();
        if k == 0 || k >= img.len() {
            return Err(Error::Internal("subdivision index out of range".into()));
        }
        let stem = self.graph.edges[e.0 as usize].name.clone();
        let n1 = self.graph.fresh_name(&format!("{stem}'"));
        let n2 = self.graph.fresh_name(&format!("{stem}''"));
        let (e1, e2, mid) = self.graph.subdivide(e, n1, n2);
        for p in self.edge_image.iter_mut() {
            *p = MarkedGraph::rewrite_after_subdivide(p, e1, e2);
        }
        let p1 = MarkedGraph::rewrite_after_subdivide(&img.subpath(0, k), e1, e2);
        let p2 = MarkedGraph::rewrite_after_subdivide(&img.subpath(k, img.len()), e1, e2);
        // mid maps to the juncture vertex
        let juncture = self.graph.to(*p1.edges.last().unwrap());
        self.edge_image[e1.0 as usize] = p1;
        self.edge_image.push(p2);
        self.vertex_image.push(juncture);
        for s in self.filtration.strata.iter_mut() {
            if s.edges.contains(&e1) {
                s.edges.push(e2);
            }
        }
        for set in self.tracked.iter_mut() {
            let m = set[e1.0 as usize];
            set.push(m);
        }
        Ok((e1, e2, mid))
    }

    /// Subdivide `e` at the interior fixed point inside the self-occurrence
    /// of `e^±` at position `t` of `f(e)`. The new vertex is fixed.
    pub(crate) fn subdivide_at_self_occurrence(&mut self, e: EdgeId, t: usize) -> Result<(EdgeId, EdgeId)> {
        let img = self.edge_image[e.0 as usize].clone();
        let occ = img.edges[t];
        if occ.id != e {
            return Err(Error::Internal("not a self-occurrence".into()));
        }
        let stem = self.graph.edges[e.0 as usize].name.clone();
        let n1 = self.graph.fresh_name(&format!("{stem}'"));
        let n2 = self.graph.fresh_name(&format!("{stem}''"));
        let (e1, e2, mid) = self.graph.subdivide(e, n1, n2);
        for p in self.edge_image.iter_mut() {
            *p = MarkedGraph::rewrite_after_subdivide(p, e1, e2);
        }
        let w0 = MarkedGraph::rewrite_after_subdivide(&img.subpath(0, t), e1, e2);
        let wrest = MarkedGraph::rewrite_after_subdivide(&img.subpath(t + 1, img.len()), e1, e2);
        if !occ.rev {
            // f(e1) = w0·e1, f(e2) = e2·wrest
            self.edge_image[e1.0 as usize] = w0.concat(&Path::one(OEdge::fwd(e1)));
            self.edge_image.push(Path::one(OEdge::fwd(e2)).concat(&wrest));
        } else {
            // occurrence of ē: f(e1) = w0·ē2, f(e2) = ē1·wrest
            self.edge_image[e1.0 as usize] = w0.concat(&Path::one(OEdge::back(e2)));
            self.edge_image.push(Path::one(OEdge::back(e1)).concat(&wrest));
        }
        self.vertex_image.push(mid); // the new vertex is fixed
        for s in self.filtration.strata.iter_mut() {
            if s.edges.contains(&e1) {
                s.edges.push(e2);
            }
        }
        for set in self.tracked.iter_mut() {
            let m = set[e1.0 as usize];
            set.push(m);
        }
        Ok((e1, e2))
    }

    /// Find an interior fixed point in edge `e`: a self-occurrence of `e`
    /// (orientation-preserving with nonempty prefix and suffix) or of `ē`
    /// (any position). Returns the occurrence index.
    pub(crate) fn interior_fixed_occurrence(&self, e: EdgeId) -> Option<usize> {
        let img = &self.edge_image[e.0 as usize];
        let m = img.len();
        for (t, o) in img.edges.iter().enumerate() {
            if o.id != e {
                continue;
            }
            if o.rev || (t > 0 && t + 1 < m) {
                return Some(t);
            }
        }
        None
    }

    /// Fold two distinct oriented edges with a common initial vertex and
    /// identical images. The marking is gauged to match before identifying.
    fn fold_equal_edges(&mut self, o1: OEdge, o2: OEdge) -> Result<()> {
        if o1.id == o2.id {
            return Err(Error::Internal("cannot fold an edge with itself".into()));
        }
        if self.graph.from(o1) != self.graph.from(o2) {
            return Err(Error::Internal("fold requires a common vertex".into()));
        }
        if self.image_of(o1) != self.image_of(o2) {
            return Err(Error::Internal("fold requires equal images".into()));
        }
        let t1 = self.graph.to(o1);
        let t2 = self.graph.to(o2);
        if t1 == t2 {
            return Err(Error::Input(
                "not a homotopy equivalence: parallel fold would drop rank".into(),
            ));
        }
        let (keep, gone) = (o1, o2);
        let (tk, tg) = (t1, t2);
        if tg != self.graph.base {
            let g = self
                .oriented_label(gone)
                .inverse()
                .concat(&self.oriented_label(keep));
            self.gauge(tg, &g);
        } else if tk != self.graph.base {
            let g = self
                .oriented_label(keep)
                .inverse()
                .concat(&self.oriented_label(gone));
            self.gauge(tk, &g);
        } else {
            return Err(Error::Internal(
                "fold endpoints both at base with distinct vertices".into(),
            ));
        }
        debug_assert_eq!(self.oriented_label(keep), self.oriented_label(gone));
        let (ekeep, egone) = (keep.id, gone.id);
        let flip = keep.rev != gone.rev;
        let t1v = tk;
        let t2v = tg;
        self.rebuild(
            move |x| {
                if x == egone {
                    Some((ekeep, flip))
                } else {
                    Some((x, false))
                }
            },
            move |v| if v == t2v { t1v } else { v },
            |p| p.clone(),
        )
    }

    /// Repair an illegal taken turn whose two directions have the same
    /// `Df`-image: subdivide both sides off their common image prefix and
    /// fold the equal halves.
    fn fold_turn(&mut self, d1: OEdge, d2: OEdge) -> Result<()> {
        if d1.id == d2.id {
            // the turn (E, Ē) at a loop vertex
            return self.fold_self_reverse(d1.id);
        }
        let p1 = self.image_of(d1);
        let p2 = self.image_of(d2);
        let c = p1.common_prefix_len(&p2);
        if c == 0 {
            return Err(Error::Internal("fold turn without common prefix".into()));
        }
        // subdivide d1 so its first piece maps to exactly the common prefix
        let mut half1 = d1;
        if c < p1.len() {
            let (a, b, _) = self.subdivide_for_direction(d1, c)?;
            half1 = if d1.rev { OEdge::back(b) } else { OEdge::fwd(a) };
        }
        // re-fetch d2's image after the first subdivision (its id is stable,
        // its path has been rewritten)
        let p2 = self.image_of(d2);
        let p1h = self.image_of(half1);
        let c2 = p1h.common_prefix_len(&p2);
        debug_assert_eq!(c2, p1h.len());
        let mut half2 = d2;
        if c2 < p2.len() {
            let (a, b, _) = self.subdivide_for_direction(d2, c2)?;
            half2 = if d2.rev { OEdge::back(b) } else { OEdge::fwd(a) };
        }
        self.fold_equal_edges(half1, half2)
    }

    /// Fold the turn (E, Ē) at the basepoint of a loop edge: the common
    /// prefix of `f(E)` and `f(Ē)` is identified. The prefix pieces never
    /// overlap: a reduced path cannot agree with its own reverse past the
    /// halfway point.
    fn fold_self_reverse(&mut self, e: EdgeId) -> Result<()> {
        let img = self.edge_image[e.0 as usize].clone();
        let c = img.common_prefix_len(&img.reversed());
        if c == 0 {
            return Err(Error::Internal(
                "self-reverse fold without common prefix".into(),
            ));
        }
        let len = img.len();
        debug_assert!(2 * c < len);
        let (a, r, _) = self.subdivide_map_edge(e, c)?;
        let suffix_new =
            MarkedGraph::rewrite_after_subdivide(&img.subpath(len - c, len), a, r);
        let rlen = self.edge_image[r.0 as usize].len();
        let k = rlen - suffix_new.len();
        let (_, b, _) = self.subdivide_map_edge(r, k)?;
        self.fold_equal_edges(OEdge::fwd(a), OEdge::back(b))
    }

    /// Subdivide the edge under direction `d` so that the piece carrying `d`
    /// maps onto the first `k` edges of `image_of(d)`.
    fn subdivide_for_direction(&mut self, d: OEdge, k: usize) -> Result<(EdgeId, EdgeId, VertexId)> {
        if d.rev {
            let len = self.edge_image[d.id.0 as usize].len();
            self.subdivide_map_edge(d.id, len - k)
        } else {
            self.subdivide_map_edge(d.id, k)
        }
    }

    /// Core subdivision (RTT-i repair): split off the maximal initial and
    /// terminal segments of `f(E)` lying in G_{r-1}.
    fn core_subdivide(&mut self, e: EdgeId, r: usize) -> Result<()> {
        let h = self.heights();
        let img = self.edge_image[e.0 as usize].clone();
        let lower = |o: &OEdge| h[o.id.0 as usize] < r;
        let pre = img.edges.iter().take_while(|o| lower(o)).count();
        let suf = img.edges.iter().rev().take_while(|o| lower(o)).count();
        if pre + suf >= img.len() {
            return Err(Error::Internal(
                "core subdivision on an edge mapping into the lower graph".into(),
            ));
        }
        let mut core_edge = e;
        if pre > 0 {
            let (_, b, _) = self.subdivide_map_edge(e, pre)?;
            core_edge = b;
        }
        if suf > 0 {
            let len = self.edge_image[core_edge.0 as usize].len();
            self.subdivide_map_edge(core_edge, len - suf)?;
        }
        Ok(())
    }

    /// Full cleanup: tighten, collapse trivial edges, erase valence-1,
    /// refine (so stratum heights are current), then merge valence-2
    /// vertices within strata. Ends refined and classified.
    fn cleanup(&mut self) -> Result<()> {
        loop {
            self.tighten_all();
            if self.collapse_trivial()? {
                continue;
            }
            if self.erase_valence_one()? {
                continue;
            }
            let req = self.tracked.clone();
            self.refine(&req)?;
            if self.merge_valence_two()? {
                continue;
            }
            break;
        }
        Ok(())
    }

    /// One improvement step. Returns a description, or None if this is
    /// already a relative train track map.
    fn improve_once(&mut self) -> Result<Option<String>> {
        let report = self.check_rtt()?;
        if report.pass {
            return Ok(None);
        }
        // work on the highest failing stratum
        let failing = report
            .eg_strata
            .iter()
            .rev()
            .find(|s| !(s.rtt_i && s.rtt_ii && s.rtt_iii))
            .expect("some stratum fails");
        let r = failing.stratum;
        let h = self.heights();
        if !failing.rtt_i {
            // find an H_r edge whose image starts or ends low and
            // core-subdivide it
            let stratum_edges = self.filtration.strata[r - 1].edges.clone();
            for e in stratum_edges {
                let img = &self.edge_image[e.0 as usize];
                let first_low = h[img.edges[0].id.0 as usize] < r;
                let last_low = h[img.edges.last().unwrap().id.0 as usize] < r;
                if first_low || last_low {
                    self.core_subdivide(e, r)?;
                    return Ok(Some(format!("core subdivision in stratum {r}")));
                }
            }
            return Err(Error::Internal("RTT-i failure without witness".into()));
        }
        if !failing.rtt_iii {
            // find a taken pre-degenerate illegal turn at height r and fold
            if let Some((d1, d2)) = self.find_pre_degenerate_taken_turn(Some(r))? {
                self.fold_turn(d1, d2)?;
                return Ok(Some(format!("fold at an illegal turn of height {r}")));
            }
            return Err(Error::Internal("RTT-iii failure without witness".into()));
        }
        // RTT-ii: a connecting path dies only through cancellation, and
        // cancellation at a juncture means two distinct directions share
        // their Df-image — fold such a pair.
        if let Some((d1, d2)) = self.find_df_equal_pair()? {
            self.fold_turn(d1, d2)?;
            return Ok(Some("fold repairing a dying connecting path".to_string()));
        }
        Err(Error::Internal(
            "RTT-ii failure with no cancellation witness".into(),
        ))
    }

    /// Any pair of distinct directions at a common vertex with equal
    /// `Df`-images (an immediately foldable turn).
    fn find_df_equal_pair(&self) -> Result<Option<(OEdge, OEdge)>> {
        for v in 0..self.graph.n_verts {
            let dirs = self.graph.out_edges(VertexId(v as u32));
            for i in 0..dirs.len() {
                for j in (i + 1)..dirs.len() {
                    if dirs[i] == dirs[j] {
                        continue;
                    }
                    if self.df(dirs[i])? == self.df(dirs[j])? {
                        return Ok(Some((dirs[i], dirs[j])));
                    }
                }
            }
        }
        Ok(None)
    }

    /// A turn taken by some edge image whose directions have equal images
    /// under Df, with height filter. Walks Df-orbits of taken turns.
    fn find_pre_degenerate_taken_turn(
        &self,
        height: Option<usize>,
    ) -> Result<Option<(OEdge, OEdge)>> {
        let h = self.heights();
        let mut frontier: Vec<(OEdge, OEdge)> = Vec::new();
        for i in 0..self.graph.n_edges() {
            for (a, b) in Self::turns_of_path(&self.edge_image[i]) {
                if a != b {
                    frontier.push((a, b));
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<(OEdge, OEdge)> = frontier.into();
        while let Some((a, b)) = queue.pop_front() {
            if !seen.insert(turn_key(a, b)) {
                continue;
            }
            let (da, db) = (self.df(a)?, self.df(b)?);
            if da == db {
                let ok = match height {
                    Some(r) => h[a.id.0 as usize] == r && h[b.id.0 as usize] == r,
                    None => true,
                };
                if ok {
                    return Ok(Some((a, b)));
                }
            } else {
                queue.push_back((da, db));
            }
        }
        Ok(None)
    }
}

// ---------------------------------------------------------------------------
// Normalization to the five structural properties.
// ---------------------------------------------------------------------------

/// Outcome of [`normalize`]: the moves applied and, per property, whether the
/// final representative satisfies it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizeReport {
    pub steps: Vec<String>,
    pub satisfied: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

impl TopRep {
    /// Is the oriented-edge orbit of `e` periodic: `f^k(E) = E` for some k
    /// (only possible when every image along the orbit is a single edge)?
    pub(crate) fn edge_periodic(&self, e: EdgeId) -> bool {
        let start = OEdge::fwd(e);
        let mut cur = start;
        for _ in 0..=self.graph.n_edges() * 2 {
            let img = &self.edge_image[cur.id.0 as usize];
            if img.len() != 1 {
                return false;
            }
            cur = if cur.rev {
                img.edges[0].reversed()
            } else {
                img.edges[0]
            };
            if cur == start {
                return true;
            }
        }
        false
    }

    /// Steps until the vertex orbit of `v` reaches a periodic vertex, and
    /// that vertex.
    fn vertex_orbit_entry(&self, v: VertexId) -> (usize, VertexId) {
        let mut seen: BTreeMap<VertexId, usize> = BTreeMap::new();
        let mut cur = v;
        let mut i = 0usize;
        loop {
            if let Some(&first) = seen.get(&cur) {
                // cycle entered at step `first`
                return (first, orbit_at(&seen, first));
            }
            seen.insert(cur, i);
            cur = self.vertex_image[cur.0 as usize];
            i += 1;
        }
        fn orbit_at(seen: &BTreeMap<VertexId, usize>, step: usize) -> VertexId {
            *seen
                .iter()
                .find(|&(_, &s)| s == step)
                .map(|(v, _)| v)
                .expect("orbit step recorded")
        }
    }

    pub(crate) fn vertex_periodic(&self, v: VertexId) -> bool {
        self.vertex_orbit_entry(v).0 == 0
    }

    /// Reverse the orientation of an edge in place: endpoints swap, the
    /// marking label and the image invert, and every stored path crossing it
    /// flips.
    fn reverse_edge(&mut self, e: EdgeId) {
        let d = &mut self.graph.edges[e.0 as usize];
        std::mem::swap(&mut d.from, &mut d.to);
        d.label = d.label.inverse();
        let flip = |p: &Path| -> Path {
            Path::from_edges(
                p.edges
                    .iter()
                    .map(|o| {
                        if o.id == e {
                            o.reversed()
                        } else {
                            *o
                        }
                    })
                    .collect(),
                p.circuit,
            )
        };
        for p in self.edge_image.iter_mut() {
            *p = flip(p);
        }
        for p in self.graph.base_loops.iter_mut() {
            *p = flip(p);
        }
        let img = self.edge_image[e.0 as usize].reversed();
        self.edge_image[e.0 as usize] = img;
    }

    /// For a non-periodic edge in the normal form `f(E) = E·u`, slide the
    /// terminal endpoint along the orbit path `σ = u·f_#(u)·…·f^{s-1}_#(u)`
    /// to the first periodic vertex of the orbit of `term(E)`. Afterwards
    /// `f(E') = E'·f^s_#(u)` with a periodic terminal vertex.
    fn slide_neg_terminal(&mut self, e: EdgeId) -> Result<bool> {
        let img = self.edge_image[e.0 as usize].clone();
        if img.len() < 2 || img.edges[0] != OEdge::fwd(e) {
            return Err(Error::Internal("slide requires the form f(E) = E·u".into()));
        }
        let u = img.subpath(1, img.len());
        if u.edges.iter().any(|o| o.id == e) {
            return Err(Error::Internal("suffix of a sliding edge crosses it".into()));
        }
        let v = self.graph.edges[e.0 as usize].to;
        let (s, _) = self.vertex_orbit_entry(v);
        if s == 0 {
            return Ok(false); // already periodic
        }
        // σ = u · f(u) · … · f^{s-1}(u)
        let mut sigma = Path::empty();
        let mut piece = u.clone();
        for _ in 0..s {
            sigma = sigma.concat(&piece).tightened();
            piece = self.map_path(&piece);
        }
        if sigma.is_empty() {
            return Ok(false);
        }
        if sigma.edges.iter().any(|o| o.id == e) {
            return Err(Error::Internal("slide path crosses the sliding edge".into()));
        }
        let new_term = self.graph.to(*sigma.edges.last().unwrap());
        // rewrite all crossings: E ↦ E'·σ̄ (E' is the same id, retargeted)
        let sig_rev = sigma.reversed();
        let rewrite = |p: &Path| -> Path {
            let mut out: Vec<OEdge> = Vec::new();
            for &o in &p.edges {
                if o.id == e {
                    if !o.rev {
                        out.push(o);
                        out.extend(sig_rev.edges.iter().copied());
                    } else {
                        out.extend(sigma.edges.iter().copied());
                        out.push(o);
                    }
                } else {
                    out.push(o);
                }
            }
            Path::from_edges(out, p.circuit).tightened()
        };
        for i in 0..self.edge_image.len() {
            self.edge_image[i] = rewrite(&self.edge_image[i]);
        }
        for p in self.graph.base_loops.iter_mut() {
            *p = rewrite(p);
        }
        // the slid edge: new marking label, new terminal, new image E'·f^s(u)
        let sigma_label = self.graph.path_label(&sigma);
        let fpow_u = piece; // after the loop, piece = f^s_#(u)
        {
            let d = &mut self.graph.edges[e.0 as usize];
            d.to = new_term;
            d.label = d.label.concat(&sigma_label);
        }
        self.edge_image[e.0 as usize] =
            Path::one(OEdge::fwd(e)).concat(&fpow_u).tightened();
        Ok(true)
    }

    /// Core of the subgraph `mask`: iteratively strip edges at subgraph
    /// valence-≤1 vertices. Returns the surviving edge mask.
    fn core_mask(&self, mask: &[bool]) -> Vec<bool> {
        let mut cur = mask.to_vec();
        loop {
            let mut val = vec![0usize; self.graph.n_verts];
            for (i, d) in self.graph.edges.iter().enumerate() {
                if cur[i] {
                    val[d.from.0 as usize] += 1;
                    val[d.to.0 as usize] += 1;
                }
            }
            let mut changed = false;
            for (i, d) in self.graph.edges.iter().enumerate() {
                if cur[i] && (val[d.from.0 as usize] <= 1 || val[d.to.0 as usize] <= 1) {
                    cur[i] = false;
                    changed = true;
                }
            }
            if !changed {
                return cur;
            }
        }
    }
}

/// Normalize a relative train track representative toward the five
/// structural properties. Moves are logged; properties that cannot be
/// arranged by the period-one machinery are reported unsatisfied with a
/// note rather than silently claimed.
pub fn normalize(rep: &mut TopRep) -> Result<NormalizeReport> {
    let mut steps = Vec::new();
    let mut notes = Vec::new();
    let cap = 40usize;
    let mut stable = false;
    for _ in 0..cap {
        let mut acted = false;
        acted |= pass_neg(rep, &mut steps, &mut notes)?;
        acted |= pass_p(rep, &mut steps)?;
        acted |= pass_v(rep, &mut steps)?;
        acted |= pass_f(rep, &mut steps, &mut notes)?;
        if !acted {
            stable = true;
            break;
        }
    }
    if !stable {
        return Err(Error::Budget(
            "normalization did not stabilize within its iteration budget".into(),
        ));
    }
    pass_z(rep, &mut steps)?;
    rep.check_structure()?;
    notes.sort();
    notes.dedup();
    let mut satisfied = BTreeMap::new();
    satisfied.insert("V".to_string(), verify_v(rep));
    satisfied.insert("P".to_string(), verify_p(rep));
    satisfied.insert("Z".to_string(), verify_z(rep, &mut notes));
    satisfied.insert("NEG".to_string(), verify_neg(rep));
    satisfied.insert("F".to_string(), verify_f(rep));
    Ok(NormalizeReport {
        steps,
        satisfied,
        notes,
    })
}

/// (NEG): bring every non-periodic irreducible λ=1 edge to the form
/// `f(E) = E·u` with a periodic terminal vertex.
fn pass_neg(rep: &mut TopRep, steps: &mut Vec<String>, notes: &mut Vec<String>) -> Result<bool> {
    let mut acted = false;
    loop {
        let mut did = false;
        for si in 0..rep.filtration.strata.len() {
            let s = &rep.filtration.strata[si];
            if s.edges.len() != 1 || s.kind == StratumKind::Eg || s.kind == StratumKind::Zero {
                continue;
            }
            let e = s.edges[0];
            if rep.edge_periodic(e) {
                continue;
            }
            let img = rep.edge_image[e.0 as usize].clone();
            let name = rep.graph.edges[e.0 as usize].name.clone();
            let occ: Vec<(usize, bool)> = img
                .edges
                .iter()
                .enumerate()
                .filter(|(_, o)| o.id == e)
                .map(|(t, o)| (t, o.rev))
                .collect();
            match occ.as_slice() {
                [] => {
                    // an irreducible λ=1 block always crosses itself once
                    return Err(Error::Internal(
                        "non-exponential stratum without a self-crossing".into(),
                    ));
                }
                [(_, true)] => {
                    notes.push(format!(
                        "edge {name} reverses orientation; only a rotationless power \
                         can be brought to the normal form"
                    ));
                    continue;
                }
                [(0, false)] if img.len() >= 2 => {
                    // already f(E) = E·u: slide the terminal if needed
                    if rep.slide_neg_terminal(e)? {
                        steps.push(format!("slide terminal of {name} to a periodic vertex"));
                        did = true;
                        break;
                    }
                }
                [(t, false)] => {
                    let t = *t;
                    if t + 1 == img.len() {
                        // f(E) = u·E: reverse the edge
                        rep.reverse_edge(e);
                        steps.push(format!("reverse {name} into the form f(E) = E·u"));
                    } else {
                        // f(E) = u·E·w: split at the interior fixed point
                        let (e1, _) = rep.subdivide_at_self_occurrence(e, t)?;
                        rep.reverse_edge(e1);
                        steps.push(format!(
                            "subdivide {name} at its interior fixed point and orient both pieces"
                        ));
                    }
                    did = true;
                    break;
                }
                _ => {
                    return Err(Error::Internal(
                        "non-exponential edge crossing itself twice".into(),
                    ));
                }
            }
        }
        if !did {
            break;
        }
        acted = true;
        rep.cleanup()?;
    }
    Ok(acted)
}

/// (P): collapse periodic strata that are forests.
fn pass_p(rep: &mut TopRep, steps: &mut Vec<String>) -> Result<bool> {
    let mut acted = false;
    loop {
        let mut forest: Option<BTreeSet<EdgeId>> = None;
        for s in &rep.filtration.strata {
            if !s.edges.iter().all(|&e| rep.edge_periodic(e)) {
                continue;
            }
            let mask: Vec<bool> = (0..rep.graph.n_edges())
                .map(|i| s.edges.contains(&EdgeId(i as u32)))
                .collect();
            if !subgraph_has_cycle(&rep.graph, &mask) {
                forest = Some(s.edges.iter().copied().collect());
                break;
            }
        }
        let Some(f) = forest else { break };
        let n = f.len();
        rep.collapse_forest(&f)?;
        rep.cleanup()?;
        steps.push(format!("collapse a periodic forest stratum ({n} edges)"));
        acted = true;
    }
    Ok(acted)
}

/// (V): subdivide every edge at its interior fixed points, so fixed points
/// of the map — in particular endpoints of indivisible Nielsen paths — are
/// vertices.
fn pass_v(rep: &mut TopRep, steps: &mut Vec<String>) -> Result<bool> {
    let mut acted = false;
    let guard = 4 * rep.graph.n_edges() + 16;
    for _ in 0..guard {
        let mut found = None;
        for i in 0..rep.graph.n_edges() {
            if let Some(t) = rep.interior_fixed_occurrence(EdgeId(i as u32)) {
                found = Some((EdgeId(i as u32), t));
                break;
            }
        }
        let Some((e, t)) = found else {
            return Ok(acted);
        };
        let name = rep.graph.edges[e.0 as usize].name.clone();
        rep.subdivide_at_self_occurrence(e, t)?;
        steps.push(format!("subdivide {name} at an interior fixed point"));
        acted = true;
    }
    Err(Error::Budget(
        "interior fixed point subdivision did not terminate".into(),
    ))
}

/// (F): arrange that the core of each filtration element is a filtration
/// element: slide vertex images off hanging trees, then refine with the
/// cores as required elements.
fn pass_f(rep: &mut TopRep, steps: &mut Vec<String>, notes: &mut Vec<String>) -> Result<bool> {
    let n = rep.graph.n_edges();
    let h = rep.heights();
    let n_strata = rep.filtration.strata.len();
    let mut acted = false;
    // slides: for each prefix with hanging material, core endpoints must map
    // into the core
    for r in 1..=n_strata {
        let mask: Vec<bool> = (0..n).map(|i| h[i] > 0 && h[i] <= r).collect();
        let core = rep.core_mask(&mask);
        if core == mask || core.iter().all(|&x| !x) {
            continue;
        }
        let core_verts: BTreeSet<VertexId> = rep
            .graph
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| core[*i])
            .flat_map(|(_, d)| [d.from, d.to])
            .collect();
        let hang_adj: Vec<usize> = (0..n).filter(|&i| mask[i] && !core[i]).collect();
        for w in core_verts.clone() {
            let fw = rep.vertex_image[w.0 as usize];
            if core_verts.contains(&fw) {
                continue;
            }
            // path from fw through hanging edges to the core
            let sigma = hanging_retraction(rep, &hang_adj, fw, &core_verts)?;
            let wname = w.0;
            rep.slide_vertex_image(w, &sigma);
            steps.push(format!(
                "slide the image of v{wname} out of a hanging tree (element {r})"
            ));
            acted = true;
        }
    }
    if acted {
        rep.tighten_all();
    }
    // refine with cores as required elements (chained with tracked sets)
    let h = rep.heights();
    let n = rep.graph.n_edges();
    let mut required = rep.tracked.clone();
    for r in 1..=rep.filtration.strata.len() {
        let mask: Vec<bool> = (0..n).map(|i| h[i] > 0 && h[i] <= r).collect();
        let core = rep.core_mask(&mask);
        if core.iter().any(|&x| x) && core != mask {
            required.push(core);
        }
    }
    // sort by popcount, drop duplicates, and verify the chain condition
    required.sort_by_key(|s| s.iter().filter(|&&x| x).count());
    let mut uniq: Vec<Vec<bool>> = Vec::new();
    for s in required {
        if !uniq.contains(&s) {
            uniq.push(s);
        }
    }
    let required = uniq;
    for w in required.windows(2) {
        let nested = (0..n).all(|i| !w[0][i] || w[1][i]);
        if !nested {
            notes.push(
                "core elements and realized systems do not form a chain; \
                 filtration order left unchanged"
                    .to_string(),
            );
            return Ok(acted);
        }
    }
    let before_h = rep.heights();
    rep.refine(&required)?;
    if rep.heights() != before_h {
        steps.push("reorder strata so cores become filtration elements".to_string());
        acted = true;
    }
    Ok(acted)
}

/// (Z): move each zero stratum directly below the first exponential stratum
/// above it that crosses into it, when the crossing digraph permits.
fn pass_z(rep: &mut TopRep, steps: &mut Vec<String>) -> Result<()> {
    loop {
        let n_strata = rep.filtration.strata.len();
        let crosses = |hi: usize, lo: usize| -> bool {
            rep.filtration.strata[hi].edges.iter().any(|&e| {
                rep.edge_image[e.0 as usize]
                    .edges
                    .iter()
                    .any(|o| rep.filtration.strata[lo].edges.contains(&o.id))
            })
        };
        let mut mv = None;
        'scan: for i in 0..n_strata {
            if rep.filtration.strata[i].kind != StratumKind::Zero {
                continue;
            }
            // enveloping candidate: first EG stratum above i crossing into i
            let mut r = None;
            for j in (i + 1)..n_strata {
                if rep.filtration.strata[j].kind == StratumKind::Eg && crosses(j, i) {
                    r = Some(j);
                    break;
                }
            }
            let Some(r) = r else { continue };
            // already directly below (only zero strata in between)?
            if ((i + 1)..r).all(|j| rep.filtration.strata[j].kind == StratumKind::Zero) {
                continue;
            }
            // legal to move i up to r-1? nothing strictly between may cross i
            for j in (i + 1)..r {
                if crosses(j, i) {
                    continue 'scan;
                }
            }
            mv = Some((i, r));
            break;
        }
        let Some((i, r)) = mv else {
            return Ok(());
        };
        let s = rep.filtration.strata.remove(i);
        rep.filtration.strata.insert(r - 1, s);
        rep.classify();
        steps.push(format!(
            "regroup a zero stratum directly below its enveloping stratum ({i} → {})",
            r - 1
        ));
    }
}

fn hanging_retraction(
    rep: &TopRep,
    hanging: &[usize],
    from: VertexId,
    core_verts: &BTreeSet<VertexId>,
) -> Result<Path> {
    let mut prev: BTreeMap<VertexId, (VertexId, OEdge)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(v) = queue.pop_front() {
        if core_verts.contains(&v) {
            // reconstruct backwards
            let mut rev_path = Vec::new();
            let mut cur = v;
            while cur != from {
                let (p, o) = prev[&cur];
                rev_path.push(o);
                cur = p;
            }
            rev_path.reverse();
            return Ok(Path::from_edges(rev_path, false));
        }
        for o in rep.graph.out_edges(v) {
            if !hanging.contains(&(o.id.0 as usize)) {
                continue;
            }
            let w = rep.graph.to(o);
            if seen.insert(w) {
                prev.insert(w, (v, o));
                queue.push_back(w);
            }
        }
    }
    Err(Error::Internal(
        "vertex image lies in a hanging tree with no retraction to the core".into(),
    ))
}

/// No edge image crosses its own edge at an interior fixed point.
pub fn verify_v(rep: &TopRep) -> bool {
    (0..rep.graph.n_edges()).all(|i| rep.interior_fixed_occurrence(EdgeId(i as u32)).is_none())
}

/// No stratum is a periodic forest.
pub fn verify_p(rep: &TopRep) -> bool {
    for s in &rep.filtration.strata {
        if s.edges.iter().all(|&e| rep.edge_periodic(e)) {
            let mask: Vec<bool> = (0..rep.graph.n_edges())
                .map(|i| s.edges.contains(&EdgeId(i as u32)))
                .collect();
            if !subgraph_has_cycle(&rep.graph, &mask) {
                return false;
            }
        }
    }
    true
}

/// Every zero stratum sits directly below an exponential stratum that
/// crosses into it, forms a union of components of the graph below that
/// stratum, and its vertices have valence ≥ 2 there.
pub fn verify_z(rep: &TopRep, notes: &mut Vec<String>) -> bool {
    let n_strata = rep.filtration.strata.len();
    let h = rep.heights();
    let mut ok = true;
    for i in 0..n_strata {
        if rep.filtration.strata[i].kind != StratumKind::Zero {
            continue;
        }
        // the first non-zero stratum above must be EG and cross into H_i
        let mut r = None;
        for j in (i + 1)..n_strata {
            if rep.filtration.strata[j].kind != StratumKind::Zero {
                r = Some(j);
                break;
            }
        }
        let Some(r) = r else {
            notes.push(format!("zero stratum {} has nothing above it", i + 1));
            ok = false;
            continue;
        };
        let is_eg = rep.filtration.strata[r].kind == StratumKind::Eg;
        let crossed = rep.filtration.strata[r].edges.iter().any(|&e| {
            rep.edge_image[e.0 as usize]
                .edges
                .iter()
                .any(|o| rep.filtration.strata[i].edges.contains(&o.id))
        });
        if !(is_eg && crossed) {
            notes.push(format!(
                "zero stratum {} is not enveloped by the stratum above it",
                i + 1
            ));
            ok = false;
            continue;
        }
        // component of G_{r-1} and valence ≥ 2 in G_r
        let n = rep.graph.n_edges();
        let below: Vec<bool> = (0..n).map(|k| h[k] > 0 && h[k] <= r).collect();
        let comps = subgraph_components(&rep.graph, &below);
        let si: BTreeSet<EdgeId> = rep.filtration.strata[i].edges.iter().copied().collect();
        let is_union = comps.iter().all(|c| {
            let inside = c.edges.iter().filter(|o| si.contains(&o.id)).count();
            inside == 0 || inside == c.edges.len()
        });
        let upto_r: Vec<bool> = (0..n).map(|k| h[k] > 0 && h[k] <= r + 1).collect();
        let mut val = vec![0usize; rep.graph.n_verts];
        for (k, d) in rep.graph.edges.iter().enumerate() {
            if upto_r[k] {
                val[d.from.0 as usize] += 1;
                val[d.to.0 as usize] += 1;
            }
        }
        let verts: BTreeSet<VertexId> = rep
            .filtration
            .strata[i]
            .edges
            .iter()
            .flat_map(|&e| {
                let d = &rep.graph.edges[e.0 as usize];
                [d.from, d.to]
            })
            .collect();
        let valence_ok = verts.iter().all(|v| val[v.0 as usize] >= 2);
        if !(is_union && valence_ok) {
            notes.push(format!(
                "zero stratum {} fails the enveloped-component conditions",
                i + 1
            ));
            ok = false;
        }
    }
    ok
}

/// Every non-periodic irreducible λ=1 edge has the form `f(E) = E·u` with a
/// periodic terminal vertex lying in a lower filtration element that is its
/// own core.
pub fn verify_neg(rep: &TopRep) -> bool {
    let h = rep.heights();
    let n = rep.graph.n_edges();
    for (si, s) in rep.filtration.strata.iter().enumerate() {
        if s.kind == StratumKind::Eg || s.kind == StratumKind::Zero {
            continue;
        }
        if s.edges.iter().all(|&e| rep.edge_periodic(e)) {
            continue;
        }
        if s.edges.len() != 1 {
            return false;
        }
        let e = s.edges[0];
        let img = &rep.edge_image[e.0 as usize];
        if img.edges[0] != OEdge::fwd(e) || img.edges[1..].iter().any(|o| o.id == e) {
            return false;
        }
        let term = rep.graph.edges[e.0 as usize].to;
        if !rep.vertex_periodic(term) {
            return false;
        }
        // term lies in some lower element equal to its own core
        let mut found = false;
        for r in 0..si {
            let mask: Vec<bool> = (0..n).map(|k| h[k] > 0 && h[k] <= r + 1).collect();
            let in_it = rep
                .graph
                .edges
                .iter()
                .enumerate()
                .any(|(k, d)| mask[k] && (d.from == term || d.to == term));
            if in_it && rep.core_mask(&mask) == mask {
                found = true;
                break;
            }
        }
        if !found {
            return false;
        }
    }
    true
}

/// The core of each filtration element is a filtration element.
pub fn verify_f(rep: &TopRep) -> bool {
    let h = rep.heights();
    let n = rep.graph.n_edges();
    let prefixes: Vec<Vec<bool>> = (1..=rep.filtration.strata.len())
        .map(|r| (0..n).map(|k| h[k] > 0 && h[k] <= r).collect())
        .collect();
    for mask in &prefixes {
        let core = rep.core_mask(mask);
        if core.iter().all(|&x| !x) {
            continue; // trivial core
        }
        if !prefixes.iter().any(|p| p == &core) {
            return false;
        }
    }
    true
}

fn turn_key(a: OEdge, b: OEdge) -> (u32, bool, u32, bool) {
    let ka = (a.id.0, a.rev);
    let kb = (b.id.0, b.rev);
    if ka <= kb {
        (ka.0, ka.1, kb.0, kb.1)
    } else {
        (kb.0, kb.1, ka.0, ka.1)
    }
}

/// The root-free root of a closed edge path: `p = w^k` with maximal `k`.
fn path_root(p: &Path) -> (Path, i64) {
    let n = p.len();
    for d in 1..=n {
        if n % d != 0 {
            continue;
        }
        let w = p.subpath(0, d);
        let mut ok = true;
        for i in (d..n).step_by(d) {
            if p.edges[i..i + d] != w.edges[..] {
                ok = false;
                break;
            }
        }
        if ok {
            return (w, (n / d) as i64);
        }
    }
    (p.clone(), 1)
}

// ---------------------------------------------------------------------------
// Subgraph components (for RTT-ii and the normalization passes).
// ---------------------------------------------------------------------------

pub(crate) struct SubgraphComponent {
    pub(crate) verts: Vec<VertexId>,
    pub(crate) edges: Vec<OEdge>, // one orientation per edge
    pub(crate) tree: BTreeMap<VertexId, Path>,
}

impl SubgraphComponent {
    pub(crate) fn path_between(&self, a: VertexId, b: VertexId) -> Option<Path> {
        let pa = self.tree.get(&a)?;
        let pb = self.tree.get(&b)?;
        Some(pa.reversed().concat(pb).tightened())
    }

    pub(crate) fn pi1_loops(&self, g: &MarkedGraph, root: VertexId) -> Vec<Path> {
        let to_root = self.tree.get(&root).cloned().unwrap_or_else(Path::empty);
        let tree_ids: BTreeSet<u32> = self
            .tree
            .values()
            .flat_map(|p| p.edges.iter().map(|o| o.id.0))
            .collect();
        let mut out = Vec::new();
        for &o in &self.edges {
            if tree_ids.contains(&o.id.0) {
                continue;
            }
            let pa = self.tree.get(&g.from(o));
            let pb = self.tree.get(&g.to(o));
            if let (Some(pa), Some(pb)) = (pa, pb) {
                let l = to_root
                    .reversed()
                    .concat(pa)
                    .concat(&Path::one(o))
                    .concat(&pb.reversed())
                    .concat(&to_root)
                    .tightened();
                if !l.is_empty() {
                    out.push(l);
                }
            }
        }
        out
    }
}

/// Components of the subgraph spanned by `edges` (plus isolated vertices of
/// those edges), each with a spanning tree rooted at its first vertex.
pub(crate) fn subgraph_components(g: &MarkedGraph, edges: &[bool]) -> Vec<SubgraphComponent> {
    let mut seen = vec![false; g.n_verts];
    let mut comps = Vec::new();
    for v0 in 0..g.n_verts {
        let on_sub = (0..g.n_edges()).any(|i| {
            edges[i]
                && (g.edges[i].from == VertexId(v0 as u32) || g.edges[i].to == VertexId(v0 as u32))
        });
        if seen[v0] || !on_sub {
            continue;
        }
        let root = VertexId(v0 as u32);
        let mut tree: BTreeMap<VertexId, Path> = BTreeMap::new();
        tree.insert(root, Path::empty());
        let mut verts = vec![root];
        seen[v0] = true;
        let mut queue = VecDeque::from([root]);
        let mut comp_edges: Vec<OEdge> = Vec::new();
        while let Some(v) = queue.pop_front() {
            for o in g.out_edges(v) {
                if !edges[o.id.0 as usize] {
                    continue;
                }
                if !o.rev {
                    comp_edges.push(OEdge::fwd(o.id));
                }
                let w = g.to(o);
                if !seen[w.0 as usize] {
                    seen[w.0 as usize] = true;
                    let pw = tree[&v].concat(&Path::one(o));
                    tree.insert(w, pw);
                    verts.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp_edges.sort_by_key(|o| o.id.0);
        comp_edges.dedup_by_key(|o| o.id.0);
        comps.push(SubgraphComponent {
            verts,
            edges: comp_edges,
            tree,
        });
    }
    comps
}

fn subgraph_has_cycle(g: &MarkedGraph, edges: &[bool]) -> bool {
    // union-find: a cycle appears iff an edge joins two already-joined verts
    let mut uf: Vec<u32> = (0..g.n_verts as u32).collect();
    fn find(uf: &mut Vec<u32>, x: u32) -> u32 {
        if uf[x as usize] != x {
            let r = find(uf, uf[x as usize]);
            uf[x as usize] = r;
        }
        uf[x as usize]
    }
    for i in 0..g.n_edges() {
        if !edges[i] {
            continue;
        }
        let (a, b) = (g.edges[i].from.0, g.edges[i].to.0);
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra == rb {
            return true;
        }
        uf[ra as usize] = rb;
    }
    false
}

fn tarjan_sccs(adj: &[BTreeSet<usize>]) -> Vec<Vec<usize>> {
    // iterative Tarjan; SCCs emitted in reverse topological order
    // (sinks first), which is exactly filtration order
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut counter = 0usize;
    let mut out: Vec<Vec<usize>> = Vec::new();
    #[derive(Clone)]
    enum Frame {
        Enter(usize),
        Resume(usize, usize),
    }
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut call: Vec<Frame> = vec![Frame::Enter(start)];
        while let Some(f) = call.pop() {
            match f {
                Frame::Enter(v) => {
                    index[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push(Frame::Resume(v, 0));
                }
                Frame::Resume(v, k) => {
                    let neigh: Vec<usize> = adj[v].iter().copied().collect();
                    let mut resumed = false;
                    for (i, &w) in neigh.iter().enumerate().skip(k) {
                        if index[w] == usize::MAX {
                            call.push(Frame::Resume(v, i + 1));
                            call.push(Frame::Enter(w));
                            resumed = true;
                            break;
                        } else if on_stack[w] {
                            low[v] = low[v].min(index[w]);
                        }
                    }
                    if resumed {
                        continue;
                    }
                    if low[v] == index[v] {
                        let mut scc = Vec::new();
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            scc.push(w);
                            if w == v {
                                break;
                            }
                        }
                        scc.sort();
                        out.push(scc);
                    } else if let Some(Frame::Resume(parent, _)) = call.last().cloned() {
                        low[parent] = low[parent].min(low[v]);
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The train track algorithm.
// ---------------------------------------------------------------------------

/// A log entry per improvement iteration: the move taken and Λ afterwards.
#[derive(Clone, Debug)]
pub struct LambdaLogEntry {
    pub step: String,
    pub lambda: Vec<PFValue>,
}

pub struct RttOutcome {
    pub rep: TopRep,
    pub log: Vec<LambdaLogEntry>,
}

/// Produce a relative train track representative of `phi`. If `systems` is
/// given (an ascending chain of phi-invariant free factor systems), each is
/// realized by a filtration element of the output.
pub fn rtt(phi: &Automorphism, systems: &[FreeFactorSystem]) -> Result<RttOutcome> {
    let mut rep = if systems.is_empty() {
        TopRep::from_automorphism(phi)?
    } else {
        realize_systems(phi, systems)?
    };
    rep.cleanup()?;
    let mut log = vec![LambdaLogEntry {
        step: "initial".into(),
        lambda: rep.lambda(),
    }];
    let cap = 500usize;
    let plateau_cap = 200usize;
    let mut plateau = 0usize;
    for _ in 0..cap {
        let before = rep.lambda();
        let Some(step) = rep.improve_once()? else {
            // success: validate and return
            rep.check_structure()?;
            if !rep.represents(phi) {
                return Err(Error::Internal(
                    "train track output no longer represents the input class".into(),
                ));
            }
            for (k, sys) in systems.iter().enumerate() {
                let cls = subgraph_class(&rep, &rep.tracked[k]);
                if !(cls.carried_by(sys) && sys.carried_by(&cls)) {
                    return Err(Error::Internal(
                        "a requested invariant system is no longer realized".into(),
                    ));
                }
            }
            return Ok(RttOutcome { rep, log });
        };
        rep.cleanup()?;
        let after = rep.lambda();
        let ord = cmp_lambda_seq(&after, &before);
        if ord == Ordering::Greater {
            return Err(Error::Internal(format!(
                "Λ increased across `{step}` — the well-ordering argument is violated"
            )));
        }
        // a single fold can plateau while a cancellation is being realized
        // across several folds, but unbounded plateaus mean no progress
        if ord == Ordering::Less {
            plateau = 0;
        } else {
            plateau += 1;
            if plateau > plateau_cap {
                return Err(Error::Budget(format!(
                    "Λ plateaued for {plateau_cap} iterations (last step: `{step}`)"
                )));
            }
        }
        log.push(LambdaLogEntry {
            step,
            lambda: after,
        });
    }
    Err(Error::Budget(format!(
        "train track loop did not converge within {cap} iterations"
    )))
}

/// The free factor system `[G_S]` of a subgraph.
/// The representative of the k-th iterate: same marked graph, vertex and
/// edge maps composed k times, strata recomputed for the new crossing
/// digraph.
pub fn pow_rep(rep: &TopRep, k: usize) -> Result<TopRep> {
    if k == 0 {
        return Err(Error::Input("iterate exponent must be at least 1".into()));
    }
    let mut out = rep.clone();
    for v in 0..out.graph.n_verts {
        let mut w = VertexId(v as u32);
        for _ in 0..k {
            w = rep.vertex_image[w.0 as usize];
        }
        out.vertex_image[v] = w;
    }
    for e in 0..out.graph.n_edges() {
        out.edge_image[e] = rep.map_path_pow(&rep.edge_image[e], k - 1);
    }
    let required = out.tracked.clone();
    out.refine(&required)?;
    out.check_structure()?;
    Ok(out)
}

pub fn subgraph_class(rep: &TopRep, edges: &[bool]) -> FreeFactorSystem {
    let comps = subgraph_components(&rep.graph, edges);
    let mut groups = Vec::new();
    for c in &comps {
        let root = c.verts[0];
        let words: Vec<Word> = c
            .pi1_loops(&rep.graph, root)
            .iter()
            .map(|p| rep.graph.path_label(p))
            .filter(|w| !w.is_empty())
            .collect();
        if !words.is_empty() {
            groups.push(words);
        }
    }
    FreeFactorSystem::from_groups(rep.rank(), &groups)
}

/// Build a representative realizing nested invariant systems: a "spider"
/// with one sub-rose per component (joined by connector edges), marked
/// through the joint Whitehead normalization.
fn realize_systems(phi: &Automorphism, systems: &[FreeFactorSystem]) -> Result<TopRep> {
    let rank = phi.rank;
    for s in systems {
        if !s.is_invariant(phi) {
            return Err(Error::Input("system is not invariant".into()));
        }
    }
    let refs: Vec<&FreeFactorSystem> = systems.iter().collect();
    let (theta, supports) = crate::ffs::aligned_letter_supports(rank, &refs)?;
    // ψ = Θ φ Θ⁻¹ acts on the letter systems
    let theta_inv = theta.inverse()?;
    let psi = theta.compose(phi).compose(&theta_inv);
    // flatten: list of (level, support) sorted by level then support
    let mut comps: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    for (li, level) in supports.iter().enumerate() {
        for s in level {
            comps.push((li, s.clone()));
        }
    }
    // nested check and dedup across levels
    comps.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1).reverse()));
    comps.dedup_by(|a, b| a.1 == b.1);
    // Build the graph: base vertex ⋆, one satellite vertex per *minimal*
    // membership chain; for simplicity each component keeps its own
    // satellite and letters live at the satellite of the smallest component
    // containing them.
    let mut letter_home: Vec<Option<usize>> = vec![None; rank]; // comp index
    for (ci, (_, sup)) in comps.iter().enumerate() {
        for &l in sup {
            if letter_home[l].is_none() {
                letter_home[l] = Some(ci);
            }
        }
    }
    let mut edges: Vec<EdgeData> = Vec::new();
    let mut n_verts = 1usize;
    let mut sat: Vec<VertexId> = Vec::new(); // per comp
    let mut conn: Vec<EdgeId> = Vec::new(); // connector edge per comp
    for (ci, _) in comps.iter().enumerate() {
        let v = VertexId(n_verts as u32);
        n_verts += 1;
        sat.push(v);
        let id = EdgeId(edges.len() as u32);
        conn.push(id);
        edges.push(EdgeData {
            from: VertexId(0),
            to: v,
            label: Word::identity(),
            name: format!("t{ci}"),
        });
    }
    let mut loop_edge: Vec<Option<EdgeId>> = vec![None; rank];
    for l in 0..rank {
        let id = EdgeId(edges.len() as u32);
        let home = letter_home[l];
        let at = home.map(|c| sat[c]).unwrap_or(VertexId(0));
        loop_edge[l] = Some(id);
        edges.push(EdgeData {
            from: at,
            to: at,
            // marking through Θ: this loop reads Θ⁻¹(x_l)
            label: theta_inv.apply(&Word::letter(Letter::gen_pos(l))),
            name: Letter::gen_pos(l).to_char().to_string(),
        });
    }
    // base loops: ν_i spells Θ(x_i) through connectors and loops
    let spell = |w: &Word| -> Path {
        let mut p = Path::empty();
        for &l in &w.0 {
            let e = loop_edge[l.gen()].unwrap();
            let home = letter_home[l.gen()];
            let step = match home {
                Some(c) => {
                    let t = Path::one(OEdge::fwd(conn[c]));
                    t.concat(&Path::one(OEdge {
                        id: e,
                        rev: !l.is_positive(),
                    }))
                    .concat(&t.reversed())
                }
                None => Path::one(OEdge {
                    id: e,
                    rev: !l.is_positive(),
                }),
            };
            p = p.concat(&step);
        }
        p.tightened()
    };
    let base_loops: Vec<Path> = (0..rank)
        .map(|i| spell(&theta.apply(&Word::letter(Letter::gen_pos(i)))))
        .collect();
    let graph = MarkedGraph {
        rank,
        n_verts,
        edges,
        base: VertexId(0),
        base_loops,
    };
    // the map: components permute under ψ; satellites follow, loops map to
    // spelled images with the component conjugator absorbed into connectors
    let comp_group = |ci: usize| -> Vec<Word> {
        comps[ci]
            .1
            .iter()
            .map(|&l| Word::letter(Letter::gen_pos(l)))
            .collect()
    };
    let mut edge_image: Vec<Path> = vec![Path::empty(); graph.n_edges()];
    let mut vertex_image: Vec<VertexId> = vec![VertexId(0); n_verts];
    let mut conj: Vec<Word> = vec![Word::identity(); comps.len()];
    let mut target: Vec<usize> = vec![0; comps.len()];
    for ci in 0..comps.len() {
        let group = comp_group(ci);
        let imgs: Vec<Word> = group.iter().map(|w| psi.apply(w)).collect();
        // find the component whose letter set carries the image and a
        // conjugator w with ψ(⟨L_ci⟩) = w ⟨L_cj⟩ w⁻¹
        let mut found = None;
        for (cj, (_, supj)) in comps.iter().enumerate() {
            if let Some(w) = conjugator_into_letters(&imgs, supj) {
                found = Some((cj, w));
                break;
            }
        }
        let (cj, w) = found.ok_or_else(|| {
            Error::Internal("invariant system component permutation not found".into())
        })?;
        target[ci] = cj;
        conj[ci] = w;
        vertex_image[sat[ci].0 as usize] = sat[cj];
    }
    // loop images
    let spell_inner = |w: &Word, _at: usize| -> Path {
        // spell a word of component letters as a loop at the satellite:
        // the loops at the satellite are exactly its letters
        let mut p = Path::empty();
        for &l in &w.0 {
            let e = loop_edge[l.gen()].unwrap();
            p = p.concat(&Path::one(OEdge {
                id: e,
                rev: !l.is_positive(),
            }));
        }
        p.tightened()
    };
    for l in 0..rank {
        let e = loop_edge[l].unwrap();
        match letter_home[l] {
            Some(ci) => {
                let cj = target[ci];
                let u = conj[ci]
                    .inverse()
                    .concat(&psi.apply(&Word::letter(Letter::gen_pos(l))))
                    .concat(&conj[ci]);
                // u must be a word in cj's letters
                if u.0.iter().any(|x| !comps[cj].1.contains(&x.gen())) {
                    return Err(Error::Internal(
                        "conjugated image leaves the target component".into(),
                    ));
                }
                edge_image[e.0 as usize] = spell_inner(&u, cj);
            }
            None => {
                edge_image[e.0 as usize] = spell(&psi.apply(&Word::letter(Letter::gen_pos(l))));
            }
        }
    }
    // connector images: ⋆ → sat[cj] spelling the conjugator
    for ci in 0..comps.len() {
        let cj = target[ci];
        let p = spell(&conj[ci]).concat(&Path::one(OEdge::fwd(conn[cj])));
        edge_image[conn[ci].0 as usize] = p.tightened();
    }
    let all: Vec<EdgeId> = (0..graph.n_edges()).map(|i| EdgeId(i as u32)).collect();
    let n_all = graph.n_edges();
    let mut rep = TopRep {
        graph,
        vertex_image,
        edge_image,
        filtration: Filtration {
            strata: vec![Stratum {
                edges: all,
                kind: StratumKind::Mixed,
                matrix: Vec::new(),
                pf: None,
            }],
        },
        tracked: Vec::new(),
    };
    // tracked subgraphs: one per system, innermost first
    for level in &supports {
        let mut set = vec![false; n_all];
        for sup in level {
            for &l in sup {
                set[loop_edge[l].unwrap().0 as usize] = true;
            }
        }
        rep.tracked.push(set);
    }
    rep.tighten_all();
    for set in &rep.tracked {
        for i in 0..n_all {
            if set[i]
                && rep.edge_image[i]
                    .edges
                    .iter()
                    .any(|o| !set[o.id.0 as usize])
            {
                return Err(Error::Internal(
                    "realized system subgraph is not invariant".into(),
                ));
            }
        }
    }
    if !rep.represents(phi) {
        return Err(Error::Internal(
            "system realization does not represent the class".into(),
        ));
    }
    Ok(rep)
}

/// If `⟨imgs⟩ = w·⟨letters⟩·w⁻¹`, return `w`.
fn conjugator_into_letters(imgs: &[Word], letters: &BTreeSet<usize>) -> Option<Word> {
    // candidate w: the common prefix that cyclically reduces all images into
    // the letter subgroup
    let mut candidate: Option<Word> = None;
    for img in imgs {
        let (core, u) = img.cyclic_reduce();
        if core.0.iter().any(|l| !letters.contains(&l.gen())) {
            return None;
        }
        match &candidate {
            None => candidate = Some(u),
            Some(c) => {
                // allow differing tails inside the subgroup: c⁻¹·u must be
                // a word in the letters
                let diff = c.inverse().concat(&u);
                if diff.0.iter().any(|l| !letters.contains(&l.gen())) {
                    // try trimming toward the common part
                    let mut shorter = c.clone();
                    loop {
                        let d = shorter.inverse().concat(&u);
                        if d.0.iter().all(|l| letters.contains(&l.gen())) {
                            break;
                        }
                        if shorter.is_empty() {
                            return None;
                        }
                        shorter = Word(shorter.0[..shorter.len() - 1].to_vec());
                    }
                    candidate = Some(shorter);
                }
            }
        }
    }
    let w = candidate.unwrap_or_else(Word::identity);
    // verify
    for img in imgs {
        let back = w.inverse().concat(img).concat(&w);
        if back.0.iter().any(|l| !letters.contains(&l.gen())) {
            return None;
        }
    }
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pf::PFValue;
    use crate::words::Word;

    fn aut(rank: usize, imgs: &[&str]) -> Automorphism {
        Automorphism::new(
            rank,
            imgs.iter().map(|s| Word::parse(s).unwrap()).collect(),
        )
        .unwrap()
    }

    fn refined(phi: &Automorphism) -> TopRep {
        let mut rep = TopRep::from_automorphism(phi).unwrap();
        rep.refine(&[]).unwrap();
        rep.check_structure().unwrap();
        rep
    }

    /// A marked graph with two vertices: loops a, b at the base u and two
    /// edges c, d from a second vertex v to u; c carries the trivial marking
    /// label so the third basis element is read along c̄·d.
    fn two_vertex_fixture() -> TopRep {
        use crate::words::Letter;
        let u = VertexId(0);
        let v = VertexId(1);
        let e = |i: u32| EdgeId(i);
        let graph = MarkedGraph {
            rank: 3,
            n_verts: 2,
            edges: vec![
                EdgeData {
                    from: u,
                    to: u,
                    label: Word::letter(Letter::gen_pos(0)),
                    name: "a".into(),
                },
                EdgeData {
                    from: u,
                    to: u,
                    label: Word::letter(Letter::gen_pos(1)),
                    name: "b".into(),
                },
                EdgeData {
                    from: v,
                    to: u,
                    label: Word::identity(),
                    name: "c".into(),
                },
                EdgeData {
                    from: v,
                    to: u,
                    label: Word::letter(Letter::gen_pos(2)),
                    name: "d".into(),
                },
            ],
            base: u,
            base_loops: vec![
                Path::one(OEdge::fwd(e(0))),
                Path::one(OEdge::fwd(e(1))),
                Path::from_edges(vec![OEdge::fwd(e(2)).reversed(), OEdge::fwd(e(3))], false),
            ],
        };
        // f(a)=a, f(b)=ba², f(c)=ca, f(d)=db; both vertices fixed.
        let mut rep = TopRep {
            graph,
            vertex_image: vec![u, v],
            edge_image: vec![
                Path::one(OEdge::fwd(e(0))),
                Path::from_edges(
                    vec![OEdge::fwd(e(1)), OEdge::fwd(e(0)), OEdge::fwd(e(0))],
                    false,
                ),
                Path::from_edges(vec![OEdge::fwd(e(2)), OEdge::fwd(e(0))], false),
                Path::from_edges(vec![OEdge::fwd(e(3)), OEdge::fwd(e(1))], false),
            ],
            filtration: Filtration {
                strata: vec![Stratum {
                    edges: (0..4).map(e).collect(),
                    kind: StratumKind::Mixed,
                    matrix: Vec::new(),
                    pf: None,
                }],
            },
            tracked: Vec::new(),
        };
        rep.classify();
        rep.refine(&[]).unwrap();
        rep.check_structure().unwrap();
        rep
    }

    fn kind_of_edge(rep: &TopRep, e: usize) -> &StratumKind {
        let s = rep
            .filtration
            .strata
            .iter()
            .find(|s| s.edges.contains(&EdgeId(e as u32)))
            .unwrap();
        &s.kind
    }

    #[test]
    fn transition_matrix_frozen_examples() {
        // a↦ab, b↦bab: one exponential stratum, growth (3+√5)/2 ∈ (2,3)
        let rep = refined(&aut(2, &["ab", "bab"]));
        assert_eq!(rep.filtration.strata.len(), 1);
        let s = &rep.filtration.strata[0];
        assert_eq!(s.kind, StratumKind::Eg);
        let mut m = s.matrix.clone();
        m.sort();
        assert_eq!(m, vec![vec![1, 1], vec![1, 2]]);
        let lam = rep.lambda();
        assert_eq!(lam.len(), 1);
        assert_eq!(
            lam[0].cmp_exact(&PFValue::of_matrix(&vec![vec![2]])),
            std::cmp::Ordering::Greater
        );
        assert_eq!(
            lam[0].cmp_exact(&PFValue::of_matrix(&vec![vec![3]])),
            std::cmp::Ordering::Less
        );

        // a↦ab, b↦a: growth the golden ratio, strictly between 1 and 2
        let rep = refined(&aut(2, &["ab", "a"]));
        let lam = rep.lambda();
        assert_eq!(
            lam[0].cmp_exact(&PFValue::of_matrix(&vec![vec![1, 1], vec![1, 0]])),
            std::cmp::Ordering::Equal
        );
        assert!(lam[0].gt_one());
        assert_eq!(
            lam[0].cmp_exact(&PFValue::of_matrix(&vec![vec![2]])),
            std::cmp::Ordering::Less
        );
    }

    #[test]
    fn identity_splits_into_fixed_strata() {
        let rep = refined(&aut(2, &["a", "b"]));
        assert_eq!(rep.filtration.strata.len(), 2);
        for s in &rep.filtration.strata {
            assert_eq!(s.kind, StratumKind::NegFixed);
        }
        let report = rep.check_rtt().unwrap();
        assert!(report.pass);
        assert!(report.eg_strata.is_empty());
    }

    #[test]
    fn non_exponential_tower_classification() {
        let rep = refined(&aut(4, &["a", "baa", "ca", "db"]));
        assert_eq!(rep.filtration.strata.len(), 4);
        assert_eq!(*kind_of_edge(&rep, 0), StratumKind::NegFixed);
        match kind_of_edge(&rep, 1) {
            StratumKind::NegLinear { w, d } => {
                assert_eq!(w.len(), 1);
                assert_eq!(*d, 2);
            }
            k => panic!("edge b: expected a linear stratum, got {k:?}"),
        }
        match kind_of_edge(&rep, 2) {
            StratumKind::NegLinear { d, .. } => assert_eq!(*d, 1),
            k => panic!("edge c: expected a linear stratum, got {k:?}"),
        }
        assert_eq!(*kind_of_edge(&rep, 3), StratumKind::NegNonlinear);
        assert!(rep.check_rtt().unwrap().pass);
    }

    #[test]
    fn exponential_rose_is_already_train_track() {
        let rep = refined(&aut(2, &["ab", "a"]));
        let report = rep.check_rtt().unwrap();
        assert!(report.pass, "{report:?}");
        let out = rtt(&aut(2, &["ab", "a"]), &[]).unwrap();
        assert_eq!(out.rep.filtration.strata.len(), 1);
        assert!(out.rep.represents(&aut(2, &["ab", "a"])));
    }

    #[test]
    fn rtt_repairs_a_folded_representative() {
        // conjugating the first basis image by a plants an illegal turn in
        // the rose representative; the growth drops back to 2 after repair
        let phi = aut(2, &["aabA", "a"]);
        let rose = refined(&phi);
        assert!(!rose.check_rtt().unwrap().pass);
        let out = rtt(&phi, &[]).unwrap();
        assert!(out.rep.check_rtt().unwrap().pass);
        assert!(out.rep.represents(&phi));
        let first = &out.log.first().unwrap().lambda;
        let last = &out.log.last().unwrap().lambda;
        assert_eq!(cmp_lambda_seq(last, first), std::cmp::Ordering::Less);
        let lam = out.rep.lambda();
        assert_eq!(lam.len(), 1);
        assert_eq!(
            lam[0].cmp_exact(&PFValue::of_matrix(&vec![vec![1, 1], vec![1, 0]])),
            std::cmp::Ordering::Equal
        );
    }

    #[test]
    fn invariant_system_is_realized_and_kept() {
        let phi = aut(3, &["ab", "a", "c"]);
        let sys = FreeFactorSystem::from_groups(
            3,
            &[vec![Word::parse("a").unwrap(), Word::parse("b").unwrap()]],
        );
        let out = rtt(&phi, std::slice::from_ref(&sys)).unwrap();
        assert!(out.rep.check_rtt().unwrap().pass);
        assert!(out.rep.represents(&phi));
        assert_eq!(out.rep.tracked.len(), 1);
        let cls = subgraph_class(&out.rep, &out.rep.tracked[0]);
        assert!(cls.carried_by(&sys) && sys.carried_by(&cls));
    }

    #[test]
    fn two_vertex_marking_and_induced_class() {
        let rep = two_vertex_fixture();
        let ind = rep.induced_outer().unwrap();
        let expect = aut(3, &["a", "baa", "Acb"]);
        assert!(ind.outer_equal(&expect).is_some());
        assert!(rep.represents(&expect));
        assert_eq!(rep.filtration.strata.len(), 4);
        assert!(rep.check_rtt().unwrap().pass);
    }

    #[test]
    fn normalization_subdivides_interior_fixed_points() {
        // the inner class of b: f(a) = b·a·b̄ crosses a at an interior
        // fixed point
        let phi = aut(2, &["baB", "b"]);
        let mut rep = rtt(&phi, &[]).unwrap().rep;
        let before = rep.induced_outer().unwrap();
        let report = normalize(&mut rep).unwrap();
        assert!(verify_v(&rep));
        assert!(report.satisfied["V"]);
        assert!(rep.induced_outer().unwrap().outer_equal(&before).is_some());
    }

    #[test]
    fn normalization_of_tower_reports_all_satisfied() {
        let phi = aut(4, &["a", "baa", "ca", "db"]);
        let mut rep = rtt(&phi, &[]).unwrap().rep;
        let report = normalize(&mut rep).unwrap();
        for (k, v) in &report.satisfied {
            assert!(*v, "property {k} unsatisfied: {:?}", report.notes);
        }
        assert!(rep.represents(&phi));
    }

    #[test]
    fn terminal_slide_reaches_a_periodic_vertex() {
        use crate::words::Letter;
        // three vertices; the image of vertex 1 is vertex 2, so the edge
        // p: 0→1 with f(p) = p·q has a non-periodic terminal vertex
        let v0 = VertexId(0);
        let v1 = VertexId(1);
        let v2 = VertexId(2);
        let e = |i: u32| EdgeId(i);
        let graph = MarkedGraph {
            rank: 2,
            n_verts: 3,
            edges: vec![
                EdgeData {
                    from: v0,
                    to: v0,
                    label: Word::letter(Letter::gen_pos(0)),
                    name: "a".into(),
                },
                EdgeData {
                    from: v2,
                    to: v2,
                    label: Word::letter(Letter::gen_pos(1)),
                    name: "b".into(),
                },
                EdgeData {
                    from: v0,
                    to: v1,
                    label: Word::identity(),
                    name: "p".into(),
                },
                EdgeData {
                    from: v1,
                    to: v2,
                    label: Word::identity(),
                    name: "q".into(),
                },
            ],
            base: v0,
            base_loops: vec![
                Path::one(OEdge::fwd(e(0))),
                Path::from_edges(
                    vec![
                        OEdge::fwd(e(2)),
                        OEdge::fwd(e(3)),
                        OEdge::fwd(e(1)),
                        OEdge::fwd(e(3)).reversed(),
                        OEdge::fwd(e(2)).reversed(),
                    ],
                    false,
                ),
            ],
        };
        let mut rep = TopRep {
            graph,
            vertex_image: vec![v0, v2, v2],
            edge_image: vec![
                Path::one(OEdge::fwd(e(0))),
                Path::one(OEdge::fwd(e(1))),
                Path::from_edges(vec![OEdge::fwd(e(2)), OEdge::fwd(e(3))], false),
                Path::one(OEdge::fwd(e(1))),
            ],
            filtration: Filtration {
                strata: vec![Stratum {
                    edges: (0..4).map(e).collect(),
                    kind: StratumKind::Mixed,
                    matrix: Vec::new(),
                    pf: None,
                }],
            },
            tracked: Vec::new(),
        };
        rep.classify();
        rep.refine(&[]).unwrap();
        rep.check_structure().unwrap();
        let before = rep.induced_outer().unwrap();
        let report = normalize(&mut rep).unwrap();
        for (k, v) in &report.satisfied {
            assert!(*v, "property {k} unsatisfied: {:?}", report.notes);
        }
        assert!(rep.induced_outer().unwrap().outer_equal(&before).is_some());
        assert!(report.steps.iter().any(|s| s.contains("slide")));
    }

    #[test]
    fn iterate_of_the_swap_is_trivial() {
        let rep = refined(&aut(2, &["b", "a"]));
        let sq = pow_rep(&rep, 2).unwrap();
        assert!(sq.represents(&aut(2, &["a", "b"])));
        assert_eq!(sq.filtration.strata.len(), 2);
        for s in &sq.filtration.strata {
            assert_eq!(s.kind, StratumKind::NegFixed);
        }
    }
}
