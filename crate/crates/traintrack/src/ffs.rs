//! Free factor systems: the carrying partial order, meets via graph
//! pullbacks, Whitehead/Gersten complexity minimization, minimal free factor
//! supports, and the descending-meet search for invariant systems.
//!
//! A system is stored as a list of Stallings class graphs (unbased cores)
//! over the rose, one per component conjugacy class. All comparisons reduce
//! to label-preserving morphisms and pullbacks of those cores.

use crate::auto::Automorphism;
use crate::graphs::{pullback_core, stallings_graph_class, GGraph};
use crate::words::{Letter, Word};
use crate::{Error, Result};
use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct FreeFactorSystem {
    pub rank: usize,
    pub components: Vec<GGraph>,
}

impl PartialEq for FreeFactorSystem {
    fn eq(&self, other: &Self) -> bool {
        self.rank == other.rank && self.signature() == other.signature()
    }
}
impl Eq for FreeFactorSystem {}

impl FreeFactorSystem {
    pub fn empty(rank: usize) -> FreeFactorSystem {
        FreeFactorSystem {
            rank,
            components: Vec::new(),
        }
    }

    /// The improper system `[F_n]`.
    pub fn full(rank: usize) -> FreeFactorSystem {
        let basis: Vec<Word> = (0..rank)
            .map(|i| Word::letter(Letter::gen_pos(i)))
            .collect();
        FreeFactorSystem::from_groups(rank, &[basis])
    }

    /// One component per generating set; trivial components are dropped.
    pub fn from_groups(rank: usize, groups: &[Vec<Word>]) -> FreeFactorSystem {
        let mut sys = FreeFactorSystem {
            rank,
            components: groups
                .iter()
                .filter(|g| !g.iter().all(|w| w.is_empty()))
                .map(|g| stallings_graph_class(g))
                .collect(),
        };
        sys.canonicalize();
        sys
    }

    pub fn from_components(rank: usize, components: Vec<GGraph>) -> FreeFactorSystem {
        let mut sys = FreeFactorSystem { rank, components };
        sys.canonicalize();
        sys
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Is this `[F_n]` itself (a single component carrying everything)?
    pub fn is_full(&self) -> bool {
        self.components.len() == 1 && self.components[0].rank() == self.rank
    }

    pub fn is_proper(&self) -> bool {
        !self.is_full()
    }

    /// Total edgelet count over the component cores (Gersten complexity).
    pub fn complexity(&self) -> usize {
        self.components.iter().map(|g| g.edges.len()).sum()
    }

    pub fn component_ranks(&self) -> Vec<usize> {
        self.components.iter().map(|g| g.rank()).collect()
    }

    /// A generating basis for each component (based at an arbitrary vertex;
    /// well-defined up to conjugacy).
    pub fn component_bases(&self) -> Vec<Vec<Word>> {
        self.components.iter().map(component_basis).collect()
    }

    fn signature(&self) -> Vec<Vec<u64>> {
        let mut sigs: Vec<_> = self.components.iter().map(|g| g.canonical()).collect();
        sigs.sort();
        sigs
    }

    /// Sort components canonically, drop trivial ones and duplicates, and
    /// prune any component conjugate into another.
    fn canonicalize(&mut self) {
        self.components.retain(|g| !g.edges.is_empty());
        let mut keyed: Vec<(Vec<u64>, GGraph)> = self
            .components
            .drain(..)
            .map(|g| (g.canonical(), g))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        let n = keyed.len();
        let mut drop = vec![false; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && !drop[j] && !drop[i] && keyed[i].1.morphism_exists(&keyed[j].1) {
                    // i conjugate into j; keep the larger unless they are equal
                    // (equality already removed by dedup).
                    drop[i] = true;
                }
            }
        }
        self.components = keyed
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop[*i])
            .map(|(_, kg)| kg.1)
            .collect();
    }

    /// `self ⊑ other`: every component conjugate into a component of `other`.
    pub fn carried_by(&self, other: &FreeFactorSystem) -> bool {
        self.components
            .iter()
            .all(|c| other.components.iter().any(|d| c.morphism_exists(d)))
    }

    /// Apply an automorphism to every component.
    pub fn apply(&self, phi: &Automorphism) -> FreeFactorSystem {
        let groups: Vec<Vec<Word>> = self
            .component_bases()
            .iter()
            .map(|basis| basis.iter().map(|w| phi.apply(w)).collect())
            .collect();
        FreeFactorSystem::from_groups(self.rank, &groups)
    }

    pub fn is_invariant(&self, phi: &Automorphism) -> bool {
        self.apply(phi) == *self
    }

    /// The meet `self ∧ other`: cores of pullback components over all pairs,
    /// deduplicated and pruned.
    pub fn meet(&self, other: &FreeFactorSystem) -> FreeFactorSystem {
        let mut comps = Vec::new();
        for a in &self.components {
            for b in &other.components {
                comps.extend(pullback_core(a, b));
            }
        }
        FreeFactorSystem::from_components(self.rank, comps)
    }

    /// Serialize as one generator-word list per component.
    pub fn to_word_lists(&self) -> Vec<Vec<String>> {
        self.component_bases()
            .iter()
            .map(|basis| basis.iter().map(|w| w.to_string()).collect())
            .collect()
    }

    pub fn from_word_lists(rank: usize, lists: &[Vec<String>]) -> Result<FreeFactorSystem> {
        let mut groups = Vec::new();
        for list in lists {
            let mut g = Vec::new();
            for s in list {
                g.push(
                    Word::parse(s).ok_or_else(|| Error::Input(format!("bad word {s}")))?,
                );
            }
            groups.push(g);
        }
        Ok(FreeFactorSystem::from_groups(rank, &groups))
    }
}

/// A basis of the subgroup of a folded core graph, based at its first vertex.
pub fn component_basis(g: &GGraph) -> Vec<Word> {
    let mut g2 = g.clone();
    if g2.basepoint.is_none() {
        g2.basepoint = g2.edges.first().map(|e| e.from);
    }
    g2.basis_at_basepoint()
}

// ---------------------------------------------------------------------------
// Whitehead minimization.
// ---------------------------------------------------------------------------

/// A type-II Whitehead automorphism determined by a multiplier letter `a`
/// and a set `A` of letters with `a, ā ∉ A`. The generator rule is
/// `y ↦ (a if ȳ∈A else 1) · y · (ā if y∈A else 1)`.
fn whitehead_auto(rank: usize, a: Letter, set: &BTreeSet<Letter>) -> Automorphism {
    let mut images = Vec::with_capacity(rank);
    for i in 0..rank {
        let y = Letter::gen_pos(i);
        let mut w = Vec::new();
        if set.contains(&y.inverse()) {
            w.push(a);
        }
        w.push(y);
        if set.contains(&y) {
            w.push(a.inverse());
        }
        images.push(Word::reduce_vec(w));
    }
    Automorphism { rank, images }
}

fn all_whitehead_autos(rank: usize) -> Vec<Automorphism> {
    let letters: Vec<Letter> = (0..rank)
        .flat_map(|i| [Letter::gen_pos(i), Letter::gen_neg(i)])
        .collect();
    let mut out = Vec::new();
    for &a in &letters {
        let others: Vec<Letter> = letters
            .iter()
            .copied()
            .filter(|&l| l != a && l != a.inverse())
            .collect();
        // all subsets of `others`
        for mask in 0u32..(1u32 << others.len()) {
            if mask == 0 {
                continue; // identity
            }
            let set: BTreeSet<Letter> = others
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &l)| l)
                .collect();
            out.push(whitehead_auto(rank, a, &set));
        }
    }
    out
}

fn system_complexity(comps: &[GGraph]) -> usize {
    comps.iter().map(|g| g.edges.len()).sum()
}

fn apply_to_components(phi: &Automorphism, comps: &[GGraph]) -> Vec<GGraph> {
    comps
        .iter()
        .map(|g| {
            let basis = component_basis(g);
            let imgs: Vec<Word> = basis.iter().map(|w| phi.apply(w)).collect();
            stallings_graph_class(&imgs)
        })
        .collect()
}

/// Greedy steepest-descent over type-II Whitehead automorphisms. By peak
/// reduction (Gersten), a local minimum of the total edgelet count is the
/// global minimum over the `Aut(F_n)`-orbit of the system.
pub fn whitehead_minimize(rank: usize, comps: &[GGraph]) -> (Automorphism, Vec<GGraph>) {
    let moves = all_whitehead_autos(rank);
    let mut theta = Automorphism::identity(rank);
    let mut current: Vec<GGraph> = comps.to_vec();
    let mut best = system_complexity(&current);
    loop {
        let mut improved: Option<(usize, Vec<GGraph>, &Automorphism)> = None;
        for m in &moves {
            let cand = apply_to_components(m, &current);
            let c = system_complexity(&cand);
            if c < best && improved.as_ref().map_or(true, |(bc, _, _)| c < *bc) {
                improved = Some((c, cand, m));
            }
        }
        match improved {
            Some((c, cand, m)) => {
                best = c;
                current = cand;
                theta = m.compose(&theta);
            }
            None => return (theta, current),
        }
    }
}

/// The letters crossed by a component core.
fn letter_support(g: &GGraph) -> BTreeSet<usize> {
    g.edges.iter().map(|e| e.label.0 as usize).collect()
}

/// The minimal free factor system carrying every listed conjugacy class
/// (words as cyclic words, subgroups as class graphs).
pub fn minimal_support(
    rank: usize,
    elements: &[Word],
    subgroups: &[GGraph],
) -> FreeFactorSystem {
    let mut comps: Vec<GGraph> = subgroups.to_vec();
    for w in elements {
        let (core, _) = w.cyclic_reduce();
        if core.is_empty() {
            continue;
        }
        comps.push(stallings_graph_class(&[core]));
    }
    comps.retain(|g| !g.edges.is_empty());
    if comps.is_empty() {
        return FreeFactorSystem::empty(rank);
    }
    let (theta, minimized) = whitehead_minimize(rank, &comps);
    // finest partition of the basis compatible with all supports
    let mut uf: Vec<usize> = (0..rank).collect();
    fn find(uf: &mut Vec<usize>, x: usize) -> usize {
        if uf[x] != x {
            let r = find(uf, uf[x]);
            uf[x] = r;
        }
        uf[x]
    }
    let supports: Vec<BTreeSet<usize>> = minimized.iter().map(letter_support).collect();
    for s in &supports {
        let mut it = s.iter();
        if let Some(&first) = it.next() {
            for &l in it {
                let (a, b) = (find(&mut uf, first), find(&mut uf, l));
                if a != b {
                    uf[a] = b;
                }
            }
        }
    }
    // one free factor per used part, pulled back through Θ
    let theta_inv = theta
        .inverse()
        .expect("whitehead composition is invertible");
    let used: BTreeSet<usize> = supports
        .iter()
        .flat_map(|s| s.iter().copied())
        .map(|l| find(&mut uf, l))
        .collect();
    let mut groups = Vec::new();
    for part_root in used {
        let letters: Vec<usize> = (0..rank)
            .filter(|&l| find(&mut uf, l) == part_root)
            .collect();
        let gens: Vec<Word> = letters
            .iter()
            .map(|&l| theta_inv.apply(&Word::letter(Letter::gen_pos(l))))
            .collect();
        groups.push(gens);
    }
    FreeFactorSystem::from_groups(rank, &groups)
}

/// Search for a φ-invariant free factor system strictly between F0 and F1
/// via the descending chain F ← F ∧ φ(F).
pub fn invariant_ffs_between(
    phi: &Automorphism,
    f0: &FreeFactorSystem,
    f1: &FreeFactorSystem,
) -> Result<Option<FreeFactorSystem>> {
    if !f1.is_proper() {
        return Err(Error::Input("improper system".into()));
    }
    if !f0.carried_by(f1) {
        return Err(Error::Input("F0 is not carried by F1".into()));
    }
    let mut current = f1.clone();
    // Strictly decreasing chains of free factor systems are uniformly
    // bounded; a generous cap guards against cycling bugs.
    for _ in 0..(4 * phi.rank + 4) {
        let image = current.apply(phi);
        if image == current {
            // invariant; proper by construction (descended from proper F1)
            if f0.carried_by(&current) && *f0 != current && !current.is_empty() {
                return Ok(Some(current));
            }
            return Ok(None);
        }
        let next = current.meet(&image);
        if next == current {
            return Ok(Some(current));
        }
        current = next;
        if current.is_empty() || current == *f0 {
            return Ok(None);
        }
    }
    Err(Error::Internal(
        "meet chain failed to stabilize within the chain-length bound".into(),
    ))
}

/// Jointly minimize several systems with one automorphism and report each
/// component as a subset of the basis. Fails if some component is not a free
/// factor (its minimized core is not a sub-rose).
pub fn aligned_letter_supports(
    rank: usize,
    systems: &[&FreeFactorSystem],
) -> Result<(Automorphism, Vec<Vec<BTreeSet<usize>>>)> {
    let mut all: Vec<GGraph> = Vec::new();
    let mut offsets = Vec::new();
    for sys in systems {
        offsets.push((all.len(), sys.components.len()));
        all.extend(sys.components.iter().cloned());
    }
    if all.is_empty() {
        return Ok((Automorphism::identity(rank), vec![Vec::new(); systems.len()]));
    }
    let (theta, minimized) = whitehead_minimize(rank, &all);
    for g in &minimized {
        let verts: BTreeSet<u32> = g
            .edges
            .iter()
            .flat_map(|e| [e.from, e.to])
            .collect();
        let labels = letter_support(g);
        if verts.len() != 1 || g.edges.len() != labels.len() {
            return Err(Error::Input(
                "not a free factor system: a minimized component is not a sub-rose".into(),
            ));
        }
    }
    let mut out = Vec::new();
    for (start, len) in offsets {
        out.push(
            minimized[start..start + len]
                .iter()
                .map(letter_support)
                .collect(),
        );
    }
    Ok((theta, out))
}

/// Brute-force meet oracle: intersects subgroup pairs with an explicitly
/// constructed coset-automaton product (independent of `GGraph::pullback`),
/// walking labeled state pairs and coring the result by hand.
pub fn meet_oracle(f1: &FreeFactorSystem, f2: &FreeFactorSystem) -> FreeFactorSystem {
    let mut comps = Vec::new();
    for a in &f1.components {
        for b in &f2.components {
            comps.extend(product_automaton_cores(a, b));
        }
    }
    FreeFactorSystem::from_components(f1.rank, comps)
}

fn product_automaton_cores(a: &GGraph, b: &GGraph) -> Vec<GGraph> {
    // state space: ordered vertex pairs; transitions on matching letters.
    let mut states: Vec<(u32, u32)> = Vec::new();
    let averts: BTreeSet<u32> = a.edges.iter().flat_map(|e| [e.from, e.to]).collect();
    let bverts: BTreeSet<u32> = b.edges.iter().flat_map(|e| [e.from, e.to]).collect();
    for &p in &averts {
        for &q in &bverts {
            states.push((p, q));
        }
    }
    let idx = |p: u32, q: u32| states.iter().position(|&s| s == (p, q)).unwrap() as u32;
    let mut edges = Vec::new();
    for ea in &a.edges {
        for eb in &b.edges {
            if ea.label == eb.label {
                edges.push(crate::graphs::GEdgelet {
                    from: idx(ea.from, eb.from),
                    to: idx(ea.to, eb.to),
                    label: ea.label,
                });
            }
        }
    }
    let g = GGraph {
        vert_over: vec![crate::graphs::VertexId(0); states.len()],
        edges,
        basepoint: None,
    };
    g.components()
        .into_iter()
        .map(|mut c| {
            c.core(None);
            c
        })
        .filter(|c| !c.edges.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    fn sys(rank: usize, groups: &[&[&str]]) -> FreeFactorSystem {
        let gs: Vec<Vec<Word>> = groups
            .iter()
            .map(|g| g.iter().map(|s| w(s)).collect())
            .collect();
        FreeFactorSystem::from_groups(rank, &gs)
    }

    #[test]
    fn carries_basics() {
        let a = sys(2, &[&["a"]]);
        let ab = sys(2, &[&["a", "b"]]);
        let b = sys(2, &[&["b"]]);
        assert!(a.carried_by(&ab));
        assert!(!a.carried_by(&b));
        let both = sys(2, &[&["a"], &["b"]]);
        assert!(both.carried_by(&ab));
        assert!(!ab.carried_by(&both));
    }

    #[test]
    fn meet_examples() {
        let a = sys(2, &[&["a"]]);
        let b = sys(2, &[&["b"]]);
        assert!(a.meet(&b).is_empty());
        let ab = sys(2, &[&["a", "b"]]);
        assert_eq!(ab.meet(&a), a);
        assert_eq!(a.meet(&a), a);
    }

    #[test]
    fn meet_against_oracle() {
        let cases = [
            (sys(3, &[&["a", "b"]]), sys(3, &[&["b", "c"]])),
            (sys(3, &[&["a"], &["b"]]), sys(3, &[&["a", "b"]])),
            (sys(2, &[&["ab"]]), sys(2, &[&["a"]])),
            (sys(3, &[&["ab", "c"]]), sys(3, &[&["a"], &["c"]])),
        ];
        for (f1, f2) in cases {
            let m = f1.meet(&f2);
            let o = meet_oracle(&f1, &f2);
            assert_eq!(m, o, "meet/oracle mismatch on {f1:?} ∧ {f2:?}");
            assert!(m.carried_by(&f1) && m.carried_by(&f2));
        }
    }

    #[test]
    fn whitehead_conjugate_reduces() {
        // [⟨b a b⁻¹⟩] minimizes to a circle labeled a
        let g2 = stallings_graph_class(&[w("baB")]);
        let (_, min1) = whitehead_minimize(2, &[g2]);
        assert_eq!(system_complexity(&min1), 1);
        // a²b² is already minimal at complexity 4
        let g3 = stallings_graph_class(&[w("aabb")]);
        let (_, min3) = whitehead_minimize(2, &[g3]);
        assert_eq!(system_complexity(&min3), 4);
    }

    #[test]
    fn minimal_support_examples() {
        let s = minimal_support(2, &[w("a")], &[]);
        assert_eq!(s, sys(2, &[&["a"]]));
        let s = minimal_support(2, &[w("a"), w("b")], &[]);
        assert_eq!(s, sys(2, &[&["a"], &["b"]]));
        let s = minimal_support(2, &[w("abAB")], &[]);
        assert!(s.is_full(), "commutator fills F2, got {s:?}");
    }

    #[test]
    fn invariant_search() {
        let phi = Automorphism::new(2, vec![w("a"), w("baa")]).unwrap();
        let f0 = FreeFactorSystem::empty(2);
        let f1 = sys(2, &[&["a"]]);
        let got = invariant_ffs_between(&phi, &f0, &f1).unwrap();
        assert_eq!(got, Some(f1.clone()));

        let psi = Automorphism::new(2, vec![w("ab"), w("bab")]).unwrap();
        let got = invariant_ffs_between(&psi, &f0, &f1).unwrap();
        assert_eq!(got, None);

        let id = Automorphism::identity(2);
        let got = invariant_ffs_between(&id, &f0, &f1).unwrap();
        assert_eq!(got, Some(f1));
    }

    #[test]
    fn aligned_supports_on_nested() {
        let low = sys(3, &[&["a"]]);
        let high = sys(3, &[&["a", "b"]]);
        let (_, supports) = aligned_letter_supports(3, &[&low, &high]).unwrap();
        assert_eq!(supports[0].len(), 1);
        assert_eq!(supports[1].len(), 1);
        assert!(supports[0][0].is_subset(&supports[1][0]));
    }

    #[test]
    fn apply_and_invariance() {
        let phi = Automorphism::new(2, vec![w("a"), w("baa")]).unwrap();
        let f = sys(2, &[&["a"]]);
        assert!(f.is_invariant(&phi));
        let swap = Automorphism::new(2, vec![w("b"), w("a")]).unwrap();
        assert!(!f.is_invariant(&swap));
        let both = sys(2, &[&["a"], &["b"]]);
        assert!(both.is_invariant(&swap));
    }
}
