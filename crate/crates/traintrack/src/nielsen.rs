//! Nielsen paths, complete splittings, rays and rotationless powers.
//!
//! This module implements the fixed-point side of the train-track toolkit:
//!
//! * cancellation and critical constants of a topological representative
//!   ([`bcc`], [`critical_constant`]);
//! * the window search for indivisible Nielsen paths in exponentially
//!   growing strata ([`find_eg_inps`]) and the catalogue of Nielsen-path
//!   data a representative carries ([`InpTable`]);
//! * complete splittings of paths into edges, Nielsen paths, exceptional
//!   paths and taken connecting paths ([`complete_split`]);
//! * rays generated by a splitting unit, with the bounded comparison that
//!   decides whether two rays share a tail ([`Ray`], [`rays_common_tail`]);
//! * lifts of the map to the universal cover and the fixed-point search in
//!   a lift ([`Lift`], [`find_fixed_point`]);
//! * principal vertices, the rotationless test and the smallest
//!   rotationless power together with certified a-priori bounds
//!   ([`principal_vertices`], [`is_rotationless`], [`rotationless_power`],
//!   [`rotationless_bound`]).
//!
//! Points at infinity are never materialised.  A ray is stored by the unit
//! that generates it and expanded lazily; ends are compared through finite
//! windows whose size is controlled by the critical constant; twist
//! families `E wᵏ Ē` are stored by their defining data `(E, w)` rather than
//! enumerated.

use crate::auto::Automorphism;
use crate::graphs::{EdgeId, GEdgelet, GGraph, OEdge, Path, VertexId};
use crate::toprep::{normalize, rtt, StratumKind, TopRep};
use crate::words::Word;
use crate::{Error, Result};
use num_bigint::BigUint;
use std::collections::{BTreeMap, BTreeSet};

/// Iteration cap for image windows (`fᵏ` of an edge).
const MAX_WINDOW_ITERATES: usize = 64;
/// Length cap for iterated image paths.
const MAX_ITERATE_PATH: usize = 400_000;
/// Length cap for the materialised part of a ray.
const MAX_RAY_PATH: usize = 400_000;
/// Cap on the number of splitting terms materialised per ray.
const MAX_RAY_TERMS: usize = 50_000;
/// Cap on the inner scan of the tail comparison.
const MAX_TAIL_TERMS: usize = 20_000;
/// Step cap for the fixed-point walk.
const MAX_WALK_STEPS: usize = 4_000;
/// Length cap for the offset paths seen during the fixed-point walk.
const MAX_WALK_PATH: usize = 200_000;
/// Length cap when harvesting taken connecting paths.
const MAX_TAKEN_LEN: usize = 20_000;
/// Factorials are computed exactly below this argument, estimated above it.
const EXACT_FACTORIAL_LIMIT: u128 = 5_000;
/// Largest supported argument of the permutation-order function.
const MAX_LANDAU_ARG: usize = 600;

// ---------------------------------------------------------------------------
// Permutation-order bounds.
// ---------------------------------------------------------------------------

/// Landau's function `g(m)`: the largest order of a permutation of `m`
/// symbols, i.e. the maximal least common multiple of a partition of `m`.
/// Computed by a knapsack over prime powers (the optimum uses at most one
/// power of each prime).  The argument is capped so the result fits `u128`.
pub fn landau_g(m: usize) -> Result<u128> {
    if m > MAX_LANDAU_ARG {
        return Err(Error::Budget(format!(
            "permutation-order function: argument {m} exceeds supported range {MAX_LANDAU_ARG}"
        )));
    }
    let mut sieve = vec![true; m + 1];
    let mut primes = Vec::new();
    for p in 2..=m {
        if sieve[p] {
            primes.push(p);
            let mut q = p * p;
            while q <= m {
                sieve[q] = false;
                q += p;
            }
        }
    }
    // dp[b] = best order achievable spending at most `b` symbols.
    let mut dp: Vec<u128> = vec![1; m + 1];
    for &p in &primes {
        let prev = dp.clone();
        for b in p..=m {
            let mut q = p as u128;
            while q <= b as u128 {
                let c = prev[b - q as usize].saturating_mul(q);
                if c > dp[b] {
                    dp[b] = c;
                }
                q = q.saturating_mul(p as u128);
            }
        }
    }
    Ok(dp[m])
}

fn big_factorial(n: u128) -> BigUint {
    let mut f = BigUint::from(1u32);
    let mut i: u128 = 2;
    while i <= n {
        f *= BigUint::from(i);
        i += 1;
    }
    f
}

/// `log₁₀(n!)` by Stirling's series (exact enough for digit counts).
fn factorial_log10(n: u128) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let x = n as f64;
    (x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()) / std::f64::consts::LN_10
}

/// A-priori bounds for the power needed to make an outer automorphism of
/// the rank-`n` free group rotationless, depending on the rank alone:
/// `g(15(n−1))!·3^{n²−1}`, and the improved variant `g(6(n−1))!·3^{n²−1}`,
/// where `g` is Landau's function.  The exact big integers are produced
/// when the factorial argument is small; the decimal magnitude is always
/// reported.
#[derive(Clone, Debug)]
pub struct RotationlessBound {
    pub rank: usize,
    pub g_arg: usize,
    pub g_value: u128,
    pub improved_g_arg: usize,
    pub improved_g_value: u128,
    /// Exponent of the 3-power factor: `n² − 1`.
    pub three_exp: u32,
    /// `g(15(n−1))! · 3^{n²−1}` when small enough to hold exactly.
    pub bound: Option<BigUint>,
    /// `g(6(n−1))! · 3^{n²−1}` when small enough to hold exactly.
    pub improved_bound: Option<BigUint>,
    /// `log₁₀` of the two bounds (always available).
    pub bound_log10: f64,
    pub improved_bound_log10: f64,
}

pub fn rotationless_bound(rank: usize) -> Result<RotationlessBound> {
    if rank == 0 {
        return Err(Error::Input("rank must be positive".into()));
    }
    let g_arg = 15 * (rank - 1);
    let improved_g_arg = 6 * (rank - 1);
    let g_value = landau_g(g_arg)?;
    let improved_g_value = landau_g(improved_g_arg)?;
    let three_exp = (rank * rank - 1) as u32;
    let three_pow = BigUint::from(3u32).pow(three_exp);
    let exact = |g: u128| -> Option<BigUint> {
        if g <= EXACT_FACTORIAL_LIMIT {
            Some(big_factorial(g) * &three_pow)
        } else {
            None
        }
    };
    let log3 = 3f64.log10();
    Ok(RotationlessBound {
        rank,
        g_arg,
        g_value,
        improved_g_arg,
        improved_g_value,
        three_exp,
        bound: exact(g_value),
        improved_bound: exact(improved_g_value),
        bound_log10: factorial_log10(g_value) + three_exp as f64 * log3,
        improved_bound_log10: factorial_log10(improved_g_value) + three_exp as f64 * log3,
    })
}

// ---------------------------------------------------------------------------
// Bounded cancellation.
// ---------------------------------------------------------------------------

/// A computable bound for bounded cancellation of a topological
/// representative: when the images of two paths forming a tight
/// concatenation are tightened, at most `bcc(f)` edges cancel on each side
/// of the juncture.
///
/// The bound is obtained by folding the "map graph" — one chain of edgelets
/// per edge, spelling out its image — to an immersion and counting how
/// many edgelets disappear, plus one for every edge with homotopically
/// trivial image.  Cancellation in `f(σ)·f(τ)` is witnessed by a sequence
/// of Stallings folds of this graph and each fold accounts for at most one
/// cancelled edge, so the count dominates the true cancellation bound.
pub fn bcc(rep: &TopRep) -> usize {
    let g = &rep.graph;
    let nv = g.n_verts;
    // Merge endpoints of edges with trivial image first: those edges are
    // collapsed by the map, which is itself a unit of cancellation.
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
            r
        } else {
            x
        }
    }
    let mut trivial = 0usize;
    for (i, e) in g.edges.iter().enumerate() {
        if rep.edge_image[i].is_empty() {
            trivial += 1;
            let a = find(&mut parent, e.from.0 as usize);
            let b = find(&mut parent, e.to.0 as usize);
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut class_id: BTreeMap<usize, u32> = BTreeMap::new();
    let mut gg = GGraph {
        vert_over: Vec::new(),
        edges: Vec::new(),
        basepoint: None,
    };
    for v in 0..nv {
        let r = find(&mut parent, v);
        if let std::collections::btree_map::Entry::Vacant(slot) = class_id.entry(r) {
            slot.insert(gg.vert_over.len() as u32);
            gg.vert_over.push(rep.vertex_image[r]);
        }
    }
    let mut total = 0usize;
    for (i, e) in g.edges.iter().enumerate() {
        let img = &rep.edge_image[i];
        if img.is_empty() {
            continue;
        }
        total += img.len();
        let start = class_id[&find(&mut parent, e.from.0 as usize)];
        let end = class_id[&find(&mut parent, e.to.0 as usize)];
        let mut prev = start;
        for (j, &o) in img.edges.iter().enumerate() {
            let next = if j + 1 == img.len() {
                end
            } else {
                gg.vert_over.push(g.to(o));
                (gg.vert_over.len() - 1) as u32
            };
            if o.rev {
                gg.edges.push(GEdgelet {
                    from: next,
                    to: prev,
                    label: o.id,
                });
            } else {
                gg.edges.push(GEdgelet {
                    from: prev,
                    to: next,
                    label: o.id,
                });
            }
            prev = next;
        }
    }
    gg.fold();
    total + trivial - gg.complexity()
}

// ---------------------------------------------------------------------------
// Stratum constants.
// ---------------------------------------------------------------------------

/// The numerical constants attached to an exponentially growing stratum.
#[derive(Clone, Debug)]
pub struct StratumConstants {
    /// Bounded-cancellation bound of the representative.
    pub bcc: usize,
    /// Least iterate after which every stratum edge's image crosses the
    /// stratum at least twice.
    pub l: usize,
    /// Critical constant `C = 4·l·max(bcc,1) + 1`: a legal path crossing
    /// more than `C` stratum edges pushes its ends apart under iteration.
    pub critical: usize,
    /// Window constant `C + 2` used by reduction searches.
    pub c0: usize,
    /// Per-edge constant `6(n−1)` in the rank `n`.
    pub c_e: usize,
    /// Turn budget `2n` in the rank `n`.
    pub m_bound: usize,
}

fn stratum_kind(rep: &TopRep, r: usize) -> Result<&StratumKind> {
    if r == 0 || r > rep.filtration.strata.len() {
        return Err(Error::Input(format!("no stratum of height {r}")));
    }
    Ok(&rep.filtration.strata[r - 1].kind)
}

fn count_in_stratum(heights: &[usize], p: &Path, r: usize) -> usize {
    p.edges
        .iter()
        .filter(|o| heights[o.id.0 as usize] == r)
        .count()
}

/// Compute the critical constant (and companions) of the exponentially
/// growing stratum of height `r` (1-based).  Errors on non-exponential
/// strata.
pub fn critical_constant(rep: &TopRep, r: usize) -> Result<StratumConstants> {
    if !matches!(stratum_kind(rep, r)?, StratumKind::Eg) {
        return Err(Error::Input(format!(
            "stratum {r} is not exponentially growing"
        )));
    }
    let b = bcc(rep);
    let heights = rep.heights();
    let stratum_edges = rep.filtration.strata[r - 1].edges.clone();
    let mut imgs: Vec<Path> = stratum_edges
        .iter()
        .map(|&e| Path::one(OEdge::fwd(e)))
        .collect();
    let mut l = 0usize;
    loop {
        l += 1;
        if l > MAX_WINDOW_ITERATES {
            return Err(Error::Budget(format!(
                "stratum {r}: expansion iterate exceeded {MAX_WINDOW_ITERATES}"
            )));
        }
        for p in imgs.iter_mut() {
            *p = rep.map_path(p);
            if p.len() > MAX_ITERATE_PATH {
                return Err(Error::Budget(format!(
                    "stratum {r}: iterated image exceeded {MAX_ITERATE_PATH} edges"
                )));
            }
        }
        let min = imgs
            .iter()
            .map(|p| count_in_stratum(&heights, p, r))
            .min()
            .unwrap_or(0);
        if min >= 2 {
            break;
        }
    }
    let n = rep.rank();
    let critical = 4 * l * b.max(1) + 1;
    Ok(StratumConstants {
        bcc: b,
        l,
        critical,
        c0: critical + 2,
        c_e: 6 * n.saturating_sub(1),
        m_bound: 2 * n,
    })
}

// ---------------------------------------------------------------------------
// Indivisible Nielsen paths.
// ---------------------------------------------------------------------------

/// `f_#(p) == p` for a nontrivial path.
pub fn is_nielsen_path(rep: &TopRep, p: &Path) -> bool {
    !p.is_empty() && rep.map_path(p) == *p
}

fn path_key(p: &Path) -> Vec<(u32, bool)> {
    p.edges.iter().map(|o| (o.id.0, o.rev)).collect()
}

/// The lexicographically smaller of a path and its reverse — a canonical
/// representative of an orientation pair.
pub fn canonical_np(p: &Path) -> Path {
    let r = p.reversed();
    if path_key(&r) < path_key(p) {
        r
    } else {
        p.clone()
    }
}

/// Find the indivisible Nielsen paths of height `r` (an exponentially
/// growing stratum) by the window method: any such path is `α·β̄` with both
/// legs legal, beginning and ending with stratum edges, and crossing at
/// most `C` stratum edges per leg.  The legs are found among initial
/// segments of iterated edge images once every image crosses more than `C`
/// stratum edges, and candidates are confirmed by `f_#(ρ) = ρ`.
///
/// Precondition: periodic Nielsen-path data below height `r` has period
/// one (e.g. the representative is rotationless); results are canonical
/// orientation representatives, sorted.
pub fn find_eg_inps(rep: &TopRep, r: usize) -> Result<Vec<Path>> {
    let consts = critical_constant(rep, r)?;
    let c = consts.critical;
    let heights = rep.heights();
    let stratum_edges = rep.filtration.strata[r - 1].edges.clone();
    let dirs: Vec<OEdge> = stratum_edges
        .iter()
        .flat_map(|&e| [OEdge::fwd(e), OEdge::back(e)])
        .collect();
    // Iterate the images together until each crosses more than `c` stratum
    // edges.
    let mut imgs: Vec<Path> = dirs.iter().map(|&d| Path::one(d)).collect();
    let mut iterates = 0usize;
    while imgs
        .iter()
        .map(|p| count_in_stratum(&heights, p, r))
        .min()
        .unwrap_or(0)
        <= c
    {
        iterates += 1;
        if iterates > MAX_WINDOW_ITERATES {
            return Err(Error::Budget(format!(
                "stratum {r}: window iterate exceeded {MAX_WINDOW_ITERATES}"
            )));
        }
        for p in imgs.iter_mut() {
            *p = rep.map_path(p);
            if p.len() > MAX_ITERATE_PATH {
                return Err(Error::Budget(format!(
                    "stratum {r}: window image exceeded {MAX_ITERATE_PATH} edges"
                )));
            }
        }
    }
    // Candidate legs: initial segments that end with a stratum edge and
    // cross at most `c` stratum edges.  A Nielsen path's ends survive
    // tightening, so its initial direction is `Df`-fixed — legs starting
    // with an unfixed direction cannot occur.  Alongside each leg, record
    // the exact length of its tightened image by simulating the tight
    // concatenation of edge images along the segment.
    let mut legs: Vec<Path> = Vec::new();
    let mut leg_img_len: Vec<usize> = Vec::new();
    let mut seen_legs: BTreeSet<Vec<(u32, bool)>> = BTreeSet::new();
    for img in &imgs {
        let d0 = img.edges[0];
        if rep.df(d0).ok() != Some(d0) {
            continue;
        }
        let mut cnt = 0usize;
        let mut cur: Vec<OEdge> = Vec::new();
        for (i, &o) in img.edges.iter().enumerate() {
            for &x in &rep.image_of(o).edges {
                if cur.last() == Some(&x.reversed()) {
                    cur.pop();
                } else {
                    cur.push(x);
                }
            }
            if heights[o.id.0 as usize] == r {
                cnt += 1;
                if cnt > c {
                    break;
                }
                let leg = img.subpath(0, i + 1);
                if seen_legs.insert(path_key(&leg)) {
                    legs.push(leg);
                    leg_img_len.push(cur.len());
                }
            }
        }
    }
    // Pair legs sharing a terminal vertex with distinct final edges whose
    // reversed directions collide under ONE application of `Df`: a fixed
    // path must cancel at its juncture on the first application already
    // (otherwise its image is strictly longer), and one-step cancellation
    // means exactly that the images of the two terminal directions agree.
    // Legs are bucketed by that one-step image; only same-bucket pairs can
    // form the juncture, and such a juncture turn is automatically
    // illegal.
    //
    // A fixed `α·β̄` has the normal form `f_#(α) = α·τ`, `f_#(β) = β·τ`
    // with a common tail `τ`, so `|f_#(leg)| − |leg|` must agree across
    // the pair — an O(1) filter using the exact tightened image lengths
    // recorded above.  Leg images are materialised lazily for the pairs
    // that survive it.
    let mut leg_image: Vec<Option<Path>> = vec![None; legs.len()];
    let mut buckets: BTreeMap<(u32, (u32, bool)), Vec<usize>> = BTreeMap::new();
    for (i, a) in legs.iter().enumerate() {
        let la = a.edges[a.len() - 1];
        if let Ok(c) = rep.df(la.reversed()) {
            buckets
                .entry((rep.graph.to(la).0, (c.id.0, c.rev)))
                .or_default()
                .push(i);
        }
    }
    let mut found: BTreeSet<Vec<(u32, bool)>> = BTreeSet::new();
    let mut out: Vec<Path> = Vec::new();
    for set in buckets.values() {
        for &i in set {
            for &j in set {
                let (a, b) = (&legs[i], &legs[j]);
                let la = a.edges[a.len() - 1];
                let lb = b.edges[b.len() - 1];
                if la == lb {
                    continue;
                }
                if leg_img_len[i] < a.len()
                    || leg_img_len[j] < b.len()
                    || leg_img_len[i] - a.len() != leg_img_len[j] - b.len()
                {
                    continue;
                }
                for (k, leg) in [(i, a), (j, b)] {
                    if leg_image[k].is_none() {
                        leg_image[k] = Some(rep.map_path(leg));
                    }
                }
                let (u, v) = (
                    leg_image[i].as_ref().unwrap(),
                    leg_image[j].as_ref().unwrap(),
                );
                // Normal form: u = a·τ and v = b·τ.  (The tightened full
                // comparison is equivalent when the prefix test passes;
                // pairs failing it cannot tighten back to `a·b̄` without
                // cancelling past the juncture.)
                if u.edges[..a.len()] != a.edges[..]
                    || v.edges[..b.len()] != b.edges[..]
                    || u.edges[a.len()..] != v.edges[b.len()..]
                {
                    continue;
                }
                let rho = a.concat(&b.reversed());
                debug_assert!(is_nielsen_path(rep, &rho));
                let canon = canonical_np(&rho);
                if found.insert(path_key(&canon)) {
                    out.push(canon);
                }
            }
        }
    }
    out.sort_by_key(path_key);
    Ok(out)
}

/// A non-exponential edge with linear twisting: `f(E) = E·w^d` for a
/// root-free Nielsen circuit `w` and `d ≥ 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearEdge {
    pub e: EdgeId,
    pub w: Path,
    pub d: i64,
}

/// Linear edges of the representative, read off the stratum classification.
pub fn linear_edges(rep: &TopRep) -> Vec<LinearEdge> {
    let mut out = Vec::new();
    for s in &rep.filtration.strata {
        if let StratumKind::NegLinear { w, d } = &s.kind {
            for &e in &s.edges {
                out.push(LinearEdge {
                    e,
                    w: w.clone(),
                    d: *d,
                });
            }
        }
    }
    out
}

/// The Nielsen-path catalogue of a representative: indivisible Nielsen
/// paths per exponential stratum, linear-edge families, fixed edges, and
/// the taken connecting paths of zero strata (maximal zero-stratum
/// subpaths of iterated edge images).
#[derive(Clone, Debug)]
pub struct InpTable {
    /// Height (1-based) → indivisible Nielsen paths, canonical orientation.
    pub eg: BTreeMap<usize, Vec<Path>>,
    pub linear: Vec<LinearEdge>,
    pub fixed_edges: Vec<EdgeId>,
    pub taken_zero: Vec<Path>,
}

pub fn inp_table(rep: &TopRep) -> Result<InpTable> {
    let heights = rep.heights();
    let mut eg = BTreeMap::new();
    for (i, s) in rep.filtration.strata.iter().enumerate() {
        if matches!(s.kind, StratumKind::Eg) {
            eg.insert(i + 1, find_eg_inps(rep, i + 1)?);
        }
    }
    let mut fixed_edges = Vec::new();
    for (i, img) in rep.edge_image.iter().enumerate() {
        if img.len() == 1 && img.edges[0] == OEdge::fwd(EdgeId(i as u32)) {
            fixed_edges.push(EdgeId(i as u32));
        }
    }
    // Taken connecting paths: maximal zero-stratum runs inside iterated
    // images of irreducible-stratum edges (and their reverses).
    let is_zero: Vec<bool> = (0..rep.graph.n_edges())
        .map(|e| {
            matches!(
                rep.filtration.strata[heights[e] - 1].kind,
                StratumKind::Zero
            )
        })
        .collect();
    let mut taken: BTreeSet<Vec<(u32, bool)>> = BTreeSet::new();
    let mut taken_paths: Vec<Path> = Vec::new();
    let mut harvest = |p: &Path, taken_paths: &mut Vec<Path>| {
        let mut i = 0usize;
        while i < p.len() {
            let e = p.edges[i].id.0 as usize;
            if !is_zero[e] {
                i += 1;
                continue;
            }
            let h = heights[e];
            let mut j = i + 1;
            while j < p.len()
                && is_zero[p.edges[j].id.0 as usize]
                && heights[p.edges[j].id.0 as usize] == h
            {
                j += 1;
            }
            let run = p.subpath(i, j);
            for q in [run.clone(), run.reversed()] {
                if taken.insert(path_key(&q)) {
                    taken_paths.push(q);
                }
            }
            i = j;
        }
    };
    let rounds = 2 * rep.graph.n_edges() + 8;
    for s in &rep.filtration.strata {
        if matches!(s.kind, StratumKind::Zero | StratumKind::Mixed) {
            continue;
        }
        for &e in &s.edges {
            let mut p = rep.image_of(OEdge::fwd(e));
            for _ in 0..rounds {
                harvest(&p, &mut taken_paths);
                if p.len() > MAX_TAKEN_LEN {
                    break;
                }
                p = rep.map_path(&p);
            }
        }
    }
    taken_paths.sort_by_key(path_key);
    Ok(InpTable {
        eg,
        linear: linear_edges(rep),
        fixed_edges,
        taken_zero: taken_paths,
    })
}

// ---------------------------------------------------------------------------
// Complete splittings.
// ---------------------------------------------------------------------------

/// A unit of a complete splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    /// A single edge of an irreducible stratum.
    Edge(OEdge),
    /// An indivisible Nielsen path of exponential height, as crossed.
    EgInp(Path),
    /// `E wᵏ Ē` for a linear edge `E` with `f(E) = E w^d` (`k ≠ 0`).
    NegInp { e: EdgeId, k: i64 },
    /// An exceptional path `E_i wᵏ Ē_j` for distinct linear edges over the
    /// same twist circuit `w` (`k` may be 0).
    Exceptional { ei: EdgeId, ej: EdgeId, k: i64 },
    /// A maximal taken connecting path in a zero stratum.
    ZeroConnecting(Path),
}

/// A complete splitting of a path: a decomposition into pieces whose
/// junctures never cancel under iteration of the map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompleteSplitting {
    pub pieces: Vec<Piece>,
    /// Start offset of each piece.
    pub offsets: Vec<usize>,
    pub total_len: usize,
}

impl CompleteSplitting {
    /// Offsets of the interior splitting vertices.
    pub fn splitting_vertices(&self) -> Vec<usize> {
        self.offsets[1..].to_vec()
    }
}

fn repeat_w(w: &Path, k: i64) -> Path {
    let unit = if k >= 0 { w.clone() } else { w.reversed() };
    let mut edges = Vec::new();
    for _ in 0..k.unsigned_abs() {
        edges.extend(unit.edges.iter().copied());
    }
    Path::from_edges(edges, false)
}

/// The underlying path of a piece.
pub fn piece_path(table: &InpTable, piece: &Piece) -> Path {
    match piece {
        Piece::Edge(o) => Path::one(*o),
        Piece::EgInp(p) | Piece::ZeroConnecting(p) => p.clone(),
        Piece::NegInp { e, k } => {
            let w = &table.linear.iter().find(|l| l.e == *e).expect("linear").w;
            Path::one(OEdge::fwd(*e))
                .concat(&repeat_w(w, *k))
                .concat(&Path::one(OEdge::back(*e)))
        }
        Piece::Exceptional { ei, ej, k } => {
            let w = &table.linear.iter().find(|l| l.e == *ei).expect("linear").w;
            Path::one(OEdge::fwd(*ei))
                .concat(&repeat_w(w, *k))
                .concat(&Path::one(OEdge::back(*ej)))
        }
    }
}

/// Is the piece a Nielsen path (pointwise-fixed up to homotopy)?
pub fn piece_is_nielsen(rep: &TopRep, table: &InpTable, piece: &Piece) -> bool {
    let yes = match piece {
        Piece::Edge(o) => table.fixed_edges.contains(&o.id),
        Piece::EgInp(_) | Piece::NegInp { .. } => true,
        Piece::Exceptional { .. } | Piece::ZeroConnecting(_) => false,
    };
    debug_assert!(!yes || is_nielsen_path(rep, &piece_path(table, piece)));
    yes
}

/// Height of a piece: the maximal height of an edge it crosses.
pub fn piece_height(rep: &TopRep, table: &InpTable, piece: &Piece) -> usize {
    rep.height_of_path(&piece_path(table, piece))
}

/// First and last edges of `f_#ᵏ(p)` for `k = 0..4` — the data needed to
/// test a splitting juncture.  `None` marks an iterate that collapses.
#[derive(Clone, Debug, PartialEq, Eq)]
struct PieceFut {
    ends: [Option<(OEdge, OEdge)>; 4],
}

fn piece_fut(rep: &TopRep, p: &Path) -> PieceFut {
    let mut ends = [None; 4];
    let mut q = p.clone();
    for slot in ends.iter_mut() {
        *slot = match (q.edges.first(), q.edges.last()) {
            (Some(&a), Some(&b)) => Some((a, b)),
            _ => break,
        };
        q = rep.map_path(&q);
    }
    PieceFut { ends }
}

/// Does concatenating `a` then `b` stay tight under `f_#ᵏ` for `k ≤ 3`?
/// This is the practical test for a splitting juncture.
fn juncture_ok_fut(fa: &PieceFut, fb: &PieceFut) -> bool {
    for k in 0..4 {
        match (fa.ends[k], fb.ends[k]) {
            (Some((_, la)), Some((fb0, _))) => {
                if fb0 == la.reversed() {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

fn matches_at(p: &Path, i: usize, q: &Path) -> bool {
    !q.is_empty()
        && i + q.len() <= p.len()
        && p.edges[i..i + q.len()] == q.edges[..]
}

/// All pieces that may start at offset `i` of `p`, with their end offsets,
/// in a fixed deterministic order.
fn candidates_at(
    rep: &TopRep,
    table: &InpTable,
    heights: &[usize],
    is_zero: &[bool],
    taken_keys: &BTreeSet<Vec<(u32, bool)>>,
    p: &Path,
    i: usize,
) -> Vec<(Piece, usize)> {
    let o = p.edges[i];
    let e = o.id.0 as usize;
    if is_zero[e] {
        // Zero-stratum edges occur only inside maximal taken connecting
        // paths, so the run is forced.
        let h = heights[e];
        if i > 0 {
            let prev = p.edges[i - 1].id.0 as usize;
            if is_zero[prev] && heights[prev] == h {
                return Vec::new(); // not at the start of the maximal run
            }
        }
        let mut j = i + 1;
        while j < p.len()
            && is_zero[p.edges[j].id.0 as usize]
            && heights[p.edges[j].id.0 as usize] == h
        {
            j += 1;
        }
        let run = p.subpath(i, j);
        if taken_keys.contains(&path_key(&run)) {
            return vec![(Piece::ZeroConnecting(run), j)];
        }
        return Vec::new();
    }
    let mut out: Vec<(Piece, usize)> = Vec::new();
    // Indivisible Nielsen paths of exponential strata, either orientation.
    for list in table.eg.values() {
        for rho in list {
            for q in [rho.clone(), rho.reversed()] {
                if matches_at(p, i, &q) {
                    out.push((Piece::EgInp(q.clone()), i + q.len()));
                }
            }
        }
    }
    // Twist families E wᵏ Ē and exceptional paths E_i wᵏ Ē_j.
    for li in &table.linear {
        if o != OEdge::fwd(li.e) {
            continue;
        }
        for (unit, sign) in [(li.w.clone(), 1i64), (li.w.reversed(), -1i64)] {
            let wl = unit.len();
            if wl == 0 {
                continue;
            }
            let mut reps = 0usize;
            while matches_at(p, i + 1 + reps * wl, &unit) {
                reps += 1;
            }
            for t in (0..=reps).rev() {
                let tip = i + 1 + t * wl;
                if tip >= p.len() {
                    continue;
                }
                let cap = p.edges[tip];
                if t >= 1 && cap == OEdge::back(li.e) {
                    out.push((
                        Piece::NegInp {
                            e: li.e,
                            k: sign * t as i64,
                        },
                        tip + 1,
                    ));
                }
                if cap.rev && cap.id != li.e {
                    if let Some(lj) = table.linear.iter().find(|l| l.e == cap.id) {
                        if lj.w == li.w && lj.d != li.d && (t >= 1 || sign == 1) {
                            out.push((
                                Piece::Exceptional {
                                    ei: li.e,
                                    ej: lj.e,
                                    k: sign * t as i64,
                                },
                                tip + 1,
                            ));
                        }
                    }
                }
            }
        }
    }
    // A single irreducible-stratum edge.
    if !matches!(
        rep.filtration.strata[heights[e] - 1].kind,
        StratumKind::Zero | StratumKind::Mixed
    ) {
        out.push((Piece::Edge(o), i + 1));
    }
    out
}

struct SplitSearch {
    cand: Vec<Vec<(Piece, usize)>>,
    fut: Vec<Vec<PieceFut>>,
    good: Vec<Vec<bool>>,
    ways: Vec<Vec<u64>>,
}

fn split_search(rep: &TopRep, table: &InpTable, p: &Path) -> Option<SplitSearch> {
    if p.is_empty() {
        return None;
    }
    let heights = rep.heights();
    let is_zero: Vec<bool> = (0..rep.graph.n_edges())
        .map(|e| {
            matches!(
                rep.filtration.strata[heights[e] - 1].kind,
                StratumKind::Zero
            )
        })
        .collect();
    let taken_keys: BTreeSet<Vec<(u32, bool)>> =
        table.taken_zero.iter().map(path_key).collect();
    let n = p.len();
    let cand: Vec<Vec<(Piece, usize)>> = (0..n)
        .map(|i| candidates_at(rep, table, &heights, &is_zero, &taken_keys, p, i))
        .collect();
    // Futures are cached per distinct piece — pieces repeat heavily along
    // a path, and each future costs three image computations.
    let mut fut_cache: BTreeMap<Vec<(u32, bool)>, PieceFut> = BTreeMap::new();
    let fut: Vec<Vec<PieceFut>> = cand
        .iter()
        .map(|v| {
            v.iter()
                .map(|(piece, _)| {
                    let q = piece_path(table, piece);
                    fut_cache
                        .entry(path_key(&q))
                        .or_insert_with(|| piece_fut(rep, &q))
                        .clone()
                })
                .collect()
        })
        .collect();
    let mut good: Vec<Vec<bool>> = cand.iter().map(|v| vec![false; v.len()]).collect();
    let mut ways: Vec<Vec<u64>> = cand.iter().map(|v| vec![0; v.len()]).collect();
    for i in (0..n).rev() {
        for c in 0..cand[i].len() {
            let j = cand[i][c].1;
            if j == n {
                good[i][c] = true;
                ways[i][c] = 1;
                continue;
            }
            if j > n {
                continue;
            }
            let mut w = 0u64;
            for c2 in 0..cand[j].len() {
                if ways[j][c2] > 0 && juncture_ok_fut(&fut[i][c], &fut[j][c2]) {
                    w = w.saturating_add(ways[j][c2]);
                }
            }
            good[i][c] = w > 0;
            ways[i][c] = w;
        }
    }
    Some(SplitSearch { cand, fut, good, ways })
}

/// Compute the complete splitting of a tight path, if it has one.  The
/// result is deterministic; `complete_split_count` reports how many
/// splittings exist (a completely split path should have exactly one).
pub fn complete_split(rep: &TopRep, table: &InpTable, p: &Path) -> Option<CompleteSplitting> {
    let s = split_search(rep, table, p)?;
    let n = p.len();
    let mut pieces = Vec::new();
    let mut offsets = Vec::new();
    let mut i = 0usize;
    let mut prev_fut: Option<PieceFut> = None;
    while i < n {
        let mut chosen: Option<usize> = None;
        for c in 0..s.cand[i].len() {
            if !s.good[i][c] {
                continue;
            }
            if let Some(ref pf) = prev_fut {
                if !juncture_ok_fut(pf, &s.fut[i][c]) {
                    continue;
                }
            }
            chosen = Some(c);
            break;
        }
        let c = chosen?;
        let (piece, j) = s.cand[i][c].clone();
        prev_fut = Some(s.fut[i][c].clone());
        offsets.push(i);
        pieces.push(piece);
        i = j;
    }
    Some(CompleteSplitting {
        pieces,
        offsets,
        total_len: n,
    })
}

/// The number of distinct complete splittings of `p` (saturating).
pub fn complete_split_count(rep: &TopRep, table: &InpTable, p: &Path) -> u64 {
    match split_search(rep, table, p) {
        None => 0,
        Some(s) => {
            let mut total = 0u64;
            for c in 0..s.cand[0].len() {
                total = total.saturating_add(s.ways[0][c]);
            }
            total
        }
    }
}

// ---------------------------------------------------------------------------
// Rays.
// ---------------------------------------------------------------------------

/// A ray `σ·f_#(σ)·f_#²(σ)⋯` generated by a unit `σ` from a vertex `v` to
/// `f(v)`, optionally preceded by a head edge `E` when the ray arises from
/// `f(E) = E·σ`.  The ray is expanded lazily block by block; each block is
/// completely split and the splitting terms are recorded with their
/// offsets and image lengths.
#[derive(Clone, Debug)]
pub struct Ray {
    pub head: Option<OEdge>,
    pub generator: Path,
    path: Path,
    term_pieces: Vec<Piece>,
    term_offsets: Vec<usize>,
    /// `img_prefix[i]` = total `f_#`-image length of terms `< i`.
    img_prefix: Vec<usize>,
    block_term_counts: Vec<usize>,
    blocks_done: usize,
    last_block: Path,
}

impl Ray {
    fn validate_generator(rep: &TopRep, table: &InpTable, sigma: &Path) -> Result<()> {
        if sigma.is_empty() {
            return Err(Error::Input("ray generator is trivial".into()));
        }
        if sigma.tightened() != *sigma {
            return Err(Error::Input("ray generator is not tight".into()));
        }
        let v = rep.graph.from(sigma.edges[0]);
        let end = rep.graph.to(sigma.edges[sigma.len() - 1]);
        if end != rep.vertex_image[v.0 as usize] {
            return Err(Error::Input(
                "ray generator does not run from a vertex to its image".into(),
            ));
        }
        let f1 = rep.map_path(sigma);
        if f1.is_empty() {
            return Err(Error::Input("ray generator has trivial image".into()));
        }
        let d1 = sigma.edges[sigma.len() - 1].reversed();
        let d2 = f1.edges[0];
        if d1 == d2 || rep.turn_illegal(d1, d2)? {
            return Err(Error::Input(
                "ray generator does not make a legal turn with its image".into(),
            ));
        }
        if complete_split(rep, table, sigma).is_none() {
            return Err(Error::Input("ray generator is not completely split".into()));
        }
        Ok(())
    }

    /// The ray generated by a unit `σ` from a vertex to its image.
    pub fn generated(rep: &TopRep, table: &InpTable, sigma: Path) -> Result<Ray> {
        Self::validate_generator(rep, table, &sigma)?;
        Ok(Ray {
            head: None,
            generator: sigma,
            path: Path::empty(),
            term_pieces: Vec::new(),
            term_offsets: Vec::new(),
            img_prefix: vec![0],
            block_term_counts: Vec::new(),
            blocks_done: 0,
            last_block: Path::empty(),
        })
    }

    /// The eigenray of a direction `d` with `Df(d) = d` and `f(E_d) = E_d·u`:
    /// the ray `E_d·u·f_#(u)⋯`.
    pub fn eigenray(rep: &TopRep, table: &InpTable, d: OEdge) -> Result<Ray> {
        let img = rep.image_of(d);
        if img.len() < 2 || img.edges[0] != d {
            return Err(Error::Input(
                "direction is not fixed with expanding image".into(),
            ));
        }
        let u = img.subpath(1, img.len());
        Self::validate_generator(rep, table, &u)?;
        Ok(Ray {
            head: Some(d),
            generator: u,
            path: Path::empty(),
            term_pieces: Vec::new(),
            term_offsets: Vec::new(),
            img_prefix: vec![0],
            block_term_counts: Vec::new(),
            blocks_done: 0,
            last_block: Path::empty(),
        })
    }

    pub fn head_len(&self) -> usize {
        self.head.map_or(0, |_| 1)
    }

    fn push_block(&mut self, rep: &TopRep, table: &InpTable) -> Result<()> {
        let blk = if self.blocks_done == 0 {
            self.generator.clone()
        } else {
            rep.map_path(&self.last_block)
        };
        if blk.is_empty() {
            return Err(Error::Internal("ray block collapsed to a point".into()));
        }
        let cs = complete_split(rep, table, &blk).ok_or_else(|| {
            Error::Internal("ray block is not completely split".into())
        })?;
        let base = self.path.len();
        if base > 0 && blk.edges[0] == self.path.edges[base - 1].reversed() {
            return Err(Error::Internal("ray blocks cancel at their seam".into()));
        }
        for (piece, off) in cs.pieces.iter().zip(cs.offsets.iter()) {
            self.term_offsets.push(base + off);
            let img_len = rep.map_path(&piece_path(table, piece)).len();
            let last = *self.img_prefix.last().unwrap();
            self.img_prefix.push(last + img_len);
            self.term_pieces.push(piece.clone());
        }
        self.block_term_counts.push(cs.pieces.len());
        self.path.edges.extend(blk.edges.iter().copied());
        self.blocks_done += 1;
        self.last_block = blk;
        if self.path.len() > MAX_RAY_PATH {
            return Err(Error::Budget(format!(
                "ray expansion exceeded {MAX_RAY_PATH} edges"
            )));
        }
        if self.term_pieces.len() > MAX_RAY_TERMS {
            return Err(Error::Budget(format!(
                "ray expansion exceeded {MAX_RAY_TERMS} terms"
            )));
        }
        Ok(())
    }

    fn ensure_blocks(&mut self, rep: &TopRep, table: &InpTable, n: usize) -> Result<()> {
        while self.blocks_done < n {
            self.push_block(rep, table)?;
        }
        Ok(())
    }

    fn ensure_terms(&mut self, rep: &TopRep, table: &InpTable, n: usize) -> Result<()> {
        while self.term_pieces.len() < n {
            self.push_block(rep, table)?;
        }
        Ok(())
    }

    fn ensure_path_len(&mut self, rep: &TopRep, table: &InpTable, n: usize) -> Result<()> {
        while self.path.len() < n {
            self.push_block(rep, table)?;
        }
        Ok(())
    }

    /// An initial segment of the ray in full coordinates (head included).
    pub fn full_prefix(&mut self, rep: &TopRep, table: &InpTable, n: usize) -> Result<Path> {
        let gen_n = n.saturating_sub(self.head_len());
        self.ensure_path_len(rep, table, gen_n)?;
        let mut edges = Vec::new();
        if let Some(h) = self.head {
            if n > 0 {
                edges.push(h);
            }
        }
        edges.extend(self.path.edges[..gen_n].iter().copied());
        Ok(Path::from_edges(edges, false))
    }

    /// Splitting pieces of the generator (the first block).
    fn generator_pieces(&mut self, rep: &TopRep, table: &InpTable) -> Result<Vec<Piece>> {
        self.ensure_blocks(rep, table, 1)?;
        Ok(self.term_pieces[..self.block_term_counts[0]].to_vec())
    }

    /// The segment of the ray from splitting vertex `i` to its image, as a
    /// path (possibly reversed if the image point lies behind the vertex).
    fn sigma_segment(&self, i: usize) -> (usize, usize, Path) {
        let start = self.term_offsets[i];
        let end = self.generator.len() + self.img_prefix[i];
        let (a, b) = (start.min(end), start.max(end));
        let seg = Path::from_edges(self.path.edges[a..b].to_vec(), false);
        let seg = if end >= start { seg } else { seg.reversed() };
        (start, end, seg)
    }
}

/// Decide whether two rays converge to the same end, by comparing the
/// segments `[v_i, f(v_i)]` at splitting vertices within a window bounded
/// by the critical constant of the controlling stratum.  Returns the (full)
/// edge offsets along each ray from which the tails agree, or `None`.
///
/// Errors with an input error if either generator is a Nielsen path (such
/// a ray is degenerate for this comparison).
pub fn rays_common_tail(
    rep: &TopRep,
    table: &InpTable,
    ra: &mut Ray,
    rb: &mut Ray,
) -> Result<Option<(usize, usize)>> {
    let heights = rep.heights();
    let height_of = |rep: &TopRep, table: &InpTable, pieces: &[Piece]| -> Result<usize> {
        let mut h = 0usize;
        let mut all_nielsen = true;
        for piece in pieces {
            if piece_is_nielsen(rep, table, piece) {
                continue;
            }
            all_nielsen = false;
            h = h.max(piece_height(rep, table, piece));
        }
        if all_nielsen {
            return Err(Error::Input(
                "degenerate ray: generator is a Nielsen path".into(),
            ));
        }
        Ok(h)
    };
    let pa = ra.generator_pieces(rep, table)?;
    let pb = rb.generator_pieces(rep, table)?;
    let r1 = height_of(rep, table, &pa)?;
    let r2 = height_of(rep, table, &pb)?;
    if r1 != r2 {
        return Ok(None);
    }
    let r = r1;
    // Window depth: one application for non-exponential strata; for an
    // exponential stratum, enough applications that every stratum edge's
    // image crosses at least `C` stratum edges.
    let k_window = if matches!(stratum_kind(rep, r)?, StratumKind::Eg) {
        let consts = critical_constant(rep, r)?;
        let stratum_edges = rep.filtration.strata[r - 1].edges.clone();
        let mut imgs: Vec<Path> = stratum_edges
            .iter()
            .map(|&e| Path::one(OEdge::fwd(e)))
            .collect();
        let mut k = 0usize;
        while imgs
            .iter()
            .map(|p| count_in_stratum(&heights, p, r))
            .min()
            .unwrap_or(0)
            < consts.critical
        {
            k += 1;
            if k > MAX_WINDOW_ITERATES {
                return Err(Error::Budget(
                    "tail comparison: window iterate exceeded budget".into(),
                ));
            }
            for p in imgs.iter_mut() {
                *p = rep.map_path(p);
                if p.len() > MAX_ITERATE_PATH {
                    return Err(Error::Budget(
                        "tail comparison: window image exceeded budget".into(),
                    ));
                }
            }
        }
        k
    } else {
        1
    };

    fn scan(
        rep: &TopRep,
        table: &InpTable,
        heights: &[usize],
        r: usize,
        k_window: usize,
        x: &mut Ray,
        y: &mut Ray,
    ) -> Result<Option<(usize, usize)>> {
        x.ensure_blocks(rep, table, k_window + 2)?;
        // For exponential strata the stratum count of the segments grows
        // under iteration, so scanning `y` until the count exceeds the
        // target is a complete stopping rule.  For non-exponential strata
        // the counts stay bounded; there the block window below is the
        // terminating rule (a junction, when one exists, appears within
        // the first few blocks of both rays).
        y.ensure_blocks(rep, table, k_window + 5)?;
        let i_max: usize = x.block_term_counts[..=k_window].iter().sum();
        let j_max: usize = y.block_term_counts[..=(k_window + 4)].iter().sum();
        for i in 0..=i_max {
            let (_, _, seg_i) = x.sigma_segment(i);
            let h_i = count_in_stratum(heights, &seg_i, r);
            let mut j = 0usize;
            loop {
                if j > j_max.min(MAX_TAIL_TERMS) {
                    break;
                }
                y.ensure_terms(rep, table, j + 1)?;
                let end_j = y.generator.len() + y.img_prefix[j];
                let start_j = y.term_offsets[j];
                y.ensure_path_len(rep, table, end_j.max(start_j))?;
                let (s_j, _, seg_j) = y.sigma_segment(j);
                let c_j = count_in_stratum(heights, &seg_j, r);
                if c_j > h_i {
                    break;
                }
                if seg_j == seg_i {
                    let (s_i, _, _) = x.sigma_segment(i);
                    return Ok(Some((s_i + x.head_len(), s_j + y.head_len())));
                }
                j += 1;
            }
        }
        Ok(None)
    }

    if let Some(hit) = scan(rep, table, &heights, r, k_window, ra, rb)? {
        return Ok(Some(hit));
    }
    if let Some((yo, xo)) = scan(rep, table, &heights, r, k_window, rb, ra)? {
        return Ok(Some((xo, yo)));
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Lifts and fixed points.
// ---------------------------------------------------------------------------

/// A lift of the map to the universal cover, recorded by an anchor vertex
/// `⋆` and a tight path `ρ` from `⋆` to `f(⋆)`.  Cover vertices are
/// represented by tight paths from `⋆`; the lift sends the vertex at `p` to
/// the vertex at `[ρ·f_#(p)]`, and (when the anchor is the marking
/// basepoint) acts on the fundamental group by `g ↦ ρ·f_#(g)·ρ̄`.
#[derive(Clone, Debug)]
pub struct Lift {
    pub rho: Path,
    pub start: VertexId,
}

impl Lift {
    /// Lift anchored at the marking basepoint.
    pub fn new(rep: &TopRep, rho: Path) -> Result<Lift> {
        Lift::new_at(rep, rep.graph.base, rho)
    }

    /// Lift anchored at an arbitrary vertex `start`; `rho` must run from
    /// `start` to its image.
    pub fn new_at(rep: &TopRep, start: VertexId, rho: Path) -> Result<Lift> {
        let target = rep.vertex_image[start.0 as usize];
        let rho = rho.tightened();
        if rho.is_empty() {
            if target != start {
                return Err(Error::Input(
                    "trivial lift path requires the anchor vertex to be fixed".into(),
                ));
            }
        } else {
            if rep.graph.from(rho.edges[0]) != start
                || rep.graph.to(rho.edges[rho.len() - 1]) != target
            {
                return Err(Error::Input(
                    "lift path must run from the anchor vertex to its image".into(),
                ));
            }
        }
        Ok(Lift { rho, start })
    }

    /// The image of the cover vertex at `p`.
    pub fn apply_cover(&self, rep: &TopRep, p: &Path) -> Path {
        self.rho.concat(&rep.map_path(p)).tightened()
    }

    /// The offset `γ(p) = [p̄·ρ·f_#(p)]` from a cover vertex to its image.
    pub fn offset_at(&self, rep: &TopRep, p: &Path) -> Path {
        p.reversed()
            .concat(&self.rho)
            .concat(&rep.map_path(p))
            .tightened()
    }

    /// The automorphism this lift induces on the fundamental group,
    /// evaluated on one word.  Meaningful only for lifts anchored at the
    /// marking basepoint.
    pub fn action(&self, rep: &TopRep, w: &Word) -> Word {
        let mut p = Path::empty();
        for &l in &w.0 {
            let lp = &rep.graph.base_loops[l.gen()];
            let lp = if l.is_positive() {
                lp.clone()
            } else {
                lp.reversed()
            };
            p = p.concat(&lp);
        }
        let q = self
            .rho
            .concat(&rep.map_path(&p.tightened()))
            .concat(&self.rho.reversed())
            .tightened();
        rep.graph.path_label(&q)
    }
}

/// Why a lift has no fixed point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmptyReason {
    /// The lift translates along the axis of a Nielsen circuit.
    AxisTranslation,
    /// The boundary fixed set is a single ray end.
    SingleRayEnd,
}

/// Outcome of the fixed-point search in a lift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FixedPointOutcome {
    /// A fixed cover vertex, given by its path from the basepoint.
    Vertex { at: Path },
    /// A fixed point interior to the edge `edge` leaving the cover vertex
    /// at `at`.
    Interior { at: Path, edge: OEdge },
    /// No fixed point; `generator` generates the invariant ray that
    /// certifies emptiness, and `approach` is the walk path from the
    /// anchor vertex to the generator's starting vertex.
    Empty {
        generator: Path,
        approach: Path,
        reason: EmptyReason,
    },
}

fn vertex_at(rep: &TopRep, p: &Path, t: usize) -> VertexId {
    if t == 0 {
        rep.graph.from(p.edges[0])
    } else {
        rep.graph.to(p.edges[t - 1])
    }
}

/// Search the lift for a fixed point.  Starting at the basepoint lift, walk
/// toward the image along the offset path `γ(p) = [p̄·ρ·f_#(p)]`:
///
/// * `γ` trivial — the current vertex is fixed;
/// * the next offset starts with the reverse of the edge just crossed — a
///   fixed point lies interior to that edge;
/// * `γ` completely split and turning legally onto its image — the walk has
///   left the fixed region for good: the ray generated by `γ` is invariant,
///   and any fixed vertex must lie on an axis translate (Nielsen generator)
///   or at the alignment of the ray with an eigenray (non-Nielsen
///   generator).  Both cases are decided by bounded searches.
pub fn find_fixed_point(
    rep: &TopRep,
    table: &InpTable,
    lift: &Lift,
) -> Result<FixedPointOutcome> {
    let mut p = Path::empty();
    for _ in 0..MAX_WALK_STEPS {
        let gamma = lift.offset_at(rep, &p);
        if gamma.is_empty() {
            return Ok(FixedPointOutcome::Vertex { at: p });
        }
        if gamma.len() > MAX_WALK_PATH {
            return Err(Error::Budget(
                "fixed-point walk: offset path exceeded budget".into(),
            ));
        }
        let e0 = gamma.edges[0];
        let p_next = p.concat(&Path::one(e0)).tightened();
        let g_next = lift.offset_at(rep, &p_next);
        if !g_next.is_empty() && g_next.edges[0] == e0.reversed() {
            return Ok(FixedPointOutcome::Interior { at: p, edge: e0 });
        }
        if complete_split(rep, table, &gamma).is_some() {
            let f1 = rep.map_path(&gamma);
            if !f1.is_empty() {
                let d1 = gamma.edges[gamma.len() - 1].reversed();
                let d2 = f1.edges[0];
                if d1 != d2 && !rep.turn_illegal(d1, d2)? {
                    return finish_at_generator(rep, table, lift, &p, &gamma);
                }
            }
        }
        p = p_next;
    }
    Err(Error::Budget("fixed-point walk did not stabilise".into()))
}

fn finish_at_generator(
    rep: &TopRep,
    table: &InpTable,
    lift: &Lift,
    p: &Path,
    sigma: &Path,
) -> Result<FixedPointOutcome> {
    if is_nielsen_path(rep, sigma) {
        // The lift translates along the axis of the Nielsen path σ.  Fixed
        // vertices, if any, are reached from a vertex on the axis by
        // stepping backwards over a linear edge whose terminal vertex lies
        // on the axis (one fundamental domain suffices, since the axis
        // translation commutes with the lift).
        for t in 0..=sigma.len() {
            let v = vertex_at(rep, sigma, t);
            let vt = p.concat(&sigma.subpath(0, t)).tightened();
            if lift.apply_cover(rep, &vt) == vt {
                return Ok(FixedPointOutcome::Vertex { at: vt });
            }
            for le in &table.linear {
                if rep.graph.edges[le.e.0 as usize].to == v {
                    let cand = vt.concat(&Path::one(OEdge::back(le.e))).tightened();
                    if lift.apply_cover(rep, &cand) == cand {
                        return Ok(FixedPointOutcome::Vertex { at: cand });
                    }
                }
            }
        }
        return Ok(FixedPointOutcome::Empty {
            generator: sigma.clone(),
            approach: p.clone(),
            reason: EmptyReason::AxisTranslation,
        });
    }
    // Non-Nielsen generator: the invariant ray from the stopping vertex
    // either aligns with the eigenray of some fixed expanding direction —
    // pinning down a fixed vertex where the two rays merge — or the
    // boundary fixed set is just this ray's end.
    let mut r1 = Ray::generated(rep, table, sigma.clone())?;
    let mut dirs: Vec<OEdge> = (0..rep.graph.n_edges() as u32)
        .flat_map(|e| [OEdge::fwd(EdgeId(e)), OEdge::back(EdgeId(e))])
        .collect();
    dirs.sort();
    for d in dirs {
        let img = rep.image_of(d);
        if img.len() < 2 || img.edges[0] != d {
            continue;
        }
        let u = img.subpath(1, img.len());
        if is_nielsen_path(rep, &u) {
            // A fixed direction with Nielsen twist generates an axis, not a
            // distinct end; the translation case above covers it.
            continue;
        }
        let mut re = match Ray::eigenray(rep, table, d) {
            Ok(r) => r,
            Err(Error::Input(_)) => continue,
            Err(e) => return Err(e),
        };
        if let Some((o1, o2)) = rays_common_tail(rep, table, &mut r1, &mut re)? {
            let pre1 = r1.full_prefix(rep, table, o1)?;
            let pre2 = re.full_prefix(rep, table, o2)?;
            let cand = p.concat(&pre1).concat(&pre2.reversed()).tightened();
            if lift.apply_cover(rep, &cand) == cand {
                return Ok(FixedPointOutcome::Vertex { at: cand });
            }
            // The rays share an end but under different lifts (possible
            // around a Nielsen axis); this direction proves nothing.
        }
    }
    Ok(FixedPointOutcome::Empty {
        generator: sigma.clone(),
        approach: p.clone(),
        reason: EmptyReason::SingleRayEnd,
    })
}

// ---------------------------------------------------------------------------
// Principal vertices and rotationless powers.
// ---------------------------------------------------------------------------

fn direction_period(rep: &TopRep, d: OEdge) -> Option<usize> {
    let cap = 2 * rep.graph.n_edges() + 2;
    let mut cur = d;
    for k in 1..=cap {
        cur = rep.df(cur).ok()?;
        if cur == d {
            return Some(k);
        }
    }
    None
}

fn vertex_period(rep: &TopRep, v: VertexId) -> Option<usize> {
    let cap = rep.graph.n_verts + 1;
    let mut cur = v;
    for k in 1..=cap {
        cur = rep.vertex_image[cur.0 as usize];
        if cur == v {
            return Some(k);
        }
    }
    None
}

/// Classification of the periodic vertices of a representative.
#[derive(Clone, Debug)]
pub struct PrincipalReport {
    pub periodic: Vec<VertexId>,
    pub principal: Vec<VertexId>,
    pub non_principal: Vec<VertexId>,
    /// Periodic directions at each periodic vertex (keyed by vertex id).
    pub periodic_directions: BTreeMap<u32, Vec<OEdge>>,
    /// Fixed vertices grouped into Nielsen classes: two fixed vertices are
    /// equivalent when joined by a (period-one) Nielsen path.
    pub nielsen_classes: Vec<Vec<VertexId>>,
    pub notes: Vec<String>,
}

/// Identify the principal vertices: periodic vertices that are endpoints of
/// nontrivial periodic Nielsen paths, or have at least three periodic
/// directions, or have periodic directions in more than one stratum — i.e.
/// everything except interior-like points of exponential laminations and
/// periodic circles.
///
/// The Nielsen-path endpoint data is derived from the period-one catalogue
/// (fixed edges, exponential-stratum Nielsen paths, linear-edge families),
/// which is complete for rotationless representatives.
pub fn principal_vertices(rep: &TopRep, table: &InpTable) -> Result<PrincipalReport> {
    let heights = rep.heights();
    let nv = rep.graph.n_verts;
    let mut periodic = Vec::new();
    for v in 0..nv {
        if rep.vertex_periodic(VertexId(v as u32)) {
            periodic.push(VertexId(v as u32));
        }
    }
    let mut periodic_directions: BTreeMap<u32, Vec<OEdge>> = BTreeMap::new();
    for &v in &periodic {
        let mut dirs: Vec<OEdge> = rep
            .graph
            .out_edges(v)
            .into_iter()
            .filter(|&d| direction_period(rep, d).is_some())
            .collect();
        dirs.sort();
        dirs.dedup();
        periodic_directions.insert(v.0, dirs);
    }
    // Endpoints of nontrivial periodic Nielsen paths, from period-one data.
    let mut np_end: BTreeSet<u32> = BTreeSet::new();
    for &e in &table.fixed_edges {
        np_end.insert(rep.graph.edges[e.0 as usize].from.0);
        np_end.insert(rep.graph.edges[e.0 as usize].to.0);
    }
    for list in table.eg.values() {
        for rho in list {
            np_end.insert(rep.graph.from(rho.edges[0]).0);
            np_end.insert(rep.graph.to(rho.edges[rho.len() - 1]).0);
        }
    }
    for le in &table.linear {
        np_end.insert(rep.graph.edges[le.e.0 as usize].from.0);
        if !le.w.is_empty() {
            np_end.insert(rep.graph.from(le.w.edges[0]).0);
        }
    }
    let mut non: BTreeSet<u32> = BTreeSet::new();
    // Interior-like points of an exponential stratum: exactly two periodic
    // directions, both in the same exponential stratum, and not a Nielsen
    // endpoint.
    for &v in &periodic {
        if np_end.contains(&v.0) {
            continue;
        }
        let dirs = &periodic_directions[&v.0];
        if dirs.len() == 2 {
            let h1 = heights[dirs[0].id.0 as usize];
            let h2 = heights[dirs[1].id.0 as usize];
            if h1 == h2 && matches!(rep.filtration.strata[h1 - 1].kind, StratumKind::Eg) {
                non.insert(v.0);
            }
        }
    }
    // Circle components of the periodic subgraph on which every point has
    // exactly two periodic directions.
    let per_edges: Vec<EdgeId> = (0..rep.graph.n_edges() as u32)
        .map(EdgeId)
        .filter(|&e| rep.edge_periodic(e))
        .collect();
    {
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
                r
            } else {
                x
            }
        }
        let mut half: BTreeMap<u32, usize> = BTreeMap::new();
        for &e in &per_edges {
            let a = rep.graph.edges[e.0 as usize].from;
            let b = rep.graph.edges[e.0 as usize].to;
            *half.entry(a.0).or_insert(0) += 1;
            *half.entry(b.0).or_insert(0) += 1;
            let ra = find(&mut parent, a.0 as usize);
            let rb = find(&mut parent, b.0 as usize);
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let mut comps: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (&v, _) in half.iter() {
            comps
                .entry(find(&mut parent, v as usize))
                .or_default()
                .push(v);
        }
        for (_, verts) in comps {
            let circle = verts.iter().all(|&v| {
                half.get(&v) == Some(&2)
                    && periodic_directions
                        .get(&v)
                        .map_or(false, |d| d.len() == 2)
            });
            if circle {
                for v in verts {
                    non.insert(v);
                }
            }
        }
    }
    let principal: Vec<VertexId> = periodic
        .iter()
        .copied()
        .filter(|v| !non.contains(&v.0))
        .collect();
    let non_principal: Vec<VertexId> = periodic
        .iter()
        .copied()
        .filter(|v| non.contains(&v.0))
        .collect();
    // Nielsen classes over fixed vertices.
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find2(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find2(parent, parent[x]);
            parent[x] = r;
            r
        } else {
            x
        }
    }
    let fixed: Vec<u32> = (0..nv as u32)
        .filter(|&v| rep.vertex_image[v as usize] == VertexId(v))
        .collect();
    for &e in &table.fixed_edges {
        let a = rep.graph.edges[e.0 as usize].from.0 as usize;
        let b = rep.graph.edges[e.0 as usize].to.0 as usize;
        let (ra, rb) = (find2(&mut parent, a), find2(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    for list in table.eg.values() {
        for rho in list {
            let a = rep.graph.from(rho.edges[0]).0 as usize;
            let b = rep.graph.to(rho.edges[rho.len() - 1]).0 as usize;
            let (ra, rb) = (find2(&mut parent, a), find2(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let mut class_map: BTreeMap<usize, Vec<VertexId>> = BTreeMap::new();
    for &v in &fixed {
        class_map
            .entry(find2(&mut parent, v as usize))
            .or_default()
            .push(VertexId(v));
    }
    let nielsen_classes: Vec<Vec<VertexId>> = class_map.into_values().collect();
    Ok(PrincipalReport {
        periodic,
        principal,
        non_principal,
        periodic_directions,
        nielsen_classes,
        notes: vec![
            "Nielsen endpoints derived from period-one data (fixed edges, exponential Nielsen paths, linear families)".into(),
        ],
    })
}

/// Verdict of the rotationless test.
#[derive(Clone, Debug)]
pub struct RotationlessReport {
    pub rotationless: bool,
    /// Human-readable descriptions of the violations found.
    pub offenders: Vec<String>,
    /// Conditions the verdict relies on that the period-one data cannot
    /// fully confirm.
    pub caveats: Vec<String>,
    pub principal: PrincipalReport,
}

/// A representative is rotationless when every principal periodic vertex is
/// fixed and every periodic direction at a principal vertex is fixed.
pub fn is_rotationless(rep: &TopRep, table: &InpTable) -> Result<RotationlessReport> {
    let pr = principal_vertices(rep, table)?;
    let mut offenders = Vec::new();
    for &v in &pr.principal {
        if rep.vertex_image[v.0 as usize] != v {
            offenders.push(format!("principal vertex v{} is periodic but not fixed", v.0));
        }
        for &d in &pr.periodic_directions[&v.0] {
            if rep.df(d)? != d {
                offenders.push(format!(
                    "periodic direction {} at principal vertex v{} is not fixed",
                    rep.graph.edge_name(d),
                    v.0
                ));
            }
        }
    }
    let rotationless = offenders.is_empty();
    let mut caveats = Vec::new();
    if rotationless {
        for &v in &pr.non_principal {
            let moved = rep.vertex_image[v.0 as usize] != v
                || pr.periodic_directions[&v.0]
                    .iter()
                    .any(|&d| rep.df(d).map(|x| x != d).unwrap_or(true));
            if moved {
                caveats.push(format!(
                    "vertex v{} was excluded by the two-direction rule; the verdict relies on it not bounding an indivisible periodic Nielsen path",
                    v.0
                ));
            }
        }
    }
    Ok(RotationlessReport {
        rotationless,
        offenders,
        caveats,
        principal: pr,
    })
}

/// The smallest rotationless power found, with its certificate data.
#[derive(Debug)]
pub struct RotationlessPower {
    /// `φᵏ` is rotationless.
    pub k: usize,
    /// The least common multiple of all vertex and direction periods of the
    /// base representative — a certified upper bound for `k`.
    pub period_lcm: usize,
    /// A normalized train-track representative of `φᵏ`.
    pub rep: TopRep,
    pub report: RotationlessReport,
    /// Rank-only a-priori bounds, when computable.
    pub bound: Option<RotationlessBound>,
}

/// Find the smallest `k` such that `φᵏ` has a rotationless train-track
/// representative, searching `k = 1, …, p` where `p` is the least common
/// multiple of all vertex- and direction-periods of a representative of
/// `φ` (every periodic vertex and direction of that representative is
/// fixed by the `p`-th power, so `p` is a sound cap), with `2p` and `4p`
/// as safety nets.
pub fn rotationless_power(phi: &Automorphism) -> Result<RotationlessPower> {
    let build = |psi: &Automorphism| -> Result<(TopRep, RotationlessReport)> {
        let out = rtt(psi, &[])?;
        let mut rep = out.rep;
        normalize(&mut rep)?;
        let table = inp_table(&rep)?;
        let report = is_rotationless(&rep, &table)?;
        Ok((rep, report))
    };
    let (rep1, report1) = build(phi)?;
    let bound = rotationless_bound(rep1.rank()).ok();
    let mut p: usize = 1;
    for v in 0..rep1.graph.n_verts {
        if let Some(per) = vertex_period(&rep1, VertexId(v as u32)) {
            p = num_integer::lcm(p, per);
        }
    }
    for e in 0..rep1.graph.n_edges() as u32 {
        for d in [OEdge::fwd(EdgeId(e)), OEdge::back(EdgeId(e))] {
            if let Some(per) = direction_period(&rep1, d) {
                p = num_integer::lcm(p, per);
            }
        }
    }
    if report1.rotationless {
        return Ok(RotationlessPower {
            k: 1,
            period_lcm: p,
            rep: rep1,
            report: report1,
            bound,
        });
    }
    if p > 10_000 {
        return Err(Error::Budget(format!(
            "rotationless power: period certificate {p} exceeds the search budget"
        )));
    }
    let mut tries: Vec<usize> = (2..=p).collect();
    for extra in [2 * p, 4 * p] {
        if extra > 1 && !tries.contains(&extra) {
            tries.push(extra);
        }
    }
    for k in tries {
        let psi = phi.pow(k);
        if psi.max_image_len() > 200_000 {
            return Err(Error::Budget(format!(
                "rotationless power: image growth at power {k} exceeds the budget"
            )));
        }
        let (rep, report) = build(&psi)?;
        if report.rotationless {
            return Ok(RotationlessPower {
                k,
                period_lcm: p,
                rep,
                report,
                bound,
            });
        }
    }
    Err(Error::Budget(format!(
        "no rotationless power found up to 4·lcm of periods = {}",
        4 * p
    )))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{EdgeData, MarkedGraph};
    use crate::toprep::{Filtration, Stratum};
    use crate::words::Letter;

    fn aut(rank: usize, images: &[&str]) -> Automorphism {
        let imgs = images.iter().map(|s| Word::parse(s).unwrap()).collect();
        Automorphism::new(rank, imgs).unwrap()
    }

    fn rep_of(phi: &Automorphism) -> TopRep {
        let out = rtt(phi, &[]).unwrap();
        let mut rep = out.rep;
        normalize(&mut rep).unwrap();
        rep
    }

    fn pp(rep: &TopRep, s: &str) -> Path {
        rep.graph.parse_path(s, false).unwrap()
    }

    // -- permutation-order bounds ------------------------------------------

    #[test]
    fn landau_matches_the_classical_table() {
        let expect: [u128; 16] = [1, 1, 2, 3, 4, 6, 6, 12, 15, 20, 30, 30, 60, 60, 84, 105];
        for (m, &g) in expect.iter().enumerate() {
            assert_eq!(landau_g(m).unwrap(), g, "g({m})");
        }
        assert_eq!(landau_g(30).unwrap(), 4620);
    }

    #[test]
    fn rotationless_bound_rank_two_is_exact() {
        let b = rotationless_bound(2).unwrap();
        assert_eq!(b.g_arg, 15);
        assert_eq!(b.g_value, 105);
        assert_eq!(b.improved_g_arg, 6);
        assert_eq!(b.improved_g_value, 6);
        assert_eq!(b.three_exp, 3);
        // 105! · 27 computed independently.
        let mut f = BigUint::from(1u32);
        for i in 2u32..=105 {
            f *= BigUint::from(i);
        }
        assert_eq!(b.bound.as_ref().unwrap(), &(f * BigUint::from(27u32)));
        // 6! · 27 = 19440.
        assert_eq!(
            b.improved_bound.as_ref().unwrap(),
            &BigUint::from(19_440u32)
        );
        // Digit estimates agree with the exact values.
        let exact_digits = b.bound.as_ref().unwrap().to_string().len() as f64;
        assert!((b.bound_log10.floor() + 1.0 - exact_digits).abs() <= 1.0);
        let exact_digits = b.improved_bound.as_ref().unwrap().to_string().len() as f64;
        assert!((b.improved_bound_log10.floor() + 1.0 - exact_digits).abs() <= 1.0);
    }

    // -- bounded cancellation ----------------------------------------------

    #[test]
    fn cancellation_bound_is_zero_for_rigid_maps() {
        let id = rep_of(&Automorphism::identity(3));
        assert_eq!(bcc(&id), 0);
        let swap = rep_of(&aut(2, &["b", "a"]));
        assert_eq!(bcc(&swap), 0);
    }

    fn all_tight_paths(rep: &TopRep, max_len: usize) -> Vec<Path> {
        let mut out: Vec<Path> = Vec::new();
        let mut frontier: Vec<Path> = (0..rep.graph.n_edges() as u32)
            .flat_map(|e| [OEdge::fwd(EdgeId(e)), OEdge::back(EdgeId(e))])
            .map(Path::one)
            .collect();
        for _ in 1..=max_len {
            out.extend(frontier.iter().cloned());
            let mut next = Vec::new();
            for p in &frontier {
                let last = p.edges[p.len() - 1];
                for d in rep.graph.out_edges(rep.graph.to(last)) {
                    if d != last.reversed() {
                        let mut q = p.clone();
                        q.edges.push(d);
                        next.push(q);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn cancellation_bound_is_sound_on_small_paths() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let b = bcc(&rep);
        assert!(b >= 1, "expansion must cancel somewhere, got {b}");
        // Exhaustive oracle: cancellation between images at every tight
        // juncture of paths of length ≤ 6.
        let paths = all_tight_paths(&rep, 6);
        let images: Vec<Path> = paths.iter().map(|p| rep.map_path(p)).collect();
        let mut max_seen = 0usize;
        for (i, p) in paths.iter().enumerate() {
            for (j, q) in paths.iter().enumerate() {
                let lp = p.edges[p.len() - 1];
                let fq = q.edges[0];
                if rep.graph.to(lp) != rep.graph.from(fq) || fq == lp.reversed() {
                    continue;
                }
                let cancel = images[i].reversed().common_prefix_len(&images[j]);
                assert!(
                    cancel <= b,
                    "cancellation {cancel} exceeds bound {b} at pair {i},{j}"
                );
                max_seen = max_seen.max(cancel);
            }
        }
        assert!(max_seen >= 1);
    }

    // -- stratum constants -------------------------------------------------

    #[test]
    fn critical_constant_instantiates_the_formula() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let c = critical_constant(&rep, rep.filtration.strata.len()).unwrap();
        assert_eq!(c.l, 1, "both images already cross the stratum twice");
        assert_eq!(c.critical, 4 * c.bcc.max(1) + 1);
        assert_eq!(c.c0, c.critical + 2);
        assert_eq!(c.c_e, 6);
        assert_eq!(c.m_bound, 4);

        let fib = rep_of(&aut(2, &["ab", "a"]));
        let cf = critical_constant(&fib, fib.filtration.strata.len()).unwrap();
        assert_eq!(cf.l, 2, "the short image needs two iterates");
        assert_eq!(cf.critical, 8 * cf.bcc.max(1) + 1);
    }

    #[test]
    fn critical_constant_rejects_non_exponential_strata() {
        let rep = rep_of(&aut(2, &["a", "ba"]));
        for r in 1..=rep.filtration.strata.len() {
            assert!(matches!(
                critical_constant(&rep, r),
                Err(Error::Input(_))
            ));
        }
    }

    // -- indivisible Nielsen paths -----------------------------------------

    /// Brute-force oracle: all f#-fixed indivisible paths up to `max_len`.
    fn brute_inps(rep: &TopRep, max_len: usize) -> Vec<Path> {
        let paths = all_tight_paths(rep, max_len);
        let fixed: Vec<Path> = paths
            .into_iter()
            .filter(|p| is_nielsen_path(rep, p))
            .collect();
        let is_fixed = |p: &Path| is_nielsen_path(rep, p);
        let mut out: Vec<Path> = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &fixed {
            let divisible = (1..p.len()).any(|t| {
                is_fixed(&p.subpath(0, t)) && is_fixed(&p.subpath(t, p.len()))
            });
            if divisible {
                continue;
            }
            let canon = canonical_np(p);
            if seen.insert(path_key(&canon)) {
                out.push(canon);
            }
        }
        out.sort_by_key(path_key);
        out
    }

    #[test]
    fn eg_inp_of_the_standard_quadratic_example() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let r = rep.filtration.strata.len();
        let inps = find_eg_inps(&rep, r).unwrap();
        let expected = canonical_np(&pp(&rep, "abAB"));
        assert_eq!(inps, vec![expected.clone()]);
        // Independent oracle: exhaustive search over paths of length ≤ 8.
        let brute = brute_inps(&rep, 8);
        assert_eq!(brute, vec![expected]);
        assert!(is_nielsen_path(&rep, &inps[0]));
    }

    #[test]
    fn eg_inps_of_an_expanding_square() {
        // The square of the simplest expanding map on the rose.
        let phi = aut(2, &["ab", "a"]);
        let phi2 = phi.compose(&phi);
        let rep = rep_of(&phi2);
        let r = rep.filtration.strata.len();
        let inps = find_eg_inps(&rep, r).unwrap();
        for rho in &inps {
            assert!(is_nielsen_path(&rep, rho));
        }
        // The finder must agree with the brute-force oracle on its window.
        let brute = brute_inps(&rep, 10);
        let short: Vec<Path> = inps.iter().filter(|p| p.len() <= 10).cloned().collect();
        assert_eq!(short, brute);
    }

    // -- complete splittings -----------------------------------------------

    #[test]
    fn complete_splittings_of_the_quadratic_example() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let bab = pp(&rep, "bab");
        let cs = complete_split(&rep, &table, &bab).unwrap();
        let b = bab.edges[0];
        let a = bab.edges[1];
        assert_eq!(
            cs.pieces,
            vec![Piece::Edge(b), Piece::Edge(a), Piece::Edge(b)]
        );
        assert_eq!(cs.offsets, vec![0, 1, 2]);
        assert_eq!(complete_split_count(&rep, &table, &bab), 1);

        let rho = pp(&rep, "abAB");
        let cs = complete_split(&rep, &table, &rho).unwrap();
        assert_eq!(cs.pieces.len(), 1);
        assert!(matches!(cs.pieces[0], Piece::EgInp(_)));
        assert_eq!(complete_split_count(&rep, &table, &rho), 1);
    }

    #[test]
    fn complete_splittings_of_linear_families() {
        // a fixed, b with twist a, c with twist a²: linear edges over the
        // same circuit with distinct exponents.
        let rep = rep_of(&aut(3, &["a", "ba", "caa"]));
        let table = inp_table(&rep).unwrap();
        assert_eq!(table.linear.len(), 2);
        for le in &table.linear {
            assert_eq!(rep.graph.path_label(&le.w).to_string(), "a");
        }
        let ds: BTreeSet<i64> = table.linear.iter().map(|l| l.d).collect();
        assert_eq!(ds, BTreeSet::from([1, 2]));

        let p = pp(&rep, "baB");
        let cs = complete_split(&rep, &table, &p).unwrap();
        assert_eq!(cs.pieces.len(), 1);
        assert!(matches!(cs.pieces[0], Piece::NegInp { k: 1, .. }));
        assert_eq!(complete_split_count(&rep, &table, &p), 1);

        let p = pp(&rep, "baC");
        let cs = complete_split(&rep, &table, &p).unwrap();
        assert_eq!(cs.pieces.len(), 1);
        assert!(matches!(cs.pieces[0], Piece::Exceptional { k: 1, .. }));
        assert_eq!(complete_split_count(&rep, &table, &p), 1);

        let p = pp(&rep, "bC");
        let cs = complete_split(&rep, &table, &p).unwrap();
        assert_eq!(cs.pieces.len(), 1);
        assert!(matches!(cs.pieces[0], Piece::Exceptional { k: 0, .. }));

        let p = pp(&rep, "caa");
        let cs = complete_split(&rep, &table, &p).unwrap();
        assert_eq!(cs.pieces.len(), 3);
        assert!(cs.pieces.iter().all(|x| matches!(x, Piece::Edge(_))));
    }

    #[test]
    fn splittings_refine_under_the_map() {
        // f#-images of completely split paths stay completely split.
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        for s in ["b", "ab", "abAB", "bab"] {
            let mut p = pp(&rep, s);
            for _ in 0..3 {
                assert!(
                    complete_split(&rep, &table, &p).is_some(),
                    "no splitting for iterate of {s}"
                );
                assert_eq!(complete_split_count(&rep, &table, &p), 1, "iterate of {s}");
                p = rep.map_path(&p);
            }
        }
    }

    // -- rays --------------------------------------------------------------

    #[test]
    fn rays_of_fixed_directions_share_tails_as_predicted() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let ea = OEdge::fwd(EdgeId(rep.graph.parse_path("a", false).unwrap().edges[0].id.0));
        let eb = OEdge::fwd(EdgeId(rep.graph.parse_path("b", false).unwrap().edges[0].id.0));
        let mut ra = Ray::eigenray(&rep, &table, ea).unwrap();
        let mut rb = Ray::eigenray(&rep, &table, eb).unwrap();
        let hit = rays_common_tail(&rep, &table, &mut ra, &mut rb).unwrap();
        let (i, j) = hit.expect("the expanding directions converge to the same end");
        // Verify a long stretch of actual agreement.
        let pa = ra.full_prefix(&rep, &table, i + 300).unwrap();
        let pb = rb.full_prefix(&rep, &table, j + 300).unwrap();
        assert_eq!(pa.edges[i..i + 300], pb.edges[j..j + 300]);

        // A ray and itself agree at offset zero.
        let sigma = pp(&rep, "bab");
        let mut r1 = Ray::generated(&rep, &table, sigma.clone()).unwrap();
        let mut r2 = Ray::generated(&rep, &table, sigma).unwrap();
        assert_eq!(
            rays_common_tail(&rep, &table, &mut r1, &mut r2).unwrap(),
            Some((0, 0))
        );
    }

    #[test]
    fn opposite_rays_do_not_share_tails() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let eb = OEdge::fwd(pp(&rep, "b").edges[0].id);
        let ebr = eb.reversed();
        let mut ra = Ray::eigenray(&rep, &table, OEdge::fwd(pp(&rep, "a").edges[0].id)).unwrap();
        let mut rb = Ray::eigenray(&rep, &table, ebr).unwrap();
        assert_eq!(rays_common_tail(&rep, &table, &mut ra, &mut rb).unwrap(), None);
        // Finite corroboration: no window of 60 edges matches at any small
        // pair of offsets.
        let pa = ra.full_prefix(&rep, &table, 120).unwrap();
        let pb = rb.full_prefix(&rep, &table, 120).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_ne!(pa.edges[i..i + 60], pb.edges[j..j + 60]);
            }
        }
    }

    #[test]
    fn nielsen_generators_are_rejected() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let rho = pp(&rep, "abAB");
        let mut r1 = Ray::generated(&rep, &table, rho.clone()).unwrap();
        let mut r2 = Ray::generated(&rep, &table, rho).unwrap();
        match rays_common_tail(&rep, &table, &mut r1, &mut r2) {
            Err(Error::Input(msg)) => assert!(msg.contains("degenerate ray"), "{msg}"),
            other => panic!("expected an input error, got {other:?}"),
        }
    }

    // -- lifts and fixed points --------------------------------------------

    /// Brute-force oracle: all fixed cover vertices within the given radius.
    fn ball_fixed_vertices(rep: &TopRep, lift: &Lift, radius: usize) -> Vec<Path> {
        let mut out = Vec::new();
        if lift.apply_cover(rep, &Path::empty()).is_empty() {
            out.push(Path::empty());
        }
        let base = rep.graph.base;
        let mut frontier: Vec<Path> = rep
            .graph
            .out_edges(base)
            .into_iter()
            .map(Path::one)
            .collect();
        for _ in 0..radius {
            let mut next = Vec::new();
            for p in &frontier {
                if lift.apply_cover(rep, p) == *p {
                    out.push(p.clone());
                }
                let last = p.edges[p.len() - 1];
                for d in rep.graph.out_edges(rep.graph.to(last)) {
                    if d != last.reversed() {
                        let mut q = p.clone();
                        q.edges.push(d);
                        next.push(q);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    fn check_walk_against_ball(rep: &TopRep, table: &InpTable, lift: &Lift, radius: usize) {
        let out = find_fixed_point(rep, table, lift).unwrap();
        let ball = ball_fixed_vertices(rep, lift, radius);
        match out {
            FixedPointOutcome::Vertex { at } => {
                assert_eq!(lift.apply_cover(rep, &at), at, "claimed vertex not fixed");
                if at.len() <= radius {
                    assert!(ball.contains(&at), "claimed vertex missing from the ball");
                }
            }
            FixedPointOutcome::Interior { .. } => {}
            FixedPointOutcome::Empty { .. } => {
                assert!(
                    ball.is_empty(),
                    "walk reported empty but the ball holds {:?}",
                    ball
                );
            }
        }
    }

    #[test]
    fn trivial_lift_fixes_the_basepoint() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let lift = Lift::new(&rep, Path::empty()).unwrap();
        match find_fixed_point(&rep, &table, &lift).unwrap() {
            FixedPointOutcome::Vertex { at } => assert!(at.is_empty()),
            other => panic!("expected the basepoint to be fixed, got {other:?}"),
        }
    }

    #[test]
    fn shifted_lift_finds_a_fixed_vertex_matching_the_ball() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        for rho in ["a", "ab", "b"] {
            let lift = Lift::new(&rep, pp(&rep, rho)).unwrap();
            check_walk_against_ball(&rep, &table, &lift, 10);
        }
    }

    #[test]
    fn lift_action_conjugates_the_map() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let lift = Lift::new(&rep, pp(&rep, "b")).unwrap();
        let w = Word::parse("a").unwrap();
        // b·φ(a)·b̄ = b(ab)B = ba.
        assert_eq!(lift.action(&rep, &w).to_string(), "ba");
        let trivial = Lift::new(&rep, Path::empty()).unwrap();
        assert_eq!(trivial.action(&rep, &w).to_string(), "ab");
    }

    // -- principal vertices and rotationless powers ------------------------

    fn two_vertex_fixture() -> TopRep {
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

    #[test]
    fn principal_vertices_of_the_quadratic_example() {
        let rep = rep_of(&aut(2, &["ab", "bab"]));
        let table = inp_table(&rep).unwrap();
        let pr = principal_vertices(&rep, &table).unwrap();
        assert_eq!(pr.periodic.len(), 1);
        assert_eq!(pr.principal, pr.periodic);
        assert!(pr.non_principal.is_empty());
        let dirs = &pr.periodic_directions[&pr.principal[0].0];
        assert!(dirs.len() >= 3, "expected at least three fixed directions");
        assert_eq!(pr.nielsen_classes.len(), 1);
    }

    #[test]
    fn principal_vertices_of_the_two_vertex_fixture() {
        let rep = two_vertex_fixture();
        let table = inp_table(&rep).unwrap();
        let pr = principal_vertices(&rep, &table).unwrap();
        assert_eq!(pr.periodic, vec![VertexId(0), VertexId(1)]);
        assert_eq!(pr.principal, vec![VertexId(0), VertexId(1)]);
        // v1 carries exactly the two fixed directions c and d, in distinct
        // strata — still principal.
        assert_eq!(pr.periodic_directions[&1].len(), 2);
        // Two distinct Nielsen classes: nothing joins the two vertices.
        assert_eq!(pr.nielsen_classes.len(), 2);
        let rr = is_rotationless(&rep, &table).unwrap();
        assert!(rr.rotationless, "offenders: {:?}", rr.offenders);
    }

    #[test]
    fn fixed_points_in_the_two_vertex_fixture() {
        let rep = two_vertex_fixture();
        let table = inp_table(&rep).unwrap();
        for rho in ["", "b", "ba"] {
            let path = if rho.is_empty() {
                Path::empty()
            } else {
                pp(&rep, rho)
            };
            let lift = Lift::new(&rep, path).unwrap();
            check_walk_against_ball(&rep, &table, &lift, 8);
        }
    }

    #[test]
    fn rotationless_powers_of_small_maps() {
        assert_eq!(rotationless_power(&Automorphism::identity(2)).unwrap().k, 1);
        assert_eq!(rotationless_power(&aut(2, &["ab", "bab"])).unwrap().k, 1);
        let swap = rotationless_power(&aut(2, &["b", "a"])).unwrap();
        assert_eq!(swap.k, 2);
        assert_eq!(swap.period_lcm, 2);
        let fib = rotationless_power(&aut(2, &["ab", "a"])).unwrap();
        assert_eq!(fib.k, 2, "the expanding pair swaps two directions");
        assert!(fib.report.rotationless);
    }

    #[test]
    fn rotationless_powers_persist_under_iteration() {
        // If φᵏ is rotationless then so is φᵏᵐ.  Powers beyond φ⁶ blow
        // past the representative-construction budgets (the stretch
        // factor is ~φ⁸ ≈ 47), so the check stops at m = 3.
        let phi = aut(2, &["ab", "a"]);
        let k = rotationless_power(&phi).unwrap().k;
        for m in 2..=3 {
            let psi = phi.pow(k * m);
            let rep = rep_of(&psi);
            let table = inp_table(&rep).unwrap();
            let rr = is_rotationless(&rep, &table).unwrap();
            assert!(rr.rotationless, "power {} not rotationless", k * m);
        }
    }

    // -- property tests ----------------------------------------------------

    use proptest::prelude::*;

    fn random_automorphism(rank: usize, seed: u64) -> Automorphism {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut phi = Automorphism::identity(rank);
        for _ in 0..4 {
            let i = rng.gen_range(0..rank);
            let j = rng.gen_range(0..rank);
            let mut images: Vec<Word> = (0..rank)
                .map(|g| Word::letter(Letter::gen_pos(g)))
                .collect();
            match rng.gen_range(0..3) {
                0 if i != j => {
                    // x_i ↦ x_i x_j
                    images[i] = Word::letter(Letter::gen_pos(i))
                        .concat(&Word::letter(Letter::gen_pos(j)));
                }
                1 if i != j => {
                    // swap x_i ↔ x_j
                    images.swap(i, j);
                }
                _ => {
                    // x_i ↦ x_i⁻¹
                    images[i] = Word::letter(Letter::gen_pos(i)).inverse();
                }
            }
            let step = Automorphism::new(rank, images).unwrap();
            phi = step.compose(&phi);
        }
        phi
    }

    proptest! {
        #![proptest_config(ProptestConfig {
            cases: 12, ..ProptestConfig::default()
        })]

        #[test]
        fn found_inps_are_fixed_and_bcc_is_sound(seed in 0u64..400) {
            let phi = random_automorphism(3, seed);
            let rep = match rtt(&phi, &[]) {
                Ok(out) => {
                    let mut rep = out.rep;
                    if normalize(&mut rep).is_err() {
                        return Ok(());
                    }
                    rep
                }
                Err(_) => return Ok(()),
            };
            // Every indivisible Nielsen path the window search reports is
            // genuinely f#-fixed.
            for (i, s) in rep.filtration.strata.iter().enumerate() {
                if matches!(s.kind, StratumKind::Eg) {
                    if let Ok(inps) = find_eg_inps(&rep, i + 1) {
                        for rho in &inps {
                            prop_assert!(is_nielsen_path(&rep, rho));
                        }
                    }
                }
            }
            // Cancellation at random tight junctures respects the bound.
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
            let b = bcc(&rep);
            let n = rep.graph.n_edges() as u32;
            for _ in 0..60 {
                let mut p = Path::one(if rng.gen() {
                    OEdge::fwd(EdgeId(rng.gen_range(0..n)))
                } else {
                    OEdge::back(EdgeId(rng.gen_range(0..n)))
                });
                for _ in 0..rng.gen_range(0..4) {
                    let last = p.edges[p.len() - 1];
                    let opts: Vec<OEdge> = rep
                        .graph
                        .out_edges(rep.graph.to(last))
                        .into_iter()
                        .filter(|&d| d != last.reversed())
                        .collect();
                    if opts.is_empty() {
                        break;
                    }
                    p.edges.push(opts[rng.gen_range(0..opts.len())]);
                }
                let last = p.edges[p.len() - 1];
                let opts: Vec<OEdge> = rep
                    .graph
                    .out_edges(rep.graph.to(last))
                    .into_iter()
                    .filter(|&d| d != last.reversed())
                    .collect();
                if opts.is_empty() {
                    continue;
                }
                let q = Path::one(opts[rng.gen_range(0..opts.len())]);
                let cancel = rep
                    .map_path(&p)
                    .reversed()
                    .common_prefix_len(&rep.map_path(&q));
                prop_assert!(cancel <= b, "cancellation {} > bound {}", cancel, b);
            }
        }
    }
}
