//! Free group automorphisms given by basis images: parsing, composition,
//! inversion, and inner/outer equality.
//!
//! Inversion doubles as the invertibility check: the wedge of the image
//! loops is folded while carrying preimage words (with gauge corrections at
//! the moving vertex), and the endomorphism is an automorphism exactly when
//! the fold ends at the rose. A parallel-edge fold — the only rank-dropping
//! kind — can then never occur, which is what makes the gauge bookkeeping
//! total.

use crate::words::{Letter, Word};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// An automorphism (or endomorphism candidate) of the rank-`rank` free
/// group, by images of the basis.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Automorphism {
    pub rank: usize,
    pub images: Vec<Word>,
}

impl fmt::Debug for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{}↦{}", Letter::gen_pos(i).to_char(), w))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl Automorphism {
    pub fn identity(rank: usize) -> Automorphism {
        Automorphism {
            rank,
            images: (0..rank).map(|i| Word::letter(Letter::gen_pos(i))).collect(),
        }
    }

    pub fn new(rank: usize, images: Vec<Word>) -> Result<Automorphism> {
        if images.len() != rank {
            return Err(Error::Input(format!(
                "expected {rank} images, got {}",
                images.len()
            )));
        }
        for w in &images {
            if w.rank_hint() > rank {
                return Err(Error::Input(format!(
                    "image {w} uses a generator outside rank {rank}"
                )));
            }
        }
        Ok(Automorphism { rank, images })
    }

    pub fn apply_letter(&self, l: Letter) -> Word {
        let im = &self.images[l.gen()];
        if l.is_positive() {
            im.clone()
        } else {
            im.inverse()
        }
    }

    pub fn apply(&self, w: &Word) -> Word {
        let mut out = Word::identity();
        for &l in &w.0 {
            out = out.concat(&self.apply_letter(l));
        }
        out
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Automorphism) -> Automorphism {
        Automorphism {
            rank: self.rank,
            images: other.images.iter().map(|w| self.apply(w)).collect(),
        }
    }

    pub fn pow(&self, k: usize) -> Automorphism {
        let mut acc = Automorphism::identity(self.rank);
        for _ in 0..k {
            acc = self.compose(&acc);
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        self.images
            .iter()
            .enumerate()
            .all(|(i, w)| *w == Word::letter(Letter::gen_pos(i)))
    }

    pub fn max_image_len(&self) -> usize {
        self.images.iter().map(|w| w.len()).max().unwrap_or(0)
    }

    /// Invert, or prove non-invertibility.
    pub fn inverse(&self) -> Result<Automorphism> {
        let folder = OutputFold::new(self)?;
        folder.read_inverse(self.rank)
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse().is_ok()
    }

    /// Is `self = conj_w ∘ other` for some word `w` (same outer class)?
    /// Returns a witness conjugator.
    pub fn outer_equal(&self, other: &Automorphism) -> Option<Word> {
        if self.rank != other.rank {
            return None;
        }
        let inv = other.inverse().ok()?;
        let delta = self.compose(&inv); // want: inner
        delta.as_inner()
    }

    /// If `self` is the inner automorphism `x ↦ w x w⁻¹`, return `w`.
    pub fn as_inner(&self) -> Option<Word> {
        if self.rank == 0 {
            return Some(Word::identity());
        }
        if self.rank == 1 {
            return self.is_identity().then(Word::identity);
        }
        // From δ(a) = w a w⁻¹: cyclically reduce δ(a) = u·c·u⁻¹; need c = a,
        // and then w ∈ u·⟨a⟩. Scan a bounded window of exponents.
        let da = &self.images[0];
        let (core, u) = da.cyclic_reduce();
        if core != Word::letter(Letter::gen_pos(0)) {
            return None;
        }
        let bound = self.max_image_len() + 2;
        for k in 0..=bound {
            for w in [
                u.concat(&Word(vec![Letter::gen_pos(0); k])),
                u.concat(&Word(vec![Letter::gen_neg(0); k])),
            ] {
                let ok = (0..self.rank).all(|i| {
                    let x = Word::letter(Letter::gen_pos(i));
                    self.images[i] == x.conjugate_by(&w)
                });
                if ok {
                    return Some(w);
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Folding with preimage outputs.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct OEdgeRec {
    from: u32,
    to: u32,
    letter: usize, // base generator
    out: Word,     // preimage word along the forward traversal
    alive: bool,
}

struct OutputFold {
    edges: Vec<OEdgeRec>,
    parent: Vec<u32>, // union-find over vertices; root 0 is the basepoint
}

impl OutputFold {
    fn new(phi: &Automorphism) -> Result<OutputFold> {
        let mut edges = Vec::new();
        let mut n_verts = 1u32;
        for (i, w) in phi.images.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Input(format!(
                    "not invertible: generator {} has trivial image",
                    Letter::gen_pos(i).to_char()
                )));
            }
            let mut prev = 0u32;
            for (j, &l) in w.0.iter().enumerate() {
                let next = if j + 1 == w.len() {
                    0
                } else {
                    n_verts += 1;
                    n_verts - 1
                };
                let out = if j == 0 {
                    Word::letter(Letter::gen_pos(i))
                } else {
                    Word::identity()
                };
                if l.is_positive() {
                    edges.push(OEdgeRec {
                        from: prev,
                        to: next,
                        letter: l.gen(),
                        out,
                        alive: true,
                    });
                } else {
                    edges.push(OEdgeRec {
                        from: next,
                        to: prev,
                        letter: l.gen(),
                        out: out.inverse(),
                        alive: true,
                    });
                }
                prev = next;
            }
        }
        let mut f = OutputFold {
            edges,
            parent: (0..n_verts).collect(),
        };
        f.fold()?;
        Ok(f)
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    /// Merge vertex `b` into `a`. The basepoint (root of 0) must stay a root.
    fn union_into(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb as usize] = ra;
        }
    }

    fn fold(&mut self) -> Result<()> {
        loop {
            // Find a foldable pair: two alive edges with the same oriented
            // letter leaving the same vertex class.
            let mut found: Option<(usize, usize, bool)> = None;
            'scan: for i in 0..self.edges.len() {
                if !self.edges[i].alive {
                    continue;
                }
                for j in (i + 1)..self.edges.len() {
                    if !self.edges[j].alive {
                        continue;
                    }
                    if self.edges[i].letter != self.edges[j].letter {
                        continue;
                    }
                    let (fi, ti) = (self.find(self.edges[i].from), self.find(self.edges[i].to));
                    let (fj, tj) = (self.find(self.edges[j].from), self.find(self.edges[j].to));
                    if fi == fj {
                        found = Some((i, j, true)); // same source, forward
                        break 'scan;
                    }
                    if ti == tj {
                        found = Some((i, j, false)); // same target (reverse fold)
                        break 'scan;
                    }
                }
            }
            let Some((i, j, fwd)) = found else {
                return Ok(());
            };
            let (pi, pj) = if fwd {
                (self.find(self.edges[i].to), self.find(self.edges[j].to))
            } else {
                (self.find(self.edges[i].from), self.find(self.edges[j].from))
            };
            let (oi, oj) = (self.edges[i].out.clone(), self.edges[j].out.clone());
            let base = self.find(0);
            if pi == pj {
                // Parallel fold: rank would drop — not an automorphism.
                return Err(Error::Input(
                    "not invertible: images generate a proper subgroup".into(),
                ));
            }
            // Choose which far endpoint to gauge: any one ≠ basepoint.
            let (keep, move_v, o_keep, o_move, move_edge) = if pj != base {
                (pi, pj, oi, oj, j)
            } else {
                (pj, pi, oj, oi, i)
            };
            debug_assert!(move_v != base);
            // Gauge g at move_v so the moved edge's output matches:
            // forward fold: want o_move·g = o_keep (outputs read from the
            // common source to the far end);
            // reverse fold: outputs read from far end to the common target:
            // want g⁻¹·o_move = o_keep.
            let g = if fwd {
                o_move.inverse().concat(&o_keep)
            } else {
                o_move.concat(&o_keep.inverse())
            };
            if !g.is_empty() {
                let ids: Vec<usize> = (0..self.edges.len())
                    .filter(|&k| self.edges[k].alive)
                    .collect();
                for k in ids {
                    let fr = self.find(self.edges[k].from);
                    let tr = self.find(self.edges[k].to);
                    let mut o = self.edges[k].out.clone();
                    if tr == move_v {
                        o = o.concat(&g);
                    }
                    if fr == move_v {
                        o = g.inverse().concat(&o);
                    }
                    self.edges[k].out = o;
                }
            }
            // Merge vertices and kill the moved edge.
            self.union_into(keep, move_v);
            self.edges[move_edge].alive = false;
        }
    }

    fn read_inverse(mut self, rank: usize) -> Result<Automorphism> {
        let base = self.find(0);
        let mut images: Vec<Option<Word>> = vec![None; rank];
        let mut alive_count = 0;
        for i in 0..self.edges.len() {
            if !self.edges[i].alive {
                continue;
            }
            alive_count += 1;
            let f = self.find(self.edges[i].from);
            let t = self.find(self.edges[i].to);
            if f != base || t != base {
                return Err(Error::Input(
                    "not invertible: images generate an infinite-index subgroup".into(),
                ));
            }
            let l = self.edges[i].letter;
            if l >= rank || images[l].is_some() {
                return Err(Error::Input(
                    "not invertible: folded graph is not the rose".into(),
                ));
            }
            images[l] = Some(self.edges[i].out.clone());
        }
        if alive_count != rank {
            return Err(Error::Input(
                "not invertible: images generate a proper subgroup".into(),
            ));
        }
        let images: Vec<Word> = images
            .into_iter()
            .map(|o| o.ok_or_else(|| Error::Input("not invertible: missing generator".into())))
            .collect::<Result<_>>()?;
        Ok(Automorphism { rank, images })
    }
}

// ---------------------------------------------------------------------------
// Input parsing.
// ---------------------------------------------------------------------------

/// External form: either JSON `{"rank":2,"images":{"a":"ab","b":"bab"}}` or
/// the text form `a->ab; b->bab`.
#[derive(Debug, Serialize, Deserialize)]
pub struct AutomorphismInput {
    pub rank: usize,
    pub images: BTreeMap<String, String>,
}

pub fn parse_automorphism(input: &str) -> Result<Automorphism> {
    let trimmed = input.trim();
    let parsed: AutomorphismInput = if trimmed.starts_with('{') {
        serde_json::from_str(trimmed)
            .map_err(|e| Error::Input(format!("bad JSON automorphism: {e}")))?
    } else {
        parse_text_form(trimmed)?
    };
    let mut images = vec![None; parsed.rank];
    for (k, v) in &parsed.images {
        let l = k
            .chars()
            .next()
            .filter(|_| k.len() == 1)
            .and_then(Letter::from_char)
            .filter(|l| l.is_positive())
            .ok_or_else(|| Error::Input(format!("bad generator name {k}")))?;
        if l.gen() >= parsed.rank {
            return Err(Error::Input(format!(
                "generator {k} outside rank {}",
                parsed.rank
            )));
        }
        let w = Word::parse(v).ok_or_else(|| Error::Input(format!("bad image word {v}")))?;
        if w.is_empty() {
            return Err(Error::Input(format!("empty image for generator {k}")));
        }
        images[l.gen()] = Some(w);
    }
    let images: Vec<Word> = images
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            o.ok_or_else(|| {
                Error::Input(format!(
                    "missing image for generator {}",
                    Letter::gen_pos(i).to_char()
                ))
            })
        })
        .collect::<Result<_>>()?;
    Automorphism::new(parsed.rank, images)
}

fn parse_text_form(s: &str) -> Result<AutomorphismInput> {
    let mut images = BTreeMap::new();
    let mut max_gen = 0usize;
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (lhs, rhs) = part
            .split_once("->")
            .ok_or_else(|| Error::Input(format!("expected `x->word` in `{part}`")))?;
        let name = lhs.trim().to_string();
        let l = name
            .chars()
            .next()
            .filter(|_| name.len() == 1)
            .and_then(Letter::from_char)
            .filter(|l| l.is_positive())
            .ok_or_else(|| Error::Input(format!("bad generator name {name}")))?;
        max_gen = max_gen.max(l.gen() + 1);
        let w = rhs.trim().to_string();
        if Word::parse(&w).is_none() {
            return Err(Error::Input(format!("bad image word {w}")));
        }
        images.insert(name, w);
    }
    if images.is_empty() {
        return Err(Error::Input("empty automorphism".into()));
    }
    Ok(AutomorphismInput {
        rank: max_gen,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aut(rank: usize, imgs: &[&str]) -> Automorphism {
        Automorphism::new(
            rank,
            imgs.iter().map(|s| Word::parse(s).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn inverse_roundtrip() {
        let phi = aut(2, &["ab", "bab"]);
        let inv = phi.inverse().unwrap();
        assert!(phi.compose(&inv).is_identity());
        assert!(inv.compose(&phi).is_identity());
        let psi = aut(3, &["b", "c", "abc"]);
        let inv = psi.inverse().unwrap();
        assert!(psi.compose(&inv).is_identity());
    }

    #[test]
    fn non_invertible_detected() {
        // a↦ab, b↦ab generates a proper subgroup.
        let phi = aut(2, &["ab", "ab"]);
        assert!(phi.inverse().is_err());
        // a↦aa is injective but not surjective.
        let phi = aut(1, &["aa"]);
        assert!(phi.inverse().is_err());
    }

    #[test]
    fn inner_detection() {
        // x ↦ (ab) x (ab)⁻¹
        let w = Word::parse("ab").unwrap();
        let phi = Automorphism {
            rank: 2,
            images: (0..2)
                .map(|i| Word::letter(crate::words::Letter::gen_pos(i)).conjugate_by(&w))
                .collect(),
        };
        assert_eq!(phi.as_inner(), Some(w));
        let swap = aut(2, &["b", "a"]);
        assert_eq!(swap.as_inner(), None);
    }

    #[test]
    fn outer_equality() {
        let phi = aut(2, &["ab", "bab"]);
        // conjugate of phi by w = a: images w·φ(x)·w⁻¹
        let w = Word::parse("a").unwrap();
        let phi_conj = Automorphism {
            rank: 2,
            images: phi.images.iter().map(|u| u.conjugate_by(&w)).collect(),
        };
        assert!(phi_conj.outer_equal(&phi).is_some());
        assert!(phi.outer_equal(&aut(2, &["b", "a"])).is_none());
    }

    #[test]
    fn parse_both_forms() {
        let a = parse_automorphism(r#"{"rank":2,"images":{"a":"ab","b":"bab"}}"#).unwrap();
        let b = parse_automorphism("a->ab; b->bab").unwrap();
        assert_eq!(a, b);
        assert!(parse_automorphism("a->ab; b->").is_err());
    }

    #[test]
    fn swap_power_two_is_identity() {
        let swap = aut(2, &["b", "a"]);
        assert!(!swap.is_identity());
        assert!(swap.pow(2).is_identity());
    }
}
