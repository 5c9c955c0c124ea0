//! Letters and freely reduced words in a fixed free basis.
//!
//! The canonical text form writes the basis as `a, b, c, …` and inverses as
//! the corresponding capital letters, so `abA` is `a·b·a⁻¹`.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One letter of a word: generator `gen()` with a sign. Internally a nonzero
/// integer, `k+1`-th generator as `k+1`, its inverse as `-(k+1)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter(pub i16);

impl Letter {
    pub fn gen_pos(g: usize) -> Letter {
        Letter(g as i16 + 1)
    }
    pub fn gen_neg(g: usize) -> Letter {
        Letter(-(g as i16 + 1))
    }
    /// Generator index, 0-based.
    pub fn gen(self) -> usize {
        (self.0.unsigned_abs() as usize) - 1
    }
    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
    pub fn inverse(self) -> Letter {
        Letter(-self.0)
    }
    pub fn from_char(c: char) -> Option<Letter> {
        match c {
            'a'..='z' => Some(Letter(c as i16 - 'a' as i16 + 1)),
            'A'..='Z' => Some(Letter(-(c as i16 - 'A' as i16 + 1))),
            _ => None,
        }
    }
    pub fn to_char(self) -> char {
        let g = self.gen() as u8;
        if self.is_positive() {
            (b'a' + g) as char
        } else {
            (b'A' + g) as char
        }
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A freely reduced word. The `Vec` never contains an adjacent `x x⁻¹` pair.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn identity() -> Word {
        Word(Vec::new())
    }

    pub fn letter(l: Letter) -> Word {
        Word(vec![l])
    }

    /// Parse from the `a…z/A…Z` convention. Rejects other characters.
    pub fn parse(s: &str) -> Option<Word> {
        let mut w = Vec::with_capacity(s.len());
        for c in s.chars() {
            if c.is_whitespace() {
                continue;
            }
            w.push(Letter::from_char(c)?);
        }
        Some(Word::reduce_vec(w))
    }

    /// Free reduction of an arbitrary letter sequence.
    pub fn reduce_vec(letters: Vec<Letter>) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
        for l in letters {
            if out.last() == Some(&l.inverse()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    /// Reduced product `self · other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &l in &other.0 {
            if out.last() == Some(&l.inverse()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    /// `u · self · u⁻¹`.
    pub fn conjugate_by(&self, u: &Word) -> Word {
        u.concat(self).concat(&u.inverse())
    }

    /// Cyclically reduced core together with the conjugator `u` such that
    /// `self = u · core · u⁻¹`.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let mut core = self.0.clone();
        let mut pre: Vec<Letter> = Vec::new();
        while core.len() >= 2 && core[0] == core[core.len() - 1].inverse() {
            pre.push(core[0]);
            core.remove(0);
            core.pop();
        }
        (Word(core), Word(pre))
    }

    /// Canonical representative of the conjugacy class of `self`: the
    /// lexicographically least rotation of the cyclically reduced core.
    /// Inverse classes are distinct (`[w]` and `[w⁻¹]` both appear).
    pub fn conjugacy_class(&self) -> Word {
        let (core, _) = self.cyclic_reduce();
        if core.is_empty() {
            return core;
        }
        let n = core.len();
        let mut best: Option<Vec<Letter>> = None;
        for s in 0..n {
            let rot: Vec<Letter> = (0..n).map(|i| core.0[(s + i) % n]).collect();
            if best.as_ref().map_or(true, |b| rot < *b) {
                best = Some(rot);
            }
        }
        Word(best.unwrap())
    }

    /// Root-free test and root extraction of the cyclically reduced core:
    /// returns `(root, k)` with `core = root^k`, `k` maximal.
    pub fn cyclic_root(&self) -> (Word, usize) {
        let (core, _) = self.cyclic_reduce();
        let n = core.len();
        if n == 0 {
            return (core, 0);
        }
        for d in 1..=n {
            if n % d != 0 {
                continue;
            }
            let ok = (0..n).all(|i| core.0[i] == core.0[i % d]);
            if ok {
                return (Word(core.0[..d].to_vec()), n / d);
            }
        }
        (core, 1)
    }

    /// Total exponent of each generator mod 2 — the image in H₁(F; ℤ/2).
    pub fn h1_mod2(&self, rank: usize) -> Vec<bool> {
        let mut v = vec![false; rank];
        for l in &self.0 {
            v[l.gen()] ^= true;
        }
        v
    }

    /// Largest generator index used, plus one (0 for the identity).
    pub fn rank_hint(&self) -> usize {
        self.0.iter().map(|l| l.gen() + 1).max().unwrap_or(0)
    }
}

fn fmt_word(word: &Word, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if word.0.is_empty() {
        write!(f, "1")
    } else {
        for l in &word.0 {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_word(self, f)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_word(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn reduction() {
        assert_eq!(w("aA"), Word::identity());
        assert_eq!(w("abBc"), w("ac"));
        assert_eq!(w("abBA"), Word::identity());
        assert_eq!(w("aBbA"), Word::identity());
    }

    #[test]
    fn concat_cancels() {
        assert_eq!(w("ab").concat(&w("BA")), Word::identity());
        assert_eq!(w("ab").concat(&w("Bc")), w("ac"));
    }

    #[test]
    fn cyclic_reduction() {
        let (core, pre) = w("abaBAA").cyclic_reduce();
        assert_eq!(core, w("baBA")); // a·(baBA)·A? — a(baBA)a⁻¹ = abaBAA ✓
        assert_eq!(pre, w("a"));
        assert_eq!(pre.concat(&core).concat(&pre.inverse()), w("abaBAA"));
    }

    #[test]
    fn conjugacy_class_canonical() {
        assert_eq!(w("abAB").conjugacy_class(), w("ABab").conjugacy_class());
        assert_ne!(w("abAB").conjugacy_class(), w("baBA").conjugacy_class()); // inverse class
        assert_eq!(w("bab").conjugacy_class(), w("abb").conjugacy_class());
    }

    #[test]
    fn roots() {
        assert_eq!(w("abab").cyclic_root(), (w("ab"), 2));
        assert_eq!(w("ab").cyclic_root(), (w("ab"), 1));
        assert_eq!(w("aaa").cyclic_root(), (w("a"), 3));
        // Cyclic reduction happens first: b(aa)B has core aa = a².
        assert_eq!(w("baaB").cyclic_root(), (w("a"), 2));
    }

    #[test]
    fn h1_parity() {
        assert_eq!(w("abAB").h1_mod2(2), vec![false, false]);
        assert_eq!(w("aab").h1_mod2(2), vec![false, true]);
    }
}
