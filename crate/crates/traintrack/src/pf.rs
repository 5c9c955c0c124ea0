//! Exact Perron–Frobenius eigenvalues of non-negative integer matrices.
//!
//! An irreducible transition matrix gets a [`PFValue`]: the integer
//! characteristic polynomial plus a certified isolating rational interval for
//! its largest real root. All comparisons (ordering, the λ > 1 test, the
//! lexicographic order on stratum eigenvalue sequences) are exact; floats are
//! only a convenience output.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

pub type Mat = Vec<Vec<u64>>;

/// Polynomial over ℚ, little-endian coefficients, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly(pub Vec<BigRational>);

impl Poly {
    fn norm(mut v: Vec<BigRational>) -> Poly {
        while v.last().map_or(false, |c| c.is_zero()) {
            v.pop();
        }
        Poly(v)
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(Vec::new());
        }
        Poly::norm(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigRational::from(BigInt::from(i)))
                .collect(),
        )
    }

    /// Remainder of self / d (exact rational division).
    pub fn rem(&self, d: &Poly) -> Poly {
        assert!(!d.is_zero());
        let mut r = self.0.clone();
        let dd = d.degree();
        let lead = d.0[dd].clone();
        while r.len() > dd && !r.is_empty() {
            let k = r.len() - 1;
            let c = r[k].clone() / lead.clone();
            if c.is_zero() {
                r.pop();
                continue;
            }
            for i in 0..=dd {
                let idx = k - dd + i;
                let sub = c.clone() * d.0[i].clone();
                r[idx] -= sub;
            }
            while r.last().map_or(false, |c| c.is_zero()) {
                r.pop();
            }
        }
        Poly::norm(r)
    }

    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        if a.is_zero() {
            return a;
        }
        // make monic
        let lead = a.0.last().unwrap().clone();
        Poly::norm(a.0.into_iter().map(|c| c / lead.clone()).collect())
    }

    /// Exact quotient assuming divisibility (used for the squarefree part).
    pub fn div_exact(&self, d: &Poly) -> Poly {
        let mut r = self.0.clone();
        let dd = d.degree();
        let lead = d.0[dd].clone();
        let mut q = vec![BigRational::zero(); self.0.len().saturating_sub(dd)];
        while r.len() > dd {
            let k = r.len() - 1;
            let c = r[k].clone() / lead.clone();
            q[k - dd] = c.clone();
            for i in 0..=dd {
                let idx = k - dd + i;
                let sub = c.clone() * d.0[i].clone();
                r[idx] -= sub;
            }
            while r.last().map_or(false, |x| x.is_zero()) {
                r.pop();
            }
        }
        Poly::norm(q)
    }

    pub fn squarefree(&self) -> Poly {
        let d = self.derivative();
        if d.is_zero() {
            return self.clone();
        }
        let g = self.gcd(&d);
        if g.degree() == 0 {
            self.clone()
        } else {
            self.div_exact(&g)
        }
    }
}

/// Characteristic polynomial det(λI − M) via Faddeev–LeVerrier, returned
/// with integer coefficients (monic).
pub fn charpoly(m: &Mat) -> Vec<BigInt> {
    let n = m.len();
    let big: Vec<Vec<BigRational>> = m
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| BigRational::from(BigInt::from(x)))
                .collect()
        })
        .collect();
    let mut c = vec![BigRational::zero(); n + 1];
    c[n] = BigRational::one();
    // M_k iteration
    let mut mk: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); n]; n]; // M_0 = 0
    for k in 1..=n {
        // M_k = A·(M_{k−1} + c_{n−k+1}·I)
        let mut t = mk.clone();
        for i in 0..n {
            t[i][i] += c[n - k + 1].clone();
        }
        let mut next = vec![vec![BigRational::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = BigRational::zero();
                for l in 0..n {
                    if !big[i][l].is_zero() && !t[l][j].is_zero() {
                        acc += big[i][l].clone() * t[l][j].clone();
                    }
                }
                next[i][j] = acc;
            }
        }
        mk = next;
        let tr: BigRational = (0..n).map(|i| mk[i][i].clone()).sum();
        c[n - k] = -tr / BigRational::from(BigInt::from(k as i64));
    }
    c.into_iter()
        .map(|x| {
            debug_assert!(x.is_integer());
            x.to_integer()
        })
        .collect()
}

fn sturm_chain(p: &Poly) -> Vec<Poly> {
    let mut chain = vec![p.clone(), p.derivative()];
    loop {
        let n = chain.len();
        if chain[n - 1].is_zero() {
            chain.pop();
            break;
        }
        let r = chain[n - 2].rem(&chain[n - 1]);
        if r.is_zero() {
            break;
        }
        chain.push(Poly::norm(r.0.into_iter().map(|c| -c).collect()));
    }
    chain
}

fn sign_changes(chain: &[Poly], x: &BigRational) -> usize {
    let mut signs = Vec::new();
    for p in chain {
        let v = p.eval(x);
        if !v.is_zero() {
            signs.push(v.is_positive());
        }
    }
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Number of distinct real roots of squarefree `p` in the half-open
/// interval `(a, b]`.
fn count_roots(chain: &[Poly], a: &BigRational, b: &BigRational) -> usize {
    sign_changes(chain, a).saturating_sub(sign_changes(chain, b))
}

/// The Perron–Frobenius eigenvalue of an irreducible non-negative integer
/// matrix, represented exactly.
#[derive(Clone, Debug)]
pub struct PFValue {
    /// Monic integer characteristic polynomial, little-endian.
    pub charpoly: Vec<BigInt>,
    /// Squarefree part (rational, monic) used for root counting.
    sqfree: Poly,
    /// Isolating interval (lo, hi] for the largest real root.
    pub lo: BigRational,
    pub hi: BigRational,
    pub n_rows: usize,
}

impl PFValue {
    /// Compute from an irreducible non-negative matrix. The largest real
    /// root of the characteristic polynomial is the PF eigenvalue.
    pub fn of_matrix(m: &Mat) -> PFValue {
        let cp = charpoly(m);
        let p = Poly::norm(
            cp.iter()
                .map(|c| BigRational::from(c.clone()))
                .collect::<Vec<_>>(),
        );
        let sq = p.squarefree();
        let chain = sturm_chain(&sq);
        // Cauchy bound: all roots have |x| ≤ 1 + max |c_i| (monic).
        let maxc = cp
            .iter()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(|| BigInt::from(0));
        let u = BigRational::from(maxc + BigInt::from(1));
        let mut lo = -u.clone();
        let mut hi = u.clone();
        // Shrink to the single largest root: keep ≥1 root in (lo,hi] and
        // none in (hi, U].
        while count_roots(&chain, &lo, &hi) > 1 {
            let mid = (lo.clone() + hi.clone()) / BigRational::from(BigInt::from(2));
            if count_roots(&chain, &mid, &hi) >= 1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        PFValue {
            charpoly: cp,
            sqfree: sq,
            lo,
            hi,
            n_rows: m.len(),
        }
    }

    fn chain(&self) -> Vec<Poly> {
        sturm_chain(&self.sqfree)
    }

    /// Refine the isolating interval until its width is below `eps`.
    fn refined(&self, eps: &BigRational) -> (BigRational, BigRational) {
        let chain = self.chain();
        let (mut lo, mut hi) = (self.lo.clone(), self.hi.clone());
        while &(hi.clone() - lo.clone()) > eps {
            let mid = (lo.clone() + hi.clone()) / BigRational::from(BigInt::from(2));
            if count_roots(&chain, &mid, &hi) >= 1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    }

    /// Float approximation within 1e−12.
    pub fn to_f64(&self) -> f64 {
        let eps = BigRational::new(BigInt::from(1), BigInt::from(1_000_000_000_000u64));
        let (lo, hi) = self.refined(&eps);
        let mid = (lo + hi) / BigRational::from(BigInt::from(2));
        mid.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact test: is λ > 1? (λ = 1 exactly happens for permutation-type
    /// strata; λ is the largest real root, so this is one root count.)
    pub fn gt_one(&self) -> bool {
        let chain = self.chain();
        let one = BigRational::one();
        let maxc = self
            .charpoly
            .iter()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(|| BigInt::from(0));
        let u = BigRational::from(maxc + BigInt::from(1));
        count_roots(&chain, &one, &u) >= 1
    }

    /// Exact comparison of two PF values.
    ///
    /// Each isolating interval contains exactly its own root, so the roots
    /// are equal iff the gcd of the squarefree polynomials has a root in the
    /// interval intersection; otherwise bisection separates the intervals.
    pub fn cmp_exact(&self, other: &PFValue) -> Ordering {
        let (mut alo, mut ahi) = (self.lo.clone(), self.hi.clone());
        let (mut blo, mut bhi) = (other.lo.clone(), other.hi.clone());
        let achain = self.chain();
        let bchain = other.chain();
        let g = self.sqfree.gcd(&other.sqfree);
        let gchain = (g.degree() >= 1).then(|| sturm_chain(&g));
        loop {
            if ahi <= blo {
                return Ordering::Less;
            }
            if bhi <= alo {
                return Ordering::Greater;
            }
            if let Some(gc) = &gchain {
                let l = alo.clone().max(blo.clone());
                let h = ahi.clone().min(bhi.clone());
                if h > l && count_roots(gc, &l, &h) >= 1 {
                    return Ordering::Equal;
                }
            }
            let two = BigRational::from(BigInt::from(2));
            let amid = (alo.clone() + ahi.clone()) / two.clone();
            if count_roots(&achain, &amid, &ahi) >= 1 {
                alo = amid;
            } else {
                ahi = amid;
            }
            let bmid = (blo.clone() + bhi.clone()) / two;
            if count_roots(&bchain, &bmid, &bhi) >= 1 {
                blo = bmid;
            } else {
                bhi = bmid;
            }
        }
    }
}

/// Lexicographic comparison of descending PF-eigenvalue sequences.
pub fn cmp_lambda_seq(a: &[PFValue], b: &[PFValue]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.cmp_exact(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

// ---------------------------------------------------------------------------
// Independent oracles (used by tests).
// ---------------------------------------------------------------------------

/// Is the matrix a cyclic permutation matrix? For an irreducible
/// non-negative integer matrix this characterizes spectral radius exactly 1;
/// anything else strictly exceeds 1.
pub fn is_cyclic_permutation_matrix(m: &Mat) -> bool {
    let n = m.len();
    let mut row_ones = vec![0usize; n];
    let mut col_ones = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            match m[i][j] {
                0 => {}
                1 => {
                    row_ones[i] += 1;
                    col_ones[j] += 1;
                }
                _ => return false,
            }
        }
    }
    row_ones.iter().all(|&r| r == 1) && col_ones.iter().all(|&c| c == 1)
}

/// Collatz–Wielandt lower bound for the spectral radius after `iters`
/// exact integer power iterations of M + I (primitive for irreducible M):
/// returns min_i (Mv)_i / v_i − 1 ≤ λ.
pub fn collatz_lower_bound(m: &Mat, iters: usize) -> BigRational {
    let n = m.len();
    let mut v: Vec<BigInt> = vec![BigInt::one(); n];
    let step = |v: &Vec<BigInt>| -> Vec<BigInt> {
        (0..n)
            .map(|i| {
                let mut acc = v[i].clone(); // + I
                for j in 0..n {
                    if m[i][j] != 0 {
                        acc += BigInt::from(m[i][j]) * &v[j];
                    }
                }
                acc
            })
            .collect()
    };
    for _ in 0..iters {
        v = step(&v);
    }
    let w = step(&v);
    let mut best: Option<BigRational> = None;
    for i in 0..n {
        let r = BigRational::new(w[i].clone(), v[i].clone());
        best = Some(match best {
            None => r,
            Some(b) => b.min(r),
        });
    }
    best.unwrap() - BigRational::one()
}

/// Is the matrix irreducible (its digraph strongly connected)? Entries are
/// multiplicities; only the support matters.
pub fn is_irreducible(m: &Mat) -> bool {
    let n = m.len();
    if n == 0 {
        return false;
    }
    let reach = |transpose: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let hit = if transpose { m[j][i] != 0 } else { m[i][j] != 0 };
                if hit && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    reach(false).iter().all(|&x| x) && reach(true).iter().all(|&x| x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charpoly_2x2() {
        // [[1,1],[1,2]]: λ² − 3λ + 1
        let cp = charpoly(&vec![vec![1, 1], vec![1, 2]]);
        let want: Vec<BigInt> = [1i64, -3, 1].iter().map(|&x| BigInt::from(x)).collect();
        assert_eq!(cp, want);
        // [[1,1],[1,0]]: λ² − λ − 1 (golden ratio)
        let cp = charpoly(&vec![vec![1, 1], vec![1, 0]]);
        let want: Vec<BigInt> = [-1i64, -1, 1].iter().map(|&x| BigInt::from(x)).collect();
        assert_eq!(cp, want);
    }

    #[test]
    fn pf_value_approx() {
        let pf = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 2]]);
        // (3+√5)/2 = 2.618033988749895…
        assert!((pf.to_f64() - 2.618_033_988_749_895).abs() < 1e-9);
        assert!(pf.gt_one());
        let pf = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 0]]);
        assert!((pf.to_f64() - 1.618_033_988_749_895).abs() < 1e-9);
        assert!(pf.gt_one());
    }

    #[test]
    fn pf_of_permutation_is_one() {
        let pf = PFValue::of_matrix(&vec![vec![0, 1], vec![1, 0]]);
        assert!(!pf.gt_one());
        assert!((pf.to_f64() - 1.0).abs() < 1e-12);
        assert!(is_cyclic_permutation_matrix(&vec![vec![0, 1], vec![1, 0]]));
    }

    #[test]
    fn ordering_exact() {
        let a = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 0]]); // φ ≈ 1.618
        let b = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 2]]); // ≈ 2.618
        assert_eq!(a.cmp_exact(&b), Ordering::Less);
        assert_eq!(b.cmp_exact(&a), Ordering::Greater);
        let a2 = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 0]]);
        assert_eq!(a.cmp_exact(&a2), Ordering::Equal);
        // equal values from different matrices: [[2]] vs [[0,1],[... λ=2
        let two_a = PFValue::of_matrix(&vec![vec![2]]);
        let two_b = PFValue::of_matrix(&vec![vec![1, 1], vec![1, 1]]); // λ² −2λ = 0 → λ=2
        assert_eq!(two_a.cmp_exact(&two_b), Ordering::Equal);
    }

    #[test]
    fn collatz_bound_certifies_growth() {
        let m = vec![vec![1, 1], vec![1, 2]];
        let lb = collatz_lower_bound(&m, 30);
        assert!(lb > BigRational::one());
        let f = lb.to_f64().unwrap();
        assert!(f <= 2.618_034 && f > 2.61);
    }
}
