//! Vertices of the Bruhat-Tits tree of `PGL(2, Q_p)`: homothety classes of
//! `Z_p`-lattices in `Q_p^2`.
//!
//! Each class has a unique representative `[[p^a, b], [0, 1]] Z_p^2` with
//! `b` taken modulo `p^a Z_p`. The representative is stored exactly: `a` as
//! an integer, `b` as the rational `sum_{k < a} b_k p^k` with `0 <= b_k < p`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::group::Mat2;
use crate::padic::{p_power_ratio, pow_p, PadicError, Qp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("matrix is singular at working precision")]
    SingularMatrix,
    #[error("working precision does not determine the vertex")]
    PrecisionExhausted,
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// p-adic valuation of a nonzero rational; `None` for zero.
pub fn rat_valuation(p: u64, r: &BigRational) -> Option<i64> {
    if r.is_zero() {
        return None;
    }
    let pb = BigInt::from(p);
    let count = |n: &BigInt| -> i64 {
        let mut n = n.clone();
        let mut k = 0;
        loop {
            let (q, rem) = n.div_rem(&pb);
            if !rem.is_zero() {
                return k;
            }
            n = q;
            k += 1;
        }
    };
    Some(count(r.numer()) - count(r.denom()))
}

/// `r mod p^k` for a rational with p-power denominator, as the nonnegative
/// finite expansion below `p^k`.
fn reduce_mod_pk(p: u64, r: &BigRational, k: i64) -> BigRational {
    // r = n / p^s
    let s = rat_valuation(p, &BigRational::from_integer(r.denom().clone())).unwrap_or(0);
    debug_assert_eq!(BigInt::from(pow_p(p, s as u32)), *r.denom(), "denominator is a power of p");
    if k + s <= 0 {
        return BigRational::zero();
    }
    let m = BigInt::from(pow_p(p, (k + s) as u32));
    let n = r.numer().mod_floor(&m);
    BigRational::new(n, r.denom().clone())
}

/// A vertex of the `(p + 1)`-regular tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeVertex {
    prime: u64,
    a: i64,
    b: BigRational,
}

impl TreeVertex {
    /// The class of `Z_p^2`.
    pub fn base(p: u64) -> Self {
        TreeVertex { prime: p, a: 0, b: BigRational::zero() }
    }

    /// `[[p^a, b], [0, 1]]`, reducing `b` modulo `p^a`. `b` must have a
    /// p-power denominator.
    pub fn from_parts(p: u64, a: i64, b: &BigRational) -> Self {
        TreeVertex { prime: p, a, b: reduce_mod_pk(p, b, a) }
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn exponent(&self) -> i64 {
        self.a
    }

    pub fn offset(&self) -> &BigRational {
        &self.b
    }

    /// Representative matrix over `Q_p` at the given precision.
    pub fn rep(&self, qp: &Qp) -> Mat2 {
        let b = qp.from_ratio(&self.b).expect("denominator is a power of p");
        Mat2::new(qp.pow_p(self.a), b, qp.zero(), qp.one())
    }

    /// The `p + 1` adjacent classes: the index-p sublattices
    /// `[[p^(a+1), b + r p^a], [0, 1]]` and the superlattice
    /// `[[p^(a-1), b], [0, 1]]`.
    pub fn neighbors(&self) -> Vec<TreeVertex> {
        let p = self.prime;
        let step = p_power_ratio(p, self.a);
        let mut out: Vec<TreeVertex> = (0..p)
            .map(|r| {
                let b = &self.b + &step * BigRational::from_integer(BigInt::from(r));
                TreeVertex::from_parts(p, self.a + 1, &b)
            })
            .collect();
        out.push(TreeVertex::from_parts(p, self.a - 1, &self.b));
        out
    }

    /// Edge distance, from the elementary divisors of `rep(v)^-1 rep(w)`.
    pub fn distance(&self, o: &TreeVertex) -> u64 {
        assert_eq!(self.prime, o.prime, "vertices of different trees");
        let p = self.prime;
        // rep(v)^-1 rep(w) = [[p^(aw - av), (bw - bv) p^-av], [0, 1]]
        let diag = o.a - self.a;
        let off = rat_valuation(p, &(&o.b - &self.b)).map(|v| v - self.a);
        let min_val = [Some(diag), off, Some(0)].into_iter().flatten().min().unwrap();
        (diag - 2 * min_val) as u64
    }
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {} mod {}^{})", self.a, self.b, self.prime, self.a)
    }
}

/// Hermite normal form of the lattice spanned by the columns of `g`.
pub fn canonicalize(g: &Mat2) -> Result<TreeVertex, TreeError> {
    let p = g.prime();
    if !g.det().is_significant() {
        return Err(TreeError::SingularMatrix);
    }
    // columns (top, bottom); pivot on the bottom entry of least valuation
    let mut c1 = (g.a.clone(), g.c.clone());
    let mut c2 = (g.b.clone(), g.d.clone());
    let v1 = c1.1.min_valuation();
    let v2 = c2.1.min_valuation();
    let first_is_pivot = match (v1, v2) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    };
    if first_is_pivot {
        std::mem::swap(&mut c1, &mut c2);
    }
    let d = &c2.1;
    if !d.is_significant() {
        return Err(TreeError::PrecisionExhausted);
    }
    let q = c1.1.checked_div(d)?;
    let top = &c1.0 - &(&q * &c2.0);
    let (Some(va), Some(vd)) = (top.valuation(), d.valuation()) else {
        return Err(TreeError::PrecisionExhausted);
    };
    let a = va - vd;
    let b = c2.0.checked_div(d)?;
    if b.abs_precision().is_some_and(|k| k < a) {
        return Err(TreeError::PrecisionExhausted);
    }
    let b = b.truncate_below(a, b.significant_digits().max(1)).map_err(|_| TreeError::PrecisionExhausted)?;
    Ok(TreeVertex { prime: p, a, b: nonneg(p, b.to_rational(), a) })
}

fn nonneg(p: u64, r: BigRational, a: i64) -> BigRational {
    if r.is_negative() {
        reduce_mod_pk(p, &r, a)
    } else {
        r
    }
}

/// `g . v = canonicalize(g rep(v))`.
pub fn act(g: &Mat2, v: &TreeVertex) -> Result<TreeVertex, TreeError> {
    let digits = g.entries().iter().map(|e| e.significant_digits()).max().unwrap_or(1);
    let qp = Qp::new(v.prime, digits.max(1))?;
    canonicalize(&g.mul(&v.rep(&qp)))
}

/// Sizes of the spheres `T(0), ..., T(radius)` around `center`, by BFS,
/// together with the number of non-tree edges met (zero in a tree).
pub fn sphere_sizes(center: &TreeVertex, radius: usize) -> (Vec<usize>, usize) {
    let mut dist: HashMap<TreeVertex, usize> = HashMap::new();
    dist.insert(center.clone(), 0);
    let mut sizes = vec![0usize; radius + 1];
    sizes[0] = 1;
    let mut cycles = 0;
    let mut queue = VecDeque::from([(center.clone(), None::<TreeVertex>)]);
    while let Some((v, parent)) = queue.pop_front() {
        let dv = dist[&v];
        if dv == radius {
            continue;
        }
        for w in v.neighbors() {
            if Some(&w) == parent.as_ref() {
                continue;
            }
            if dist.contains_key(&w) {
                cycles += 1;
                continue;
            }
            dist.insert(w.clone(), dv + 1);
            sizes[dv + 1] += 1;
            queue.push_back((w, Some(v.clone())));
        }
    }
    (sizes, cycles)
}

/// All vertices at distance exactly `n` from `center`.
pub fn sphere(center: &TreeVertex, n: usize) -> Vec<TreeVertex> {
    let mut seen: HashSet<TreeVertex> = HashSet::from([center.clone()]);
    let mut frontier = vec![center.clone()];
    for _ in 0..n {
        let mut next = Vec::new();
        for v in &frontier {
            for w in v.neighbors() {
                if seen.insert(w.clone()) {
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    frontier
}

/// Distance of a vertex from the base, read from an arbitrary matrix
/// representative: `v(det g) - 2 min v(g_ij)`.
pub fn distance_from_base(g: &Mat2) -> Result<u64, TreeError> {
    let det = g.det();
    let vdet = det.valuation().ok_or(TreeError::SingularMatrix)?;
    let m = g.min_valuation().ok_or(TreeError::SingularMatrix)?;
    Ok((vdet - 2 * m) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{d1, random_sl2_zp};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(p: u64) -> Qp {
        Qp::new(p, 24).unwrap()
    }

    #[test]
    fn base_examples() {
        let k = q(5);
        let base = TreeVertex::base(5);
        assert_eq!(canonicalize(&Mat2::identity(&k)).unwrap(), base);
        assert_eq!(canonicalize(&Mat2::from_ints(&k, [[5, 0], [0, 5]])).unwrap(), base);
        let v = canonicalize(&Mat2::from_ints(&k, [[5, 3], [0, 1]])).unwrap();
        assert_eq!(v.exponent(), 1);
        assert_eq!(v.offset(), &BigRational::from_integer(3.into()));
        assert_eq!(v.to_string(), "(1, 3 mod 5^1)");
        // b is only defined mod p^a: 8 = 3 mod 5
        assert_eq!(canonicalize(&Mat2::from_ints(&k, [[5, 8], [0, 1]])).unwrap(), v);
        assert_eq!(
            canonicalize(&Mat2::from_ints(&k, [[1, 2], [2, 4]])).unwrap_err(),
            TreeError::SingularMatrix
        );
    }

    /// Oracle: the index-p sublattices of Z_p^2 are the kernels of the
    /// nonzero functionals mod p, one per point of P^1(F_p). For each, build
    /// a basis and canonicalize it.
    #[test]
    fn neighbors_are_index_p_sublattices() {
        for p in [2u64, 3, 5] {
            let k = q(p);
            let base = TreeVertex::base(p);
            let nb: HashSet<TreeVertex> = base.neighbors().into_iter().collect();
            assert_eq!(nb.len(), p as usize + 1);
            let mut oracle = HashSet::new();
            // functional (x, y) -> x + m y vanishes on columns (-m, 1), (p, 0)
            for m in 0..p as i64 {
                let g = Mat2::from_ints(&k, [[p as i64, -m], [0, 1]]);
                oracle.insert(canonicalize(&g).unwrap());
            }
            // functional (x, y) -> y: columns (1, 0), (0, p)
            oracle.insert(canonicalize(&Mat2::from_ints(&k, [[1, 0], [0, p as i64]])).unwrap());
            // up to homothety the superlattice p^-1 L' is the same class as L'
            assert_eq!(nb, oracle);
            for w in &nb {
                assert_eq!(base.distance(w), 1);
                assert!(w.neighbors().contains(&base));
            }
        }
    }

    #[test]
    fn distances() {
        let k = q(3);
        let base = TreeVertex::base(3);
        assert_eq!(base.distance(&base), 0);
        for j in 0..6 {
            let v = canonicalize(&Mat2::new(k.pow_p(j), k.zero(), k.zero(), k.one())).unwrap();
            assert_eq!(base.distance(&v), j as u64);
        }
        let dp = d1(&k.int(3)).unwrap();
        let moved = act(&dp, &base).unwrap();
        assert_eq!(base.distance(&moved), 2);
        assert_eq!(distance_from_base(&dp).unwrap(), 2);
        assert_eq!(act(&Mat2::identity(&k), &moved).unwrap(), moved);
    }

    #[test]
    fn sphere_counts() {
        for p in [2u64, 3, 5] {
            let (sizes, cycles) = sphere_sizes(&TreeVertex::base(p), 6);
            assert_eq!(cycles, 0);
            assert_eq!(sizes[0], 1);
            for n in 1..=6 {
                assert_eq!(sizes[n] as u64, (p + 1) * p.pow(n as u32 - 1));
            }
        }
    }

    #[test]
    fn compact_subgroup_fixes_base() {
        let k = q(5);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(act(&random_sl2_zp(&k, &mut r), &TreeVertex::base(5)).unwrap(), TreeVertex::base(5));
        }
    }

    fn random_gl2(k: &Qp, r: &mut ChaCha8Rng) -> Mat2 {
        loop {
            let m = Mat2::new(
                k.random_value(r, -2..=2),
                k.random_value(r, -2..=2),
                k.random_value(r, -2..=2),
                k.random_value(r, -2..=2),
            );
            if m.det().valuation().is_some_and(|v| v < 8) {
                return m;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn canonical_form_invariances(seed in any::<u64>()) {
            let k = q(3);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let g = random_gl2(&k, &mut r);
            let v = canonicalize(&g).unwrap();
            prop_assert_eq!(canonicalize(&v.rep(&k)).unwrap(), v.clone());
            let scaled = g.scale(&k.pow_p(r.random_range(-3..4)));
            prop_assert_eq!(canonicalize(&scaled).unwrap(), v.clone());
            let kk = random_sl2_zp(&k, &mut r);
            prop_assert_eq!(canonicalize(&g.mul(&kk)).unwrap(), v.clone());
            // distance from base agrees with the elementary divisor formula
            prop_assert_eq!(TreeVertex::base(3).distance(&v), distance_from_base(&g).unwrap());
        }

        #[test]
        fn action_is_isometric(seed in any::<u64>()) {
            let k = q(2);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = canonicalize(&random_gl2(&k, &mut r)).unwrap();
            let y = canonicalize(&random_gl2(&k, &mut r)).unwrap();
            let g = random_sl2_zp(&k, &mut r).mul(&d1(&k.pow_p(r.random_range(-2..3))).unwrap());
            let gx = act(&g, &x).unwrap();
            let gy = act(&g, &y).unwrap();
            prop_assert_eq!(gx.distance(&gy), x.distance(&y));
            prop_assert_eq!(x.distance(&y), y.distance(&x));
            // adjacency is preserved
            let n = x.neighbors().swap_remove(0);
            prop_assert_eq!(gx.distance(&act(&g, &n).unwrap()), 1);
        }
    }
}
