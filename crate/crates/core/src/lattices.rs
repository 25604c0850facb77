//! Quaternionic lattice generators in `PGL(2, Q_p)` and the coverage of
//! `PGL(2, Z/p^k)` by reductions of products of two lattices.
//!
//! For `p = 1 mod 4` the `p + 1` integer solutions of
//! `a^2 + b^2 + c^2 + d^2 = p` with `a` odd and positive give matrices of
//! determinant `p` which generate a group acting simply transitively on the
//! vertices of the tree.

use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::bttree::{canonicalize, TreeError, TreeVertex};
use crate::group::Mat2;
use crate::padic::{is_prime, pow_p, PadicError, Qp};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("-1 is not a square mod {0}, need p = 1 mod 4")]
    OmegaUnavailable(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("expected {expected} generators, found {found}")]
    Enumeration { expected: usize, found: usize },
    #[error("working precision exhausted")]
    PrecisionExhausted,
    #[error("modulus level must be at least 1")]
    BadLevel,
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuaternionGen {
    pub quad: [i64; 4],
    pub matrix: Mat2,
}

impl QuaternionGen {
    pub fn conjugate_quad(&self) -> [i64; 4] {
        let [a, b, c, d] = self.quad;
        [a, -b, -c, -d]
    }
}

/// All `p + 1` generators with their images `[[a + b w, c + d w], [-c + d w, a - b w]]`,
/// `w^2 = -1`.
pub fn lps_generators(p: u64, precision: u32) -> Result<Vec<QuaternionGen>, LatticeError> {
    if !is_prime(p) {
        return Err(LatticeError::NotPrime(p));
    }
    if p % 4 != 1 {
        return Err(LatticeError::OmegaUnavailable(p));
    }
    let qp = Qp::new(p, precision)?;
    let omega = qp.int(-1).hensel_sqrt()?;
    let r = (p as f64).sqrt() as i64 + 1;
    let mut out = Vec::new();
    for a in (1..=r).step_by(2) {
        for b in -r..=r {
            for c in -r..=r {
                for d in -r..=r {
                    if a * a + b * b + c * c + d * d != p as i64 {
                        continue;
                    }
                    let i = |x| qp.int(x);
                    let m = Mat2::new(
                        i(a) + i(b) * &omega,
                        i(c) + i(d) * &omega,
                        i(-c) + i(d) * &omega,
                        i(a) - i(b) * &omega,
                    );
                    out.push(QuaternionGen { quad: [a, b, c, d], matrix: m });
                }
            }
        }
    }
    if out.len() != p as usize + 1 {
        return Err(LatticeError::Enumeration { expected: p as usize + 1, found: out.len() });
    }
    Ok(out)
}

/// Index of the conjugate generator (the projective inverse) of each generator.
pub fn inverse_letters(gens: &[QuaternionGen]) -> Vec<usize> {
    gens.iter()
        .map(|g| {
            let cq = g.conjugate_quad();
            gens.iter().position(|h| h.quad == cq).expect("generator set is closed under conjugation")
        })
        .collect()
}

/// Projective reduction: scale `m` by a power of `p` so the entries are
/// integral with a unit among them, then normalize the first unit entry to
/// 1 and reduce mod `p^k`. Also reports whether the scaled matrix is
/// invertible mod `p`.
pub fn projective_residue(m: &Mat2, k: u32) -> Result<([BigUint; 4], bool), LatticeError> {
    let p = m.prime();
    let entries = m.entries();
    let s = entries.iter().filter_map(|e| e.valuation()).min().ok_or(LatticeError::PrecisionExhausted)?;
    if entries.iter().any(|e| e.is_approx_zero() && e.min_valuation().is_some_and(|v| v < s + k as i64)) {
        return Err(LatticeError::PrecisionExhausted);
    }
    let digits = entries.iter().map(|e| e.significant_digits()).max().unwrap_or(1);
    let qp = Qp::new(p, digits.max(1))?;
    let shift = qp.pow_p(-s);
    let mut res = Vec::with_capacity(4);
    for e in entries {
        let scaled = e * &shift;
        res.push(scaled.residue(k).map_err(|_| LatticeError::PrecisionExhausted)?);
    }
    let modulus = pow_p(p, k);
    let pb = BigUint::from(p);
    let lead = res.iter().find(|r| !(*r % &pb).is_zero()).expect("some entry is a unit after scaling");
    let inv = lead.modinv(&modulus).expect("unit residue is invertible");
    let out: Vec<BigUint> = res.iter().map(|r| (r * &inv) % &modulus).collect();
    let det = ((&out[0] * &out[3]) % &pb + &pb - (&out[1] * &out[2]) % &pb) % &pb;
    Ok(([out[0].clone(), out[1].clone(), out[2].clone(), out[3].clone()], !det.is_zero()))
}

/// `|PGL(2, Z/p^k)| = p^(3k - 2) (p^2 - 1)`.
pub fn pgl2_order(p: u64, k: u32) -> BigUint {
    BigUint::from(p).pow(3 * k - 2) * BigUint::from(p * p - 1)
}

/// Order of the image of `SL(2, Z/p^k)` in `PGL(2, Z/p^k)` for odd `p`: the
/// classes whose determinant is a square, half of the group.
pub fn sl2_image_order(p: u64, k: u32) -> BigUint {
    assert!(p % 2 == 1, "square classes of units differ for p = 2");
    pgl2_order(p, k) / 2u32
}

/// Whether a projective residue has square determinant mod `p` (a property
/// of the class, since scaling by `t` multiplies the determinant by `t^2`).
pub fn has_square_det(key: &[BigUint; 4], p: u64) -> bool {
    let pb = BigUint::from(p);
    let det = ((&key[0] * &key[3]) % &pb + &pb - (&key[1] * &key[2]) % &pb) % &pb;
    let det = det.to_u64().expect("residue below p");
    det != 0 && (1..p).any(|x| x * x % p == det)
}

#[derive(Debug, Clone)]
pub struct Word {
    pub letters: Vec<usize>,
    pub matrix: Mat2,
}

#[derive(Debug, Clone)]
pub struct WordBall {
    pub words: Vec<Word>,
    /// Reduced words enumerated before projective deduplication.
    pub raw_count: usize,
    pub dedup_digits: u32,
}

impl WordBall {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Reduced words of length at most `l` (no letter followed by its
/// conjugate), deduplicated projectively modulo `p^dedup_digits`.
pub fn word_ball(gens: &[QuaternionGen], l: usize, dedup_digits: u32) -> Result<WordBall, LatticeError> {
    let inv = inverse_letters(gens);
    let qp_id = Mat2::identity(&Qp::new(gens[0].matrix.prime(), gens[0].matrix.a.significant_digits().max(1))?);
    let mut words = vec![Word { letters: Vec::new(), matrix: qp_id }];
    let mut seen = HashSet::new();
    seen.insert(projective_residue(&words[0].matrix, dedup_digits)?.0);
    let mut raw = 1;
    let mut frontier = vec![0usize];
    for _ in 0..l {
        let mut next = Vec::new();
        for &wi in &frontier {
            for (g, gen) in gens.iter().enumerate() {
                if words[wi].letters.last().is_some_and(|&last| inv[last] == g) {
                    continue;
                }
                raw += 1;
                let m = words[wi].matrix.mul(&gen.matrix);
                if !seen.insert(projective_residue(&m, dedup_digits)?.0) {
                    continue;
                }
                let mut letters = words[wi].letters.clone();
                letters.push(g);
                words.push(Word { letters, matrix: m });
                next.push(words.len() - 1);
            }
        }
        frontier = next;
    }
    Ok(WordBall { words, raw_count: raw, dedup_digits })
}

/// Random conjugator with entries of valuation at least -1.
pub fn random_conjugator(qp: &Qp, seed: u64) -> Mat2 {
    let mut rng = stream(seed, "conjugator", 0);
    loop {
        let m = Mat2::new(
            qp.random_value(&mut rng, -1..=1),
            qp.random_value(&mut rng, -1..=1),
            qp.random_value(&mut rng, -1..=1),
            qp.random_value(&mut rng, -1..=1),
        );
        if m.det().valuation().is_some_and(|v| v <= 2) {
            return m;
        }
    }
}

#[derive(Debug, Clone)]
pub enum CoverageMode {
    /// Second lattice equals the first (commensurable control).
    Control,
    /// Second lattice is `g Gamma g^-1`.
    Generic { conjugator: Mat2 },
}

impl CoverageMode {
    pub fn label(&self) -> &'static str {
        match self {
            CoverageMode::Control => "control (commensurable: second lattice equals the first)",
            CoverageMode::Generic { .. } => "generic conjugate (presumed non-commensurable)",
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self, CoverageMode::Control)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub word_radius: usize,
    pub level: u32,
    pub covered: String,
    pub group_order: String,
    pub fraction: String,
    pub fraction_decimal: f64,
    /// Coverage of the image of `SL(2, Z/p^k)`, which contains every
    /// qualifying reduction.
    pub target_order: String,
    pub target_fraction: String,
    pub target_fraction_decimal: f64,
    /// Qualifying reductions outside that image (always 0).
    pub nonsquare_det: usize,
    pub qualifying_products: usize,
    pub control: bool,
    pub mode: String,
}

impl CoverageReport {
    pub fn is_full(&self) -> bool {
        self.covered == self.target_order
    }
}

/// Second word ball for the mode: the same words, or their conjugates.
pub fn second_ball(first: &WordBall, mode: &CoverageMode) -> Result<WordBall, LatticeError> {
    match mode {
        CoverageMode::Control => Ok(first.clone()),
        CoverageMode::Generic { conjugator } => {
            let ginv = conjugator.inverse()?;
            let words = first
                .words
                .iter()
                .map(|w| Word { letters: w.letters.clone(), matrix: conjugator.mul(&w.matrix).mul(&ginv) })
                .collect();
            Ok(WordBall { words, raw_count: first.raw_count, dedup_digits: first.dedup_digits })
        }
    }
}

/// Reductions of qualifying products `x y`, x from `first`, y from
/// `second`, with the word radius at which each first appears. A product
/// qualifies when it fixes the base vertex of the tree, so pairs are joined
/// on the vertex `y . o = x^-1 . o`.
pub fn qualifying_reductions(
    first: &WordBall,
    second: &WordBall,
    k: u32,
) -> Result<(HashMap<[BigUint; 4], usize>, Vec<usize>), LatticeError> {
    let mut by_vertex: HashMap<TreeVertex, Vec<usize>> = HashMap::new();
    for (j, y) in second.words.iter().enumerate() {
        by_vertex.entry(canonicalize(&y.matrix)?).or_default().push(j);
    }
    let radius = first.words.iter().chain(&second.words).map(|w| w.letters.len()).max().unwrap_or(0);
    let mut per_level = vec![0usize; radius + 1];
    let mut first_seen: HashMap<[BigUint; 4], usize> = HashMap::new();
    for x in &first.words {
        let key = canonicalize(&x.matrix.adjugate())?;
        for &j in by_vertex.get(&key).into_iter().flatten() {
            let y = &second.words[j];
            let (res, invertible) = projective_residue(&x.matrix.mul(&y.matrix), k)?;
            if !invertible {
                return Err(LatticeError::PrecisionExhausted);
            }
            let level = x.letters.len().max(y.letters.len());
            per_level[level] += 1;
            let slot = first_seen.entry(res).or_insert(level);
            *slot = (*slot).min(level);
        }
    }
    Ok((first_seen, per_level))
}

/// Same reductions by testing every pair directly.
pub fn qualifying_reductions_brute(
    first: &WordBall,
    second: &WordBall,
    k: u32,
) -> Result<HashMap<[BigUint; 4], usize>, LatticeError> {
    let mut first_seen: HashMap<[BigUint; 4], usize> = HashMap::new();
    for x in &first.words {
        for y in &second.words {
            let (res, invertible) = projective_residue(&x.matrix.mul(&y.matrix), k)?;
            if invertible {
                let level = x.letters.len().max(y.letters.len());
                let slot = first_seen.entry(res).or_insert(level);
                *slot = (*slot).min(level);
            }
        }
    }
    Ok(first_seen)
}

/// Coverage reports for word radii `0..=l_max` at level `k`.
pub fn coverage_sweep(
    gens: &[QuaternionGen],
    mode: &CoverageMode,
    l_max: usize,
    k: u32,
    dedup_digits: u32,
) -> Result<Vec<CoverageReport>, LatticeError> {
    if k == 0 {
        return Err(LatticeError::BadLevel);
    }
    let p = gens[0].matrix.prime();
    let first = word_ball(gens, l_max, dedup_digits)?;
    let second = second_ball(&first, mode)?;
    let (seen, per_level) = qualifying_reductions(&first, &second, k)?;
    let order = pgl2_order(p, k);
    let target = sl2_image_order(p, k);
    let mut out = Vec::with_capacity(l_max + 1);
    let mut qualifying = 0;
    for l in 0..=l_max {
        qualifying += per_level.get(l).copied().unwrap_or(0);
        let covered = seen.values().filter(|&&lvl| lvl <= l).count();
        let frac = BigRational::new(covered.into(), order.clone().into());
        let tfrac = BigRational::new(covered.into(), target.clone().into());
        let nonsquare = seen.iter().filter(|(key, &lvl)| lvl <= l && !has_square_det(key, p)).count();
        out.push(CoverageReport {
            word_radius: l,
            level: k,
            covered: covered.to_string(),
            group_order: order.to_string(),
            fraction_decimal: frac.to_f64().unwrap_or(f64::NAN),
            fraction: frac.to_string(),
            target_order: target.to_string(),
            target_fraction_decimal: tfrac.to_f64().unwrap_or(f64::NAN),
            target_fraction: tfrac.to_string(),
            nonsquare_det: nonsquare,
            qualifying_products: qualifying,
            control: mode.is_control(),
            mode: mode.label().to_string(),
        });
    }
    Ok(out)
}

pub fn product_coverage(
    gens: &[QuaternionGen],
    mode: &CoverageMode,
    l: usize,
    k: u32,
    dedup_digits: u32,
) -> Result<CoverageReport, LatticeError> {
    Ok(coverage_sweep(gens, mode, l, k, dedup_digits)?.pop().expect("radius 0 is always present"))
}

/// Text dump of generators, one `a b c d` quadruple per line.
pub fn generators_text(gens: &[QuaternionGen]) -> String {
    gens.iter().map(|g| format!("{} {} {} {}\n", g.quad[0], g.quad[1], g.quad[2], g.quad[3])).collect()
}

/// Valuation of the determinant of a word, for the multiplicativity check.
pub fn det_valuation(m: &Mat2) -> Option<i64> {
    m.det().valuation()
}
