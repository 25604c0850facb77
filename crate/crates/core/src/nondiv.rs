//! Quantitative polynomial non-divergence over `Q_p`: exact sup-norms of
//! polynomials on balls, measures of sublevel sets by ball subdivision, and
//! the maximal-ball estimate used to show that unipotent orbits avoid small
//! neighbourhoods.

use std::cmp::min;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::group::{ctx, Mat2};
use crate::linearize::conj_poly;
use crate::padic::{p_power_ratio, strict_norm_threshold, PadicBall, PadicError, Padic, Qp};
use crate::serialize_ratio;

/// Largest supported degree.
pub const MAX_DEGREE: usize = 4;

/// `C_d` and `kappa` for real and complex fields. Only the ultrametric
/// values (`C_d = 1`, `kappa = 1`) enter the computations here.
pub fn archimedean_cd(d: u32) -> u64 {
    (d as u64 + 1) << d
}
pub const COMPLEX_KAPPA: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NondivError {
    #[error("degree {0} exceeds the supported maximum of 4")]
    DegreeTooLarge(usize),
    #[error("balls are not nested")]
    NotNested,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Polynomial with p-adic coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadicPoly {
    coeffs: Vec<Padic>,
}

impl PadicPoly {
    pub fn new(coeffs: Vec<Padic>) -> Result<Self, NondivError> {
        assert!(!coeffs.is_empty(), "polynomial needs a constant term");
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last().unwrap().is_exact_zero() {
            coeffs.pop();
        }
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(NondivError::DegreeTooLarge(coeffs.len() - 1));
        }
        Ok(PadicPoly { coeffs })
    }

    /// `prod (t - r_i)`.
    pub fn from_roots(qp: &Qp, roots: &[Padic]) -> Result<Self, NondivError> {
        let mut c = vec![qp.one()];
        for r in roots {
            let mut next = vec![qp.zero(); c.len() + 1];
            for (k, ck) in c.iter().enumerate() {
                next[k + 1] = &next[k + 1] + ck;
                next[k] = &next[k] - &(ck * r);
            }
            c = next;
        }
        PadicPoly::new(c)
    }

    pub fn prime(&self) -> u64 {
        self.coeffs[0].prime()
    }

    pub fn coeffs(&self) -> &[Padic] {
        &self.coeffs
    }

    /// Formal degree: index of the last stored coefficient.
    pub fn formal_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Degree counting only coefficients known to be nonzero; `None` for a
    /// polynomial that is (possibly) identically zero.
    pub fn degree(&self) -> Option<usize> {
        (0..self.coeffs.len()).rev().find(|&k| self.coeffs[k].is_significant())
    }

    pub fn is_exact_zero(&self) -> bool {
        self.coeffs.iter().all(Padic::is_exact_zero)
    }

    pub fn eval(&self, t: &Padic) -> Padic {
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = &(&acc * t) + c;
        }
        acc
    }

    /// `u -> f(c + r u)`.
    pub fn compose_affine(&self, c: &Padic, r: &Padic) -> PadicPoly {
        let qp = ctx(c);
        let n = self.coeffs.len();
        let mut out = vec![qp.zero(); n];
        // f(c + r u) = sum_k a_k sum_j binom(k, j) c^(k-j) r^j u^j
        for (k, ak) in self.coeffs.iter().enumerate() {
            for (j, slot) in out.iter_mut().enumerate().take(k + 1) {
                let b = qp.bigint(&BigInt::from(num_integer::binomial(k as u64, j as u64)));
                let term = &(&(&b * ak) * &c.pow((k - j) as u32)) * &r.pow(j as u32);
                *slot = &*slot + &term;
            }
        }
        PadicPoly { coeffs: out }
    }
}

/// Forward differences `Delta^j g(0)` of `g(u) = f(c + p^m u)` for
/// `j = 0..=deg`. `g = sum_j Delta^j g(0) binom(u, j)` is the Mahler
/// expansion, so these determine `g` on all of `Z_p`.
pub fn mahler_coefficients(f: &PadicPoly, ball: &PadicBall) -> Vec<Padic> {
    let qp = ctx(ball.center());
    let step = qp.pow_p(ball.radius_exp());
    let d = f.formal_degree();
    let mut vals: Vec<Padic> = (0..=d)
        .map(|j| f.eval(&(ball.center() + &(&qp.int(j as i64) * &step))))
        .collect();
    let mut out = Vec::with_capacity(d + 1);
    for _ in 0..=d {
        out.push(vals[0].clone());
        vals = vals.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    out
}

/// `-log_p sup_{t in B} |f(t)|`; `None` when `f` vanishes on `B`.
pub fn sup_valuation(f: &PadicPoly, ball: &PadicBall) -> Result<Option<i64>, NondivError> {
    Ok(sup_from_deltas(&mahler_coefficients(f, ball))?)
}

/// `max_j |Delta^j|` over the Mahler coefficients known to be nonzero; a
/// lower bound for the sup that survives imprecise coefficients.
pub fn sup_lower_bound(f: &PadicPoly, ball: &PadicBall) -> BigRational {
    mahler_coefficients(f, ball)
        .iter()
        .filter_map(Padic::valuation)
        .min()
        .map_or(BigRational::zero(), |v| p_power_ratio(f.prime(), -v))
}

/// Exact `sup_{t in B} |f(t)|`.
pub fn sup_norm_ball(f: &PadicPoly, ball: &PadicBall) -> Result<BigRational, NondivError> {
    Ok(match sup_valuation(f, ball)? {
        Some(v) => p_power_ratio(f.prime(), -v),
        None => BigRational::zero(),
    })
}

enum BallClass {
    /// `v(f) >= kmin` on the whole ball.
    Below,
    /// `|f|` is constant on the ball with `v(f) < kmin`: the constant
    /// Mahler coefficient has valuation below `kmin` and every higher one is
    /// strictly smaller in norm.
    ConstantAbove,
    /// The sup reaches the threshold but `|f|` varies; subdivide.
    Mixed,
    /// Precision does not decide either way.
    Unresolved,
}

fn classify(deltas: &[Padic], kmin: i64) -> BallClass {
    // lower bound on the valuation of f on the ball (None = vanishes)
    let bound = deltas.iter().filter_map(Padic::min_valuation).min();
    if bound.is_none_or(|v| v >= kmin) {
        return BallClass::Below;
    }
    if let Some(v0) = deltas[0].valuation() {
        if v0 < kmin && deltas[1..].iter().all(|x| x.min_valuation().is_none_or(|v| v > v0)) {
            return BallClass::ConstantAbove;
        }
    }
    match sup_from_deltas(deltas) {
        Ok(_) => BallClass::Mixed,
        Err(_) => BallClass::Unresolved,
    }
}

/// Measure of a set of balls, bracketed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SublevelResult {
    #[serde(serialize_with = "serialize_ratio")]
    pub lower: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub upper: BigRational,
    pub undecided_balls: u64,
    /// Deepest subdivision level visited, relative to the starting ball.
    pub depth: u32,
}

impl SublevelResult {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

/// Balls accepted while computing `{t in B : |f_i(t)| < M_i for all i}`,
/// each maximal among sub-balls of `B` contained in the set.
#[derive(Debug, Clone)]
pub struct SublevelCover {
    pub result: SublevelResult,
    pub accepted: Vec<PadicBall>,
}

/// Subdivide `ball` until each piece is certified inside the sublevel set
/// (all sups below their thresholds) or outside it (some `|f_i|` constant
/// and at least `M_i`).
pub fn multi_sublevel(
    polys: &[PadicPoly],
    thresholds: &[BigRational],
    ball: &PadicBall,
    max_depth: u32,
) -> Result<SublevelCover, NondivError> {
    assert_eq!(polys.len(), thresholds.len());
    let p = ball.prime();
    let kmins: Vec<Option<i64>> = thresholds
        .iter()
        .map(|m| if m > &BigRational::zero() { Some(strict_norm_threshold(p, m)) } else { None })
        .collect();
    let mut lower = BigRational::zero();
    let mut undecided_mass = BigRational::zero();
    let mut undecided = 0u64;
    let mut deepest = 0u32;
    let mut accepted = Vec::new();
    let mut stack = vec![(ball.clone(), 0u32)];
    while let Some((b, depth)) = stack.pop() {
        deepest = deepest.max(depth);
        let mut inside = true;
        let mut outside = false;
        let mut blurred = false;
        for (f, kmin) in polys.iter().zip(&kmins) {
            let Some(kmin) = *kmin else {
                // |f| < 0 never holds
                outside = true;
                break;
            };
            match classify(&mahler_coefficients(f, &b), kmin) {
                BallClass::Below => {}
                BallClass::ConstantAbove => {
                    outside = true;
                    break;
                }
                BallClass::Mixed => inside = false,
                BallClass::Unresolved => {
                    inside = false;
                    blurred = true;
                }
            }
        }
        if outside {
            continue;
        }
        if inside {
            lower += b.measure();
            accepted.push(b);
            continue;
        }
        // subdividing cannot recover digits that were never known
        if blurred || depth >= max_depth {
            undecided += 1;
            undecided_mass += b.measure();
            continue;
        }
        for child in b.children().into_iter().rev() {
            stack.push((child, depth + 1));
        }
    }
    let upper = &lower + &undecided_mass;
    Ok(SublevelCover {
        result: SublevelResult { lower, upper, undecided_balls: undecided, depth: deepest },
        accepted,
    })
}

fn sup_from_deltas(deltas: &[Padic]) -> Result<Option<i64>, PadicError> {
    let known = deltas.iter().filter_map(Padic::valuation).min();
    let unresolved = deltas.iter().filter(|x| x.is_approx_zero()).filter_map(Padic::min_valuation).min();
    match (known, unresolved) {
        (Some(v), Some(k)) if k <= v => Err(PadicError::PrecisionExhausted),
        (Some(v), _) => Ok(Some(v)),
        (None, None) => Ok(None),
        (None, Some(_)) => Err(PadicError::PrecisionExhausted),
    }
}

/// Measure of `{t in B : |f(t)| < M}`.
pub fn sublevel_measure(
    f: &PadicPoly,
    ball: &PadicBall,
    threshold: &BigRational,
    max_depth: u32,
) -> Result<SublevelResult, NondivError> {
    Ok(multi_sublevel(std::slice::from_ref(f), std::slice::from_ref(threshold), ball, max_depth)?.result)
}

/// Default subdivision depth for sublevel computations.
pub const DEFAULT_MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Serialize)]
pub struct NondivReport {
    pub degree: usize,
    #[serde(serialize_with = "serialize_ratio")]
    pub epsilon: BigRational,
    /// `c = (epsilon / d)^d`.
    #[serde(serialize_with = "serialize_ratio")]
    pub c: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub sup: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub threshold: BigRational,
    pub measure: SublevelResult,
    /// `epsilon * theta(B)`.
    #[serde(serialize_with = "serialize_ratio")]
    pub bound: BigRational,
    pub passed: bool,
}

/// `theta({t in B : |f(t)| < c sup_B |f|}) <= epsilon theta(B)` with
/// `c = (epsilon / d)^d`.
pub fn nondivergence_check(
    f: &PadicPoly,
    ball: &PadicBall,
    epsilon: &BigRational,
    max_depth: u32,
) -> Result<NondivReport, NondivError> {
    if !(epsilon > &BigRational::zero() && epsilon < &BigRational::one()) {
        return Err(NondivError::PreconditionViolated("epsilon must lie in (0, 1)".into()));
    }
    let d = f.degree().unwrap_or(0).max(1);
    let c = num_traits::pow(epsilon / BigRational::from_integer(BigInt::from(d)), d);
    let sup = sup_norm_ball(f, ball)?;
    let threshold = &c * &sup;
    let bound = epsilon * ball.measure();
    let measure = if sup.is_zero() {
        SublevelResult { lower: BigRational::zero(), upper: BigRational::zero(), undecided_balls: 0, depth: 0 }
    } else {
        sublevel_measure(f, ball, &threshold, max_depth)?
    };
    let passed = measure.upper <= bound;
    Ok(NondivReport { degree: d, epsilon: epsilon.clone(), c, sup, threshold, measure, bound, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub degree: usize,
    #[serde(serialize_with = "serialize_ratio")]
    pub inner_sup: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub outer_sup: BigRational,
    /// `(r2 / r1)^d M1`.
    #[serde(serialize_with = "serialize_ratio")]
    pub bound: BigRational,
    pub holds: bool,
    pub equality: bool,
    /// `d^d (r2 / r1)^d M1`, what the sublevel bound with `c = (eps / d)^d`
    /// actually yields. The plain bound can fail when `p <= d`.
    #[serde(serialize_with = "serialize_ratio")]
    pub corrected_bound: BigRational,
    pub corrected_holds: bool,
}

/// `sup_{B2} |f| <= (r2 / r1)^d sup_{B1} |f|` for `B1` inside `B2`.
pub fn growth_bound_check(f: &PadicPoly, inner: &PadicBall, outer: &PadicBall) -> Result<GrowthReport, NondivError> {
    if inner.prime() != outer.prime() {
        return Err(PadicError::PrimeMismatch(inner.prime(), outer.prime()).into());
    }
    if !inner.is_subset_of(outer) {
        return Err(NondivError::NotNested);
    }
    let d = f.degree().unwrap_or(0);
    let m1 = sup_norm_ball(f, inner)?;
    let m2 = sup_norm_ball(f, outer)?;
    let ratio = outer.radius() / inner.radius();
    let bound = num_traits::pow(ratio, d) * &m1;
    let corrected_bound = BigRational::from_integer(BigInt::from(d.max(1)).pow(d as u32)) * &bound;
    Ok(GrowthReport {
        degree: d,
        holds: m2 <= bound,
        equality: m2 == bound,
        corrected_holds: m2 <= corrected_bound,
        corrected_bound,
        inner_sup: m1,
        outer_sup: m2,
        bound,
    })
}

/// Coordinate polynomials `t -> entry_i(w_1(t) v w_1(-t) - I)`, entries in
/// row-major order.
pub fn frame_polys(v: &Mat2) -> Result<[PadicPoly; 4], NondivError> {
    let cp = conj_poly(v);
    let one = ctx(&v.a).one();
    let shifted = Mat2::new(&cp.constant.a - &one, cp.constant.b.clone(), cp.constant.c.clone(), &cp.constant.d - &one);
    let mk = |i: usize| -> Result<PadicPoly, NondivError> {
        PadicPoly::new(vec![
            shifted.entries()[i].clone(),
            cp.linear.entries()[i].clone(),
            cp.quadratic.entries()[i].clone(),
        ])
    };
    Ok([mk(0)?, mk(1)?, mk(2)?, mk(3)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AvoidBranch {
    /// The whole ball lies in the sublevel set `F`.
    InPhi,
    Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct AvoidReport {
    pub branch: AvoidBranch,
    #[serde(skip)]
    pub maximal_balls: Vec<PadicBall>,
    pub maximal_ball_count: usize,
    /// For each maximal ball: some `sup |f_i| >= M_i / tau`.
    pub max_ball_bounds: Vec<bool>,
    pub theta_f: SublevelResult,
    pub theta_f1: SublevelResult,
    #[serde(serialize_with = "serialize_ratio")]
    pub epsilon: BigRational,
    /// `c = epsilon^2 / tau`.
    #[serde(serialize_with = "serialize_ratio")]
    pub c: BigRational,
    /// The reciprocal orientation `1 / (epsilon^2 tau)`, reported for
    /// comparison only.
    #[serde(serialize_with = "serialize_ratio")]
    pub c_reciprocal_form: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub tau: BigRational,
    pub kappa: u32,
    /// `theta(F1) <= kappa epsilon theta(F)`, using the upper bound for
    /// `F1` and the lower bound for `F`.
    pub avoid_holds: bool,
}

/// Maximal-ball decomposition of `F = {t in B : |f_i(t)| < M_i}` and the
/// comparison of `F1 = {|f_i| < alpha_i}` against it.
pub fn avoidance_report(
    polys: &[PadicPoly],
    m_list: &[BigRational],
    alpha_list: &[BigRational],
    ball: &PadicBall,
    epsilon: &BigRational,
    max_depth: u32,
) -> Result<AvoidReport, NondivError> {
    if polys.len() != m_list.len() || polys.len() != alpha_list.len() {
        return Err(NondivError::PreconditionViolated("list lengths differ".into()));
    }
    let p = ball.prime();
    let tau = BigRational::from_integer(BigInt::from(p * p));
    let eps2 = epsilon * epsilon;
    let c = &eps2 / &tau;
    let c_reciprocal_form = BigRational::one() / (&eps2 * &tau);
    for (i, (m, a)) in m_list.iter().zip(alpha_list).enumerate() {
        if m <= &BigRational::zero() {
            return Err(NondivError::PreconditionViolated(format!("M_{i} must be positive")));
        }
        if *a != &c * m {
            return Err(NondivError::PreconditionViolated(format!("alpha_{i} != c * M_{i}")));
        }
    }
    let f_cover = multi_sublevel(polys, m_list, ball, max_depth)?;
    let kappa = 1;
    let whole = f_cover.accepted.len() == 1 && f_cover.accepted[0].radius_exp() == ball.radius_exp();
    let branch = if whole { AvoidBranch::InPhi } else { AvoidBranch::Estimate };
    let mut max_ball_bounds = Vec::new();
    for b in &f_cover.accepted {
        let ok = whole
            || polys.iter().zip(m_list).any(|(f, m)| sup_lower_bound(f, b) * &tau >= *m);
        max_ball_bounds.push(ok);
    }
    // F1 is contained in F, so only F's maximal balls and its undecided
    // remainder need to be searched
    let mut f1_lower = BigRational::zero();
    let mut f1_upper = &f_cover.result.upper - &f_cover.result.lower;
    let mut f1_undecided = f_cover.result.undecided_balls;
    let mut f1_depth = 0;
    for b in &f_cover.accepted {
        let r = multi_sublevel(polys, alpha_list, b, max_depth.saturating_sub((b.radius_exp() - ball.radius_exp()) as u32))?
            .result;
        f1_lower += &r.lower;
        f1_upper += &r.upper;
        f1_undecided += r.undecided_balls;
        f1_depth = f1_depth.max(r.depth + (b.radius_exp() - ball.radius_exp()) as u32);
    }
    let theta_f1 = SublevelResult { lower: f1_lower, upper: f1_upper, undecided_balls: f1_undecided, depth: f1_depth };
    let avoid_holds = theta_f1.upper <= BigRational::from_integer(kappa.into()) * epsilon * &f_cover.result.lower;
    Ok(AvoidReport {
        branch,
        maximal_ball_count: f_cover.accepted.len(),
        maximal_balls: f_cover.accepted,
        max_ball_bounds,
        theta_f: f_cover.result,
        theta_f1,
        epsilon: epsilon.clone(),
        c,
        c_reciprocal_form,
        tau,
        kappa: kappa as u32,
        avoid_holds,
    })
}

/// Brute-force sup of `|f|` on a ball: maximum over the points
/// `c + p^m u`, `u` running through residues mod `p^k`, for increasing `k`
/// until the maximum has repeated twice.
pub fn brute_force_sup(f: &PadicPoly, ball: &PadicBall, max_k: u32) -> BigRational {
    let p = ball.prime();
    let qp = ctx(ball.center());
    let step = qp.pow_p(ball.radius_exp());
    let mut best_val: Option<i64> = None;
    let mut prev: Vec<Option<i64>> = Vec::new();
    for k in 1..=max_k {
        let count = p.pow(k);
        for u in 0..count {
            let x = ball.center() + &(&qp.int(u as i64) * &step);
            if let Some(v) = f.eval(&x).valuation() {
                best_val = Some(best_val.map_or(v, |b| min(b, v)));
            }
        }
        prev.push(best_val);
        let n = prev.len();
        if n >= 3 && prev[n - 1] == prev[n - 2] && prev[n - 2] == prev[n - 3] {
            break;
        }
    }
    best_val.map_or(BigRational::zero(), |v| p_power_ratio(p, -v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn poly(qp: &Qp, c: &[i64]) -> PadicPoly {
        PadicPoly::new(c.iter().map(|&x| qp.int(x)).collect()).unwrap()
    }

    /// Oracle for integer polynomials on `Z_p`: the fraction of residues
    /// `u mod p^k` with `f(u) = 0 mod p^kmin`. For `k >= kmin` this is the
    /// exact measure of `{v(f) >= kmin}`, since `f(u) mod p^kmin` depends
    /// only on `u mod p^kmin`.
    fn count_sublevel(coeffs: &[i64], p: u64, k: u32, kmin: u32) -> BigRational {
        let m = (p as i128).pow(k);
        let modulus = (p as i128).pow(kmin);
        let hits = (0..m)
            .filter(|&u| {
                let mut acc: i128 = 0;
                for c in coeffs.iter().rev() {
                    acc = (acc * u + *c as i128).rem_euclid(modulus);
                }
                acc == 0
            })
            .count();
        BigRational::new(BigInt::from(hits), BigInt::from(m))
    }

    #[test]
    fn sup_examples() {
        let k = Qp::new(2, 24).unwrap();
        let zp = PadicBall::unit_ball(&k);
        assert_eq!(sup_norm_ball(&poly(&k, &[0, 1]), &zp).unwrap(), BigRational::one());
        let f = poly(&k, &[0, -1, 1]);
        assert_eq!(sup_norm_ball(&f, &zp).unwrap(), r(1, 2));
        assert_eq!(brute_force_sup(&f, &zp, 8), r(1, 2));
        let c = poly(&k, &[12]);
        let b = PadicBall::new(&k.int(3), 4).unwrap();
        assert_eq!(sup_norm_ball(&c, &b).unwrap(), r(1, 4));
        assert_eq!(
            PadicPoly::new(vec![k.one(); 6]).unwrap_err(),
            NondivError::DegreeTooLarge(5)
        );
    }

    #[test]
    fn sublevel_examples() {
        let k = Qp::new(3, 24).unwrap();
        let zp = PadicBall::unit_ball(&k);
        let f = poly(&k, &[0, 1]);
        for j in 0..5 {
            let m = p_power_ratio(3, -j);
            let res = sublevel_measure(&f, &zp, &m, DEFAULT_MAX_DEPTH).unwrap();
            assert!(res.is_exact());
            assert_eq!(res.lower, p_power_ratio(3, -(j + 1)));
        }
        let k2 = Qp::new(2, 24).unwrap();
        let g = poly(&k2, &[0, -1, 1]);
        let res = sublevel_measure(&g, &PadicBall::unit_ball(&k2), &r(1, 64), DEFAULT_MAX_DEPTH).unwrap();
        assert!(res.is_exact());
        // oracle: |t^2 - t| < 2^-6 iff v(t^2 - t) >= 7, two branches of
        // measure 2^-7 each
        let oracle = count_sublevel(&[0, -1, 1], 2, 7, 7);
        assert_eq!(oracle, r(1, 64));
        assert_eq!(res.lower, oracle);
        let res = sublevel_measure(&g, &PadicBall::unit_ball(&k2), &r(1, 32), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(res.lower, count_sublevel(&[0, -1, 1], 2, 6, 6));
        assert_eq!(res.lower, r(1, 32));
        let all = sublevel_measure(&g, &PadicBall::unit_ball(&k2), &r(1, 1), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(all.lower, BigRational::one());
    }

    #[test]
    fn shifted_linear_is_rejected_correctly() {
        // 1 + u on Z_2 has |.| = 1 on half the ball and < 1 on the other
        // half; a certificate using only |g(0)| would wrongly reject it all
        let k = Qp::new(2, 24).unwrap();
        let f = poly(&k, &[1, 1]);
        let res = sublevel_measure(&f, &PadicBall::unit_ball(&k), &r(1, 1), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(res.lower, r(1, 2));
        assert!(res.is_exact());
    }

    #[test]
    fn nondiv_constants() {
        let k = Qp::new(2, 24).unwrap();
        let f = poly(&k, &[1, 0, 1]);
        let rep = nondivergence_check(&f, &PadicBall::unit_ball(&k), &r(1, 2), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(rep.c, r(1, 16));
        assert!(rep.passed);
        let lin = poly(&k, &[0, 1]);
        for j in 1..5 {
            let eps = p_power_ratio(2, -j);
            let rep = nondivergence_check(&lin, &PadicBall::unit_ball(&k), &eps, DEFAULT_MAX_DEPTH).unwrap();
            assert_eq!(rep.c, eps);
            assert_eq!(rep.measure.upper, p_power_ratio(2, -j - 1));
            assert!(rep.passed);
        }
        let zero = PadicPoly::new(vec![k.zero()]).unwrap();
        assert!(nondivergence_check(&zero, &PadicBall::unit_ball(&k), &r(1, 2), 10).unwrap().passed);
    }

    #[test]
    fn growth_examples() {
        let k = Qp::new(3, 24).unwrap();
        let zp = PadicBall::unit_ball(&k);
        let wide = PadicBall::new(&k.zero(), -1).unwrap();
        let sq = poly(&k, &[0, 0, 1]);
        let rep = growth_bound_check(&sq, &zp, &wide).unwrap();
        assert_eq!(rep.outer_sup, r(9, 1));
        assert!(rep.holds && rep.equality);
        let c = poly(&k, &[5]);
        assert!(growth_bound_check(&c, &zp, &wide).unwrap().holds);
        assert_eq!(growth_bound_check(&sq, &wide, &zp).unwrap_err(), NondivError::NotNested);
    }

    #[test]
    fn growth_plain_bound_fails_for_small_primes() {
        // t^2 + 19 t + 36 is even on all of Z_2, so M1 = 1/2 is below the
        // Gauss norm; on 2^-2 Z_2 the sup is 16 > 4^2 * 1/2
        let k = Qp::new(2, 24).unwrap();
        let f = poly(&k, &[36, 19, 1]);
        let inner = PadicBall::unit_ball(&k);
        let outer = PadicBall::new(&k.zero(), -2).unwrap();
        let rep = growth_bound_check(&f, &inner, &outer).unwrap();
        assert_eq!(rep.inner_sup, brute_force_sup(&f, &inner, 8));
        assert_eq!(rep.outer_sup, brute_force_sup(&f, &outer, 8));
        assert_eq!((rep.inner_sup.clone(), rep.outer_sup.clone()), (r(1, 2), r(16, 1)));
        assert!(!rep.holds);
        assert!(rep.corrected_holds);
    }

    #[test]
    fn avoidance_single_constraint() {
        let k = Qp::new(3, 24).unwrap();
        let zero = PadicPoly::new(vec![k.zero()]).unwrap();
        let polys = vec![poly(&k, &[0, 1]), zero.clone(), zero.clone(), zero];
        let eps = r(1, 3);
        let c = &eps * &eps / r(9, 1);
        let m = vec![r(1, 3), r(1, 1), r(1, 1), r(1, 1)];
        let alpha: Vec<BigRational> = m.iter().map(|x| &c * x).collect();
        let rep = avoidance_report(&polys, &m, &alpha, &PadicBall::unit_ball(&k), &eps, 30).unwrap();
        assert_eq!(rep.branch, AvoidBranch::Estimate);
        assert_eq!(rep.maximal_balls.len(), 1);
        // |t| < 1/3 is the ball 9 Z_3 (strict inequality)
        assert_eq!(rep.maximal_balls[0].radius_exp(), 2);
        assert!(rep.maximal_balls[0].contains(&k.zero()).is_equal());
        assert!(rep.max_ball_bounds.iter().all(|&b| b));
        assert!(rep.avoid_holds);
        let bad: Vec<BigRational> = m.clone();
        assert!(matches!(
            avoidance_report(&polys, &m, &bad, &PadicBall::unit_ball(&k), &eps, 30),
            Err(NondivError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn avoidance_in_phi() {
        // v = I + p^3 E_12: w_1(t) v w_1(-t) - I = p^3 E_12 for every t
        let k = Qp::new(5, 24).unwrap();
        let v = Mat2::new(k.one(), k.pow_p(3), k.zero(), k.one());
        let polys = frame_polys(&v).unwrap().to_vec();
        let m = vec![r(1, 5); 4];
        let eps = r(1, 5);
        let c = &eps * &eps / r(25, 1);
        let alpha: Vec<BigRational> = m.iter().map(|x| &c * x).collect();
        let rep = avoidance_report(&polys, &m, &alpha, &PadicBall::unit_ball(&k), &eps, 20).unwrap();
        assert_eq!(rep.branch, AvoidBranch::InPhi);
    }

    #[test]
    fn avoidance_from_frame() {
        // v = I + 3 E_21 on the ball 3^-2 Z_3: every coordinate is < 1
        // exactly on Z_3
        let k = Qp::new(3, 24).unwrap();
        let v = Mat2::new(k.one(), k.zero(), k.int(3), k.one());
        let polys = frame_polys(&v).unwrap().to_vec();
        let m = vec![r(1, 1); 4];
        let eps = r(1, 3);
        let c = &eps * &eps / r(9, 1);
        let alpha: Vec<BigRational> = m.iter().map(|x| &c * x).collect();
        let big = PadicBall::new(&k.zero(), -2).unwrap();
        let rep = avoidance_report(&polys, &m, &alpha, &big, &eps, 30).unwrap();
        assert_eq!(rep.branch, AvoidBranch::Estimate);
        assert_eq!(rep.maximal_balls.len(), 1);
        assert_eq!(rep.maximal_balls[0].radius_exp(), 0);
        assert!(rep.max_ball_bounds.iter().all(|&b| b));
        assert_eq!(rep.theta_f.lower, BigRational::one());
        assert!(rep.theta_f.is_exact());
        // |f_3| = |3| is never below alpha_3 = 1/81
        assert_eq!(rep.theta_f1.upper, BigRational::zero());
        assert!(rep.avoid_holds);
    }

    #[test]
    fn maximal_balls_are_disjoint() {
        let k = Qp::new(2, 24).unwrap();
        let v = Mat2::new(k.int(3), k.int(1), k.int(4), k.int(-1));
        let polys = frame_polys(&v).unwrap().to_vec();
        let m = vec![r(1, 2), r(1, 4), r(1, 1), r(1, 2)];
        let eps = r(1, 2);
        let c = &eps * &eps / r(4, 1);
        let alpha: Vec<BigRational> = m.iter().map(|x| &c * x).collect();
        let rep = avoidance_report(&polys, &m, &alpha, &PadicBall::new(&k.zero(), -3).unwrap(), &eps, 30).unwrap();
        for (i, a) in rep.maximal_balls.iter().enumerate() {
            for b in &rep.maximal_balls[i + 1..] {
                assert_eq!(a.relation(b), crate::padic::BallRelation::Disjoint);
            }
        }
        assert!(rep.max_ball_bounds.iter().all(|&b| b));
    }

    fn random_poly(k: &Qp, rng: &mut ChaCha8Rng, deg: usize) -> PadicPoly {
        PadicPoly::new((0..=deg).map(|_| k.random_value(rng, -2..=3)).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affine_equivariance(seed in any::<u64>()) {
            let k = Qp::new(3, 24).unwrap();
            let mut g = ChaCha8Rng::seed_from_u64(seed);
            let deg = g.random_range(0..=4);
            let f = random_poly(&k, &mut g, deg);
            let m = g.random_range(-2..4i64);
            let ball = PadicBall::new(&k.random_integer(&mut g), m).unwrap();
            let composed = f.compose_affine(ball.center(), &k.pow_p(m));
            prop_assert_eq!(
                sup_norm_ball(&f, &ball).unwrap(),
                sup_norm_ball(&composed, &PadicBall::unit_ball(&k)).unwrap()
            );
        }

        #[test]
        fn mahler_matches_brute_force(seed in any::<u64>()) {
            let p = [2u64, 3, 5][(seed % 3) as usize];
            let k = Qp::new(p, 24).unwrap();
            let mut g = ChaCha8Rng::seed_from_u64(seed);
            let deg = g.random_range(0..=3);
            let f = random_poly(&k, &mut g, deg);
            let m = g.random_range(0..3);
            let ball = PadicBall::new(&k.random_integer(&mut g), m).unwrap();
            prop_assert_eq!(sup_norm_ball(&f, &ball).unwrap(), brute_force_sup(&f, &ball, 6));
        }

        #[test]
        fn sublevel_brackets_count(c0 in -40i64..40, c1 in -40i64..40, c2 in -5i64..5, kmin in 1u32..5) {
            let k = Qp::new(2, 24).unwrap();
            let f = poly(&k, &[c0, c1, c2]);
            let m = p_power_ratio(2, -(kmin as i64) + 1);
            let res = sublevel_measure(&f, &PadicBall::unit_ball(&k), &m, 8).unwrap();
            // |f| < 2^(1-kmin) iff v(f) >= kmin
            let exact = count_sublevel(&[c0, c1, c2], 2, 8, kmin);
            prop_assert!(res.lower <= exact && exact <= res.upper);
        }

        #[test]
        fn growth_random(seed in any::<u64>()) {
            let k = Qp::new(3, 24).unwrap();
            let mut g = ChaCha8Rng::seed_from_u64(seed);
            let deg = g.random_range(0..=2);
            let f = random_poly(&k, &mut g, deg);
            let m2 = g.random_range(-2..2i64);
            let m1 = m2 + g.random_range(0..3i64);
            let c = k.random_integer(&mut g);
            let outer = PadicBall::new(&c, m2).unwrap();
            let inner = PadicBall::new(&(&c + &(&k.random_integer(&mut g) * &k.pow_p(m2))), m1).unwrap();
            prop_assert!(growth_bound_check(&f, &inner, &outer).unwrap().holds);
        }

        #[test]
        fn growth_corrected_bound(seed in any::<u64>(), p in prop::sample::select(vec![2u64, 3])) {
            let k = Qp::new(p, 24).unwrap();
            let mut g = ChaCha8Rng::seed_from_u64(seed);
            let deg = g.random_range(0..=4);
            let f = random_poly(&k, &mut g, deg);
            let m2 = g.random_range(-2..2i64);
            let m1 = m2 + g.random_range(0..3i64);
            let c = k.random_integer(&mut g);
            let outer = PadicBall::new(&c, m2).unwrap();
            let inner = PadicBall::new(&c, m1).unwrap();
            prop_assert!(growth_bound_check(&f, &inner, &outer).unwrap().corrected_holds);
        }
    }
}
