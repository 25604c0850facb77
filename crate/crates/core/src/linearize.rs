//! The linear representation `E = M_2(Q_p)^(n-1) x Q_p^2` of `SL(2, Q_p)^n`
//! and the limit computations built on it: conjugation polynomials, time
//! scales that normalize a sequence approaching the identity, polynomial
//! directions, flows on the projective line and the `w(psi') d(phi)` curve.

use std::ops::RangeInclusive;

use num_bigint::BigInt;
use serde::Serialize;

use crate::group::{ctx, d, w, w1, GElem, GroupError, Mat2};
use crate::padic::{joint_agreement, joint_agreement_at, Agreement, Padic, PadicError, Qp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinError {
    #[error("arity mismatch: group element has {group} components, vector expects {expected}")]
    ArityMismatch { group: usize, expected: usize },
    #[error("every element of the sequence is fixed by the unipotent flow")]
    InLm,
    #[error("sequence does not stabilize: {0}")]
    NotConverging(String),
    #[error("polynomial map is constant")]
    DegreeZero,
    #[error("flow time must be nonzero")]
    ZeroTime,
    #[error("scaling factor vanishes")]
    PhiVanishes,
    #[error("normalization violated: {0}")]
    NormalizationViolated(String),
    #[error("zero vector has no projective image")]
    ZeroVector,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Element of `E_m = M_2(Q_p)^m`.
pub type EmElem = Vec<Mat2>;

/// `X` lies in `L_1` when it commutes with every `w_1(t)`: upper triangular
/// with equal diagonal.
pub fn in_l1(x: &Mat2) -> Agreement {
    let zero = ctx(&x.a).zero();
    joint_agreement_at(&[(&x.c, &zero), (&x.a, &x.d)], x.min_valuation())
}

pub fn in_lm(x: &[Mat2]) -> Agreement {
    x.iter().map(in_l1).fold(Agreement::Equal, Agreement::and)
}

/// Point of `E = E_(n-1) x Q_p^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EVec {
    pub x: EmElem,
    pub y: [Padic; 2],
}

impl EVec {
    /// `(I, ..., I; e_1)`, whose stabilizer is `U`.
    pub fn base_point(qp: &Qp, n: usize) -> Self {
        EVec { x: vec![Mat2::identity(qp); n - 1], y: [qp.one(), qp.zero()] }
    }

    pub fn agreement(&self, o: &EVec) -> Agreement {
        let mut pairs: Vec<(&Padic, &Padic)> = Vec::new();
        for (a, b) in self.x.iter().zip(&o.x) {
            pairs.extend(a.entries().into_iter().zip(b.entries()));
        }
        pairs.push((&self.y[0], &o.y[0]));
        pairs.push((&self.y[1], &o.y[1]));
        if self.x.len() != o.x.len() {
            return Agreement::Distinct;
        }
        joint_agreement(&pairs)
    }

    /// Membership in the fixed set of `U`: `L_(n-1) x Q_p e_1`.
    pub fn in_l(&self) -> Agreement {
        let zero = ctx(&self.y[0]).zero();
        let scale = self
            .x
            .iter()
            .filter_map(Mat2::min_valuation)
            .chain(self.y.iter().filter_map(Padic::min_valuation))
            .min();
        let mut out = in_lm(&self.x);
        out = out.and(joint_agreement_at(&[(&self.y[1], &zero)], scale));
        out
    }
}

/// `g . X = (g(1) X(1) g(2)^-1, ..., g(n-1) X(n-1) g(n)^-1; g(n) Y)`.
pub fn act(g: &GElem, v: &EVec) -> Result<EVec, LinError> {
    let n = v.x.len() + 1;
    if g.arity() != n {
        return Err(LinError::ArityMismatch { group: g.arity(), expected: n });
    }
    let c = g.components();
    let x = (0..n - 1).map(|i| c[i].mul(&v.x[i]).mul(&c[i + 1].adjugate())).collect();
    let last = &c[n - 1];
    let y = [&last.a * &v.y[0] + &last.b * &v.y[1], &last.c * &v.y[0] + &last.d * &v.y[1]];
    Ok(EVec { x, y })
}

/// Coefficients of `w_1(t) X w_1(-t)` as a polynomial in `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjPoly {
    pub constant: Mat2,
    pub linear: Mat2,
    pub quadratic: Mat2,
}

impl ConjPoly {
    pub fn eval(&self, t: &Padic) -> Mat2 {
        self.constant.add(&self.linear.scale(t)).add(&self.quadratic.scale(&(t * t)))
    }
}

pub fn conj_poly(x: &Mat2) -> ConjPoly {
    let zero = ctx(&x.a).zero();
    ConjPoly {
        constant: x.clone(),
        linear: Mat2::new(x.c.clone(), &x.d - &x.a, zero.clone(), -&x.c),
        quadratic: Mat2::new(zero.clone(), -&x.c, zero.clone(), zero),
    }
}

/// `w_1(t) X w_1(-t)` by direct multiplication.
pub fn conj_direct(x: &Mat2, t: &Padic) -> Mat2 {
    w1(t).mul(x).mul(&w1(&-t))
}

/// Polynomial map `s -> sum_k coeffs[k] s^k` into `Q_p^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMap {
    coeffs: Vec<Vec<Padic>>,
}

impl PolyMap {
    pub fn new(coeffs: Vec<Vec<Padic>>) -> Self {
        assert!(!coeffs.is_empty(), "need at least a constant term");
        let m = coeffs[0].len();
        assert!(coeffs.iter().all(|c| c.len() == m), "coefficient vectors differ in width");
        PolyMap { coeffs }
    }

    pub fn width(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeffs(&self) -> &[Vec<Padic>] {
        &self.coeffs
    }

    /// Largest power whose coefficient vector has an entry known to be
    /// nonzero; `None` when every coefficient is (possibly) zero.
    pub fn degree(&self) -> Option<usize> {
        (0..self.coeffs.len())
            .rev()
            .find(|&k| self.coeffs[k].iter().any(|c| c.is_zero() == Agreement::Distinct))
    }

    pub fn eval(&self, s: &Padic) -> Vec<Padic> {
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc.iter().zip(c).map(|(a, b)| &(a * s) + b).collect();
        }
        acc
    }
}

/// Tail-stability of a sequence, in digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityReport {
    pub first_index: u64,
    pub last_index: u64,
    pub tail: usize,
    /// Required valuation of consecutive differences.
    pub threshold: i64,
    /// Smallest valuation among consecutive differences over the tail;
    /// `None` when they all vanish exactly.
    pub achieved: Option<i64>,
    pub stable: bool,
}

impl StabilityReport {
    fn from_values(first: u64, last: u64, tail: usize, threshold: i64, seq: &[Vec<Padic>]) -> Self {
        let start = seq.len().saturating_sub(tail + 1);
        let mut achieved: Option<i64> = None;
        for win in seq[start..].windows(2) {
            for (a, b) in win[1].iter().zip(&win[0]) {
                if let Some(v) = (a - b).min_valuation() {
                    achieved = Some(achieved.map_or(v, |x| x.min(v)));
                }
            }
        }
        let stable = seq.len() > tail && achieved.is_none_or(|v| v >= threshold);
        StabilityReport { first_index: first, last_index: last, tail, threshold, achieved, stable }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LimitOptions {
    /// Number of consecutive differences examined at the end of the window.
    pub tail: usize,
    /// Required valuation of those differences.
    pub threshold: i64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { tail: 3, threshold: 6 }
    }
}

/// Per-index normalization data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeScaleStep {
    pub index: u64,
    /// `t_i = p^(-exponent)`.
    pub exponent: i64,
    pub t: Padic,
    /// Component realizing the smallest time scale.
    pub component: usize,
    /// `-log_p max{|(d-a) t|, |c t^2|}` for that component: 0 when the
    /// normalization is attained exactly, 1 when the value group forces
    /// a smaller maximum.
    pub normalization_gap: i64,
}

#[derive(Debug, Clone)]
pub struct TimeScaleResult {
    pub steps: Vec<TimeScaleStep>,
    /// `psi(s) = alpha s + beta s^2` from the last index.
    pub psi: PolyMap,
    pub alpha: Vec<Padic>,
    pub beta: Vec<Padic>,
    pub report: StabilityReport,
}

/// Largest exponent `e` with `|(d-a) p^-e| <= 1` and `|c p^-2e| <= 1`, or
/// `None` when both terms vanish identically.
fn component_exponent(x: &Mat2) -> Option<(i64, i64)> {
    let diff = &x.d - &x.a;
    let scale = x.min_valuation();
    // an O(p^k) difference below the matrix scale counts as zero
    let vd = match diff.min_valuation() {
        Some(k) if diff.is_approx_zero() && scale.is_some_and(|s| k > s) => None,
        other => other,
    };
    let vc = x.c.min_valuation();
    let e = match (vd, vc) {
        (None, None) => return None,
        (Some(a), None) => a,
        (None, Some(c)) => c.div_euclid(2),
        (Some(a), Some(c)) => a.min(c.div_euclid(2)),
    };
    let gap = [vd.map(|a| a - e), vc.map(|c| c - 2 * e)].into_iter().flatten().min().unwrap();
    Some((e, gap))
}

/// Normalize a sequence `X_i -> I` outside `L_m` by the time scale at which
/// the conjugation `w_m(t_i) X_i w_m(-t_i)` first moves by a unit amount, and
/// read off the limiting quadratic map.
pub fn limit_time_scale(
    seq: &dyn Fn(u64) -> EmElem,
    window: RangeInclusive<u64>,
    opts: LimitOptions,
) -> Result<TimeScaleResult, LinError> {
    let (first, last) = (*window.start(), *window.end());
    let mut steps = Vec::new();
    let mut values: Vec<Vec<Padic>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for i in window {
        let x = seq(i);
        let scales: Vec<Option<(i64, i64)>> = x.iter().map(component_exponent).collect();
        // smallest |t| = smallest exponent; ties go to the first component
        let Some((component, (exponent, gap))) = scales
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.map(|s| (j, s)))
            .min_by_key(|(j, (e, _))| (*e, *j))
        else {
            continue;
        };
        let qp = ctx(&x[0].a);
        let t = qp.pow_p(-exponent);
        let t2 = &t * &t;
        alpha = x.iter().map(|m| &(&m.d - &m.a) * &t).collect::<Vec<_>>();
        beta = x.iter().map(|m| -(&m.c * &t2)).collect::<Vec<_>>();
        values.push(alpha.iter().chain(&beta).cloned().collect());
        steps.push(TimeScaleStep { index: i, exponent, t, component, normalization_gap: gap });
    }
    if steps.is_empty() {
        return Err(LinError::InLm);
    }
    let report = StabilityReport::from_values(first, last, opts.tail, opts.threshold, &values);
    if !report.stable {
        return Err(LinError::NotConverging(format!(
            "consecutive differences reach valuation {:?}, need {}",
            report.achieved, opts.threshold
        )));
    }
    let zero = ctx(&alpha[0]).zero();
    let psi = PolyMap::new(vec![vec![zero; alpha.len()], alpha.clone(), beta.clone()]);
    Ok(TimeScaleResult { steps, psi, alpha, beta, report })
}

/// Direction of `psi(t + s t^-q) - psi(t)` for large `|t|`, `q = deg - 1`.
#[derive(Debug, Clone)]
pub struct StqDirection {
    pub degree: usize,
    pub v: Vec<Padic>,
    /// Valuation of the residual at the validation point.
    pub residual_valuation: Option<i64>,
    pub validated: bool,
}

/// Validation point `|t| = p^STQ_T_EXP`, required residual `p^-STQ_TOL`.
pub const STQ_T_EXP: i64 = 20;
pub const STQ_TOL: i64 = 10;

pub fn st_q_direction(psi: &PolyMap) -> Result<StqDirection, LinError> {
    let deg = match psi.degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(LinError::DegreeZero),
    };
    let lead = &psi.coeffs[deg];
    let any = &lead[0];
    let digits = lead.iter().map(|c| c.significant_digits()).max().unwrap_or(0);
    // t^k terms reach p^(-20 k); carry enough digits that nothing is lost
    let qp = ctx(any).at_precision(digits.max(24) + (STQ_T_EXP as u32) * (deg as u32 + 1));
    let v: Vec<Padic> = lead.iter().map(|a| &qp.int(deg as i64) * a).collect();

    let t = qp.pow_p(-STQ_T_EXP);
    let s = qp.one();
    let q = deg as i64 - 1;
    let delta = &s * &qp.pow_p(STQ_T_EXP * q);
    // (t + delta)^k - t^k expanded binomially, so the leading t^k never has
    // to cancel
    let bracket = |k: usize| -> Padic {
        let mut acc = qp.zero();
        for j in 1..=k {
            let binom = BigInt::from(num_integer::binomial(k as u64, j as u64));
            acc = &acc + &(&(&qp.bigint(&binom) * &t.pow((k - j) as u32)) * &delta.pow(j as u32));
        }
        acc
    };
    let brackets: Vec<Padic> = (0..=deg).map(bracket).collect();
    let mut residual_valuation: Option<i64> = None;
    for (j, vj) in v.iter().enumerate() {
        let mut sum = qp.zero();
        for (k, bk) in brackets.iter().enumerate().skip(1) {
            sum = &sum + &(&psi.coeffs[k][j] * bk);
        }
        let r = &sum - &(&s * vj);
        if let Some(val) = r.min_valuation() {
            residual_valuation = Some(residual_valuation.map_or(val, |x| x.min(val)));
        }
    }
    let validated = residual_valuation.is_none_or(|v| v >= STQ_TOL);
    Ok(StqDirection { degree: deg, v, residual_valuation, validated })
}

/// Point of the projective line in the canonical chart: `[1 : y/x]` when
/// `|x| >= |y|`, else `[x/y : 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjPoint {
    pub x: Padic,
    pub y: Padic,
}

impl ProjPoint {
    pub fn new(x: &Padic, y: &Padic) -> Result<Self, LinError> {
        let one = ctx(x).one();
        match (x.min_valuation(), y.min_valuation(), x.is_significant(), y.is_significant()) {
            (_, _, false, false) => Err(LinError::ZeroVector),
            (Some(vx), vy, true, _) if vy.is_none_or(|vy| vx <= vy) => {
                Ok(ProjPoint { x: one, y: y.checked_div(x)? })
            }
            (_, _, _, true) => Ok(ProjPoint { x: x.checked_div(y)?, y: one }),
            _ => Ok(ProjPoint { x: one, y: y.checked_div(x)? }),
        }
    }

    pub fn e1(qp: &Qp) -> Self {
        ProjPoint { x: qp.one(), y: qp.zero() }
    }

    pub fn agreement(&self, o: &ProjPoint) -> Agreement {
        joint_agreement(&[(&self.x, &o.x), (&self.y, &o.y)])
    }
}

/// `w_1(s t) h [e_1]`.
pub fn proj_flow(h: &Mat2, t: &Padic, s: &Padic) -> Result<ProjPoint, LinError> {
    if !t.is_significant() {
        return Err(LinError::ZeroTime);
    }
    let st = s * t;
    ProjPoint::new(&(&h.a + &(&st * &h.c)), &h.c)
}

/// The unique `s*` at which `w_1(s t_i) h_i [e_1]` may fail to approach
/// `[e_1]`: the limit of `-a_i / (t_i c_i)` where `h_i e_1 = (a_i, c_i)`.
/// `None` when that ratio tends to infinity in absolute value (including
/// `c_i = 0`).
pub fn exceptional_s(
    h_seq: &dyn Fn(u64) -> Mat2,
    t_seq: &dyn Fn(u64) -> Padic,
    window: RangeInclusive<u64>,
    opts: LimitOptions,
) -> Result<Option<Padic>, LinError> {
    let (first, last) = (*window.start(), *window.end());
    let mut ratios: Vec<Option<Padic>> = Vec::new();
    for i in window {
        let h = h_seq(i);
        let t = t_seq(i);
        if !t.is_significant() {
            return Err(LinError::ZeroTime);
        }
        ratios.push(match (&t * &h.c).inv() {
            Ok(inv) => Some(-(&h.a * &inv)),
            Err(_) => None,
        });
    }
    let tail = &ratios[ratios.len().saturating_sub(opts.tail + 1)..];
    if tail.iter().all(Option::is_none) {
        return Ok(None);
    }
    if tail.iter().all(Option::is_some) {
        let vals: Vec<Vec<Padic>> = tail.iter().map(|r| vec![r.clone().unwrap()]).collect();
        let report = StabilityReport::from_values(first, last, opts.tail, opts.threshold, &vals);
        if report.stable {
            return Ok(tail.last().unwrap().clone());
        }
        // |ratio| -> infinity: valuations strictly decreasing and already
        // below -threshold
        let v: Vec<Option<i64>> = tail.iter().map(|r| r.as_ref().unwrap().valuation()).collect();
        if v.iter().all(Option::is_some) {
            let v: Vec<i64> = v.into_iter().flatten().collect();
            if v.windows(2).all(|w| w[1] < w[0]) && *v.last().unwrap() <= -opts.threshold {
                return Ok(None);
            }
        }
    }
    Err(LinError::NotConverging("exceptional parameter neither converges nor diverges".into()))
}

/// `Phi(s) = w(psi'(s)) d(phi(s))` with its action on the base point.
#[derive(Debug, Clone)]
pub struct PhiCurvePoint {
    pub element: GElem,
    pub image: EVec,
    /// `(w_1(psi_1(s)), ..., w_1(psi_(n-1)(s)); phi(s) e_1)` with
    /// `psi_i = psi'_i - psi'_(i+1)`.
    pub expected: EVec,
    pub agreement: Agreement,
    /// `psi'_k = sum_(j >= k) psi_j` at `s`.
    pub reconstruction: Agreement,
}

/// Build `psi'` from `psi` by suffix sums, with a trailing zero component.
pub fn psi_prime_from_psi(psi: &PolyMap) -> PolyMap {
    let zero = ctx(&psi.coeffs[0][0]).zero();
    let coeffs = psi
        .coeffs
        .iter()
        .map(|c| {
            let mut out = vec![zero.clone(); c.len() + 1];
            for k in (0..c.len()).rev() {
                out[k] = &out[k + 1] + &c[k];
            }
            out
        })
        .collect();
    PolyMap::new(coeffs)
}

pub fn phi_curve(psi_prime: &PolyMap, phi: &PolyMap, s: &Padic) -> Result<PhiCurvePoint, LinError> {
    let n = psi_prime.width();
    let qp = ctx(s);
    let zero = qp.zero();
    let one = qp.one();
    if phi.width() != 1 || phi.degree().is_some_and(|d| d > 1) {
        return Err(LinError::NormalizationViolated("phi must be a scalar polynomial of degree <= 1".into()));
    }
    if phi.eval(&zero)[0].compare(&one) != Agreement::Equal {
        return Err(LinError::NormalizationViolated("phi(0) != 1".into()));
    }
    if psi_prime.eval(&zero).iter().any(|c| c.is_zero() != Agreement::Equal) {
        return Err(LinError::NormalizationViolated("psi'(0) != 0".into()));
    }
    if psi_prime.coeffs.iter().any(|c| c[n - 1].is_zero() != Agreement::Equal) {
        return Err(LinError::NormalizationViolated("last component of psi' must vanish".into()));
    }
    let f = phi.eval(s).remove(0);
    if f.is_zero() != Agreement::Distinct {
        return Err(LinError::PhiVanishes);
    }
    let pp = psi_prime.eval(s);
    let element = w(&pp).mul(&d(&f, n)?)?;
    let image = act(&element, &EVec::base_point(&qp, n))?;
    let psi: Vec<Padic> = (0..n - 1).map(|i| &pp[i] - &pp[i + 1]).collect();
    let expected = EVec { x: psi.iter().map(w1).collect(), y: [f.clone(), zero.clone()] };
    let agreement = image.agreement(&expected);
    let mut suffix = zero.clone();
    let mut rec = Vec::new();
    for k in (0..n - 1).rev() {
        suffix = &suffix + &psi[k];
        rec.push((suffix.clone(), pp[k].clone()));
    }
    let refs: Vec<(&Padic, &Padic)> = rec.iter().map(|(a, b)| (a, b)).collect();
    let reconstruction = joint_agreement(&refs);
    Ok(PhiCurvePoint { element, image, expected, agreement, reconstruction })
}

/// `w_1(s / b) (1, b) = (1 + s, b)`, compared against the right side.
pub fn qp2_flow(b: &Padic, s: &Padic) -> Result<([Padic; 2], Agreement), LinError> {
    let t = b.inv()?;
    let one = ctx(b).one();
    let m = w1(&(s * &t));
    let out = [&m.a * &one + &m.b * b, &m.c * &one + &m.d * b];
    let expect = [&one + s, b.clone()];
    let ag = joint_agreement(&[(&out[0], &expect[0]), (&out[1], &expect[1])]);
    Ok((out, ag))
}

/// Membership of `g` in the normalizer of `U`, which is exactly the set of
/// elements that map the base point into the fixed set of `U`.
pub fn moves_base_point_into_l(g: &GElem) -> Result<Agreement, LinError> {
    let qp = ctx(&g.component(0).a);
    let img = act(g, &EVec::base_point(&qp, g.arity()))?;
    Ok(img.in_l())
}
