//! Bounded-precision arithmetic in `Q_p`.
//!
//! A nonzero [`Padic`] is stored as `p^v * u + O(p^(v + N))` where `u` is a
//! unit known modulo `p^N`. `N` is the number of significant digits and is
//! tracked per value: multiplication keeps the smaller digit count, addition
//! keeps the smaller *absolute* precision `v + N`, so cancellation shows up
//! as lost digits rather than as fabricated ones.
//!
//! Zero comes in two flavours. The exact zero (valuation `+inf`) is produced
//! by constructors and by multiplying with it. A value whose known digits all
//! cancel is `O(p^k)`: zero at this precision, but not known to be zero.

use std::cell::RefCell;
use std::cmp::{max, min, Ordering};
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

/// Default number of significant base-p digits.
pub const DEFAULT_PRECISION: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PadicError {
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("precision must be at least one digit")]
    ZeroPrecision,
    #[error("operands live over different primes ({0} and {1})")]
    PrimeMismatch(u64, u64),
    #[error("division by a value indistinguishable from zero")]
    DivisionByZero,
    #[error("result has no significant digits at working precision")]
    PrecisionExhausted,
    #[error("value is not a p-adic integer")]
    NotIntegral,
    #[error("no square root exists")]
    NoSquareRoot,
}

/// Three-valued outcome of a precision-limited equality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Agreement {
    Equal,
    Distinct,
    Indistinguishable,
}

impl Agreement {
    /// Conjunction: any `Distinct` wins, then any `Indistinguishable`.
    pub fn and(self, other: Agreement) -> Agreement {
        use Agreement::*;
        match (self, other) {
            (Distinct, _) | (_, Distinct) => Distinct,
            (Indistinguishable, _) | (_, Indistinguishable) => Indistinguishable,
            _ => Equal,
        }
    }

    pub fn is_equal(self) -> bool {
        self == Agreement::Equal
    }
}

/// Field context: the prime and the number of significant digits that
/// freshly constructed values carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Qp {
    prime: u64,
    precision: u32,
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl Qp {
    pub fn new(prime: u64, precision: u32) -> Result<Self, PadicError> {
        if !is_prime(prime) {
            return Err(PadicError::NotPrime(prime));
        }
        if precision == 0 {
            return Err(PadicError::ZeroPrecision);
        }
        Ok(Qp { prime, precision })
    }

    pub fn with_default_precision(prime: u64) -> Result<Self, PadicError> {
        Qp::new(prime, DEFAULT_PRECISION)
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Same prime, different digit budget.
    pub fn at_precision(&self, precision: u32) -> Qp {
        Qp { prime: self.prime, precision: precision.max(1) }
    }

    pub fn zero(&self) -> Padic {
        Padic { prime: self.prime, repr: Repr::Zero }
    }

    pub fn one(&self) -> Padic {
        self.int(1)
    }

    pub fn int(&self, n: i64) -> Padic {
        self.bigint(&BigInt::from(n))
    }

    pub fn bigint(&self, n: &BigInt) -> Padic {
        if n.is_zero() {
            return self.zero();
        }
        let p = BigUint::from(self.prime);
        let mut mag = n.magnitude().clone();
        let mut val = 0i64;
        loop {
            let (q, r) = mag.div_rem(&p);
            if !r.is_zero() {
                break;
            }
            mag = q;
            val += 1;
        }
        let modulus = pow_p(self.prime, self.precision);
        let mut unit = mag % &modulus;
        if n.sign() == Sign::Minus {
            unit = &modulus - unit;
        }
        Padic {
            prime: self.prime,
            repr: Repr::Unit { val, digits: self.precision, unit },
        }
    }

    /// `num / den` for integers, `den != 0`.
    pub fn rational(&self, num: i64, den: i64) -> Result<Padic, PadicError> {
        self.int(num).checked_div(&self.int(den))
    }

    pub fn from_ratio(&self, r: &BigRational) -> Result<Padic, PadicError> {
        self.bigint(r.numer()).checked_div(&self.bigint(r.denom()))
    }

    /// `p^k`, with a unit part of exactly 1.
    pub fn pow_p(&self, k: i64) -> Padic {
        Padic {
            prime: self.prime,
            repr: Repr::Unit { val: k, digits: self.precision, unit: BigUint::one() },
        }
    }

    /// `p^val * sum(digits[i] p^i)`; digits beyond the working precision are
    /// dropped.
    pub fn from_digits(&self, val: i64, digits: &[u64]) -> Padic {
        let p = BigUint::from(self.prime);
        let mut acc = BigUint::zero();
        for d in digits.iter().take(self.precision as usize).rev() {
            acc = acc * &p + BigUint::from(*d % self.prime);
        }
        normalize(self.prime, val, acc, self.precision)
    }

    /// Uniformly random p-adic integer at working precision.
    pub fn random_integer<R: Rng + ?Sized>(&self, rng: &mut R) -> Padic {
        let digits: Vec<u64> = (0..self.precision).map(|_| rng.random_range(0..self.prime)).collect();
        self.from_digits(0, &digits)
    }

    /// Uniformly random element of `Z_p^*`.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Padic {
        let mut digits: Vec<u64> =
            (0..self.precision).map(|_| rng.random_range(0..self.prime)).collect();
        digits[0] = rng.random_range(1..self.prime);
        self.from_digits(0, &digits)
    }

    /// Random value with valuation drawn from `vals` (or exact zero with
    /// small probability).
    pub fn random_value<R: Rng + ?Sized>(&self, rng: &mut R, vals: std::ops::RangeInclusive<i64>) -> Padic {
        if rng.random_range(0..32) == 0 {
            return self.zero();
        }
        let v = rng.random_range(vals);
        self.random_unit(rng).mul(&self.pow_p(v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Repr {
    /// Exact zero.
    Zero,
    /// `O(p^k)`: no significant digits are known.
    Approx(i64),
    /// `p^val * unit + O(p^(val + digits))`, `unit` coprime to p and below
    /// `p^digits`.
    Unit { val: i64, digits: u32, unit: BigUint },
}

/// A p-adic number at bounded precision.
///
/// `==` is representation equality (same digits, same precision); use
/// [`Padic::compare`] for the precision-aware test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Padic {
    prime: u64,
    repr: Repr,
}

thread_local! {
    static POWERS: RefCell<HashMap<u64, Vec<BigUint>>> = RefCell::new(HashMap::new());
}

/// `p^k` as a big integer, memoized per thread.
pub(crate) fn pow_p(p: u64, k: u32) -> BigUint {
    POWERS.with(|cell| {
        let mut map = cell.borrow_mut();
        let table = map.entry(p).or_insert_with(|| vec![BigUint::one()]);
        while table.len() <= k as usize {
            let next = table.last().unwrap() * p;
            table.push(next);
        }
        table[k as usize].clone()
    })
}

/// Build `p^base * raw + O(p^(base + width))`, stripping p-factors of `raw`.
fn normalize(p: u64, base: i64, raw: BigUint, width: u32) -> Padic {
    if raw.is_zero() {
        return Padic { prime: p, repr: Repr::Approx(base + width as i64) };
    }
    let pb = BigUint::from(p);
    let mut unit = raw;
    let mut shift = 0u32;
    loop {
        let (q, r) = unit.div_rem(&pb);
        if !r.is_zero() {
            break;
        }
        unit = q;
        shift += 1;
    }
    Padic {
        prime: p,
        repr: Repr::Unit { val: base + shift as i64, digits: width - shift, unit },
    }
}

impl Padic {
    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn is_exact_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    /// True for `O(p^k)` values: zero at this precision but not exactly.
    pub fn is_approx_zero(&self) -> bool {
        matches!(self.repr, Repr::Approx(_))
    }

    /// Has at least one significant digit.
    pub fn is_significant(&self) -> bool {
        matches!(self.repr, Repr::Unit { .. })
    }

    /// Exact valuation when known (nonzero with significant digits).
    pub fn valuation(&self) -> Option<i64> {
        match self.repr {
            Repr::Unit { val, .. } => Some(val),
            _ => None,
        }
    }

    /// Lower bound on the valuation; `None` stands for `+inf` (exact zero).
    pub fn min_valuation(&self) -> Option<i64> {
        match self.repr {
            Repr::Zero => None,
            Repr::Approx(k) => Some(k),
            Repr::Unit { val, .. } => Some(val),
        }
    }

    /// Absolute precision: the value is known modulo `p^k`. `None` for the
    /// exact zero.
    pub fn abs_precision(&self) -> Option<i64> {
        match self.repr {
            Repr::Zero => None,
            Repr::Approx(k) => Some(k),
            Repr::Unit { val, digits, .. } => Some(val + digits as i64),
        }
    }

    pub fn significant_digits(&self) -> u32 {
        match self.repr {
            Repr::Unit { digits, .. } => digits,
            _ => 0,
        }
    }

    /// Unit part as an integer below `p^digits`.
    pub fn unit(&self) -> Option<&BigUint> {
        match &self.repr {
            Repr::Unit { unit, .. } => Some(unit),
            _ => None,
        }
    }

    /// Base-p digits of the unit part, least significant first.
    pub fn unit_digits(&self) -> Vec<u64> {
        match &self.repr {
            Repr::Unit { unit, digits, .. } => {
                let pb = BigUint::from(self.prime);
                let mut u = unit.clone();
                (0..*digits)
                    .map(|_| {
                        let (q, r) = u.div_rem(&pb);
                        u = q;
                        r.to_u64().unwrap()
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// `|x|_p = p^(-v)`; exact zero has norm 0. `None` when the value is
    /// `O(p^k)` and its norm is not determined.
    pub fn norm(&self) -> Option<BigRational> {
        match self.repr {
            Repr::Zero => Some(BigRational::zero()),
            Repr::Approx(_) => None,
            Repr::Unit { val, .. } => Some(p_power_ratio(self.prime, -val)),
        }
    }

    /// Checked field operation, reporting errors instead of returning
    /// `O(p^k)` values.
    pub fn arith(&self, other: &Padic, op: ArithOp) -> Result<Padic, PadicError> {
        if self.prime != other.prime {
            return Err(PadicError::PrimeMismatch(self.prime, other.prime));
        }
        let out = match op {
            ArithOp::Add => self.add_impl(other),
            ArithOp::Sub => self.add_impl(&other.neg_impl()),
            ArithOp::Mul => self.mul_impl(other),
            ArithOp::Div => self.checked_div(other)?,
        };
        if out.is_approx_zero() {
            return Err(PadicError::PrecisionExhausted);
        }
        Ok(out)
    }

    pub fn inv(&self) -> Result<Padic, PadicError> {
        match &self.repr {
            Repr::Unit { val, digits, unit } => {
                let m = pow_p(self.prime, *digits);
                let inv = unit.modinv(&m).expect("unit is coprime to p");
                Ok(Padic { prime: self.prime, repr: Repr::Unit { val: -val, digits: *digits, unit: inv } })
            }
            _ => Err(PadicError::DivisionByZero),
        }
    }

    pub fn checked_div(&self, other: &Padic) -> Result<Padic, PadicError> {
        if self.prime != other.prime {
            return Err(PadicError::PrimeMismatch(self.prime, other.prime));
        }
        Ok(self.mul_impl(&other.inv()?))
    }

    pub fn pow(&self, e: u32) -> Padic {
        let mut acc = Padic { prime: self.prime, repr: Repr::Unit { val: 0, digits: u32::MAX, unit: BigUint::one() } };
        if e == 0 {
            // 1 at the precision of self (or full if self is zero)
            return match &self.repr {
                Repr::Unit { digits, .. } => {
                    Padic { prime: self.prime, repr: Repr::Unit { val: 0, digits: *digits, unit: BigUint::one() } }
                }
                _ => Padic { prime: self.prime, repr: Repr::Unit { val: 0, digits: DEFAULT_PRECISION, unit: BigUint::one() } },
            };
        }
        for _ in 0..e {
            acc = acc.mul_impl(self);
        }
        acc
    }

    /// Compare against another value. `Equal` when every jointly known digit
    /// agrees and at least one of them is significant; `Distinct` when a
    /// known digit differs.
    pub fn compare(&self, other: &Padic) -> Agreement {
        joint_agreement(&[(self, other)])
    }

    pub fn is_zero(&self) -> Agreement {
        match self.repr {
            Repr::Zero => Agreement::Equal,
            Repr::Approx(_) => Agreement::Indistinguishable,
            Repr::Unit { .. } => Agreement::Distinct,
        }
    }

    /// Value modulo `p^k` for p-adic integers.
    pub fn residue(&self, k: u32) -> Result<BigUint, PadicError> {
        match &self.repr {
            Repr::Zero => Ok(BigUint::zero()),
            Repr::Approx(a) => {
                if *a >= k as i64 {
                    Ok(BigUint::zero())
                } else {
                    Err(PadicError::PrecisionExhausted)
                }
            }
            Repr::Unit { val, digits, unit } => {
                if *val < 0 {
                    return Err(PadicError::NotIntegral);
                }
                if val + (*digits as i64) < k as i64 {
                    return Err(PadicError::PrecisionExhausted);
                }
                if *val >= k as i64 {
                    return Ok(BigUint::zero());
                }
                let m = pow_p(self.prime, k);
                Ok((unit * pow_p(self.prime, *val as u32)) % m)
            }
        }
    }

    /// The finite expansion `sum_{i < k} a_i p^i` of this value, returned as
    /// an element that carries the full digit budget `digits` (it is an
    /// exact rational, so zero padding is legitimate).
    pub fn truncate_below(&self, k: i64, digits: u32) -> Result<Padic, PadicError> {
        match &self.repr {
            Repr::Zero => Ok(self.clone()),
            Repr::Approx(a) => {
                if *a >= k {
                    Ok(Padic { prime: self.prime, repr: Repr::Zero })
                } else {
                    Err(PadicError::PrecisionExhausted)
                }
            }
            Repr::Unit { val, digits: d, unit } => {
                if *val >= k {
                    return Ok(Padic { prime: self.prime, repr: Repr::Zero });
                }
                let keep = (k - val) as u32;
                if keep > *d || keep > digits {
                    return Err(PadicError::PrecisionExhausted);
                }
                let u = unit % pow_p(self.prime, keep);
                Ok(Padic { prime: self.prime, repr: Repr::Unit { val: *val, digits, unit: u } })
            }
        }
    }

    /// Reduce the number of significant digits to at most `digits`.
    pub fn truncate_digits(&self, digits: u32) -> Padic {
        match &self.repr {
            Repr::Unit { val, digits: d, unit } if *d > digits => {
                if digits == 0 {
                    return Padic { prime: self.prime, repr: Repr::Approx(*val) };
                }
                Padic {
                    prime: self.prime,
                    repr: Repr::Unit { val: *val, digits, unit: unit % pow_p(self.prime, digits) },
                }
            }
            _ => self.clone(),
        }
    }

    /// Exact rational value of the known digits (`O(p^k)` maps to 0).
    pub fn to_rational(&self) -> BigRational {
        match &self.repr {
            Repr::Unit { val, unit, .. } => {
                BigRational::from_integer(BigInt::from(unit.clone())) * p_power_ratio(self.prime, *val)
            }
            _ => BigRational::zero(),
        }
    }

    /// Like [`Padic::to_rational`] but with the unit taken from the balanced
    /// residue range `(-p^N / 2, p^N / 2]`, so small negative integers read
    /// back as themselves.
    pub fn to_balanced_rational(&self) -> BigRational {
        match &self.repr {
            Repr::Unit { val, digits, unit } => {
                let modulus = BigInt::from(self.prime).pow(*digits);
                let mut u = BigInt::from(unit.clone());
                if &u * 2 > modulus {
                    u -= modulus;
                }
                BigRational::from_integer(u) * p_power_ratio(self.prime, *val)
            }
            _ => BigRational::zero(),
        }
    }

    fn add_impl(&self, other: &Padic) -> Padic {
        assert_eq!(self.prime, other.prime, "p-adic operands over different primes");
        let p = self.prime;
        match (&self.repr, &other.repr) {
            (Repr::Zero, _) => other.clone(),
            (_, Repr::Zero) => self.clone(),
            (Repr::Approx(a), Repr::Approx(b)) => Padic { prime: p, repr: Repr::Approx(min(*a, *b)) },
            (Repr::Approx(a), Repr::Unit { .. }) => other.cap_abs(*a),
            (Repr::Unit { .. }, Repr::Approx(b)) => self.cap_abs(*b),
            (
                Repr::Unit { val: va, digits: da, unit: ua },
                Repr::Unit { val: vb, digits: db, unit: ub },
            ) => {
                let abs = min(va + *da as i64, vb + *db as i64);
                let base = min(*va, *vb);
                let width = (abs - base) as u32;
                let m = pow_p(p, width);
                let shifted = |v: i64, u: &BigUint| -> BigUint {
                    let s = (v - base) as u32;
                    if s >= width {
                        BigUint::zero()
                    } else if s == 0 {
                        u.clone()
                    } else {
                        u * pow_p(p, s)
                    }
                };
                let raw = (shifted(*va, ua) + shifted(*vb, ub)) % m;
                normalize(p, base, raw, width)
            }
        }
    }

    /// Lower the absolute precision to `abs`.
    fn cap_abs(&self, abs: i64) -> Padic {
        match &self.repr {
            Repr::Unit { val, digits, unit } => {
                if abs <= *val {
                    Padic { prime: self.prime, repr: Repr::Approx(abs) }
                } else if abs >= val + *digits as i64 {
                    self.clone()
                } else {
                    let d = (abs - val) as u32;
                    Padic {
                        prime: self.prime,
                        repr: Repr::Unit { val: *val, digits: d, unit: unit % pow_p(self.prime, d) },
                    }
                }
            }
            Repr::Approx(k) => Padic { prime: self.prime, repr: Repr::Approx(min(*k, abs)) },
            Repr::Zero => Padic { prime: self.prime, repr: Repr::Approx(abs) },
        }
    }

    fn mul_impl(&self, other: &Padic) -> Padic {
        assert_eq!(self.prime, other.prime, "p-adic operands over different primes");
        let p = self.prime;
        let repr = match (&self.repr, &other.repr) {
            (Repr::Zero, _) | (_, Repr::Zero) => Repr::Zero,
            (Repr::Approx(a), Repr::Approx(b)) => Repr::Approx(a + b),
            (Repr::Approx(a), Repr::Unit { val, .. }) | (Repr::Unit { val, .. }, Repr::Approx(a)) => {
                Repr::Approx(a + val)
            }
            (
                Repr::Unit { val: va, digits: da, unit: ua },
                Repr::Unit { val: vb, digits: db, unit: ub },
            ) => {
                let d = min(*da, *db);
                let unit = if d == u32::MAX {
                    ua * ub
                } else {
                    (ua * ub) % pow_p(p, d)
                };
                Repr::Unit { val: va + vb, digits: d, unit }
            }
        };
        Padic { prime: p, repr }
    }

    fn neg_impl(&self) -> Padic {
        match &self.repr {
            Repr::Unit { val, digits, unit } => {
                let m = pow_p(self.prime, *digits);
                Padic { prime: self.prime, repr: Repr::Unit { val: *val, digits: *digits, unit: m - unit } }
            }
            _ => self.clone(),
        }
    }

    /// Square root by Hensel lifting. Of the two roots, returns the one whose
    /// leading digit lies in `1..=(p-1)/2`.
    pub fn hensel_sqrt(&self) -> Result<Padic, PadicError> {
        let p = self.prime;
        let (val, digits, unit) = match &self.repr {
            Repr::Zero => return Ok(self.clone()),
            Repr::Approx(_) => return Err(PadicError::PrecisionExhausted),
            Repr::Unit { val, digits, unit } => (*val, *digits, unit),
        };
        if p == 2 || val.rem_euclid(2) != 0 {
            return Err(PadicError::NoSquareRoot);
        }
        let a0 = (unit % p).to_u64().unwrap();
        let r0 = (1..=(p - 1) / 2).find(|r| (r * r) % p == a0).ok_or(PadicError::NoSquareRoot)?;
        // Newton iteration r <- r - (r^2 - a) / (2r), doubling correct digits.
        let mut r = BigUint::from(r0);
        let mut known = 1u32;
        while known < digits {
            known = min(2 * known, digits);
            let m = pow_p(p, known);
            let a = unit % &m;
            let r2 = (&r * &r) % &m;
            let diff = (r2 + &m - a) % &m;
            let two_r = (BigUint::from(2u32) * &r) % &m;
            let step = (diff * two_r.modinv(&m).expect("2r is a unit")) % &m;
            r = (r + &m - step) % &m;
        }
        Ok(Padic { prime: p, repr: Repr::Unit { val: val / 2, digits, unit: r } })
    }
}

/// Joint agreement of several pairs at a common scale (the smallest
/// valuation bound among all operands). Used for matrices and tuples so that
/// an entry which cancels to `O(p^k)` still compares as equal when `k` is
/// below the scale of its neighbours.
pub fn joint_agreement(pairs: &[(&Padic, &Padic)]) -> Agreement {
    joint_agreement_at(pairs, None)
}

/// As [`joint_agreement`], with the scale lowered to `scale_hint` when the
/// operands belong to a larger object (e.g. a matrix whose other entries are
/// not being compared).
pub fn joint_agreement_at(pairs: &[(&Padic, &Padic)], scale_hint: Option<i64>) -> Agreement {
    let scale = pairs
        .iter()
        .flat_map(|(x, y)| [x.min_valuation(), y.min_valuation()])
        .chain(std::iter::once(scale_hint))
        .flatten()
        .min();
    let mut out = Agreement::Equal;
    for (x, y) in pairs {
        let diff = x.add_impl(&y.neg_impl());
        let verdict = match diff.repr {
            Repr::Zero => Agreement::Equal,
            Repr::Unit { .. } => Agreement::Distinct,
            Repr::Approx(k) => match scale {
                Some(s) if k > s => Agreement::Equal,
                _ => Agreement::Indistinguishable,
            },
        };
        out = out.and(verdict);
    }
    out
}

/// `p^k` as an exact rational.
pub fn p_power_ratio(p: u64, k: i64) -> BigRational {
    let base = BigInt::from(pow_p(p, k.unsigned_abs() as u32));
    if k >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

/// Smallest integer `k` with `p^(-k) < m`, for a positive rational `m`.
/// Then `|x| < m` iff `x = 0` or `v(x) >= k`.
pub fn strict_norm_threshold(p: u64, m: &BigRational) -> i64 {
    assert!(m.is_positive(), "threshold must be positive");
    // start from a bound derived from bit lengths, then adjust
    let mut k: i64 = 0;
    while p_power_ratio(p, -k) >= *m {
        k += 1;
    }
    while p_power_ratio(p, -(k - 1)) < *m {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Padic> for &Padic {
            type Output = Padic;
            fn $method(self, rhs: &Padic) -> Padic {
                $body(self, rhs)
            }
        }
        impl $trait<Padic> for Padic {
            type Output = Padic;
            fn $method(self, rhs: Padic) -> Padic {
                $body(&self, &rhs)
            }
        }
        impl $trait<&Padic> for Padic {
            type Output = Padic;
            fn $method(self, rhs: &Padic) -> Padic {
                $body(&self, rhs)
            }
        }
        impl $trait<Padic> for &Padic {
            type Output = Padic;
            fn $method(self, rhs: Padic) -> Padic {
                $body(self, &rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a: &Padic, b: &Padic| a.add_impl(b));
forward_binop!(Sub, sub, |a: &Padic, b: &Padic| a.add_impl(&b.neg_impl()));
forward_binop!(Mul, mul, |a: &Padic, b: &Padic| a.mul_impl(b));

impl Neg for &Padic {
    type Output = Padic;
    fn neg(self) -> Padic {
        self.neg_impl()
    }
}

impl Neg for Padic {
    type Output = Padic;
    fn neg(self) -> Padic {
        self.neg_impl()
    }
}

impl fmt::Display for Padic {
    /// `p^v * (d0 + d1*p + ...) + O(p^(v+N))`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.prime;
        match &self.repr {
            Repr::Zero => write!(f, "0"),
            Repr::Approx(k) => write!(f, "O({p}^{k})"),
            Repr::Unit { val, digits, .. } => {
                let terms: Vec<String> = self
                    .unit_digits()
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| **d != 0)
                    .map(|(i, d)| match i {
                        0 => format!("{d}"),
                        1 => format!("{d}*{p}"),
                        _ => format!("{d}*{p}^{i}"),
                    })
                    .collect();
                write!(f, "{p}^{val} * ({}) + O({p}^{})", terms.join(" + "), val + *digits as i64)
            }
        }
    }
}

/// A closed ball `center + p^m Z_p` of radius `p^(-m)`. The center is kept
/// as the exact finite expansion of its digits below `p^m`.
#[derive(Clone, Debug)]
pub struct PadicBall {
    center: Padic,
    radius_exp: i64,
}

/// How two balls sit relative to each other. Balls in an ultrametric space
/// never overlap partially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BallRelation {
    Disjoint,
    Equal,
    FirstInsideSecond,
    SecondInsideFirst,
}

/// Haar measure of a set, normalized by `theta(Z_p) = 1`; `l` is the degree
/// of the field over the closure of `Q` (always 1 here).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasureValue {
    #[serde(serialize_with = "crate::serialize_ratio")]
    pub value: BigRational,
    pub l: u32,
}

impl PadicBall {
    /// `center + p^m Z_p`, using the center's digits below `p^m`. The
    /// representative keeps `digits` significant digits of headroom.
    pub fn new(center: &Padic, radius_exp: i64) -> Result<Self, PadicError> {
        let digits = max(center.significant_digits(), DEFAULT_PRECISION);
        let c = center.truncate_below(radius_exp, digits)?;
        Ok(PadicBall { center: c, radius_exp })
    }

    pub fn with_digits(center: &Padic, radius_exp: i64, digits: u32) -> Result<Self, PadicError> {
        let c = center.truncate_below(radius_exp, digits)?;
        Ok(PadicBall { center: c, radius_exp })
    }

    /// `Z_p` itself.
    pub fn unit_ball(qp: &Qp) -> Self {
        PadicBall { center: qp.zero(), radius_exp: 0 }
    }

    pub fn center(&self) -> &Padic {
        &self.center
    }

    pub fn prime(&self) -> u64 {
        self.center.prime
    }

    pub fn radius_exp(&self) -> i64 {
        self.radius_exp
    }

    pub fn radius(&self) -> BigRational {
        p_power_ratio(self.prime(), -self.radius_exp)
    }

    pub fn measure(&self) -> BigRational {
        p_power_ratio(self.prime(), -self.radius_exp)
    }

    pub fn contains(&self, x: &Padic) -> Agreement {
        let d = x - &self.center;
        match d.repr {
            Repr::Zero => Agreement::Equal,
            Repr::Unit { val, .. } if val >= self.radius_exp => Agreement::Equal,
            Repr::Unit { .. } => Agreement::Distinct,
            Repr::Approx(k) if k >= self.radius_exp => Agreement::Equal,
            Repr::Approx(_) => Agreement::Indistinguishable,
        }
    }

    pub fn relation(&self, other: &PadicBall) -> BallRelation {
        let (big, small, first_big) = if self.radius_exp <= other.radius_exp {
            (self, other, true)
        } else {
            (other, self, false)
        };
        if big.contains(&small.center) != Agreement::Equal {
            return BallRelation::Disjoint;
        }
        if big.radius_exp == small.radius_exp {
            BallRelation::Equal
        } else if first_big {
            BallRelation::SecondInsideFirst
        } else {
            BallRelation::FirstInsideSecond
        }
    }

    pub fn is_subset_of(&self, other: &PadicBall) -> bool {
        matches!(self.relation(other), BallRelation::Equal | BallRelation::FirstInsideSecond)
    }

    /// The `p` balls of radius `p^(-m-1)` partitioning this one, ordered by
    /// the new digit.
    pub fn children(&self) -> Vec<PadicBall> {
        let p = self.prime();
        let digits = max(self.center.significant_digits(), DEFAULT_PRECISION);
        let qp = Qp { prime: p, precision: digits };
        let step = qp.pow_p(self.radius_exp);
        (0..p)
            .map(|j| {
                let c = &self.center + &(&qp.int(j as i64) * &step);
                PadicBall { center: c, radius_exp: self.radius_exp + 1 }
            })
            .collect()
    }

    /// The ball of radius `p^(1-m)` containing this one.
    pub fn parent(&self) -> PadicBall {
        let digits = max(self.center.significant_digits(), DEFAULT_PRECISION);
        PadicBall::with_digits(&self.center, self.radius_exp - 1, digits)
            .expect("center digits are exact")
    }
}

impl fmt::Display for PadicBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}^{} Z_{}", self.center.to_rational(), self.prime(), self.radius_exp, self.prime())
    }
}

pub fn ball_measure(ball: &PadicBall) -> MeasureValue {
    MeasureValue { value: ball.measure(), l: 1 }
}

/// `theta(B2) / theta(B1) = (r2 / r1)^l` with `l = 1`.
pub fn ball_ratio(b1: &PadicBall, b2: &PadicBall) -> Result<BigRational, PadicError> {
    if b1.prime() != b2.prime() {
        return Err(PadicError::PrimeMismatch(b1.prime(), b2.prime()));
    }
    Ok(p_power_ratio(b1.prime(), b1.radius_exp - b2.radius_exp))
}

impl PartialOrd for MeasureValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}
