//! Exact real scalars: rational combinations over a declared basis of reals.
//!
//! A [`Scalar`] is a vector of rationals, one per generator of its
//! [`ScalarBasis`]. Equality is coefficient-wise; the sign of a nonzero
//! value is certified by interval enclosures of the generators, refined by
//! doubling the bit precision until zero is excluded or the configured cap
//! is reached.
//!
//! The generators of a basis are *assumed* to be linearly independent over
//! the rationals. This is recorded on the basis and never verified.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};
use std::sync::{Arc, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default cap on the bit precision used when certifying signs.
pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// Environment variable overriding [`DEFAULT_PRECISION_BITS`].
pub const PRECISION_ENV: &str = "RTREELAB_PRECISION_BITS";

const FIRST_ROUND_BITS: u32 = 32;

static PRECISION_OVERRIDE: AtomicU32 = AtomicU32::new(0);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("sign not separated from zero within {bits} bits of precision")]
    PrecisionBudgetExceeded { bits: u32 },
    #[error("incompatible scalar bases: {left} vs {right}")]
    BasisMismatch { left: String, right: String },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("cannot parse scalar {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// Sets the process-wide refinement cap. Zero restores the default.
pub fn set_precision_cap(bits: u32) {
    PRECISION_OVERRIDE.store(bits, AtomicOrdering::Relaxed);
}

/// Current refinement cap: explicit override, else the environment, else 256.
pub fn precision_cap() -> u32 {
    let explicit = PRECISION_OVERRIDE.load(AtomicOrdering::Relaxed);
    if explicit != 0 {
        return explicit;
    }
    static FROM_ENV: OnceLock<u32> = OnceLock::new();
    *FROM_ENV.get_or_init(|| {
        std::env::var(PRECISION_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u32>().ok())
            .filter(|&b| b > 0)
            .unwrap_or(DEFAULT_PRECISION_BITS)
    })
}

/// A real constant with arbitrarily refinable rational enclosures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    One,
    /// Square root of a positive non-square integer.
    Sqrt(u64),
}

impl Generator {
    pub fn tag(&self) -> String {
        match self {
            Generator::One => "1".to_string(),
            Generator::Sqrt(n) => format!("sqrt{n}"),
        }
    }

    pub fn parse(tag: &str) -> Result<Generator, ScalarError> {
        let tag = tag.trim();
        if tag == "1" {
            return Ok(Generator::One);
        }
        let n = tag
            .strip_prefix("sqrt")
            .and_then(|rest| rest.parse::<u64>().ok())
            .ok_or_else(|| ScalarError::InvalidBasis(format!("unknown generator tag {tag:?}")))?;
        if n == 0 || n.sqrt() * n.sqrt() == n {
            return Err(ScalarError::InvalidBasis(format!(
                "sqrt{n} is rational; use the generator 1"
            )));
        }
        Ok(Generator::Sqrt(n))
    }

    /// Rational enclosure `[lo, hi]` with `hi - lo <= 2^-bits`.
    pub fn enclose(&self, bits: u32) -> (BigRational, BigRational) {
        match self {
            Generator::One => (BigRational::one(), BigRational::one()),
            Generator::Sqrt(n) => {
                let scale = BigUint::one() << (2 * bits as usize);
                let target = scale * BigUint::from(*n);
                let root = target.sqrt();
                let denom = BigInt::one() << bits as usize;
                let lo = BigRational::new(BigInt::from(root.clone()), denom.clone());
                let hi = if &root * &root == target {
                    lo.clone()
                } else {
                    BigRational::new(BigInt::from(root + 1u32), denom)
                };
                (lo, hi)
            }
        }
    }
}

/// Ordered list of real generators; the first is always `1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScalarBasis {
    generators: Vec<Generator>,
}

impl ScalarBasis {
    pub fn new(generators: Vec<Generator>) -> Result<Self, ScalarError> {
        if generators.first() != Some(&Generator::One) {
            return Err(ScalarError::InvalidBasis("first generator must be 1".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            if generators[..i].contains(g) {
                return Err(ScalarError::InvalidBasis(format!("duplicate generator {}", g.tag())));
            }
            if i > 0 && *g == Generator::One {
                return Err(ScalarError::InvalidBasis("1 may only appear first".into()));
            }
        }
        Ok(ScalarBasis { generators })
    }

    pub fn from_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self, ScalarError> {
        let gens = tags
            .iter()
            .map(|t| Generator::parse(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(gens)
    }

    /// The basis `(1)`.
    pub fn rational() -> Arc<ScalarBasis> {
        static B: OnceLock<Arc<ScalarBasis>> = OnceLock::new();
        B.get_or_init(|| Arc::new(ScalarBasis { generators: vec![Generator::One] }))
            .clone()
    }

    /// The basis `(1, sqrt5)`, home of the golden ratio.
    pub fn golden() -> Arc<ScalarBasis> {
        static B: OnceLock<Arc<ScalarBasis>> = OnceLock::new();
        B.get_or_init(|| {
            Arc::new(ScalarBasis { generators: vec![Generator::One, Generator::Sqrt(5)] })
        })
        .clone()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn tags(&self) -> Vec<String> {
        self.generators.iter().map(Generator::tag).collect()
    }

    /// Assumption the caller makes by declaring this basis.
    pub fn declared_assumption(&self) -> &'static str {
        "generators are linearly independent over Q (declared, not verified)"
    }

    fn is_prefix_of(&self, other: &ScalarBasis) -> bool {
        other.generators.starts_with(&self.generators)
    }
}

fn unify(a: &Arc<ScalarBasis>, b: &Arc<ScalarBasis>) -> Result<Arc<ScalarBasis>, ScalarError> {
    if Arc::ptr_eq(a, b) || a == b || a.is_prefix_of(b) {
        Ok(b.clone())
    } else if b.is_prefix_of(a) {
        Ok(a.clone())
    } else {
        Err(ScalarError::BasisMismatch { left: a.tags().join(","), right: b.tags().join(",") })
    }
}

/// Exact real number: rational coefficients over a [`ScalarBasis`].
#[derive(Clone)]
pub struct Scalar {
    basis: Arc<ScalarBasis>,
    coeffs: Vec<BigRational>,
}

impl Scalar {
    pub fn new(basis: Arc<ScalarBasis>, coeffs: Vec<BigRational>) -> Result<Self, ScalarError> {
        if coeffs.len() != basis.dim() {
            return Err(ScalarError::InvalidBasis(format!(
                "expected {} coefficients, got {}",
                basis.dim(),
                coeffs.len()
            )));
        }
        Ok(Scalar { basis, coeffs })
    }

    pub fn zero() -> Self {
        Self::from_rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    pub fn from_rational(r: BigRational) -> Self {
        Scalar { basis: ScalarBasis::rational(), coeffs: vec![r] }
    }

    pub fn from_integer(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(n.into()))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(BigRational::new(num.into(), den.into()))
    }

    /// `1 / 2^k`.
    pub fn dyadic(k: u32) -> Self {
        Self::from_rational(BigRational::new(BigInt::one(), BigInt::one() << k as usize))
    }

    /// The golden ratio conjugate `(sqrt5 - 1) / 2`, about 0.618.
    pub fn golden_gamma() -> Self {
        let half = BigRational::new(1.into(), 2.into());
        Scalar { basis: ScalarBasis::golden(), coeffs: vec![-half.clone(), half] }
    }

    pub fn basis(&self) -> &Arc<ScalarBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> BigRational {
        self.coeffs.get(i).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// The rational value, when every irrational coefficient vanishes.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.coeffs[1..].iter().all(Zero::is_zero) {
            Some(self.coeffs[0].clone())
        } else {
            None
        }
    }

    fn lift(&self, basis: &Arc<ScalarBasis>) -> Vec<BigRational> {
        let mut out = self.coeffs.clone();
        out.resize(basis.dim(), BigRational::zero());
        out
    }

    pub fn try_add(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        let basis = unify(&self.basis, &other.basis)?;
        let a = self.lift(&basis);
        let b = other.lift(&basis);
        let coeffs = a.into_iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Scalar { basis, coeffs })
    }

    pub fn try_sub(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.try_add(&-other)
    }

    pub fn scale(&self, r: &BigRational) -> Scalar {
        Scalar { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|c| c * r).collect() }
    }

    pub fn half(&self) -> Scalar {
        self.scale(&BigRational::new(1.into(), 2.into()))
    }

    /// Nonzero `(generator, coefficient)` terms; the canonical content of the value.
    fn terms(&self) -> impl Iterator<Item = (&Generator, &BigRational)> {
        self.basis.generators.iter().zip(&self.coeffs).filter(|(_, c)| !c.is_zero())
    }

    /// Certified sign using the process-wide precision cap.
    pub fn sign(&self) -> Result<i8, ScalarError> {
        self.sign_with_cap(precision_cap())
    }

    pub fn sign_with_cap(&self, cap: u32) -> Result<i8, ScalarError> {
        let terms: Vec<_> = self.terms().collect();
        match terms.as_slice() {
            [] => return Ok(0),
            [(Generator::One, c)] => return Ok(rational_sign(c)),
            _ => {}
        }
        let mut bits = FIRST_ROUND_BITS.min(cap.max(1));
        loop {
            let (lo, hi) = enclosure(&terms, bits);
            if lo.is_positive() {
                return Ok(1);
            }
            if hi.is_negative() {
                return Ok(-1);
            }
            if bits >= cap {
                return Err(ScalarError::PrecisionBudgetExceeded { bits: cap });
            }
            bits = (bits * 2).min(cap);
        }
    }

    /// Certified comparison; consistent with `sign(self - other)`.
    pub fn compare(&self, other: &Scalar) -> Result<Ordering, ScalarError> {
        let diff = self.try_sub(other)?;
        Ok(match diff.sign()? {
            -1 => Ordering::Less,
            0 => Ordering::Equal,
            _ => Ordering::Greater,
        })
    }

    pub fn min(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        Ok(if self.compare(other)? == Ordering::Greater { other.clone() } else { self.clone() })
    }

    pub fn max(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        Ok(if self.compare(other)? == Ordering::Less { other.clone() } else { self.clone() })
    }

    pub fn abs(&self) -> Result<Scalar, ScalarError> {
        Ok(if self.sign()? < 0 { -self } else { self.clone() })
    }

    /// Floating-point approximation, for display and heuristics only.
    pub fn to_f64(&self) -> f64 {
        let (lo, hi) = enclosure(&self.terms().collect::<Vec<_>>(), 64);
        ((lo + hi) / BigRational::from_integer(2.into())).to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `"2/5"`, `"-1/2+1/2*sqrt5"`, `"3*sqrt5-1"` against a basis.
    pub fn parse(input: &str, basis: &Arc<ScalarBasis>) -> Result<Scalar, ScalarError> {
        let err = |reason: &str| ScalarError::Parse { input: input.to_string(), reason: reason.into() };
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(err("empty"));
        }
        let mut coeffs = vec![BigRational::zero(); basis.dim()];
        let mut terms = Vec::new();
        let mut start = 0;
        for (i, ch) in s.char_indices() {
            if (ch == '+' || ch == '-') && i > start {
                terms.push(&s[start..i]);
                start = i;
            }
        }
        terms.push(&s[start..]);
        for term in terms {
            let (negative, body) = match term.as_bytes()[0] {
                b'+' => (false, &term[1..]),
                b'-' => (true, &term[1..]),
                _ => (false, term),
            };
            if body.is_empty() {
                return Err(err("dangling sign"));
            }
            let (coef, tag) = match body.split_once('*') {
                Some((c, t)) => (parse_rational(c).map_err(|e| err(&e))?, t),
                None if body.starts_with("sqrt") => (BigRational::one(), body),
                None => (parse_rational(body).map_err(|e| err(&e))?, "1"),
            };
            let gen = Generator::parse(tag)?;
            let idx = basis
                .generators
                .iter()
                .position(|g| *g == gen)
                .ok_or_else(|| err(&format!("generator {tag} not in basis")))?;
            let coef = if negative { -coef } else { coef };
            coeffs[idx] += coef;
        }
        Ok(Scalar { basis: basis.clone(), coeffs })
    }
}

fn rational_sign(r: &BigRational) -> i8 {
    if r.is_positive() {
        1
    } else if r.is_negative() {
        -1
    } else {
        0
    }
}

fn cached_enclosure(g: &Generator, bits: u32) -> (BigRational, BigRational) {
    thread_local! {
        static CACHE: std::cell::RefCell<std::collections::HashMap<(Generator, u32), (BigRational, BigRational)>> =
            Default::default();
    }
    CACHE.with(|c| c.borrow_mut().entry((g.clone(), bits)).or_insert_with(|| g.enclose(bits)).clone())
}

fn enclosure(terms: &[(&Generator, &BigRational)], bits: u32) -> (BigRational, BigRational) {
    let mut lo = BigRational::zero();
    let mut hi = BigRational::zero();
    for (g, c) in terms {
        let (glo, ghi) = cached_enclosure(g, bits);
        if c.is_negative() {
            lo += *c * &ghi;
            hi += *c * &glo;
        } else {
            lo += *c * &glo;
            hi += *c * &ghi;
        }
    }
    (lo, hi)
}

/// Formats a rational as `"num/den"`, always with an explicit denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"num/den"` or a bare integer.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| format!("bad numerator in {s:?}"))?;
    let d: BigInt = d.parse().map_err(|_| format!("bad denominator in {s:?}"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(n, d))
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.terms().eq(other.terms())
    }
}

impl Eq for Scalar {}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for (g, c) in self.terms() {
            g.hash(state);
            c.hash(state);
        }
    }
}

/// `None` only when the precision budget cannot separate the two values.
impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.compare(other).ok()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({self})")
    }
}

impl fmt::Display for Scalar {
    /// Canonical exact form: `"n/d"` for rationals, `"n/d+n/d*sqrt5"` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (g, c) in self.terms() {
            let body = match g {
                Generator::One => format_rational(&c.abs()),
                other => format!("{}*{}", format_rational(&c.abs()), other.tag()),
            };
            let sign = if c.is_negative() { "-" } else if first { "" } else { "+" };
            write!(f, "{sign}{body}")?;
            first = false;
        }
        if first {
            write!(f, "0/1")?;
        }
        Ok(())
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }
}

// Operator impls panic on incompatible bases; use `try_add`/`try_sub` to handle that case.
macro_rules! binop {
    ($tr:ident, $method:ident, $try:ident) => {
        impl $tr<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                self.$try(rhs).expect("scalar arithmetic across incompatible bases")
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                (&self).$method(rhs)
            }
        }
        impl $tr<Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        *self = &*self + rhs;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        *self = &*self - rhs;
    }
}

impl Mul<&BigRational> for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &BigRational) -> Scalar {
        self.scale(rhs)
    }
}

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |acc, x| acc + x)
    }
}

#[derive(Serialize, Deserialize)]
struct ScalarJson {
    basis: Vec<String>,
    coeffs: Vec<String>,
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ScalarJson {
            basis: self.basis.tags(),
            coeffs: self.coeffs.iter().map(format_rational).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = ScalarJson::deserialize(deserializer)?;
        let basis = ScalarBasis::from_tags(&raw.basis).map_err(D::Error::custom)?;
        let coeffs = raw
            .coeffs
            .iter()
            .map(|c| parse_rational(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        let basis = if basis == *ScalarBasis::rational() {
            ScalarBasis::rational()
        } else if basis == *ScalarBasis::golden() {
            ScalarBasis::golden()
        } else {
            Arc::new(basis)
        };
        Scalar::new(basis, coeffs).map_err(D::Error::custom)
    }
}
