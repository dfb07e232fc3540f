//! Scalar abstraction over the arithmetic the kernel oracle runs on.
//!
//! The default backend is `f64`. The `high` backend carries a 192-bit
//! significand (about 57 decimal digits) through every accumulation, for
//! ladders deep enough that double round-off starts to matter.

use rug::ops::CompleteRound;
use rug::Float;

/// Significand width of the high-precision backend, in bits.
pub const HIGH_PREC_BITS: u32 = 192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    High,
}

pub trait Real: Clone + PartialOrd + std::fmt::Debug + Send + Sync {
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn recip(&self) -> Self;
    fn is_finite(&self) -> bool;
    fn is_nan(&self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn neg_infinity() -> Self {
        Self::from_f64(f64::NEG_INFINITY)
    }
    fn is_neg_infinity(&self) -> bool {
        !self.is_nan() && !self.is_finite() && *self < Self::zero()
    }
    fn add_f64(&self, k: f64) -> Self {
        self.add(&Self::from_f64(k))
    }
    fn mul_f64(&self, k: f64) -> Self {
        self.mul(&Self::from_f64(k))
    }
    fn max_val(&self, o: &Self) -> Self {
        if self >= o {
            self.clone()
        } else {
            o.clone()
        }
    }
}

impl Real for f64 {
    const NAME: &'static str = "double";

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn recip(&self) -> Self {
        f64::recip(*self)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn is_nan(&self) -> bool {
        f64::is_nan(*self)
    }
}

/// 192-bit MPFR float.
#[derive(Debug, Clone)]
pub struct HighReal(pub Float);

impl PartialEq for HighReal {
    fn eq(&self, o: &Self) -> bool {
        self.0 == o.0
    }
}

impl PartialOrd for HighReal {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        self.0.partial_cmp(&o.0)
    }
}

impl Real for HighReal {
    const NAME: &'static str = "high";

    fn from_f64(x: f64) -> Self {
        HighReal(Float::with_val(HIGH_PREC_BITS, x))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn add(&self, o: &Self) -> Self {
        HighReal((&self.0 + &o.0).complete(HIGH_PREC_BITS))
    }
    fn sub(&self, o: &Self) -> Self {
        HighReal((&self.0 - &o.0).complete(HIGH_PREC_BITS))
    }
    fn mul(&self, o: &Self) -> Self {
        HighReal((&self.0 * &o.0).complete(HIGH_PREC_BITS))
    }
    fn div(&self, o: &Self) -> Self {
        HighReal((&self.0 / &o.0).complete(HIGH_PREC_BITS))
    }
    fn neg(&self) -> Self {
        HighReal((-&self.0).complete(HIGH_PREC_BITS))
    }
    fn exp(&self) -> Self {
        HighReal(self.0.clone().exp())
    }
    fn ln(&self) -> Self {
        HighReal(self.0.clone().ln())
    }
    fn sqrt(&self) -> Self {
        HighReal(self.0.clone().sqrt())
    }
    fn abs(&self) -> Self {
        HighReal(self.0.clone().abs())
    }
    fn recip(&self) -> Self {
        HighReal(self.0.clone().recip())
    }
    fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
    fn is_nan(&self) -> bool {
        self.0.is_nan()
    }
}

/// log(sum exp(v_i)) over a slice of log-values; -inf for an empty or
/// all-negligible slice.
pub fn lse<R: Real>(vals: &[R]) -> R {
    let mut m = R::neg_infinity();
    for v in vals {
        if !v.is_nan() && *v > m {
            m = v.clone();
        }
    }
    if m.is_neg_infinity() || !m.is_finite() {
        return m;
    }
    let mut s = R::zero();
    for v in vals {
        if v.is_nan() {
            continue;
        }
        s = s.add(&v.sub(&m).exp());
    }
    m.add(&s.ln())
}

/// log(exp(a) + exp(b)).
pub fn lse2<R: Real>(a: &R, b: &R) -> R {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_neg_infinity() {
        return hi.clone();
    }
    hi.add(&lo.sub(hi).exp().add(&R::one()).ln())
}

/// log(exp(a) - exp(b)) for a >= b.
pub fn log_diff<R: Real>(a: &R, b: &R) -> R {
    if b.is_neg_infinity() {
        return a.clone();
    }
    if a == b {
        return R::neg_infinity();
    }
    let r = R::one().sub(&b.sub(a).exp());
    a.add(&r.ln())
}
