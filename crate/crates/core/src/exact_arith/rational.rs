//! Big rationals and the handful of combinatorial helpers built on them.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ArithError;

/// Arbitrary-precision rational, always in lowest terms with positive denominator.
pub type Rational = BigRational;

/// `n / d` as a rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// The integer `n` as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Generalized binomial `p (p-1) ... (p-j+1) / j!`.
pub fn gen_binomial(p: &Rational, j: u32) -> Rational {
    let mut acc = Rational::one();
    for i in 0..j {
        acc *= p - int(i as i64);
        acc /= int(i as i64 + 1);
    }
    acc
}

/// Rising factorial `x (x+1) ... (x+k-1)`, with `(x)_0 = 1`.
pub fn pochhammer(x: &Rational, k: u32) -> Rational {
    let mut acc = Rational::one();
    for i in 0..k {
        acc *= x + int(i as i64);
    }
    acc
}

/// `n!` as a rational.
pub fn factorial(n: u32) -> Rational {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    Rational::from_integer(acc)
}

/// Odd double factorial `(2k-1)!!` for `k >= 0`, with `(-1)!! = 1`.
pub fn odd_double_factorial(k: u32) -> Rational {
    let mut acc = BigInt::one();
    let mut i = 1u64;
    while i < 2 * k as u64 {
        acc *= BigInt::from(i);
        i += 2;
    }
    Rational::from_integer(acc)
}

/// Ordinary binomial `C(n, j)` for integer `n` (possibly negative).
pub fn binomial_int(n: i64, j: u32) -> Rational {
    gen_binomial(&int(n), j)
}

/// Returns the integer value of `q` if it is integral.
pub fn as_integer(q: &Rational) -> Option<i64> {
    if q.is_integer() {
        q.to_integer().to_i64()
    } else {
        None
    }
}

/// Integer power `q^e` for any sign of `e`.
pub fn pow_i(q: &Rational, e: i64) -> Result<Rational, ArithError> {
    if e < 0 {
        if q.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        Ok(num_traits::pow(q.recip(), (-e) as usize))
    } else {
        Ok(num_traits::pow(q.clone(), e as usize))
    }
}

/// Floor of a rational as an integer.
pub fn floor_i64(q: &Rational) -> i64 {
    let n = q.numer();
    let d = q.denom();
    n.div_floor(d).to_i64().expect("floor fits in i64")
}

/// Ceiling of a rational as an integer.
pub fn ceil_i64(q: &Rational) -> i64 {
    -floor_i64(&-q)
}

/// Sign of a rational: -1, 0 or 1.
pub fn signum(q: &Rational) -> i32 {
    if q.is_zero() {
        0
    } else if q.is_positive() {
        1
    } else {
        -1
    }
}

/// Serde codec for rationals as `[numerator, denominator]` decimal strings.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        [q.numer().to_string(), q.denom().to_string()].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let [n, den]: [String; 2] = Deserialize::deserialize(d)?;
        parse_pair(&n, &den).map_err(serde::de::Error::custom)
    }

    pub fn parse_pair(n: &str, den: &str) -> Result<Rational, String> {
        let n: BigInt = n.parse().map_err(|e| format!("bad numerator {n:?}: {e}"))?;
        let den: BigInt = den.parse().map_err(|e| format!("bad denominator {den:?}: {e}"))?;
        if den.is_zero() {
            return Err("zero denominator".into());
        }
        Ok(Rational::new(n, den))
    }
}

/// Serde codec for `Vec<Rational>`.
pub mod serde_rational_vec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "serde_rational")] Rational);

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Wrap> = v.iter().cloned().map(Wrap).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let w: Vec<Wrap> = Deserialize::deserialize(d)?;
        Ok(w.into_iter().map(|x| x.0).collect())
    }
}

/// Parses `"p/q"`, `"p"` or `"-p/q"`.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => serde_rational::parse_pair(n.trim(), d.trim()),
        None => serde_rational::parse_pair(s, "1"),
    }
}
