//! Elements of `Q(ζ_n)` stored in the power basis `1, ζ, …, ζ^{φ(n)-1}`.
//!
//! Every value is reduced modulo the cyclotomic polynomial `Φ_n`, so the
//! representation is canonical and zero testing is a coefficient check.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, OnceLock, RwLock};

use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::rational::{int, serde_rational_vec, Rational};
use super::ArithError;

const PRECOMPUTED_ORDERS: u32 = 60;

/// Reduction data for one order `n`.
#[derive(Debug)]
pub struct OrderData {
    pub order: u32,
    pub phi: usize,
    /// Coefficients of `Φ_n`, lowest degree first (monic).
    pub cyclotomic_poly: Vec<i64>,
    /// `x^k mod Φ_n` for `k = 0..n`.
    powers: Vec<Vec<i64>>,
}

fn poly_div_exact(num: &[i64], den: &[i64]) -> Vec<i64> {
    // den is monic integer
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let mut q = vec![0i64; num.len() - dd];
    for i in (0..q.len()).rev() {
        let c = rem[i + dd];
        q[i] = c;
        if c != 0 {
            for (j, dj) in den.iter().enumerate() {
                rem[i + j] -= c * dj;
            }
        }
    }
    debug_assert!(rem.iter().all(|&r| r == 0));
    q
}

fn cyclotomic_poly(n: u32, cache: &dyn Fn(u32) -> Vec<i64>) -> Vec<i64> {
    let mut p = vec![0i64; n as usize + 1];
    p[0] = -1;
    p[n as usize] = 1;
    for d in 1..n {
        if n.is_multiple_of(d) {
            p = poly_div_exact(&p, &cache(d));
        }
    }
    p
}

fn build_order(n: u32, poly: Vec<i64>) -> OrderData {
    let phi = poly.len() - 1;
    let mut powers = Vec::with_capacity(n as usize);
    let mut cur = vec![0i64; phi];
    cur[0] = 1;
    for _ in 0..n {
        powers.push(cur.clone());
        // multiply by x and reduce
        let top = cur[phi - 1];
        let mut next = vec![0i64; phi];
        next[1..phi].copy_from_slice(&cur[..(phi - 1)]);
        if top != 0 {
            for (j, next_j) in next.iter_mut().enumerate() {
                *next_j = next_j.checked_sub(top.checked_mul(poly[j]).expect("overflow")).expect("overflow");
            }
        }
        cur = next;
    }
    OrderData { order: n, phi, cyclotomic_poly: poly, powers }
}

fn small_table() -> &'static Vec<Arc<OrderData>> {
    static TABLE: OnceLock<Vec<Arc<OrderData>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut polys: Vec<Vec<i64>> = vec![vec![]];
        for n in 1..=PRECOMPUTED_ORDERS {
            let p = {
                let lookup = |d: u32| polys[d as usize].clone();
                cyclotomic_poly(n, &lookup)
            };
            polys.push(p);
        }
        let mut out = vec![Arc::new(build_order(1, vec![-1, 1]))];
        for n in 1..=PRECOMPUTED_ORDERS {
            out.push(Arc::new(build_order(n, polys[n as usize].clone())));
        }
        out
    })
}

fn large_table() -> &'static RwLock<HashMap<u32, Arc<OrderData>>> {
    static TABLE: OnceLock<RwLock<HashMap<u32, Arc<OrderData>>>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Reduction data for order `n`, computed once and cached.
pub fn order_data(n: u32) -> Arc<OrderData> {
    assert!(n >= 1, "cyclotomic order must be positive");
    if n <= PRECOMPUTED_ORDERS {
        return small_table()[n as usize].clone();
    }
    if let Some(d) = large_table().read().expect("poisoned").get(&n) {
        return d.clone();
    }
    let poly = {
        let lookup = |d: u32| order_data(d).cyclotomic_poly.clone();
        cyclotomic_poly(n, &lookup)
    };
    let data = Arc::new(build_order(n, poly));
    large_table().write().expect("poisoned").insert(n, data.clone());
    data
}

/// Euler totient, via the degree of `Φ_n`.
pub fn euler_phi(n: u32) -> usize {
    order_data(n).phi
}

/// An element of the cyclotomic field `Q(ζ_n)`, `ζ_n = e^{2πi/n}`.
#[derive(Clone, Serialize, Deserialize)]
pub struct Cyclotomic {
    order: u32,
    #[serde(with = "serde_rational_vec")]
    coeffs: Vec<Rational>,
}

impl Cyclotomic {
    /// Builds from power-basis coefficients of arbitrary length, reducing mod `Φ_n`.
    pub fn from_coeffs(order: u32, coeffs: Vec<Rational>) -> Self {
        let data = order_data(order);
        let mut out = vec![Rational::zero(); data.phi];
        for (k, c) in coeffs.into_iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let row = &data.powers[k % order as usize];
            for (j, r) in row.iter().enumerate() {
                if *r != 0 {
                    out[j] += &c * int(*r);
                }
            }
        }
        Cyclotomic { order, coeffs: out }
    }

    pub fn from_rational(q: Rational) -> Self {
        Cyclotomic { order: 1, coeffs: vec![q] }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(int(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// `ζ_n^k` for any integer `k`.
    pub fn zeta_pow(order: u32, k: i64) -> Self {
        let data = order_data(order);
        let idx = k.rem_euclid(order as i64) as usize;
        let coeffs = data.powers[idx].iter().map(|&c| int(c)).collect();
        Cyclotomic { order, coeffs }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.coeffs[0].is_one() && self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    /// True when the value lies in `Q`.
    pub fn is_rational(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    /// The rational value, if the element is rational.
    pub fn to_rational(&self) -> Option<Rational> {
        self.is_rational().then(|| self.coeffs[0].clone())
    }

    /// Maps `ζ_n ↦ ζ_m^{m/n}`.
    pub fn embed_order(&self, m: u32) -> Result<Self, ArithError> {
        if m == 0 || !m.is_multiple_of(self.order) {
            return Err(ArithError::NotDivisible { from: self.order, to: m });
        }
        if m == self.order {
            return Ok(self.clone());
        }
        if self.is_rational() {
            return Ok(Self::rational_in(m, self.coeffs[0].clone()));
        }
        let step = (m / self.order) as usize;
        let mut spread = vec![Rational::zero(); (self.coeffs.len() - 1) * step + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            spread[k * step] = c.clone();
        }
        Ok(Self::from_coeffs(m, spread))
    }

    fn rational_in(order: u32, q: Rational) -> Self {
        let phi = euler_phi(order);
        let mut coeffs = vec![Rational::zero(); phi];
        coeffs[0] = q;
        Cyclotomic { order, coeffs }
    }

    /// Rewrites the value in the smallest order `d | n` that contains it.
    pub fn minimal_order(&self) -> Self {
        if self.order == 1 {
            return self.clone();
        }
        if self.is_rational() {
            return Self::from_rational(self.coeffs[0].clone());
        }
        let mut divisors: Vec<u32> = (1..self.order).filter(|d| self.order.is_multiple_of(*d)).collect();
        divisors.sort_unstable();
        for d in divisors {
            if let Some(v) = self.try_descend(d) {
                return v;
            }
        }
        self.clone()
    }

    fn try_descend(&self, d: u32) -> Option<Self> {
        // Solve for coefficients in Q(ζ_d) by linear algebra on the images of ζ_d^j.
        let phi_d = euler_phi(d);
        let images: Vec<Cyclotomic> =
            (0..phi_d).map(|j| Self::zeta_pow(d, j as i64).embed_order(self.order).expect("divides")).collect();
        let rows = self.coeffs.len();
        let mut mat: Vec<Vec<Rational>> = (0..rows)
            .map(|r| {
                let mut row: Vec<Rational> = images.iter().map(|im| im.coeffs[r].clone()).collect();
                row.push(self.coeffs[r].clone());
                row
            })
            .collect();
        let sol = solve_consistent(&mut mat, phi_d)?;
        Some(Cyclotomic { order: d, coeffs: sol })
    }

    fn common(a: &Self, b: &Self) -> (Self, Self) {
        if a.order == b.order {
            return (a.clone(), b.clone());
        }
        let l = a.order.lcm(&b.order);
        (a.embed_order(l).expect("lcm"), b.embed_order(l).expect("lcm"))
    }

    fn add_ref(&self, other: &Self) -> Self {
        if self.order == other.order {
            let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
            return Cyclotomic { order: self.order, coeffs };
        }
        if other.order == 1 {
            let mut out = self.clone();
            out.coeffs[0] += &other.coeffs[0];
            return out;
        }
        if self.order == 1 {
            let mut out = other.clone();
            out.coeffs[0] += &self.coeffs[0];
            return out;
        }
        let (a, b) = Self::common(self, other);
        a.add_ref(&b)
    }

    fn mul_ref(&self, other: &Self) -> Self {
        if other.order == 1 {
            return self.scale(&other.coeffs[0]);
        }
        if self.order == 1 {
            return other.scale(&self.coeffs[0]);
        }
        if self.order != other.order {
            let (a, b) = Self::common(self, other);
            return a.mul_ref(&b);
        }
        let phi = self.coeffs.len();
        let mut prod = vec![Rational::zero(); 2 * phi - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    prod[i + j] += a * b;
                }
            }
        }
        Self::from_coeffs(self.order, prod)
    }

    /// Multiplies by a rational.
    pub fn scale(&self, q: &Rational) -> Self {
        if q.is_zero() {
            return Self::rational_in(self.order, Rational::zero());
        }
        Cyclotomic { order: self.order, coeffs: self.coeffs.iter().map(|c| c * q).collect() }
    }

    /// Multiplicative inverse via the extended Euclidean algorithm in `Q[x]`.
    pub fn inv(&self) -> Result<Self, ArithError> {
        if self.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        if self.order == 1 {
            return Ok(Self::from_rational(self.coeffs[0].recip()));
        }
        let data = order_data(self.order);
        let modulus: Vec<Rational> = data.cyclotomic_poly.iter().map(|&c| int(c)).collect();
        let u = poly_inverse_mod(&trim(self.coeffs.clone()), &modulus);
        Ok(Self::from_coeffs(self.order, u))
    }

    /// Integer power, negative exponents through [`Cyclotomic::inv`].
    pub fn pow(&self, e: i64) -> Result<Self, ArithError> {
        let base = if e < 0 { self.inv()? } else { self.clone() };
        let mut n = e.unsigned_abs();
        let mut acc = Self::rational_in(self.order, Rational::one());
        let mut b = base;
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &b;
            }
            b = &b * &b;
            n >>= 1;
        }
        Ok(acc)
    }

    /// Complex approximation for diagnostics only; never used in checks.
    pub fn approx_complex(&self) -> (f64, f64) {
        let n = self.order as f64;
        self.coeffs.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, c)| {
            let x = c.to_f64().unwrap_or(f64::NAN);
            let ang = 2.0 * std::f64::consts::PI * k as f64 / n;
            (re + x * ang.cos(), im + x * ang.sin())
        })
    }

    /// A square root of the rational `q`, in the smallest cyclotomic field containing one.
    pub fn sqrt_rational(q: &Rational) -> Self {
        if q.is_zero() {
            return Self::zero();
        }
        // sqrt(n/d) = sqrt(n d) / d
        let nd = q.numer() * q.denom();
        let neg = nd.is_negative();
        let mut m = nd.abs().to_u64().expect("radicand fits in u64");
        let mut square = 1u64;
        let mut free: Vec<u64> = Vec::new();
        let mut p = 2u64;
        while p * p <= m {
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            for _ in 0..e / 2 {
                square *= p;
            }
            if e % 2 == 1 {
                free.push(p);
            }
            p += 1;
        }
        if m > 1 {
            free.push(m);
        }
        let mut root = Self::from_rational(Rational::new(square.into(), q.denom().clone()));
        if neg {
            root = &root * &Self::zeta_pow(4, 1);
        }
        for p in free {
            root = &root * &sqrt_prime(p);
        }
        root.minimal_order()
    }
}

fn sqrt_prime(p: u64) -> Cyclotomic {
    if p == 2 {
        // ζ_8 + ζ_8^{-1}
        return &Cyclotomic::zeta_pow(8, 1) + &Cyclotomic::zeta_pow(8, -1);
    }
    let n = p as u32;
    let mut g = Cyclotomic::rational_in(n, Rational::zero());
    for a in 1..p {
        let leg = legendre(a, p);
        let term = Cyclotomic::zeta_pow(n, a as i64).scale(&int(leg));
        g = &g + &term;
    }
    if p % 4 == 1 {
        g
    } else {
        // g = i sqrt(p)
        -(&g * &Cyclotomic::zeta_pow(4, 1))
    }
}

fn legendre(a: u64, p: u64) -> i64 {
    let mut r = 1u64;
    let mut b = a % p;
    let mut e = (p - 1) / 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    if r == 1 {
        1
    } else {
        -1
    }
}

fn trim(mut v: Vec<Rational>) -> Vec<Rational> {
    while v.len() > 1 && v.last().is_some_and(|c| c.is_zero()) {
        v.pop();
    }
    v
}

fn poly_divrem(a: &[Rational], b: &[Rational]) -> (Vec<Rational>, Vec<Rational>) {
    let b = trim(b.to_vec());
    let mut r = trim(a.to_vec());
    let db = b.len() - 1;
    let lead = b[db].clone();
    if r.len() < b.len() {
        return (vec![Rational::zero()], r);
    }
    let mut q = vec![Rational::zero(); r.len() - db];
    while r.len() >= b.len() && !(r.len() == 1 && r[0].is_zero()) {
        let shift = r.len() - b.len();
        let c = &r[r.len() - 1] / &lead;
        for (j, bj) in b.iter().enumerate() {
            r[shift + j] -= &c * bj;
        }
        q[shift] = c;
        r.pop();
        if r.is_empty() {
            r.push(Rational::zero());
        }
        r = trim(r);
        if r.len() < b.len() {
            break;
        }
    }
    (q, r)
}

fn poly_mul(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_sub(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(Rational::zero);
            let y = b.get(i).cloned().unwrap_or_else(Rational::zero);
            x - y
        })
        .collect()
}

/// Inverse of `a` modulo the irreducible `m` by extended Euclid.
fn poly_inverse_mod(a: &[Rational], m: &[Rational]) -> Vec<Rational> {
    let (mut r0, mut r1) = (m.to_vec(), a.to_vec());
    let (mut t0, mut t1) = (vec![Rational::zero()], vec![Rational::one()]);
    while !(r1.len() == 1 && r1[0].is_zero()) {
        let (q, r) = poly_divrem(&r0, &r1);
        let t2 = trim(poly_sub(&t0, &poly_mul(&q, &t1)));
        r0 = std::mem::replace(&mut r1, r);
        t0 = std::mem::replace(&mut t1, t2);
    }
    // r0 is a nonzero constant since m is irreducible
    let c = r0[0].clone();
    t0.into_iter().map(|x| x / &c).collect()
}

/// Solves an augmented system assumed to have at most one solution; None if inconsistent.
fn solve_consistent(mat: &mut [Vec<Rational>], unknowns: usize) -> Option<Vec<Rational>> {
    let rows = mat.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..unknowns {
        let Some(p) = (r..rows).find(|&i| !mat[i][c].is_zero()) else { continue };
        mat.swap(r, p);
        let inv = mat[r][c].recip();
        for x in mat[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !mat[i][c].is_zero() {
                let f = mat[i][c].clone();
                let (src, dst) = if i < r {
                    let (lo, hi) = mat.split_at_mut(r);
                    (&hi[0], &mut lo[i])
                } else {
                    let (lo, hi) = mat.split_at_mut(i);
                    (&lo[r], &mut hi[0])
                };
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d -= &f * s;
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
    }
    if mat[r..].iter().any(|row| !row[unknowns].is_zero()) {
        return None;
    }
    let mut sol = vec![Rational::zero(); unknowns];
    for (i, &c) in pivot_cols.iter().enumerate() {
        sol[c] = mat[i][unknowns].clone();
    }
    Some(sol)
}

impl PartialEq for Cyclotomic {
    fn eq(&self, other: &Self) -> bool {
        if self.order == other.order {
            return self.coeffs == other.coeffs;
        }
        let (a, b) = Self::common(self, other);
        a.coeffs == b.coeffs
    }
}

impl Eq for Cyclotomic {}

impl fmt::Debug for Cyclotomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Cyclotomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return write!(f, "{}", self.coeffs[0]);
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})z{}", self.order)?,
                _ => write!(f, "({c})z{}^{k}", self.order)?,
            }
        }
        Ok(())
    }
}

impl From<Rational> for Cyclotomic {
    fn from(q: Rational) -> Self {
        Self::from_rational(q)
    }
}

impl From<i64> for Cyclotomic {
    fn from(n: i64) -> Self {
        Self::from_int(n)
    }
}

impl Add for &Cyclotomic {
    type Output = Cyclotomic;
    fn add(self, rhs: &Cyclotomic) -> Cyclotomic {
        self.add_ref(rhs)
    }
}

impl Add for Cyclotomic {
    type Output = Cyclotomic;
    fn add(self, rhs: Cyclotomic) -> Cyclotomic {
        self.add_ref(&rhs)
    }
}

impl AddAssign<&Cyclotomic> for Cyclotomic {
    fn add_assign(&mut self, rhs: &Cyclotomic) {
        if self.order == rhs.order {
            for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
                *a += b;
            }
        } else {
            *self = self.add_ref(rhs);
        }
    }
}

impl Sub for &Cyclotomic {
    type Output = Cyclotomic;
    fn sub(self, rhs: &Cyclotomic) -> Cyclotomic {
        self.add_ref(&-rhs)
    }
}

impl Sub for Cyclotomic {
    type Output = Cyclotomic;
    fn sub(self, rhs: Cyclotomic) -> Cyclotomic {
        self.add_ref(&-rhs)
    }
}

impl SubAssign<&Cyclotomic> for Cyclotomic {
    fn sub_assign(&mut self, rhs: &Cyclotomic) {
        *self += &-rhs;
    }
}

impl Mul for &Cyclotomic {
    type Output = Cyclotomic;
    fn mul(self, rhs: &Cyclotomic) -> Cyclotomic {
        self.mul_ref(rhs)
    }
}

impl Mul for Cyclotomic {
    type Output = Cyclotomic;
    fn mul(self, rhs: Cyclotomic) -> Cyclotomic {
        self.mul_ref(&rhs)
    }
}

impl MulAssign<&Cyclotomic> for Cyclotomic {
    fn mul_assign(&mut self, rhs: &Cyclotomic) {
        *self = self.mul_ref(rhs);
    }
}

impl Neg for &Cyclotomic {
    type Output = Cyclotomic;
    fn neg(self) -> Cyclotomic {
        Cyclotomic { order: self.order, coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }
}

impl Neg for Cyclotomic {
    type Output = Cyclotomic;
    fn neg(self) -> Cyclotomic {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::rational::rat;

    #[test]
    fn cyclotomic_polys_small() {
        assert_eq!(order_data(1).cyclotomic_poly, vec![-1, 1]);
        assert_eq!(order_data(2).cyclotomic_poly, vec![1, 1]);
        assert_eq!(order_data(4).cyclotomic_poly, vec![1, 0, 1]);
        assert_eq!(order_data(6).cyclotomic_poly, vec![1, -1, 1]);
        assert_eq!(order_data(12).cyclotomic_poly, vec![1, 0, -1, 0, 1]);
        assert_eq!(euler_phi(30), 8);
        assert_eq!(euler_phi(60), 16);
        assert_eq!(euler_phi(105), 48);
    }

    #[test]
    fn sqrt_rational_squares_back() {
        for (n, d) in [(2, 1), (-1, 1), (3, 1), (-3, 1), (5, 1), (-5, 4), (1, 2), (6, 7), (-7, 3)] {
            let q = rat(n, d);
            let r = Cyclotomic::sqrt_rational(&q);
            assert_eq!(&r * &r, Cyclotomic::from_rational(q), "sqrt({n}/{d})");
        }
        assert_eq!(Cyclotomic::sqrt_rational(&rat(-3, 1)).order(), 3);
        assert_eq!(Cyclotomic::sqrt_rational(&rat(2, 1)).order(), 8);
    }

    #[test]
    fn minimal_order_descends() {
        let z = Cyclotomic::zeta_pow(12, 4);
        let m = z.minimal_order();
        assert_eq!(m.order(), 3);
        assert_eq!(m, Cyclotomic::zeta_pow(3, 1));
    }
}
