//! Heisenberg mode calculus in an orthogonal basis of `h`.
//!
//! The field of a Fock state is compiled into a normally ordered sum of mode
//! words and applied to packed monomials with the lattice momentum held fixed.
//! In an orthogonal basis `ω` is diagonal, which keeps the Virasoro checks small.
//! Arithmetic runs on checked machine rationals first and is redone over big
//! rationals when a value overflows.

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, One, ToPrimitive, Zero};

use super::{LatticeError, LatticeState};
use crate::exact_arith::{int, Cyclotomic, Rational};
use crate::root_system::{LatticeVec, RootSystem};

/// Up to 16 factors `(depth, colour)` packed as `depth << 4 | colour`, sorted, zero-terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PackedMono([u8; 16]);

impl PackedMono {
    fn len(&self) -> usize {
        self.0.iter().position(|&b| b == 0).unwrap_or(16)
    }

    pub fn factors(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.0.iter().take_while(|&&b| b != 0).map(|&b| (b >> 4, b & 15))
    }

    pub fn weight(&self) -> i64 {
        self.factors().map(|(d, _)| d as i64).sum()
    }

    fn remove(&self, pos: usize) -> PackedMono {
        let mut out = self.0;
        out.copy_within(pos + 1.., pos);
        out[15] = 0;
        PackedMono(out)
    }

    fn insert(&self, depth: i64, colour: usize) -> Result<PackedMono, LatticeError> {
        let n = self.len();
        if n == 16 || depth > 15 || colour > 15 {
            return Err(LatticeError::TruncationExceeded { weight: self.weight() + depth, bound: 15 });
        }
        let b = ((depth as u8) << 4) | colour as u8;
        let mut out = self.0;
        let pos = out[..n].iter().position(|&x| x > b).unwrap_or(n);
        out.copy_within(pos..n, pos + 1);
        out[pos] = b;
        Ok(PackedMono(out))
    }

    pub fn from_factors(f: &[(u8, u8)]) -> Result<PackedMono, LatticeError> {
        let mut m = PackedMono::default();
        for &(d, c) in f {
            m = m.insert(d as i64, c as usize)?;
        }
        Ok(m)
    }
}

/// Coefficient ring for the mode calculus.
pub trait ModeScalar: Clone + PartialEq + Zero + One + Send + Sync {
    fn from_rational(q: &Rational) -> Option<Self>;
    fn from_i64(n: i64) -> Self;
    fn mul_c(&self, other: &Self) -> Option<Self>;
    fn add_c(&self, other: &Self) -> Option<Self>;
}

impl ModeScalar for Rational {
    fn from_rational(q: &Rational) -> Option<Self> {
        Some(q.clone())
    }
    fn from_i64(n: i64) -> Self {
        int(n)
    }
    fn mul_c(&self, other: &Self) -> Option<Self> {
        Some(self * other)
    }
    fn add_c(&self, other: &Self) -> Option<Self> {
        Some(self + other)
    }
}

/// Machine rational; every operation is overflow checked.
pub type SmallRational = Ratio<i64>;

impl ModeScalar for SmallRational {
    fn from_rational(q: &Rational) -> Option<Self> {
        Some(Ratio::new(q.numer().to_i64()?, q.denom().to_i64()?))
    }
    fn from_i64(n: i64) -> Self {
        Ratio::from_integer(n)
    }
    fn mul_c(&self, other: &Self) -> Option<Self> {
        self.checked_mul(other)
    }
    fn add_c(&self, other: &Self) -> Option<Self> {
        self.checked_add(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeError {
    Lattice(LatticeError),
    Overflow,
}

impl From<LatticeError> for ModeError {
    fn from(e: LatticeError) -> Self {
        ModeError::Lattice(e)
    }
}

/// A state of one lattice sector: sorted monomials, no zero coefficients.
pub type ModeState<S> = Vec<(PackedMono, S)>;

/// Sorts and merges an unsorted list of contributions.
pub fn normalize<S: ModeScalar>(mut v: Vec<(PackedMono, S)>) -> Result<ModeState<S>, ModeError> {
    v.sort_unstable_by_key(|x| x.0);
    let mut out: ModeState<S> = Vec::with_capacity(v.len());
    for (m, c) in v {
        match out.last_mut() {
            Some((lm, lc)) if *lm == m => {
                *lc = lc.add_c(&c).ok_or(ModeError::Overflow)?;
            }
            _ => {
                if let Some((_, lc)) = out.last() {
                    if lc.is_zero() {
                        out.pop();
                    }
                }
                out.push((m, c));
            }
        }
    }
    if let Some((_, lc)) = out.last() {
        if lc.is_zero() {
            out.pop();
        }
    }
    Ok(out)
}

/// `ca·a + cb·b`.
pub fn combine<S: ModeScalar>(a: &ModeState<S>, ca: &S, b: &ModeState<S>, cb: &S) -> Result<ModeState<S>, ModeError> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    for (m, c) in a {
        v.push((*m, c.mul_c(ca).ok_or(ModeError::Overflow)?));
    }
    if !cb.is_zero() {
        for (m, c) in b {
            v.push((*m, c.mul_c(cb).ok_or(ModeError::Overflow)?));
        }
    }
    normalize(v)
}

pub fn single<S: ModeScalar>(m: PackedMono) -> ModeState<S> {
    vec![(m, S::one())]
}

/// Gram-Schmidt basis `u_j` of `h` with `(u_i|u_j) = d_i δ_ij`.
#[derive(Debug, Clone)]
pub struct OrthogonalBasis {
    /// `u_j` in simple-root coordinates.
    pub vectors: Vec<Vec<Rational>>,
    pub norms: Vec<Rational>,
    /// Row `i` gives `α_i` in the `u` basis.
    pub simple_in_u: Vec<Vec<Rational>>,
}

impl OrthogonalBasis {
    pub fn new(rs: &RootSystem) -> Self {
        let n = rs.rank;
        let mut vectors: Vec<Vec<Rational>> = Vec::with_capacity(n);
        let mut norms: Vec<Rational> = Vec::with_capacity(n);
        let mut simple_in_u = vec![vec![Rational::zero(); n]; n];
        for j in 0..n {
            let aj = rs.simple_root(j);
            let mut u: Vec<Rational> = aj.iter().map(|&x| int(x)).collect();
            for l in 0..j {
                let mu = rs.pairing_rational(&aj, &vectors[l]) / &norms[l];
                for (x, y) in u.iter_mut().zip(&vectors[l]) {
                    *x -= &mu * y;
                }
                simple_in_u[j][l] = mu;
            }
            simple_in_u[j][j] = Rational::one();
            let d = pairing_rr(rs, &u, &u);
            vectors.push(u);
            norms.push(d);
        }
        OrthogonalBasis { vectors, norms, simple_in_u }
    }

    /// `(u_j|γ)` for every `j`.
    pub fn momenta(&self, rs: &RootSystem, gamma: &[i64]) -> Vec<Rational> {
        self.vectors.iter().map(|u| rs.pairing_rational(gamma, u)).collect()
    }

    /// Rewrites a rational Fock state from simple-root factors into `u` factors.
    pub fn fock_to_u(&self, s: &LatticeState) -> Result<ModeState<Rational>, LatticeError> {
        if !s.in_fock() {
            return Err(LatticeError::NotInFock);
        }
        let mut all = Vec::new();
        for (t, c) in s.terms() {
            let c = c.to_rational().ok_or(LatticeError::NotInFock)?;
            let mut partial = vec![(PackedMono::default(), c)];
            for f in t.mono.factors() {
                let mut next = Vec::new();
                for (m, x) in &partial {
                    for (j, coef) in self.simple_in_u[f.index as usize].iter().enumerate() {
                        if !coef.is_zero() {
                            next.push((m.insert(f.depth as i64, j)?, x * coef));
                        }
                    }
                }
                partial = next;
            }
            all.extend(partial);
        }
        Ok(normalize(all).expect("big rationals do not overflow"))
    }
}

fn pairing_rr(rs: &RootSystem, a: &[Rational], b: &[Rational]) -> Rational {
    let mut s = Rational::zero();
    for i in 0..rs.rank {
        if a[i].is_zero() {
            continue;
        }
        for j in 0..rs.rank {
            let g = rs.cartan[i][j];
            if g != 0 && !b[j].is_zero() {
                s += &a[i] * &b[j] * int(g);
            }
        }
    }
    s
}

/// `C(n, r)` for integer `n`, small values.
fn binom_small(n: i64, r: u32) -> i64 {
    let mut c: i128 = 1;
    for i in 0..r as i128 {
        c = c * (n as i128 - i) / (i + 1);
    }
    c as i64
}

/// The modes of the field of a Fock state `a`, written in the `u` basis.
#[derive(Debug, Clone)]
pub struct FieldModes<S> {
    words: Vec<(S, Vec<(u8, u8)>)>,
    norms: Vec<S>,
}

impl<S: ModeScalar> FieldModes<S> {
    pub fn new(a: &ModeState<Rational>, basis: &OrthogonalBasis) -> Option<Self> {
        let mut words = Vec::with_capacity(a.len());
        for (m, c) in a {
            words.push((S::from_rational(c)?, m.factors().collect()));
        }
        let norms = basis.norms.iter().map(S::from_rational).collect::<Option<Vec<S>>>()?;
        Some(FieldModes { words, norms })
    }

    /// `a_{(n)} x` for `x` in the sector with momenta `p`.
    pub fn apply(&self, n: i64, x: &ModeState<S>, p: &[S]) -> Result<ModeState<S>, ModeError> {
        let mut out = Vec::new();
        for (mono, cx) in x {
            for (ca, word) in &self.words {
                let total: i64 = word.iter().map(|(d, _)| *d as i64).sum();
                // Σ m_l = n + 1 - Σ n_l
                let target = n + 1 - total;
                let coeff = cx.mul_c(ca).ok_or(ModeError::Overflow)?;
                for mask in 0u32..(1u32 << word.len()) {
                    self.apply_word(word, mask, target, *mono, &coeff, p, &mut out)?;
                }
            }
        }
        normalize(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_word(
        &self,
        word: &[(u8, u8)],
        mask: u32,
        target: i64,
        mono: PackedMono,
        coeff: &S,
        p: &[S],
        out: &mut Vec<(PackedMono, S)>,
    ) -> Result<(), ModeError> {
        // annihilation part: factors outside the mask take modes m >= 0
        let mut pieces: Vec<(PackedMono, S, i64)> = vec![(mono, coeff.clone(), 0)];
        for (l, &(depth, colour)) in word.iter().enumerate() {
            if mask & (1 << l) != 0 {
                continue;
            }
            let r = depth as u32 - 1;
            let c = colour as usize;
            let mut next = Vec::new();
            for (m0, x, used) in &pieces {
                if !p[c].is_zero() {
                    let b = S::from_i64(binom_small(-1, r));
                    let v = x.mul_c(&p[c]).and_then(|v| v.mul_c(&b)).ok_or(ModeError::Overflow)?;
                    next.push((*m0, v, *used));
                }
                for (pos, (d, col)) in m0.factors().enumerate() {
                    if col as usize != c {
                        continue;
                    }
                    let m = d as i64;
                    let b = S::from_i64(m * binom_small(-m - 1, r));
                    let v = x.mul_c(&self.norms[c]).and_then(|v| v.mul_c(&b)).ok_or(ModeError::Overflow)?;
                    next.push((m0.remove(pos), v, used + m));
                }
            }
            pieces = next;
            if pieces.is_empty() {
                return Ok(());
            }
        }
        let creators: Vec<(u8, u8)> =
            word.iter().enumerate().filter(|(l, _)| mask & (1 << l) != 0).map(|(_, f)| *f).collect();
        for (m0, x, used) in pieces {
            distribute(&creators, target - used, m0, x, out)?;
        }
        Ok(())
    }
}

/// Creation modes `m_l <= -1` with `Σ m_l = rest`, coefficient `∏ C(-m_l-1, r_l)`.
fn distribute<S: ModeScalar>(
    creators: &[(u8, u8)],
    rest: i64,
    mono: PackedMono,
    x: S,
    out: &mut Vec<(PackedMono, S)>,
) -> Result<(), ModeError> {
    match creators.split_first() {
        None => {
            if rest == 0 {
                out.push((mono, x));
            }
            Ok(())
        }
        Some((&(depth, colour), tail)) => {
            let max_j = -rest - tail.len() as i64;
            let r = depth as u32 - 1;
            for j in 1..=max_j {
                let b = binom_small(j - 1, r);
                if b == 0 {
                    continue;
                }
                let m1 = mono.insert(j, colour as usize)?;
                let v = x.mul_c(&S::from_i64(b)).ok_or(ModeError::Overflow)?;
                distribute(tail, rest + j, m1, v, out)?;
            }
            Ok(())
        }
    }
}

/// Converts a mode state in sector `γ` back into simple-root factors.
pub fn u_to_state(s: &ModeState<Rational>, basis: &OrthogonalBasis, gamma: &LatticeVec) -> LatticeState {
    let mut out = LatticeState::zero();
    for (m, c) in s {
        let mut partial =
            LatticeState::basis(Default::default(), gamma.clone()).scale(&Cyclotomic::from_rational(c.clone()));
        for (d, col) in m.factors() {
            let v: Vec<Cyclotomic> =
                basis.vectors[col as usize].iter().map(|x| Cyclotomic::from_rational(x.clone())).collect();
            partial = super::heis_mode(&v, -(d as i64), &partial, None);
        }
        out.add_scaled(&partial, &Cyclotomic::one());
    }
    out
}

/// Packed monomials over `rank` colours of weight at most `max_weight`.
pub fn packed_monomials(rank: usize, max_weight: i64) -> Vec<PackedMono> {
    super::fock_monomials(rank, max_weight)
        .into_iter()
        .map(|m| {
            let f: Vec<(u8, u8)> = m.factors().iter().map(|f| (f.depth as u8, f.index as u8)).collect();
            PackedMono::from_factors(&f).expect("small monomial")
        })
        .collect()
}

/// Failure witness of the Virasoro check, in the orthogonal basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeFailure {
    pub lattice: LatticeVec,
    pub monomial: PackedMono,
    pub m: i64,
    pub n: i64,
}

/// Runs `[L_m, L_n] x` against `(m-n) L_{m+n} x + δ_{m,-n} (m³-m)/12 · c · x` on one basis element.
pub fn virasoro_on<S: ModeScalar>(
    field: &FieldModes<S>,
    x: PackedMono,
    p: &[S],
    mode_bound: i64,
    central_charge: &Rational,
) -> Result<Vec<(i64, i64)>, ModeError> {
    let b = mode_bound;
    let xs = single::<S>(x);
    let mut l_of = Vec::with_capacity((4 * b + 1) as usize);
    for j in -2 * b..=2 * b {
        l_of.push(field.apply(j + 1, &xs, p)?);
    }
    let idx = |j: i64| (j + 2 * b) as usize;
    // table[a][c] = L_a L_c x
    let width = (2 * b + 1) as usize;
    let mut table: Vec<ModeState<S>> = Vec::with_capacity(width * width);
    for a in -b..=b {
        for c in -b..=b {
            table.push(field.apply(a + 1, &l_of[idx(c)], p)?);
        }
    }
    let t = |a: i64, c: i64| &table[(a + b) as usize * width + (c + b) as usize];
    let minus_one = S::from_i64(-1);
    let mut fails = Vec::new();
    for m in -b..=b {
        for n in -b..=b {
            let lhs = combine(t(m, n), &S::one(), t(n, m), &minus_one)?;
            let cc = if m == -n { int(m * m * m - m) / int(12) * central_charge } else { Rational::zero() };
            let cc = S::from_rational(&cc).ok_or(ModeError::Overflow)?;
            let rhs = combine(&l_of[idx(m + n)], &S::from_i64(m - n), &xs, &cc)?;
            if lhs != rhs {
                fails.push((m, n));
            }
        }
    }
    Ok(fails)
}
