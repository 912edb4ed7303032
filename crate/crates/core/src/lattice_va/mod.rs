//! The lattice vertex algebra `V_Q` of an ADE root lattice and its Heisenberg
//! subalgebra `F`: states, modes, n-th products, screening operators and the
//! W-algebra elements built from them.
//!
//! States are stored over the simple-root basis of `h`. An n-th product
//! `a_{(n)} b` is read off from the normally ordered field of `a`, with the
//! annihilation part applied to `b` first and the creation part multiplied on.

pub mod modes;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use modes::ModeFailure;
use modes::{packed_monomials, FieldModes, ModeError, ModeScalar, OrthogonalBasis, PackedMono, SmallRational};

use crate::exact_arith::{binomial_int, factorial, int, Cyclotomic, Rational};
use crate::parallel::{maybe_parallel_all, maybe_parallel_map};
use crate::root_system::{rat_to_cyc, to_cyc, AdeType, LatticeVec, RootSystem};

pub const DEFAULT_TRUNCATION_WEIGHT: i64 = 12;
pub const TRUNCATION_ENV: &str = "WALG_TRUNCATION_WEIGHT";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("weight {weight} exceeds the truncation bound {bound}")]
    TruncationExceeded { weight: i64, bound: i64 },
    #[error("vector {0:?} is not a root")]
    NotARoot(LatticeVec),
    #[error("state has a lattice component outside the Fock space")]
    NotInFock,
    #[error("λ0 pairs to {0} with some root; only 0 and ±1 are allowed")]
    InadmissibleLambda0(Rational),
    #[error("{0} is only defined for type D")]
    WrongType(&'static str),
    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
}

/// One creation operator `(α_index)_{(-depth)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub depth: u16,
    pub index: u16,
}

/// A normally ordered product of Heisenberg creation operators, sorted by `(depth, index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockMonomial(Vec<Factor>);

impl FockMonomial {
    pub fn new(mut factors: Vec<Factor>) -> Self {
        factors.sort_unstable();
        FockMonomial(factors)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.0
    }

    pub fn weight(&self) -> i64 {
        self.0.iter().map(|f| f.depth as i64).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn times(&self, other: &FockMonomial) -> FockMonomial {
        if other.0.is_empty() {
            return self.clone();
        }
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        FockMonomial::new(v)
    }

    fn without(&self, pos: usize) -> FockMonomial {
        let mut v = self.0.clone();
        v.remove(pos);
        FockMonomial(v)
    }
}

/// A basis element `monomial ⊗ e^γ`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub mono: FockMonomial,
    pub lattice: LatticeVec,
}

/// A finite linear combination of basis elements of `V_Q`.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct LatticeState {
    terms: BTreeMap<Term, Cyclotomic>,
}

impl fmt::Debug for LatticeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (t, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for fa in t.mono.factors() {
                write!(f, " a{}({})", fa.index + 1, -(fa.depth as i64))?;
            }
            if t.lattice.iter().any(|&x| x != 0) {
                write!(f, " e^{:?}", t.lattice)?;
            }
        }
        Ok(())
    }
}

impl LatticeState {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The vacuum `|0⟩ ⊗ e^0`.
    pub fn vacuum(rank: usize) -> Self {
        Self::basis(FockMonomial::default(), vec![0; rank])
    }

    pub fn basis(mono: FockMonomial, lattice: LatticeVec) -> Self {
        let mut s = Self::zero();
        s.add_term(Term { mono, lattice }, Cyclotomic::one());
        s
    }

    /// `e^γ`.
    pub fn exponential(gamma: &[i64]) -> Self {
        Self::basis(FockMonomial::default(), gamma.to_vec())
    }

    /// `α_{(-1)}|0⟩` for an h-vector with cyclotomic coordinates.
    pub fn heisenberg(alpha: &[Cyclotomic]) -> Self {
        heis_mode(alpha, -1, &Self::vacuum(alpha.len()), None)
    }

    pub fn add_term(&mut self, t: Term, c: Cyclotomic) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(t) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += &c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &LatticeState, c: &Cyclotomic) {
        if c.is_zero() {
            return;
        }
        for (t, x) in &other.terms {
            self.add_term(t.clone(), x * c);
        }
    }

    pub fn scale(&self, c: &Cyclotomic) -> LatticeState {
        let mut out = LatticeState::zero();
        out.add_scaled(self, c);
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Term, &Cyclotomic)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, t: &Term) -> Cyclotomic {
        self.terms.get(t).cloned().unwrap_or_else(Cyclotomic::zero)
    }

    /// True when every term lies in the Fock space `F` (lattice point zero).
    pub fn in_fock(&self) -> bool {
        self.terms.keys().all(|t| t.lattice.iter().all(|&x| x == 0))
    }

    pub fn max_weight(&self, rs: &RootSystem) -> Option<i64> {
        self.terms.keys().map(|t| term_weight(rs, t)).max()
    }

    pub fn min_weight(&self, rs: &RootSystem) -> Option<i64> {
        self.terms.keys().map(|t| term_weight(rs, t)).min()
    }

    pub fn to_json(&self) -> StateJson {
        StateJson(
            self.terms
                .iter()
                .map(|(t, c)| TermJson {
                    monomial: t.mono.factors().iter().map(|f| [f.index as u32, f.depth as u32]).collect(),
                    lattice: t.lattice.clone(),
                    coeff: c.clone(),
                })
                .collect(),
        )
    }

    pub fn from_json(j: &StateJson) -> Self {
        let mut s = Self::zero();
        for t in &j.0 {
            let mono = FockMonomial::new(
                t.monomial.iter().map(|[i, n]| Factor { depth: *n as u16, index: *i as u16 }).collect(),
            );
            s.add_term(Term { mono, lattice: t.lattice.clone() }, t.coeff.clone());
        }
        s
    }
}

impl std::ops::Add for &LatticeState {
    type Output = LatticeState;
    fn add(self, rhs: &LatticeState) -> LatticeState {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::one());
        out
    }
}

impl std::ops::Sub for &LatticeState {
    type Output = LatticeState;
    fn sub(self, rhs: &LatticeState) -> LatticeState {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::from_int(-1));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub monomial: Vec<[u32; 2]>,
    pub lattice: Vec<i64>,
    pub coeff: Cyclotomic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateJson(pub Vec<TermJson>);

/// `L_0`-weight `Σ depth + |γ|²/2` of a basis element.
pub fn term_weight(rs: &RootSystem, t: &Term) -> i64 {
    t.mono.weight() + rs.norm2(&t.lattice) / 2
}

fn pair_with_basis(rs: &RootSystem, alpha: &[Cyclotomic], index: usize) -> Cyclotomic {
    let mut s = Cyclotomic::zero();
    for (i, a) in alpha.iter().enumerate() {
        let g = rs.cartan[i][index];
        if g != 0 && !a.is_zero() {
            s += &a.scale(&int(g));
        }
    }
    s
}

fn pair_with_lattice(rs: &RootSystem, alpha: &[Cyclotomic], gamma: &[i64]) -> Cyclotomic {
    rs.pairing_cyc(alpha, &to_cyc(gamma))
}

/// The mode `α_m` of an h-vector acting on a state.
///
/// The root system is needed for contractions (`m >= 0`); creation (`m < 0`) works without it.
pub fn heis_mode(alpha: &[Cyclotomic], m: i64, a: &LatticeState, rs: Option<&RootSystem>) -> LatticeState {
    let mut out = LatticeState::zero();
    if m < 0 {
        let depth = (-m) as u16;
        for (t, c) in a.terms() {
            for (i, ai) in alpha.iter().enumerate() {
                if ai.is_zero() {
                    continue;
                }
                let mono = t.mono.times(&FockMonomial(vec![Factor { depth, index: i as u16 }]));
                out.add_term(Term { mono, lattice: t.lattice.clone() }, c * ai);
            }
        }
        return out;
    }
    let rs = rs.expect("annihilation modes need the root system");
    if m == 0 {
        for (t, c) in a.terms() {
            let p = pair_with_lattice(rs, alpha, &t.lattice);
            out.add_term(t.clone(), c * &p);
        }
        return out;
    }
    let depth = m as u16;
    let pairings: Vec<Cyclotomic> = (0..rs.rank).map(|i| pair_with_basis(rs, alpha, i)).collect();
    for (t, c) in a.terms() {
        for (pos, f) in t.mono.factors().iter().enumerate() {
            if f.depth != depth {
                continue;
            }
            let p = &pairings[f.index as usize];
            if p.is_zero() {
                continue;
            }
            let coeff = &(c * p).scale(&int(m));
            out.add_term(Term { mono: t.mono.without(pos), lattice: t.lattice.clone() }, coeff.clone());
        }
    }
    out
}

/// Fock-space polynomial: creation monomials with coefficients.
type FockPoly = BTreeMap<FockMonomial, Cyclotomic>;

fn poly_add(p: &mut FockPoly, m: FockMonomial, c: Cyclotomic) {
    if c.is_zero() {
        return;
    }
    match p.entry(m) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            *e.get_mut() += &c;
            if e.get().is_zero() {
                e.remove();
            }
        }
    }
}

fn poly_mul(a: &FockPoly, b: &FockPoly) -> FockPoly {
    let mut out = FockPoly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            poly_add(&mut out, ma.times(mb), ca * cb);
        }
    }
    out
}

/// The creation polynomial `Σ_i v_i (α_i)_{(-depth)}` of an h-vector.
fn creation_linear(v: &[Cyclotomic], depth: u16) -> FockPoly {
    let mut p = FockPoly::new();
    for (i, c) in v.iter().enumerate() {
        if !c.is_zero() {
            p.insert(FockMonomial(vec![Factor { depth, index: i as u16 }]), c.clone());
        }
    }
    p
}

/// Elementary Schur polynomials `S_0..S_max` in `x_n = v_{(-n)}/n`, as creation polynomials.
pub fn schur_creation(v: &[Cyclotomic], max: usize) -> Vec<FockPoly> {
    let mut out: Vec<FockPoly> = Vec::with_capacity(max + 1);
    let mut one = FockPoly::new();
    one.insert(FockMonomial::default(), Cyclotomic::one());
    out.push(one);
    let lin: Vec<FockPoly> = (0..=max).map(|k| creation_linear(v, k.max(1) as u16)).collect();
    for p in 1..=max {
        // p S_p = Σ_k v_{(-k)} S_{p-k}
        let mut acc = FockPoly::new();
        for k in 1..=p {
            for (m, c) in poly_mul(&lin[k], &out[p - k]) {
                poly_add(&mut acc, m, c);
            }
        }
        let inv = Cyclotomic::from_rational(Rational::new(1.into(), (p as i64).into()));
        out.push(acc.into_iter().map(|(m, c)| (m, &c * &inv)).collect());
    }
    out
}

/// `S_n(v_{(-k)}/k)|0⟩` as a state in `F`.
pub fn schur_state(v: &[Cyclotomic], n: usize) -> LatticeState {
    let rank = v.len();
    let polys = schur_creation(v, n);
    let mut s = LatticeState::zero();
    for (m, c) in &polys[n] {
        s.add_term(Term { mono: m.clone(), lattice: vec![0; rank] }, c.clone());
    }
    s
}

/// Session context: root system, truncation bound and the n-th product memo.
pub struct LatticeVa {
    rs: Arc<RootSystem>,
    truncation: i64,
    memo: DashMap<(Term, Term, i64), LatticeState>,
}

impl fmt::Debug for LatticeVa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeVa")
            .field("type", &self.rs.name())
            .field("truncation", &self.truncation)
            .field("memo_entries", &self.memo.len())
            .finish()
    }
}

/// Truncation bound from the environment, falling back to the default.
pub fn truncation_from_env() -> i64 {
    std::env::var(TRUNCATION_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_TRUNCATION_WEIGHT)
}

impl LatticeVa {
    pub fn new(rs: Arc<RootSystem>) -> Self {
        Self::with_truncation(rs, truncation_from_env())
    }

    pub fn with_truncation(rs: Arc<RootSystem>, truncation: i64) -> Self {
        LatticeVa { rs, truncation, memo: DashMap::new() }
    }

    pub fn root_system(&self) -> &RootSystem {
        &self.rs
    }

    pub fn root_system_arc(&self) -> Arc<RootSystem> {
        self.rs.clone()
    }

    pub fn truncation(&self) -> i64 {
        self.truncation
    }

    pub fn rank(&self) -> usize {
        self.rs.rank
    }

    pub fn vacuum(&self) -> LatticeState {
        LatticeState::vacuum(self.rs.rank)
    }

    /// `(α_i)_{(-1)}|0⟩`.
    pub fn simple(&self, i: usize) -> LatticeState {
        LatticeState::heisenberg(&to_cyc(&self.rs.simple_root(i)))
    }

    pub fn weight(&self, t: &Term) -> i64 {
        term_weight(&self.rs, t)
    }

    fn check_weight(&self, w: i64) -> Result<(), LatticeError> {
        if w > self.truncation {
            Err(LatticeError::TruncationExceeded { weight: w, bound: self.truncation })
        } else {
            Ok(())
        }
    }

    /// Coefficient of `ζ^{-n-1}` in `Y(e^α, ζ) a`.
    pub fn e_mode(&self, alpha: &[i64], n: i64, a: &LatticeState) -> Result<LatticeState, LatticeError> {
        self.nth_product(&LatticeState::exponential(alpha), a, n)
    }

    /// The screening operator `e^α_{(0)}` for a root `α`.
    pub fn screening(&self, alpha: &[i64], a: &LatticeState) -> Result<LatticeState, LatticeError> {
        if !self.rs.is_root(alpha) {
            return Err(LatticeError::NotARoot(alpha.to_vec()));
        }
        self.e_mode(alpha, 0, a)
    }

    /// `a_{(n)} b`.
    pub fn nth_product(&self, a: &LatticeState, b: &LatticeState, n: i64) -> Result<LatticeState, LatticeError> {
        let mut out = LatticeState::zero();
        for (ta, ca) in a.terms() {
            for (tb, cb) in b.terms() {
                let p = self.term_product(ta, tb, n)?;
                out.add_scaled(&p, &(ca * cb));
            }
        }
        Ok(out)
    }

    /// `a_{(n)} b` for basis elements, memoized.
    pub fn term_product(&self, a: &Term, b: &Term, n: i64) -> Result<LatticeState, LatticeError> {
        let wa = self.weight(a);
        let wb = self.weight(b);
        self.check_weight(wa)?;
        self.check_weight(wb)?;
        let wr = wa + wb - n - 1;
        if wr < 0 {
            return Ok(LatticeState::zero());
        }
        self.check_weight(wr)?;
        let key = (a.clone(), b.clone(), n);
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let v = self.compute_term_product(a, b, n);
        self.memo.insert(key, v.clone());
        Ok(v)
    }

    fn compute_term_product(&self, a: &Term, b: &Term, n: i64) -> LatticeState {
        let rs = &*self.rs;
        let rank = rs.rank;
        let gamma = &a.lattice;
        let gamma_c = to_cyc(gamma);
        let factors = a.mono.factors();
        let k = factors.len();
        let basis: Vec<Vec<Cyclotomic>> = factors
            .iter()
            .map(|f| {
                let mut v = vec![Cyclotomic::zero(); rank];
                v[f.index as usize] = Cyclotomic::one();
                v
            })
            .collect();

        // E_+(γ, z) b = Σ_P z^{-P} T_P with T_P = -(1/P) Σ_j γ_j T_{P-j}
        let b_state = LatticeState::basis(b.mono.clone(), b.lattice.clone());
        let wb = b.mono.weight() as usize;
        let mut tp: Vec<LatticeState> = vec![b_state];
        let gamma_zero = gamma.iter().all(|&x| x == 0);
        if !gamma_zero {
            for p in 1..=wb {
                let mut acc = LatticeState::zero();
                for j in 1..=p {
                    let x = heis_mode(&gamma_c, j as i64, &tp[p - j], Some(rs));
                    acc.add_scaled(&x, &Cyclotomic::from_int(-1));
                }
                acc = acc.scale(&Cyclotomic::from_rational(Rational::new(1.into(), (p as i64).into())));
                tp.push(acc);
            }
        }
        let shift = rs.pairing(gamma, &b.lattice);
        // z-graded pieces after E_+ and z^{γ_0}: exponent -P + (γ|β)
        let base: Vec<(i64, LatticeState)> =
            tp.into_iter().enumerate().filter(|(_, s)| !s.is_zero()).map(|(p, s)| (shift - p as i64, s)).collect();

        let target = -n - 1;
        let mut out = LatticeState::zero();
        let eps = Cyclotomic::from_int(rs.epsilon(gamma, &b.lattice));
        for mask in 0u32..(1u32 << k) {
            // annihilate with the factors outside the mask
            let mut pieces = base.clone();
            for (l, f) in factors.iter().enumerate() {
                if mask & (1 << l) != 0 {
                    continue;
                }
                let r = f.depth as u32 - 1;
                let mut next: Vec<(i64, LatticeState)> = Vec::new();
                for (e, s) in &pieces {
                    let wmax = s.terms().map(|(t, _)| t.mono.weight()).max().unwrap_or(0);
                    for m in 0..=wmax {
                        let coef = binomial_int(-m - 1, r);
                        if coef.is_zero() {
                            continue;
                        }
                        let x = heis_mode(&basis[l], m, s, Some(rs));
                        if x.is_zero() {
                            continue;
                        }
                        next.push((e - m - 1 - r as i64, x.scale(&Cyclotomic::from_rational(coef))));
                    }
                }
                pieces = merge_pieces(next);
                if pieces.is_empty() {
                    break;
                }
            }
            if pieces.is_empty() {
                continue;
            }
            let min_e = pieces.iter().map(|(e, _)| *e).min().expect("nonempty");
            let pmax = target - min_e;
            if pmax < 0 {
                continue;
            }
            let pmax = pmax as usize;
            // creation series C(z) = E_-(γ,z) ∏_{l in mask} ∂^{(r_l)} α^l_{<0}(z), up to z^pmax
            let mut series: Vec<FockPoly> = if gamma_zero {
                let mut one = FockPoly::new();
                one.insert(FockMonomial::default(), Cyclotomic::one());
                let mut v = vec![FockPoly::new(); pmax + 1];
                v[0] = one;
                v
            } else {
                schur_creation(&gamma_c, pmax)
            };
            for (l, f) in factors.iter().enumerate() {
                if mask & (1 << l) == 0 {
                    continue;
                }
                let r = f.depth as i64 - 1;
                // ∂^{(r)} α_{<0}(z) = Σ_{m>=1} C(m-1, r) α_{(-m)} z^{m-1-r}
                let mut next = vec![FockPoly::new(); pmax + 1];
                for (deg, poly) in series.iter().enumerate() {
                    if poly.is_empty() {
                        continue;
                    }
                    for add in 0..=(pmax - deg) {
                        let m = add as i64 + 1 + r;
                        let coef = binomial_int(m - 1, r as u32);
                        let lin = creation_linear(&basis[l], m as u16);
                        let prod = poly_mul(poly, &lin);
                        for (mono, c) in prod {
                            poly_add(&mut next[deg + add], mono, c.scale(&coef));
                        }
                    }
                }
                series = next;
            }
            for (e, s) in &pieces {
                let p = target - e;
                if p < 0 || p as usize > pmax {
                    continue;
                }
                let poly = &series[p as usize];
                if poly.is_empty() {
                    continue;
                }
                for (t, c) in s.terms() {
                    let lattice: LatticeVec = t.lattice.iter().zip(gamma).map(|(x, y)| x + y).collect();
                    let c = c * &eps;
                    for (mono, pc) in poly {
                        out.add_term(Term { mono: t.mono.times(mono), lattice: lattice.clone() }, &c * pc);
                    }
                }
            }
        }
        out
    }

    /// The conformal vector `ω = ½ Σ G^{-1}_{ij} (α_i)_{(-1)} (α_j)_{(-1)} |0⟩`.
    pub fn build_omega(&self) -> LatticeState {
        let rs = &*self.rs;
        let n = rs.rank;
        let mut s = LatticeState::zero();
        let half = Rational::new(1.into(), 2.into());
        for i in 0..n {
            for j in 0..n {
                let c = &rs.gram_inverse()[i][j] * &half;
                let mono =
                    FockMonomial::new(vec![Factor { depth: 1, index: i as u16 }, Factor { depth: 1, index: j as u16 }]);
                s.add_term(Term { mono, lattice: vec![0; n] }, Cyclotomic::from_rational(c));
            }
        }
        s
    }

    /// `ω^d = Σ_i (v^i)_{(-d)} v_i - Σ_{α ∈ R} e^α_{(-d)} e^{-α}`.
    pub fn build_omega_d(&self, d: u32) -> Result<LatticeState, LatticeError> {
        let rs = &*self.rs;
        let n = rs.rank;
        let mut s = LatticeState::zero();
        for i in 0..n {
            for j in 0..n {
                let c = rs.gram_inverse()[i][j].clone();
                let mono = FockMonomial::new(vec![
                    Factor { depth: d as u16, index: i as u16 },
                    Factor { depth: 1, index: j as u16 },
                ]);
                s.add_term(Term { mono, lattice: vec![0; n] }, Cyclotomic::from_rational(c));
            }
        }
        let minus = Cyclotomic::from_int(-1);
        for alpha in &rs.roots {
            let neg: LatticeVec = alpha.iter().map(|x| -x).collect();
            let x =
                self.nth_product(&LatticeState::exponential(alpha), &LatticeState::exponential(&neg), -(d as i64))?;
            s.add_scaled(&x, &minus);
        }
        Ok(s)
    }

    /// `Σ_{λ ∈ orbit} e^λ_{(-d)} e^{-λ}` for an admissible weight orbit.
    pub fn build_nu_d(&self, orbit: &WeightOrbit, d: u32) -> LatticeState {
        let c = orbit.lift_norm;
        let sign = if (c * (c + 1) / 2) % 2 == 0 { 1 } else { -1 };
        let deg = (c + d as i64 - 1) as usize;
        let mut s = LatticeState::zero();
        for w in &orbit.weights {
            let x = schur_state(&rat_to_cyc(w), deg);
            s.add_scaled(&x, &Cyclotomic::from_int(sign));
        }
        s
    }

    /// `π^N = (v_1)_{(-1)} ⋯ (v_{N-1})_{(-1)} v_N` in the orthonormal model of type D.
    pub fn build_pi_n(&self) -> Result<LatticeState, LatticeError> {
        let rs = &*self.rs;
        if rs.kind != AdeType::D {
            return Err(LatticeError::WrongType("π^N"));
        }
        let model = rs.orthonormal_model().expect("type D has an orthonormal model");
        let n = rs.rank;
        let mut s = self.vacuum();
        for i in (0..n).rev() {
            let mut e = vec![0; model.ambient_dim()];
            e[i] = 1;
            let v = rat_to_cyc(&rs.from_pairings(&model.pairings(&e)));
            s = heis_mode(&v, -1, &s, None);
        }
        Ok(s)
    }

    /// True iff `e^α_{(0)} a = 0` for every root, simple roots first.
    pub fn in_w_algebra(&self, a: &LatticeState) -> Result<bool, LatticeError> {
        if !a.in_fock() {
            return Err(LatticeError::NotInFock);
        }
        let rs = &*self.rs;
        for i in 0..rs.rank {
            if !self.screening(&rs.simple_root(i), a)?.is_zero() {
                return Ok(false);
            }
        }
        let err = std::sync::Mutex::new(None);
        let ok = maybe_parallel_all(&rs.roots, |alpha| match self.screening(alpha, a) {
            Ok(x) => x.is_zero(),
            Err(e) => {
                *err.lock().expect("poisoned") = Some(e);
                false
            }
        });
        if let Some(e) = err.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok(ok)
    }

    /// Both sides of the Borcherds identity; equal iff it holds.
    pub fn borcherds_sides(
        &self,
        a: &LatticeState,
        b: &LatticeState,
        c: &LatticeState,
        m: i64,
        n: i64,
        k: i64,
    ) -> Result<(LatticeState, LatticeState), LatticeError> {
        let rs = &*self.rs;
        let (Some(wa), Some(wb), Some(wc)) = (a.max_weight(rs), b.max_weight(rs), c.max_weight(rs)) else {
            return Ok((LatticeState::zero(), LatticeState::zero()));
        };
        let mut lhs = LatticeState::zero();
        let sign_n = if n.rem_euclid(2) == 0 { 1 } else { -1 };
        let j1 = (wb + wc - k).max(wa + wc - m).max(0);
        let j1 = if n >= 0 { j1.min(n) } else { j1 };
        for j in 0..=j1 {
            let coef = binomial_int(n, j as u32);
            if coef.is_zero() {
                continue;
            }
            let s = if j % 2 == 0 { coef } else { -coef };
            let bc = self.nth_product(b, c, k + j)?;
            let t1 = self.nth_product(a, &bc, m + n - j)?;
            let ac = self.nth_product(a, c, m + j)?;
            let t2 = self.nth_product(b, &ac, k + n - j)?;
            lhs.add_scaled(&t1, &Cyclotomic::from_rational(s.clone()));
            lhs.add_scaled(&t2, &Cyclotomic::from_rational(-s * int(sign_n)));
        }
        let mut rhs = LatticeState::zero();
        let j2 = (wa + wb - n).max(0);
        let j2 = if m >= 0 { j2.min(m) } else { j2 };
        for j in 0..=j2 {
            let coef = binomial_int(m, j as u32);
            if coef.is_zero() {
                continue;
            }
            let ab = self.nth_product(a, b, n + j)?;
            let t = self.nth_product(&ab, c, k + m - j)?;
            rhs.add_scaled(&t, &Cyclotomic::from_rational(coef));
        }
        Ok((lhs, rhs))
    }

    pub fn borcherds_check(
        &self,
        a: &LatticeState,
        b: &LatticeState,
        c: &LatticeState,
        m: i64,
        n: i64,
        k: i64,
    ) -> Result<bool, LatticeError> {
        let (l, r) = self.borcherds_sides(a, b, c, m, n, k)?;
        Ok(l == r)
    }

    /// All basis elements of weight at most `max_weight`.
    pub fn basis_up_to(&self, max_weight: i64) -> Vec<Term> {
        let rs = &*self.rs;
        let mut out = Vec::new();
        for gamma in rs.lattice_points(max_weight) {
            let rest = max_weight - rs.norm2(&gamma) / 2;
            for mono in fock_monomials(rs.rank, rest) {
                out.push(Term { mono, lattice: gamma.clone() });
            }
        }
        out
    }

    /// Basis elements of the Fock space of total weight at most `max_weight`.
    pub fn fock_basis_up_to(&self, max_weight: i64) -> Vec<Term> {
        fock_monomials(self.rs.rank, max_weight)
            .into_iter()
            .map(|mono| Term { mono, lattice: vec![0; self.rs.rank] })
            .collect()
    }

    /// Checks `[L_m, L_n] x = (m-n) L_{m+n} x + δ_{m,-n} (m³-m)/12 · c · x` with `L_n = ω_{(n+1)}`
    /// for `|m|, |n| <= mode_bound` and every basis element of weight at most `max_weight`.
    ///
    /// Runs in the orthogonal basis with the field of `ω` compiled into mode words.
    /// Returns the failures.
    pub fn virasoro_check(
        &self,
        max_weight: i64,
        mode_bound: i64,
        central_charge: &Rational,
    ) -> Result<Vec<ModeFailure>, LatticeError> {
        let rs = &*self.rs;
        self.check_weight(max_weight + 2 * mode_bound)?;
        let basis = OrthogonalBasis::new(rs);
        let omega = basis.fock_to_u(&self.build_omega())?;
        let big: FieldModes<Rational> = FieldModes::new(&omega, &basis).expect("big rationals");
        let small: Option<FieldModes<SmallRational>> = FieldModes::new(&omega, &basis);
        let mut items: Vec<(LatticeVec, PackedMono)> = Vec::new();
        for gamma in rs.lattice_points(max_weight) {
            let rest = max_weight - rs.norm2(&gamma) / 2;
            for mono in packed_monomials(rs.rank, rest) {
                items.push((gamma.clone(), mono));
            }
        }
        let results = maybe_parallel_map(&items, |(gamma, mono)| -> Result<Vec<ModeFailure>, LatticeError> {
            let p = basis.momenta(rs, gamma);
            let fast = small.as_ref().and_then(|f| {
                let ps: Option<Vec<SmallRational>> = p.iter().map(ModeScalar::from_rational).collect();
                Some(modes::virasoro_on(f, *mono, &ps?, mode_bound, central_charge))
            });
            let pairs = match fast {
                Some(Ok(v)) => v,
                Some(Err(ModeError::Lattice(e))) => return Err(e),
                _ => match modes::virasoro_on(&big, *mono, &p, mode_bound, central_charge) {
                    Ok(v) => v,
                    Err(ModeError::Lattice(e)) => return Err(e),
                    Err(ModeError::Overflow) => unreachable!("big rationals do not overflow"),
                },
            };
            Ok(pairs.into_iter().map(|(m, n)| ModeFailure { lattice: gamma.clone(), monomial: *mono, m, n }).collect())
        });
        let mut all = Vec::new();
        for r in results {
            all.extend(r?);
        }
        Ok(all)
    }

    /// `ω_{(n+1)} x` through the compiled mode words, returned on the simple-root basis.
    pub fn virasoro_mode(&self, n: i64, x: &LatticeState) -> Result<LatticeState, LatticeError> {
        let rs = &*self.rs;
        let basis = OrthogonalBasis::new(rs);
        let field: FieldModes<Rational> =
            FieldModes::new(&basis.fock_to_u(&self.build_omega())?, &basis).expect("big rationals");
        let mut sectors: BTreeMap<LatticeVec, LatticeState> = BTreeMap::new();
        for (t, c) in x.terms() {
            let fock = Term { mono: t.mono.clone(), lattice: vec![0; rs.rank] };
            sectors.entry(t.lattice.clone()).or_default().add_term(fock, c.clone());
        }
        let mut out = LatticeState::zero();
        for (gamma, s) in sectors {
            let p = basis.momenta(rs, &gamma);
            let su = basis.fock_to_u(&s)?;
            let r = match field.apply(n + 1, &su, &p) {
                Ok(r) => r,
                Err(ModeError::Lattice(e)) => return Err(e),
                Err(ModeError::Overflow) => unreachable!("big rationals do not overflow"),
            };
            out.add_scaled(&modes::u_to_state(&r, &basis, &gamma), &Cyclotomic::one());
        }
        Ok(out)
    }

    /// The Virasoro check carried out with the generic n-th product on the simple-root basis.
    /// Much slower than [`LatticeVa::virasoro_check`]; kept as its cross-check.
    pub fn virasoro_check_direct(
        &self,
        max_weight: i64,
        mode_bound: i64,
        central_charge: &Rational,
    ) -> Result<Vec<VirasoroFailure>, LatticeError> {
        let omega = self.build_omega();
        let basis = self.basis_up_to(max_weight);
        let results = maybe_parallel_map(&basis, |t| -> Result<Vec<VirasoroFailure>, LatticeError> {
            let x = LatticeState::basis(t.mono.clone(), t.lattice.clone());
            let mut fails = Vec::new();
            let mut l_of: BTreeMap<i64, LatticeState> = BTreeMap::new();
            for p in -2 * mode_bound..=2 * mode_bound {
                l_of.insert(p, self.nth_product(&omega, &x, p + 1)?);
            }
            for m in -mode_bound..=mode_bound {
                for n in -mode_bound..=mode_bound {
                    let lmn = self.nth_product(&omega, &l_of[&n], m + 1)?;
                    let lnm = self.nth_product(&omega, &l_of[&m], n + 1)?;
                    let lhs = &lmn - &lnm;
                    let mut rhs = l_of[&(m + n)].scale(&Cyclotomic::from_int(m - n));
                    if m == -n {
                        let c = int(m * m * m - m) / int(12) * central_charge;
                        rhs.add_scaled(&x, &Cyclotomic::from_rational(c));
                    }
                    if lhs != rhs {
                        fails.push(VirasoroFailure { term: t.clone(), m, n });
                    }
                }
            }
            Ok(fails)
        });
        let mut all = Vec::new();
        for r in results {
            all.extend(r?);
        }
        Ok(all)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    pub fn clear_memo(&self) {
        self.memo.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirasoroFailure {
    pub term: Term,
    pub m: i64,
    pub n: i64,
}

fn merge_pieces(v: Vec<(i64, LatticeState)>) -> Vec<(i64, LatticeState)> {
    let mut map: BTreeMap<i64, LatticeState> = BTreeMap::new();
    for (e, s) in v {
        map.entry(e).or_default().add_scaled(&s, &Cyclotomic::one());
    }
    map.into_iter().filter(|(_, s)| !s.is_zero()).collect()
}

/// All Fock monomials in `rank` colours of weight at most `max_weight`.
pub fn fock_monomials(rank: usize, max_weight: i64) -> Vec<FockMonomial> {
    fn rec(rank: usize, budget: i64, min: Factor, cur: &mut Vec<Factor>, out: &mut Vec<FockMonomial>) {
        out.push(FockMonomial(cur.clone()));
        for depth in min.depth..=budget as u16 {
            let start = if depth == min.depth { min.index } else { 0 };
            for index in start..rank as u16 {
                let f = Factor { depth, index };
                cur.push(f);
                rec(rank, budget - depth as i64, f, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    if max_weight < 0 {
        return out;
    }
    rec(rank, max_weight, Factor { depth: 1, index: 0 }, &mut Vec::new(), &mut out);
    out
}

/// A Weyl orbit of weights together with the norm of an integral lift of its members.
#[derive(Debug, Clone)]
pub struct WeightOrbit {
    /// Weights in rational simple-root coordinates.
    pub weights: Vec<Vec<Rational>>,
    /// `|λ̃|²` for an integral lift `λ̃` of every weight in an enlarged unimodular-type lattice.
    pub lift_norm: i64,
}

/// The Weyl orbit of `λ0`, provided `(λ0|α) ∈ {0, ±1}` for all roots.
pub fn weight_orbit(rs: &RootSystem, lambda0: &[Rational], lift_norm: i64) -> Result<WeightOrbit, LatticeError> {
    for alpha in &rs.roots {
        let p = rs.pairing_rational(alpha, lambda0);
        if !(p.is_zero() || p == Rational::one() || p == -Rational::one()) {
            return Err(LatticeError::InadmissibleLambda0(p));
        }
    }
    let mut seen: Vec<Vec<Rational>> = vec![lambda0.to_vec()];
    let mut frontier = vec![lambda0.to_vec()];
    while let Some(w) = frontier.pop() {
        for i in 0..rs.rank {
            let r = rs.reflect_rational(&rs.simple_root(i), &w);
            if !seen.contains(&r) {
                seen.push(r.clone());
                frontier.push(r);
            }
        }
    }
    seen.sort();
    Ok(WeightOrbit { weights: seen, lift_norm })
}

/// The standard minuscule orbit: `ω_1` for A and D, `ω_1` for E6, `ω_7` for E7.
///
/// Lifts have norm 1 in the orthonormal models of A and D, and norm 2 for E6/E7
/// (where `λ0 = v_1 + v_2` in an orthonormal model of one dimension more).
pub fn minuscule_orbit(rs: &RootSystem) -> Result<WeightOrbit, LatticeError> {
    let (idx, c) = match (rs.kind, rs.rank) {
        (AdeType::A, _) | (AdeType::D, _) => (0, 1),
        (AdeType::E, 6) => (0, 2),
        (AdeType::E, 7) => (6, 2),
        _ => {
            // E8 has no admissible weight; report the obstruction from the smallest candidate.
            let w = rs.fundamental_weight(0);
            return weight_orbit(rs, &w, 2);
        }
    };
    weight_orbit(rs, &rs.fundamental_weight(idx), c)
}

/// `Σ_i (v_i)_{(-1)} ...` helper: the factor `(α)_{(-d)}` applied to a state.
pub fn create(alpha: &[Cyclotomic], d: i64, a: &LatticeState) -> LatticeState {
    heis_mode(alpha, -d, a, None)
}

/// `n!` as a cyclotomic scalar.
pub fn factorial_c(n: u32) -> Cyclotomic {
    Cyclotomic::from_rational(factorial(n))
}
