//! The Coxeter-twisted Fock module `F_ℏ = C_ℏ[q_k^j]` at `t = 0`: generating fields of
//! `h`, propagators, the twisted Wick formula and the twisted product formula.
//!
//! Colours are eigenframe indices: `σ v_j = ζ_h^{m_j} v_j` and `v^j = v_{N+1-j}`. The
//! field of `a ∈ h` is
//!
//! `Y(a,λ) = Σ_{i,k} (a|v^i) ℏ^{-1/2} q_k^i λ^{k-1+p_i} / (p_i)_k
//!         + Σ_{j,k} (a|v_j) (p_j)_{k+1} ℏ^{1/2} ∂/∂q_k^j λ^{-k-1-p_j}`, with `p_j = m_j/h`.

pub mod lattice;
pub mod operator;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;
use thiserror::Error;

pub use lattice::{
    c_coeff, c_series, c_table, phase_factor, phase_factor_at_coincidence, CTable, PhaseSeries, UTable, XiExpansion,
};
pub use operator::{
    compose, grade, BiOperator, LambdaSeries, NormalOrderedOperator, OpKey, OpTermJson, QPoly, Topology, Var, VarMono,
};

use crate::exact_arith::{gen_binomial, int, pochhammer, Cyclotomic, Rational};
use crate::lattice_va::{LatticeError, LatticeState, LatticeVa};
use crate::root_system::{to_cyc, LatticeVec, RootSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TwistedError {
    #[error("window [{min}, {max}] does not reach the leading exponent {needed}")]
    WindowTooSmall { needed: Box<Rational>, min: Box<Rational>, max: Box<Rational> },
    #[error("composition does not converge: {0}")]
    NonConvergent(String),
    #[error("check needs λ-exponents up to {needed}, above the limit {limit}")]
    TruncationExceeded { needed: Rational, limit: i64 },
    #[error("vector {0:?} is not a root")]
    NotARoot(LatticeVec),
    #[error("the scalars U disagree along two paths to {0:?}")]
    InconsistentCocycle(LatticeVec),
    #[error("state has a lattice component outside the Fock space")]
    NotInFock,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Retained range of λ-exponents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaurentWindow {
    pub min_power: Rational,
    pub max_power: Rational,
}

impl LaurentWindow {
    pub fn new(min_power: Rational, max_power: Rational) -> Self {
        assert!(min_power <= max_power, "empty Laurent window");
        LaurentWindow { min_power, max_power }
    }

    pub fn ints(min: i64, max: i64) -> Self {
        LaurentWindow::new(int(min), int(max))
    }

    pub fn contains(&self, e: &Rational) -> bool {
        e >= &self.min_power && e <= &self.max_power
    }
}

impl Default for LaurentWindow {
    fn default() -> Self {
        LaurentWindow::ints(-8, 8)
    }
}

/// Default derivative level cap used by the CLI and the checks.
pub const DEFAULT_LEVEL_CAP: u16 = 12;

/// Largest λ-exponent the product check will expand to.
pub const PRODUCT_EXPONENT_LIMIT: i64 = 48;

/// A monomial `c · λ^e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaMonomial {
    pub coeff: Cyclotomic,
    pub power: Rational,
}

/// One factor `∂_λ^{(k)} Y(α, λ)` of a normally ordered product.
#[derive(Debug, Clone)]
struct FieldFactor {
    alpha: Vec<Cyclotomic>,
    k: u32,
}

/// The twisted module for one root system.
pub struct TwistedFock {
    lva: LatticeVa,
    offsets: Vec<Rational>,
}

impl std::fmt::Debug for TwistedFock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwistedFock").field("type", &self.rs().name()).field("offsets", &self.offsets).finish()
    }
}

impl TwistedFock {
    pub fn new(rs: Arc<RootSystem>) -> Self {
        let h = rs.h as i64;
        let offsets = rs.exponents.iter().map(|&m| Rational::new((m as i64).into(), h.into())).collect();
        TwistedFock { lva: LatticeVa::new(rs), offsets }
    }

    pub fn rs(&self) -> &RootSystem {
        self.lva.root_system()
    }

    pub fn lattice(&self) -> &LatticeVa {
        &self.lva
    }

    pub fn rank(&self) -> usize {
        self.offsets.len()
    }

    /// `p_j = m_j / h` for every colour.
    pub fn offsets(&self) -> &[Rational] {
        &self.offsets
    }

    /// `(a|v_j)` for all `j`: coefficients of the annihilation parts.
    pub fn annihilation_coords(&self, a: &[Cyclotomic]) -> Vec<Cyclotomic> {
        self.rs().eigenframe().pair_vectors(self.rs(), a)
    }

    /// `(a|v^i)` for all `i`: coefficients of the creation parts.
    pub fn creation_coords(&self, a: &[Cyclotomic]) -> Vec<Cyclotomic> {
        self.rs().eigenframe().pair_duals(self.rs(), a)
    }

    /// Terms of `∂_λ^{(k)} Y(a,λ)` with derivative level `≤ cap` and exponent `≤ max_exp`.
    fn generator_terms(&self, a: &[Cyclotomic], k: u32, cap: u16, max_exp: &Rational) -> Vec<(OpKey, Cyclotomic)> {
        let kr = int(k as i64);
        let mut out = Vec::new();
        for (j, c) in self.annihilation_coords(a).iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let p = &self.offsets[j];
            for lvl in 0..=cap {
                let e = -int(lvl as i64 + 1) - p;
                let d = gen_binomial(&e, k);
                let target = &e - &kr;
                if &target > max_exp || d.is_zero() {
                    continue;
                }
                let coeff = c.scale(&(pochhammer(p, lvl as u32 + 1) * d));
                let key = OpKey {
                    lambda: target,
                    hbar_half: 1,
                    vars: VarMono::one(),
                    ders: VarMono::single(Var::new(j as u16, lvl)),
                };
                out.push((key, coeff));
            }
        }
        for (i, c) in self.creation_coords(a).iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let p = &self.offsets[i];
            let mut lvl: u16 = 0;
            loop {
                let e = int(lvl as i64 - 1) + p;
                let target = &e - &kr;
                if &target > max_exp {
                    break;
                }
                let d = gen_binomial(&e, k);
                if !d.is_zero() {
                    let coeff = c.scale(&(d / pochhammer(p, lvl as u32)));
                    let key = OpKey {
                        lambda: target,
                        hbar_half: -1,
                        vars: VarMono::single(Var::new(i as u16, lvl)),
                        ders: VarMono::one(),
                    };
                    out.push((key, coeff));
                }
                lvl += 1;
            }
        }
        out
    }

    /// Smallest exponent among the terms of `∂^{(k)} Y(a)` at the given cap.
    fn min_exponent(&self, a: &[Cyclotomic], k: u32, cap: u16) -> Rational {
        let ann = self.annihilation_coords(a);
        let mut m: Option<Rational> = None;
        for (j, c) in ann.iter().enumerate() {
            if !c.is_zero() {
                let e = -int(cap as i64 + 1) - &self.offsets[j] - int(k as i64);
                m = Some(m.map_or(e.clone(), |x: Rational| x.min(e)));
            }
        }
        m.unwrap_or_else(|| {
            let pmin = self.offsets.iter().min().cloned().unwrap_or_else(Rational::zero);
            pmin - int(1 + k as i64)
        })
    }

    /// `Y(v^j, λ)`, exponents in `-p_j + Z`.
    pub fn twisted_generator(&self, j: usize, window: &LaurentWindow, cap: u16) -> NormalOrderedOperator {
        let a = self.rs().eigenframe().duals[j].clone();
        self.field_of_vector(&a, window, cap)
    }

    /// `Y(a, λ)` for any `a ∈ h` (simple-root coordinates).
    pub fn field_of_vector(&self, a: &[Cyclotomic], window: &LaurentWindow, cap: u16) -> NormalOrderedOperator {
        let mut op = NormalOrderedOperator::zero();
        for (key, c) in self.generator_terms(a, 0, cap, &window.max_power) {
            if window.contains(&key.lambda) {
                op.add_term(key, c);
            }
        }
        op.level_cap = Some(cap);
        op.window = Some((window.min_power.clone(), window.max_power.clone()));
        op
    }

    /// `P^k_{α,β}(0,λ) = c λ^{-k-2}`, the regular coefficient of `(μ-λ)^k` in the contraction
    /// of `Y(α,μ)` (left) with `Y(β,λ)`.
    pub fn propagator_coeff(&self, alpha: &[Cyclotomic], beta: &[Cyclotomic], k: u32) -> LambdaMonomial {
        let ann = self.annihilation_coords(alpha);
        let cre = self.creation_coords(beta);
        let mut c = Cyclotomic::zero();
        for j in 0..self.rank() {
            let w = &ann[j] * &cre[j];
            if w.is_zero() {
                continue;
            }
            c += &w.scale(&propagator_scalar(&self.offsets[j], k as i64));
        }
        LambdaMonomial { coeff: c, power: -int(k as i64 + 2) }
    }

    /// Coefficient of `ξ^{-1}` in the propagator expansion; it vanishes identically.
    pub fn propagator_xi_inverse(&self, alpha: &[Cyclotomic], beta: &[Cyclotomic]) -> Cyclotomic {
        let ann = self.annihilation_coords(alpha);
        let cre = self.creation_coords(beta);
        let mut c = Cyclotomic::zero();
        for j in 0..self.rank() {
            let w = &ann[j] * &cre[j];
            c += &w.scale(&propagator_scalar(&self.offsets[j], -1));
        }
        c
    }

    /// Scalar coefficient (of `λ^{-a-b-2}`) from contracting `∂^{(a)}Y(α)` with `∂^{(b)}Y(β)`.
    fn contraction(&self, alpha: &[Cyclotomic], a: u32, beta: &[Cyclotomic], b: u32) -> Cyclotomic {
        // regular part of ∂_λ^{(b)} P(μ,λ) at (μ-λ)^a
        let mut total = Cyclotomic::zero();
        for d in 0..=b {
            let n = a + d;
            let p = self.propagator_coeff(alpha, beta, n);
            let deriv = gen_binomial(&p.power, b - d);
            let sign = if d % 2 == 0 { int(1) } else { int(-1) };
            let f = sign * crate::exact_arith::binomial_int(n as i64, d) * deriv;
            total += &p.coeff.scale(&f);
        }
        total
    }

    /// Adds `coeff · λ^{shift} · :∏ factors:` to `out`, restricted to `window`.
    fn add_normal_product(
        &self,
        factors: &[FieldFactor],
        coeff: &Cyclotomic,
        shift: &Rational,
        window: &LaurentWindow,
        cap: u16,
        out: &mut BTreeMap<OpKey, Cyclotomic>,
    ) {
        if coeff.is_zero() {
            return;
        }
        if factors.is_empty() {
            if window.contains(shift) {
                let key = OpKey { lambda: shift.clone(), hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() };
                add_into(out, key, coeff.clone());
            }
            return;
        }
        let mins: Vec<Rational> = factors.iter().map(|f| self.min_exponent(&f.alpha, f.k, cap)).collect();
        let total_min: Rational = mins.iter().fold(shift.clone(), |a, b| a + b);
        let lists: Vec<Vec<(OpKey, Cyclotomic)>> = factors
            .iter()
            .zip(&mins)
            .map(|(f, m)| {
                let max_exp = &window.max_power - &total_min + m;
                self.generator_terms(&f.alpha, f.k, cap, &max_exp)
            })
            .collect();
        let maxs: Vec<Rational> = lists
            .iter()
            .map(|l| l.iter().map(|(k, _)| k.lambda.clone()).max().unwrap_or_else(Rational::zero))
            .collect();
        // suffix sums for pruning
        let n = factors.len();
        let mut suf_min = vec![Rational::zero(); n + 1];
        let mut suf_max = vec![Rational::zero(); n + 1];
        for i in (0..n).rev() {
            suf_min[i] = &suf_min[i + 1] + &mins[i];
            suf_max[i] = &suf_max[i + 1] + &maxs[i];
        }
        let start = OpKey { lambda: shift.clone(), hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() };
        self.enumerate_products(&lists, 0, start, coeff.clone(), &suf_min, &suf_max, window, out);
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_products(
        &self,
        lists: &[Vec<(OpKey, Cyclotomic)>],
        i: usize,
        acc: OpKey,
        c: Cyclotomic,
        suf_min: &[Rational],
        suf_max: &[Rational],
        window: &LaurentWindow,
        out: &mut BTreeMap<OpKey, Cyclotomic>,
    ) {
        if i == lists.len() {
            if window.contains(&acc.lambda) {
                add_into(out, acc, c);
            }
            return;
        }
        for (key, d) in &lists[i] {
            let e = &acc.lambda + &key.lambda;
            if &e + &suf_min[i + 1] > window.max_power || &e + &suf_max[i + 1] < window.min_power {
                continue;
            }
            let next = OpKey {
                lambda: e,
                hbar_half: acc.hbar_half + key.hbar_half,
                vars: acc.vars.mul(&key.vars),
                ders: acc.ders.mul(&key.ders),
            };
            self.enumerate_products(lists, i + 1, next, &c * d, suf_min, suf_max, window, out);
        }
    }

    /// Wick expansion of `Y(α^1_{(-k_1-1)} ⋯ α^r_{(-k_r-1)}|0⟩, λ)`: a sum over partial
    /// pairings, each pair contributing a scalar and the rest normally ordered.
    fn wick(
        &self,
        factors: &[FieldFactor],
        coeff: &Cyclotomic,
        window: &LaurentWindow,
        cap: u16,
        out: &mut BTreeMap<OpKey, Cyclotomic>,
    ) {
        let remaining: Vec<usize> = (0..factors.len()).collect();
        let mut kept = Vec::new();
        self.wick_rec(factors, &remaining, &mut kept, coeff.clone(), Rational::zero(), window, cap, out);
    }

    #[allow(clippy::too_many_arguments)]
    fn wick_rec(
        &self,
        factors: &[FieldFactor],
        remaining: &[usize],
        kept: &mut Vec<usize>,
        coeff: Cyclotomic,
        shift: Rational,
        window: &LaurentWindow,
        cap: u16,
        out: &mut BTreeMap<OpKey, Cyclotomic>,
    ) {
        let Some((&i, rest)) = remaining.split_first() else {
            let normal: Vec<FieldFactor> = kept.iter().map(|&k| factors[k].clone()).collect();
            self.add_normal_product(&normal, &coeff, &shift, window, cap, out);
            return;
        };
        kept.push(i);
        self.wick_rec(factors, rest, kept, coeff.clone(), shift.clone(), window, cap, out);
        kept.pop();
        for (pos, &j) in rest.iter().enumerate() {
            let c = self.contraction(&factors[i].alpha, factors[i].k, &factors[j].alpha, factors[j].k);
            if c.is_zero() {
                continue;
            }
            let mut left: Vec<usize> = rest.to_vec();
            left.remove(pos);
            let e = &shift - int(factors[i].k as i64 + factors[j].k as i64 + 2);
            self.wick_rec(factors, &left, kept, &coeff * &c, e, window, cap, out);
        }
    }

    /// `Y(a, λ)` on `F_ℏ` for `a ∈ F`, by the twisted Wick formula.
    pub fn twisted_field(
        &self,
        a: &LatticeState,
        window: &LaurentWindow,
        cap: u16,
    ) -> Result<NormalOrderedOperator, TwistedError> {
        if !a.in_fock() {
            return Err(TwistedError::NotInFock);
        }
        let rs = self.rs();
        if let Some(w) = a.max_weight(rs) {
            let needed = -int(w);
            if !window.contains(&needed) {
                return Err(TwistedError::WindowTooSmall {
                    needed: Box::new(needed),
                    min: Box::new(window.min_power.clone()),
                    max: Box::new(window.max_power.clone()),
                });
            }
        }
        let mut out: BTreeMap<OpKey, Cyclotomic> = BTreeMap::new();
        for (t, c) in a.terms() {
            let factors: Vec<FieldFactor> = t
                .mono
                .factors()
                .iter()
                .map(|f| {
                    let mut v = vec![0i64; rs.rank];
                    v[f.index as usize] = 1;
                    FieldFactor { alpha: to_cyc(&v), k: f.depth as u32 - 1 }
                })
                .collect();
            self.wick(&factors, c, window, cap, &mut out);
        }
        Ok(finish(out, window, cap))
    }

    /// `Y(a_{(-d)} b)` as given by the closed formula for eigenvector-valued `a`, extended
    /// linearly over the eigen-decomposition `a = Σ_j (a|v_j) v^j`.
    pub fn heisenberg_product_operator(
        &self,
        a: &[Cyclotomic],
        b: &[Cyclotomic],
        d: u32,
        window: &LaurentWindow,
        cap: u16,
    ) -> NormalOrderedOperator {
        assert!(d >= 1);
        let frame = self.rs().eigenframe();
        let coords = self.annihilation_coords(a);
        let mut out: BTreeMap<OpKey, Cyclotomic> = BTreeMap::new();
        for (j, cj) in coords.iter().enumerate() {
            if cj.is_zero() {
                continue;
            }
            let vj_up = frame.duals[j].clone();
            // 1/(d-1)! ∂^{d-1} = ∂^{(d-1)}
            let factors = vec![FieldFactor { alpha: vj_up.clone(), k: d - 1 }, FieldFactor { alpha: b.to_vec(), k: 0 }];
            self.add_normal_product(&factors, cj, &Rational::zero(), window, cap, &mut out);
            let p = &self.offsets[j];
            let ab = self.rs().pairing_cyc(&vj_up, b);
            let s = -int(d as i64) * gen_binomial(&(-p + int(1)), d + 1);
            let e = -int(d as i64 + 1);
            if window.contains(&e) {
                let key = OpKey { lambda: e, hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() };
                add_into(&mut out, key, (cj * &ab).scale(&s));
            }
        }
        finish(out, window, cap)
    }

    /// `N_ab`: one more than the largest `n` with `a_{(n)} b ≠ 0` (0 if none).
    pub fn locality_order(&self, a: &LatticeState, b: &LatticeState) -> Result<i64, TwistedError> {
        let rs = self.rs();
        let wa = a.max_weight(rs).unwrap_or(0);
        let wb = b.max_weight(rs).unwrap_or(0);
        for n in (0..=(wa + wb)).rev() {
            if !self.lva.nth_product(a, b, n)?.is_zero() {
                return Ok(n + 1);
            }
        }
        Ok(0)
    }

    /// `Y(a,λ) c` for every exponent up to `e_max`, exact.
    pub fn act(&self, a: &LatticeState, c: &QPoly, e_max: &Rational) -> Result<LambdaSeries, TwistedError> {
        let rs = self.rs();
        let w = int(a.max_weight(rs).unwrap_or(0));
        let lo = -&w - c.max_grade(&self.offsets);
        let hi = e_max.clone().max(-w);
        let cap = c.max_level().unwrap_or(0);
        let op = self.twisted_field(a, &LaurentWindow::new(lo, hi.clone()), cap)?;
        let mut s = op.apply(c);
        s.retain(|e, _| e <= &hi);
        Ok(s)
    }

    /// Checks `(1/k!) ∂_{ζ1}^k (ζ12^N Y(a,ζ1) Y(b,ζ2) c)|_{ζ1=ζ2} = Y(a_{(N-1-k)} b, ζ2) c`
    /// for all exponents `≤ window.max_power` of `ζ2`.
    pub fn twisted_product_check(
        &self,
        a: &LatticeState,
        b: &LatticeState,
        k: u32,
        c: &QPoly,
        window: &LaurentWindow,
    ) -> Result<ProductCheck, TwistedError> {
        let rs = self.rs();
        let n = self.locality_order(a, b)?;
        let x = self.lva.nth_product(a, b, n - 1 - k as i64)?;
        let wa = int(a.max_weight(rs).unwrap_or(0));
        let wb = int(b.max_weight(rs).unwrap_or(0));
        let wc = c.max_grade(&self.offsets);
        let kr = int(k as i64);
        let e_max = window.max_power.clone();
        let lower_a = -&wa - &wc;
        let lower_b = -&wb - &wc;
        let x_max = &e_max + &kr - &lower_b;
        let y_max = &e_max + &kr - &lower_a;
        for bound in [&x_max, &y_max] {
            if bound > &int(PRODUCT_EXPONENT_LIMIT) {
                return Err(TwistedError::TruncationExceeded { needed: bound.clone(), limit: PRODUCT_EXPONENT_LIMIT });
            }
        }
        // F(e1, e2) = coefficient of ζ1^{e1} ζ2^{e2} in Y(a,ζ1) Y(b,ζ2) c
        let yb = self.act(b, c, &y_max)?;
        let mut g: BTreeMap<(Rational, Rational), QPoly> = BTreeMap::new();
        let nr = n;
        for (e2, p) in &yb {
            let ya = self.act(a, p, &x_max)?;
            for (e1, q) in ya {
                // multiply by ζ12^N = Σ_i C(N,i) ζ1^{N-i} (-ζ2)^i
                for i in 0..=nr {
                    let sign = if i % 2 == 0 { 1 } else { -1 };
                    let cf = int(sign) * crate::exact_arith::binomial_int(nr, i as u32);
                    let key = (&e1 + int(nr - i), e2 + int(i));
                    if key.0 > x_max || key.1 > y_max {
                        continue;
                    }
                    g.entry(key).or_default().add_scaled(&q, &Cyclotomic::from_rational(cf));
                }
            }
        }
        let mut lhs: LambdaSeries = BTreeMap::new();
        for ((x1, y1), q) in &g {
            let e = x1 + y1 - &kr;
            if e > e_max {
                continue;
            }
            let cf = gen_binomial(x1, k);
            if cf.is_zero() {
                continue;
            }
            lhs.entry(e).or_default().add_scaled(q, &Cyclotomic::from_rational(cf));
        }
        lhs.retain(|_, p| !p.is_zero());
        let rhs = self.act(&x, c, &e_max)?;
        let mut mismatches = Vec::new();
        let mut keys: Vec<&Rational> = lhs.keys().chain(rhs.keys()).collect();
        keys.sort();
        keys.dedup();
        for e in keys {
            if e < &window.min_power {
                continue;
            }
            let l = lhs.get(e).cloned().unwrap_or_default();
            let r = rhs.get(e).cloned().unwrap_or_default();
            if l != r {
                mismatches.push(e.clone());
            }
        }
        Ok(ProductCheck { locality_order: n, product: x, mismatches })
    }

    /// True iff `Y(a,ζ) c` has no negative powers of `ζ`.
    pub fn regular_on(&self, a: &LatticeState, c: &QPoly) -> Result<bool, TwistedError> {
        let s = self.act(a, c, &Rational::zero())?;
        Ok(s.keys().all(|e| e >= &Rational::zero()))
    }

    /// If `Y(a)c` and `Y(b)c` are regular, whether every `Y(a_{(k)} b) c` with `k` in the
    /// range is regular too; `None` when the hypothesis fails.
    pub fn regularity_spot_check(
        &self,
        a: &LatticeState,
        b: &LatticeState,
        c: &QPoly,
        ks: std::ops::RangeInclusive<i64>,
    ) -> Result<Option<bool>, TwistedError> {
        if !self.regular_on(a, c)? || !self.regular_on(b, c)? {
            return Ok(None);
        }
        for k in ks {
            let x = self.lva.nth_product(a, b, k)?;
            if !self.regular_on(&x, c)? {
                return Ok(Some(false));
            }
        }
        Ok(Some(true))
    }
}

/// Outcome of one twisted product formula check.
#[derive(Debug, Clone)]
pub struct ProductCheck {
    pub locality_order: i64,
    pub product: LatticeState,
    /// Exponents at which the two sides differ.
    pub mismatches: Vec<Rational>,
}

impl ProductCheck {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// `C(-p, k+2) + p C(-p, k+1)`: the `ξ^k` coefficient of `(1+ξ/λ)^{-p}(ξ^{-2} + p λ^{-1} ξ^{-1})`
/// at `λ = 1`, for `k ≥ -1`.
pub fn propagator_scalar(p: &Rational, k: i64) -> Rational {
    let m = -p.clone();
    let a = gen_binomial(&m, (k + 2) as u32);
    let b = if k + 1 >= 0 { gen_binomial(&m, (k + 1) as u32) } else { Rational::zero() };
    a + p * b
}

fn add_into(out: &mut BTreeMap<OpKey, Cyclotomic>, key: OpKey, c: Cyclotomic) {
    if c.is_zero() {
        return;
    }
    use std::collections::btree_map::Entry;
    match out.entry(key) {
        Entry::Vacant(e) => {
            e.insert(c);
        }
        Entry::Occupied(mut e) => {
            *e.get_mut() += &c;
            if e.get().is_zero() {
                e.remove();
            }
        }
    }
}

fn finish(out: BTreeMap<OpKey, Cyclotomic>, window: &LaurentWindow, cap: u16) -> NormalOrderedOperator {
    let mut op = NormalOrderedOperator::zero();
    for (k, c) in out {
        op.add_term(k, c);
    }
    op.level_cap = Some(cap);
    op.window = Some((window.min_power.clone(), window.max_power.clone()));
    op
}
