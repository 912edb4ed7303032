//! Twisted lattice vertex operators: the scalars `U_α`, the exponential operators `Y(e^α)`,
//! phase factors and the coefficients `c_k^α` of the `e^α_{(-d)} e^{-α}` formula.

use std::collections::{BTreeMap, VecDeque};

use num_traits::Zero;

use super::operator::{NormalOrderedOperator, OpKey, Var, VarMono};
use super::{add_into, finish, FieldFactor, LaurentWindow, TwistedError, TwistedFock};
use crate::exact_arith::{factorial, gen_binomial, int, pochhammer, rat, Cyclotomic, Rational};
use crate::lattice_va::LatticeState;
use crate::root_system::{to_cyc, LatticeVec, RootSystem};

/// Truncated power series `Σ a_n x^n`.
type Series = Vec<Cyclotomic>;

fn series_mul(a: &[Cyclotomic], b: &[Cyclotomic], len: usize) -> Series {
    let mut out = vec![Cyclotomic::zero(); len];
    for (i, x) in a.iter().enumerate().take(len) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len - i) {
            if !y.is_zero() {
                out[i + j] += &(x * y);
            }
        }
    }
    out
}

fn series_inv(a: &[Cyclotomic], len: usize) -> Series {
    let a0 = a[0].inv().expect("series with invertible constant term");
    let mut out = vec![Cyclotomic::zero(); len];
    if len == 0 {
        return out;
    }
    out[0] = a0.clone();
    for n in 1..len {
        let mut s = Cyclotomic::zero();
        for k in 1..=n.min(a.len() - 1) {
            s += &(&a[k] * &out[n - k]);
        }
        out[n] = -&(&s * &a0);
    }
    out
}

fn series_pow(a: &[Cyclotomic], e: i64, len: usize) -> Series {
    let base = if e < 0 { series_inv(a, len) } else { a[..a.len().min(len)].to_vec() };
    let mut out = vec![Cyclotomic::zero(); len];
    if len > 0 {
        out[0] = Cyclotomic::one();
    }
    for _ in 0..e.unsigned_abs() {
        out = series_mul(&out, &base, len);
    }
    out
}

fn rational_series(f: impl Fn(u32) -> Rational, len: usize) -> Series {
    (0..len as u32).map(|n| Cyclotomic::from_rational(f(n))).collect()
}

/// Taylor coefficients at `x = 1` of `B_{α,α} x^{-|α|²/2} ∏_{k=1}^{h-1} (x^{1/h} - ζ^k)^{((1-σ^k)α|α)}`.
pub fn c_series(rs: &RootSystem, alpha: &[i64], terms: usize) -> Series {
    let h = rs.h;
    let n2 = rs.norm2(alpha);
    // x = 1 + u
    let y = rational_series(|n| gen_binomial(&rat(1, h as i64), n), terms);
    let mut acc = rational_series(|n| gen_binomial(&rat(-n2, 2), n), terms);
    for k in 1..h as i64 {
        let e = n2 - rs.pairing(&rs.sigma_pow(k, alpha), alpha);
        if e == 0 {
            continue;
        }
        let mut f = y.clone();
        f[0] = &f[0] - &Cyclotomic::zeta_pow(h, k);
        acc = series_mul(&acc, &series_pow(&f, e, terms), terms);
    }
    let b = rs.b_scalar(alpha, alpha);
    acc.iter().map(|c| c * &b).collect()
}

/// `c_k^α` for a root `α`.
pub fn c_coeff(rs: &RootSystem, alpha: &[i64], k: u32) -> Result<Cyclotomic, TwistedError> {
    if !rs.is_root(alpha) {
        return Err(TwistedError::NotARoot(alpha.to_vec()));
    }
    Ok(c_series(rs, alpha, k as usize + 1).pop().expect("nonempty series"))
}

/// Table of `c_k^α` over roots, editable so that checks can be run against altered values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CTable {
    entries: BTreeMap<(LatticeVec, u32), Cyclotomic>,
}

impl CTable {
    pub fn get(&self, alpha: &[i64], k: u32) -> Option<&Cyclotomic> {
        self.entries.get(&(alpha.to_vec(), k))
    }

    pub fn set(&mut self, alpha: &[i64], k: u32, value: Cyclotomic) {
        self.entries.insert((alpha.to_vec(), k), value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(LatticeVec, u32), &Cyclotomic)> {
        self.entries.iter()
    }
}

/// `c_k^α` for every root and `k ≤ k_max`.
pub fn c_table(rs: &RootSystem, k_max: u32) -> CTable {
    let mut t = CTable::default();
    for a in &rs.roots {
        for (k, c) in c_series(rs, a, k_max as usize + 1).into_iter().enumerate() {
            t.set(a, k as u32, c);
        }
    }
    t
}

/// The scalars `U_γ` on a box of lattice points, normalized by `U = 1` on simple roots and
/// extended through `U_{α+β} = ε(α,β) B_{α,β} U_α U_β`.
#[derive(Debug, Clone)]
pub struct UTable {
    radius: i64,
    values: BTreeMap<LatticeVec, Cyclotomic>,
}

impl UTable {
    /// Fills every point with coordinates in `[-radius, radius]`, checking that all paths agree.
    pub fn build(rs: &RootSystem, radius: i64) -> Result<UTable, TwistedError> {
        let n = rs.rank;
        let mut values: BTreeMap<LatticeVec, Cyclotomic> = BTreeMap::new();
        let zero = vec![0i64; n];
        values.insert(zero.clone(), Cyclotomic::one());
        let mut steps: Vec<(LatticeVec, Cyclotomic)> = Vec::new();
        for i in 0..n {
            let a = rs.simple_root(i);
            let neg: LatticeVec = a.iter().map(|x| -x).collect();
            let eps = rs.epsilon(&a, &neg) as i64;
            let b_inv = rs.b_scalar(&a, &neg).inv().expect("B is nonzero");
            steps.push((a, Cyclotomic::one()));
            steps.push((neg, b_inv.scale(&int(eps))));
        }
        let mut queue = VecDeque::from([zero]);
        while let Some(g) = queue.pop_front() {
            let ug = values[&g].clone();
            for (s, us) in &steps {
                let next: LatticeVec = g.iter().zip(s).map(|(a, b)| a + b).collect();
                if next.iter().any(|x| x.abs() > radius) {
                    continue;
                }
                let eps = rs.epsilon(&g, s);
                let val = (&(&ug * us) * &rs.b_scalar(&g, s)).scale(&int(eps));
                match values.get(&next) {
                    Some(old) if old != &val => return Err(TwistedError::InconsistentCocycle(next)),
                    Some(_) => {}
                    None => {
                        values.insert(next.clone(), val);
                        queue.push_back(next);
                    }
                }
            }
        }
        Ok(UTable { radius, values })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn get(&self, gamma: &[i64]) -> Option<&Cyclotomic> {
        self.values.get(gamma)
    }
}

impl TwistedFock {
    /// `Y(e^α, λ) = U_α λ^{-|α|²/2} :exp(Σ_{n≠0} α_n λ^{-n}/(-n)):` restricted to the window,
    /// to derivative levels `≤ cap` and to at most `max_order` derivatives.
    pub fn vertex_operator(
        &self,
        u: &UTable,
        alpha: &[i64],
        window: &LaurentWindow,
        cap: u16,
        max_order: usize,
    ) -> Result<NormalOrderedOperator, TwistedError> {
        let rs = self.rs();
        let u_alpha = u.get(alpha).cloned().ok_or_else(|| TwistedError::NotARoot(alpha.to_vec()))?;
        let a = to_cyc(alpha);
        let shift = rat(-rs.norm2(alpha), 2);
        // annihilation part: -(α|v_j)(p_j)_k ℏ^{1/2} ∂_k^j λ^{-k-p_j}
        let mut ann: Vec<(Var, Rational, Cyclotomic)> = Vec::new();
        for (j, c) in self.annihilation_coords(&a).iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let p = &self.offsets[j];
            for lvl in 0..=cap {
                let coeff = -&c.scale(&pochhammer(p, lvl as u32));
                ann.push((Var::new(j as u16, lvl), -int(lvl as i64) - p, coeff));
            }
        }
        let mut ann_terms: Vec<(VarMono, Rational, Cyclotomic)> = Vec::new();
        exp_terms(&ann, 0, max_order, &VarMono::one(), Rational::zero(), Cyclotomic::one(), &None, &mut ann_terms);
        let creation_room =
            &window.max_power - &shift - ann_terms.iter().map(|t| t.1.clone()).min().unwrap_or_default();
        // creation part: (α|v^i) ℏ^{-1/2} q_k^i λ^{k+p_i} / (p_i)_{k+1}
        let mut cre: Vec<(Var, Rational, Cyclotomic)> = Vec::new();
        for (i, c) in self.creation_coords(&a).iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let p = &self.offsets[i];
            let mut lvl: u16 = 0;
            loop {
                let e = int(lvl as i64) + p;
                if e > creation_room {
                    break;
                }
                cre.push((Var::new(i as u16, lvl), e, c.scale(&(pochhammer(p, lvl as u32 + 1).recip()))));
                lvl += 1;
            }
        }
        let mut cre_terms: Vec<(VarMono, Rational, Cyclotomic)> = Vec::new();
        exp_terms(
            &cre,
            0,
            usize::MAX,
            &VarMono::one(),
            Rational::zero(),
            Cyclotomic::one(),
            &Some(creation_room),
            &mut cre_terms,
        );
        let mut out = BTreeMap::new();
        for (dm, de, dc) in &ann_terms {
            for (vm, ve, vc) in &cre_terms {
                let e = &shift + de + ve;
                if !window.contains(&e) {
                    continue;
                }
                let key = OpKey {
                    lambda: e,
                    hbar_half: dm.len() as i32 - vm.len() as i32,
                    vars: vm.clone(),
                    ders: dm.clone(),
                };
                add_into(&mut out, key, &(dc * vc) * &u_alpha);
            }
        }
        Ok(finish(out, window, cap))
    }

    /// `:S_n(x_1, x_2, …):` with `x_j = ∂^{j-1} Y(α) / j!`, times `coeff · λ^{shift}`.
    fn add_schur(
        &self,
        alpha: &[Cyclotomic],
        n: u32,
        coeff: &Cyclotomic,
        shift: &Rational,
        window: &LaurentWindow,
        cap: u16,
        out: &mut BTreeMap<OpKey, Cyclotomic>,
    ) {
        for part in partitions(n) {
            // part[s-1] = i_s
            let mut factors = Vec::new();
            let mut w = Rational::from_integer(1.into());
            for (idx, &mult) in part.iter().enumerate() {
                let s = idx as u32 + 1;
                for _ in 0..mult {
                    factors.push(FieldFactor { alpha: alpha.to_vec(), k: s - 1 });
                }
                w /= pow_rat(&int(s as i64), mult) * factorial(mult);
            }
            self.add_normal_product(&factors, &coeff.scale(&w), shift, window, cap, out);
        }
    }

    /// The right side of the `Y(e^α_{(-d)} e^{-α})` formula, with `c_k^α` taken from `table`.
    pub fn exponential_pair_operator(
        &self,
        table: &CTable,
        alpha: &[i64],
        d: u32,
        window: &LaurentWindow,
        cap: u16,
    ) -> Result<NormalOrderedOperator, TwistedError> {
        let rs = self.rs();
        if !rs.is_root(alpha) {
            return Err(TwistedError::NotARoot(alpha.to_vec()));
        }
        let n2 = rs.norm2(alpha);
        let sign = if (n2 * (n2 + 1) / 2) % 2 == 0 { 1 } else { -1 };
        let top = (n2 - 1) as u32 + d;
        let a = to_cyc(alpha);
        let mut out = BTreeMap::new();
        for k in 0..=top {
            let c = table
                .get(alpha, k)
                .cloned()
                .ok_or(TwistedError::TruncationExceeded { needed: int(k as i64), limit: table.len() as i64 })?;
            if c.is_zero() {
                continue;
            }
            self.add_schur(&a, top - k, &c.scale(&int(sign)), &-int(k as i64), window, cap, &mut out);
        }
        Ok(finish(out, window, cap))
    }

    /// Compares the Wick-formula field of `e^α_{(-d)} e^{-α}` with [`Self::exponential_pair_operator`];
    /// returns the keys at which they differ.
    pub fn exponential_pair_check(
        &self,
        table: &CTable,
        alpha: &[i64],
        d: u32,
        window: &LaurentWindow,
        cap: u16,
    ) -> Result<Vec<OpKey>, TwistedError> {
        let lva = self.lattice();
        let neg: LatticeVec = alpha.iter().map(|x| -x).collect();
        let state =
            lva.nth_product(&LatticeState::exponential(alpha), &LatticeState::exponential(&neg), -(d as i64))?;
        let lhs = self.twisted_field(&state, window, cap)?;
        let rhs = self.exponential_pair_operator(table, alpha, d, window, cap)?;
        let diff = &lhs - &rhs;
        Ok(diff.terms().map(|(k, _)| k.clone()).collect())
    }
}

#[allow(clippy::too_many_arguments)]
fn exp_terms(
    gens: &[(Var, Rational, Cyclotomic)],
    from: usize,
    max_order: usize,
    mono: &VarMono,
    e: Rational,
    c: Cyclotomic,
    bound: &Option<Rational>,
    out: &mut Vec<(VarMono, Rational, Cyclotomic)>,
) {
    // monomials of exp(Σ g) = Σ ∏ g^m / m!, enumerated with nondecreasing generator index
    out.push((mono.clone(), e.clone(), c.clone()));
    if mono.len() >= max_order {
        return;
    }
    for i in from..gens.len() {
        let (v, ge, gc) = &gens[i];
        let ne = &e + ge;
        if let Some(b) = bound {
            if &ne > b {
                continue;
            }
        }
        let m = mono.mul(&VarMono::single(*v));
        let mult = m.count(*v) as i64;
        let nc = (&c * gc).scale(&rat(1, mult));
        exp_terms(gens, i, max_order, &m, ne, nc, bound, out);
    }
}

fn pow_rat(q: &Rational, e: u32) -> Rational {
    let mut r = Rational::from_integer(1.into());
    for _ in 0..e {
        r *= q;
    }
    r
}

/// All `(i_1, i_2, …)` with `Σ s i_s = n`.
fn partitions(n: u32) -> Vec<Vec<u32>> {
    fn rec(n: u32, s: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if s > n {
            if n == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let mut m = 0;
        while m * s <= n {
            cur.push(m);
            rec(n - m * s, s + 1, cur, out);
            cur.pop();
            m += 1;
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    rec(n, 1, &mut Vec::new(), &mut out);
    out
}

/// `∏_k (1 - ζ^k x)^{e_k}` with `x = (λ/μ)^{1/h}`: coefficient `n` multiplies `λ^{n/h} μ^{-n/h}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSeries {
    pub h: u32,
    pub coeffs: Vec<Cyclotomic>,
}

/// The `ι_μ` expansion of `∏_{k=0}^{h-1} (μ^{1/h} - ζ^k λ^{1/h})^{(σ^k α|β)}`.
pub fn phase_factor(rs: &RootSystem, alpha: &[i64], beta: &[i64], terms: usize) -> PhaseSeries {
    let h = rs.h;
    let mut acc: Series = vec![Cyclotomic::zero(); terms];
    if terms > 0 {
        acc[0] = Cyclotomic::one();
    }
    for k in 0..h as i64 {
        let e = rs.pairing(&rs.sigma_pow(k, alpha), beta);
        if e == 0 {
            continue;
        }
        let f = vec![Cyclotomic::one(), -&Cyclotomic::zeta_pow(h, k)];
        acc = series_mul(&acc, &series_pow(&f, e, terms), terms);
    }
    PhaseSeries { h, coeffs: acc }
}

/// Expansion `ξ^{leading} Σ_n a_n ξ^n λ^{-leading-n}` of the phase factor at `μ = λ + ξ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XiExpansion {
    pub leading: i64,
    pub coeffs: Vec<Cyclotomic>,
}

/// The phase factor near the diagonal `μ = λ + ξ`.
pub fn phase_factor_at_coincidence(rs: &RootSystem, alpha: &[i64], beta: &[i64], terms: usize) -> XiExpansion {
    let h = rs.h;
    let len = terms + 1;
    // y = (λ/μ)^{1/h} = (1+ξ)^{-1/h} at λ = 1
    let y = rational_series(|n| gen_binomial(&rat(-1, h as i64), n), len + 1);
    let mut acc: Series = vec![Cyclotomic::zero(); len];
    acc[0] = Cyclotomic::one();
    let mut leading = 0;
    for k in 0..h as i64 {
        let e = rs.pairing(&rs.sigma_pow(k, alpha), beta);
        if e == 0 {
            continue;
        }
        // 1 - ζ^k y
        let z = Cyclotomic::zeta_pow(h, k);
        let mut f: Series = y.iter().map(|c| -&(&z * c)).collect();
        f[0] = &f[0] + &Cyclotomic::one();
        if k == 0 {
            // 1 - y = ξ (1/h - …)
            f.remove(0);
            leading += e;
        }
        acc = series_mul(&acc, &series_pow(&f, e, len), len);
    }
    acc.truncate(terms);
    XiExpansion { leading, coeffs: acc }
}
