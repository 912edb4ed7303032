//! The rank-one case end to end: periods, the `J_n` and `L_m` operators produced by the
//! twisted pipeline, a correlator recursion kept apart from that pipeline, the truncated
//! Witten-Kontsevich series and the exact annihilation check.

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;
use std::sync::Arc;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_arith::rational::serde_rational;
use crate::exact_arith::{int, odd_double_factorial, rat, Cyclotomic, Rational};
use crate::parallel::maybe_parallel_map;
use crate::quantization::{TameSeries, Truncation};
use crate::root_system::{to_cyc, RootSystem};
use crate::twisted_fock::{LaurentWindow, NormalOrderedOperator, TwistedError, TwistedFock, Var, VarMono};

#[derive(Debug, Error)]
pub enum A1Error {
    #[error("correlator table covers genus {have_genus} and weight {have_weight}, need {genus} and {weight}")]
    InsufficientTable { genus: usize, weight: u32, have_genus: usize, have_weight: u32 },
    #[error("correlator table has no entry for genus {genus}, indices {indices:?}")]
    MissingCorrelator { genus: usize, indices: Vec<u32> },
    #[error("operator level cap {cap} must exceed the weight bound {weight}")]
    CapTooSmall { cap: u16, weight: u32 },
    #[error("operator has a half-integral power of ħ")]
    HalfIntegralHbar,
    #[error("J_n needs odd n, got {0}")]
    EvenJ(i64),
    #[error(transparent)]
    Twisted(#[from] TwistedError),
}

/// `I^{(k)}(t, λ) = coeff · (λ - t)^{exponent}` for the single vanishing cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A1Period {
    pub k: u32,
    pub t: Rational,
}

impl A1Period {
    pub fn new(k: u32, t: Rational) -> Self {
        A1Period { k, t }
    }

    /// `(-1)^k 2^{1/2-k} (2k-1)!!`.
    pub fn coeff(&self) -> Cyclotomic {
        let sign = if self.k.is_multiple_of(2) { int(1) } else { int(-1) };
        let r = sign * odd_double_factorial(self.k) / Rational::from_integer(num_bigint::BigInt::from(2).pow(self.k));
        Cyclotomic::sqrt_rational(&int(2)).scale(&r)
    }

    /// `-k - 1/2`.
    pub fn exponent(&self) -> Rational {
        rat(-2 * self.k as i64 - 1, 2)
    }

    pub fn derivative(&self) -> A1Period {
        A1Period { k: self.k + 1, t: self.t.clone() }
    }
}

/// A Virasoro mode built through the twisted Wick pipeline.
///
/// The modes are the coefficients of `(λ - t)^{-m-2}`; in these coordinates they do
/// not depend on `t`, which is kept only as a label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirasoroOperator {
    pub m: i64,
    pub t: Rational,
    pub op: NormalOrderedOperator,
}

fn a1_fock() -> TwistedFock {
    TwistedFock::new(Arc::new(RootSystem::parse("A1").expect("A1 is a valid type")))
}

/// `L_m` for every `m` in `ms`, from one twisted field of the conformal vector.
pub fn a1_virasoro_family(ms: RangeInclusive<i64>, t: &Rational, cap: u16) -> Result<Vec<VirasoroOperator>, A1Error> {
    let tf = a1_fock();
    let omega = tf.lattice().build_omega();
    let lo = (-ms.end() - 2).min(-2);
    let hi = (-ms.start() - 2).max(-2);
    let field = tf.twisted_field(&omega, &LaurentWindow::ints(lo, hi), cap)?;
    Ok(ms.map(|m| VirasoroOperator { m, t: t.clone(), op: field.mode(&int(-m - 2)) }).collect())
}

pub fn a1_virasoro(m: i64, t: &Rational) -> Result<VirasoroOperator, A1Error> {
    let mut v = a1_virasoro_family(m..=m, t, crate::twisted_fock::DEFAULT_LEVEL_CAP)?;
    Ok(v.remove(0))
}

/// `J_n` for odd `n`: the coefficient of `λ^{-n/2-1}` in the twisted field of the root.
pub fn a1_j(n: i64, cap: u16) -> Result<NormalOrderedOperator, A1Error> {
    if n % 2 == 0 {
        return Err(A1Error::EvenJ(n));
    }
    let tf = a1_fock();
    let p = rat(-n - 2, 2);
    let field = tf.field_of_vector(&to_cyc(&[1]), &LaurentWindow::new(p.clone(), p.clone()), cap);
    Ok(field.mode(&p))
}

/// `⟨τ_{k_1} … τ_{k_n}⟩_g` on the domain `g ≤ genus_max`, `Σ k_i ≤ weight_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelatorTable {
    pub genus_max: usize,
    pub weight_max: u32,
    entries: BTreeMap<(usize, Vec<u32>), Rational>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorrelatorJson {
    genus: usize,
    indices: Vec<u32>,
    #[serde(with = "serde_rational")]
    value: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableJson {
    genus_max: usize,
    weight_max: u32,
    correlators: Vec<CorrelatorJson>,
}

impl CorrelatorTable {
    pub fn get(&self, genus: usize, indices: &[u32]) -> Option<&Rational> {
        let mut k = indices.to_vec();
        k.sort_unstable();
        self.entries.get(&(genus, k))
    }

    pub fn set(&mut self, genus: usize, indices: &[u32], value: Rational) {
        let mut k = indices.to_vec();
        k.sort_unstable();
        self.entries.insert((genus, k), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[u32], &Rational)> {
        self.entries.iter().map(|((g, k), v)| (*g, k.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let t = TableJson {
            genus_max: self.genus_max,
            weight_max: self.weight_max,
            correlators: self
                .iter()
                .map(|(genus, k, v)| CorrelatorJson { genus, indices: k.to_vec(), value: v.clone() })
                .collect(),
        };
        serde_json::to_value(t).expect("table serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, serde_json::Error> {
        let t: TableJson = serde_json::from_value(v.clone())?;
        let mut out = CorrelatorTable { genus_max: t.genus_max, weight_max: t.weight_max, entries: BTreeMap::new() };
        for c in t.correlators {
            out.set(c.genus, &c.indices, c.value);
        }
        Ok(out)
    }
}

/// Sorted multisets of `n` non-negative integers with sum `w`.
fn multisets(n: usize, w: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, w: u32, min: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            if w == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let mut k = min;
        while k as u64 * n as u64 <= w as u64 {
            cur.push(k);
            rec(n - 1, w - k, k, cur, out);
            cur.pop();
            k += 1;
        }
    }
    let mut out = Vec::new();
    rec(n, w, 0, &mut Vec::new(), &mut out);
    out
}

/// Stable `(g, indices)` with `Σ k = 3g - 3 + n` inside the bounds.
fn correlator_domain(genus_max: usize, weight_max: u32) -> Vec<(usize, Vec<u32>)> {
    let mut out = Vec::new();
    for g in 0..=genus_max {
        for w in 0..=weight_max {
            let n = w as i64 + 3 - 3 * g as i64;
            if n < 1 || 2 * g as i64 - 2 + n <= 0 {
                continue;
            }
            for k in multisets(n as usize, w) {
                out.push((g, k));
            }
        }
    }
    out
}

struct Dvv {
    memo: HashMap<(usize, Vec<u32>), Rational>,
}

impl Dvv {
    fn corr(&mut self, g: usize, ks: &[u32]) -> Rational {
        let n = ks.len() as i64;
        let sum: i64 = ks.iter().map(|&k| k as i64).sum();
        if sum != 3 * g as i64 - 3 + n || 2 * g as i64 - 2 + n <= 0 {
            return Rational::zero();
        }
        let mut key = ks.to_vec();
        key.sort_unstable();
        if let Some(v) = self.memo.get(&(g, key.clone())) {
            return v.clone();
        }
        let v = self.compute(g, &key);
        self.memo.insert((g, key), v.clone());
        v
    }

    fn compute(&mut self, g: usize, ks: &[u32]) -> Rational {
        // the two values the recursion cannot reach; each solves the lowest-order
        // coefficient of a constraint: ½ - ⟨τ_0³⟩/2 = 0 and 1/16 - (3/2)⟨τ_1⟩ = 0
        if g == 0 && ks == [0, 0, 0] {
            return rat(1, 2) / rat(1, 2);
        }
        if g == 1 && ks == [1] {
            return rat(1, 16) / rat(3, 2);
        }
        let (&n, rest) = ks.split_last().expect("stable correlators are nonempty");
        if n == 0 {
            return Rational::zero();
        }
        let mut acc = Rational::zero();
        for j in 0..rest.len() {
            let kj = rest[j];
            let mut s: Vec<u32> = rest.to_vec();
            s[j] = n + kj - 1;
            acc += odd_double_factorial(n + kj) / odd_double_factorial(kj) * self.corr(g, &s);
        }
        if n >= 2 {
            let groups = runs(rest);
            for a in 0..=(n - 2) {
                let b = n - 2 - a;
                let w = odd_double_factorial(a + 1) * odd_double_factorial(b + 1) / int(2);
                let mut inner = Rational::zero();
                if g >= 1 {
                    let mut s = rest.to_vec();
                    s.push(a);
                    s.push(b);
                    inner += self.corr(g - 1, &s);
                }
                for (left, right, mult) in splittings(&groups) {
                    for g1 in 0..=g {
                        let mut x = left.clone();
                        x.push(a);
                        let cx = self.corr(g1, &x);
                        if cx.is_zero() {
                            continue;
                        }
                        let mut y = right.clone();
                        y.push(b);
                        inner += cx * self.corr(g - g1, &y) * int(mult as i64);
                    }
                }
                acc += w * inner;
            }
        }
        acc / odd_double_factorial(n + 1)
    }
}

fn runs(ks: &[u32]) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &k in ks {
        match out.last_mut() {
            Some((v, m)) if *v == k => *m += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

/// Ordered splittings of a multiset into two parts, with the number of ways to choose
/// the positions of each.
fn splittings(groups: &[(u32, u32)]) -> Vec<(Vec<u32>, Vec<u32>, u64)> {
    let mut out = vec![(Vec::new(), Vec::new(), 1u64)];
    for &(v, m) in groups {
        let mut next = Vec::new();
        for (l, r, c) in &out {
            let mut binom = 1u64;
            for i in 0..=m {
                let mut l2 = l.clone();
                l2.extend(std::iter::repeat_n(v, i as usize));
                let mut r2 = r.clone();
                r2.extend(std::iter::repeat_n(v, (m - i) as usize));
                next.push((l2, r2, c * binom));
                binom = binom * (m - i) as u64 / (i + 1) as u64;
            }
        }
        out = next;
    }
    out
}

/// Intersection numbers from the genus-expansion recursion on correlator arrays.
pub fn dvv_oracle(genus_max: usize, weight_max: u32) -> CorrelatorTable {
    let mut dvv = Dvv { memo: HashMap::new() };
    let mut entries = BTreeMap::new();
    for (g, k) in correlator_domain(genus_max, weight_max) {
        let v = dvv.corr(g, &k);
        entries.insert((g, k), v);
    }
    CorrelatorTable { genus_max, weight_max, entries }
}

fn truncation(genus_max: usize, weight_max: u32) -> Truncation {
    Truncation { genus_max, weight_max: Some(weight_max), euler_max: None }
}

/// `exp(Σ ℏ^{g-1} F_g)` with `F_g = Σ ⟨τ_I⟩_g s^I / |Aut I|`, around `q_1 = -1`.
pub fn wk_tau(table: &CorrelatorTable, genus_max: usize, weight_max: u32) -> Result<TameSeries, A1Error> {
    if table.genus_max < genus_max || table.weight_max < weight_max {
        return Err(A1Error::InsufficientTable {
            genus: genus_max,
            weight: weight_max,
            have_genus: table.genus_max,
            have_weight: table.weight_max,
        });
    }
    let mut f = TameSeries::around_dilaton(1, truncation(genus_max, weight_max));
    for (g, k) in correlator_domain(genus_max, weight_max) {
        let v = table.get(g, &k).ok_or_else(|| A1Error::MissingCorrelator { genus: g, indices: k.clone() })?;
        let mono = VarMono::new(k.iter().map(|&l| Var::new(0, l as u16)).collect());
        let c = v / mono.aut();
        f.add_term(g, mono, Cyclotomic::from_rational(c));
    }
    Ok(f)
}

/// `D(ℏ, q) ↦ D(ℏΔ, q√Δ)`, re-expanded around the moved base point.
pub fn rescale(f: &TameSeries, delta: &Rational) -> TameSeries {
    let root = Cyclotomic::sqrt_rational(delta);
    let root_inv = root.inv().expect("Δ is nonzero");
    let d = Cyclotomic::from_rational(delta.clone());
    let d_inv = d.inv().expect("Δ is nonzero");
    let mut out = f.clone();
    for (g, p) in out.genera.iter_mut().enumerate() {
        let genus_factor = if g == 0 { d_inv.clone() } else { d.pow(g as i64 - 1).expect("positive power") };
        for (m, c) in p.iter_mut() {
            let r = root.pow(m.len() as i64).expect("positive power");
            *c = &(&*c * &genus_factor) * &r;
        }
    }
    for c in out.base.values_mut() {
        *c = &*c * &root_inv;
    }
    out
}

type Graded = BTreeMap<(i64, VarMono), Cyclotomic>;

fn graded_add(p: &mut Graded, key: (i64, VarMono), c: Cyclotomic) {
    let e = p.entry(key).or_insert_with(Cyclotomic::zero);
    *e += &c;
}

fn graded_derivative(p: &Graded, v: Var) -> Graded {
    let d = VarMono::single(v);
    let mut out = Graded::new();
    for ((h, m), c) in p {
        if let Some((f, rest)) = m.differentiate(&d) {
            graded_add(&mut out, (*h, rest), c.scale(&int(f as i64)));
        }
    }
    out
}

fn graded_mul(a: &Graded, b: &Graded, weight_max: u32) -> Graded {
    let mut out = Graded::new();
    for ((h1, m1), c1) in a {
        for ((h2, m2), c2) in b {
            if m1.level_sum() + m2.level_sum() > weight_max {
                continue;
            }
            graded_add(&mut out, (h1 + h2, m1.mul(m2)), c1 * c2);
        }
    }
    out
}

/// One nonzero coefficient of `e^{-F} L_m e^{F}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residual {
    pub m: i64,
    pub genus: i64,
    pub monomial: String,
    pub value: Cyclotomic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnihilationReport {
    pub m_range: (i64, i64),
    pub genus_max: usize,
    pub weight_max: u32,
    pub rescale: Option<String>,
    /// Frontier-safe coefficients that received at least one contribution.
    pub checked: usize,
    pub residuals: Vec<Residual>,
}

impl AnnihilationReport {
    pub fn passed(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Frontier-safe coefficients of `e^{-F} L e^{F}` and how many were checked.
///
/// A coefficient at `ℏ^{g-1} s^I` is kept when every coefficient of `F` that can reach it
/// lies inside the truncation of `f`: its weight is at most `ℓ_z(I) + δ` and its genus at
/// most `g + γ`, with `δ` and `γ` read off from the terms of `L`.
fn residual(op: &NormalOrderedOperator, f: &TameSeries) -> Result<(usize, Graded), A1Error> {
    let weight_max = f.truncation.weight_max.expect("annihilation checks need a weight bound");
    let genus_max = f.truncation.genus_max as i64;
    if let Some(cap) = op.level_cap {
        // with cap > W every term able to reach a checked coefficient is present
        if (cap as u32) <= weight_max {
            return Err(A1Error::CapTooSmall { cap, weight: weight_max });
        }
    }
    let mut fg = Graded::new();
    for (g, p) in f.genera.iter().enumerate() {
        for (m, c) in p {
            fg.insert((g as i64 - 1, m.clone()), c.clone());
        }
    }
    let mut delta = i64::MIN;
    let mut gamma = i64::MIN;
    for (k, _) in op.terms() {
        if k.hbar_half % 2 != 0 {
            return Err(A1Error::HalfIntegralHbar);
        }
        if k.ders.is_empty() {
            continue;
        }
        let shifted: i64 = k.vars.vars().iter().filter(|v| f.base.contains_key(v)).map(|v| v.level as i64).sum();
        delta = delta.max(k.ders.level_sum() as i64 - k.vars.level_sum() as i64 + shifted);
        gamma = gamma.max(k.ders.len() as i64 - k.hbar_half as i64 / 2 - 1);
    }
    let delta = delta.max(0);
    let gamma = gamma.max(0);
    let out_weight = (weight_max as i64 - delta).max(-1);
    let safe = |h: i64, m: &VarMono| m.level_sum() as i64 <= out_weight && h + 1 + gamma <= genus_max;

    let mut first: BTreeMap<Var, Graded> = BTreeMap::new();
    let mut dcache: HashMap<VarMono, Graded> = HashMap::new();
    let mut out = Graded::new();
    for (k, c) in op.terms() {
        if out_weight < 0 {
            break;
        }
        // e^{-F} ∂^J e^F through D_{J+a} = ∂_a D_J + (∂_a F) D_J
        let d = match dcache.get(&k.ders) {
            Some(d) => d.clone(),
            None => {
                let mut d: Graded = BTreeMap::from([((0, VarMono::one()), Cyclotomic::one())]);
                let vars = k.ders.vars();
                for (i, v) in vars.iter().enumerate() {
                    let remaining: u32 = vars[i + 1..].iter().map(|x| x.level as u32).sum();
                    let bound = weight_max + remaining;
                    let fa = first.entry(*v).or_insert_with(|| graded_derivative(&fg, *v)).clone();
                    let mut next = graded_derivative(&d, *v);
                    for (key, val) in graded_mul(&fa, &d, bound) {
                        graded_add(&mut next, key, val);
                    }
                    next.retain(|(_, m), c| m.level_sum() <= bound && !c.is_zero());
                    d = next;
                }
                dcache.insert(k.ders.clone(), d.clone());
                d
            }
        };
        if d.is_empty() {
            continue;
        }
        // q^V = Π (s_v + c_v)
        let mut qv: Vec<(VarMono, Cyclotomic)> = vec![(VarMono::one(), c.clone())];
        for v in k.vars.vars() {
            let mut next = Vec::new();
            for (m, x) in &qv {
                next.push((m.mul(&VarMono::single(*v)), x.clone()));
                if let Some(b) = f.base.get(v) {
                    next.push((m.clone(), x * b));
                }
            }
            qv = next;
        }
        let hh = k.hbar_half as i64 / 2;
        for ((h, dm), dc) in &d {
            for (m, x) in &qv {
                let mono = dm.mul(m);
                if safe(h + hh, &mono) {
                    graded_add(&mut out, (h + hh, mono), x * dc);
                }
            }
        }
    }
    let checked = out.len();
    out.retain(|_, c| !c.is_zero());
    Ok((checked, out))
}

/// Checks `L_m f = 0` for every operator on every frontier-safe coefficient.
pub fn check_annihilation_with(ops: &[VirasoroOperator], f: &TameSeries) -> Result<AnnihilationReport, A1Error> {
    let results = maybe_parallel_map(ops, |l| residual(&l.op, f).map(|r| (l.m, r)));
    let mut checked = 0;
    let mut residuals = Vec::new();
    for r in results {
        let (m, (n, res)) = r?;
        checked += n;
        for ((h, mono), value) in res {
            let monomial = if mono.is_empty() { "1".to_string() } else { mono.to_string() };
            residuals.push(Residual { m, genus: h + 1, monomial, value });
        }
    }
    let m_range = (ops.iter().map(|l| l.m).min().unwrap_or(0), ops.iter().map(|l| l.m).max().unwrap_or(0));
    Ok(AnnihilationReport {
        m_range,
        genus_max: f.truncation.genus_max,
        weight_max: f.truncation.weight_max.unwrap_or(0),
        rescale: None,
        checked,
        residuals,
    })
}

/// The full run: oracle table, truncated tau-function, optional rescaling, and the check.
pub fn check_annihilation(
    ms: RangeInclusive<i64>,
    genus_max: usize,
    weight_max: u32,
    delta: Option<&Rational>,
) -> Result<AnnihilationReport, A1Error> {
    check_table_annihilation(&dvv_oracle(genus_max, weight_max), ms, delta)
}

/// Same as [`check_annihilation`] on a given correlator table, at its own truncation.
pub fn check_table_annihilation(
    table: &CorrelatorTable,
    ms: RangeInclusive<i64>,
    delta: Option<&Rational>,
) -> Result<AnnihilationReport, A1Error> {
    let mut f = wk_tau(table, table.genus_max, table.weight_max)?;
    if let Some(d) = delta {
        f = rescale(&f, d);
    }
    let ops = a1_virasoro_family(ms, &Rational::zero(), table.weight_max as u16 + 1)?;
    let mut report = check_annihilation_with(&ops, &f)?;
    report.rescale = delta.map(|d| d.to_string());
    Ok(report)
}

impl std::fmt::Display for A1Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "I^({})(λ - {}) = {:?} (λ - {})^{}", self.k, self.t, self.coeff(), self.t, self.exponent())
    }
}
