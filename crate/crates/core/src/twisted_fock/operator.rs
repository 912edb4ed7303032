//! Normally ordered differential operators in the variables `q_k^j` with
//! ℏ^{1/2}-graded coefficients and rational λ-powers, and the polynomials they act on.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::exact_arith::{gen_binomial, Cyclotomic, Rational};

/// The variable `q_k^j`: `colour = j`, `level = k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    pub colour: u16,
    pub level: u16,
}

impl Var {
    pub fn new(colour: u16, level: u16) -> Self {
        Var { colour, level }
    }
}

/// A sorted multiset of variables, used both for `q^I` and for `∂^J`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarMono(Vec<Var>);

impl VarMono {
    pub fn one() -> Self {
        VarMono(Vec::new())
    }

    pub fn new(mut vars: Vec<Var>) -> Self {
        vars.sort_unstable();
        VarMono(vars)
    }

    pub fn single(v: Var) -> Self {
        VarMono(vec![v])
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// `ℓ(I)`, the number of factors.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `ℓ_z(I) = Σ k`.
    pub fn level_sum(&self) -> u32 {
        self.0.iter().map(|v| v.level as u32).sum()
    }

    pub fn max_level(&self) -> Option<u16> {
        self.0.iter().map(|v| v.level).max()
    }

    pub fn count(&self, v: Var) -> usize {
        self.0.iter().filter(|w| **w == v).count()
    }

    pub fn mul(&self, other: &VarMono) -> VarMono {
        if other.0.is_empty() {
            return self.clone();
        }
        if self.0.is_empty() {
            return other.clone();
        }
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        VarMono::new(v)
    }

    /// Run-length form `(variable, multiplicity)`.
    pub fn runs(&self) -> Vec<(Var, usize)> {
        let mut out: Vec<(Var, usize)> = Vec::new();
        for v in &self.0 {
            match out.last_mut() {
                Some((w, n)) if w == v => *n += 1,
                _ => out.push((*v, 1)),
            }
        }
        out
    }

    /// `∂^J q^I = (falling factorial) q^{I-J}`, or `None` when `J ⊄ I`.
    pub fn differentiate(&self, ders: &VarMono) -> Option<(u64, VarMono)> {
        if ders.0.is_empty() {
            return Some((1, self.clone()));
        }
        let mut rest = self.0.clone();
        let mut factor: u64 = 1;
        for (v, n) in ders.runs() {
            let have = self.count(v);
            if have < n {
                return None;
            }
            for i in 0..n {
                factor *= (have - i) as u64;
            }
            for _ in 0..n {
                let pos = rest.iter().position(|w| *w == v).expect("present");
                rest.remove(pos);
            }
        }
        Some((factor, VarMono(rest)))
    }

    /// Multiplicity factorial `∏ m_v!`, the order of the automorphism group.
    pub fn aut(&self) -> Rational {
        let mut r = Rational::one();
        for (_, n) in self.runs() {
            for i in 2..=n {
                r *= Rational::from_integer((i as i64).into());
            }
        }
        r
    }
}

impl fmt::Display for VarMono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (v, n)) in self.runs().iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "q{}_{}", v.colour, v.level)?;
            if *n > 1 {
                write!(f, "^{n}")?;
            }
        }
        Ok(())
    }
}

/// A polynomial in the `q_k^j` with coefficients in `Q(ζ)[ℏ^{±1/2}]`.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct QPoly {
    terms: BTreeMap<(VarMono, i32), Cyclotomic>,
}

impl fmt::Debug for QPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for ((m, h), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            if *h != 0 {
                write!(f, " ħ^{}/2", h)?;
            }
            if !m.is_empty() {
                write!(f, " {m}")?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl QPoly {
    pub fn zero() -> Self {
        QPoly::default()
    }

    pub fn one() -> Self {
        QPoly::monomial(VarMono::one(), 0, Cyclotomic::one())
    }

    pub fn monomial(m: VarMono, hbar_half: i32, c: Cyclotomic) -> Self {
        let mut p = QPoly::zero();
        p.add_term(m, hbar_half, c);
        p
    }

    pub fn from_vars(vars: &[Var]) -> Self {
        QPoly::monomial(VarMono::new(vars.to_vec()), 0, Cyclotomic::one())
    }

    pub fn add_term(&mut self, m: VarMono, hbar_half: i32, c: Cyclotomic) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry((m, hbar_half)) {
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

    pub fn add_scaled(&mut self, other: &QPoly, c: &Cyclotomic) {
        for ((m, h), d) in &other.terms {
            self.add_term(m.clone(), *h, d * c);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&VarMono, i32, &Cyclotomic)> {
        self.terms.iter().map(|((m, h), c)| (m, *h, c))
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

    pub fn coeff(&self, m: &VarMono, hbar_half: i32) -> Cyclotomic {
        self.terms.get(&(m.clone(), hbar_half)).cloned().unwrap_or_else(Cyclotomic::zero)
    }

    pub fn max_level(&self) -> Option<u16> {
        self.terms.keys().filter_map(|(m, _)| m.max_level()).max()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(|(m, _)| m.len()).max().unwrap_or(0)
    }

    /// Largest `Σ (k + p_j)` over monomials, with `p_j = offsets[j]`.
    pub fn max_grade(&self, offsets: &[Rational]) -> Rational {
        self.terms.keys().map(|(m, _)| grade(m, offsets)).max().unwrap_or_else(Rational::zero)
    }
}

impl std::ops::Sub for &QPoly {
    type Output = QPoly;
    fn sub(self, rhs: &QPoly) -> QPoly {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::from_int(-1));
        out
    }
}

impl std::ops::Add for &QPoly {
    type Output = QPoly;
    fn add(self, rhs: &QPoly) -> QPoly {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::one());
        out
    }
}

/// Conformal grade of a monomial: `q_k^j` has grade `k + p_j`.
pub fn grade(m: &VarMono, offsets: &[Rational]) -> Rational {
    let mut g = Rational::zero();
    for v in m.vars() {
        g += Rational::from_integer((v.level as i64).into()) + &offsets[v.colour as usize];
    }
    g
}

/// Key of one operator term `λ^e ℏ^{h/2} q^I ∂^J`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpKey {
    pub lambda: Rational,
    pub hbar_half: i32,
    pub vars: VarMono,
    pub ders: VarMono,
}

/// Coefficients of a λ-series of polynomials, `Σ_e λ^e P_e`.
pub type LambdaSeries = BTreeMap<Rational, QPoly>;

/// A finite sum of normally ordered terms, and what was cut away to make it finite.
///
/// `level_cap = Some(D)` means terms containing `∂/∂q_k` with `k > D` were dropped, so the
/// operator is exact on polynomials in variables of level at most `D`. `window` records the
/// retained λ-range. `None` means nothing was dropped.
#[derive(Clone, PartialEq, Eq)]
pub struct NormalOrderedOperator {
    terms: BTreeMap<OpKey, Cyclotomic>,
    pub level_cap: Option<u16>,
    pub window: Option<(Rational, Rational)>,
}

impl fmt::Debug for NormalOrderedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "operator (cap {:?}, window {:?}):", self.level_cap, self.window)?;
        for (k, c) in &self.terms {
            writeln!(f, "  λ^{} ħ^{}/2 [{}] [∂ {}] : {}", k.lambda, k.hbar_half, k.vars, k.ders, c)?;
        }
        Ok(())
    }
}

impl Default for NormalOrderedOperator {
    fn default() -> Self {
        NormalOrderedOperator::zero()
    }
}

impl NormalOrderedOperator {
    pub fn zero() -> Self {
        NormalOrderedOperator { terms: BTreeMap::new(), level_cap: None, window: None }
    }

    pub fn identity() -> Self {
        NormalOrderedOperator::scalar(Cyclotomic::one(), Rational::zero())
    }

    /// `c · λ^e`.
    pub fn scalar(c: Cyclotomic, e: Rational) -> Self {
        let mut op = NormalOrderedOperator::zero();
        op.add_term(OpKey { lambda: e, hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() }, c);
        op
    }

    /// Multiplication by `ℏ^{-1/2} q` for each listed variable.
    pub fn multiplication(vars: &[Var]) -> Self {
        let mut op = NormalOrderedOperator::zero();
        op.add_term(
            OpKey {
                lambda: Rational::zero(),
                hbar_half: -(vars.len() as i32),
                vars: VarMono::new(vars.to_vec()),
                ders: VarMono::one(),
            },
            Cyclotomic::one(),
        );
        op
    }

    /// `ℏ^{1/2} ∂/∂q` for each listed variable.
    pub fn derivation(vars: &[Var]) -> Self {
        let mut op = NormalOrderedOperator::zero();
        op.add_term(
            OpKey {
                lambda: Rational::zero(),
                hbar_half: vars.len() as i32,
                vars: VarMono::one(),
                ders: VarMono::new(vars.to_vec()),
            },
            Cyclotomic::one(),
        );
        op
    }

    pub fn add_term(&mut self, key: OpKey, c: Cyclotomic) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
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

    pub fn add_scaled(&mut self, other: &NormalOrderedOperator, c: &Cyclotomic) {
        for (k, d) in &other.terms {
            self.add_term(k.clone(), d * c);
        }
        self.level_cap = min_cap(self.level_cap, other.level_cap);
        self.window = meet_window(&self.window, &other.window);
    }

    pub fn scale(&self, c: &Cyclotomic) -> NormalOrderedOperator {
        let mut out = NormalOrderedOperator { terms: BTreeMap::new(), ..self.clone() };
        for (k, d) in &self.terms {
            out.add_term(k.clone(), d * c);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&OpKey, &Cyclotomic)> {
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

    pub fn coeff(&self, key: &OpKey) -> Cyclotomic {
        self.terms.get(key).cloned().unwrap_or_else(Cyclotomic::zero)
    }

    /// The distinct λ-exponents present.
    pub fn lambda_powers(&self) -> Vec<Rational> {
        let mut v: Vec<Rational> = self.terms.keys().map(|k| k.lambda.clone()).collect();
        v.dedup();
        v
    }

    /// Coefficient of `λ^e`, as a λ-free operator.
    pub fn mode(&self, e: &Rational) -> NormalOrderedOperator {
        let mut out = NormalOrderedOperator { terms: BTreeMap::new(), level_cap: self.level_cap, window: None };
        for (k, c) in &self.terms {
            if &k.lambda == e {
                out.terms.insert(OpKey { lambda: Rational::zero(), ..k.clone() }, c.clone());
            }
        }
        out
    }

    /// Multiplies by `λ^e`.
    pub fn shift_lambda(&self, e: &Rational) -> NormalOrderedOperator {
        let window = self.window.as_ref().map(|(a, b)| (a + e, b + e));
        let terms = self.terms.iter().map(|(k, c)| (OpKey { lambda: &k.lambda + e, ..k.clone() }, c.clone())).collect();
        NormalOrderedOperator { terms, level_cap: self.level_cap, window }
    }

    /// Drops terms outside `[lo, hi]` and records the window.
    pub fn restrict(&self, lo: &Rational, hi: &Rational) -> NormalOrderedOperator {
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| &k.lambda >= lo && &k.lambda <= hi)
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        let window = meet_window(&self.window, &Some((lo.clone(), hi.clone())));
        NormalOrderedOperator { terms, level_cap: self.level_cap, window }
    }

    /// Drops terms differentiating in variables of level above `cap`.
    pub fn restrict_levels(&self, cap: u16) -> NormalOrderedOperator {
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.ders.max_level().is_none_or(|l| l <= cap))
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        NormalOrderedOperator { terms, level_cap: min_cap(self.level_cap, Some(cap)), window: self.window.clone() }
    }

    /// Divided derivative `∂_λ^k / k!`.
    pub fn divided_derivative(&self, k: u32) -> NormalOrderedOperator {
        if k == 0 {
            return self.clone();
        }
        let kr = Rational::from_integer((k as i64).into());
        let mut out = NormalOrderedOperator {
            terms: BTreeMap::new(),
            level_cap: self.level_cap,
            window: self.window.as_ref().map(|(a, b)| (a - &kr, b - &kr)),
        };
        for (key, c) in &self.terms {
            let b = gen_binomial(&key.lambda, k);
            if b.is_zero() {
                continue;
            }
            out.add_term(OpKey { lambda: &key.lambda - &kr, ..key.clone() }, c.scale(&b));
        }
        out
    }

    /// `:A B:` with the result restricted to `[lo, hi]`.
    pub fn normal_product(&self, other: &NormalOrderedOperator, lo: &Rational, hi: &Rational) -> NormalOrderedOperator {
        let mut out = NormalOrderedOperator {
            terms: BTreeMap::new(),
            level_cap: min_cap(self.level_cap, other.level_cap),
            window: Some((lo.clone(), hi.clone())),
        };
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let e = &ka.lambda + &kb.lambda;
                if &e < lo || &e > hi {
                    continue;
                }
                out.add_term(
                    OpKey {
                        lambda: e,
                        hbar_half: ka.hbar_half + kb.hbar_half,
                        vars: ka.vars.mul(&kb.vars),
                        ders: ka.ders.mul(&kb.ders),
                    },
                    ca * cb,
                );
            }
        }
        out
    }

    /// Applies the operator to a polynomial, collecting the result by λ-power.
    ///
    /// Exact whenever every variable of `p` has level at most `level_cap`.
    pub fn apply(&self, p: &QPoly) -> LambdaSeries {
        let mut out: LambdaSeries = BTreeMap::new();
        for (k, c) in &self.terms {
            let mut acc: Option<QPoly> = None;
            for (m, h, d) in p.terms() {
                if let Some((f, rest)) = m.differentiate(&k.ders) {
                    let coeff = (c * d).scale(&Rational::from_integer((f as i64).into()));
                    acc.get_or_insert_with(QPoly::zero).add_term(rest.mul(&k.vars), h + k.hbar_half, coeff);
                }
            }
            if let Some(acc) = acc {
                out.entry(k.lambda.clone()).or_default().add_scaled(&acc, &Cyclotomic::one());
            }
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    /// Applies a λ-free operator (all terms at `λ^0`).
    pub fn apply_mode(&self, p: &QPoly) -> QPoly {
        let mut out = QPoly::zero();
        for (_, q) in self.apply(p) {
            out.add_scaled(&q, &Cyclotomic::one());
        }
        out
    }

    /// Largest level among variables and derivatives.
    pub fn max_level(&self) -> Option<u16> {
        self.terms.keys().filter_map(|k| k.vars.max_level().max(k.ders.max_level())).max()
    }

    pub fn to_json(&self) -> Vec<OpTermJson> {
        self.terms
            .iter()
            .map(|(k, c)| OpTermJson {
                i: k.vars.vars().iter().map(|v| [v.colour, v.level]).collect(),
                j: k.ders.vars().iter().map(|v| [v.colour, v.level]).collect(),
                hbar_half: k.hbar_half,
                lambda_pow: [k.lambda.numer().to_string(), k.lambda.denom().to_string()],
                coeff: c.clone(),
            })
            .collect()
    }

    pub fn from_json(items: &[OpTermJson]) -> Result<Self, String> {
        let mut op = NormalOrderedOperator::zero();
        for t in items {
            let lambda = crate::exact_arith::rational::serde_rational::parse_pair(&t.lambda_pow[0], &t.lambda_pow[1])?;
            let vars = VarMono::new(t.i.iter().map(|[c, l]| Var::new(*c, *l)).collect());
            let ders = VarMono::new(t.j.iter().map(|[c, l]| Var::new(*c, *l)).collect());
            op.add_term(OpKey { lambda, hbar_half: t.hbar_half, vars, ders }, t.coeff.clone());
        }
        Ok(op)
    }
}

impl std::ops::Sub for &NormalOrderedOperator {
    type Output = NormalOrderedOperator;
    fn sub(self, rhs: &NormalOrderedOperator) -> NormalOrderedOperator {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::from_int(-1));
        out
    }
}

impl std::ops::Add for &NormalOrderedOperator {
    type Output = NormalOrderedOperator;
    fn add(self, rhs: &NormalOrderedOperator) -> NormalOrderedOperator {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::one());
        out
    }
}

/// JSON form of one operator term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTermJson {
    #[serde(rename = "I")]
    pub i: Vec<[u16; 2]>,
    #[serde(rename = "J")]
    pub j: Vec<[u16; 2]>,
    pub hbar_half: i32,
    pub lambda_pow: [String; 2],
    pub coeff: Cyclotomic,
}

pub(crate) fn min_cap(a: Option<u16>, b: Option<u16>) -> Option<u16> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn meet_window(a: &Option<(Rational, Rational)>, b: &Option<(Rational, Rational)>) -> Option<(Rational, Rational)> {
    match (a, b) {
        (Some((a0, a1)), Some((b0, b1))) => Some((a0.clone().max(b0.clone()), a1.clone().min(b1.clone()))),
        (Some(w), None) | (None, Some(w)) => Some(w.clone()),
        (None, None) => None,
    }
}

/// Which adic topology makes the contraction sum of a composition converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Expansion at λ = ∞; the first operator's coefficients decay as the number of
    /// contracted derivatives grows.
    AtInfinity,
    /// Expansion at a finite critical value.
    AtPoint,
}

/// Composition `A(μ) ∘ B(λ)`: coefficients of `μ^a λ^b ℏ^{h/2} q^I ∂^J`.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct BiOperator {
    terms: BTreeMap<(Rational, OpKey), Cyclotomic>,
    pub level_cap: Option<u16>,
}

impl fmt::Debug for BiOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bi-operator (cap {:?}):", self.level_cap)?;
        for ((mu, k), c) in &self.terms {
            writeln!(f, "  μ^{} λ^{} ħ^{}/2 [{}] [∂ {}] : {}", mu, k.lambda, k.hbar_half, k.vars, k.ders, c)?;
        }
        Ok(())
    }
}

impl BiOperator {
    fn add_term(&mut self, mu: Rational, key: OpKey, c: Cyclotomic) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry((mu, key)) {
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

    pub fn terms(&self) -> impl Iterator<Item = (&Rational, &OpKey, &Cyclotomic)> {
        self.terms.iter().map(|((m, k), c)| (m, k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `μ^a`, an operator in λ.
    pub fn at_mu_power(&self, a: &Rational) -> NormalOrderedOperator {
        let mut out = NormalOrderedOperator::zero();
        for ((m, k), c) in &self.terms {
            if m == a {
                out.add_term(k.clone(), c.clone());
            }
        }
        out.level_cap = self.level_cap;
        out
    }

    /// Exchanges the roles of `μ` and `λ`.
    pub fn transpose(&self) -> BiOperator {
        let mut out = BiOperator { terms: BTreeMap::new(), level_cap: self.level_cap };
        for ((m, k), c) in &self.terms {
            out.add_term(k.lambda.clone(), OpKey { lambda: m.clone(), ..k.clone() }, c.clone());
        }
        out
    }

    pub fn add_scaled(&mut self, other: &BiOperator, c: &Cyclotomic) {
        for ((m, k), d) in &other.terms {
            self.add_term(m.clone(), k.clone(), d * c);
        }
        self.level_cap = min_cap(self.level_cap, other.level_cap);
    }
}

impl std::ops::Sub for &BiOperator {
    type Output = BiOperator;
    fn sub(self, rhs: &BiOperator) -> BiOperator {
        let mut out = self.clone();
        out.add_scaled(rhs, &Cyclotomic::from_int(-1));
        out
    }
}

/// Every way of contracting `∂^J` (left) against `q^K` (right): `(multiplicity, J - M, K - M)`.
fn contractions(ders: &VarMono, vars: &VarMono) -> Vec<(u64, VarMono, VarMono)> {
    // per shared variable v: ∂^j q^k = Σ_m C(j,m) C(k,m) m! q^{k-m} ∂^{j-m}
    let druns = ders.runs();
    let mut out: Vec<(u64, Vec<Var>, Vec<Var>)> = vec![(1, Vec::new(), Vec::new())];
    let vruns = vars.runs();
    let mut seen: Vec<Var> = Vec::new();
    for (v, j) in &druns {
        seen.push(*v);
        let k = vruns.iter().find(|(w, _)| w == v).map(|(_, n)| *n).unwrap_or(0);
        let mut next = Vec::new();
        for (f, dl, vl) in &out {
            for m in 0..=(*j).min(k) {
                let c = binom_u64(*j, m) * binom_u64(k, m) * fact_u64(m);
                let mut dl2 = dl.clone();
                dl2.extend(std::iter::repeat_n(*v, j - m));
                let mut vl2 = vl.clone();
                vl2.extend(std::iter::repeat_n(*v, k - m));
                next.push((f * c, dl2, vl2));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(f, dl, mut vl)| {
            for (w, n) in &vruns {
                if !seen.contains(w) {
                    vl.extend(std::iter::repeat_n(*w, *n));
                }
            }
            (f, VarMono::new(dl), VarMono::new(vl))
        })
        .collect()
}

fn binom_u64(n: usize, k: usize) -> u64 {
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

fn fact_u64(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Formal composition `A(μ) ∘ B(λ)`, normally ordered.
///
/// With [`Topology::AtInfinity`] the contraction sum is finite for the stored terms; the
/// result keeps only terms whose derivatives have level at most the largest `L` such that
/// every term of `B` differentiating only up to level `L` creates variables of level at most
/// the cap of `A`. [`Topology::AtPoint`] is only accepted when neither input was truncated.
pub fn compose(
    a: &NormalOrderedOperator,
    b: &NormalOrderedOperator,
    topology: Topology,
) -> Result<BiOperator, super::TwistedError> {
    let truncated = |op: &NormalOrderedOperator| op.level_cap.is_some() || op.window.is_some();
    let out_cap = match topology {
        Topology::AtPoint => {
            if truncated(a) || truncated(b) {
                return Err(super::TwistedError::NonConvergent(
                    "contraction sum at a finite point needs untruncated operators".into(),
                ));
            }
            None
        }
        Topology::AtInfinity => match a.level_cap {
            None => b.level_cap,
            Some(da) => {
                // largest L with: every B-term whose derivatives are ≤ L has variables ≤ da
                let mut bound = b.level_cap.map(|x| x as i64).unwrap_or(i64::MAX);
                bound = bound.min(da as i64);
                for k in b.terms.keys() {
                    let top_var = k.vars.max_level().map(|x| x as i64).unwrap_or(-1);
                    if top_var > da as i64 {
                        let top_der = k.ders.max_level().map(|x| x as i64).unwrap_or(-1);
                        bound = bound.min(top_der - 1);
                    }
                }
                if bound < 0 {
                    return Err(super::TwistedError::NonConvergent(format!(
                        "first operator is truncated at level {da}, below what the second creates"
                    )));
                }
                Some(bound.min(u16::MAX as i64) as u16)
            }
        },
    };
    let mut out = BiOperator { terms: BTreeMap::new(), level_cap: out_cap };
    for (ka, ca) in &a.terms {
        for (kb, cb) in &b.terms {
            let c = ca * cb;
            for (f, dl, vr) in contractions(&ka.ders, &kb.vars) {
                let ders = dl.mul(&kb.ders);
                if let Some(cap) = out_cap {
                    if ders.max_level().is_some_and(|l| l > cap) {
                        continue;
                    }
                }
                let key = OpKey {
                    lambda: kb.lambda.clone(),
                    hbar_half: ka.hbar_half + kb.hbar_half,
                    vars: ka.vars.mul(&vr),
                    ders,
                };
                out.add_term(ka.lambda.clone(), key, c.scale(&Rational::from_integer((f as i64).into())));
            }
        }
    }
    Ok(out)
}
