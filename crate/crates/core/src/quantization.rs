//! The symplectic loop space `H((z^{-1}))`, quantization of linear and quadratic
//! Hamiltonians, and the actions of `Ŝ^{-1}` and `R̂` on asymptotical functions.
//!
//! Vectors of `H` are written in a basis `∂_1..∂_N` with Gram matrix `η`; the variable
//! `q_k^i` is [`Var`] `{ colour: i, level: k }`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_arith::{factorial, int, Cyclotomic, Rational};
use crate::root_system::rational_inverse;
use crate::twisted_fock::{NormalOrderedOperator, OpKey, Var, VarMono};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuantizationError {
    #[error("A(z) is not infinitesimally symplectic at z^{0}")]
    NotInfinitesimallySymplectic(i32),
    #[error("series fails the symplectic condition at order {0}")]
    NotSymplectic(usize),
    #[error("metric is singular")]
    SingularMetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("truncation too coarse: {0}")]
    TruncationExceeded(String),
    #[error("input is not tame: genus {genus} monomial {mono}")]
    NotTame { genus: usize, mono: String },
    #[error("unstable term at genus {genus}: {mono}")]
    Unstable { genus: usize, mono: String },
    #[error("expected a series of kind {0:?}")]
    WrongKind(SeriesKind),
}

pub type Matrix = Vec<Vec<Rational>>;

fn identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect()).collect()
}

fn zero_matrix(n: usize) -> Matrix {
    vec![vec![Rational::zero(); n]; n]
}

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    let mut out = vec![vec![Rational::zero(); m]; n];
    for i in 0..n {
        for (k, bk) in b.iter().enumerate() {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..m {
                out[i][j] += &a[i][k] * &bk[j];
            }
        }
    }
    out
}

fn mat_add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn mat_scale(a: &Matrix, c: &Rational) -> Matrix {
    a.iter().map(|r| r.iter().map(|x| x * c).collect()).collect()
}

fn transpose(a: &Matrix) -> Matrix {
    let n = a.len();
    let m = a.first().map_or(0, |r| r.len());
    (0..m).map(|j| (0..n).map(|i| a[i][j].clone()).collect()).collect()
}

fn is_zero_matrix(a: &Matrix) -> bool {
    a.iter().all(|r| r.iter().all(|x| x.is_zero()))
}

/// The pairing on `H` in the basis `∂_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metric {
    eta: Matrix,
    inv: Matrix,
}

impl Metric {
    pub fn new(eta: Matrix) -> Result<Self, QuantizationError> {
        let inv = rational_inverse(&eta).ok_or(QuantizationError::SingularMetric)?;
        Ok(Metric { eta, inv })
    }

    pub fn identity(n: usize) -> Self {
        Metric { eta: identity(n), inv: identity(n) }
    }

    pub fn rank(&self) -> usize {
        self.eta.len()
    }

    pub fn gram(&self) -> &Matrix {
        &self.eta
    }

    /// `(u, v) = uᵀ η v`.
    pub fn pair(&self, u: &[Cyclotomic], v: &[Cyclotomic]) -> Cyclotomic {
        let mut s = Cyclotomic::zero();
        for (i, ui) in u.iter().enumerate() {
            if ui.is_zero() {
                continue;
            }
            for (j, vj) in v.iter().enumerate() {
                if !self.eta[i][j].is_zero() && !vj.is_zero() {
                    s += &(ui * vj).scale(&self.eta[i][j]);
                }
            }
        }
        s
    }

    /// Adjoint `M† = η^{-1} Mᵀ η`, so that `(M u, v) = (u, M† v)`.
    pub fn adjoint(&self, m: &Matrix) -> Matrix {
        mat_mul(&mat_mul(&self.inv, &transpose(m)), &self.eta)
    }

    /// Coordinates of the dual vector `∂^i`.
    pub fn dual_basis(&self, i: usize) -> Vec<Rational> {
        (0..self.rank()).map(|a| self.inv[a][i].clone()).collect()
    }
}

/// An element of `H((z^{-1}))` with finitely many nonzero coefficients, stored by z-power.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoopVector {
    rank: usize,
    coeffs: BTreeMap<i32, Vec<Cyclotomic>>,
}

impl LoopVector {
    pub fn zero(rank: usize) -> Self {
        LoopVector { rank, coeffs: BTreeMap::new() }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Adds `v · z^n`.
    pub fn add(&mut self, n: i32, v: &[Cyclotomic]) {
        assert_eq!(v.len(), self.rank);
        let e = self.coeffs.entry(n).or_insert_with(|| vec![Cyclotomic::zero(); v.len()]);
        for (a, b) in e.iter_mut().zip(v) {
            *a += b;
        }
        if e.iter().all(|x| x.is_zero()) {
            self.coeffs.remove(&n);
        }
    }

    /// `∂_i z^k`.
    pub fn plus_basis(rank: usize, i: usize, k: u32) -> Self {
        let mut v = vec![Cyclotomic::zero(); rank];
        v[i] = Cyclotomic::one();
        let mut out = LoopVector::zero(rank);
        out.add(k as i32, &v);
        out
    }

    /// `∂^i (-z)^{-k-1}`.
    pub fn minus_basis(metric: &Metric, i: usize, k: u32) -> Self {
        let sign = if k.is_multiple_of(2) { -Rational::one() } else { Rational::one() };
        let v: Vec<Cyclotomic> = metric.dual_basis(i).iter().map(|x| Cyclotomic::from_rational(x * &sign)).collect();
        let mut out = LoopVector::zero(metric.rank());
        out.add(-(k as i32) - 1, &v);
        out
    }

    pub fn coeff(&self, n: i32) -> Vec<Cyclotomic> {
        self.coeffs.get(&n).cloned().unwrap_or_else(|| vec![Cyclotomic::zero(); self.rank])
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &Vec<Cyclotomic>)> {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    /// The Darboux coordinate `q_k^i(φ)`.
    pub fn q(&self, k: u32, i: usize) -> Cyclotomic {
        self.coeff(k as i32)[i].clone()
    }

    /// The Darboux coordinate `p_{k,i}(φ) = (-1)^{k+1} (φ_{-k-1}, ∂_i)`.
    pub fn p(&self, metric: &Metric, k: u32, i: usize) -> Cyclotomic {
        let mut e = vec![Cyclotomic::zero(); self.rank];
        e[i] = Cyclotomic::one();
        let v = metric.pair(&self.coeff(-(k as i32) - 1), &e);
        if k.is_multiple_of(2) {
            -&v
        } else {
            v
        }
    }

    /// `A(z) φ(z)`, with `A = Σ_n A_n z^n`.
    pub fn apply(&self, a: &[(i32, Matrix)]) -> LoopVector {
        let mut out = LoopVector::zero(self.rank);
        for (n, m) in a {
            for (k, v) in &self.coeffs {
                let w: Vec<Cyclotomic> = (0..self.rank)
                    .map(|r| {
                        let mut s = Cyclotomic::zero();
                        for (c, vc) in v.iter().enumerate() {
                            if !m[r][c].is_zero() {
                                s += &vc.scale(&m[r][c]);
                            }
                        }
                        s
                    })
                    .collect();
                out.add(n + k, &w);
            }
        }
        out
    }
}

/// `Ω(φ1, φ2) = Res_z (φ1(-z), φ2(z))`.
pub fn omega_pairing(metric: &Metric, a: &LoopVector, b: &LoopVector) -> Cyclotomic {
    let mut s = Cyclotomic::zero();
    for (n, v) in a.terms() {
        let w = b.coeff(-1 - n);
        let t = metric.pair(v, &w);
        if n % 2 == 0 {
            s += &t;
        } else {
            s -= &t;
        }
    }
    s
}

/// `φ̂ = -ℏ^{1/2} Σ q_k^i(φ) ∂/∂q_k^i + ℏ^{-1/2} Σ p_{k,i}(φ) q_k^i`.
pub fn quantize_linear(metric: &Metric, phi: &LoopVector) -> NormalOrderedOperator {
    let mut out = NormalOrderedOperator::zero();
    let zero = Rational::zero();
    for (n, v) in phi.terms() {
        for i in 0..metric.rank() {
            if n >= 0 {
                let var = Var::new(i as u16, n as u16);
                let key =
                    OpKey { lambda: zero.clone(), hbar_half: 1, vars: VarMono::one(), ders: VarMono::single(var) };
                out.add_term(key, -&v[i]);
            } else {
                let k = (-n - 1) as u32;
                let var = Var::new(i as u16, k as u16);
                let key =
                    OpKey { lambda: zero.clone(), hbar_half: -1, vars: VarMono::single(var), ders: VarMono::one() };
                out.add_term(key, phi.p(metric, k, i));
            }
        }
    }
    out
}

/// A Darboux coordinate function on the loop space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Darboux {
    /// `p_{k,i}`
    P(Var),
    /// `q_k^i`
    Q(Var),
}

/// A quadratic function in Darboux coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuadraticHamiltonian {
    terms: BTreeMap<(Darboux, Darboux), Cyclotomic>,
}

impl QuadraticHamiltonian {
    pub fn add(&mut self, a: Darboux, b: Darboux, c: Cyclotomic) {
        let k = if a <= b { (a, b) } else { (b, a) };
        let e = self.terms.entry(k).or_insert_with(Cyclotomic::zero);
        *e += &c;
        if e.is_zero() {
            self.terms.remove(&k);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(Darboux, Darboux), &Cyclotomic)> {
        self.terms.iter()
    }

    /// `h_A(φ) = ½ Ω(Aφ, φ)` restricted to coordinates of level `≤ max_level`.
    pub fn from_infinitesimal(
        metric: &Metric,
        a: &[(i32, Matrix)],
        max_level: u16,
    ) -> Result<QuadraticHamiltonian, QuantizationError> {
        let n = metric.rank();
        for (p, m) in a {
            if m.len() != n {
                return Err(QuantizationError::RankMismatch { expected: n, got: m.len() });
            }
            let sign = if p % 2 == 0 { Rational::one() } else { -Rational::one() };
            if !is_zero_matrix(&mat_add(&mat_scale(&metric.adjoint(m), &sign), m)) {
                return Err(QuantizationError::NotInfinitesimallySymplectic(*p));
            }
        }
        let mut basis: Vec<(Darboux, LoopVector)> = Vec::new();
        for k in 0..=max_level {
            for i in 0..n {
                // the coordinate q_k^i is dual to ∂_i z^k, and p_{k,i} to ∂^i(-z)^{-k-1}
                basis.push((Darboux::Q(Var::new(i as u16, k)), LoopVector::plus_basis(n, i, k as u32)));
                basis.push((Darboux::P(Var::new(i as u16, k)), LoopVector::minus_basis(metric, i, k as u32)));
            }
        }
        let images: Vec<LoopVector> = basis.iter().map(|(_, e)| e.apply(a)).collect();
        let half = Rational::new(1.into(), 2.into());
        let mut h = QuadraticHamiltonian::default();
        for (x, (da, _)) in basis.iter().enumerate() {
            for (db, eb) in &basis {
                let w = omega_pairing(metric, &images[x], eb);
                if !w.is_zero() {
                    h.add(*da, *db, w.scale(&half));
                }
            }
        }
        Ok(h)
    }

    /// `(pp)^ = ℏ∂∂`, `(pq)^ = (qp)^ = q∂`, `(qq)^ = qq/ℏ`.
    pub fn quantize(&self) -> NormalOrderedOperator {
        let mut out = NormalOrderedOperator::zero();
        let zero = Rational::zero();
        for ((a, b), c) in &self.terms {
            let (hbar_half, vars, ders) = match (a, b) {
                (Darboux::P(x), Darboux::P(y)) => (2, vec![], vec![*x, *y]),
                (Darboux::P(x), Darboux::Q(y)) | (Darboux::Q(y), Darboux::P(x)) => (0, vec![*y], vec![*x]),
                (Darboux::Q(x), Darboux::Q(y)) => (-2, vec![*x, *y], vec![]),
            };
            out.add_term(
                OpKey { lambda: zero.clone(), hbar_half, vars: VarMono::new(vars), ders: VarMono::new(ders) },
                c.clone(),
            );
        }
        out
    }
}

/// Whether a series expands in `z^{-1}` (calibration) or in `z` (R-matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    /// `1 + S_1 z^{-1} + S_2 z^{-2} + …`
    S,
    /// `1 + R_1 z + R_2 z^2 + …`
    R,
}

/// A symplectic matrix series truncated after `coeffs.len() - 1` terms; `coeffs[0] = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymplecticSeries {
    pub kind: SeriesKind,
    coeffs: Vec<Matrix>,
}

impl SymplecticSeries {
    /// Checks `Σ_{k+l=n} (-1)^k M_k† M_l = δ_{n,0}` for every `n` up to the truncation order.
    pub fn new(kind: SeriesKind, metric: &Metric, coeffs: Vec<Matrix>) -> Result<Self, QuantizationError> {
        let n = metric.rank();
        if coeffs.is_empty() || coeffs[0] != identity(n) {
            return Err(QuantizationError::NotSymplectic(0));
        }
        for m in &coeffs {
            if m.len() != n {
                return Err(QuantizationError::RankMismatch { expected: n, got: m.len() });
            }
        }
        let s = SymplecticSeries { kind, coeffs };
        for order in 1..s.coeffs.len() {
            let mut acc = zero_matrix(n);
            for k in 0..=order {
                let t = mat_mul(&metric.adjoint(&s.coeffs[k]), &s.coeffs[order - k]);
                let sign = if k % 2 == 0 { Rational::one() } else { -Rational::one() };
                acc = mat_add(&acc, &mat_scale(&t, &sign));
            }
            if !is_zero_matrix(&acc) {
                return Err(QuantizationError::NotSymplectic(order));
            }
        }
        Ok(s)
    }

    /// `exp(A z^{∓1})` for a matrix `A` with `A† = A`, truncated at `order`.
    pub fn exponential(kind: SeriesKind, metric: &Metric, a: &Matrix, order: usize) -> Result<Self, QuantizationError> {
        let n = metric.rank();
        let mut coeffs = vec![identity(n)];
        let mut pow = identity(n);
        for j in 1..=order {
            pow = mat_mul(&pow, a);
            coeffs.push(mat_scale(&pow, &factorial(j as u32).recip()));
        }
        SymplecticSeries::new(kind, metric, coeffs)
    }

    /// `S_t(z) = e^{t/z}` in rank one.
    pub fn a1_calibration(t: &Rational, order: usize) -> Self {
        SymplecticSeries::exponential(SeriesKind::S, &Metric::identity(1), &vec![vec![t.clone()]], order)
            .expect("scalar exponentials are symplectic")
    }

    pub fn identity(kind: SeriesKind, rank: usize) -> Self {
        SymplecticSeries { kind, coeffs: vec![identity(rank)] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn rank(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeff(&self, j: usize) -> Matrix {
        self.coeffs.get(j).cloned().unwrap_or_else(|| zero_matrix(self.rank()))
    }

    /// The inverse series, to the same order.
    pub fn inverse(&self) -> SymplecticSeries {
        let n = self.rank();
        let mut inv = vec![identity(n)];
        for j in 1..=self.order() {
            let mut acc = zero_matrix(n);
            for i in 1..=j {
                acc = mat_add(&acc, &mat_mul(&self.coeffs[i], &inv[j - i]));
            }
            inv.push(mat_scale(&acc, &-Rational::one()));
        }
        SymplecticSeries { kind: self.kind, coeffs: inv }
    }
}

/// Coefficients `C_{kl}` of `(M(x)† M(y) - 1)/(x + y) = Σ C_{kl} x^k y^l` with `k + l < order`.
fn divided_table(series: &SymplecticSeries, metric: &Metric) -> BTreeMap<(usize, usize), Matrix> {
    let order = series.order();
    let n = series.rank();
    let num = |a: usize, b: usize| -> Matrix {
        let mut m = mat_mul(&metric.adjoint(&series.coeff(a)), &series.coeff(b));
        if a == 0 && b == 0 {
            m = mat_add(&m, &mat_scale(&identity(n), &-Rational::one()));
        }
        m
    };
    let mut out: BTreeMap<(usize, usize), Matrix> = BTreeMap::new();
    for s in 0..order {
        // N_{a+1,b} = C_{a,b} + C_{a+1,b-1}
        for a in (0..=s).rev() {
            let b = s - a;
            let mut c = num(a + 1, b);
            if b > 0 {
                if let Some(prev) = out.get(&(a + 1, b - 1)) {
                    c = mat_add(&c, &mat_scale(prev, &-Rational::one()));
                }
            }
            out.insert((a, b), c);
        }
    }
    out
}

/// `W_{kl}` from `Σ W_{kl} z^{-k} w^{-l} = (ᵀS(z)S(w) - 1)/(z^{-1} + w^{-1})`, for `k + l < order`.
pub fn w_coeffs(s: &SymplecticSeries, metric: &Metric) -> Result<BTreeMap<(usize, usize), Matrix>, QuantizationError> {
    if s.kind != SeriesKind::S {
        return Err(QuantizationError::WrongKind(SeriesKind::S));
    }
    Ok(divided_table(s, metric))
}

/// `V_{kl}` from `Σ (-1)^{k+l} V_{kl} z^k w^l = (ᵀR(z)R(w) - 1)/(z + w)`, for `k + l < order`.
pub fn v_coeffs(r: &SymplecticSeries, metric: &Metric) -> Result<BTreeMap<(usize, usize), Matrix>, QuantizationError> {
    if r.kind != SeriesKind::R {
        return Err(QuantizationError::WrongKind(SeriesKind::R));
    }
    Ok(divided_table(r, metric)
        .into_iter()
        .map(|((k, l), m)| {
            let sign = if (k + l) % 2 == 0 { Rational::one() } else { -Rational::one() };
            ((k, l), mat_scale(&m, &sign))
        })
        .collect())
}

/// A polynomial in the shifted variables.
pub type Poly = BTreeMap<VarMono, Cyclotomic>;

fn poly_add_term(p: &mut Poly, m: VarMono, c: Cyclotomic) {
    if c.is_zero() {
        return;
    }
    let e = p.entry(m.clone()).or_insert_with(Cyclotomic::zero);
    *e += &c;
    if e.is_zero() {
        p.remove(&m);
    }
}

fn poly_derivative(p: &Poly, v: Var) -> Poly {
    let mut out = Poly::new();
    let d = VarMono::single(v);
    for (m, c) in p {
        if let Some((f, rest)) = m.differentiate(&d) {
            poly_add_term(&mut out, rest, c.scale(&int(f as i64)));
        }
    }
    out
}

/// Truncation of a [`TameSeries`]. `None` means unbounded in that direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub genus_max: usize,
    /// Bound on the ψ-weight `ℓ_z(I) = Σ k`.
    pub weight_max: Option<u32>,
    /// Bound on `2g - 2 + ℓ(I)`.
    pub euler_max: Option<i64>,
}

impl Truncation {
    pub fn keeps(&self, genus: usize, m: &VarMono) -> bool {
        genus <= self.genus_max
            && self.weight_max.is_none_or(|w| m.level_sum() <= w)
            && self.euler_max.is_none_or(|e| 2 * genus as i64 - 2 + m.len() as i64 <= e)
    }
}

/// `exp(Σ_g ℏ^{g-1} F^{(g)})` with each `F^{(g)}` a polynomial in `s = q - c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TameSeries {
    pub rank: usize,
    /// The base point `c`; the dilaton shift is `c_1 = -1`.
    pub base: BTreeMap<Var, Cyclotomic>,
    pub genera: Vec<Poly>,
    pub truncation: Truncation,
}

impl TameSeries {
    pub fn new(rank: usize, truncation: Truncation) -> Self {
        TameSeries { rank, base: BTreeMap::new(), genera: vec![Poly::new(); truncation.genus_max + 1], truncation }
    }

    /// Empty series around the dilaton point `q = -z`.
    pub fn around_dilaton(rank: usize, truncation: Truncation) -> Self {
        TameSeries::new(rank, truncation).with_dilaton()
    }

    fn with_dilaton(mut self) -> Self {
        for i in 0..self.rank {
            self.base.insert(Var::new(i as u16, 1), -Cyclotomic::one());
        }
        self
    }

    pub fn add_term(&mut self, genus: usize, m: VarMono, c: Cyclotomic) {
        if self.truncation.keeps(genus, &m) {
            poly_add_term(&mut self.genera[genus], m, c);
        }
    }

    pub fn coeff(&self, genus: usize, m: &VarMono) -> Cyclotomic {
        self.genera.get(genus).and_then(|p| p.get(m).cloned()).unwrap_or_else(Cyclotomic::zero)
    }

    pub fn len(&self) -> usize {
        self.genera.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First stored coefficient with `3g - 3 + ℓ(I) < ℓ_z(I)`.
    pub fn tame_violation(&self) -> Option<(usize, VarMono)> {
        for (g, p) in self.genera.iter().enumerate() {
            for m in p.keys() {
                if 3 * g as i64 - 3 + (m.len() as i64) < m.level_sum() as i64 {
                    return Some((g, m.clone()));
                }
            }
        }
        None
    }

    pub fn is_tame(&self) -> bool {
        self.tame_violation().is_none()
    }

    /// Applies `s_v ↦ Σ c_w s_w` to every genus, keeping terms allowed by `truncation`.
    fn substitute(&self, images: &BTreeMap<Var, Vec<(Var, Cyclotomic)>>, truncation: Truncation) -> Vec<Poly> {
        let mut out = vec![Poly::new(); truncation.genus_max + 1];
        for (g, p) in self.genera.iter().enumerate().take(truncation.genus_max + 1) {
            for (m, c) in p {
                let mut partial: Vec<(VarMono, Cyclotomic)> = vec![(VarMono::one(), c.clone())];
                for v in m.vars() {
                    let img = images.get(v).cloned().unwrap_or_else(|| vec![(*v, Cyclotomic::one())]);
                    let mut next = Vec::new();
                    for (pm, pc) in &partial {
                        for (w, wc) in &img {
                            let nm = pm.mul(&VarMono::single(*w));
                            if truncation.weight_max.is_some_and(|b| nm.level_sum() > b) {
                                continue;
                            }
                            next.push((nm, pc * wc));
                        }
                    }
                    partial = next;
                }
                for (pm, pc) in partial {
                    if truncation.keeps(g, &pm) {
                        poly_add_term(&mut out[g], pm, pc);
                    }
                }
            }
        }
        out
    }
}

fn matrix_entry(m: &Matrix, i: usize, j: usize) -> Cyclotomic {
    Cyclotomic::from_rational(m[i][j].clone())
}

/// `Ŝ^{-1} F = e^{W q²/2ℏ} F((S q)_+)`. Needs a weight bound; exact below it.
pub fn s_hat_inverse_apply(
    s: &SymplecticSeries,
    metric: &Metric,
    f: &TameSeries,
) -> Result<TameSeries, QuantizationError> {
    if s.kind != SeriesKind::S {
        return Err(QuantizationError::WrongKind(SeriesKind::S));
    }
    let n = f.rank;
    let Some(wmax) = f.truncation.weight_max else {
        return Err(QuantizationError::TruncationExceeded("Ŝ needs a ψ-weight bound".into()));
    };
    let top_base = f.base.keys().map(|v| v.level as usize).max().unwrap_or(0);
    let need = wmax as usize + top_base + 1;
    if s.order() < need {
        return Err(QuantizationError::TruncationExceeded(format!(
            "S is known to order {}, weight {wmax} needs order {need}",
            s.order()
        )));
    }
    // s_old_k = Σ_j S_j s_new_{k+j}
    let mut images: BTreeMap<Var, Vec<(Var, Cyclotomic)>> = BTreeMap::new();
    for k in 0..=wmax as usize {
        for i in 0..n {
            let mut img = Vec::new();
            for j in 0..=(wmax as usize - k) {
                let m = s.coeff(j);
                for a in 0..n {
                    if !m[i][a].is_zero() {
                        img.push((Var::new(a as u16, (k + j) as u16), matrix_entry(&m, i, a)));
                    }
                }
            }
            images.insert(Var::new(i as u16, k as u16), img);
        }
    }
    let genera = f.substitute(&images, f.truncation);
    // c' = (S^{-1} c)_+
    let sinv = s.inverse();
    let mut base: BTreeMap<Var, Cyclotomic> = BTreeMap::new();
    for k in 0..=top_base {
        for a in 0..n {
            let mut acc = Cyclotomic::zero();
            for (v, c) in &f.base {
                let l = v.level as usize;
                if l < k {
                    continue;
                }
                let m = sinv.coeff(l - k);
                acc += &(c * &matrix_entry(&m, a, v.colour as usize));
            }
            if !acc.is_zero() {
                base.insert(Var::new(a as u16, k as u16), acc);
            }
        }
    }
    let mut out = TameSeries { rank: n, base: base.clone(), genera, truncation: f.truncation };
    // ½ Σ (W_{kl} q_l, q_k) with q = s + c'
    let w = w_coeffs(s, metric)?;
    let half = Rational::new(1.into(), 2.into());
    let linear = |q: Var| -> Vec<(Option<Var>, Cyclotomic)> {
        let mut v = vec![(Some(q), Cyclotomic::one())];
        if let Some(c) = base.get(&q) {
            v.push((None, c.clone()));
        }
        v
    };
    for ((k, l), m) in &w {
        let gm = mat_mul(&metric.eta, m);
        for a in 0..n {
            for b in 0..n {
                if gm[a][b].is_zero() {
                    continue;
                }
                let coef = Cyclotomic::from_rational(&gm[a][b] * &half);
                for (x, cx) in linear(Var::new(a as u16, *k as u16)) {
                    for (y, cy) in linear(Var::new(b as u16, *l as u16)) {
                        let mono = VarMono::new(x.into_iter().chain(y).collect());
                        out.add_term(0, mono, &(&coef * &cx) * &cy);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `Ŝ F`, computed as `Ŝ^{-1}` for the inverse series.
pub fn s_hat_apply(s: &SymplecticSeries, metric: &Metric, f: &TameSeries) -> Result<TameSeries, QuantizationError> {
    s_hat_inverse_apply(&s.inverse(), metric, f)
}

/// `R̂ F = (e^{(ℏ/2) V∂²} F)|_{q ↦ R^{-1} q}`. Needs a bound on `2g - 2 + ℓ` and stable input.
pub fn r_hat_apply(r: &SymplecticSeries, metric: &Metric, f: &TameSeries) -> Result<TameSeries, QuantizationError> {
    if r.kind != SeriesKind::R {
        return Err(QuantizationError::WrongKind(SeriesKind::R));
    }
    if let Some((genus, m)) = f.tame_violation() {
        return Err(QuantizationError::NotTame { genus, mono: m.to_string() });
    }
    let Some(euler) = f.truncation.euler_max else {
        return Err(QuantizationError::TruncationExceeded("R̂ needs a bound on 2g-2+ℓ".into()));
    };
    for (g, p) in f.genera.iter().enumerate() {
        for m in p.keys() {
            if 2 * g as i64 - 2 + (m.len() as i64) < 1 {
                return Err(QuantizationError::Unstable { genus: g, mono: m.to_string() });
            }
        }
    }
    let n = f.rank;
    let trunc = f.truncation;
    // tame terms have level at most 3g-3+ℓ = (2g-2+ℓ) + g - 1
    let top_level = (euler + trunc.genus_max as i64 - 1).max(0) as usize;
    if r.order() < 2 * top_level + 1 {
        return Err(QuantizationError::TruncationExceeded(format!(
            "R is known to order {}, levels up to {top_level} need order {}",
            r.order(),
            2 * top_level + 1
        )));
    }
    let v = v_coeffs(r, metric)?;
    // (∂^i, V_{kl} ∂^j) = (V η^{-1})_{ij}
    let mut pairs: Vec<(Var, Var, Cyclotomic)> = Vec::new();
    for ((k, l), m) in &v {
        let vm = mat_mul(m, &metric.inv);
        for i in 0..n {
            for j in 0..n {
                if !vm[i][j].is_zero() {
                    pairs.push((Var::new(i as u16, *k as u16), Var::new(j as u16, *l as u16), matrix_entry(&vm, i, j)));
                }
            }
        }
    }
    let half = Cyclotomic::from_rational(Rational::new(1.into(), 2.into()));
    let flow = |terms: &[Vec<Poly>]| -> Vec<Poly> {
        // order n+1 coefficient of F(s) from orders 0..=n
        let order = terms.len() - 1;
        let mut out = vec![Poly::new(); trunc.genus_max + 1];
        for (x, y, c) in &pairs {
            let cc = &(c * &half);
            // linear part ½ V∂² F_{g-1}
            for g in 1..=trunc.genus_max {
                let d = poly_derivative(&poly_derivative(&terms[order][g - 1], *y), *x);
                for (m, dc) in d {
                    if trunc.keeps(g, &m) {
                        poly_add_term(&mut out[g], m, cc * &dc);
                    }
                }
            }
            // quadratic part ½ Σ V(∂F_{g1}, ∂F_{g2})
            for a in 0..=order {
                let b = order - a;
                for g1 in 0..=trunc.genus_max {
                    let dx = poly_derivative(&terms[a][g1], *x);
                    if dx.is_empty() {
                        continue;
                    }
                    for g2 in 0..=(trunc.genus_max - g1) {
                        let dy = poly_derivative(&terms[b][g2], *y);
                        for (m1, c1) in &dx {
                            for (m2, c2) in &dy {
                                let m = m1.mul(m2);
                                if trunc.keeps(g1 + g2, &m) {
                                    poly_add_term(&mut out[g1 + g2], m, &(cc * c1) * c2);
                                }
                            }
                        }
                    }
                }
            }
        }
        let scale = Cyclotomic::from_rational(Rational::new(1.into(), ((order + 1) as i64).into()));
        for p in out.iter_mut() {
            for c in p.values_mut() {
                *c = &*c * &scale;
            }
        }
        out
    };
    let mut terms: Vec<Vec<Poly>> = vec![f.genera.clone()];
    let limit = (euler.max(0) as usize + trunc.genus_max + 2) * 4;
    loop {
        let next = flow(&terms);
        if next.iter().all(|p| p.is_empty()) {
            break;
        }
        terms.push(next);
        if terms.len() > limit {
            return Err(QuantizationError::TruncationExceeded("heat flow did not terminate".into()));
        }
    }
    let mut flowed = TameSeries { genera: vec![Poly::new(); trunc.genus_max + 1], ..f.clone() };
    for t in &terms {
        for (g, p) in t.iter().enumerate() {
            for (m, c) in p {
                poly_add_term(&mut flowed.genera[g], m.clone(), c.clone());
            }
        }
    }
    // q ↦ R^{-1} q: s_old_k = Σ_j R̄_j s_new_{k-j}, and the base point becomes R c
    let rinv = r.inverse();
    let top =
        flowed.genera.iter().flat_map(|p| p.keys()).flat_map(|m| m.vars().iter().map(|v| v.level)).max().unwrap_or(0);
    let mut images: BTreeMap<Var, Vec<(Var, Cyclotomic)>> = BTreeMap::new();
    for k in 0..=top as usize {
        for i in 0..n {
            let mut img = Vec::new();
            for j in 0..=k.min(rinv.order()) {
                let m = rinv.coeff(j);
                for a in 0..n {
                    if !m[i][a].is_zero() {
                        img.push((Var::new(a as u16, (k - j) as u16), matrix_entry(&m, i, a)));
                    }
                }
            }
            images.insert(Var::new(i as u16, k as u16), img);
        }
    }
    let genera = flowed.substitute(&images, trunc);
    let mut base: BTreeMap<Var, Cyclotomic> = BTreeMap::new();
    for (v, c) in &f.base {
        for j in 0..=r.order() {
            let m = r.coeff(j);
            for a in 0..n {
                if m[a][v.colour as usize].is_zero() {
                    continue;
                }
                let key = Var::new(a as u16, v.level + j as u16);
                let e = base.entry(key).or_insert_with(Cyclotomic::zero);
                *e += &(c * &matrix_entry(&m, a, v.colour as usize));
            }
        }
    }
    base.retain(|_, c| !c.is_zero());
    Ok(TameSeries { rank: n, base, genera, truncation: trunc })
}
