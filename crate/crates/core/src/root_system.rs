//! Simply-laced root systems: roots, reflections, the Coxeter element, the
//! Seifert form with its sign cocycle, and an eigenbasis of the Coxeter element.

use std::collections::{BTreeSet, VecDeque};

use std::fmt;
use std::sync::OnceLock;

use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_arith::{int, Cyclotomic, Rational};

/// Integer coordinates in the simple-root basis.
pub type LatticeVec = Vec<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RootSystemError {
    #[error("unsupported root system {0}")]
    UnsupportedType(String),
    #[error("vector {0:?} is not a root")]
    NotARoot(LatticeVec),
    #[error("cannot parse root system name {0:?}")]
    BadName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdeType {
    A,
    D,
    E,
}

impl fmt::Display for AdeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            AdeType::A => "A",
            AdeType::D => "D",
            AdeType::E => "E",
        };
        f.write_str(c)
    }
}

/// Parses names like `A2`, `d4`, `E8`.
pub fn parse_type(name: &str) -> Result<(AdeType, usize), RootSystemError> {
    let name = name.trim();
    let bad = || RootSystemError::BadName(name.to_string());
    let mut chars = name.chars();
    let kind = match chars.next().map(|c| c.to_ascii_uppercase()) {
        Some('A') => AdeType::A,
        Some('D') => AdeType::D,
        Some('E') => AdeType::E,
        _ => return Err(bad()),
    };
    let rank: usize = chars.as_str().parse().map_err(|_| bad())?;
    Ok((kind, rank))
}

/// A Coxeter element `σ = r_1 ⋯ r_N` acting on simple-root coordinates.
#[derive(Debug, Clone)]
pub struct CoxeterElement {
    pub word: Vec<usize>,
    /// Column convention: `σ(β) = matrix · β`.
    pub matrix: Vec<Vec<i64>>,
}

/// Seifert form `L(α,β) = ((1-σ)^{-1}α|β)` on the simple-root basis and its sign table.
#[derive(Debug, Clone)]
pub struct SeifertData {
    pub form: Vec<Vec<i64>>,
    /// `(-1)^{L(α_i, α_j)}`.
    pub epsilon: Vec<Vec<i8>>,
}

/// Eigenvectors `v_1..v_N` of σ with `σ v_j = ζ_h^{m_j} v_j` and `(v_i|v_j) = δ_{i+j,N+1}`.
#[derive(Debug, Clone)]
pub struct EigenFrame {
    /// Order of the cyclotomic field holding all coordinates.
    pub field_order: u32,
    pub vectors: Vec<Vec<Cyclotomic>>,
    /// Dual basis, `duals[j] = vectors[N-1-j]`.
    pub duals: Vec<Vec<Cyclotomic>>,
}

#[derive(Debug)]
pub struct RootSystem {
    pub kind: AdeType,
    pub rank: usize,
    pub cartan: Vec<Vec<i64>>,
    /// All roots, positive roots first, each group sorted.
    pub roots: Vec<LatticeVec>,
    pub h: u32,
    pub exponents: Vec<u32>,
    coxeter: CoxeterElement,
    seifert: SeifertData,
    sigma_powers: Vec<Vec<Vec<i64>>>,
    gram_inverse: Vec<Vec<Rational>>,
    frame: OnceLock<EigenFrame>,
}

fn cartan_matrix(kind: AdeType, n: usize) -> Vec<Vec<i64>> {
    let mut c = vec![vec![0i64; n]; n];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 2;
    }
    let mut link = |a: usize, b: usize| {
        c[a][b] = -1;
        c[b][a] = -1;
    };
    match kind {
        AdeType::A => {
            for i in 0..n.saturating_sub(1) {
                link(i, i + 1);
            }
        }
        AdeType::D => {
            for i in 0..n - 2 {
                link(i, i + 1);
            }
            link(n - 3, n - 1);
        }
        AdeType::E => {
            // Bourbaki: 1-3-4-5-6-7-8 with 2 attached to 4
            link(0, 2);
            link(1, 3);
            for i in 2..n - 1 {
                link(i, i + 1);
            }
        }
    }
    c
}

fn table_data(kind: AdeType, n: usize) -> (u32, Vec<u32>) {
    match kind {
        AdeType::A => ((n + 1) as u32, (1..=n as u32).collect()),
        AdeType::D => {
            let mut e: Vec<u32> = (0..n as u32 - 1).map(|k| 2 * k + 1).collect();
            e.push(n as u32 - 1);
            e.sort_unstable();
            (2 * n as u32 - 2, e)
        }
        AdeType::E => match n {
            6 => (12, vec![1, 4, 5, 7, 8, 11]),
            7 => (18, vec![1, 5, 7, 9, 11, 13, 17]),
            _ => (30, vec![1, 7, 11, 13, 17, 19, 23, 29]),
        },
    }
}

fn mat_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0i64; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            if a[i][k] == 0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn identity(n: usize) -> Vec<Vec<i64>> {
    (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect()
}

fn mat_vec(m: &[Vec<i64>], v: &[i64]) -> Vec<i64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Inverse of a rational matrix by Gauss-Jordan; `None` if singular.
pub fn rational_inverse(m: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r][c].is_zero())?;
        a.swap(c, p);
        let inv = a[c][c].recip();
        for x in a[c].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                let pivot = a[c].clone();
                for (x, y) in a[r].iter_mut().zip(pivot.iter()) {
                    *x -= &f * y;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Kernel basis of a matrix over a cyclotomic field (reduced echelon, free variables set to 1).
pub fn cyclotomic_kernel(m: &[Vec<Cyclotomic>]) -> Vec<Vec<Cyclotomic>> {
    let rows = m.len();
    let cols = m[0].len();
    let mut a: Vec<Vec<Cyclotomic>> = m.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].inv().expect("pivot nonzero");
        for x in a[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                let pivot = a[r].clone();
                for (x, y) in a[i].iter_mut().zip(pivot.iter()) {
                    *x -= &(&f * y);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Cyclotomic::zero(); cols];
            v[f] = Cyclotomic::one();
            for (i, &pc) in pivots.iter().enumerate() {
                v[pc] = -&a[i][f];
            }
            v
        })
        .collect()
}

impl RootSystem {
    pub fn build(kind: AdeType, rank: usize) -> Result<Self, RootSystemError> {
        let ok = match kind {
            AdeType::A => rank >= 1,
            AdeType::D => rank >= 4,
            AdeType::E => (6..=8).contains(&rank),
        };
        if !ok {
            return Err(RootSystemError::UnsupportedType(format!("{kind}{rank}")));
        }
        let cartan = cartan_matrix(kind, rank);
        let (h, exponents) = table_data(kind, rank);
        let roots = enumerate_roots(&cartan);

        let reflections: Vec<Vec<Vec<i64>>> = (0..rank)
            .map(|i| {
                let mut r = identity(rank);
                for j in 0..rank {
                    r[i][j] -= cartan[i][j];
                }
                r
            })
            .collect();
        let mut matrix = identity(rank);
        for r in &reflections {
            matrix = mat_mul(&matrix, r);
        }
        let coxeter = CoxeterElement { word: (0..rank).collect(), matrix };

        let mut sigma_powers = vec![identity(rank)];
        for k in 1..=h as usize {
            sigma_powers.push(mat_mul(&coxeter.matrix, &sigma_powers[k - 1]));
        }
        assert_eq!(sigma_powers[h as usize], identity(rank), "σ^h must be the identity");

        let seifert = seifert_from(&cartan, &sigma_powers, h);

        let gram_rat: Vec<Vec<Rational>> = cartan.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect();
        let gram_inverse = rational_inverse(&gram_rat).expect("Cartan matrix is invertible");

        Ok(RootSystem {
            kind,
            rank,
            cartan,
            roots,
            h,
            exponents,
            coxeter,
            seifert,
            sigma_powers,
            gram_inverse,
            frame: OnceLock::new(),
        })
    }

    pub fn parse(name: &str) -> Result<Self, RootSystemError> {
        let (k, n) = parse_type(name)?;
        Self::build(k, n)
    }

    pub fn name(&self) -> String {
        format!("{}{}", self.kind, self.rank)
    }

    pub fn gram(&self) -> &[Vec<i64>] {
        &self.cartan
    }

    pub fn gram_inverse(&self) -> &[Vec<Rational>] {
        &self.gram_inverse
    }

    pub fn pairing(&self, a: &[i64], b: &[i64]) -> i64 {
        let mut s = 0;
        for i in 0..self.rank {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.rank {
                s += a[i] * self.cartan[i][j] * b[j];
            }
        }
        s
    }

    /// `(a|b)` for vectors with cyclotomic coordinates.
    pub fn pairing_cyc(&self, a: &[Cyclotomic], b: &[Cyclotomic]) -> Cyclotomic {
        let mut s = Cyclotomic::zero();
        for i in 0..self.rank {
            if a[i].is_zero() {
                continue;
            }
            let mut gb = Cyclotomic::zero();
            for j in 0..self.rank {
                if self.cartan[i][j] != 0 && !b[j].is_zero() {
                    gb += &b[j].scale(&int(self.cartan[i][j]));
                }
            }
            s += &(&a[i] * &gb);
        }
        s
    }

    pub fn norm2(&self, a: &[i64]) -> i64 {
        self.pairing(a, a)
    }

    pub fn is_root(&self, a: &[i64]) -> bool {
        self.roots.binary_search_by(|r| cmp_roots(r, a)).is_ok()
    }

    pub fn simple_root(&self, i: usize) -> LatticeVec {
        let mut v = vec![0; self.rank];
        v[i] = 1;
        v
    }

    pub fn positive_roots(&self) -> &[LatticeVec] {
        &self.roots[..self.roots.len() / 2]
    }

    /// `r_α(β) = β - (α|β)α`.
    pub fn reflect(&self, alpha: &[i64], beta: &[i64]) -> Result<LatticeVec, RootSystemError> {
        if !self.is_root(alpha) {
            return Err(RootSystemError::NotARoot(alpha.to_vec()));
        }
        let c = self.pairing(alpha, beta);
        Ok(beta.iter().zip(alpha).map(|(b, a)| b - c * a).collect())
    }

    /// Reflection of a vector with rational coordinates in the root `α`.
    pub fn reflect_rational(&self, alpha: &[i64], beta: &[Rational]) -> Vec<Rational> {
        let c = self.pairing_rational(alpha, beta);
        beta.iter().zip(alpha).map(|(b, &a)| b - &c * int(a)).collect()
    }

    pub fn pairing_rational(&self, a: &[i64], b: &[Rational]) -> Rational {
        let mut s = Rational::zero();
        for i in 0..self.rank {
            for j in 0..self.rank {
                let g = a[i] * self.cartan[i][j];
                if g != 0 {
                    s += &b[j] * int(g);
                }
            }
        }
        s
    }

    pub fn coxeter(&self) -> &CoxeterElement {
        &self.coxeter
    }

    pub fn seifert(&self) -> &SeifertData {
        &self.seifert
    }

    /// `σ^k β` for any integer `k`.
    pub fn sigma_pow(&self, k: i64, beta: &[i64]) -> LatticeVec {
        let idx = k.rem_euclid(self.h as i64) as usize;
        mat_vec(&self.sigma_powers[idx], beta)
    }

    /// Seifert form on arbitrary lattice vectors.
    pub fn seifert_form(&self, a: &[i64], b: &[i64]) -> i64 {
        let l = &self.seifert.form;
        let mut s = 0;
        for i in 0..self.rank {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.rank {
                s += a[i] * l[i][j] * b[j];
            }
        }
        s
    }

    /// The bimultiplicative sign `ε(a,b) = (-1)^{L(a,b)}`.
    pub fn epsilon(&self, a: &[i64], b: &[i64]) -> i64 {
        let e = &self.seifert.epsilon;
        let mut parity = 0i64;
        for i in 0..self.rank {
            if a[i] & 1 == 0 {
                continue;
            }
            for j in 0..self.rank {
                if b[j] & 1 != 0 && e[i][j] < 0 {
                    parity ^= 1;
                }
            }
        }
        if parity == 0 {
            1
        } else {
            -1
        }
    }

    /// `B_{α,β} = h^{-(α|β)} ∏_{k=1}^{h-1} (1 - ζ_h^k)^{(σ^k α|β)}` in `Q(ζ_h)`.
    pub fn b_scalar(&self, alpha: &[i64], beta: &[i64]) -> Cyclotomic {
        let h = self.h;
        let hp = crate::exact_arith::rational::pow_i(&int(h as i64), -self.pairing(alpha, beta)).expect("h nonzero");
        let mut acc = Cyclotomic::from_rational(hp);
        for k in 1..h as i64 {
            let e = self.pairing(&self.sigma_pow(k, alpha), beta);
            if e == 0 {
                continue;
            }
            let base = &Cyclotomic::one() - &Cyclotomic::zeta_pow(h, k);
            acc = &acc * &base.pow(e).expect("1 - ζ^k is nonzero");
        }
        acc
    }

    /// The σ-eigenframe, computed on first use.
    pub fn eigenframe(&self) -> &EigenFrame {
        self.frame.get_or_init(|| compute_frame(self))
    }

    /// Lattice points with `|γ|^2 / 2 <= max_weight`, sorted.
    ///
    /// Coordinates satisfy `|γ_i| = |(γ|ω_i)| <= |γ| |ω_i|`, so a box search is exhaustive.
    pub fn lattice_points(&self, max_weight: i64) -> Vec<LatticeVec> {
        let bound: Vec<i64> = (0..self.rank)
            .map(|i| {
                let w = &self.gram_inverse[i][i];
                let x = 2.0 * max_weight as f64 * num_traits::ToPrimitive::to_f64(w).unwrap_or(0.0);
                x.sqrt().floor() as i64 + 1
            })
            .collect();
        let mut out = Vec::new();
        let mut cur = vec![0i64; self.rank];
        self.box_search(0, &bound, &mut cur, 2 * max_weight, &mut out);
        out.sort();
        out
    }

    fn box_search(&self, i: usize, bound: &[i64], cur: &mut Vec<i64>, max_norm: i64, out: &mut Vec<LatticeVec>) {
        if i == self.rank {
            if self.norm2(cur) <= max_norm {
                out.push(cur.clone());
            }
            return;
        }
        for x in -bound[i]..=bound[i] {
            cur[i] = x;
            self.box_search(i + 1, bound, cur, max_norm, out);
        }
        cur[i] = 0;
    }

    /// `G^{-1} x` for the vector of pairings `x_i = (λ|α_i)`.
    pub fn from_pairings(&self, pairings: &[Rational]) -> Vec<Rational> {
        (0..self.rank)
            .map(|i| {
                let mut s = Rational::zero();
                for j in 0..self.rank {
                    s += &self.gram_inverse[i][j] * &pairings[j];
                }
                s
            })
            .collect()
    }

    /// The fundamental weight `ω_i` in simple-root coordinates.
    pub fn fundamental_weight(&self, i: usize) -> Vec<Rational> {
        self.gram_inverse.iter().map(|row| row[i].clone()).collect()
    }

    /// Orthonormal realization of the simple roots for types A and D.
    pub fn orthonormal_model(&self) -> Option<OrthonormalModel> {
        let n = self.rank;
        let simple = match self.kind {
            AdeType::A => (0..n)
                .map(|i| {
                    let mut v = vec![0; n + 1];
                    v[i] = 1;
                    v[i + 1] = -1;
                    v
                })
                .collect(),
            AdeType::D => (0..n)
                .map(|i| {
                    let mut v = vec![0; n];
                    if i + 1 < n {
                        v[i] = 1;
                        v[i + 1] = -1;
                    } else {
                        v[n - 2] = 1;
                        v[n - 1] = 1;
                    }
                    v
                })
                .collect(),
            AdeType::E => return None,
        };
        Some(OrthonormalModel { simple_roots: simple })
    }

    /// Export for the `roots` command.
    pub fn export(&self) -> RootsExport {
        RootsExport {
            name: self.name(),
            rank: self.rank,
            coxeter_number: self.h,
            exponents: self.exponents.clone(),
            cartan: self.cartan.clone(),
            roots: self.roots.clone(),
        }
    }
}

/// Simple roots as vectors in `Z^M` with the standard dot product.
#[derive(Debug, Clone)]
pub struct OrthonormalModel {
    pub simple_roots: Vec<Vec<i64>>,
}

impl OrthonormalModel {
    pub fn ambient_dim(&self) -> usize {
        self.simple_roots[0].len()
    }

    /// Pairings `(x|α_i)` of an ambient vector with the simple roots.
    pub fn pairings(&self, x: &[i64]) -> Vec<Rational> {
        self.simple_roots.iter().map(|a| int(a.iter().zip(x).map(|(p, q)| p * q).sum())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootsExport {
    pub name: String,
    pub rank: usize,
    pub coxeter_number: u32,
    pub exponents: Vec<u32>,
    pub cartan: Vec<Vec<i64>>,
    pub roots: Vec<LatticeVec>,
}

fn is_positive(v: &[i64]) -> bool {
    v.iter().all(|&x| x >= 0)
}

fn cmp_roots(a: &[i64], b: &[i64]) -> std::cmp::Ordering {
    // positive roots first, then lexicographic
    is_positive(b).cmp(&is_positive(a)).then_with(|| a.cmp(b))
}

fn enumerate_roots(cartan: &[Vec<i64>]) -> Vec<LatticeVec> {
    let n = cartan.len();
    let mut seen: BTreeSet<LatticeVec> = BTreeSet::new();
    let mut queue = VecDeque::new();
    for i in 0..n {
        let mut v = vec![0; n];
        v[i] = 1;
        seen.insert(v.clone());
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        for i in 0..n {
            let c: i64 = (0..n).map(|j| cartan[i][j] * v[j]).sum();
            let mut w = v.clone();
            w[i] -= c;
            if seen.insert(w.clone()) {
                queue.push_back(w);
            }
        }
    }
    let mut roots: Vec<LatticeVec> = seen.into_iter().collect();
    roots.sort_by(|a, b| cmp_roots(a, b));
    roots
}

fn seifert_from(cartan: &[Vec<i64>], sigma_powers: &[Vec<Vec<i64>>], h: u32) -> SeifertData {
    let n = cartan.len();
    // (1-σ)^{-1} = -(1/h) Σ_k k σ^k
    let mut m = vec![vec![0i64; n]; n];
    for (k, p) in sigma_powers.iter().enumerate().take(h as usize) {
        for i in 0..n {
            for j in 0..n {
                m[i][j] += k as i64 * p[i][j];
            }
        }
    }
    // L_ij = ((1-σ)^{-1} α_i | α_j) = -(1/h) (M e_i)^T G e_j
    let mut form = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s: i64 = (0..n).map(|a| m[a][i] * cartan[a][j]).sum();
            let (q, r) = (-s).div_rem(&(h as i64));
            assert_eq!(r, 0, "Seifert form must be integral");
            form[i][j] = q;
        }
    }
    let epsilon =
        form.iter().map(|row| row.iter().map(|&x| if x.rem_euclid(2) == 0 { 1 } else { -1 }).collect()).collect();
    SeifertData { form, epsilon }
}

fn embed_vec(v: &[Cyclotomic], order: u32) -> Vec<Cyclotomic> {
    v.iter().map(|x| x.embed_order(order).expect("divides")).collect()
}

fn scale_vec(v: &[Cyclotomic], c: &Cyclotomic) -> Vec<Cyclotomic> {
    v.iter().map(|x| x * c).collect()
}

fn normalize_first(v: Vec<Cyclotomic>) -> Vec<Cyclotomic> {
    let lead = v.iter().find(|x| !x.is_zero()).cloned().expect("nonzero vector");
    let inv = lead.inv().expect("nonzero");
    scale_vec(&v, &inv)
}

fn compute_frame(rs: &RootSystem) -> EigenFrame {
    let n = rs.rank;
    let h = rs.h;
    let sigma: Vec<Vec<Cyclotomic>> =
        rs.coxeter.matrix.iter().map(|r| r.iter().map(|&x| Cyclotomic::from_int(x)).collect()).collect();
    let eigenspace = |m: u32| -> Vec<Vec<Cyclotomic>> {
        let z = Cyclotomic::zeta_pow(h, m as i64);
        let mat: Vec<Vec<Cyclotomic>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { &sigma[i][j] - &z } else { sigma[i][j].clone() }).collect())
            .collect();
        cyclotomic_kernel(&mat)
    };

    let mut vectors: Vec<Option<Vec<Cyclotomic>>> = vec![None; n];
    let mut order = h;
    let mut j = 0;
    while j < n {
        let partner = n - 1 - j;
        if vectors[j].is_some() {
            j += 1;
            continue;
        }
        let m = rs.exponents[j];
        let space = eigenspace(m);
        if partner == j {
            assert_eq!(space.len(), 1, "simple middle eigenvalue expected");
            let v = normalize_first(space[0].clone());
            let r = rs.pairing_cyc(&v, &v).to_rational().expect("real eigenvector has rational norm");
            let s = Cyclotomic::sqrt_rational(&r).inv().expect("nonzero norm");
            order = order.lcm(&s.order());
            vectors[j] = Some(scale_vec(&v, &s));
        } else if rs.exponents[partner] == m {
            // repeated exponent: the two-dimensional rational eigenspace, split into isotropic lines
            assert_eq!(space.len(), 2, "double eigenvalue expected");
            let (e, f) = (&space[0], &space[1]);
            let a = rs.pairing_cyc(e, e);
            let b = rs.pairing_cyc(e, f);
            let c = rs.pairing_cyc(f, f);
            let (u, w) = if a.is_zero() {
                let t = &c * &b.scale(&int(2)).inv().expect("nondegenerate");
                let w: Vec<Cyclotomic> = f.iter().zip(e).map(|(fi, ei)| fi - &(&t * ei)).collect();
                (e.clone(), w)
            } else {
                let disc = (&(&b * &b) - &(&a * &c)).to_rational().expect("rational");
                let s = Cyclotomic::sqrt_rational(&disc);
                order = order.lcm(&s.order());
                let c1 = &s - &b;
                let c2 = &(-&b) - &s;
                let u: Vec<Cyclotomic> = e.iter().zip(f).map(|(ei, fi)| &(&c1 * ei) + &(&a * fi)).collect();
                let w: Vec<Cyclotomic> = e.iter().zip(f).map(|(ei, fi)| &(&c2 * ei) + &(&a * fi)).collect();
                (u, w)
            };
            let u = normalize_first(u);
            let uw = rs.pairing_cyc(&u, &w);
            let w = scale_vec(&w, &uw.inv().expect("isotropic pair must pair nontrivially"));
            vectors[j] = Some(u);
            vectors[partner] = Some(w);
        } else {
            assert_eq!(space.len(), 1, "simple eigenvalue expected");
            let v = normalize_first(space[0].clone());
            let other = eigenspace(rs.exponents[partner]);
            assert_eq!(other.len(), 1, "simple eigenvalue expected");
            let w = normalize_first(other[0].clone());
            let vw = rs.pairing_cyc(&v, &w);
            let w = scale_vec(&w, &vw.inv().expect("dual eigenvectors pair nontrivially"));
            vectors[j] = Some(v);
            vectors[partner] = Some(w);
        }
        j += 1;
    }
    let vectors: Vec<Vec<Cyclotomic>> = vectors.into_iter().map(|v| embed_vec(&v.expect("filled"), order)).collect();
    let duals = (0..n).map(|j| vectors[n - 1 - j].clone()).collect();
    EigenFrame { field_order: order, vectors, duals }
}

impl EigenFrame {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    /// Coordinates `(a|v_j)` of an integral vector against every frame vector.
    pub fn pair_vectors(&self, rs: &RootSystem, a: &[Cyclotomic]) -> Vec<Cyclotomic> {
        self.vectors.iter().map(|v| rs.pairing_cyc(a, v)).collect()
    }

    /// Coordinates `(a|v^j)`, i.e. `a = Σ_j (a|v^j) v_j`.
    pub fn pair_duals(&self, rs: &RootSystem, a: &[Cyclotomic]) -> Vec<Cyclotomic> {
        self.duals.iter().map(|v| rs.pairing_cyc(a, v)).collect()
    }
}

/// Integer vector as cyclotomic coordinates.
pub fn to_cyc(v: &[i64]) -> Vec<Cyclotomic> {
    v.iter().map(|&x| Cyclotomic::from_int(x)).collect()
}

/// Rational vector as cyclotomic coordinates.
pub fn rat_to_cyc(v: &[Rational]) -> Vec<Cyclotomic> {
    v.iter().map(|x| Cyclotomic::from_rational(x.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_counts() {
        for (k, n, count) in [
            (AdeType::A, 1, 2),
            (AdeType::A, 2, 6),
            (AdeType::A, 4, 20),
            (AdeType::D, 4, 24),
            (AdeType::D, 5, 40),
            (AdeType::E, 6, 72),
            (AdeType::E, 7, 126),
            (AdeType::E, 8, 240),
        ] {
            let rs = RootSystem::build(k, n).unwrap();
            assert_eq!(rs.roots.len(), count);
            assert_eq!(rs.roots.len(), rs.rank * rs.h as usize);
        }
    }

    #[test]
    fn unsupported() {
        assert!(RootSystem::build(AdeType::D, 3).is_err());
        assert!(RootSystem::build(AdeType::E, 9).is_err());
        assert!(RootSystem::build(AdeType::A, 0).is_err());
    }

    #[test]
    fn lattice_points_small() {
        let rs = RootSystem::build(AdeType::A, 1).unwrap();
        let pts = rs.lattice_points(4);
        assert_eq!(pts, vec![vec![-2], vec![-1], vec![0], vec![1], vec![2]]);
    }
}
