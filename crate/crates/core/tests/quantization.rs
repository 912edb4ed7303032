use num_traits::Zero;
use proptest::prelude::*;

use walg::exact_arith::{binomial_int, factorial, int, rat, Cyclotomic, Rational};
use walg::quantization::{
    omega_pairing, quantize_linear, r_hat_apply, s_hat_apply, s_hat_inverse_apply, v_coeffs, w_coeffs, Darboux,
    LoopVector, Matrix, Metric, QuadraticHamiltonian, QuantizationError, SeriesKind, SymplecticSeries, TameSeries,
    Truncation,
};
use walg::twisted_fock::{compose, OpKey, QPoly, Topology, Var, VarMono};

fn q(i: u16, k: u16) -> Var {
    Var::new(i, k)
}

fn cr(n: i64, d: i64) -> Cyclotomic {
    Cyclotomic::from_rational(rat(n, d))
}

fn m(rows: &[&[i64]]) -> Matrix {
    rows.iter().map(|r| r.iter().map(|x| int(*x)).collect()).collect()
}

fn a2_metric() -> Metric {
    Metric::new(m(&[&[2, -1], &[-1, 2]])).unwrap()
}

fn scalar_key() -> OpKey {
    OpKey { lambda: Rational::zero(), hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() }
}

fn basis(metric: &Metric, kmax: u32) -> Vec<LoopVector> {
    let mut out = Vec::new();
    for k in 0..=kmax {
        for i in 0..metric.rank() {
            out.push(LoopVector::plus_basis(metric.rank(), i, k));
            out.push(LoopVector::minus_basis(metric, i, k));
        }
    }
    out
}

fn commutator_scalar(metric: &Metric, a: &LoopVector, b: &LoopVector) -> (Cyclotomic, usize) {
    let x = quantize_linear(metric, a);
    let y = quantize_linear(metric, b);
    let xy = compose(&x, &y, Topology::AtPoint).unwrap().at_mu_power(&Rational::zero());
    let yx = compose(&y, &x, Topology::AtPoint).unwrap().at_mu_power(&Rational::zero());
    let c = &xy - &yx;
    let s = c.coeff(&scalar_key());
    (s, c.len())
}

#[test]
fn darboux_coordinates() {
    let g = a2_metric();
    for k in 0..3u32 {
        for i in 0..2 {
            let e = LoopVector::plus_basis(2, i, k);
            let f = LoopVector::minus_basis(&g, i, k);
            for l in 0..3u32 {
                for j in 0..2 {
                    let delta = if (k, i) == (l, j) { Cyclotomic::one() } else { Cyclotomic::zero() };
                    assert_eq!(e.q(l, j), delta);
                    assert_eq!(f.p(&g, l, j), delta);
                    assert!(e.p(&g, l, j).is_zero());
                    assert!(f.q(l, j).is_zero());
                    let ej = LoopVector::plus_basis(2, j, l);
                    let fj = LoopVector::minus_basis(&g, j, l);
                    assert_eq!(omega_pairing(&g, &f, &ej), delta);
                    assert!(omega_pairing(&g, &e, &ej).is_zero());
                    assert!(omega_pairing(&g, &f, &fj).is_zero());
                }
            }
        }
    }
}

#[test]
fn quantized_commutator_is_omega() {
    for g in [Metric::identity(1), a2_metric()] {
        let b = basis(&g, 4);
        for x in &b {
            for y in &b {
                let (s, len) = commutator_scalar(&g, x, y);
                assert_eq!(s, omega_pairing(&g, x, y));
                assert!(len <= 1, "commutator must be a scalar");
            }
        }
    }
}

fn loop_vector_strategy() -> impl Strategy<Value = Vec<(i32, i64, i64)>> {
    prop::collection::vec((-5i32..5, -3i64..4, -3i64..4), 0..6)
}

fn build(terms: &[(i32, i64, i64)]) -> LoopVector {
    let mut v = LoopVector::zero(2);
    for (n, a, b) in terms {
        v.add(*n, &[Cyclotomic::from_int(*a), Cyclotomic::from_int(*b)]);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omega_is_antisymmetric(a in loop_vector_strategy(), b in loop_vector_strategy()) {
        let g = a2_metric();
        let (x, y) = (build(&a), build(&b));
        prop_assert_eq!(omega_pairing(&g, &x, &y), -&omega_pairing(&g, &y, &x));
    }

    #[test]
    fn commutator_of_random_vectors(a in loop_vector_strategy(), b in loop_vector_strategy()) {
        let g = a2_metric();
        let (x, y) = (build(&a), build(&b));
        let (s, len) = commutator_scalar(&g, &x, &y);
        prop_assert_eq!(s, omega_pairing(&g, &x, &y));
        prop_assert!(len <= 1);
    }
}

#[test]
fn quadratic_quantization_rules() {
    let mut h = QuadraticHamiltonian::default();
    h.add(Darboux::Q(q(0, 0)), Darboux::Q(q(1, 0)), Cyclotomic::one());
    let op = h.quantize();
    let key = OpKey {
        lambda: Rational::zero(),
        hbar_half: -2,
        vars: VarMono::new(vec![q(0, 0), q(1, 0)]),
        ders: VarMono::one(),
    };
    assert_eq!(op.coeff(&key), Cyclotomic::one());
    assert_eq!(op.len(), 1);

    let mut h = QuadraticHamiltonian::default();
    h.add(Darboux::P(q(0, 0)), Darboux::Q(q(1, 0)), Cyclotomic::one());
    let out = h.quantize().apply_mode(&QPoly::from_vars(&[q(0, 0)]));
    assert_eq!(out, QPoly::from_vars(&[q(1, 0)]));

    let mut h = QuadraticHamiltonian::default();
    h.add(Darboux::P(q(0, 2)), Darboux::P(q(0, 1)), Cyclotomic::one());
    let out = h.quantize().apply_mode(&QPoly::from_vars(&[q(0, 1), q(0, 2)]));
    assert_eq!(out, QPoly::monomial(VarMono::one(), 2, Cyclotomic::one()));
}

#[test]
fn hamiltonian_of_inverse_z() {
    // ½Ω(z⁻¹φ, φ) = -q_0²/2 - Σ_j q_{j+1} p_j
    let g = Metric::identity(1);
    let levels = 5u16;
    let h = QuadraticHamiltonian::from_infinitesimal(&g, &[(-1, m(&[&[1]]))], levels).unwrap();
    let mut expected = QuadraticHamiltonian::default();
    expected.add(Darboux::Q(q(0, 0)), Darboux::Q(q(0, 0)), cr(-1, 2));
    for j in 0..levels {
        expected.add(Darboux::P(q(0, j)), Darboux::Q(q(0, j + 1)), cr(-1, 1));
    }
    assert_eq!(h, expected);
    let op = h.quantize();
    let qq = OpKey {
        lambda: Rational::zero(),
        hbar_half: -2,
        vars: VarMono::new(vec![q(0, 0), q(0, 0)]),
        ders: VarMono::one(),
    };
    assert_eq!(op.coeff(&qq), cr(-1, 2));
}

#[test]
fn rejects_non_symplectic_generators() {
    let g = Metric::identity(1);
    assert_eq!(
        QuadraticHamiltonian::from_infinitesimal(&g, &[(0, m(&[&[1]]))], 2),
        Err(QuantizationError::NotInfinitesimallySymplectic(0))
    );
    // A_0 antisymmetric for η = 1 is allowed
    let g2 = Metric::identity(2);
    assert!(QuadraticHamiltonian::from_infinitesimal(&g2, &[(0, m(&[&[0, 1], &[-1, 0]]))], 2).is_ok());
}

#[test]
fn symplectic_series_checks() {
    let g = Metric::identity(1);
    let bad = vec![m(&[&[1]]), m(&[&[1]]), m(&[&[0]])];
    assert_eq!(SymplecticSeries::new(SeriesKind::S, &g, bad), Err(QuantizationError::NotSymplectic(2)));
    let s = SymplecticSeries::a1_calibration(&rat(1, 2), 6);
    for j in 0..=6usize {
        assert_eq!(s.coeff(j), vec![vec![rat(1, 2).pow(j as i32) / factorial(j as u32)]]);
    }
    // rank two with a non-diagonal metric: A = η^{-1}B with B symmetric is self-adjoint
    let g = a2_metric();
    let a: Matrix = vec![vec![rat(1, 3), rat(2, 3)], vec![rat(2, 3), rat(1, 3)]];
    assert_eq!(g.adjoint(&a), a.clone());
    assert!(SymplecticSeries::exponential(SeriesKind::S, &g, &a, 5).is_ok());
}

fn a2_series(order: usize) -> (Metric, SymplecticSeries) {
    let g = a2_metric();
    let a: Matrix = vec![vec![rat(1, 3), rat(2, 3)], vec![rat(2, 3), rat(1, 3)]];
    let s = SymplecticSeries::exponential(SeriesKind::S, &g, &a, order).unwrap();
    (g, s)
}

#[test]
fn series_inverse() {
    let (_, s) = a2_series(6);
    let inv = s.inverse();
    for n in 0..=6 {
        let mut acc: Matrix = vec![vec![Rational::zero(); 2]; 2];
        for j in 0..=n {
            let (x, y) = (s.coeff(j), inv.coeff(n - j));
            for r in 0..2 {
                for c in 0..2 {
                    for k in 0..2 {
                        acc[r][c] += &x[r][k] * &y[k][c];
                    }
                }
            }
        }
        let expect = if n == 0 { m(&[&[1, 0], &[0, 1]]) } else { m(&[&[0, 0], &[0, 0]]) };
        assert_eq!(acc, expect);
    }
}

#[test]
fn w_of_exponential_matches_closed_form() {
    // (e^{t(x+y)} - 1)/(x+y) = Σ t^{n+1} (x+y)^n / (n+1)!
    let t = rat(2, 5);
    let s = SymplecticSeries::a1_calibration(&t, 7);
    let w = w_coeffs(&s, &Metric::identity(1)).unwrap();
    for k in 0..7usize {
        for l in 0..(7 - k) {
            let n = (k + l) as u32;
            let expect = t.pow(n as i32 + 1) * binomial_int(n as i64, k as u32) / factorial(n + 1);
            assert_eq!(w[&(k, l)], vec![vec![expect]], "W_{k}{l}");
        }
    }
    assert!(!w.contains_key(&(7, 0)));
}

#[test]
fn w_times_denominator_reproduces_numerator() {
    let (g, s) = a2_series(6);
    let w = w_coeffs(&s, &g).unwrap();
    let order = 6usize;
    let mul = |a: &Matrix, b: &Matrix| -> Matrix {
        (0..2).map(|r| (0..2).map(|c| (0..2).map(|k| &a[r][k] * &b[k][c]).sum()).collect()).collect()
    };
    for total in 1..=order {
        for a in 0..=total {
            let b = total - a;
            let num = mul(&g.adjoint(&s.coeff(a)), &s.coeff(b));
            let zero = vec![vec![Rational::zero(); 2]; 2];
            let left = if a > 0 { w[&(a - 1, b)].clone() } else { zero.clone() };
            let right = if b > 0 { w[&(a, b - 1)].clone() } else { zero.clone() };
            let sum: Matrix = (0..2).map(|r| (0..2).map(|c| &left[r][c] + &right[r][c]).collect()).collect();
            assert_eq!(sum, num, "degree ({a},{b})");
        }
    }
}

#[test]
fn w_symmetry_and_trivial_series() {
    let (g, s) = a2_series(6);
    let w = w_coeffs(&s, &g).unwrap();
    for ((k, l), mat) in &w {
        assert_eq!(&g.adjoint(&w[&(*l, *k)]), mat);
    }
    let one = SymplecticSeries::identity(SeriesKind::S, 2);
    assert!(w_coeffs(&one, &g).unwrap().values().all(|m| m.iter().flatten().all(|x| x.is_zero())));
}

#[test]
fn v_of_linear_r() {
    let r = rat(3, 7);
    let g = Metric::identity(1);
    let series = SymplecticSeries::new(SeriesKind::R, &g, vec![m(&[&[1]]), vec![vec![r.clone()]]]).unwrap();
    let v = v_coeffs(&series, &g).unwrap();
    assert_eq!(v[&(0, 0)], vec![vec![r.clone()]]);
    assert_eq!(v.len(), 1);
    // e^{rz}: V_{kl} = (-1)^{k+l} r^{n+1} C(n,k)/(n+1)!, n = k + l
    let series = SymplecticSeries::exponential(SeriesKind::R, &g, &vec![vec![r.clone()]], 6).unwrap();
    let v = v_coeffs(&series, &g).unwrap();
    for ((k, l), mat) in &v {
        let n = (k + l) as u32;
        let sign = if n.is_multiple_of(2) { int(1) } else { int(-1) };
        let expect = sign * r.pow(n as i32 + 1) * binomial_int(n as i64, *k as u32) / factorial(n + 1);
        assert_eq!(mat, &vec![vec![expect]]);
    }
    assert!(matches!(
        v_coeffs(&SymplecticSeries::identity(SeriesKind::S, 1), &g),
        Err(QuantizationError::WrongKind(_))
    ));
}

fn mono(vars: &[(u16, u16)]) -> VarMono {
    VarMono::new(vars.iter().map(|(i, k)| q(*i, *k)).collect())
}

#[test]
fn tameness() {
    let t = Truncation { genus_max: 2, weight_max: None, euler_max: None };
    let mut f = TameSeries::around_dilaton(1, t);
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 0)]), Cyclotomic::one());
    f.add_term(1, mono(&[(0, 1)]), cr(1, 24));
    f.add_term(2, mono(&[(0, 4)]), cr(1, 1152));
    assert!(f.is_tame());
    let mut g = f.clone();
    g.add_term(0, mono(&[(0, 0), (0, 0), (0, 1)]), Cyclotomic::one());
    assert!(!g.is_tame());
    let mut g = f.clone();
    g.add_term(1, mono(&[(0, 2)]), Cyclotomic::one());
    assert!(!g.is_tame());
}

/// Polynomial in q_0..q_4 of ψ-weight at most 4 and genus at most 1.
fn sample(base_point: bool) -> TameSeries {
    let t = Truncation { genus_max: 1, weight_max: Some(4), euler_max: None };
    let mut f = if base_point { TameSeries::around_dilaton(1, t) } else { TameSeries::new(1, t) };
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 0)]), Cyclotomic::one());
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 0), (0, 1)]), cr(1, 2));
    f.add_term(0, mono(&[(0, 1), (0, 3)]), cr(-2, 3));
    f.add_term(1, mono(&[(0, 1)]), cr(1, 24));
    f.add_term(1, mono(&[(0, 2), (0, 0)]), cr(5, 7));
    f.add_term(1, mono(&[(0, 4)]), cr(1, 3));
    f
}

#[test]
fn s_hat_round_trip() {
    let s = SymplecticSeries::a1_calibration(&rat(1, 2), 8);
    let g = Metric::identity(1);
    for base in [false, true] {
        let f = sample(base);
        let there = s_hat_inverse_apply(&s, &g, &f).unwrap();
        assert_ne!(there, f);
        let back = s_hat_apply(&s, &g, &there).unwrap();
        assert_eq!(back, f);
    }
}

#[test]
fn s_hat_inverse_shifts_the_base_point() {
    let t = rat(1, 2);
    let s = SymplecticSeries::a1_calibration(&t, 8);
    let f = TameSeries::around_dilaton(1, Truncation { genus_max: 0, weight_max: Some(3), euler_max: None });
    let out = s_hat_inverse_apply(&s, &Metric::identity(1), &f).unwrap();
    assert_eq!(out.base[&q(0, 0)], Cyclotomic::from_rational(t));
    assert_eq!(out.base[&q(0, 1)], -Cyclotomic::one());
    assert_eq!(out.base.len(), 2);
}

#[test]
fn s_hat_needs_enough_terms() {
    let s = SymplecticSeries::a1_calibration(&rat(1, 2), 3);
    let f = sample(true);
    assert!(matches!(s_hat_inverse_apply(&s, &Metric::identity(1), &f), Err(QuantizationError::TruncationExceeded(_))));
    let unbounded = TameSeries::new(1, Truncation { genus_max: 1, weight_max: None, euler_max: None });
    let s = SymplecticSeries::a1_calibration(&rat(1, 2), 8);
    assert!(matches!(
        s_hat_inverse_apply(&s, &Metric::identity(1), &unbounded),
        Err(QuantizationError::TruncationExceeded(_))
    ));
}

fn r_series(r: &Rational, order: usize) -> SymplecticSeries {
    SymplecticSeries::exponential(SeriesKind::R, &Metric::identity(1), &vec![vec![r.clone()]], order).unwrap()
}

#[test]
fn r_hat_of_cubic() {
    // ½V_00 ∂²(s_0³/6) = (r/2) s_0 at genus one; the rest exceeds 2g-2+ℓ ≤ 1
    let r = rat(3, 5);
    let t = Truncation { genus_max: 1, weight_max: None, euler_max: Some(1) };
    let mut f = TameSeries::new(1, t);
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 0)]), cr(1, 6));
    let out = r_hat_apply(&r_series(&r, 3), &Metric::identity(1), &f).unwrap();
    assert_eq!(out.coeff(0, &mono(&[(0, 0), (0, 0), (0, 0)])), cr(1, 6));
    assert_eq!(out.coeff(1, &mono(&[(0, 0)])), Cyclotomic::from_rational(r / int(2)));
    assert_eq!(out.len(), 2);
}

#[test]
fn r_hat_identity_and_errors() {
    let t = Truncation { genus_max: 2, weight_max: None, euler_max: Some(3) };
    let mut f = TameSeries::around_dilaton(1, t);
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 1)]), Cyclotomic::one());
    let one = SymplecticSeries::new(SeriesKind::R, &Metric::identity(1), vec![m(&[&[1]]); 1]).unwrap();
    assert!(matches!(r_hat_apply(&one, &Metric::identity(1), &f), Err(QuantizationError::NotTame { .. })));

    let mut f = TameSeries::around_dilaton(1, t);
    f.add_term(0, mono(&[(0, 0), (0, 0), (0, 0)]), Cyclotomic::one());
    f.add_term(1, mono(&[(0, 1)]), cr(1, 24));
    let ident = SymplecticSeries::new(SeriesKind::R, &Metric::identity(1), {
        let mut v = vec![m(&[&[1]])];
        v.extend(std::iter::repeat_n(m(&[&[0]]), 9));
        v
    })
    .unwrap();
    assert_eq!(r_hat_apply(&ident, &Metric::identity(1), &f).unwrap(), f);
    assert!(matches!(
        r_hat_apply(&r_series(&rat(1, 2), 3), &Metric::identity(1), &f),
        Err(QuantizationError::TruncationExceeded(_))
    ));

    let mut g = TameSeries::new(1, t);
    g.add_term(1, VarMono::one(), Cyclotomic::one());
    assert!(matches!(r_hat_apply(&ident, &Metric::identity(1), &g), Err(QuantizationError::Unstable { .. })));
}

fn tame_terms() -> impl Strategy<Value = Vec<(usize, Vec<u16>, i64)>> {
    // (genus, levels, coefficient) with 1 ≤ 2g-2+ℓ ≤ 3 and Σ levels ≤ 3g-3+ℓ
    let term = (0usize..3, prop::collection::vec(0u16..4, 0..5), -5i64..6).prop_filter_map("tame", |(g, mut ls, c)| {
        let l = ls.len() as i64;
        let e = 2 * g as i64 - 2 + l;
        if !(1..=3).contains(&e) || c == 0 {
            return None;
        }
        ls.sort();
        let budget = 3 * g as i64 - 3 + l;
        let sum: i64 = ls.iter().map(|x| *x as i64).sum();
        (sum <= budget).then_some((g, ls, c))
    });
    prop::collection::vec(term, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn r_hat_preserves_tameness(terms in tame_terms(), rn in -3i64..4) {
        let t = Truncation { genus_max: 2, weight_max: None, euler_max: Some(3) };
        let mut f = TameSeries::around_dilaton(1, t);
        for (g, ls, c) in &terms {
            f.add_term(*g, VarMono::new(ls.iter().map(|k| q(0, *k)).collect()), Cyclotomic::from_int(*c));
        }
        prop_assume!(f.is_tame() && !f.is_empty());
        let out = r_hat_apply(&r_series(&rat(rn, 2), 9), &Metric::identity(1), &f).unwrap();
        prop_assert!(out.is_tame());
    }
}
