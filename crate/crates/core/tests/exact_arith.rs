use num_traits::{One, Zero};
use proptest::prelude::*;
use walg::exact_arith::{
    binomial_int, euler_phi, factorial, gen_binomial, int, odd_double_factorial, parse_rational, pochhammer, rat,
    Cyclotomic, Rational,
};

const ORDERS: [u32; 7] = [1, 2, 3, 4, 5, 8, 12];

fn small_rat() -> impl Strategy<Value = Rational> {
    (-20i64..=20, 1i64..=9).prop_map(|(n, d)| rat(n, d))
}

fn cyc() -> impl Strategy<Value = Cyclotomic> {
    (prop::sample::select(&ORDERS[..]), prop::collection::vec(small_rat(), 0..6))
        .prop_map(|(n, c)| Cyclotomic::from_coeffs(n, c))
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    let scale = 1.0 + a.0.abs() + a.1.abs();
    (a.0 - b.0).abs() < 1e-9 * scale && (a.1 - b.1).abs() < 1e-9 * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ring_laws(a in cyc(), b in cyc(), c in cyc()) {
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&a - &a, Cyclotomic::zero());
        prop_assert_eq!(&a * &Cyclotomic::one(), a.clone());
    }

    #[test]
    fn products_match_complex_numbers(a in cyc(), b in cyc()) {
        let (x, y) = (a.approx_complex(), b.approx_complex());
        let expected = (x.0 * y.0 - x.1 * y.1, x.0 * y.1 + x.1 * y.0);
        prop_assert!(close((&a * &b).approx_complex(), expected));
        prop_assert!(close((&a + &b).approx_complex(), (x.0 + y.0, x.1 + y.1)));
    }

    #[test]
    fn inverses(a in cyc()) {
        match a.inv() {
            Ok(i) => prop_assert_eq!(&a * &i, Cyclotomic::one()),
            Err(_) => prop_assert!(a.is_zero()),
        }
    }

    #[test]
    fn embedding_keeps_the_value(a in cyc(), k in 1u32..=3) {
        let e = a.embed_order(a.order() * k).unwrap();
        prop_assert_eq!(&e, &a);
        prop_assert!(close(e.approx_complex(), a.approx_complex()));
        let m = e.minimal_order();
        prop_assert_eq!(&m, &a);
        prop_assert!(a.order() % m.order() == 0);
    }

    #[test]
    fn serde_round_trip(a in cyc()) {
        let s = serde_json::to_string(&a).unwrap();
        let b: Cyclotomic = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(serde_json::to_string(&b).unwrap(), s);
        prop_assert_eq!(b, a);
    }

    #[test]
    fn square_roots(n in 1i64..=40, d in 1i64..=12) {
        let q = rat(n, d);
        let r = Cyclotomic::sqrt_rational(&q);
        prop_assert_eq!(&r * &r, Cyclotomic::from_rational(q.clone()));
        let neg = Cyclotomic::sqrt_rational(&-q.clone());
        prop_assert_eq!(&neg * &neg, Cyclotomic::from_rational(-q));
    }

    #[test]
    fn integer_powers(a in cyc(), e in -3i64..=4) {
        prop_assume!(!a.is_zero());
        let mut expected = Cyclotomic::one();
        for _ in 0..e.unsigned_abs() {
            expected = &expected * &a;
        }
        if e < 0 {
            expected = expected.inv().unwrap();
        }
        prop_assert_eq!(a.pow(e).unwrap(), expected);
    }

    #[test]
    fn rational_text_round_trip(q in small_rat()) {
        prop_assert_eq!(parse_rational(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn generalized_binomial_pascal(p in small_rat(), j in 1u32..=7) {
        prop_assert_eq!(gen_binomial(&(&p + int(1)), j), gen_binomial(&p, j) + gen_binomial(&p, j - 1));
    }

    #[test]
    fn pochhammer_and_factorials(x in small_rat(), k in 0u32..=7) {
        prop_assert_eq!(pochhammer(&x, k + 1), pochhammer(&x, k) * (&x + int(k as i64)));
        prop_assert_eq!(pochhammer(&int(1), k), factorial(k));
        prop_assert_eq!(odd_double_factorial(k + 1), odd_double_factorial(k) * int(2 * k as i64 + 1));
    }
}

#[test]
fn roots_of_unity() {
    for &n in &ORDERS {
        let z = Cyclotomic::zeta_pow(n, 1);
        assert_eq!(z.pow(n as i64).unwrap(), Cyclotomic::one());
        // the n-th roots of unity sum to zero past n = 1
        let sum = (0..n as i64).fold(Cyclotomic::zero(), |s, k| &s + &Cyclotomic::zeta_pow(n, k));
        assert_eq!(sum.is_zero(), n > 1);
        assert_eq!(z.coeffs().len(), euler_phi(n));
    }
    // ζ_4 = i, ζ_3 + ζ_3² = -1, ζ_8² = i
    let i = Cyclotomic::zeta_pow(4, 1);
    assert_eq!(&i * &i, Cyclotomic::from_int(-1));
    assert_eq!(&Cyclotomic::zeta_pow(3, 1) + &Cyclotomic::zeta_pow(3, 2), Cyclotomic::from_int(-1));
    assert_eq!(Cyclotomic::zeta_pow(8, 2), i);
}

#[test]
fn combinatorial_values() {
    // Pascal's triangle oracle up to row 12, and negative upper index by reflection
    let mut row = vec![Rational::one()];
    for n in 1..=12i64 {
        let mut next = vec![Rational::one(); n as usize + 1];
        for j in 1..n as usize {
            next[j] = &row[j - 1] + &row[j];
        }
        row = next;
        for (j, v) in row.iter().enumerate() {
            assert_eq!(&binomial_int(n, j as u32), v);
            let sign = if j % 2 == 0 { int(1) } else { int(-1) };
            assert_eq!(binomial_int(-n, j as u32), sign * binomial_int(n + j as i64 - 1, j as u32));
        }
    }
    assert_eq!(binomial_int(5, 7), Rational::zero());
    assert_eq!(odd_double_factorial(0), int(1));
    assert_eq!(odd_double_factorial(4), int(105));
    assert_eq!(gen_binomial(&rat(1, 2), 2), rat(-1, 8));
}
