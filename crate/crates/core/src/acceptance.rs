//! The acceptance suite: ten exact checks, each reported as pass or fail with a short
//! summary. Every tolerance is exact equality.

use std::sync::Arc;
use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::a1_suite::{self, A1Error};
use crate::exact_arith::{int, rat, Cyclotomic, Rational};
use crate::lattice_va::{minuscule_orbit, LatticeError, LatticeState, LatticeVa};
use crate::parallel::maybe_parallel_map;
use crate::quantization::{
    omega_pairing, quantize_linear, s_hat_apply, s_hat_inverse_apply, LoopVector, Metric, QuantizationError,
    SymplecticSeries, TameSeries, Truncation,
};
use crate::root_system::{to_cyc, RootSystem};
use crate::twisted_fock::{
    c_table, compose, CTable, LaurentWindow, NormalOrderedOperator, OpKey, QPoly, Topology, TwistedError, TwistedFock,
    Var, VarMono,
};

/// Number of random Borcherds instances.
pub const BORCHERDS_INSTANCES: usize = 240;
/// Seed of the Borcherds sampler.
pub const BORCHERDS_SEED: u64 = 0x5eed_b0c4;
const BORCHERDS_MODES: std::ops::RangeInclusive<i64> = -3..=2;
/// Truncation used for the correlator mutation sweep.
pub const MUTATION_GENUS: usize = 2;
pub const MUTATION_WEIGHT: u32 = 9;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Twisted(#[from] TwistedError),
    #[error(transparent)]
    A1(#[from] A1Error),
    #[error(transparent)]
    Quantization(#[from] QuantizationError),
    #[error("unknown root system {0}")]
    RootSystem(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {} ({:.1}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

type Check = fn() -> Result<(bool, String), CheckError>;

const CRITERIA: [(u8, &str, Check); 10] = [
    (1, "W-membership table", w_membership),
    (2, "Virasoro relations on V_Q", virasoro_on_lattice),
    (3, "Borcherds identity, random instances", borcherds_random),
    (4, "twisted product formula", twisted_products),
    (5, "propagator values", propagators),
    (6, "c-coefficients and the lattice field identity", c_coefficients_and_lattice_fields),
    (7, "A1 Virasoro operators vs reference table", a1_table),
    (8, "Witten-Kontsevich annihilation", wk_annihilation),
    (9, "quantization laws", quantization_laws),
    (10, "mutation sensitivity", mutation_sensitivity),
];

pub fn criterion_ids() -> Vec<u8> {
    CRITERIA.iter().map(|c| c.0).collect()
}

pub fn run_one(id: u8) -> Option<Outcome> {
    let (id, name, f) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Outcome { id: *id, name, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<Outcome> {
    criterion_ids().into_iter().filter_map(run_one).collect()
}

fn rs(name: &str) -> Result<Arc<RootSystem>, CheckError> {
    RootSystem::parse(name).map(Arc::new).map_err(|_| CheckError::RootSystem(name.into()))
}

fn w_membership() -> Result<(bool, String), CheckError> {
    let mut checked = 0;
    let mut failures = Vec::new();
    for name in ["A2", "A3", "D4"] {
        let v = LatticeVa::new(rs(name)?);
        let orbit = minuscule_orbit(v.root_system())?;
        let mut elements: Vec<(String, LatticeState)> = vec![("omega".into(), v.build_omega())];
        for d in 1..=3 {
            elements.push((format!("omega^{d}"), v.build_omega_d(d)?));
        }
        for d in 1..=2 {
            elements.push((format!("nu^{d}"), v.build_nu_d(&orbit, d)));
        }
        if name == "D4" {
            elements.push(("pi^4".into(), v.build_pi_n()?));
        }
        for (label, x) in &elements {
            checked += 1;
            if !v.in_w_algebra(x)? {
                failures.push(format!("{name} {label}"));
            }
        }
    }
    Ok((failures.is_empty(), format!("{checked} elements; failures: {failures:?}")))
}

fn virasoro_on_lattice() -> Result<(bool, String), CheckError> {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["A2", "D4"] {
        let v = LatticeVa::new(rs(name)?);
        let fails = v.virasoro_check(5, 3, &int(v.rank() as i64))?;
        ok &= fails.is_empty();
        details.push(format!("{name}: {} failures", fails.len()));
    }
    Ok((ok, format!("weight ≤ 5, |m|,|n| ≤ 3, c = rank; {}", details.join(", "))))
}

fn borcherds_random() -> Result<(bool, String), CheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(BORCHERDS_SEED);
    let mut instances = Vec::new();
    for name in ["A1", "A2"] {
        let v = LatticeVa::new(rs(name)?);
        let basis = v.basis_up_to(3);
        let mut drawn = 0;
        while drawn < BORCHERDS_INSTANCES / 2 {
            let mut pick = || {
                let t = &basis[rng.gen_range(0..basis.len())];
                LatticeState::basis(t.mono.clone(), t.lattice.clone())
            };
            let (a, b, c) = (pick(), pick(), pick());
            let (m, n, k) =
                (rng.gen_range(BORCHERDS_MODES), rng.gen_range(BORCHERDS_MODES), rng.gen_range(BORCHERDS_MODES));
            // both sides live in weight wa + wb + wc - m - n - k - 2; keep it in range
            let w: i64 = [&a, &b, &c].iter().filter_map(|x| x.max_weight(v.root_system())).sum();
            if w - m - n - k - 2 > v.truncation() {
                continue;
            }
            drawn += 1;
            instances.push((name, a, b, c, m, n, k));
        }
    }
    let vas = [LatticeVa::new(rs("A1")?), LatticeVa::new(rs("A2")?)];
    let results = maybe_parallel_map(&instances, |(name, a, b, c, m, n, k)| {
        let v = if *name == "A1" { &vas[0] } else { &vas[1] };
        v.borcherds_sides(a, b, c, *m, *n, *k).map(|(l, r)| (l == r, !l.is_zero()))
    });
    let mut failed = 0;
    let mut nontrivial = 0;
    for r in results {
        let (holds, nonzero) = r?;
        failed += usize::from(!holds);
        nontrivial += usize::from(nonzero);
    }
    Ok((
        failed == 0,
        format!(
            "{} instances (seed {BORCHERDS_SEED:#x}), {nontrivial} with nonzero sides, {failed} failures",
            instances.len()
        ),
    ))
}

fn twisted_products() -> Result<(bool, String), CheckError> {
    let polys =
        [QPoly::one(), QPoly::from_vars(&[Var::new(0, 0)]), QPoly::from_vars(&[Var::new(0, 0), Var::new(0, 1)])];
    let win = LaurentWindow::ints(-6, 1);
    let mut checked = 0;
    let mut failures = Vec::new();
    for name in ["A1", "A2"] {
        let tf = TwistedFock::new(rs(name)?);
        let n = tf.rank();
        let mut polys = polys.to_vec();
        if n > 1 {
            polys.push(QPoly::from_vars(&[Var::new(0, 0), Var::new(1, 1)]));
        }
        for i in 0..n {
            for j in 0..n {
                let a = tf.lattice().simple(i);
                let b = tf.lattice().simple(j);
                for k in 0..=2 {
                    for c in &polys {
                        checked += 1;
                        if !tf.twisted_product_check(&a, &b, k, c, &win)?.holds() {
                            failures.push(format!("{name} ({i},{j}) k={k}"));
                        }
                    }
                }
            }
        }
    }
    Ok((failures.is_empty(), format!("{checked} cases; failures: {failures:?}")))
}

fn propagators() -> Result<(bool, String), CheckError> {
    let tf = TwistedFock::new(rs("A1")?);
    let beta = to_cyc(&[1]);
    let p0 = tf.propagator_coeff(&beta, &beta, 0);
    let a1_ok = p0.coeff == Cyclotomic::from_rational(rat(1, 4)) && p0.power == int(-2);
    let mut pairs = 0;
    let mut nonzero = 0;
    for name in ["A2", "A3"] {
        let tf = TwistedFock::new(rs(name)?);
        let frame = tf.rs().eigenframe().clone();
        let vs: Vec<&Vec<Cyclotomic>> = frame.vectors.iter().chain(frame.duals.iter()).collect();
        for a in &vs {
            for b in &vs {
                pairs += 1;
                nonzero += usize::from(!tf.propagator_xi_inverse(a, b).is_zero());
            }
        }
    }
    Ok((
        a1_ok && nonzero == 0,
        format!("A1 P^0 = {:?} λ^{}; ξ^-1 nonzero on {nonzero} of {pairs} frame pairs", p0.coeff, p0.power),
    ))
}

/// Criterion 6 against a given table: failures of `c_0 = 1`, of the symmetries, and of the
/// lattice field identity.
fn c_suite(
    table_a2: &CTable,
    table_a3: &CTable,
    pair_roots: Option<&[Vec<i64>]>,
) -> Result<(usize, usize), CheckError> {
    let mut sym_fail = 0;
    for (name, table) in [("A2", table_a2), ("A3", table_a3)] {
        let r = rs(name)?;
        for a in &r.roots {
            if table.get(a, 0) != Some(&Cyclotomic::one()) {
                sym_fail += 1;
            }
            let neg: Vec<i64> = a.iter().map(|x| -x).collect();
            let sa = r.sigma_pow(1, a);
            for k in 0..=4 {
                if table.get(a, k) != table.get(&neg, k) || table.get(a, k) != table.get(&sa, k) {
                    sym_fail += 1;
                }
            }
        }
    }
    let tf = TwistedFock::new(rs("A2")?);
    let all_roots = tf.rs().roots.clone();
    let roots = pair_roots.unwrap_or(&all_roots);
    let win = LaurentWindow::ints(-5, 1);
    let mut field_fail = 0;
    for a in roots {
        for d in 1..=2 {
            if !tf.exponential_pair_check(table_a2, a, d, &win, 3)?.is_empty() {
                field_fail += 1;
            }
        }
    }
    Ok((sym_fail, field_fail))
}

fn c_coefficients_and_lattice_fields() -> Result<(bool, String), CheckError> {
    let (t2, t3) = (c_table(&*rs("A2")?, 4), c_table(&*rs("A3")?, 4));
    let (sym, field) = c_suite(&t2, &t3, None)?;
    Ok((
        sym == 0 && field == 0,
        format!("k ≤ 4 on A2/A3: {sym} symmetry failures; A2 d = 1,2: {field} field identity failures"),
    ))
}

/// `L_{-1}, …, L_2` written out term by term, each term whose derivative has level
/// at most `cap`.
pub fn reference_virasoro(m: i64, cap: u16) -> Option<NormalOrderedOperator> {
    let v = |l: i64| Var::new(0, l as u16);
    let c = |n: i64, d: i64| Cyclotomic::from_rational(rat(n, d));
    let top = cap as i64;
    let mut terms: Vec<(i32, Vec<Var>, Vec<Var>, Cyclotomic)> = Vec::new();
    match m {
        -1 => {
            terms.push((-2, vec![v(0), v(0)], vec![], c(1, 2)));
            terms.extend((0..=top).map(|k| (0, vec![v(k + 1)], vec![v(k)], c(1, 1))));
        }
        0 => {
            terms.push((0, vec![], vec![], c(1, 16)));
            terms.extend((0..=top).map(|k| (0, vec![v(k)], vec![v(k)], c(2 * k + 1, 2))));
        }
        1 => {
            terms.push((2, vec![], vec![v(0), v(0)], c(1, 8)));
            terms.extend((0..top).map(|k| (0, vec![v(k)], vec![v(k + 1)], c((2 * k + 3) * (2 * k + 1), 4))));
        }
        2 => {
            terms.push((2, vec![], vec![v(0), v(1)], c(3, 8)));
            terms.extend(
                (0..top - 1).map(|k| (0, vec![v(k)], vec![v(k + 2)], c((2 * k + 5) * (2 * k + 3) * (2 * k + 1), 8))),
            );
        }
        _ => return None,
    }
    let mut op = NormalOrderedOperator::zero();
    for (h, vars, ders, coeff) in terms {
        op.add_term(
            OpKey { lambda: Rational::zero(), hbar_half: h, vars: VarMono::new(vars), ders: VarMono::new(ders) },
            coeff,
        );
    }
    Some(op)
}

fn a1_table() -> Result<(bool, String), CheckError> {
    let cap = 12;
    let ops = a1_suite::a1_virasoro_family(-1..=2, &Rational::zero(), cap)?;
    let mut mismatched = Vec::new();
    for l in ops {
        let mut got = l.op;
        got.level_cap = None;
        got.window = None;
        if Some(got) != reference_virasoro(l.m, cap) {
            mismatched.push(l.m);
        }
    }
    Ok((mismatched.is_empty(), format!("L_-1..L_2 at level cap {cap}; mismatched m: {mismatched:?}")))
}

fn wk_annihilation() -> Result<(bool, String), CheckError> {
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [None, Some(int(2)), Some(rat(1, 3))] {
        let r = a1_suite::check_annihilation(-1..=5, 3, 12, delta.as_ref())?;
        ok &= r.passed();
        let label = delta.map_or("Δ = 1".to_string(), |d| format!("Δ = {d}"));
        parts.push(format!("{label}: {} checked, {} nonzero", r.checked, r.residuals.len()));
    }
    Ok((ok, format!("m = -1..5, genus ≤ 3, weight ≤ 12; {}", parts.join("; "))))
}

fn quantization_laws() -> Result<(bool, String), CheckError> {
    let mut pairs = 0;
    let mut bad = 0;
    let zero = Rational::zero();
    let scalar = OpKey { lambda: zero.clone(), hbar_half: 0, vars: VarMono::one(), ders: VarMono::one() };
    let metrics = [Metric::identity(1), Metric::new(vec![vec![int(2), int(-1)], vec![int(-1), int(2)]])?];
    for g in &metrics {
        let mut basis = Vec::new();
        for k in 0..=4 {
            for i in 0..g.rank() {
                basis.push(LoopVector::plus_basis(g.rank(), i, k));
                basis.push(LoopVector::minus_basis(g, i, k));
            }
        }
        for x in &basis {
            let xh = quantize_linear(g, x);
            for y in &basis {
                let yh = quantize_linear(g, y);
                let xy = compose(&xh, &yh, Topology::AtPoint)?.at_mu_power(&zero);
                let yx = compose(&yh, &xh, Topology::AtPoint)?.at_mu_power(&zero);
                let c = &xy - &yx;
                pairs += 1;
                if c.len() > 1 || c.coeff(&scalar) != omega_pairing(g, x, y) {
                    bad += 1;
                }
            }
        }
    }
    let s = SymplecticSeries::a1_calibration(&rat(1, 2), 8);
    let g = Metric::identity(1);
    let f = round_trip_sample();
    let there = s_hat_inverse_apply(&s, &g, &f)?;
    let back = s_hat_apply(&s, &g, &there)?;
    let round_trip = back == f && there != f;
    Ok((
        bad == 0 && round_trip,
        format!("{pairs} Darboux pairs, {bad} failures; Ŝ round trip at t = 1/2, weight ≤ 4: {round_trip}"),
    ))
}

fn round_trip_sample() -> TameSeries {
    let t = Truncation { genus_max: 2, weight_max: Some(4), euler_max: None };
    let table = a1_suite::dvv_oracle(2, 4);
    let mut f = TameSeries::around_dilaton(1, t);
    for (g, ks, v) in table.iter() {
        let mono = VarMono::new(ks.iter().map(|&k| Var::new(0, k as u16)).collect());
        let c = v / mono.aut();
        f.add_term(g, mono, Cyclotomic::from_rational(c));
    }
    f
}

fn mutation_sensitivity() -> Result<(bool, String), CheckError> {
    // every correlator of a smaller truncation, perturbed in turn
    let (g, w) = (MUTATION_GENUS, MUTATION_WEIGHT);
    let table = a1_suite::dvv_oracle(g, w);
    let ops = a1_suite::a1_virasoro_family(-1..=5, &Rational::zero(), w as u16 + 1)?;
    let entries: Vec<(usize, Vec<u32>, Rational)> = table.iter().map(|(g, k, v)| (g, k.to_vec(), v.clone())).collect();
    let detected = maybe_parallel_map(&entries, |(genus, ks, v)| -> Result<bool, CheckError> {
        let mut t = table.clone();
        t.set(*genus, ks, v + rat(1, 101));
        let f = a1_suite::wk_tau(&t, g, w)?;
        Ok(!a1_suite::check_annihilation_with(&ops, &f)?.passed())
    });
    let mut missed_corr = Vec::new();
    for ((genus, ks, _), d) in entries.iter().zip(detected) {
        if !d? {
            missed_corr.push(format!("g{genus} {ks:?}"));
        }
    }
    // every c_k^α with k ≤ 4 on A2 and A3
    let (t2, t3) = (c_table(&*rs("A2")?, 4), c_table(&*rs("A3")?, 4));
    let mut keys: Vec<(&str, Vec<i64>, u32)> = Vec::new();
    for (name, t) in [("A2", &t2), ("A3", &t3)] {
        keys.extend(t.iter().map(|((a, k), _)| (name, a.clone(), *k)));
    }
    let c_results = maybe_parallel_map(&keys, |(name, a, k)| -> Result<(bool, bool), CheckError> {
        let (mut m2, mut m3) = (t2.clone(), t3.clone());
        let target = if *name == "A2" { &mut m2 } else { &mut m3 };
        let old = target.get(a, *k).cloned().unwrap_or_else(Cyclotomic::zero);
        target.set(a, *k, &old + &Cyclotomic::one());
        let only = [a.clone()];
        let roots = (*name == "A2").then_some(&only[..]);
        let (sym, field) = c_suite(&m2, &m3, roots.or(Some(&[])))?;
        Ok((sym + field > 0, field > 0))
    });
    let mut missed_c = Vec::new();
    let mut by_field = 0;
    for ((name, a, k), r) in keys.iter().zip(c_results) {
        let (hit, field) = r?;
        by_field += usize::from(field);
        if !hit {
            missed_c.push(format!("{name} {a:?} k={k}"));
        }
    }
    let ok = missed_corr.is_empty() && missed_c.is_empty();
    Ok((
        ok,
        format!(
            "{} correlators (genus ≤ {g}, weight ≤ {w}), undetected: {missed_corr:?}; {} c_k entries, undetected: {missed_c:?}, {by_field} caught by the field identity alone",
            entries.len(),
            keys.len()
        ),
    ))
}
