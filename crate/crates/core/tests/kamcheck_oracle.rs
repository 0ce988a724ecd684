//! Independent recomputation of the KAM bookkeeping quantities.

use kamtori::kamcheck::*;
use proptest::prelude::*;

fn pow2(e: f64) -> f64 {
    e.exp2()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn sequence_rows_match_closed_forms() {
    for n in 1..=4 {
        let c = KamConstants { a0: 0.7, b0: 1.3, s0: 0.9, ..KamConstants::with_n(n) };
        let a0p = c.a0 / (pow2((2 * n + 5) as f64) - 1.0);
        let nf = n as f64;
        for row in sequences(&c, 40) {
            let m = row.m as f64;
            assert!(rel(row.sigma, a0p / 6.0 * pow2(-(2.0 * nf + 5.0) * (m + 1.0))) < 1e-15);
            assert!(rel(row.delta, c.b0 / 3.0 * pow2(-(m + 1.0))) < 1e-15);
            assert!(rel(row.n_m, c.c_n * pow2(2.0 * m)) < 1e-15);
            assert!(rel(row.lambda, c.c_lambda * pow2(-(2.0 * nf + 3.0) * m)) < 1e-15);
            assert_eq!(row.log_s, c.s0.ln() - c.c_s * m - pow2(m));
            if row.s > 0.0 && row.s.is_normal() {
                assert!(rel(row.s, row.log_s.exp()) < 1e-15);
            }
        }
    }
}

#[test]
fn radii_telescope() {
    let c = KamConstants::with_n(2);
    let rows = sequences(&c, 40);
    for w in rows.windows(2) {
        assert_eq!(w[0].a, w[1].a + 6.0 * w[0].sigma);
        assert_eq!(w[0].b, w[1].b + 3.0 * w[0].delta);
    }
    let a0p = c.a0_prime();
    let r = pow2(-9.0);
    let big_m = rows.len() - 1;
    let six_sigma: f64 = rows[..big_m].iter().map(|row| 6.0 * row.sigma).sum();
    // 6·Σ_{m<M} σₘ = a'₀·r·(1 − r^M)/(1 − r)
    let closed = a0p * r * (1.0 - r.powi(big_m as i32)) / (1.0 - r);
    assert!(rel(six_sigma, closed) < 1e-12);
    assert!((c.a0 - rows[big_m].a - six_sigma).abs() < 1e-15);
    let three_delta: f64 = rows[..big_m].iter().map(|row| 3.0 * row.delta).sum();
    assert!(rel(three_delta, c.b0 * (1.0 - pow2(-(big_m as f64)))) < 1e-12);
    assert!((c.b0 - rows[big_m].b - three_delta).abs() < 1e-15);
}

#[test]
fn log_s_at_forty_without_underflow() {
    let c = KamConstants::with_n(2);
    let ls = log_s(&c, 40);
    assert_eq!(ls, -40.0 * c.c_s - pow2(40.0));
    assert!(ls.is_finite());
}

/// `Lₘ` summed term by term in ordinary arithmetic where representable.
fn l_direct(c: &KamConstants, m: usize, damped: bool) -> f64 {
    let n1 = c.n as f64 + 1.0;
    let dm = c.b0 / 3.0 * pow2(-(m as f64 + 1.0));
    (0..=m)
        .map(|j| {
            let nj = c.c_n * pow2(2.0 * j as f64);
            let prev = if j == 0 { 0.0 } else { c.c_n * pow2(2.0 * (j - 1) as f64) };
            let lam = c.c_lambda * pow2(-(((2 * c.n + 3) * j) as f64));
            let damp = if damped { (-n1 * dm * prev).exp() } else { 1.0 };
            2.0 * nj.powf(n1) / lam * damp
        })
        .sum()
}

#[test]
fn l_sum_matches_direct_summation() {
    let c = KamConstants { c_n: 4.0, c_lambda: 1e6, ..KamConstants::with_n(2) };
    for m in 0..=20 {
        assert!(rel(log_l(&c, m, true).exp(), l_direct(&c, m, true)) < 1e-12, "m = {m}");
        assert!(rel(log_l(&c, m, false).exp(), l_direct(&c, m, false)) < 1e-12, "m = {m}");
    }
}

#[test]
fn l_first_term_and_bound() {
    for n in 1..=3 {
        let c = KamConstants::with_n(n);
        let first = 2.0 * c.c_n.powi(n as i32 + 1) / c.c_lambda;
        assert!(rel(log_l(&c, 0, true), first.ln()) < 1e-13);
        let bound = (n as f64 + 1.0) * c.c_n.ln() - c.c_lambda.ln() + 2.0 * (4 * n + 5) as f64 * std::f64::consts::LN_2;
        assert!(rel(log_l_bound(&c, 0), bound) < 1e-13);
    }
}

#[test]
fn undamped_l_stays_below_bound() {
    for n in 1..=3 {
        let c = KamConstants::with_n(n);
        for m in 0..=60 {
            assert!(log_l(&c, m, false) <= log_l_bound(&c, m), "n = {n}, m = {m}");
        }
    }
}

#[test]
fn damped_l_is_bounded_by_undamped() {
    let c = KamConstants::with_n(2);
    for m in 0..=60 {
        assert!(log_l(&c, m, true) <= log_l(&c, m, false) + 1e-12);
    }
}

#[test]
fn strip_half_widths_decrease() {
    let c = KamConstants { eps: 1e-4, ..KamConstants::with_n(2) };
    for j in 0..10 {
        for m in j..40 {
            assert!(strip_half_width(&c, j, m + 1) < strip_half_width(&c, j, m));
        }
    }
}

#[test]
fn measure_sum_first_term_and_ratio() {
    let c = KamConstants::with_n(2);
    let ms = measure_sum(&c, 40).unwrap();
    let first = c.c_n.powi(3) * c.c_lambda + c.c_psi * c.c_n.powi(4) * c.a0_prime() / 6.0 * pow2(-9.0);
    assert!(rel(ms.partial_sums[0], first) < 1e-14);
    for w in ms.lambda_terms.windows(2) {
        assert_eq!(w[1] / w[0], 0.5);
    }
    assert!(rel(*ms.partial_sums.last().unwrap(), ms.direct_limit) < 1e-10);
    assert!(ms.discrepancy);
    assert!(ms.sigma_part_stated > ms.sigma_part_direct);
}

#[test]
fn shell_counts_by_enumeration() {
    for dim in 1..=3usize {
        for r in 0..=8usize {
            let side = 2 * r as i64 + 1;
            let mut count = 0;
            for idx in 0..side.pow(dim as u32) {
                let mut k = idx;
                let mut l1 = 0;
                for _ in 0..dim {
                    l1 += (k % side - r as i64).abs();
                    k /= side;
                }
                if l1 == r as i64 {
                    count += 1;
                }
            }
            assert_eq!(shell_count(dim, r), f64::from(count), "dim = {dim}, r = {r}");
        }
    }
}

#[test]
fn cutoff_tail_by_brute_force() {
    // n = 1: K = (k, k₀) ∈ ℤ², sum over |K|₁ > N with k ≠ 0.
    let (delta, big_n) = (0.5, 4usize);
    let mut sum = 0.0;
    for k in -200i64..=200 {
        for k0 in -200i64..=200 {
            let r = (k.abs() + k0.abs()) as usize;
            if k != 0 && r > big_n {
                sum += (-delta * r as f64).exp();
            }
        }
    }
    let t = cutoff_tail(1, delta, big_n);
    assert!(rel(t.upper(), sum) < 1e-12, "{} vs {sum}", t.upper());
}

#[test]
fn cutoff_vanishes_for_large_n() {
    let t = cutoff_tail(2, 0.3, 2000);
    assert!(t.upper() < 1e-200);
}

#[test]
fn block_triangular_jacobian_is_exact() {
    let c = KamConstants { c_h_second: 0.0, ..KamConstants::with_n(1) };
    let r = check_jacobian_bounds(&c, 2000, 11).unwrap();
    assert_eq!(r.status, JacobianStatus::Pass);
    // det = Λ''·d with Λ'' ∈ [c̲, c̄] and |d| ∈ [1/(2c'_h), 2c'_h].
    let lo = c.c_big_lambda_lower / (2.0 * c.c_h_prime);
    let hi = c.c_big_lambda_upper * 2.0 * c.c_h_prime;
    assert!(r.min_abs_det >= lo * (1.0 - 1e-12) && r.max_abs_det <= hi * (1.0 + 1e-12));
}

#[test]
fn jacobian_not_applicable_above_threshold() {
    let mut c = KamConstants::with_n(2);
    c.c_h_second = 10.0 * c.c_h_second_thresholds().1;
    assert_eq!(check_jacobian_bounds(&c, 10, 1).unwrap().status, JacobianStatus::NotApplicable);
}

#[test]
fn smaller_horizon_keeps_a_passing_ledger() {
    let found = search_constants(&KamConstants::with_n(2), 40).unwrap();
    for m in [0, 5, 20, 39] {
        assert!(check_inequalities(&found.report.constants, m).unwrap().pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn family_one_slack_eventually_improves(c_s in 57.0f64..160.0) {
        let c = KamConstants { c_s, ..KamConstants::with_n(2) };
        let r = check_inequalities(&c, 40).unwrap();
        let s = r.family_slack("i.s_tilde");
        for m in 10..s.len() - 1 {
            if let (Some(a), Some(b)) = (s[m], s[m + 1]) {
                prop_assert!(b >= a, "m = {m}: {a} -> {b}");
            }
        }
    }

    #[test]
    fn searched_triples_are_sound(n in 1usize..=3, a0 in 0.5f64..2.0, b0 in 0.5f64..2.0) {
        let fixed = KamConstants { a0, b0, ..KamConstants::with_n(n) };
        let found = search_constants(&fixed, 20).unwrap();
        prop_assert!(found.c_s >= (16 * n + 24) as f64);
        prop_assert!(found.report.pass);
        prop_assert!(check_inequalities(&found.report.constants, 20).unwrap().pass);
    }
}
