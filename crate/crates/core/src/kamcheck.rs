//! Arithmetic verification of the constant bookkeeping behind a KAM
//! iteration: step sequences, the homological bound `Lₘ`, the inequality
//! families that keep the iteration inside its domains, the measure sum,
//! the Fourier cut-off estimate and the frequency-map Jacobian bounds.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_M: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KamConstants {
    /// Number of slow actions `y`; the fast action `I` makes `n + 1`.
    pub n: usize,
    pub a0: f64,
    pub b0: f64,
    pub s0: f64,
    pub s0_bar: f64,
    pub c_h: f64,
    pub c_h_prime: f64,
    pub c_h_second: f64,
    /// Bound on `|Λ''|` and `|Λ''⁻¹|`.
    pub c_big_lambda: f64,
    pub c_big_lambda_lower: f64,
    pub c_big_lambda_upper: f64,
    /// Prefactor of the averaged perturbation, `|v₀| ≤ √ε·c`.
    pub c_frak: f64,
    /// Cut-off constant; calibrated from lattice sums when absent.
    pub c_cutoff: Option<f64>,
    pub c_psi: f64,
    pub c_s: f64,
    pub c_n: f64,
    pub c_lambda: f64,
    pub eps: f64,
}

impl Default for KamConstants {
    fn default() -> Self {
        Self {
            n: 2,
            a0: 1.0,
            b0: 1.0,
            s0: 1.0,
            s0_bar: 1.0,
            c_h: 1.0,
            c_h_prime: 1.0,
            c_h_second: 1e-3,
            c_big_lambda: 2.0,
            c_big_lambda_lower: 1.0,
            c_big_lambda_upper: 4.0,
            c_frak: 1.0,
            c_cutoff: None,
            c_psi: 1.0,
            c_s: 57.0,
            c_n: 1024.0,
            c_lambda: 2f64.powi(100),
            eps: 0.0,
        }
    }
}

impl KamConstants {
    pub fn with_n(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be a positive integer".into()));
        }
        let named = [
            ("a0", self.a0),
            ("b0", self.b0),
            ("s0", self.s0),
            ("s0_bar", self.s0_bar),
            ("c_h", self.c_h),
            ("c_h_prime", self.c_h_prime),
            ("c_big_lambda", self.c_big_lambda),
            ("c_big_lambda_lower", self.c_big_lambda_lower),
            ("c_big_lambda_upper", self.c_big_lambda_upper),
            ("c_frak", self.c_frak),
            ("c_psi", self.c_psi),
            ("c_s", self.c_s),
            ("c_n", self.c_n),
            ("c_lambda", self.c_lambda),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(self.c_h_second >= 0.0) {
            return Err(Error::Config("c_h_second must be ≥ 0".into()));
        }
        if let Some(c) = self.c_cutoff {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config("c_cutoff must be positive".into()));
            }
        }
        if self.c_big_lambda_lower > self.c_big_lambda_upper {
            return Err(Error::Config("need c_big_lambda_lower ≤ c_big_lambda_upper".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config("eps must be ≥ 0".into()));
        }
        Ok(())
    }

    /// `a₀' = a₀/(2^{2n+5} − 1)`.
    pub fn a0_prime(&self) -> f64 {
        self.a0 / (2f64.powi(2 * self.n as i32 + 5) - 1.0)
    }

    pub fn cutoff_constant(&self) -> f64 {
        self.c_cutoff.unwrap_or_else(|| calibrate_cutoff_constant(self.n))
    }

    /// Smallness thresholds `(c''_{h,1}, c''_{h,2})` for the mixed second derivatives.
    pub fn c_h_second_thresholds(&self) -> (f64, f64) {
        let n = self.n as f64;
        let nf = factorial(self.n);
        let cl = self.c_big_lambda;
        let t1 = (self.c_big_lambda_lower / (2f64.powi(self.n as i32 + 1) * n * nf * cl.powi(self.n as i32 - 1)))
            .min(cl / 2.0);
        let t2 = (self.c_big_lambda_lower
            / (2f64.powi(self.n as i32 + 4) * n * nf * cl.powi(self.n as i32 - 1) * self.c_h_prime))
            .min(t1);
        (t1, t2)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceRow {
    pub m: usize,
    pub sigma: f64,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    /// `sₘ`, zero once it underflows.
    pub s: f64,
    pub log_s: f64,
    pub n_m: f64,
    pub lambda: f64,
    pub log_l: f64,
    pub log_l_bound: f64,
}

pub fn log_s(c: &KamConstants, m: usize) -> f64 {
    c.s0.ln() - c.c_s * m as f64 - 2f64.powi(m as i32)
}

pub fn sigma(c: &KamConstants, m: usize) -> f64 {
    c.a0_prime() / 6.0 * 2f64.powi(-((2 * c.n as i32 + 5) * (m as i32 + 1)))
}

pub fn delta(c: &KamConstants, m: usize) -> f64 {
    c.b0 / 3.0 * 2f64.powi(-(m as i32 + 1))
}

pub fn big_n(c: &KamConstants, m: usize) -> f64 {
    c.c_n * 2f64.powi(2 * m as i32)
}

pub fn lambda(c: &KamConstants, m: usize) -> f64 {
    c.c_lambda * 2f64.powi(-((2 * c.n as i32 + 3) * m as i32))
}

/// `log Lₘ` by direct summation, with or without the damping factor.
pub fn log_l(c: &KamConstants, m: usize, damped: bool) -> f64 {
    let n1 = c.n as f64 + 1.0;
    let dm = delta(c, m);
    let terms: Vec<f64> = (0..=m)
        .map(|j| {
            let prev = if j == 0 { 0.0 } else { big_n(c, j - 1) };
            let damp = if damped { n1 * dm * prev } else { 0.0 };
            LN_2 + n1 * big_n(c, j).ln() - lambda(c, j).ln() - damp
        })
        .collect();
    log_sum_exp(&terms)
}

/// `log` of `(c_N^{n+1}/c_λ)·2^{(4n+5)(m+2)}`.
pub fn log_l_bound(c: &KamConstants, m: usize) -> f64 {
    let n = c.n as f64;
    (n + 1.0) * c.c_n.ln() - c.c_lambda.ln() + (4.0 * n + 5.0) * (m as f64 + 2.0) * LN_2
}

/// Rows `m = 0…M`, where `a`, `b` are accumulated downward from `a₀`, `b₀`.
pub fn sequences(c: &KamConstants, m_max: usize) -> Vec<SequenceRow> {
    let (mut a, mut b) = (c.a0, c.b0);
    (0..=m_max)
        .map(|m| {
            let ls = log_s(c, m);
            let row = SequenceRow {
                m,
                sigma: sigma(c, m),
                delta: delta(c, m),
                a,
                b,
                s: ls.exp(),
                log_s: ls,
                n_m: big_n(c, m),
                lambda: lambda(c, m),
                log_l: log_l(c, m, true),
                log_l_bound: log_l_bound(c, m),
            };
            a -= 6.0 * row.sigma;
            b -= 3.0 * row.delta;
            row
        })
        .collect()
}

/// Strip half-width `λⱼ(1 + 2^{−m−1})√ε` of step `m` for resonances first
/// treated at step `j`.
pub fn strip_half_width(c: &KamConstants, j: usize, m: usize) -> f64 {
    lambda(c, j) * (1.0 + 2f64.powi(-(m as i32) - 1)) * c.eps.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    I,
    II,
    III,
    IV,
    V,
    L,
}

/// One displayed inequality `lhs ≤ rhs`, held as `log(rhs/lhs)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: &'static str,
    pub family: Family,
    /// `None` when the left side vanishes identically.
    pub log_slack: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn new(id: &'static str, family: Family, log_lhs: f64, log_rhs: f64) -> Self {
        if log_lhs == f64::NEG_INFINITY {
            return Self { id, family, log_slack: None, pass: true };
        }
        let slack = log_rhs - log_lhs;
        Self { id, family, log_slack: Some(slack), pass: slack >= 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    #[serde(flatten)]
    pub sequence: SequenceRow,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub m: usize,
    pub id: &'static str,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    pub constants: KamConstants,
    pub m_max: usize,
    pub c_cutoff: f64,
    pub c_h_second_threshold: f64,
    pub c_h_second_small: bool,
    pub rows: Vec<LedgerRow>,
    pub pass: bool,
    pub first_failure: Option<Failure>,
    /// Smallest finite `log(rhs/lhs)` over the table.
    pub min_log_slack: f64,
}

impl LedgerReport {
    pub fn family_slack(&self, id: &str) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.checks.iter().find(|c| c.id == id).and_then(|c| c.log_slack)).collect()
    }

    pub fn table(&self) -> String {
        let mut out = String::from(
            " m        sigma        delta            a            b        log s          N_m     lambda_m        log L  log L bound  status\n",
        );
        for r in &self.rows {
            let s = &r.sequence;
            let failed: Vec<_> = r.checks.iter().filter(|c| !c.pass).map(|c| c.id).collect();
            let status = if failed.is_empty() { "ok".to_string() } else { failed.join(",") };
            out.push_str(&format!(
                "{:>2} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}  {}\n",
                s.m, s.sigma, s.delta, s.a, s.b, s.log_s, s.n_m, s.lambda, s.log_l, s.log_l_bound, status
            ));
        }
        out.push_str(&format!("verdict: {}\n", if self.pass { "pass" } else { "fail" }));
        if let Some(f) = &self.first_failure {
            out.push_str(&format!("first failure: m = {}, {}\n", f.m, f.id));
        }
        out
    }
}

/// Inequalities that involve `c_s` alone (families ii and iv).
fn rate_checks(c: &KamConstants, m: usize, out: &mut Vec<Check>) {
    let n = c.n as f64;
    let ls = log_s(c, m);
    let lsig = sigma(c, m).ln();
    let ldel = delta(c, m).ln();
    let ls_prime = if m == 0 { (c.eps.sqrt() * c.c_frak).ln() } else { ls };
    if m >= 1 {
        let base = (8.0 * c.c_h * c.c_h_prime).ln() + ls;
        let halving = -(m as f64 + 1.0) * LN_2;
        let mf = m as f64;
        let gap = mf * LN_2 - ((2f64.powf(mf + 1.0) - 1.0) * (2f64.powf(mf + 2.0) - 1.0) * c.c_h_prime).ln();
        out.push(Check::new("ii.h", Family::II, base - lsig, c.c_h.ln() + halving));
        out.push(Check::new("ii.h_II", Family::II, base - 3.0 * lsig, c.c_h_prime.ln() + halving));
        out.push(Check::new("ii.h_I_inv", Family::II, base - 2.0 * lsig, gap));
        out.push(Check::new("ii.h_II_inv", Family::II, base - 3.0 * lsig, gap));
        out.push(Check::new("ii.h_Iy", Family::II, n.ln() + base - 3.0 * lsig, c.c_h_second.ln() + halving));
        out.push(Check::new("iv.cs", Family::IV, ls, lsig + ldel - (4.0 * c.c_h_prime).ln()));
    } else {
        out.push(Check::new("iv.cs", Family::IV, ls_prime, lsig + ldel - (2.0 * c.c_h_prime).ln()));
    }
    out.push(Check::new("iv.S_I", Family::IV, (16.0 * PI * c.c_h_prime).ln() + ls_prime - lsig, ldel));
    out.push(Check::new("iv.S_phi", Family::IV, (8.0 * c.c_h_prime).ln() + ls_prime, lsig));
}

/// The `c_N`-dependent cut-off term of the `s̃ₘ ≤ sₘ₊₁` estimate, in logs.
pub fn log_cutoff_term(c: &KamConstants, m: usize, c_cut: f64) -> f64 {
    let n = c.n as f64;
    let mf = m as f64;
    let p = 2f64.powi(m as i32);
    (6.0 * c_cut / c.b0).ln() + n * (c.c_n + 6.0 / c.b0).ln() + (2.0 * n + 1.0) * mf + c.c_s
        - (c.b0 * c.c_n / 6.0 - 2.0) * p
        - p
}

fn coupling_checks(c: &KamConstants, m: usize, c_cut: f64, out: &mut Vec<Check>) {
    let n = c.n as f64;
    let ls = log_s(c, m);
    let lsig = sigma(c, m).ln();
    let ldel = delta(c, m).ln();
    let ll = log_l(c, m, true);
    let nm = big_n(c, m);
    let dm = delta(c, m);
    let t1 = (c.c_big_lambda + c.c_h_prime).ln() + 2.0 * (ll + ls - ldel);
    let t2 = (n + 2.0).ln() + ll + 2.0 * ls - lsig - ldel;
    let t3 = c_cut.ln() - ldel + n * (nm + 1.0 / dm).ln() - nm * dm + ls;
    out.push(Check::new("i.s_tilde", Family::I, log_sum_exp(&[t1, t2, t3]), log_s(c, m + 1)));
    out.push(Check::new("iii.ang", Family::III, ll + ls - ldel, lsig));
    out.push(Check::new("iii.act", Family::III, ll + ls - lsig, ldel));
    let ls_prime = if m == 0 { (c.eps.sqrt() * c.c_frak).ln() } else { ls };
    out.push(Check::new(
        "v.nest",
        Family::V,
        ((n + 1.0) * 16.0 * c.c_h * c.c_h_prime).ln() + ls_prime + nm.ln() - 2.0 * lsig,
        lambda(c, m).ln() - (m as f64 + 2.0) * LN_2,
    ));
    out.push(Check::new("L.bound", Family::L, ll, log_l_bound(c, m)));
}

pub fn check_inequalities(c: &KamConstants, m_max: usize) -> Result<LedgerReport> {
    c.validate()?;
    let c_cut = c.cutoff_constant();
    let rows: Vec<LedgerRow> = sequences(c, m_max)
        .into_iter()
        .map(|sequence| {
            let mut checks = Vec::new();
            coupling_checks(c, sequence.m, c_cut, &mut checks);
            rate_checks(c, sequence.m, &mut checks);
            LedgerRow { sequence, checks }
        })
        .collect();
    let first_failure = rows.iter().find_map(|r| {
        r.checks.iter().find(|k| !k.pass).map(|k| Failure { m: r.sequence.m, id: k.id, family: k.family })
    });
    let min_log_slack = rows
        .iter()
        .flat_map(|r| r.checks.iter().filter_map(|k| k.log_slack))
        .fold(f64::INFINITY, f64::min);
    let threshold = c.c_h_second_thresholds().1;
    Ok(LedgerReport {
        constants: c.clone(),
        m_max,
        c_cutoff: c_cut,
        c_h_second_threshold: threshold,
        c_h_second_small: c.c_h_second <= threshold,
        pass: first_failure.is_none(),
        rows,
        first_failure,
        min_log_slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub c_s: f64,
    pub c_n: f64,
    pub c_lambda: f64,
    pub report: LedgerReport,
}

const C_S_STEPS: usize = 4096;
const MAX_LOG2_C_N: i32 = 60;
const MAX_LOG2_C_LAMBDA: i32 = 1000;

/// Staged search in dependency order: the smallest integer `c_s > 16n+24`
/// meeting the `c_s`-only inequalities, then the smallest power of two
/// `c_N` bringing the cut-off term to `≤ 1/3`, then the smallest power of
/// two `c_λ` for which the whole ledger passes.
pub fn search_constants(fixed: &KamConstants, m_max: usize) -> Result<SearchOutcome> {
    if m_max < 20 {
        return Err(Error::Config("constant search needs M ≥ 20".into()));
    }
    fixed.validate()?;
    let c_s0 = 16.0 * fixed.n as f64 + 24.0;
    let mut c = fixed.clone();
    let c_cut = c.cutoff_constant();
    c.c_cutoff = Some(c_cut);

    let mut binding = "";
    let mut found = false;
    for j in 1..=C_S_STEPS {
        c.c_s = c_s0 + j as f64;
        let mut checks = Vec::new();
        for m in 0..=m_max {
            rate_checks(&c, m, &mut checks);
        }
        match checks.iter().find(|k| !k.pass) {
            None => {
                found = true;
                break;
            }
            Some(k) => binding = k.id,
        }
    }
    if !found {
        return Err(Error::SearchExhausted { binding: binding.to_string() });
    }

    found = false;
    for k in 0..=MAX_LOG2_C_N {
        c.c_n = 2f64.powi(k);
        if (0..=m_max).all(|m| log_cutoff_term(&c, m, c_cut) <= -(3f64.ln())) {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::SearchExhausted { binding: "i.cutoff_term".into() });
    }

    for k in 0..=MAX_LOG2_C_LAMBDA {
        c.c_lambda = 2f64.powi(k);
        let report = check_inequalities(&c, m_max)?;
        if report.pass {
            return Ok(SearchOutcome { c_s: c.c_s, c_n: c.c_n, c_lambda: c.c_lambda, report });
        }
        if k == MAX_LOG2_C_LAMBDA {
            let id = report.first_failure.map_or("", |f| f.id);
            return Err(Error::SearchExhausted { binding: id.to_string() });
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSum {
    pub lambda_terms: Vec<f64>,
    pub sigma_terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Limit of the directly summed series.
    pub direct_limit: f64,
    /// The closed form with prefactor `a₀/6` on the `σ` part.
    pub stated_closed_form: f64,
    /// Limits of the `σ` part alone, direct and with the `a₀/6` prefactor.
    pub sigma_part_direct: f64,
    pub sigma_part_stated: f64,
    pub relative_gap: f64,
    pub discrepancy: bool,
}

/// `Σᵢ Nᵢ^{n+1}(λᵢ + C_ψ Nᵢ σᵢ)` for `i ≤ M`, with both closed-form limits.
pub fn measure_sum(c: &KamConstants, m_max: usize) -> Result<MeasureSum> {
    c.validate()?;
    let n1 = c.n as i32 + 1;
    let lambda_terms: Vec<f64> = (0..=m_max).map(|i| big_n(c, i).powi(n1) * lambda(c, i)).collect();
    let sigma_terms: Vec<f64> =
        (0..=m_max).map(|i| c.c_psi * big_n(c, i).powi(n1 + 1) * sigma(c, i)).collect();
    let partial_sums: Vec<f64> = lambda_terms
        .iter()
        .zip(&sigma_terms)
        .scan(0.0, |acc, (l, s)| {
            *acc += l + s;
            Some(*acc)
        })
        .collect();
    let lam_part = 2.0 * c.c_n.powi(n1) * c.c_lambda;
    let sigma_part_direct =
        2.0 * c.c_psi * c.c_n.powi(n1 + 1) * c.a0_prime() / 6.0 * 2f64.powi(-(2 * c.n as i32 + 5));
    let sigma_part_stated = c.a0 * c.c_psi * c.c_n.powi(n1 + 1) / 3.0;
    let direct_limit = lam_part + sigma_part_direct;
    let stated_closed_form = lam_part + sigma_part_stated;
    let relative_gap = (sigma_part_stated - sigma_part_direct).abs() / sigma_part_direct;
    Ok(MeasureSum {
        lambda_terms,
        sigma_terms,
        partial_sums,
        direct_limit,
        stated_closed_form,
        sigma_part_direct,
        sigma_part_stated,
        relative_gap,
        discrepancy: relative_gap > 1e-12,
    })
}

/// Number of `K ∈ ℤ^dim` with `|K|₁ = r`.
pub fn shell_count(dim: usize, r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let binom = |a: usize, b: usize| -> f64 {
        if b > a {
            0.0
        } else {
            (0..b).map(|i| (a - i) as f64 / (i + 1) as f64).product()
        }
    };
    (1..=dim.min(r)).map(|i| 2f64.powi(i as i32) * binom(dim, i) * binom(r - 1, i - 1)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSum {
    pub sum: f64,
    pub tail_bound: f64,
}

impl TailSum {
    pub fn upper(&self) -> f64 {
        self.sum + self.tail_bound
    }
}

/// `Σ_{|K|₁ > N, k ≠ 0} e^{−δ|K|₁}` over `K = (k, k₀) ∈ ℤ^{n+1}`.
pub fn cutoff_tail(n: usize, delta: f64, big_n: usize) -> TailSum {
    let mut sum = 0.0;
    let mut r = big_n + 1;
    loop {
        // k = 0 leaves only the two vectors (0, ±r).
        let term = (shell_count(n + 1, r) - 2.0) * (-delta * r as f64).exp();
        sum += term;
        if r > 2 * n && term <= 1e-17 * sum {
            let q = (-delta).exp() * r as f64 / (r - n) as f64;
            if q >= 1.0 {
                r += 1;
                continue;
            }
            let next = (shell_count(n + 1, r + 1) - 2.0) * (-delta * (r + 1) as f64).exp();
            return TailSum { sum, tail_bound: next / (1.0 - q) };
        }
        r += 1;
    }
}

/// `(1/δ)(N + 1/δ)ⁿ e^{−Nδ}`.
pub fn cutoff_shape(n: usize, delta: f64, big_n: usize) -> f64 {
    (big_n as f64 + 1.0 / delta).powi(n as i32) * (-(big_n as f64) * delta).exp() / delta
}

pub const REFERENCE_DELTAS: [f64; 6] = [0.025, 0.05, 0.1, 0.2, 0.4, 0.8];
pub const REFERENCE_NS: [usize; 9] = [0, 1, 2, 5, 10, 20, 40, 80, 160];

/// Largest ratio of the lattice tail to its bound shape over the reference grid.
pub fn calibrate_cutoff_constant(n: usize) -> f64 {
    let mut c: f64 = 0.0;
    for &d in &REFERENCE_DELTAS {
        for &bn in &REFERENCE_NS {
            c = c.max(cutoff_tail(n, d, bn).upper() / cutoff_shape(n, d, bn));
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRow {
    pub big_n: usize,
    pub lhs: f64,
    pub tail_bound: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Compares the truncation tail of a series with coefficients `e^{−b|K|}`
/// on the strip of width `b − δ` against the cut-off bound.
pub fn check_cutoff_lemma(n: usize, b: f64, delta: f64, ns: &[usize], c: Option<f64>) -> Result<Vec<CutoffRow>> {
    if !(delta > 0.0 && delta < b) {
        return Err(Error::Domain(format!("cut-off lemma needs 0 < δ < b, got δ = {delta}, b = {b}")));
    }
    let c = c.unwrap_or_else(|| calibrate_cutoff_constant(n));
    Ok(ns
        .iter()
        .map(|&bn| {
            let t = cutoff_tail(n, delta, bn);
            let rhs = c * cutoff_shape(n, delta, bn);
            CutoffRow { big_n: bn, lhs: t.sum, tail_bound: t.tail_bound, rhs, ok: t.upper() <= rhs }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JacobianStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub samples: usize,
    pub min_abs_det: f64,
    pub max_abs_det: f64,
    /// `1/C̲_J = c̲_Λ/(8c'_h)`.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub threshold: f64,
    pub adversarial_det: f64,
    pub status: JacobianStatus,
}

pub fn jacobian_upper_bound(c: &KamConstants) -> f64 {
    let n = c.n as i32;
    let nf = factorial(c.n);
    let a = c.c_big_lambda + 2.0 * c.c_h_second;
    nf * a.powi(n) * 2.0 * c.c_h_prime + c.n as f64 * nf * (2.0 * c.c_h_second).powi(2) * a.powi(n - 1)
}

pub fn jacobian_lower_bound(c: &KamConstants) -> f64 {
    c.c_big_lambda_lower / (8.0 * c.c_h_prime)
}

fn block_matrix(lam: &DMatrix<f64>, p: &DMatrix<f64>, w: &[f64], d: f64) -> DMatrix<f64> {
    let n = lam.nrows();
    DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => lam[(i, j)] + p[(i, j)],
        (true, false) => w[i],
        (false, true) => w[j],
        (false, false) => d,
    })
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// A random `Λ''` with entries and inverse entries within `c_Λ` and
/// `|det| ∈ [c̲_Λ, c̄_Λ]`.
fn sample_hessian(c: &KamConstants, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let n = c.n;
    let cl = c.c_big_lambda;
    for _ in 0..100_000 {
        let raw = DMatrix::from_fn(n, n, |_, _| cl * (2.0 * rng.random::<f64>() - 1.0));
        let det = raw.determinant();
        if det.abs() < 1e-12 {
            continue;
        }
        let target = c.c_big_lambda_lower + (c.c_big_lambda_upper - c.c_big_lambda_lower) * rng.random::<f64>();
        let m = raw * (target / det.abs()).powf(1.0 / n as f64);
        let Some(inv) = m.clone().try_inverse() else { continue };
        if max_abs(&m) <= cl && max_abs(&inv) <= cl {
            return Ok(m);
        }
    }
    Err(Error::Config("the Λ'' bounds admit no sampled matrix".into()))
}

/// Constructed near-worst case: `Λ'' = tI` at the smallest admissible
/// determinant, every perturbation entry at its bound with signs chosen to
/// shrink `|det J|`.
pub fn adversarial_determinant(c: &KamConstants) -> f64 {
    let n = c.n;
    let t = c.c_big_lambda_lower.powf(1.0 / n as f64);
    let lam = DMatrix::from_diagonal_element(n, n, t);
    let p = DMatrix::from_element(n, n, -2.0 * c.c_h_second);
    let w = vec![2.0 * c.c_h_second; n];
    block_matrix(&lam, &p, &w, 1.0 / (2.0 * c.c_h_prime)).determinant().abs()
}

/// Samples the block family admitted by the derivative bounds and compares
/// `|det J|` with the two constants of the determinant estimate.
pub fn check_jacobian_bounds(c: &KamConstants, samples: usize, seed: u64) -> Result<JacobianReport> {
    c.validate()?;
    let n = c.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = 2.0 * c.c_h_second;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let lam = sample_hessian(c, &mut rng)?;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = e * (2.0 * rng.random::<f64>() - 1.0);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        let w: Vec<f64> = (0..n).map(|_| e * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let (dlo, dhi) = (1.0 / (2.0 * c.c_h_prime), 2.0 * c.c_h_prime);
        let mut d = dlo + (dhi - dlo) * rng.random::<f64>();
        if rng.random::<bool>() {
            d = -d;
        }
        let det = block_matrix(&lam, &p, &w, d).determinant().abs();
        lo = lo.min(det);
        hi = hi.max(det);
    }
    let lower_bound = jacobian_lower_bound(c);
    let upper_bound = jacobian_upper_bound(c);
    let threshold = c.c_h_second_thresholds().1;
    let status = if c.c_h_second > threshold {
        JacobianStatus::NotApplicable
    } else if samples == 0 || (lo >= lower_bound && hi <= upper_bound) {
        JacobianStatus::Pass
    } else {
        JacobianStatus::Fail
    };
    Ok(JacobianReport {
        samples,
        min_abs_det: if samples == 0 { 0.0 } else { lo },
        max_abs_det: hi,
        lower_bound,
        upper_bound,
        threshold,
        adversarial_det: adversarial_determinant(c),
        status,
    })
}
