//! Orbit classification from frequency drift and resonant-phase winding.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::lattice::integer_rank;
use crate::map_engine::Orbit;
use crate::resonance::{detect_resonances, Convention, ResonanceReport};
use crate::trig::dot_int;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    KamTorus,
    Ribbon,
    Spots,
    Chaotic,
    Undetermined,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::KamTorus, Label::Ribbon, Label::Spots, Label::Chaotic, Label::Undetermined];

    pub fn name(self) -> &'static str {
        match self {
            Label::KamTorus => "KamTorus",
            Label::Ribbon => "Ribbon",
            Label::Spots => "Spots",
            Label::Chaotic => "Chaotic",
            Label::Undetermined => "Undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub drift_threshold: f64,
    /// Resonance tolerance is `resonance_scale·√ε`.
    pub resonance_scale: f64,
    pub n_max: i64,
    pub oscillation_margin: f64,
    pub min_length: usize,
    /// Half-width of the double-resonance box in units of `√ε`.
    pub spots_scale: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            drift_threshold: 1e-6,
            resonance_scale: 1.0,
            n_max: 12,
            oscillation_margin: 0.1,
            min_length: 1000,
            spots_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Winding {
    Rotating,
    Oscillating { extent: f64 },
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseWinding {
    pub k: Vec<i64>,
    pub k0: i64,
    pub winding: Winding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub mean_frequency: Vec<f64>,
    pub mean_action: Vec<f64>,
    pub drift: f64,
    pub resonances: Option<ResonanceReport>,
    pub windings: Vec<PhaseWinding>,
    pub oscillating_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitClass {
    pub label: Label,
    pub evidence: Evidence,
}

/// `exp(−1/(t(1−t)))` on `(0, 1)`.
fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn weighted_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let dim = samples.first().map_or(0, Vec::len);
    let n = samples.len() as f64;
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let w = bump((i as f64 + 0.5) / n);
        total += w;
        for (a, v) in acc.iter_mut().zip(s) {
            *a += w * v;
        }
    }
    acc.iter().map(|a| a / total).collect()
}

/// Per-step angle increments between consecutive recorded states.
fn increments(orbit: &Orbit) -> Vec<Vec<f64>> {
    let stride = orbit.stride as f64;
    orbit
        .states
        .windows(2)
        .map(|w| {
            (0..orbit.dim())
                .map(|j| {
                    let dw = (w[1].winding[j] - w[0].winding[j]) as f64;
                    (w[1].x[j] - w[0].x[j] + TAU * dw) / stride
                })
                .collect()
        })
        .collect()
}

/// Weighted Birkhoff average of the rotation vector.
pub fn mean_frequency(orbit: &Orbit) -> Vec<f64> {
    weighted_mean(&increments(orbit))
}

/// Largest coordinate difference between the two half-orbit means.
pub fn frequency_drift(orbit: &Orbit) -> f64 {
    let inc = increments(orbit);
    let half = inc.len() / 2;
    let (a, b) = (weighted_mean(&inc[..half]), weighted_mean(&inc[half..]));
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Behaviour of the resonant phase `q_n = ⟨k, x_n⟩ − 2πk₀n`.
pub fn winding_analysis(orbit: &Orbit, k: &[i64], k0: i64, margin: f64) -> Winding {
    let q: Vec<f64> = orbit
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| dot_int(k, &s.x_lift()) - TAU * k0 as f64 * orbit.step_of(i) as f64)
        .collect();
    classify_phase(&q, margin)
}

/// Oscillating when the range stays below `2π − margin` and the direction
/// reverses at least twice; rotating when the net advance exceeds `4π`.
pub fn classify_phase(q: &[f64], margin: f64) -> Winding {
    let (Some(&first), Some(&last)) = (q.first(), q.last()) else {
        return Winding::Undetermined;
    };
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let extent = hi - lo;
    let mut reversals = 0;
    let mut last_sign = 0.0;
    for w in q.windows(2) {
        let d = w[1] - w[0];
        if d != 0.0 {
            let s = d.signum();
            if last_sign != 0.0 && s != last_sign {
                reversals += 1;
            }
            last_sign = s;
        }
    }
    if extent < TAU - margin && reversals >= 2 {
        Winding::Oscillating { extent }
    } else if (last - first).abs() > 2.0 * TAU {
        Winding::Rotating
    } else {
        Winding::Undetermined
    }
}

/// Box test around the double-resonance set `{⟨kᵢ, y⟩ = 2πk₀ᵢ}` closest
/// to `y`: the least-squares correction must stay within `half_width`.
fn near_double_resonance(y: &[f64], hits: &[(Vec<i64>, i64)], half_width: f64) -> bool {
    let m = hits.len();
    let dim = y.len();
    // Gram matrix G = K Kᵀ and residual r.
    let mut g = vec![vec![0.0; m]; m];
    let mut r = vec![0.0; m];
    for i in 0..m {
        r[i] = dot_int(&hits[i].0, y) - TAU * hits[i].1 as f64;
        for j in 0..m {
            g[i][j] = hits[i].0.iter().zip(&hits[j].0).map(|(a, b)| (a * b) as f64).sum();
        }
    }
    let Some(c) = solve(g, r) else {
        return false;
    };
    (0..dim).all(|d| {
        let delta: f64 = (0..m).map(|i| c[i] * hits[i].0[d] as f64).sum();
        delta.abs() <= half_width
    })
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

/// Picks an independent subset of the extended vectors.
fn independent_subset(dim: usize, vs: &[(Vec<i64>, i64)]) -> Vec<(Vec<i64>, i64)> {
    let mut chosen: Vec<(Vec<i64>, i64)> = Vec::new();
    let mut ext: Vec<Vec<i64>> = Vec::new();
    for v in vs {
        let mut e = v.0.clone();
        e.push(v.1);
        ext.push(e);
        if integer_rank(dim + 1, &ext) > chosen.len() {
            chosen.push(v.clone());
        } else {
            ext.pop();
        }
    }
    chosen
}

pub fn classify(orbit: &Orbit, config: &ClassifierConfig) -> OrbitClass {
    let mut evidence = Evidence {
        mean_frequency: Vec::new(),
        mean_action: Vec::new(),
        drift: f64::NAN,
        resonances: None,
        windings: Vec::new(),
        oscillating_rank: 0,
    };
    if orbit.len() < config.min_length.max(3) {
        return OrbitClass { label: Label::Undetermined, evidence };
    }
    let nu = mean_frequency(orbit);
    let ys: Vec<Vec<f64>> = orbit.states.iter().map(|s| s.y.clone()).collect();
    evidence.mean_action = weighted_mean(&ys);
    evidence.drift = frequency_drift(orbit);
    evidence.mean_frequency = nu.clone();
    if !(evidence.drift <= config.drift_threshold) {
        return OrbitClass { label: Label::Chaotic, evidence };
    }
    let tol = (config.resonance_scale * orbit.eps.sqrt()).max(1e-12);
    let Ok(report) = detect_resonances(&nu, config.n_max, tol, Convention::Map) else {
        return OrbitClass { label: Label::Undetermined, evidence };
    };
    let mut oscillating = Vec::new();
    let mut undetermined = false;
    for hit in &report.found {
        let w = winding_analysis(orbit, &hit.k, hit.k0, config.oscillation_margin);
        match w {
            Winding::Oscillating { .. } => oscillating.push((hit.k.clone(), hit.k0)),
            Winding::Undetermined => undetermined = true,
            Winding::Rotating => {}
        }
        evidence.windings.push(PhaseWinding { k: hit.k.clone(), k0: hit.k0, winding: w });
    }
    evidence.resonances = Some(report);
    let dim = orbit.dim();
    let basis = independent_subset(dim, &oscillating);
    evidence.oscillating_rank = basis.len();
    let half_width = config.spots_scale * orbit.eps.sqrt();
    let label = match basis.len() {
        1 => Label::Ribbon,
        2 if near_double_resonance(&evidence.mean_action, &basis, half_width) => Label::Spots,
        0 if !undetermined => Label::KamTorus,
        _ => Label::Undetermined,
    };
    OrbitClass { label, evidence }
}
