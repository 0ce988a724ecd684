//! Resonance detection for a frequency vector and the geometry of a single
//! resonance surface.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lattice::{gcd_all, saturate};
use crate::spectral::ResonanceModule;
use crate::trig::{canonical, dot_int, is_negative};

/// Which small divisors apply: `⟨ν,k⟩` for flows, `⟨ν,k⟩ − 2πk₀` for maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Flow,
    #[default]
    Map,
}

/// Nearest integer `k₀` to `α/2π` and the defect `|α − 2πk₀|`.
pub fn map_defect(alpha: f64) -> (i64, f64) {
    let k0 = (alpha / TAU).round();
    (k0 as i64, (alpha - TAU * k0).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceHit {
    pub k: Vec<i64>,
    pub k0: i64,
    pub defect: f64,
}

impl ResonanceHit {
    /// The full vector `(k, k₀)`.
    pub fn extended(&self) -> Vec<i64> {
        let mut v = self.k.clone();
        v.push(self.k0);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub nu: Vec<f64>,
    pub found: Vec<ResonanceHit>,
    /// The lattice of resonant wave vectors `k`.
    pub module: ResonanceModule,
    pub search_bound: i64,
    pub tolerance: f64,
    pub convention: Convention,
}

impl ResonanceReport {
    pub fn rank(&self) -> usize {
        self.module.rank()
    }
}

fn max_norm(k: &[i64]) -> i64 {
    k.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Graded lexicographic order: max-norm first, then entries.
fn graded_cmp(a: &[i64], b: &[i64]) -> std::cmp::Ordering {
    max_norm(a).cmp(&max_norm(b)).then_with(|| a.cmp(b))
}

/// Exhaustive scan of canonical primitive vectors with `|k|_∞ ≤ n_max`.
///
/// In the map convention the primitive object is the extended vector
/// `(k, k₀)`, so period-`q` resonances such as `2·ν₁ = 2π` are found.
pub fn detect_resonances(
    nu: &[f64],
    n_max: i64,
    tolerance: f64,
    convention: Convention,
) -> Result<ResonanceReport> {
    let dim = nu.len();
    if dim == 0 || n_max < 1 || !(tolerance > 0.0) {
        return Err(Error::Config("resonance search needs N ≥ 1, N_max ≥ 1 and tolerance > 0".into()));
    }
    let side = (2 * n_max + 1) as usize;
    let total = side.pow(dim as u32);
    let mut k = vec![0i64; dim];
    let mut found = Vec::new();
    for idx in 0..total {
        let mut r = idx;
        for c in k.iter_mut() {
            *c = (r % side) as i64 - n_max;
            r /= side;
        }
        if k.iter().all(|&c| c == 0) || is_negative(&k) {
            continue;
        }
        let alpha = dot_int(&k, nu);
        let (k0, defect) = match convention {
            Convention::Flow => (0, alpha.abs()),
            Convention::Map => map_defect(alpha),
        };
        if !(defect <= tolerance) {
            continue;
        }
        let primitive = match convention {
            Convention::Flow => gcd_all(&k) == 1,
            Convention::Map => crate::lattice::gcd(gcd_all(&k), k0) == 1,
        };
        if primitive {
            found.push(ResonanceHit { k: k.clone(), k0, defect });
        }
    }
    found.sort_by(|a, b| graded_cmp(&a.k, &b.k));
    let module = resonant_module(dim, &found, convention);
    Ok(ResonanceReport { nu: nu.to_vec(), found, module, search_bound: n_max, tolerance, convention })
}

/// Module of resonant wave vectors generated by the hits.
///
/// For flows this is the saturation of the `k`. For maps the saturation is
/// taken over the extended vectors `(k, k₀)` and then projected onto `k`,
/// which keeps e.g. `(2,0)` resonant without admitting `(1,0)`.
fn resonant_module(dim: usize, found: &[ResonanceHit], convention: Convention) -> ResonanceModule {
    match convention {
        Convention::Flow => {
            let ks: Vec<Vec<i64>> = found.iter().map(|h| h.k.clone()).collect();
            ResonanceModule::saturated(dim, &ks)
        }
        Convention::Map => {
            let ext: Vec<Vec<i64>> = found.iter().map(ResonanceHit::extended).collect();
            let sat = saturate(dim + 1, &ext);
            let proj: Vec<Vec<i64>> = sat.rows_i64().into_iter().map(|mut v| {
                v.pop();
                v
            }).collect();
            ResonanceModule::generated(dim, &proj)
        }
    }
}

pub type FrequencyMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A single resonance surface `Σ = {⟨K0, ν(Y)⟩ = 2πk₀}` with the projection
/// `χ(Y) = Y − λ(Y)·K0` onto it.
#[derive(Clone)]
pub struct SingleResonanceGeometry {
    pub k: Vec<i64>,
    pub k0: i64,
    /// Hessian of the integrable part.
    pub pi: Vec<Vec<f64>>,
    /// `A = ⟨K0, Π K0⟩`.
    pub a: f64,
    nu: FrequencyMap,
    quadratic: bool,
}

impl std::fmt::Debug for SingleResonanceGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SingleResonanceGeometry")
            .field("k", &self.k)
            .field("k0", &self.k0)
            .field("pi", &self.pi)
            .field("a", &self.a)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

fn quad_form(k: &[i64], pi: &[Vec<f64>]) -> f64 {
    k.iter()
        .enumerate()
        .map(|(i, &ki)| ki as f64 * dot_int(k, &pi[i]))
        .sum()
}

fn check_resonance_vector(k: &[i64], pi: &[Vec<f64>]) -> Result<f64> {
    check_dim(k.len(), pi.len())?;
    for row in pi {
        check_dim(k.len(), row.len())?;
    }
    if k.iter().all(|&c| c == 0) || gcd_all(k) != 1 {
        return Err(Error::Geometry(format!("resonance vector {k:?} must be nonzero and primitive")));
    }
    let a = quad_form(k, pi);
    if a == 0.0 {
        return Err(Error::LightLikeResonance { k: k.to_vec() });
    }
    Ok(a)
}

impl SingleResonanceGeometry {
    /// `H₀ = ½⟨Y, ΠY⟩` with constant `Π`, so `ν(Y) = ΠY` and `λ` is closed-form.
    pub fn quadratic(k: Vec<i64>, k0: i64, pi: Vec<Vec<f64>>) -> Result<Self> {
        let a = check_resonance_vector(&k, &pi)?;
        let p = pi.clone();
        let nu: FrequencyMap = Arc::new(move |y: &[f64]| p.iter().map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum()).collect());
        let (k, k0) = sign_normalized(k, k0);
        Ok(Self { k, k0, pi, a, nu, quadratic: true })
    }

    /// The standard twist map: `Π = I`.
    pub fn standard(k: Vec<i64>, k0: i64) -> Result<Self> {
        let n = k.len();
        let id = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self::quadratic(k, k0, id)
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn frequency(&self, y: &[f64]) -> Vec<f64> {
        (self.nu)(y)
    }

    /// `⟨K0, ν(Y)⟩ − 2πk₀`.
    pub fn resonance_defect(&self, y: &[f64]) -> f64 {
        dot_int(&self.k, &self.frequency(y)) - TAU * self.k0 as f64
    }

    /// Solves `⟨K0, ν(Y − λK0)⟩ = 2πk₀` for `λ`.
    pub fn lambda(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        if self.quadratic {
            return Ok(self.resonance_defect(y) / self.a);
        }
        let mut lam = 0.0;
        let mut z = y.to_vec();
        for _ in 0..50 {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = y[j] - lam * self.k[j] as f64;
            }
            let g = self.resonance_defect(&z);
            if !g.is_finite() {
                break;
            }
            if g.abs() <= 1e-13 {
                return Ok(lam);
            }
            // g'(λ) = −⟨K0, Dν K0⟩ ≈ −A
            lam += g / self.a;
        }
        Err(Error::Geometry("Newton iteration for λ(Y) did not converge in 50 steps".into()))
    }

    pub fn chi(&self, y: &[f64]) -> Result<Vec<f64>> {
        let lam = self.lambda(y)?;
        Ok(y.iter().zip(&self.k).map(|(v, &c)| v - lam * c as f64).collect())
    }
}

fn sign_normalized(k: Vec<i64>, k0: i64) -> (Vec<i64>, i64) {
    if is_negative(&k) {
        (canonical(&k), -k0)
    } else {
        (k, k0)
    }
}

/// Geometry for a general frequency map `ν(Y)` with reference Hessian `Π`.
pub fn build_geometry(k: Vec<i64>, k0: i64, pi: Vec<Vec<f64>>, nu: FrequencyMap) -> Result<SingleResonanceGeometry> {
    let a = check_resonance_vector(&k, &pi)?;
    let (k, k0) = sign_normalized(k, k0);
    Ok(SingleResonanceGeometry { k, k0, pi, a, nu, quadratic: false })
}
