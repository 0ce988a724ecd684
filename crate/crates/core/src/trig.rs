//! Real trigonometric polynomials on the N-torus.
//!
//! A [`TrigSeries`] is a finite sum of terms `a·cos(⟨k,x⟩ + φ)`. Each wave
//! vector is stored in canonical form (first nonzero entry positive); the
//! sign flip `k → −k` is absorbed into the phase, `φ → −φ`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: Vec<i64>,
    pub amplitude: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn new(k: Vec<i64>, amplitude: f64, phase: f64) -> Self {
        Self { k, amplitude, phase }
    }

    /// Complex Fourier coefficient `c` with `a·cos(θ+φ) = Re(c·e^{iθ})`.
    pub fn coefficient(&self) -> (f64, f64) {
        (self.amplitude * self.phase.cos(), self.amplitude * self.phase.sin())
    }

    fn from_coefficient(k: Vec<i64>, re: f64, im: f64) -> Self {
        Self { k, amplitude: re.hypot(im), phase: im.atan2(re) }
    }
}

/// Returns `true` when the first nonzero entry is negative.
pub(crate) fn is_negative(k: &[i64]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0)
}

/// Canonical representative of `±k`: first nonzero entry positive.
pub fn canonical(k: &[i64]) -> Vec<i64> {
    if is_negative(k) {
        k.iter().map(|c| -c).collect()
    } else {
        k.to_vec()
    }
}

pub(crate) fn dot_int(k: &[i64], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(&c, &v)| c as f64 * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    dim: usize,
    terms: Vec<Harmonic>,
}

impl TrigSeries {
    /// Builds a series from raw terms, canonicalizing every wave vector.
    /// Two terms that coincide up to sign are rejected.
    pub fn new(dim: usize, terms: Vec<Harmonic>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("trig series dimension must be positive".into()));
        }
        let mut out: Vec<Harmonic> = Vec::with_capacity(terms.len());
        for t in terms {
            check_dim(dim, t.k.len())?;
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(Error::Config(format!("non-finite term for harmonic {:?}", t.k)));
            }
            let (k, phase) = if is_negative(&t.k) {
                (canonical(&t.k), -t.phase)
            } else {
                (t.k, t.phase)
            };
            if out.iter().any(|h| h.k == k) {
                return Err(Error::DuplicateHarmonic { k });
            }
            out.push(Harmonic { k, amplitude: t.amplitude, phase });
        }
        Ok(Self { dim, terms: out })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// `a₁cos(x₁+φ₁) + a₂cos(x₂+φ₂) + a₃cos(x₁−x₂+φ₃)`, the two-dimensional
    /// test potential used throughout the crate.
    pub fn three_wave(a: [f64; 3], phi: [f64; 3]) -> Self {
        Self {
            dim: 2,
            terms: vec![
                Harmonic::new(vec![1, 0], a[0], phi[0]),
                Harmonic::new(vec![0, 1], a[1], phi[1]),
                Harmonic::new(vec![1, -1], a[2], phi[2]),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Harmonic] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (dot_int(&t.k, x) + t.phase).cos())
            .sum()
    }

    /// Writes `∇f(x)` into `out`. Terms are accumulated in storage order so
    /// the result is bit-reproducible.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for t in &self.terms {
            let s = t.amplitude * (dot_int(&t.k, x) + t.phase).sin();
            for (g, &kj) in out.iter_mut().zip(&t.k) {
                if kj != 0 {
                    *g -= kj as f64 * s;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    /// Looks up the term with wave vector `±k`, returning it oriented along `k`.
    pub fn harmonic(&self, k: &[i64]) -> Option<Harmonic> {
        let c = canonical(k);
        self.terms.iter().find(|t| t.k == c).map(|t| {
            if is_negative(k) {
                Harmonic::new(k.to_vec(), t.amplitude, -t.phase)
            } else {
                t.clone()
            }
        })
    }

    /// Keeps the terms for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&Harmonic) -> bool) -> Self {
        Self { dim: self.dim, terms: self.terms.iter().filter(|t| keep(t)).cloned().collect() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Harmonic::new(t.k.clone(), t.amplitude * factor, t.phase))
                .collect(),
        }
    }

    /// Sum of two series; coincident harmonics are merged through their
    /// complex coefficients.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut terms = self.terms.clone();
        for t in &other.terms {
            match terms.iter_mut().find(|h| h.k == t.k) {
                Some(h) => {
                    let (r1, i1) = h.coefficient();
                    let (r2, i2) = t.coefficient();
                    *h = Harmonic::from_coefficient(t.k.clone(), r1 + r2, i1 + i2);
                }
                None => terms.push(t.clone()),
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// Shifts the argument: returns `g(x) = f(x + s)`.
    pub fn shifted(&self, s: &[f64]) -> Result<Self> {
        check_dim(self.dim, s.len())?;
        Ok(Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Harmonic::new(t.k.clone(), t.amplitude, t.phase + dot_int(&t.k, s)))
                .collect(),
        })
    }

    /// Sup-norm of the series on the uniform grid with `points` nodes per axis.
    pub fn grid_sup(&self, points: usize) -> f64 {
        let mut sup: f64 = 0.0;
        for_each_grid_point(self.dim, points, |x| sup = sup.max(self.eval(x).abs()));
        sup
    }
}

/// Visits every node of the uniform `points^dim` grid on the torus.
pub fn for_each_grid_point(dim: usize, points: usize, mut f: impl FnMut(&[f64])) {
    let total = points.pow(dim as u32);
    let step = TAU / points as f64;
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut r = idx;
        for xj in x.iter_mut() {
            *xj = (r % points) as f64 * step;
            r /= points;
        }
        f(&x);
    }
}
