//! Resonant averaging, the cohomological equation and first-order torus
//! projections.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::lattice::{saturate, HermiteForm};
use crate::resonance::{map_defect, Convention};
use crate::trig::{dot_int, for_each_grid_point, Harmonic, TrigSeries};

/// Number of grid points per angle used to verify the cohomological identity.
pub const VERIFY_GRID: usize = 64;

/// A sublattice `g ⊂ ℤᴺ` of resonant wave vectors, held in Hermite normal form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResonanceModule {
    dim: usize,
    generators: Vec<Vec<i64>>,
    #[serde(skip)]
    hnf: HermiteForm,
}

impl ResonanceModule {
    pub fn trivial(dim: usize) -> Self {
        Self::from_hermite(HermiteForm::new(dim, &[]))
    }

    pub fn full(dim: usize) -> Self {
        let id: Vec<Vec<i64>> =
            (0..dim).map(|c| (0..dim).map(|r| i64::from(r == c)).collect()).collect();
        Self::generated(dim, &id)
    }

    /// Lattice spanned by `vectors` over ℤ.
    pub fn generated(dim: usize, vectors: &[Vec<i64>]) -> Self {
        Self::from_hermite(HermiteForm::new(dim, vectors))
    }

    /// All integer vectors in the rational span of `vectors`.
    pub fn saturated(dim: usize, vectors: &[Vec<i64>]) -> Self {
        Self::from_hermite(saturate(dim, vectors))
    }

    fn from_hermite(hnf: HermiteForm) -> Self {
        Self { dim: hnf.dim, generators: hnf.rows_i64(), hnf }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.hnf.rank()
    }

    /// Generator columns `Θ`, one vector per column.
    pub fn generators(&self) -> &[Vec<i64>] {
        &self.generators
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        self.hnf.contains(k)
    }
}

/// Keeps exactly the harmonics whose wave vector lies in `g`.
pub fn project_resonant(f: &TrigSeries, g: &ResonanceModule) -> Result<TrigSeries> {
    check_dim(f.dim(), g.dim())?;
    Ok(f.filter(|t| g.contains(&t.k)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohomologySolution {
    pub s: TrigSeries,
    /// Resonant part `⟨H₁⟩_g`.
    pub v: TrigSeries,
    pub residual_norm: f64,
    pub smallest_divisor: f64,
    pub omitted_terms: usize,
    pub convention: Convention,
}

/// Solves the homological equation for `S` with `⟨S⟩_g = 0`.
///
/// Flow convention: `⟨ν, ∂S/∂x⟩ + H₁ = v`. Map convention:
/// `S(x + ν) − S(x) + H₁ = v`, whose divisors are `e^{i⟨k,ν⟩} − 1`; the
/// reported divisor is `min_{k₀} |⟨k,ν⟩ − 2πk₀|`.
pub fn solve_cohomological(
    h1: &TrigSeries,
    nu0: &[f64],
    g: &ResonanceModule,
    divisor_floor: f64,
    convention: Convention,
) -> Result<CohomologySolution> {
    check_dim(h1.dim(), nu0.len())?;
    check_dim(h1.dim(), g.dim())?;
    let mut s_terms = Vec::new();
    let mut v_terms = Vec::new();
    let mut smallest = f64::INFINITY;
    let mut omitted = 0;
    for t in h1.terms() {
        if g.contains(&t.k) {
            v_terms.push(t.clone());
            omitted += 1;
            continue;
        }
        let alpha = dot_int(&t.k, nu0);
        let divisor = match convention {
            Convention::Flow => alpha.abs(),
            Convention::Map => map_defect(alpha).1,
        };
        if !(divisor >= divisor_floor) {
            return Err(Error::SmallDivisor { k: t.k.clone(), divisor, floor: divisor_floor });
        }
        smallest = smallest.min(divisor);
        let term = match convention {
            // −a/α · sin(θ+φ) = (a/α)·cos(θ+φ+π/2)
            Convention::Flow => Harmonic::new(t.k.clone(), t.amplitude / alpha, t.phase + FRAC_PI_2),
            Convention::Map => {
                // c_S = −c_H / (e^{iα} − 1)
                let (hr, hi) = t.coefficient();
                let (dr, di) = (alpha.cos() - 1.0, alpha.sin());
                let den = dr * dr + di * di;
                let (sr, si) = (-(hr * dr + hi * di) / den, -(hi * dr - hr * di) / den);
                Harmonic::new(t.k.clone(), sr.hypot(si), si.atan2(sr))
            }
        };
        s_terms.push(term);
    }
    let s = TrigSeries::new(h1.dim(), s_terms)?;
    let v = TrigSeries::new(h1.dim(), v_terms)?;
    let residual_norm = cohomological_residual(h1, &s, &v, nu0, convention, VERIFY_GRID)?;
    Ok(CohomologySolution { s, v, residual_norm, smallest_divisor: smallest, omitted_terms: omitted, convention })
}

/// Sup-norm of the homological identity's residual on a `points^N` grid.
pub fn cohomological_residual(
    h1: &TrigSeries,
    s: &TrigSeries,
    v: &TrigSeries,
    nu0: &[f64],
    convention: Convention,
    points: usize,
) -> Result<f64> {
    let shifted = s.shifted(nu0)?;
    let mut sup: f64 = 0.0;
    let mut grad = vec![0.0; h1.dim()];
    for_each_grid_point(h1.dim(), points, |x| {
        let lhs = match convention {
            Convention::Flow => {
                s.gradient_into(x, &mut grad);
                grad.iter().zip(nu0).map(|(g, n)| g * n).sum::<f64>()
            }
            Convention::Map => shifted.eval(x) - s.eval(x),
        };
        sup = sup.max((lhs + h1.eval(x) - v.eval(x)).abs());
    });
    Ok(sup)
}

/// Point cloud `{Y₀ + √ε·∂S/∂x(X)}` over a `samples^N` grid of angles.
///
/// With `window = Some((lo, hi))` only angles whose resonant phase
/// `⟨Θ, X⟩ mod 2π` falls in `[lo, hi]` are kept; this needs a rank-one module.
pub fn first_order_projection(
    y0: &[f64],
    s: &TrigSeries,
    eps: f64,
    g: &ResonanceModule,
    samples: usize,
    window: Option<(f64, f64)>,
) -> Result<Vec<Vec<f64>>> {
    check_dim(s.dim(), y0.len())?;
    if samples == 0 {
        return Err(Error::Config("samples must be ≥ 1".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Config("eps must be ≥ 0".into()));
    }
    let theta = match window {
        Some(_) if g.rank() != 1 => {
            return Err(Error::Config("an oscillation window needs a rank-one resonance module".into()))
        }
        Some(_) => Some(g.generators()[0].clone()),
        None => None,
    };
    let root = eps.sqrt();
    let mut out = Vec::new();
    let mut grad = vec![0.0; s.dim()];
    for_each_grid_point(s.dim(), samples, |x| {
        if let (Some((lo, hi)), Some(k)) = (window, theta.as_ref()) {
            let q = dot_int(k, x);
            if (q - lo).rem_euclid(TAU) > hi - lo {
                return;
            }
        }
        s.gradient_into(x, &mut grad);
        out.push(y0.iter().zip(&grad).map(|(y, g)| y + root * g).collect());
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_wave() -> TrigSeries {
        TrigSeries::three_wave([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    }

    #[test]
    fn projector_keeps_resonant_terms() {
        let f = TrigSeries::new(
            2,
            vec![Harmonic::new(vec![1, 0], 1.0, 0.0), Harmonic::new(vec![1, -1], 1.0, 0.0)],
        )
        .unwrap();
        let g = ResonanceModule::generated(2, &[vec![1, -1]]);
        let p = project_resonant(&f, &g).unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].k, vec![1, -1]);
        assert!(project_resonant(&f, &ResonanceModule::trivial(2)).unwrap().is_empty());
        assert_eq!(project_resonant(&f, &ResonanceModule::full(2)).unwrap(), f);
        assert_eq!(project_resonant(&p, &g).unwrap(), p);
    }

    #[test]
    fn flow_solution_of_single_harmonic() {
        let h = TrigSeries::new(2, vec![Harmonic::new(vec![1, 0], 1.0, 0.0)]).unwrap();
        let nu = [1.0, 2f64.sqrt() - 1.0];
        let sol =
            solve_cohomological(&h, &nu, &ResonanceModule::trivial(2), 1e-6, Convention::Flow).unwrap();
        for &x1 in &[0.0, 0.4, 2.0] {
            assert!((sol.s.eval(&[x1, 0.3]) + x1.sin()).abs() < 1e-14);
        }
        assert!(sol.residual_norm < 1e-12);
        assert!(sol.v.is_empty());
    }

    #[test]
    fn resonant_term_passes_to_v() {
        let h = TrigSeries::new(2, vec![Harmonic::new(vec![1, -1], 1.0, 0.0)]).unwrap();
        let g = ResonanceModule::generated(2, &[vec![1, -1]]);
        let sol = solve_cohomological(&h, &[1.0, 1.0], &g, 1e-6, Convention::Flow).unwrap();
        assert!(sol.s.is_empty());
        assert_eq!(sol.v, h);
        assert_eq!(sol.omitted_terms, 1);
    }

    #[test]
    fn map_convention_residual() {
        let nu = [0.7, 2f64.sqrt()];
        let sol = solve_cohomological(&three_wave(), &nu, &ResonanceModule::trivial(2), 1e-6, Convention::Map)
            .unwrap();
        assert!(sol.residual_norm < 1e-10, "{}", sol.residual_norm);
        assert!((sol.smallest_divisor - 0.7).abs() < 1e-14);
    }

    #[test]
    fn small_divisor_is_an_error() {
        let r = solve_cohomological(&three_wave(), &[1.0, 1.0], &ResonanceModule::trivial(2), 1e-6, Convention::Flow);
        assert!(matches!(r, Err(Error::SmallDivisor { ref k, .. }) if k == &vec![1, -1]));
        let r = solve_cohomological(&three_wave(), &[TAU, 0.5], &ResonanceModule::trivial(2), 1e-6, Convention::Map);
        assert!(matches!(r, Err(Error::SmallDivisor { ref k, .. }) if k == &vec![1, 0]));
    }

    #[test]
    fn projection_scales_with_root_eps() {
        let sol = solve_cohomological(&three_wave(), &[1.0, 2f64.sqrt() - 1.0], &ResonanceModule::trivial(2), 1e-6, Convention::Flow)
            .unwrap();
        let y0 = [1.0, 0.4];
        let g = ResonanceModule::trivial(2);
        let a = first_order_projection(&y0, &sol.s, 0.01, &g, 8, None).unwrap();
        let b = first_order_projection(&y0, &sol.s, 0.04, &g, 8, None).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            for j in 0..2 {
                let (da, db) = (pa[j] - y0[j], pb[j] - y0[j]);
                if da.abs() > 1e-3 {
                    assert!((db / da - 2.0).abs() < 1e-12);
                }
            }
        }
        let zero = first_order_projection(&y0, &TrigSeries::zero(2), 0.1, &g, 4, None).unwrap();
        assert!(zero.iter().all(|p| p == &y0.to_vec()));
        assert!(first_order_projection(&y0, &sol.s, 0.1, &g, 4, Some((0.0, 1.0))).is_err());
    }
}
