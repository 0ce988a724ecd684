//! The one-degree-of-freedom system `ĥ = ½Ap² + u(q)` obtained by averaging
//! near a single resonance, with action-angle quadratures.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::map_engine::Orbit;
use crate::quadrature::adaptive;
use crate::resonance::SingleResonanceGeometry;
use crate::trig::{dot_int, Harmonic, TrigSeries};

/// Points per period used to bracket extrema of `u`.
pub const EXTREMUM_GRID: usize = 4096;
/// Default relative width of the band excised below the separatrix.
pub const SEPARATRIX_BAND: f64 = 1e-4;

const ROOT_TOL: f64 = 1e-13;
const QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendulumModel {
    /// Positive stiffness after normalization.
    pub a: f64,
    /// `true` when the original stiffness was negative and `(A, u)` was
    /// replaced by `(−A, −u)`.
    pub flipped: bool,
    pub u: TrigSeries,
    pub q_min: f64,
    pub q_max: f64,
    pub e_min: f64,
    pub e_sep: f64,
    pub eps: f64,
}

fn u_eval(u: &TrigSeries, q: f64) -> f64 {
    u.eval(&[q])
}

fn u_d1(u: &TrigSeries, q: f64) -> f64 {
    u.terms().iter().map(|t| -t.amplitude * t.k[0] as f64 * (t.k[0] as f64 * q + t.phase).sin()).sum()
}

fn u_d2(u: &TrigSeries, q: f64) -> f64 {
    u.terms()
        .iter()
        .map(|t| {
            let j = t.k[0] as f64;
            -t.amplitude * j * j * (j * q + t.phase).cos()
        })
        .sum()
}

/// `u(q) − u(qe)` evaluated without cancellation when `q` is near `qe`.
fn u_increment(u: &TrigSeries, q: f64, qe: f64, d: f64) -> f64 {
    u.terms()
        .iter()
        .map(|t| {
            let j = t.k[0] as f64;
            -2.0 * t.amplitude * (0.5 * j * (q + qe) + t.phase).sin() * (0.5 * j * d).sin()
        })
        .sum()
}

/// Safeguarded Newton on a bracket `[lo, hi]` where `f` changes sign.
fn rtsafe(mut f: impl FnMut(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Quadrature("root is not bracketed".into()));
    }
    if flo > 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    // now f(lo) < 0 < f(hi)
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dx;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        let next = if dx != 0.0 && inside { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() < ROOT_TOL || (hi - lo).abs() < ROOT_TOL {
            return Ok(polish(&mut f, next, lo.min(hi), lo.max(hi)));
        }
        x = next;
    }
    Ok(x)
}

/// A few extra Newton steps so that the residual reaches roundoff level.
fn polish(f: &mut impl FnMut(f64) -> (f64, f64), mut x: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..3 {
        let (fx, dx) = f(x);
        if fx == 0.0 || dx == 0.0 {
            break;
        }
        let next = x - fx / dx;
        if !(next >= lo - ROOT_TOL && next <= hi + ROOT_TOL) {
            break;
        }
        x = next;
    }
    x
}

fn refine_extremum(u: &TrigSeries, q: f64, h: f64) -> f64 {
    rtsafe(|z| (u_d1(u, z), u_d2(u, z)), q - h, q + h).unwrap_or(q)
}

impl PendulumModel {
    /// Builds the model from a stiffness and a one-dimensional potential.
    pub fn new(a: f64, u: TrigSeries, eps: f64) -> Result<Self> {
        check_dim(1, u.dim())?;
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Geometry("pendulum stiffness must be finite and nonzero".into()));
        }
        let u = u.filter(|t| t.k[0] != 0 && t.amplitude != 0.0);
        if u.is_empty() {
            return Err(Error::DegenerateResonance);
        }
        let (a, u, flipped) = if a < 0.0 { (-a, u.scaled(-1.0), true) } else { (a, u, false) };
        let h = TAU / EXTREMUM_GRID as f64;
        let (mut imin, mut imax) = (0, 0);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..EXTREMUM_GRID {
            let v = u_eval(&u, i as f64 * h);
            if v < vmin {
                (vmin, imin) = (v, i);
            }
            if v > vmax {
                (vmax, imax) = (v, i);
            }
        }
        let q_min = refine_extremum(&u, imin as f64 * h, h).rem_euclid(TAU);
        let q_max = refine_extremum(&u, imax as f64 * h, h).rem_euclid(TAU);
        let (e_min, e_sep) = (u_eval(&u, q_min).min(vmin), u_eval(&u, q_max).max(vmax));
        if !(e_sep - e_min > 1e-14 * e_sep.abs().max(1.0)) {
            return Err(Error::DegenerateResonance);
        }
        Ok(Self { a, flipped, u, q_min, q_max, e_min, e_sep, eps })
    }

    pub fn potential(&self, q: f64) -> f64 {
        u_eval(&self.u, q)
    }

    pub fn delta_e(&self) -> f64 {
        self.e_sep - self.e_min
    }

    /// `½Ap² + u(q)` in the normalized convention.
    pub fn energy(&self, p: f64, q: f64) -> f64 {
        0.5 * self.a * p * p + self.potential(q)
    }

    /// Highest energy kept in tables: `E_sep − band·ΔE`.
    pub fn band_top(&self, band: f64) -> f64 {
        self.e_sep - band * self.delta_e()
    }

    /// Turning points `q₁ < q_min < q₂` of the oscillation at energy `E`.
    pub fn turning_points(&self, e: f64) -> Result<(f64, f64)> {
        self.check_energy(e)?;
        let h = TAU / EXTREMUM_GRID as f64;
        let find = |dir: f64| -> Result<f64> {
            let mut prev = self.q_min;
            for i in 1..=EXTREMUM_GRID {
                let q = self.q_min + dir * i as f64 * h;
                if self.potential(q) >= e {
                    return rtsafe(|z| (self.potential(z) - e, u_d1(&self.u, z)), prev, q);
                }
                prev = q;
            }
            Err(Error::Quadrature(format!("no turning point for energy {e}")))
        };
        Ok((find(-1.0)?, find(1.0)?))
    }

    fn check_energy(&self, e: f64) -> Result<()> {
        if e > self.e_min && e < self.e_sep {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "energy {e} lies outside the oscillatory interval ({}, {})",
                self.e_min, self.e_sep
            )))
        }
    }

    /// Integrates `w(E − u(q))` over the oscillation in the variable
    /// `q = q₁ + (q₂−q₁)·sin²(θ/2)`, which removes the turning-point
    /// singularities.
    fn oscillation_integral(&self, e: f64, w: impl Fn(f64) -> f64) -> Result<f64> {
        let (q1, q2) = self.turning_points(e)?;
        let len = q2 - q1;
        let mut f = |theta: f64| {
            let (s, c) = (0.5 * theta).sin_cos();
            let (qe, d) = if theta < 0.5 * PI { (q1, len * s * s) } else { (q2, -len * c * c) };
            // The turning points are taken as exact, so E − u(q) = u(qe) − u(q).
            let gap = -u_increment(&self.u, qe + d, qe, d);
            if gap > 0.0 {
                w(gap) * 0.5 * len * theta.sin()
            } else {
                0.0
            }
        };
        adaptive(&mut f, 0.0, PI, QUAD_TOL, 24)
            .ok_or_else(|| Error::Quadrature(format!("quadrature did not converge at energy {e}")))
    }

    /// `I(E) = (1/2π)∮p dq`.
    pub fn action(&self, e: f64) -> Result<f64> {
        let a = self.a;
        Ok(self.oscillation_integral(e, |g| (2.0 * g / a).sqrt())? / PI)
    }

    /// `T(E) = 2∫dq/√(2A(E − u))`.
    pub fn period(&self, e: f64) -> Result<f64> {
        let a = self.a;
        Ok(2.0 * self.oscillation_integral(e, |g| 1.0 / (2.0 * a * g).sqrt())?)
    }

    pub fn frequency(&self, e: f64) -> Result<f64> {
        Ok(TAU / self.period(e)?)
    }

    /// Small-oscillation frequency `√(A·u''(q_min))`.
    pub fn harmonic_frequency(&self) -> f64 {
        (self.a * u_d2(&self.u, self.q_min)).sqrt()
    }

    /// `E_min < ½Ap² + u(q) < E_sep`.
    pub fn in_oscillatory_domain(&self, p: f64, q: f64) -> bool {
        let e = self.energy(p, q);
        e > self.e_min && e < self.e_sep
    }

    /// Oscillatory domain with the band below the separatrix removed.
    pub fn in_excised_domain(&self, p: f64, q: f64, band: f64) -> bool {
        let e = self.energy(p, q);
        e > self.e_min && e < self.band_top(band)
    }

    /// Half-width in `p` of the oscillatory domain at `q = q_min`.
    pub fn width_at_minimum(&self) -> f64 {
        (2.0 * self.delta_e() / self.a).sqrt()
    }

    /// Energies in `(E_min, E_sep − band·ΔE)`, clustered at both ends.
    pub fn default_grid(&self, count: usize, band: f64) -> Vec<f64> {
        let (lo, hi) = (1e-4, 1.0 - band);
        (0..count)
            .map(|i| {
                let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
                let s = lo + (hi - lo) * 0.5 * (1.0 - (PI * t).cos());
                self.e_min + self.delta_e() * s
            })
            .collect()
    }
}

/// Five-point central derivative with a step adapted to the distance from
/// the ends of the oscillatory interval.
fn local_derivative(model: &PendulumModel, e: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let room = (e - model.e_min).min(model.e_sep - e);
    let h = 1e-3 * room;
    let (fm2, fm1, fp1, fp2) = (f(e - 2.0 * h)?, f(e - h)?, f(e + h)?, f(e + 2.0 * h)?);
    Ok((fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h))
}

/// Averaging of `H₁` along `K0`: every harmonic `k = j·K0` becomes
/// `a·cos(jq + φ)`; all others are discarded.
pub fn resonant_potential(h1: &TrigSeries, k0: &[i64]) -> Result<TrigSeries> {
    check_dim(h1.dim(), k0.len())?;
    let lead = k0.iter().position(|&c| c != 0).ok_or(Error::DegenerateResonance)?;
    let mut terms = Vec::new();
    for t in h1.terms() {
        if t.k[lead] % k0[lead] != 0 {
            continue;
        }
        let j = t.k[lead] / k0[lead];
        if t.k.iter().zip(k0).all(|(&a, &b)| a == j * b) && j != 0 {
            terms.push(Harmonic::new(vec![j], t.amplitude, t.phase));
        }
    }
    TrigSeries::new(1, terms)
}

/// Reduction of `H₁` at a point `Y` on the resonance surface.
pub fn reduce(h1: &TrigSeries, geometry: &SingleResonanceGeometry, y_on_sigma: &[f64], eps: f64) -> Result<PendulumModel> {
    check_dim(geometry.dim(), y_on_sigma.len())?;
    let defect = geometry.resonance_defect(y_on_sigma);
    if defect.abs() > 1e-9 {
        return Err(Error::Geometry(format!("point is off the resonance surface (defect {defect:e})")));
    }
    let u = resonant_potential(h1, &geometry.k)?;
    PendulumModel::new(geometry.a, u, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionTable {
    pub energies: Vec<f64>,
    pub actions: Vec<f64>,
    pub periods: Vec<f64>,
    pub omega: Vec<f64>,
    /// `dω/dE`.
    pub twist: Vec<f64>,
    /// `dI/dE` from differentiating the action quadrature.
    pub di_de: Vec<f64>,
    /// Rows where one of the four twist bounds fails.
    pub flags: Vec<bool>,
    pub twist_constant: f64,
}

impl ActionTable {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Action, frequency and twist on an energy grid. A row is flagged when any
/// of `|ω| < c`, `|ω'_I| < c`, `|1/ω| < c`, `|1/ω'_I| < c` fails, with
/// `ω'_I = ω·dω/dE`.
pub fn frequency_and_twist(model: &PendulumModel, grid: &[f64], c: f64) -> Result<ActionTable> {
    let mut t = ActionTable {
        energies: grid.to_vec(),
        actions: Vec::with_capacity(grid.len()),
        periods: Vec::with_capacity(grid.len()),
        omega: Vec::with_capacity(grid.len()),
        twist: Vec::with_capacity(grid.len()),
        di_de: Vec::with_capacity(grid.len()),
        flags: Vec::with_capacity(grid.len()),
        twist_constant: c,
    };
    for &e in grid {
        let period = model.period(e)?;
        let omega = TAU / period;
        let twist = local_derivative(model, e, |z| model.frequency(z))?;
        let di_de = local_derivative(model, e, |z| model.action(z))?;
        let w_i = omega * twist;
        let ok = omega.abs() < c && w_i.abs() < c && 1.0 / omega.abs() < c && 1.0 / w_i.abs() < c;
        t.actions.push(model.action(e)?);
        t.periods.push(period);
        t.omega.push(omega);
        t.twist.push(twist);
        t.di_de.push(di_de);
        t.flags.push(!ok);
    }
    Ok(t)
}

/// Reduced coordinates `p = λ(y)/√ε`, `q = ⟨K0, x⟩ − 2πk₀·n` of every
/// recorded state.
pub fn project_reduced(orbit: &Orbit, geometry: &SingleResonanceGeometry, eps: f64) -> Result<Vec<(f64, f64)>> {
    check_dim(geometry.dim(), orbit.dim())?;
    if !(eps > 0.0) {
        return Err(Error::Domain("reduced projection needs eps > 0".into()));
    }
    let root = eps.sqrt();
    orbit
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = geometry.lambda(&s.y)? / root;
            let q = dot_int(&geometry.k, &s.x_lift()) - TAU * geometry.k0 as f64 * orbit.step_of(i) as f64;
            Ok((p, q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum(a: f64) -> PendulumModel {
        let u = TrigSeries::new(1, vec![Harmonic::new(vec![1], -1.0, 0.0)]).unwrap();
        PendulumModel::new(a, u, 0.0).unwrap()
    }

    #[test]
    fn cosine_well_extrema() {
        let m = pendulum(1.0);
        assert!(m.q_min.abs() < 1e-12 || (m.q_min - TAU).abs() < 1e-12);
        assert!((m.q_max - PI).abs() < 1e-12);
        assert!((m.e_min + 1.0).abs() < 1e-15 && (m.e_sep - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_wave_reduction() {
        let v = TrigSeries::three_wave([1.0, 1.0, 0.8], [0.0, 0.0, 0.3]);
        let g = SingleResonanceGeometry::standard(vec![1, -1], 0).unwrap();
        let m = reduce(&v, &g, &[0.5, 0.5], 0.1).unwrap();
        assert_eq!(m.a, 2.0);
        assert!((m.delta_e() - 1.6).abs() < 1e-12);
        assert!(reduce(&v, &g, &[0.5, 0.4], 0.1).is_err());
    }

    #[test]
    fn no_parallel_harmonic_is_degenerate() {
        let v = TrigSeries::new(2, vec![Harmonic::new(vec![1, 0], 1.0, 0.0)]).unwrap();
        let g = SingleResonanceGeometry::standard(vec![1, -1], 0).unwrap();
        assert!(matches!(reduce(&v, &g, &[0.0, 0.0], 0.1), Err(Error::DegenerateResonance)));
    }

    #[test]
    fn oscillatory_domain_membership() {
        let m = pendulum(1.0);
        assert!(!m.in_oscillatory_domain(0.0, m.q_min));
        assert!(m.in_oscillatory_domain(0.0, 1.0));
        assert!(m.in_oscillatory_domain(1.9, 0.0));
        assert!(!m.in_oscillatory_domain(2.1, 0.0));
        assert!((m.width_at_minimum() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_limit_of_action() {
        let m = pendulum(1.0);
        let e = -0.9999;
        let i = m.action(e).unwrap();
        assert!((i - (e + 1.0)).abs() / (e + 1.0) < 1e-5);
        assert!((m.harmonic_frequency() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stiffness_scaling() {
        let (m1, m4) = (pendulum(1.0), pendulum(4.0));
        for e in [-0.5, 0.0, 0.7] {
            let (i1, i4) = (m1.action(e).unwrap(), m4.action(e).unwrap());
            assert!((i4 - 0.5 * i1).abs() < 1e-13 * i1);
        }
    }

    #[test]
    fn sign_normalization() {
        let u = TrigSeries::new(1, vec![Harmonic::new(vec![1], -1.0, 0.0)]).unwrap();
        let neg = PendulumModel::new(-1.0, u.scaled(-1.0), 0.0).unwrap();
        let pos = pendulum(1.0);
        assert!(neg.flipped);
        assert!((neg.action(0.2).unwrap() - pos.action(0.2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_energy() {
        let m = pendulum(1.0);
        assert!(matches!(m.action(1.5), Err(Error::Domain(_))));
        assert!(matches!(m.period(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn table_is_monotone_and_consistent() {
        let m = pendulum(1.0);
        let grid = m.default_grid(40, SEPARATRIX_BAND);
        let t = frequency_and_twist(&m, &grid, 1e6).unwrap();
        assert!(t.actions.windows(2).all(|w| w[0] < w[1]));
        for i in 0..t.len() {
            assert!((t.di_de[i] * t.omega[i] - 1.0).abs() < 1e-5);
        }
        assert!((t.omega[0] - 1.0).abs() < 1e-3);
        let top = t.len() - 10;
        assert!(t.omega[top..].windows(2).all(|w| w[1] < w[0]));
    }
}
