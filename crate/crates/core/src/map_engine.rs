//! Iteration of the twist map `y⁺ = y − ε∇V(x)`, `x⁺ = x + y⁺`.
//!
//! Angles are carried as a reduced value in `[0, 2π)` together with an
//! integer winding count per coordinate, so the continuous lift
//! `x + 2π·w` never loses precision over long runs.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::trig::TrigSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub y: Vec<f64>,
    /// Angles reduced into `[0, 2π)`.
    pub x: Vec<f64>,
    /// Number of full turns separating the lift from the reduced angle.
    pub winding: Vec<i64>,
}

/// Splits a lifted angle into `(reduced, turns)`.
#[inline]
fn reduce_angle(t: f64) -> (f64, i64) {
    let m = (t / TAU).floor();
    let mut r = t - m * TAU;
    let mut m = m as i64;
    if r >= TAU {
        r -= TAU;
        m += 1;
    } else if r < 0.0 {
        r += TAU;
        m -= 1;
    }
    (r, m)
}

impl PhaseState {
    /// Builds a state from actions and lifted angles.
    pub fn new(y: Vec<f64>, x_lift: Vec<f64>) -> Result<Self> {
        check_dim(y.len(), x_lift.len())?;
        let (x, winding) = x_lift.iter().map(|&t| reduce_angle(t)).unzip();
        Ok(Self { y, x, winding })
    }

    pub fn from_parts(y: Vec<f64>, x: Vec<f64>, winding: Vec<i64>) -> Result<Self> {
        check_dim(y.len(), x.len())?;
        check_dim(y.len(), winding.len())?;
        if x.iter().any(|v| !(0.0..TAU).contains(v)) {
            return Err(Error::Config("reduced angles must lie in [0, 2π)".into()));
        }
        Ok(Self { y, x, winding })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn lift(&self, j: usize) -> f64 {
        self.x[j] + TAU * self.winding[j] as f64
    }

    pub fn x_lift(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.lift(j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(&self.x).all(|v| v.is_finite())
    }
}

/// A recorded trajectory. `states[i]` is the state after `i·stride` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub eps: f64,
    pub stride: u64,
    pub potential: TrigSeries,
    pub states: Vec<PhaseState>,
}

impl Orbit {
    pub fn initial(&self) -> &PhaseState {
        &self.states[0]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, PhaseState::dim)
    }

    /// Map iterations elapsed at record `i`.
    pub fn step_of(&self, i: usize) -> u64 {
        i as u64 * self.stride
    }

    /// Sub-orbit of records `range`, keeping stride and metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Orbit {
        Orbit {
            eps: self.eps,
            stride: self.stride,
            potential: self.potential.clone(),
            states: self.states[range].to_vec(),
        }
    }
}

fn check_inputs(state: &PhaseState, v: &TrigSeries, eps: f64) -> Result<()> {
    check_dim(v.dim(), state.dim())?;
    if !(eps >= 0.0) {
        return Err(Error::Config("eps must be ≥ 0".into()));
    }
    Ok(())
}

/// Turn counts beyond this leave no precision in the reduced angle.
const MAX_TURNS: i64 = 1 << 52;

fn add_turns(w: &mut i64, m: i64) -> bool {
    match w.checked_add(m) {
        Some(t) if t.abs() <= MAX_TURNS && m.abs() <= MAX_TURNS => {
            *w = t;
            true
        }
        _ => false,
    }
}

/// Advances `state` by one step in place. `grad` is scratch of length N.
/// Returns `false` once the state is no longer finite or representable.
#[inline]
fn step_in_place(state: &mut PhaseState, v: &TrigSeries, eps: f64, grad: &mut [f64]) -> bool {
    v.gradient_into(&state.x, grad);
    let mut ok = true;
    for j in 0..state.y.len() {
        state.y[j] -= eps * grad[j];
        let (r, m) = reduce_angle(state.x[j] + state.y[j]);
        state.x[j] = r;
        ok &= state.y[j].is_finite() && r.is_finite() && add_turns(&mut state.winding[j], m);
    }
    ok
}

pub fn map_step(state: &PhaseState, v: &TrigSeries, eps: f64) -> Result<PhaseState> {
    check_inputs(state, v, eps)?;
    let mut next = state.clone();
    let mut grad = vec![0.0; state.dim()];
    if !step_in_place(&mut next, v, eps, &mut grad) {
        return Err(Error::NonFinite { step: 1 });
    }
    Ok(next)
}

pub fn inverse_step(state: &PhaseState, v: &TrigSeries, eps: f64) -> Result<PhaseState> {
    check_inputs(state, v, eps)?;
    let mut prev = state.clone();
    for j in 0..prev.dim() {
        let (r, m) = reduce_angle(prev.x[j] - prev.y[j]);
        prev.x[j] = r;
        if !(r.is_finite() && add_turns(&mut prev.winding[j], m)) {
            return Err(Error::NonFinite { step: 1 });
        }
    }
    let grad = v.gradient(&prev.x);
    for (yj, g) in prev.y.iter_mut().zip(grad) {
        *yj += eps * g;
    }
    Ok(prev)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    det
}

/// Central finite-difference Jacobian of [`map_step`] in the coordinates
/// `(y, x_lift)`, returned row-major.
pub fn jacobian(state: &PhaseState, v: &TrigSeries, eps: f64, h: f64) -> Result<Vec<Vec<f64>>> {
    check_inputs(state, v, eps)?;
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let n = state.dim();
    let base_lift = state.x_lift();
    let mut jac = vec![vec![0.0; 2 * n]; 2 * n];
    for col in 0..2 * n {
        let perturbed = |sign: f64| -> Result<PhaseState> {
            let mut y = state.y.clone();
            let mut x = base_lift.clone();
            if col < n {
                y[col] += sign * h;
            } else {
                x[col - n] += sign * h;
            }
            map_step(&PhaseState::new(y, x)?, v, eps)
        };
        let plus = perturbed(1.0)?;
        let minus = perturbed(-1.0)?;
        for row in 0..n {
            jac[row][col] = (plus.y[row] - minus.y[row]) / (2.0 * h);
            let dlift = (plus.x[row] - minus.x[row])
                + TAU * (plus.winding[row] - minus.winding[row]) as f64;
            jac[n + row][col] = dlift / (2.0 * h);
        }
    }
    Ok(jac)
}

pub fn jacobian_determinant(state: &PhaseState, v: &TrigSeries, eps: f64, h: f64) -> Result<f64> {
    Ok(determinant(jacobian(state, v, eps, h)?))
}

/// Runs `steps` iterations, recording every `stride`-th state (including
/// the initial one). Requires `steps ≥ stride` so that at least two states
/// are stored.
pub fn iterate(
    initial: &PhaseState,
    v: &TrigSeries,
    eps: f64,
    steps: u64,
    stride: u64,
) -> Result<Orbit> {
    check_inputs(initial, v, eps)?;
    if steps == 0 || stride == 0 {
        return Err(Error::Config("steps and stride must be ≥ 1".into()));
    }
    if steps < stride {
        return Err(Error::Config("steps must be at least one stride".into()));
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let records = (steps / stride) as usize + 1;
    let mut states = Vec::with_capacity(records);
    states.push(initial.clone());
    let mut cur = initial.clone();
    let mut grad = vec![0.0; initial.dim()];
    for i in 1..=steps {
        if !step_in_place(&mut cur, v, eps, &mut grad) {
            return Err(Error::NonFinite { step: i });
        }
        if i % stride == 0 {
            states.push(cur.clone());
        }
    }
    Ok(Orbit { eps, stride, potential: v.clone(), states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn potential() -> TrigSeries {
        TrigSeries::three_wave([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    }

    #[test]
    fn integrable_rotation_at_zero_eps() {
        let s = PhaseState::new(vec![0.3, 0.4], vec![1.0, 2.0]).unwrap();
        let n = map_step(&s, &potential(), 0.0).unwrap();
        assert_eq!(n.y, vec![0.3, 0.4]);
        assert!((n.lift(0) - 1.3).abs() < 1e-15);
        assert!((n.lift(1) - 2.4).abs() < 1e-15);
    }

    #[test]
    fn single_harmonic_kick() {
        let v = TrigSeries::new(2, vec![crate::trig::Harmonic::new(vec![1, 0], 1.0, 0.0)]).unwrap();
        let s = PhaseState::new(vec![0.0, 0.0], vec![FRAC_PI_2, 0.0]).unwrap();
        let n = map_step(&s, &v, 0.1).unwrap();
        assert!((n.y[0] - 0.1).abs() < 1e-16);
        assert_eq!(n.y[1], 0.0);
        assert!((n.lift(0) - (FRAC_PI_2 + 0.1)).abs() < 1e-15);
        let back = inverse_step(&n, &v, 0.1).unwrap();
        assert!((back.y[0] - s.y[0]).abs() < 1e-15);
        assert!((back.lift(0) - s.lift(0)).abs() < 1e-15);
        assert_eq!(back.lift(1), 0.0);
    }

    #[test]
    fn inverse_at_zero_eps() {
        let s = PhaseState::new(vec![0.3, -0.4], vec![1.0, 2.0]).unwrap();
        let p = inverse_step(&s, &potential(), 0.0).unwrap();
        assert!((p.lift(0) - 0.7).abs() < 1e-15);
        assert!((p.lift(1) - 2.4).abs() < 1e-15);
        assert_eq!(p.y, s.y);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let s = PhaseState::new(vec![0.3], vec![1.0]).unwrap();
        assert!(matches!(map_step(&s, &potential(), 0.1), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(inverse_step(&s, &potential(), 0.1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn negative_eps_rejected() {
        let s = PhaseState::new(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        assert!(map_step(&s, &potential(), -0.1).is_err());
    }

    #[test]
    fn shear_determinant_is_one() {
        let s = PhaseState::new(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        let d = jacobian_determinant(&s, &potential(), 0.0, 1e-5).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reduced_angles_and_lift_are_consistent() {
        let s = PhaseState::new(vec![1.0, -2.0], vec![-7.5, 40.25]).unwrap();
        for j in 0..2 {
            assert!((0.0..TAU).contains(&s.x[j]));
        }
        assert!((s.lift(0) + 7.5).abs() < 1e-14);
        assert!((s.lift(1) - 40.25).abs() < 1e-13);
    }

    #[test]
    fn iterate_single_step_matches_map_step() {
        let s = PhaseState::new(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        let o = iterate(&s, &potential(), 0.1, 1, 1).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.states[1], map_step(&s, &potential(), 0.1).unwrap());
    }

    #[test]
    fn iterate_rejects_short_runs() {
        let s = PhaseState::new(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        assert!(iterate(&s, &potential(), 0.1, 3, 5).is_err());
        assert!(iterate(&s, &potential(), 0.1, 0, 1).is_err());
    }

    #[test]
    fn non_finite_aborts_with_step_index() {
        let s = PhaseState::new(vec![f64::NAN, 0.1], vec![1.0, 0.0]).unwrap();
        assert_eq!(iterate(&s, &potential(), 0.1, 10, 1).unwrap_err(), Error::NonFinite { step: 0 });
        let huge = TrigSeries::three_wave([1e308, 1e308, 1e308], [0.3, 0.2, 0.1]);
        let s = PhaseState::new(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap();
        assert!(matches!(iterate(&s, &huge, 1e10, 10, 1), Err(Error::NonFinite { step: 1 })));
    }

    #[test]
    fn stride_recording_matches_full_run() {
        let s = PhaseState::new(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        let full = iterate(&s, &potential(), 0.1, 100, 1).unwrap();
        let strided = iterate(&s, &potential(), 0.1, 100, 10).unwrap();
        assert_eq!(strided.len(), 11);
        for (i, st) in strided.states.iter().enumerate() {
            assert_eq!(st, &full.states[10 * i]);
        }
    }
}
