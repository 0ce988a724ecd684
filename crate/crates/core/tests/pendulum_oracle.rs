//! Pendulum quadratures against complete elliptic integrals computed by the
//! arithmetic-geometric mean.

mod common;

use std::f64::consts::PI;

use common::{cosine_pendulum_oracle, elliptic_ke};

use kamtori::pendulum::{frequency_and_twist, PendulumModel, SEPARATRIX_BAND};
use kamtori::{Harmonic, TrigSeries};

fn cosine_pendulum() -> PendulumModel {
    let u = TrigSeries::new(1, vec![Harmonic::new(vec![1], -1.0, 0.0)]).unwrap();
    PendulumModel::new(1.0, u, 0.0).unwrap()
}

#[test]
fn agm_reference_values() {
    let (k, e) = elliptic_ke(0.0);
    assert!((k - PI / 2.0).abs() < 1e-15 && (e - PI / 2.0).abs() < 1e-15);
    // K(1/√2) = Γ(1/4)²/(4√π)
    let (k, _) = elliptic_ke(0.5f64.sqrt());
    assert!((k - 1.854_074_677_301_372).abs() < 1e-14);
}

#[test]
fn action_and_frequency_match_elliptic_oracle() {
    let m = cosine_pendulum();
    let (lo, hi) = (-1.0 + 1e-3, 1.0 - 1e-3);
    for i in 0..50 {
        let e = lo + (hi - lo) * i as f64 / 49.0;
        let (action, omega) = cosine_pendulum_oracle(e);
        let got_i = m.action(e).unwrap();
        let got_w = m.frequency(e).unwrap();
        assert!((got_i - action).abs() / action < 1e-8, "I({e}): {got_i} vs {action}");
        assert!((got_w - omega).abs() / omega < 1e-8, "ω({e}): {got_w} vs {omega}");
    }
}

#[test]
fn harmonic_limit_and_separatrix_slowdown() {
    let m = cosine_pendulum();
    let t = frequency_and_twist(&m, &m.default_grid(60, SEPARATRIX_BAND), 1e6).unwrap();
    assert!((t.omega[0] - m.harmonic_frequency()).abs() / m.harmonic_frequency() < 1e-3);
    let top = t.len() - 6;
    assert!(t.omega[top..].windows(2).all(|w| w[1] < w[0]));
    assert!(t.omega[t.len() - 1] < 0.45);
}
