#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

/// `(K(κ), E(κ))` for modulus `κ` by the arithmetic-geometric mean.
pub fn elliptic_ke(kappa: f64) -> (f64, f64) {
    let (mut a, mut b) = (1.0f64, (1.0 - kappa * kappa).sqrt());
    let mut c = kappa;
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..60 {
        if c.abs() < 1e-17 {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        pow *= 2.0;
        sum += pow * c * c;
        a = an;
        b = bn;
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Action and frequency of `½p² − cos q` at energy `e ∈ (−1, 1)`.
pub fn cosine_pendulum_oracle(e: f64) -> (f64, f64) {
    let kappa = ((e + 1.0) / 2.0).sqrt();
    let (kk, ee) = elliptic_ke(kappa);
    (8.0 / PI * (ee - (1.0 - kappa * kappa) * kk), 2.0 * PI / (4.0 * kk))
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

/// Compares `content` with the stored golden file. A missing file, or
/// `UPDATE_GOLDEN` set in the environment, writes it instead.
pub fn check_golden(name: &str, content: &str) -> Result<&'static str, String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, content).map_err(|e| e.to_string())?;
        return Ok("written");
    }
    let stored = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    if stored == content {
        Ok("matches")
    } else {
        let line = stored.lines().zip(content.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
        Err(format!("{name} differs from the golden file (first differing line {line})"))
    }
}
