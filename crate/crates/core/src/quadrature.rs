//! Gauss–Legendre quadrature, fixed-order and adaptively subdivided.

use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on `[-1, 1]`, via Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(c + h * x)).sum();
        s * h
    }
}

/// `P_n(z)` and `P_n'(z)` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// The shared 64-node rule.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Integrates with the 64-node rule, bisecting panels whose estimate
/// disagrees with the sum over their halves by more than `rel_tol`.
///
/// Returns `None` when the subdivision depth is exhausted.
pub fn adaptive(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> Option<f64> {
    let rule = gl64();
    let whole = rule.integrate(f, a, b);
    refine(rule, f, a, b, whole, rel_tol, max_depth)
}

fn refine(
    rule: &GaussLegendre,
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let sum = left + right;
    if (sum - whole).abs() <= rel_tol * sum.abs().max(f64::MIN_POSITIVE) {
        return Some(sum);
    }
    if depth == 0 {
        return None;
    }
    Some(refine(rule, f, a, m, left, rel_tol, depth - 1)? + refine(rule, f, m, b, right, rel_tol, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 64] {
            let r = GaussLegendre::new(n);
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let r = GaussLegendre::new(5);
        let v = r.integrate(&mut |x| x.powi(9) + 3.0 * x.powi(4), 0.0, 1.0);
        assert!((v - (0.1 + 0.6)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_a_peak() {
        let v = adaptive(&mut |x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-14, 30).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() / exact < 1e-12);
    }
}
