//! Gaussian quadrature rules and small integration helpers.
//!
//! Rules are computed by the Golub-Welsch method: nodes are the eigenvalues
//! of the Jacobi matrix of the orthogonal-polynomial recurrence, weights come
//! from the first components of its eigenvectors. The tridiagonal QL solver
//! below tracks only that first row, which keeps the cost at O(n^2) so the
//! refinement loop can double orders into the thousands.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Nodes and weights of a quadrature rule on its natural domain.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Integrate `f` against this rule as-is.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Implicit-QL eigensolver for a symmetric tridiagonal matrix, tracking the
/// first row of the eigenvector matrix in `z`.
///
/// `d` holds the diagonal (overwritten with eigenvalues), `e` the subdiagonal
/// in `e[0..n-1]` with `e[n-1]` used as scratch.
fn tridiag_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Numerical(
                    "tridiagonal QL failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0;
            let mut underflowed = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Golub-Welsch: nodes/weights for the weight with recurrence coefficients
/// `diag` (a_k) and `offdiag_sq` (b_k, the squared off-diagonal entries),
/// `mu0` the total mass of the weight function.
fn golub_welsch(diag: Vec<f64>, offdiag_sq: Vec<f64>, mu0: f64) -> Result<QuadRule> {
    let n = diag.len();
    let mut d = diag;
    let mut e = vec![0.0; n];
    for (k, b) in offdiag_sq.iter().enumerate() {
        e[k] = b.sqrt();
    }
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    tridiag_ql(&mut d, &mut e, &mut z)?;
    let mut pairs: Vec<(f64, f64)> = d
        .into_iter()
        .zip(z.into_iter().map(|zi| mu0 * zi * zi))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

fn legendre_rule(n: usize) -> Result<QuadRule> {
    let diag = vec![0.0; n];
    let offdiag_sq: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        })
        .collect();
    golub_welsch(diag, offdiag_sq, 2.0)
}

fn hermite_rule(n: usize) -> Result<QuadRule> {
    let diag = vec![0.0; n];
    let offdiag_sq: Vec<f64> = (1..n).map(|k| k as f64 / 2.0).collect();
    golub_welsch(diag, offdiag_sq, std::f64::consts::PI.sqrt())
}

#[derive(PartialEq, Eq, Hash, Clone, Copy)]
enum RuleKind {
    Legendre,
    Hermite,
}

static RULE_CACHE: Lazy<Mutex<HashMap<(RuleKind, usize), Arc<QuadRule>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn cached(kind: RuleKind, n: usize) -> Result<Arc<QuadRule>> {
    if let Some(r) = RULE_CACHE.lock().unwrap().get(&(kind, n)) {
        return Ok(r.clone());
    }
    let rule = Arc::new(match kind {
        RuleKind::Legendre => legendre_rule(n)?,
        RuleKind::Hermite => hermite_rule(n)?,
    });
    RULE_CACHE
        .lock()
        .unwrap()
        .insert((kind, n), rule.clone());
    Ok(rule)
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<Arc<QuadRule>> {
    assert!(n >= 1, "quadrature order must be at least 1");
    cached(RuleKind::Legendre, n)
}

/// Gauss-Hermite rule for the weight exp(-x^2) on the whole line.
pub fn gauss_hermite(n: usize) -> Result<Arc<QuadRule>> {
    assert!(n >= 1, "quadrature order must be at least 1");
    cached(RuleKind::Hermite, n)
}

/// Integrate `f` over [a, b] with an n-point Gauss-Legendre rule.
pub fn integrate_legendre<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> Result<f64> {
    let rule = gauss_legendre(n)?;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half)
}

/// Integrate `f` over the whole line via the substitution x = scale*tan(theta).
///
/// Suits integrands with algebraic tails; the transformed integrand is smooth
/// on (-pi/2, pi/2) and vanishes at the endpoints.
pub fn integrate_tan<F: FnMut(f64) -> f64>(n: usize, scale: f64, mut f: F) -> Result<f64> {
    let rule = gauss_legendre(n)?;
    let half = std::f64::consts::FRAC_PI_2;
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&th, &w)| {
            let theta = half * th;
            let (s, c) = theta.sin_cos();
            let x = scale * s / c;
            w * f(x) * scale / (c * c)
        })
        .sum::<f64>()
        * half)
}

/// Trapezoid rule over tabulated values.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_small_order_reference_values() {
        let r = gauss_legendre(5).unwrap();
        // Abramowitz & Stegun 25.4.29
        let nodes = [
            -0.9061798459386640,
            -0.5384693101056831,
            0.0,
            0.5384693101056831,
            0.9061798459386640,
        ];
        let weights = [
            0.2369268850561891,
            0.4786286704993665,
            0.5688888888888889,
            0.4786286704993665,
            0.2369268850561891,
        ];
        for i in 0..5 {
            assert_abs_diff_eq!(r.nodes[i], nodes[i], epsilon = 1e-14);
            assert_abs_diff_eq!(r.weights[i], weights[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn hermite_small_order_reference_values() {
        let r = gauss_hermite(5).unwrap();
        assert_abs_diff_eq!(r.nodes[2], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.nodes[4], 2.0201828704560856, epsilon = 1e-13);
        assert_abs_diff_eq!(r.nodes[3], 0.9585724646138185, epsilon = 1e-13);
        assert_abs_diff_eq!(r.weights[2], 0.9453087204829419, epsilon = 1e-13);
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        // order n is exact through degree 2n-1
        let v = integrate_legendre(4, 0.0, 1.0, |x| x.powi(7)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 8.0, epsilon = 1e-15);
        let v = integrate_legendre(64, 1.0, 2.0, |x| (-x).exp()).unwrap();
        assert_abs_diff_eq!(v, (-1.0f64).exp() - (-2.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(20).unwrap();
        let m0 = r.integrate(|_| 1.0);
        let m2 = r.integrate(|x| x * x);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(m0, sqrt_pi, epsilon = 1e-13);
        assert_abs_diff_eq!(m2, 0.5 * sqrt_pi, epsilon = 1e-13);
    }

    #[test]
    fn large_order_rules_stay_sane() {
        for n in [512usize, 2048] {
            let r = gauss_legendre(n).unwrap();
            let mass: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(mass, 2.0, epsilon = 1e-11);
            // nodes sorted, inside (-1,1), symmetric
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(r.nodes[0] > -1.0 && r.nodes[n - 1] < 1.0);
            assert_abs_diff_eq!(r.nodes[0] + r.nodes[n - 1], 0.0, epsilon = 1e-12);
        }
        let h = gauss_hermite(1280).unwrap();
        let mass: f64 = h.weights.iter().sum();
        assert_abs_diff_eq!(mass, std::f64::consts::PI.sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn tan_rule_integrates_heavy_tail_density() {
        // mass of sqrt(2)/(pi (1+x^4)) over the line is 1
        let m = integrate_tan(96, 1.0, |x| {
            std::f64::consts::SQRT_2 / (std::f64::consts::PI * (1.0 + x.powi(4)))
        })
        .unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let xs = [0.0, 0.5, 1.0, 2.0];
        let ys = [0.0, 1.0, 2.0, 4.0];
        assert_abs_diff_eq!(trapezoid(&xs, &ys), 4.0, epsilon = 1e-15);
    }
}
