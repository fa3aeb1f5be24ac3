//! The separated-variables series machinery: sine transforms, the truncated
//! propagator T_N, and truncated solution evaluation.

use crate::error::{Error, Result};
use crate::models::{BasisKind, MeanFn, ProcessSpec};
use crate::quad;

/// Hard cap on series length; beyond this every term is below double noise
/// for t >= 1e-4 and alpha^2 >= 0.1.
pub const SERIES_CAP: usize = 128;

const PI: f64 = std::f64::consts::PI;

/// sin(pi*y) with exact zeros at integer y and exact +-1 at half-integers.
///
/// The argument is reduced modulo 2 and folded into [0, 1/2] before calling
/// the libm sine, so sin(n*pi*x) vanishes exactly whenever n*x is an integer
/// representable in f64 (e.g. even n at x = 0.5).
pub fn sin_pi(y: f64) -> f64 {
    let r = y.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    let (arg, sign) = if r < 0.5 {
        (r, 1.0)
    } else if r <= 1.0 {
        (1.0 - r, 1.0)
    } else if r < 1.5 {
        (r - 1.0, -1.0)
    } else {
        (2.0 - r, -1.0)
    };
    sign * (PI * arg).sin()
}

/// A space-time evaluation point in the open domain 0 < x < 1, t > 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EvalPoint {
    x: f64,
    t: f64,
}

impl EvalPoint {
    pub fn new(x: f64, t: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) || !x.is_finite() {
            return Err(Error::Domain(format!(
                "x must lie strictly inside (0,1), got {x}"
            )));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("t must be strictly positive, got {t}")));
        }
        Ok(Self { x, t })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Sine coefficients f_hat(n) = int_0^1 f(y) sin(n pi y) dy for n = 1..=N.
#[derive(Debug, Clone)]
pub struct SineCoeffs {
    values: Vec<f64>,
}

impl SineCoeffs {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Tabulate the first `n_max` sine coefficients of `f` by quadrature.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, n_max: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            values.push(sine_hat(&f, n, sine_order(n))?);
        }
        Ok(Self { values })
    }

    /// 1-indexed accessor.
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Quadrature order for the n-th sine coefficient: at least 4 points per
/// half-wave of the oscillating factor.
pub fn sine_order(n: usize) -> usize {
    (4 * n).max(32)
}

/// f_hat(n) = int_0^1 f(y) sin(n pi y) dy via Gauss-Legendre.
pub fn sine_hat<F: Fn(f64) -> f64>(f: F, n: usize, quad_order: usize) -> Result<f64> {
    assert!(n >= 1, "sine index starts at 1");
    let nf = n as f64;
    quad::integrate_legendre(quad_order, 0.0, 1.0, |y| f(y) * sin_pi(nf * y))
}

/// T_N(f)(x,t,alpha2) = sum_{n=1}^{N} f_hat(n) e^{-n^2 pi^2 alpha2 t} sin(n pi x),
/// summed in ascending n.
pub fn t_n_operator(coeffs: &SineCoeffs, point: &EvalPoint, alpha2: f64, n_terms: usize) -> f64 {
    assert!(alpha2 > 0.0, "alpha2 must be positive");
    assert!(
        coeffs.len() >= n_terms,
        "need at least {n_terms} sine coefficients, have {}",
        coeffs.len()
    );
    let (x, t) = (point.x(), point.t());
    let mut acc = 0.0;
    for n in 1..=n_terms {
        let nf = n as f64;
        acc += coeffs.get(n) * (-nf * nf * PI * PI * alpha2 * t).exp() * sin_pi(nf * x);
    }
    acc
}

/// u_N(x,t) = sum_n a_n e^{-n^2 pi^2 alpha2 t} sin(n pi x) for given coefficients.
pub fn truncated_solution(coeffs: &[f64], alpha2: f64, point: &EvalPoint) -> f64 {
    assert!(alpha2 > 0.0, "alpha2 must be positive");
    let (x, t) = (point.x(), point.t());
    let mut acc = 0.0;
    for (i, &a) in coeffs.iter().enumerate() {
        let nf = (i + 1) as f64;
        acc += a * (-nf * nf * PI * PI * alpha2 * t).exp() * sin_pi(nf * x);
    }
    acc
}

/// The doubly-truncated solution u_{N,M}(x,t) with the initial condition's
/// expansion cut at M-1 terms (M-1 = xi.len()) and the series cut at N.
///
/// For sine-basis processes the expansion basis coincides with the solution
/// basis, so the evaluation reduces to `truncated_solution` with coefficients
/// a_n = sqrt(2) sqrt(nu_n) xi_n; that path is taken term-for-term so the two
/// evaluations agree bitwise.
pub fn truncated_solution_kl(
    process: &ProcessSpec,
    xi: &[f64],
    alpha2: f64,
    point: &EvalPoint,
    n_terms: usize,
) -> Result<f64> {
    assert!(!xi.is_empty(), "need at least one expansion variable");
    let m_minus_1 = xi.len();
    let mean_part = match process.mean() {
        MeanFn::Zero => 0.0,
        MeanFn::Custom(f) => {
            let coeffs = SineCoeffs::from_fn(|y| f(y), n_terms)?;
            2.0 * t_n_operator(&coeffs, point, alpha2, n_terms)
        }
    };
    match process.basis() {
        BasisKind::Sine => {
            let k = m_minus_1.min(n_terms);
            let mut a = Vec::with_capacity(k);
            for m in 1..=k {
                a.push(std::f64::consts::SQRT_2 * process.nu(m).sqrt() * xi[m - 1]);
            }
            Ok(mean_part + truncated_solution(&a, alpha2, point))
        }
        BasisKind::ShiftedSine => {
            let mut acc = mean_part;
            for m in 1..=m_minus_1 {
                let phi = process.eigenpair(m)?;
                let coeffs = SineCoeffs::from_fn(|y| phi.phi.eval(y), n_terms)?;
                let tn = t_n_operator(&coeffs, point, alpha2, n_terms);
                acc += 2.0 * tn * phi.nu.sqrt() * xi[m - 1];
            }
            Ok(acc)
        }
    }
}

/// Deterministic solution with A_n = 2 f_hat(n); terms are added until the
/// next term's bound 2*||phi||_L1*exp(-n^2 pi^2 alpha2 t) drops below 1e-14
/// or the cap is hit.
pub fn deterministic_solution<F: Fn(f64) -> f64>(
    phi: F,
    alpha2: f64,
    point: &EvalPoint,
    n_cap: usize,
) -> Result<f64> {
    assert!(alpha2 > 0.0, "alpha2 must be positive");
    let cap = n_cap.min(SERIES_CAP).max(1);
    let l1 = quad::integrate_legendre(256, 0.0, 1.0, |y| phi(y).abs())?;
    let (x, t) = (point.x(), point.t());
    let mut acc = 0.0;
    for n in 1..=cap {
        let nf = n as f64;
        let a_n = 2.0 * sine_hat(&phi, n, sine_order(n))?;
        acc += a_n * (-nf * nf * PI * PI * alpha2 * t).exp() * sin_pi(nf * x);
        let next = (n + 1) as f64;
        if 2.0 * l1 * (-next * next * PI * PI * alpha2 * t).exp() < 1e-14 {
            break;
        }
    }
    Ok(acc)
}
