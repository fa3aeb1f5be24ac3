//! Convergence metrics, closed-form moments for the bridge model, and the
//! theorem-hypothesis checker.

use serde::Serialize;

use crate::density::{
    auto_grid, density_grid, diffusion_exp_moment, DensityGrid, GridSpec, Method, ModelBundle,
    QuadConfig,
};
use crate::error::{Error, Result};
use crate::law::{ScalarDensity, Support};
use crate::models::{BasisKind, DiffusionSpec};
use crate::quad;
use crate::series::{sin_pi, EvalPoint, SineCoeffs};

const PI: f64 = std::f64::consts::PI;

/// Fritsch-Carlson monotone cubic interpolation of tabulated values.
fn pchip_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let h = xs[i + 1] - xs[i];
    let s = (ys[i + 1] - ys[i]) / h;
    // one-sided/weighted-harmonic slopes
    let slope = |k: usize| -> f64 {
        if k == 0 {
            (ys[1] - ys[0]) / (xs[1] - xs[0])
        } else if k == n - 1 {
            (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])
        } else {
            let h0 = xs[k] - xs[k - 1];
            let h1 = xs[k + 1] - xs[k];
            let d0 = (ys[k] - ys[k - 1]) / h0;
            let d1 = (ys[k + 1] - ys[k]) / h1;
            if d0 * d1 <= 0.0 {
                0.0
            } else {
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                (w0 + w1) / (w0 / d0 + w1 / d1)
            }
        }
    };
    let mut m0 = slope(i);
    let mut m1 = slope(i + 1);
    // clamp to preserve monotonicity on the panel
    if s == 0.0 {
        m0 = 0.0;
        m1 = 0.0;
    } else {
        let (a, b) = (m0 / s, m1 / s);
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m0 = tau * a * s;
            m1 = tau * b * s;
        }
    }
    let th = (x - xs[i]) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    h00 * ys[i] + h10 * h * m0 + h01 * ys[i + 1] + h11 * h * m1
}

/// Trapezoid integral of |f1 - f2|; grids on different abscissae are
/// resampled by monotone cubic interpolation, and the flag reports it.
pub fn l1_distance_detailed(g1: &DensityGrid, g2: &DensityGrid) -> (f64, bool) {
    if g1.u == g2.u {
        let d: Vec<f64> = g1
            .f
            .iter()
            .zip(&g2.f)
            .map(|(a, b)| (a - b).abs())
            .collect();
        return (quad::trapezoid(&g1.u, &d), false);
    }
    let resampled: Vec<f64> = g1
        .u
        .iter()
        .map(|&x| pchip_eval(&g2.u, &g2.f, x).max(0.0))
        .collect();
    let d: Vec<f64> = g1
        .f
        .iter()
        .zip(&resampled)
        .map(|(a, b)| (a - b).abs())
        .collect();
    (quad::trapezoid(&g1.u, &d), true)
}

/// L1 distance between two tabulated densities.
pub fn l1_distance(g1: &DensityGrid, g2: &DensityGrid) -> f64 {
    l1_distance_detailed(g1, g2).0
}

/// Trapezoid (mass, mean, variance) of a tabulated density; mean and
/// variance are normalized by the mass.
pub fn density_moments(g: &DensityGrid) -> (f64, f64, f64) {
    let mass = quad::trapezoid(&g.u, &g.f);
    let m1: Vec<f64> = g.u.iter().zip(&g.f).map(|(u, f)| u * f).collect();
    let mean = quad::trapezoid(&g.u, &m1) / mass;
    let m2: Vec<f64> = g
        .u
        .iter()
        .zip(&g.f)
        .map(|(u, f)| (u - mean) * (u - mean) * f)
        .collect();
    let var = quad::trapezoid(&g.u, &m2) / mass;
    (mass, mean, var)
}

/// Exact moments of the truncated bridge solution: mean 0 and
/// variance sum_n (2/(n^2 pi^2)) sin^2(n pi x) E[exp(-2 n^2 pi^2 alpha^2 t)],
/// with the closed-form expectation for uniform diffusion and quadrature
/// otherwise.
pub fn exact_bb_moments(
    point: &EvalPoint,
    n_order: usize,
    diffusion: &DiffusionSpec,
) -> Result<(f64, f64)> {
    let (x, t) = (point.x(), point.t());
    let mut var = 0.0;
    for n in 1..=n_order {
        let nf = n as f64;
        let s = sin_pi(nf * x);
        if s == 0.0 {
            continue;
        }
        let e = diffusion_exp_moment(diffusion, 2.0 * nf * nf * PI * PI * t)?;
        var += 2.0 / (nf * nf * PI * PI) * s * s * e;
    }
    Ok((0.0, var))
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LipschitzEstimate {
    Bounded { sup_grad: f64 },
    Unbounded { last_estimate: f64 },
}

impl LipschitzEstimate {
    pub fn is_bounded(&self) -> bool {
        matches!(self, LipschitzEstimate::Bounded { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaInv11 {
    Value { value: f64 },
    Singular { reason: String },
    NotApplicable { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub reason: String,
}

/// Numeric checks of the three convergence-theorem hypothesis sets.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub lipschitz_estimate: LipschitzEstimate,
    pub tail_sum_estimate: f64,
    pub tn_phi1_lower_bound: f64,
    pub sigma_inv_11: SigmaInv11,
    pub teor1: Verdict,
    pub teor2: Verdict,
    pub teor3: Verdict,
}

/// Numeric sup|f'| by central differences. At a jump discontinuity the
/// quotient scales like 1/h, i.e. by the full mesh factor 10 per refinement;
/// growth beyond 8x across two successive refinements flags the density as
/// not Lipschitz.
fn lipschitz_probe(law: &ScalarDensity) -> LipschitzEstimate {
    let (lo, hi) = match law.support() {
        Support::Compact { lo, hi } => {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
        _ => {
            let (mean, var) = law.moments_hint().unwrap_or((0.0, 1.0));
            let sd = var.sqrt().max(1e-6);
            (mean - 8.0 * sd, mean + 8.0 * sd)
        }
    };
    let sup_grad = |h: f64| -> f64 {
        let steps = ((hi - lo) / h).ceil() as usize;
        let mut sup: f64 = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let d = (law.evaluate(x + h) - law.evaluate(x - h)).abs() / (2.0 * h);
            sup = sup.max(d);
        }
        sup
    };
    let base = (hi - lo) / 2000.0;
    let e0 = sup_grad(base);
    let e1 = sup_grad(base / 10.0);
    let e2 = sup_grad(base / 100.0);
    if e1 > 8.0 * e0.max(1e-300) && e2 > 8.0 * e1 {
        LipschitzEstimate::Unbounded { last_estimate: e2 }
    } else {
        LipschitzEstimate::Bounded { sup_grad: e2 }
    }
}

/// T_N(phi_1) evaluated at the alpha quadrature nodes plus the support
/// endpoints; returns the minimum absolute value.
fn tn_phi1_min(bundle: &ModelBundle, point: &EvalPoint, n_order: usize) -> Result<f64> {
    let mut alphas: Vec<f64> = vec![bundle.diffusion.lo(), bundle.diffusion.hi()];
    let rule = quad::gauss_legendre(64)?;
    let (lo, hi) = (bundle.diffusion.lo(), bundle.diffusion.hi());
    alphas.extend(
        rule.nodes
            .iter()
            .map(|&z| 0.5 * (lo + hi) + 0.5 * (hi - lo) * z),
    );
    let eval = |alpha: f64| -> Result<f64> {
        match bundle.process.basis() {
            BasisKind::Sine => Ok(0.5
                * std::f64::consts::SQRT_2
                * (-PI * PI * alpha * point.t()).exp()
                * sin_pi(point.x())),
            BasisKind::ShiftedSine => {
                let pair = bundle.process.eigenpair(1)?;
                let coeffs = SineCoeffs::from_fn(|y| pair.phi.eval(y), n_order)?;
                Ok(crate::series::t_n_operator(&coeffs, point, alpha, n_order))
            }
        }
    };
    let mut min = f64::INFINITY;
    for a in alphas {
        min = min.min(eval(a)?.abs());
    }
    Ok(min)
}

/// Sum over n >= 2 of E[exp(-(n^2-2) pi^2 alpha^2 t)], truncated at underflow
/// with a geometric tail bound added.
fn tail_sum(diffusion: &DiffusionSpec, t: f64) -> Result<f64> {
    let mut acc = 0.0;
    let mut last;
    let mut n = 2usize;
    loop {
        let nf = n as f64;
        let c = (nf * nf - 2.0) * PI * PI * t;
        let term = diffusion_exp_moment(diffusion, c)?;
        acc += term;
        last = term;
        n += 1;
        if term < 1e-300 || n > 10_000 {
            break;
        }
    }
    // geometric remainder bound: successive ratios are below
    // exp(-(2n+1) pi^2 lo t) < 1
    let r = (-(2.0 * n as f64 + 1.0) * PI * PI * diffusion.lo() * t).exp();
    if r < 1.0 {
        acc += last * r / (1.0 - r);
    }
    Ok(acc)
}

/// Hypothesis checks for the three theorem hypothesis sets; reports, never
/// fails. Verdicts apply to the checked order only.
pub fn hypothesis_report(
    bundle: &ModelBundle,
    point: &EvalPoint,
    n_order: usize,
) -> HypothesisReport {
    // pivot law of the coefficient route: the law of A_1
    let pivot = if bundle.process.coefficients_independent() {
        bundle
            .process
            .xi_law()
            .scaled(std::f64::consts::SQRT_2 * bundle.process.nu(1).sqrt())
            .unwrap_or_else(|_| bundle.process.xi_law().clone())
    } else {
        ScalarDensity::standard_normal()
    };
    let lipschitz = lipschitz_probe(&pivot);
    let tail = tail_sum(&bundle.diffusion, point.t()).unwrap_or(f64::INFINITY);
    let tn_min = tn_phi1_min(bundle, point, n_order).unwrap_or(0.0);
    let alpha_abs_cont = !bundle.diffusion.is_point_mass();

    let sigma = if bundle.process.is_gaussian() {
        match crate::models::build_joint_coeff_model(&bundle.process, n_order)
            .and_then(|m| match m {
                crate::models::CoeffModel::JointGaussian { sigma, .. } => {
                    crate::models::sigma_inv_11(&sigma)
                }
                _ => Err(Error::InvalidModel("expected joint model".into())),
            }) {
            Ok(v) => SigmaInv11::Value { value: v },
            Err(e) => SigmaInv11::Singular {
                reason: e.to_string(),
            },
        }
    } else {
        SigmaInv11::NotApplicable {
            reason: "coefficient vector is not jointly Gaussian".into(),
        }
    };

    let mut teor1_reasons = Vec::new();
    if !bundle.process.is_gaussian() {
        teor1_reasons.push("initial condition is not a Gaussian process".to_string());
    }
    if !alpha_abs_cont {
        teor1_reasons.push("diffusion coefficient is not absolutely continuous".to_string());
    }
    match &sigma {
        SigmaInv11::Value { value } => {
            if !value.is_finite() {
                teor1_reasons.push("(Sigma_N^-1)_11 is not finite".to_string());
            }
        }
        SigmaInv11::Singular { reason } => {
            teor1_reasons.push(format!("singular Sigma_N: {reason}"));
        }
        SigmaInv11::NotApplicable { reason } => teor1_reasons.push(reason.clone()),
    }
    if !tail.is_finite() {
        teor1_reasons.push("exponential tail sum diverges".to_string());
    }
    let teor1 = Verdict {
        holds: teor1_reasons.is_empty(),
        reason: if teor1_reasons.is_empty() {
            format!("joint-Gaussian coefficients with bounded (Sigma_N^-1)_11 at N={n_order}")
        } else {
            teor1_reasons.join("; ")
        },
    };

    let mut teor2_reasons = Vec::new();
    if !bundle.process.coefficients_independent() {
        teor2_reasons.push("coefficients A_1, A_2, ... are not independent".to_string());
    }
    if !alpha_abs_cont {
        teor2_reasons.push("diffusion coefficient is not absolutely continuous".to_string());
    }
    if !lipschitz.is_bounded() {
        teor2_reasons.push("f_A1 is not Lipschitz (numeric gradient diverges)".to_string());
    }
    if !tail.is_finite() {
        teor2_reasons.push("exponential tail sum diverges".to_string());
    }
    let teor2 = Verdict {
        holds: teor2_reasons.is_empty(),
        reason: if teor2_reasons.is_empty() {
            "independent coefficients with Lipschitz pivot density".to_string()
        } else {
            teor2_reasons.join("; ")
        },
    };

    let mut teor3_reasons = Vec::new();
    if !alpha_abs_cont {
        teor3_reasons.push("diffusion coefficient is not absolutely continuous".to_string());
    }
    if !lipschitz.is_bounded() {
        teor3_reasons.push("f_xi1 is not Lipschitz (numeric gradient diverges)".to_string());
    }
    if !(tn_min > 0.0) {
        teor3_reasons
            .push("|T_N(phi_1)| is not bounded away from zero on the support".to_string());
    }
    if !tail.is_finite() {
        teor3_reasons.push("exponential tail sum diverges".to_string());
    }
    let teor3 = Verdict {
        holds: teor3_reasons.is_empty(),
        reason: if teor3_reasons.is_empty() {
            format!("expansion hypotheses hold at the checked order N={n_order}")
        } else {
            teor3_reasons.join("; ")
        },
    };

    HypothesisReport {
        lipschitz_estimate: lipschitz,
        tail_sum_estimate: tail,
        tn_phi1_lower_bound: tn_min,
        sigma_inv_11: sigma,
        teor1,
        teor2,
        teor3,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePair {
    pub n_from: usize,
    pub n_to: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceVerdict {
    Converging,
    Stalled,
    Diverging,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceContext {
    pub x: f64,
    pub t: f64,
    pub method: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub pairs: Vec<ConvergencePair>,
    pub verdict: ConvergenceVerdict,
    pub context: ConvergenceContext,
}

/// Verdict rule: diverging when distances are non-decreasing and the last one
/// is at least 0.1; converging when the last distance is small and no larger
/// than the first; stalled otherwise.
pub fn classify_distances(distances: &[f64]) -> ConvergenceVerdict {
    assert!(!distances.is_empty());
    let non_decreasing = distances.windows(2).all(|w| w[1] >= w[0]);
    let last = *distances.last().unwrap();
    let first = distances[0];
    if non_decreasing && last >= 0.1 {
        ConvergenceVerdict::Diverging
    } else if last < 0.1 && last <= first {
        ConvergenceVerdict::Converging
    } else {
        ConvergenceVerdict::Stalled
    }
}

/// Compute density grids for each order on a shared abscissa set and report
/// the successive L1 distances.
pub fn convergence_report(
    point: &EvalPoint,
    n_list: &[usize],
    method: Method,
    bundle: &ModelBundle,
    q: &QuadConfig,
) -> Result<ConvergenceReport> {
    if n_list.len() < 2 {
        return Err(Error::InvalidModel(
            "convergence assessment needs at least two orders".into(),
        ));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidModel(
            "orders must be strictly increasing".into(),
        ));
    }
    let n_max = *n_list.last().unwrap();
    let (lo, hi, count) = auto_grid(bundle, point, n_max, method)?;
    let spec = GridSpec::Explicit { lo, hi, count };
    let mut grids = Vec::with_capacity(n_list.len());
    for &n in n_list {
        grids.push(density_grid(point, n, method, bundle, q, spec)?);
    }
    let mut pairs = Vec::new();
    for i in 1..grids.len() {
        pairs.push(ConvergencePair {
            n_from: n_list[i - 1],
            n_to: n_list[i],
            l1: l1_distance(&grids[i - 1], &grids[i]),
        });
    }
    let distances: Vec<f64> = pairs.iter().map(|p| p.l1).collect();
    Ok(ConvergenceReport {
        pairs,
        verdict: classify_distances(&distances),
        context: ConvergenceContext {
            x: point.x(),
            t: point.t(),
            method: method.as_str().into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GridMeta;
    use crate::models::{make_brownian_bridge_process, make_general_sine_process, NuSeq};
    use approx::assert_abs_diff_eq;

    fn grid_from(us: Vec<f64>, f: Vec<f64>) -> DensityGrid {
        let mass = quad::trapezoid(&us, &f);
        DensityGrid {
            u: us,
            f,
            meta: GridMeta {
                x: 0.5,
                t: 0.1,
                n_order: 1,
                method: "test".into(),
                quad: QuadConfig::default(),
                model_digest: "test".into(),
                mass,
                refine_level: 0,
                refine_converged: true,
                refine_history: Vec::new(),
                pivot_lipschitz: None,
            },
        }
    }

    #[test]
    fn l1_identity_is_zero() {
        let us: Vec<f64> = (0..101).map(|i| -1.0 + 0.02 * i as f64).collect();
        let f: Vec<f64> = us.iter().map(|&u| (-u * u).exp()).collect();
        let g = grid_from(us, f);
        assert_eq!(l1_distance(&g, &g), 0.0);
    }

    #[test]
    fn l1_resample_flags_and_approximates() {
        let us1: Vec<f64> = (0..201).map(|i| -2.0 + 0.02 * i as f64).collect();
        let us2: Vec<f64> = (0..161).map(|i| -2.0 + 0.025 * i as f64).collect();
        let f1: Vec<f64> = us1.iter().map(|&u| (-u * u).exp()).collect();
        let f2: Vec<f64> = us2.iter().map(|&u| (-u * u).exp()).collect();
        let g1 = grid_from(us1, f1);
        let g2 = grid_from(us2, f2);
        let (d, resampled) = l1_distance_detailed(&g1, &g2);
        assert!(resampled);
        assert!(d < 1e-5, "resampling error {d}");
    }

    #[test]
    fn moments_of_tabulated_standard_normal() {
        let us: Vec<f64> = (0..801).map(|i| -8.0 + 0.02 * i as f64).collect();
        let f: Vec<f64> = us
            .iter()
            .map(|&u| (-0.5 * u * u).exp() / (2.0 * PI).sqrt())
            .collect();
        let g = grid_from(us, f);
        let (mass, mean, var) = density_moments(&g);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn exact_bb_moments_degenerate_diffusion() {
        // lo = hi = 1, single mode: (2/pi^2) e^{-2 pi^2 t}
        let pm = DiffusionSpec::uniform(1.0, 1.0).unwrap();
        for &t in &[0.05, 0.1, 0.4] {
            let p = EvalPoint::new(0.5, t).unwrap();
            let (_, var) = exact_bb_moments(&p, 1, &pm).unwrap();
            let expect = 2.0 / (PI * PI) * (-2.0 * PI * PI * t).exp();
            assert_abs_diff_eq!(var, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn exact_bb_moments_even_mode_drops_at_midpoint() {
        let d = DiffusionSpec::uniform(1.0, 2.0).unwrap();
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let (_, v1) = exact_bb_moments(&p, 1, &d).unwrap();
        let (_, v2) = exact_bb_moments(&p, 2, &d).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn exact_bb_moments_monotone_in_t_and_lo() {
        let p = |t| EvalPoint::new(0.3, t).unwrap();
        let d = DiffusionSpec::uniform(1.0, 2.0).unwrap();
        let mut prev = f64::INFINITY;
        for &t in &[0.1, 0.2, 0.3, 0.4, 0.5] {
            let (_, v) = exact_bb_moments(&p(t), 3, &d).unwrap();
            assert!(v < prev);
            prev = v;
        }
        // raising lo kills variance faster
        let mut prev = f64::INFINITY;
        for &lo in &[0.5, 1.0, 1.5] {
            let d = DiffusionSpec::uniform(lo, lo + 1.0).unwrap();
            let (_, v) = exact_bb_moments(&p(0.2), 3, &d).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn tail_sum_matches_uniform_closed_form() {
        let d = DiffusionSpec::uniform(1.0, 2.0).unwrap();
        let t = 0.1;
        let got = tail_sum(&d, t).unwrap();
        let mut expect = 0.0;
        for n in 2..200usize {
            let c = ((n * n) as f64 - 2.0) * PI * PI * t;
            expect += ((-c).exp() - (-2.0 * c).exp()) / c;
        }
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
    }

    #[test]
    fn hypothesis_report_bridge_all_hold() {
        let bundle = ModelBundle::new(
            make_brownian_bridge_process(),
            DiffusionSpec::uniform(1.0, 2.0).unwrap(),
        );
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let r = hypothesis_report(&bundle, &p, 3);
        assert!(r.teor1.holds, "{}", r.teor1.reason);
        assert!(r.teor2.holds, "{}", r.teor2.reason);
        assert!(r.teor3.holds, "{}", r.teor3.reason);
        // lower bound equals the closed form (sqrt2/2) e^{-pi^2 hi t} sin(pi x)
        let expect = 0.5 * std::f64::consts::SQRT_2 * (-PI * PI * 2.0 * 0.1).exp() * sin_pi(0.5);
        assert_abs_diff_eq!(r.tn_phi1_lower_bound, expect, epsilon = 1e-12);
        match r.sigma_inv_11 {
            SigmaInv11::Value { value } => assert_abs_diff_eq!(value, PI * PI / 2.0, epsilon = 1e-8),
            _ => panic!("bridge Sigma_N is diagonal and invertible"),
        }
    }

    #[test]
    fn hypothesis_report_uniform_xi_fails_lipschitz() {
        let process = make_general_sine_process(NuSeq::CubicLog, ScalarDensity::uniform_unit())
            .unwrap();
        let bundle = ModelBundle::new(process, DiffusionSpec::uniform(1.0, 2.0).unwrap());
        let p = EvalPoint::new(0.5, 0.3).unwrap();
        let r = hypothesis_report(&bundle, &p, 3);
        assert!(!r.teor2.holds);
        assert!(r.teor2.reason.contains("Lipschitz"), "{}", r.teor2.reason);
        assert!(!r.teor3.holds);
        assert!(!r.lipschitz_estimate.is_bounded());
    }

    #[test]
    fn verdict_classification_rules() {
        assert_eq!(
            classify_distances(&[1e-8, 1e-9]),
            ConvergenceVerdict::Converging
        );
        assert_eq!(
            classify_distances(&[0.19156, 1.86146]),
            ConvergenceVerdict::Diverging
        );
        assert_eq!(classify_distances(&[0.5]), ConvergenceVerdict::Diverging);
        assert_eq!(classify_distances(&[1e-4]), ConvergenceVerdict::Converging);
        // big drop then big value: neither rule applies cleanly
        assert_eq!(
            classify_distances(&[5.0, 0.4]),
            ConvergenceVerdict::Stalled
        );
    }

    #[test]
    fn convergence_report_validates_order_list() {
        let bundle = ModelBundle::new(
            make_brownian_bridge_process(),
            DiffusionSpec::uniform(1.0, 2.0).unwrap(),
        );
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        assert!(convergence_report(&p, &[3], Method::BbFast, &bundle, &q).is_err());
        assert!(convergence_report(&p, &[3, 3], Method::BbFast, &bundle, &q).is_err());
    }
}
