//! Deterministic quadrature of the transformed-density integrals that
//! tabulate f_{u_N(x,t)} (coefficient route) and f_{u_{N,N}(x,t)} (expansion
//! route), plus a seeded Monte Carlo fallback integrator.
//!
//! Every route reduces to the same shape: an outer rule over alpha^2 and a
//! tensor of inner rules over the remaining coordinates, with the pivot
//! density evaluated at an affine function of u. All node-dependent
//! quantities are precomputed once per grid and reused for every u.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{LawKind, ScalarDensity, Support, TailClass};
use crate::mc::stream_rng;
use crate::models::{
    build_coeff_model, build_joint_coeff_model, BasisKind, CoeffModel, DiffusionSpec, MeanFn,
    ProcessSpec,
};
use crate::quad;
use crate::series::{sin_pi, EvalPoint, SineCoeffs};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const PI: f64 = std::f64::consts::PI;

/// Orders are doubled at most this many times by the refinement loop.
pub const MAX_DOUBLINGS: u32 = 6;
/// Upper bound on alpha-nodes x inner-combinations per grid evaluation.
const NODE_BUDGET: usize = 40_000_000;

fn default_hermite() -> usize {
    20
}
fn default_legendre() -> usize {
    64
}
fn default_heavy() -> usize {
    96
}
fn default_mc_samples() -> usize {
    100_000
}
fn default_refine() -> bool {
    true
}
fn default_refine_tol() -> f64 {
    1e-9
}

/// Quadrature configuration for the density routes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    /// Gauss-Hermite order per Gaussian coordinate.
    #[serde(default = "default_hermite")]
    pub hermite_order: usize,
    /// Gauss-Legendre order for alpha^2 and compactly supported laws.
    #[serde(default = "default_legendre")]
    pub legendre_order: usize,
    /// Order of the tangent-substituted rule for heavy-tailed laws.
    #[serde(default = "default_heavy")]
    pub heavy_tail_order: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub mc_seed: u64,
    /// Double all orders until the grid changes by less than `refine_tol`
    /// (relative to the grid mass) in L1.
    #[serde(default = "default_refine")]
    pub refine: bool,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            hermite_order: default_hermite(),
            legendre_order: default_legendre(),
            heavy_tail_order: default_heavy(),
            mc_samples: default_mc_samples(),
            mc_seed: 0,
            refine: default_refine(),
            refine_tol: default_refine_tol(),
        }
    }
}

impl QuadConfig {
    fn validate(&self) -> Result<()> {
        if self.hermite_order < 2 || self.legendre_order < 2 || self.heavy_tail_order < 2 {
            return Err(Error::InvalidModel(
                "all quadrature orders must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Density route selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FourierIndep,
    FourierJoint,
    BbFast,
    Kl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FourierIndep => "fourier_indep",
            Method::FourierJoint => "fourier_joint",
            Method::BbFast => "bb_fast",
            Method::Kl => "kl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier_indep" => Ok(Method::FourierIndep),
            "fourier_joint" => Ok(Method::FourierJoint),
            "bb_fast" => Ok(Method::BbFast),
            "kl" => Ok(Method::Kl),
            other => Err(Error::InvalidModel(format!("unknown method '{other}'"))),
        }
    }
}

/// Initial-condition process paired with the diffusion law; `descriptor` is
/// the canonical configuration JSON when the bundle came from a config.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub process: ProcessSpec,
    pub diffusion: DiffusionSpec,
    pub descriptor: Option<String>,
}

impl ModelBundle {
    pub fn new(process: ProcessSpec, diffusion: DiffusionSpec) -> Self {
        Self {
            process,
            diffusion,
            descriptor: None,
        }
    }

    pub fn digest(&self) -> String {
        match &self.descriptor {
            Some(d) => {
                use sha2::{Digest, Sha256};
                let mut h = Sha256::new();
                h.update(d.as_bytes());
                let out = h.finalize();
                out.iter().take(8).map(|b| format!("{b:02x}")).collect()
            }
            None => "adhoc".into(),
        }
    }
}

/// Grid request for `density_grid`.
#[derive(Debug, Clone, Copy)]
pub enum GridSpec {
    /// [-6 sigma_hat, 6 sigma_hat] with 401 points, widened if tail mass is
    /// missing after refinement.
    Auto,
    Explicit { lo: f64, hi: f64, count: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMeta {
    pub x: f64,
    pub t: f64,
    pub n_order: usize,
    pub method: String,
    pub quad: QuadConfig,
    pub model_digest: String,
    pub mass: f64,
    pub refine_level: u32,
    pub refine_converged: bool,
    pub refine_history: Vec<f64>,
    pub pivot_lipschitz: Option<bool>,
}

/// Tabulated density with sorted abscissae.
#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub meta: GridMeta,
}

impl DensityGrid {
    pub fn mass(&self) -> f64 {
        quad::trapezoid(&self.u, &self.f)
    }
}

#[derive(Clone)]
enum PivotKind {
    Normal { mean: f64, inv_sd: f64, norm: f64 },
    Uniform { lo: f64, hi: f64, height: f64 },
    Quartic { inv_scale: f64, norm: f64 },
    General(ScalarDensity),
}

impl PivotKind {
    fn from_law(law: &ScalarDensity) -> Self {
        match law.kind() {
            LawKind::Normal { mean, sd } => PivotKind::Normal {
                mean: *mean,
                inv_sd: 1.0 / sd,
                norm: 1.0 / (sd * (2.0 * PI).sqrt()),
            },
            LawKind::Uniform { lo, hi } => PivotKind::Uniform {
                lo: *lo,
                hi: *hi,
                height: 1.0 / (hi - lo),
            },
            LawKind::QuarticTail { scale } => PivotKind::Quartic {
                inv_scale: 1.0 / scale,
                norm: std::f64::consts::SQRT_2 / (PI * scale),
            },
            _ => PivotKind::General(law.clone()),
        }
    }

    #[inline(always)]
    fn eval(&self, y: f64) -> f64 {
        match self {
            PivotKind::Normal { mean, inv_sd, norm } => {
                let z = (y - mean) * inv_sd;
                norm * (-0.5 * z * z).exp()
            }
            PivotKind::Uniform { lo, hi, height } => {
                if y >= *lo && y <= *hi {
                    *height
                } else {
                    0.0
                }
            }
            PivotKind::Quartic { inv_scale, norm } => {
                let z = y * inv_scale;
                let z2 = z * z;
                norm / (1.0 + z2 * z2)
            }
            PivotKind::General(law) => law.evaluate(y),
        }
    }
}

struct DimRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
}

/// Per-coordinate rule such that sum_k w_k g(x_k) ~ int g(a) f(a) da.
fn dim_rule(law: &ScalarDensity, q: &QuadConfig, level: u32) -> Result<DimRule> {
    let scale_order = |o: usize| o << level;
    let (nodes, weights) = match law.tail_class() {
        TailClass::Gaussian => {
            let order = scale_order(q.hermite_order);
            let rule = quad::gauss_hermite(order)?;
            match law.kind() {
                LawKind::Normal { mean, sd } => {
                    let inv_sqrt_pi = 1.0 / PI.sqrt();
                    let nodes: Vec<f64> = rule
                        .nodes
                        .iter()
                        .map(|&z| mean + std::f64::consts::SQRT_2 * sd * z)
                        .collect();
                    let weights: Vec<f64> =
                        rule.weights.iter().map(|&w| w * inv_sqrt_pi).collect();
                    (nodes, weights)
                }
                _ => {
                    // non-normal Gaussian-tailed law: reweight against the
                    // Hermite weight, skipping nodes whose weight underflowed
                    let (mean, var) = law.moments_hint().ok_or_else(|| {
                        Error::InvalidModel(
                            "Gaussian-tail law without moment hints cannot be standardized"
                                .into(),
                        )
                    })?;
                    let sd = var.sqrt();
                    let mut nodes = Vec::new();
                    let mut weights = Vec::new();
                    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                        if w <= 0.0 {
                            continue;
                        }
                        let a = mean + std::f64::consts::SQRT_2 * sd * z;
                        let fold = (w.ln() + z * z).exp() * std::f64::consts::SQRT_2 * sd;
                        nodes.push(a);
                        weights.push(fold * law.evaluate(a));
                    }
                    (nodes, weights)
                }
            }
        }
        TailClass::Compact => {
            let Support::Compact { lo, hi } = law.support() else {
                return Err(Error::InvalidModel(
                    "compact tail class requires a compact support".into(),
                ));
            };
            let order = scale_order(q.legendre_order);
            let rule = quad::gauss_legendre(order)?;
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let nodes: Vec<f64> = rule.nodes.iter().map(|&x| mid + half * x).collect();
            let weights: Vec<f64> = rule
                .weights
                .iter()
                .zip(&nodes)
                .map(|(&w, &a)| w * half * law.evaluate(a))
                .collect();
            (nodes, weights)
        }
        TailClass::Heavy => {
            let order = scale_order(q.heavy_tail_order);
            let rule = quad::gauss_legendre(order)?;
            let c = law
                .moments_hint()
                .map(|(_, v)| v.sqrt())
                .filter(|s| s.is_finite() && *s > 0.0)
                .unwrap_or(1.0);
            let half = std::f64::consts::FRAC_PI_2;
            let mut nodes = Vec::with_capacity(order);
            let mut weights = Vec::with_capacity(order);
            for (&th, &w) in rule.nodes.iter().zip(&rule.weights) {
                let theta = half * th;
                let (s, co) = theta.sin_cos();
                let a = c * s / co;
                nodes.push(a);
                weights.push(w * half * c / (co * co) * law.evaluate(a));
            }
            (nodes, weights)
        }
    };
    let mass = weights.iter().sum();
    Ok(DimRule {
        nodes,
        weights,
        mass,
    })
}

/// Outer rule over alpha^2 with the diffusion density folded into weights.
fn alpha_rule(
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
    level: u32,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if diffusion.is_point_mass() {
        return Ok((vec![diffusion.lo()], vec![1.0]));
    }
    let order = q.legendre_order << level;
    let rule = quad::gauss_legendre(order)?;
    let (lo, hi) = (diffusion.lo(), diffusion.hi());
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let nodes: Vec<f64> = rule.nodes.iter().map(|&x| mid + half * x).collect();
    let weights: Vec<f64> = rule
        .weights
        .iter()
        .zip(&nodes)
        .map(|(&w, &a)| w * half * diffusion.density(a))
        .collect();
    Ok((nodes, weights))
}

/// Precomputed integrand description: for every alpha-node j the density
/// value is w_j * sum_combos w_c * pivot(scale_j * (u - s0_j - sum_d c_dj x_d)).
struct Evaluator {
    alpha_w: Vec<f64>,
    scale: Vec<f64>,
    s0: Vec<f64>,
    dims: Vec<DimRule>,
    coeff: Vec<Vec<f64>>,
    pruned_mass: f64,
    pivot: PivotKind,
    pivot_lipschitz: Option<bool>,
}

impl Evaluator {
    fn combo_count(&self) -> usize {
        self.dims.iter().map(|d| d.nodes.len()).product()
    }

    fn node_count(&self) -> usize {
        self.alpha_w.len() * self.combo_count()
    }

    /// Materialize the inner (shift, weight) slice for alpha-node `j`.
    fn build_slice(&self, j: usize, buf: &mut Vec<(f64, f64)>, scratch: &mut Vec<(f64, f64)>) {
        buf.clear();
        buf.push((self.s0[j], 1.0));
        for (d, rule) in self.dims.iter().enumerate() {
            let c = self.coeff[d][j];
            scratch.clear();
            scratch.reserve(buf.len() * rule.nodes.len());
            for &(s, w) in buf.iter() {
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    scratch.push((s + c * x, w * wx));
                }
            }
            std::mem::swap(buf, scratch);
        }
    }

    fn eval_grid(&self, us: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0f64; us.len()];
        let mut slice: Vec<(f64, f64)> = Vec::new();
        let mut scratch: Vec<(f64, f64)> = Vec::new();
        for j in 0..self.alpha_w.len() {
            self.build_slice(j, &mut slice, &mut scratch);
            accumulate(us, &mut out, &slice, self.alpha_w[j], self.scale[j], &self.pivot);
        }
        for v in &mut out {
            *v *= self.pruned_mass;
        }
        out
    }

    fn eval_point(&self, u: f64) -> f64 {
        self.eval_grid(std::slice::from_ref(&u))[0]
    }
}

fn accumulate(
    us: &[f64],
    out: &mut [f64],
    slice: &[(f64, f64)],
    wj: f64,
    scale: f64,
    pivot: &PivotKind,
) {
    let body = |u: f64, o: &mut f64| {
        let mut acc = 0.0;
        for &(s, w) in slice {
            acc += w * pivot.eval(scale * (u - s));
        }
        *o += wj * acc;
    };
    #[cfg(feature = "parallel")]
    {
        if us.len() >= 64 && slice.len() >= 256 {
            out.par_iter_mut()
                .zip(us.par_iter())
                .for_each(|(o, &u)| body(u, o));
            return;
        }
    }
    for (o, &u) in out.iter_mut().zip(us.iter()) {
        body(u, o);
    }
}

fn jacobian_scale(point: &EvalPoint, alpha: f64) -> f64 {
    (PI * PI * alpha * point.t()).exp() / sin_pi(point.x())
}

fn evaluator_fourier_indep(
    point: &EvalPoint,
    n_order: usize,
    coeffs: &CoeffModel,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
    level: u32,
) -> Result<Evaluator> {
    q.validate()?;
    if n_order < 2 {
        return Err(Error::Domain("the coefficient route needs N >= 2".into()));
    }
    let marginals = match coeffs {
        CoeffModel::Independent { marginals } => marginals,
        CoeffModel::JointGaussian { .. } => {
            return Err(Error::WrongModel(
                "independent route called with a joint-Gaussian coefficient model".into(),
            ));
        }
    };
    if marginals.len() < n_order {
        return Err(Error::WrongModel(format!(
            "coefficient model holds {} marginals, need {n_order}",
            marginals.len()
        )));
    }
    let (x, t) = (point.x(), point.t());
    let (alpha_nodes, aw) = alpha_rule(diffusion, q, level)?;
    let mut scale = Vec::with_capacity(alpha_nodes.len());
    let mut alpha_w = Vec::with_capacity(alpha_nodes.len());
    for (&a, &w) in alpha_nodes.iter().zip(&aw) {
        let k = jacobian_scale(point, a);
        if !k.is_finite() {
            return Err(Error::Domain(
                "e^{pi^2 alpha^2 t} overflows; the density is numerically a point mass".into(),
            ));
        }
        scale.push(k);
        alpha_w.push(w * k);
    }
    let s0 = vec![0.0; alpha_nodes.len()];
    let mut dims = Vec::new();
    let mut coeff = Vec::new();
    let mut pruned_mass = 1.0;
    for n in 2..=n_order {
        let nf = n as f64;
        let sn = sin_pi(nf * x);
        let rule = dim_rule(&marginals[n - 1], q, level)?;
        if sn == 0.0 {
            pruned_mass *= rule.mass;
            continue;
        }
        let c: Vec<f64> = alpha_nodes
            .iter()
            .map(|&a| (-nf * nf * PI * PI * a * t).exp() * sn)
            .collect();
        dims.push(rule);
        coeff.push(c);
    }
    let pivot_lipschitz = marginals[0].is_lipschitz();
    Ok(Evaluator {
        alpha_w,
        scale,
        s0,
        dims,
        coeff,
        pruned_mass,
        pivot: PivotKind::from_law(&marginals[0]),
        pivot_lipschitz,
    })
}

fn evaluator_fourier_joint(
    point: &EvalPoint,
    n_order: usize,
    coeffs: &CoeffModel,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
    level: u32,
) -> Result<Evaluator> {
    q.validate()?;
    if n_order < 1 {
        return Err(Error::Domain("the joint route needs N >= 1".into()));
    }
    let (mu, sigma) = match coeffs {
        CoeffModel::JointGaussian { mu, sigma } => (mu, sigma),
        CoeffModel::Independent { .. } => {
            return Err(Error::WrongModel(
                "joint-Gaussian route called with an independent coefficient model".into(),
            ));
        }
    };
    let n = mu.len();
    if n < n_order {
        return Err(Error::WrongModel(format!(
            "coefficient model is {n}-dimensional, need {n_order}"
        )));
    }
    let eig = sigma.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.amax();
    let min_ev = eig.eigenvalues.min();
    if !(min_ev > 1e-12 * max_ev.max(1e-300)) {
        return Err(Error::SingularCovariance(format!(
            "det(Sigma_N)=0 within numerical precision (min eigenvalue {min_ev:.3e})"
        )));
    }

    let (x, t) = (point.x(), point.t());
    let (alpha_nodes, aw) = alpha_rule(diffusion, q, level)?;
    let mut scale = Vec::with_capacity(alpha_nodes.len());
    let mut alpha_w = Vec::with_capacity(alpha_nodes.len());
    for (&a, &w) in alpha_nodes.iter().zip(&aw) {
        let k = jacobian_scale(point, a);
        if !k.is_finite() {
            return Err(Error::Domain(
                "e^{pi^2 alpha^2 t} overflows; the density is numerically a point mass".into(),
            ));
        }
        scale.push(k);
        alpha_w.push(w * k);
    }

    if n_order == 1 {
        // f(u) = int f_A1(K u) K f_alpha: pivot at K(u - mu1/K) + centered law
        let sd = sigma[(0, 0)].sqrt();
        let s0 = scale.iter().map(|&k| mu[0] / k).collect();
        return Ok(Evaluator {
            alpha_w,
            scale,
            s0,
            dims: Vec::new(),
            coeff: Vec::new(),
            pruned_mass: 1.0,
            pivot: PivotKind::from_law(&ScalarDensity::normal(0.0, sd)?),
            pivot_lipschitz: Some(true),
        });
    }

    let d2 = n_order - 1;
    let mu1 = mu[0];
    let mu2 = mu.rows(1, d2).into_owned();
    let s11 = sigma[(0, 0)];
    let s21 = sigma.view((1, 0), (d2, 1)).into_owned();
    let s22 = sigma.view((1, 1), (d2, d2)).into_owned();
    let chol = nalgebra::Cholesky::new(s22).ok_or_else(|| {
        Error::SingularCovariance("trailing covariance block is not positive definite".into())
    })?;
    let b = chol.solve(&s21); // Sigma_22^{-1} sigma_21
    let sigma_bar = s11 - (s21.transpose() * &b)[(0, 0)];
    if !(sigma_bar > 1e-12 * s11.max(1e-300)) {
        return Err(Error::Degenerate {
            what: "conditional variance of A_1".into(),
            cond: sigma_bar / s11.max(1e-300),
        });
    }
    let l_fac = chol.l();

    // physical shift coefficients per alpha-node: c_phys[r][j] multiplies
    // coefficient a_{r+2}
    let mut c_phys = vec![vec![0.0; alpha_nodes.len()]; d2];
    for (r, row) in c_phys.iter_mut().enumerate() {
        let nf = (r + 2) as f64;
        let sn = sin_pi(nf * x);
        for (j, &a) in alpha_nodes.iter().enumerate() {
            row[j] = (-nf * nf * PI * PI * a * t).exp() * sn;
        }
    }
    // g = L^T b: whitened-coordinate coefficient of the conditional mean
    let g = l_fac.transpose() * &b;

    let std_normal = ScalarDensity::standard_normal();
    let mut dims = Vec::with_capacity(d2);
    for _ in 0..d2 {
        dims.push(dim_rule(&std_normal, q, level)?);
    }

    // coeff[d][j] = (c_phys_j^T L)_d + g_d/K_j ; s0_j = c_phys_j^T mu2 + mu1/K_j
    let mut coeff = vec![vec![0.0; alpha_nodes.len()]; d2];
    let mut s0 = vec![0.0; alpha_nodes.len()];
    for j in 0..alpha_nodes.len() {
        let k = scale[j];
        let mut dot_mu = 0.0;
        for r in 0..d2 {
            dot_mu += c_phys[r][j] * mu2[r];
        }
        s0[j] = dot_mu + mu1 / k;
        for d in 0..d2 {
            let mut acc = 0.0;
            for r in d..d2 {
                acc += c_phys[r][j] * l_fac[(r, d)];
            }
            coeff[d][j] = acc + g[d] / k;
        }
    }

    let pivot_law = ScalarDensity::normal(0.0, sigma_bar.sqrt())?;
    Ok(Evaluator {
        alpha_w,
        scale,
        s0,
        dims,
        coeff,
        pruned_mass: 1.0,
        pivot: PivotKind::from_law(&pivot_law),
        pivot_lipschitz: Some(true),
    })
}

fn evaluator_kl(
    point: &EvalPoint,
    n_order: usize,
    process: &ProcessSpec,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
    level: u32,
) -> Result<Evaluator> {
    q.validate()?;
    if n_order < 3 {
        return Err(Error::Domain("the expansion route needs N >= 3".into()));
    }
    let nu1 = process.nu(1);
    if !(nu1 > 0.0) {
        return Err(Error::InvalidModel(
            "first expansion eigenvalue must be positive".into(),
        ));
    }
    let (x, t) = (point.x(), point.t());
    let (alpha_nodes, aw) = alpha_rule(diffusion, q, level)?;

    // T_N(phi_m)(x,t,alpha_j) for the needed m
    let tn = |m: usize| -> Result<Vec<f64>> {
        match process.basis() {
            BasisKind::Sine => {
                // phi_hat_m(n) = (sqrt2/2) delta_{mn}; only n = m survives
                let mf = m as f64;
                let sm = sin_pi(mf * x);
                Ok(alpha_nodes
                    .iter()
                    .map(|&a| {
                        0.5 * std::f64::consts::SQRT_2 * (-mf * mf * PI * PI * a * t).exp() * sm
                    })
                    .collect())
            }
            BasisKind::ShiftedSine => {
                let pair = process.eigenpair(m)?;
                let coeffs = SineCoeffs::from_fn(|y| pair.phi.eval(y), n_order)?;
                Ok(alpha_nodes
                    .iter()
                    .map(|&a| crate::series::t_n_operator(&coeffs, point, a, n_order))
                    .collect())
            }
        }
    };

    let t1 = tn(1)?;
    let sqrt_nu1 = nu1.sqrt();
    let mut scale = Vec::with_capacity(alpha_nodes.len());
    let mut alpha_w = Vec::with_capacity(alpha_nodes.len());
    for (j, &w) in aw.iter().enumerate() {
        let t1j = t1[j];
        if !(t1j.abs() > 1e-280) {
            return Err(Error::HypothesisViolation(format!(
                "T_N(phi_1) vanishes at an alpha^2 quadrature node (alpha^2 = {}); \
                 the diffusion support leaves the admissible set D_N",
                alpha_nodes[j]
            )));
        }
        let s = 1.0 / (2.0 * sqrt_nu1 * t1j);
        scale.push(s);
        alpha_w.push(w * s.abs());
    }

    // constant shift from the mean function: 2 T_N(mu_phi)
    let s0 = match process.mean() {
        MeanFn::Zero => vec![0.0; alpha_nodes.len()],
        MeanFn::Custom(f) => {
            let coeffs = SineCoeffs::from_fn(|y| f(y), n_order)?;
            alpha_nodes
                .iter()
                .map(|&a| 2.0 * crate::series::t_n_operator(&coeffs, point, a, n_order))
                .collect()
        }
    };

    let xi = process.xi_law();
    let mut dims = Vec::new();
    let mut coeff = Vec::new();
    let mut pruned_mass = 1.0;
    for m in 2..=(n_order - 1) {
        let tm = tn(m)?;
        let c: Vec<f64> = tm
            .iter()
            .map(|&v| 2.0 * v * process.nu(m).sqrt())
            .collect();
        let rule = dim_rule(xi, q, level)?;
        if c.iter().all(|&v| v == 0.0) {
            pruned_mass *= rule.mass;
            continue;
        }
        dims.push(rule);
        coeff.push(c);
    }

    Ok(Evaluator {
        alpha_w,
        scale,
        s0,
        dims,
        coeff,
        pruned_mass,
        pivot: PivotKind::from_law(xi),
        pivot_lipschitz: xi.is_lipschitz(),
    })
}

fn evaluator_for(
    point: &EvalPoint,
    n_order: usize,
    method: Method,
    bundle: &ModelBundle,
    q: &QuadConfig,
    level: u32,
) -> Result<Evaluator> {
    match method {
        Method::FourierIndep => {
            if !bundle.process.coefficients_independent() {
                return Err(Error::WrongModel(
                    "this process does not induce independent coefficients".into(),
                ));
            }
            let coeffs = build_coeff_model(&bundle.process, n_order)?;
            evaluator_fourier_indep(point, n_order, &coeffs, &bundle.diffusion, q, level)
        }
        Method::BbFast => {
            if bundle.process.analytic_kernel().is_none()
                || bundle.process.basis() != BasisKind::Sine
            {
                return Err(Error::WrongModel(
                    "the fast path is specialized to the Brownian bridge".into(),
                ));
            }
            let coeffs = build_coeff_model(&bundle.process, n_order)?;
            evaluator_fourier_indep(point, n_order, &coeffs, &bundle.diffusion, q, level)
        }
        Method::FourierJoint => {
            let coeffs = build_joint_coeff_model(&bundle.process, n_order)?;
            evaluator_fourier_joint(point, n_order, &coeffs, &bundle.diffusion, q, level)
        }
        Method::Kl => evaluator_kl(point, n_order, &bundle.process, &bundle.diffusion, q, level),
    }
}

/// Coefficient-route density for independent coefficients at a single point.
pub fn density_fourier_indep(
    u: f64,
    point: &EvalPoint,
    n_order: usize,
    coeffs: &CoeffModel,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
) -> Result<f64> {
    Ok(evaluator_fourier_indep(point, n_order, coeffs, diffusion, q, 0)?.eval_point(u))
}

/// Coefficient-route density for a joint-Gaussian coefficient vector.
pub fn density_fourier_joint_gaussian(
    u: f64,
    point: &EvalPoint,
    n_order: usize,
    coeffs: &CoeffModel,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
) -> Result<f64> {
    Ok(evaluator_fourier_joint(point, n_order, coeffs, diffusion, q, 0)?.eval_point(u))
}

/// Brownian-bridge fast path: the independent route with the bridge's
/// Normal(0, 2/(n^2 pi^2)) marginals filled in.
pub fn density_bb(
    u: f64,
    point: &EvalPoint,
    n_order: usize,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
) -> Result<f64> {
    let bb = crate::models::make_brownian_bridge_process();
    let coeffs = build_coeff_model(&bb, n_order)?;
    Ok(evaluator_fourier_indep(point, n_order, &coeffs, diffusion, q, 0)?.eval_point(u))
}

/// Expansion-route density at a single point.
pub fn density_kl(
    u: f64,
    point: &EvalPoint,
    n_order: usize,
    process: &ProcessSpec,
    diffusion: &DiffusionSpec,
    q: &QuadConfig,
) -> Result<f64> {
    Ok(evaluator_kl(point, n_order, process, diffusion, q, 0)?.eval_point(u))
}

/// Expectation of exp(-c * alpha^2) under the diffusion law, with the closed
/// form in the uniform case.
pub(crate) fn diffusion_exp_moment(diffusion: &DiffusionSpec, c: f64) -> Result<f64> {
    if diffusion.is_point_mass() {
        return Ok((-c * diffusion.lo()).exp());
    }
    if diffusion.is_uniform() {
        let (lo, hi) = (diffusion.lo(), diffusion.hi());
        if c == 0.0 {
            return Ok(1.0);
        }
        return Ok(((-c * lo).exp() - (-c * hi).exp()) / (c * (hi - lo)));
    }
    quad::integrate_legendre(128, diffusion.lo(), diffusion.hi(), |a| {
        (-c * a).exp() * diffusion.density(a)
    })
}

/// Standard deviation of the truncated solution with the first `n_modes`
/// coefficients active, used to size auto grids.
pub fn truncated_sd(bundle: &ModelBundle, point: &EvalPoint, n_modes: usize) -> Result<f64> {
    let (x, t) = (point.x(), point.t());
    let var = if bundle.process.coefficients_independent() {
        let mut acc = 0.0;
        for n in 1..=n_modes {
            let nf = n as f64;
            let s = sin_pi(nf * x);
            if s == 0.0 {
                continue;
            }
            let e2 = diffusion_exp_moment(&bundle.diffusion, 2.0 * nf * nf * PI * PI * t)?;
            acc += 2.0 * bundle.process.nu(n) * s * s * e2;
        }
        acc
    } else {
        if !bundle.process.mean().is_zero() {
            return Err(Error::InvalidModel(
                "analytic variance needs a zero mean function".into(),
            ));
        }
        let mut acc = 0.0;
        for n in 1..=n_modes {
            for m in 1..=n_modes {
                let (nf, mf) = (n as f64, m as f64);
                let sn = sin_pi(nf * x) * sin_pi(mf * x);
                if sn == 0.0 {
                    continue;
                }
                let cov = crate::models::fourier_coeff_cov(&bundle.process, n, m)?;
                let e =
                    diffusion_exp_moment(&bundle.diffusion, (nf * nf + mf * mf) * PI * PI * t)?;
                acc += cov * sn * e;
            }
        }
        acc
    };
    if !(var > 0.0) {
        return Err(Error::Domain(
            "truncated solution has zero variance at this point".into(),
        ));
    }
    Ok(var.sqrt())
}

fn effective_modes(method: Method, n_order: usize) -> usize {
    match method {
        Method::Kl => n_order - 1,
        _ => n_order,
    }
}

/// Resolve the auto grid for a (bundle, point, order, method) combination.
pub fn auto_grid(
    bundle: &ModelBundle,
    point: &EvalPoint,
    n_order: usize,
    method: Method,
) -> Result<(f64, f64, usize)> {
    let sd = truncated_sd(bundle, point, effective_modes(method, n_order))?;
    Ok((-6.0 * sd, 6.0 * sd, 401))
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && hi > lo);
    let h = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + h * i as f64).collect()
}

/// Evaluate the selected density on a grid, refining quadrature orders until
/// the tabulated values stabilize in L1 (relative to the grid mass) when
/// `q.refine` is set. Auto grids are widened if tail mass is missing.
pub fn density_grid(
    point: &EvalPoint,
    n_order: usize,
    method: Method,
    bundle: &ModelBundle,
    q: &QuadConfig,
    grid: GridSpec,
) -> Result<DensityGrid> {
    let (mut lo, mut hi, mut count) = match grid {
        GridSpec::Auto => auto_grid(bundle, point, n_order, method)?,
        GridSpec::Explicit { lo, hi, count } => {
            if !(hi > lo) || count < 3 {
                return Err(Error::Domain("grid needs hi > lo and count >= 3".into()));
            }
            (lo, hi, count)
        }
    };

    let mut expansions = 0;
    loop {
        let us = linspace(lo, hi, count);
        let (f, level, converged, history) = refine_on(&us, point, n_order, method, bundle, q)?;
        let mass = quad::trapezoid(&us, &f);
        let auto = matches!(grid, GridSpec::Auto);
        if auto && mass < 1.0 - 2e-3 && expansions < 4 {
            // tails were cut; widen keeping the spacing
            expansions += 1;
            lo *= 1.6;
            hi *= 1.6;
            count = (((count - 1) as f64 * 1.6).round() as usize + 1).min(4001);
            continue;
        }
        let ev = evaluator_for(point, n_order, method, bundle, q, 0)?;
        return Ok(DensityGrid {
            u: us,
            f,
            meta: GridMeta {
                x: point.x(),
                t: point.t(),
                n_order,
                method: method.as_str().to_string(),
                quad: q.clone(),
                model_digest: bundle.digest(),
                mass,
                refine_level: level,
                refine_converged: converged,
                refine_history: history,
                pivot_lipschitz: ev.pivot_lipschitz,
            },
        });
    }
}

fn refine_on(
    us: &[f64],
    point: &EvalPoint,
    n_order: usize,
    method: Method,
    bundle: &ModelBundle,
    q: &QuadConfig,
) -> Result<(Vec<f64>, u32, bool, Vec<f64>)> {
    let ev = evaluator_for(point, n_order, method, bundle, q, 0)?;
    let mut f = ev.eval_grid(us);
    if !q.refine {
        return Ok((f, 0, true, Vec::new()));
    }
    let mut history = Vec::new();
    let mut level = 0u32;
    loop {
        if level >= MAX_DOUBLINGS {
            return Ok((f, level, false, history));
        }
        let next_level = level + 1;
        let ev = evaluator_for(point, n_order, method, bundle, q, next_level)?;
        if ev.node_count() > NODE_BUDGET {
            return Ok((f, level, false, history));
        }
        let f_next = ev.eval_grid(us);
        let mass: f64 = quad::trapezoid(us, &f_next).abs().max(1e-12);
        let change = us
            .windows(2)
            .zip(f.windows(2).zip(f_next.windows(2)))
            .map(|(uw, (fw, gw))| {
                0.5 * ((fw[0] - gw[0]).abs() + (fw[1] - gw[1]).abs()) * (uw[1] - uw[0])
            })
            .sum::<f64>();
        history.push(change);
        f = f_next;
        level = next_level;
        if change / mass < q.refine_tol {
            return Ok((f, level, true, history));
        }
    }
}

/// Monte Carlo estimate of the same transformed-density integral on the given
/// abscissae, averaging the integrand over draws of the non-pivot
/// coordinates. Streams of fixed size are seeded by (mc_seed, stream index),
/// so the result does not depend on scheduling or worker count.
pub fn mc_integrate_density(
    us: &[f64],
    point: &EvalPoint,
    n_order: usize,
    method: Method,
    bundle: &ModelBundle,
    q: &QuadConfig,
) -> Result<DensityGrid> {
    if q.mc_samples < 10_000 {
        return Err(Error::InvalidModel(
            "mc_samples must be at least 10^4 for the Monte Carlo path".into(),
        ));
    }
    const STREAM: usize = 8192;
    let t = point.t();

    enum DrawModel {
        Indep {
            tail: Vec<ScalarDensity>,
        },
        Kl,
        Joint {
            mu1: f64,
            mu2: nalgebra::DVector<f64>,
            l_fac: nalgebra::DMatrix<f64>,
            b: nalgebra::DVector<f64>,
            sigma_bar: f64,
        },
    }

    let (model, pivot_law) = match method {
        Method::FourierIndep | Method::BbFast => {
            let coeffs = build_coeff_model(&bundle.process, n_order)?;
            let CoeffModel::Independent { marginals } = coeffs else {
                return Err(Error::WrongModel("expected independent coefficients".into()));
            };
            let pivot = marginals[0].clone();
            (
                DrawModel::Indep {
                    tail: marginals[1..n_order].to_vec(),
                },
                pivot,
            )
        }
        Method::Kl => {
            if n_order < 3 {
                return Err(Error::Domain("the expansion route needs N >= 3".into()));
            }
            if bundle.process.basis() != BasisKind::Sine {
                return Err(Error::UnsupportedLaw(
                    "Monte Carlo expansion route supports sine-basis processes".into(),
                ));
            }
            (DrawModel::Kl, bundle.process.xi_law().clone())
        }
        Method::FourierJoint => {
            let coeffs = build_joint_coeff_model(&bundle.process, n_order)?;
            let CoeffModel::JointGaussian { mu, sigma } = coeffs else {
                return Err(Error::WrongModel("expected a joint-Gaussian model".into()));
            };
            if n_order == 1 {
                let sigma_bar = sigma[(0, 0)];
                (
                    DrawModel::Joint {
                        mu1: mu[0],
                        mu2: nalgebra::DVector::zeros(0),
                        l_fac: nalgebra::DMatrix::zeros(0, 0),
                        b: nalgebra::DVector::zeros(0),
                        sigma_bar,
                    },
                    ScalarDensity::normal(0.0, sigma_bar.sqrt())?,
                )
            } else {
                let d2 = n_order - 1;
                let s21 = sigma.view((1, 0), (d2, 1)).column(0).into_owned();
                let s22 = sigma.view((1, 1), (d2, d2)).into_owned();
                let chol = nalgebra::Cholesky::new(s22).ok_or_else(|| {
                    Error::SingularCovariance(
                        "trailing covariance block is not positive definite".into(),
                    )
                })?;
                let b = chol.solve(&s21);
                let sigma_bar = sigma[(0, 0)] - s21.dot(&b);
                if !(sigma_bar > 0.0) {
                    return Err(Error::Degenerate {
                        what: "conditional variance of A_1".into(),
                        cond: sigma_bar,
                    });
                }
                (
                    DrawModel::Joint {
                        mu1: mu[0],
                        mu2: mu.rows(1, d2).into_owned(),
                        l_fac: chol.l(),
                        b,
                        sigma_bar,
                    },
                    ScalarDensity::normal(0.0, sigma_bar.sqrt())?,
                )
            }
        }
    };

    let pivot = PivotKind::from_law(&pivot_law);
    let nu1_sqrt = bundle.process.nu(1).sqrt();
    let samples = q.mc_samples;
    let mut draws: Vec<(f64, f64, f64)> = Vec::with_capacity(samples);
    let n_streams = samples.div_ceil(STREAM);
    for stream in 0..n_streams {
        let mut rng = stream_rng(q.mc_seed, stream as u64);
        let lo = stream * STREAM;
        let hi = ((stream + 1) * STREAM).min(samples);
        for _ in lo..hi {
            let a = crate::mc::draw_alpha(&bundle.diffusion, &mut rng)?;
            match &model {
                DrawModel::Indep { tail } => {
                    let k = jacobian_scale(point, a);
                    let mut s = 0.0;
                    for (idx, law) in tail.iter().enumerate() {
                        let nf = (idx + 2) as f64;
                        let coef = (-nf * nf * PI * PI * a * t).exp() * sin_pi(nf * point.x());
                        let v = crate::mc::draw_from_law(law, &mut rng)?;
                        s += coef * v;
                    }
                    draws.push((k, s, k));
                }
                DrawModel::Kl => {
                    let t1 =
                        0.5 * std::f64::consts::SQRT_2 * (-PI * PI * a * t).exp() * sin_pi(point.x());
                    if !(t1.abs() > 1e-280) {
                        return Err(Error::HypothesisViolation(
                            "T_N(phi_1) vanished at a sampled alpha^2".into(),
                        ));
                    }
                    let scale = 1.0 / (2.0 * nu1_sqrt * t1);
                    let mut s = 0.0;
                    for m in 2..=(n_order - 1) {
                        let mf = m as f64;
                        let tm = 0.5
                            * std::f64::consts::SQRT_2
                            * (-mf * mf * PI * PI * a * t).exp()
                            * sin_pi(mf * point.x());
                        let v = crate::mc::draw_from_law(bundle.process.xi_law(), &mut rng)?;
                        s += 2.0 * tm * bundle.process.nu(m).sqrt() * v;
                    }
                    draws.push((scale, s, scale.abs()));
                }
                DrawModel::Joint {
                    mu1, mu2, l_fac, b, ..
                } => {
                    let k = jacobian_scale(point, a);
                    let d2 = mu2.len();
                    if d2 == 0 {
                        draws.push((k, *mu1 / k, k));
                        continue;
                    }
                    let z = nalgebra::DVector::from_iterator(
                        d2,
                        (0..d2)
                            .map(|_| crate::mc::draw_standard_normal(&mut rng))
                            .collect::<Vec<_>>(),
                    );
                    let tail = mu2 + l_fac * z;
                    let mut s_phys = 0.0;
                    for r in 0..d2 {
                        let nf = (r + 2) as f64;
                        s_phys +=
                            (-nf * nf * PI * PI * a * t).exp() * sin_pi(nf * point.x()) * tail[r];
                    }
                    let mu_bar = *mu1 + b.dot(&(&tail - mu2));
                    draws.push((k, s_phys + mu_bar / k, k));
                }
            }
        }
    }

    let inv = 1.0 / samples as f64;
    let eval_one = |u: f64| -> f64 {
        let mut acc = 0.0;
        for &(scale, s, jac) in &draws {
            acc += jac * pivot.eval(scale * (u - s));
        }
        acc * inv
    };
    #[cfg(feature = "parallel")]
    let f: Vec<f64> = us.par_iter().map(|&u| eval_one(u)).collect();
    #[cfg(not(feature = "parallel"))]
    let f: Vec<f64> = us.iter().map(|&u| eval_one(u)).collect();

    let mass = quad::trapezoid(us, &f);
    Ok(DensityGrid {
        u: us.to_vec(),
        f,
        meta: GridMeta {
            x: point.x(),
            t: point.t(),
            n_order,
            method: format!("mc_{}", method.as_str()),
            quad: q.clone(),
            model_digest: bundle.digest(),
            mass,
            refine_level: 0,
            refine_converged: true,
            refine_history: Vec::new(),
            pivot_lipschitz: pivot_law.is_lipschitz(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_brownian_bridge_process, make_brownian_motion_process};
    use approx::assert_abs_diff_eq;

    fn bb_bundle() -> ModelBundle {
        ModelBundle::new(
            make_brownian_bridge_process(),
            DiffusionSpec::uniform(1.0, 2.0).unwrap(),
        )
    }

    #[test]
    fn bb_grid_normalized_and_symmetric() {
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let g = density_grid(&p, 2, Method::BbFast, &bb_bundle(), &q, GridSpec::Auto).unwrap();
        assert!((g.meta.mass - 1.0).abs() < 1e-3, "mass {}", g.meta.mass);
        assert!(g.f.iter().all(|&v| v >= 0.0));
        // peak at the center
        let mid = g.f.len() / 2;
        let max = g.f.iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(g.f[mid], max);
        // symmetry
        let maxdiff = (0..g.f.len())
            .map(|i| (g.f[i] - g.f[g.f.len() - 1 - i]).abs())
            .fold(0.0f64, f64::max);
        assert!(maxdiff <= 1e-8 * max);
    }

    #[test]
    fn bb_fast_equals_indep_route() {
        let p = EvalPoint::new(0.7, 0.3).unwrap();
        let q = QuadConfig::default();
        let bundle = bb_bundle();
        let coeffs = build_coeff_model(&bundle.process, 3).unwrap();
        for &u in &[-0.04, 0.0, 0.013, 0.05] {
            let a = density_bb(u, &p, 3, &bundle.diffusion, &q).unwrap();
            let b = density_fourier_indep(u, &p, 3, &coeffs, &bundle.diffusion, &q).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn joint_with_diagonal_sigma_matches_indep() {
        let p = EvalPoint::new(0.7, 0.3).unwrap();
        let q = QuadConfig::default();
        let bundle = bb_bundle();
        let indep = build_coeff_model(&bundle.process, 3).unwrap();
        let joint = build_joint_coeff_model(&bundle.process, 3).unwrap();
        for &u in &[-0.03, 0.0, 0.02] {
            let a = density_fourier_indep(u, &p, 3, &indep, &bundle.diffusion, &q).unwrap();
            let b =
                density_fourier_joint_gaussian(u, &p, 3, &joint, &bundle.diffusion, &q).unwrap();
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                "u={u}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn joint_n1_matches_scalar_quadrature_oracle() {
        // N=1: f(u) = int f_A1(K u) K f_alpha da, A_1 ~ Normal(0, 2/pi^2)
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let bundle = bb_bundle();
        let joint = build_joint_coeff_model(&bundle.process, 1).unwrap();
        let sd = (2.0 / (PI * PI)).sqrt();
        for &u in &[0.0, 0.1, -0.27] {
            let got =
                density_fourier_joint_gaussian(u, &p, 1, &joint, &bundle.diffusion, &q).unwrap();
            let oracle = quad::integrate_legendre(256, 1.0, 2.0, |a| {
                let k = (PI * PI * a * 0.1).exp() / sin_pi(0.5);
                let y = k * u / sd;
                k * (-0.5 * y * y).exp() / (sd * (2.0 * PI).sqrt())
            })
            .unwrap();
            assert_abs_diff_eq!(got, oracle, epsilon = 1e-10 * oracle.max(1.0));
        }
    }

    #[test]
    fn kl_route_matches_fourier_route_for_bridge() {
        // u_{N,N} = u_{N-1} for the bridge: same grid within 1e-9 L1
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig {
            refine: false,
            ..QuadConfig::default()
        };
        let bundle = bb_bundle();
        let (lo, hi, count) = auto_grid(&bundle, &p, 3, Method::Kl).unwrap();
        let us = linspace(lo, hi, count);
        let kl = evaluator_kl(&p, 3, &bundle.process, &bundle.diffusion, &q, 0)
            .unwrap()
            .eval_grid(&us);
        let coeffs = build_coeff_model(&bundle.process, 2).unwrap();
        let fr = evaluator_fourier_indep(&p, 2, &coeffs, &bundle.diffusion, &q, 0)
            .unwrap()
            .eval_grid(&us);
        let l1: f64 = us
            .windows(2)
            .zip(kl.windows(2).zip(fr.windows(2)))
            .map(|(uw, (a, b))| {
                0.5 * ((a[0] - b[0]).abs() + (a[1] - b[1]).abs()) * (uw[1] - uw[0])
            })
            .sum();
        assert!(l1 <= 1e-9, "L1 {l1}");
    }

    #[test]
    fn point_mass_diffusion_collapses_to_single_node() {
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let pm = DiffusionSpec::uniform(1.3, 1.3).unwrap();
        let bb = make_brownian_bridge_process();
        let coeffs = build_coeff_model(&bb, 2).unwrap();
        // with a point mass the mixture is a single Gaussian in u
        let sd = (2.0 / (PI * PI)).sqrt() * (-PI * PI * 1.3 * 0.1).exp();
        for &u in &[0.0, 0.05, -0.11] {
            let got = density_fourier_indep(u, &p, 2, &coeffs, &pm, &q).unwrap();
            let z = u / sd;
            let expect = (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn domain_and_model_errors() {
        assert!(EvalPoint::new(0.0, 0.1).is_err());
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let bundle = bb_bundle();
        let joint = build_joint_coeff_model(&bundle.process, 2).unwrap();
        assert!(matches!(
            density_fourier_indep(0.0, &p, 2, &joint, &bundle.diffusion, &q),
            Err(Error::WrongModel(_))
        ));
        let indep = build_coeff_model(&bundle.process, 2).unwrap();
        assert!(matches!(
            density_fourier_joint_gaussian(0.0, &p, 2, &indep, &bundle.diffusion, &q),
            Err(Error::WrongModel(_))
        ));
        // expansion route needs N >= 3
        assert!(density_kl(0.0, &p, 2, &bundle.process, &bundle.diffusion, &q).is_err());
    }

    #[test]
    fn singular_joint_covariance_rejected() {
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let d = DiffusionSpec::uniform(1.0, 2.0).unwrap();
        let mu = nalgebra::DVector::zeros(2);
        let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let coeffs = CoeffModel::joint_gaussian(mu, sigma).unwrap();
        assert!(matches!(
            density_fourier_joint_gaussian(0.0, &p, 2, &coeffs, &d, &q),
            Err(Error::SingularCovariance(_))
        ));
    }

    #[test]
    fn motion_joint_route_is_well_posed() {
        // the true coefficient covariance of a Brownian motion is positive
        // definite, so the joint route evaluates without degeneracy
        let p = EvalPoint::new(0.5, 0.1).unwrap();
        let q = QuadConfig::default();
        let bundle = ModelBundle::new(
            make_brownian_motion_process(),
            DiffusionSpec::uniform(1.0, 2.0).unwrap(),
        );
        let g = density_grid(&p, 3, Method::FourierJoint, &bundle, &q, GridSpec::Auto).unwrap();
        assert!((g.meta.mass - 1.0).abs() < 2e-3, "mass {}", g.meta.mass);
    }

    #[test]
    fn refinement_converges_quickly_for_smooth_models() {
        let p = EvalPoint::new(0.7, 0.3).unwrap();
        let q = QuadConfig {
            refine_tol: 1e-10,
            ..QuadConfig::default()
        };
        let g = density_grid(&p, 3, Method::BbFast, &bb_bundle(), &q, GridSpec::Auto).unwrap();
        assert!(g.meta.refine_converged);
        assert!(g.meta.refine_level <= 2, "level {}", g.meta.refine_level);
    }
}
