//! Probabilistic inputs: the diffusion-coefficient law, initial-condition
//! processes given by their expansion data, and the induced laws of the
//! random sine-series coefficients A_n = 2 int_0^1 phi(y) sin(n pi y) dy.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::law::{LawKind, ScalarDensity};
use crate::quad;
use crate::series::{sin_pi, sine_hat, sine_order};

const PI: f64 = std::f64::consts::PI;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Mean function of the initial-condition process.
#[derive(Clone)]
pub enum MeanFn {
    Zero,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl MeanFn {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Custom(f) => f(y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MeanFn::Zero)
    }
}

/// Eigenvalue sequences with certified summability.
#[derive(Clone)]
pub enum NuSeq {
    /// 1/(pi^2 j^2) — the Brownian-bridge spectrum.
    InverseSquare,
    /// 1/((j-1/2)^2 pi^2) — the Brownian-motion spectrum.
    ShiftedInverseSquare,
    /// 1/(j^3 (1 + ln j)) — a heavy-damped example spectrum.
    CubicLog,
    /// Finite expansion; zero beyond the stored prefix.
    Values(Arc<Vec<f64>>),
    /// Caller-supplied rule; admissible only with a tail bound.
    Custom {
        nu: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
        tail_bound_after: Option<Arc<dyn Fn(usize) -> f64 + Send + Sync>>,
    },
}

impl fmt::Debug for NuSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuSeq::InverseSquare => write!(f, "InverseSquare"),
            NuSeq::ShiftedInverseSquare => write!(f, "ShiftedInverseSquare"),
            NuSeq::CubicLog => write!(f, "CubicLog"),
            NuSeq::Values(v) => write!(f, "Values(len={})", v.len()),
            NuSeq::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl NuSeq {
    /// j-th eigenvalue, 1-indexed.
    pub fn nu(&self, j: usize) -> f64 {
        assert!(j >= 1);
        let jf = j as f64;
        match self {
            NuSeq::InverseSquare => 1.0 / (PI * PI * jf * jf),
            NuSeq::ShiftedInverseSquare => {
                let h = jf - 0.5;
                1.0 / (h * h * PI * PI)
            }
            NuSeq::CubicLog => 1.0 / (jf.powi(3) * (1.0 + jf.ln())),
            NuSeq::Values(v) => v.get(j - 1).copied().unwrap_or(0.0),
            NuSeq::Custom { nu, .. } => nu(j),
        }
    }

    /// Upper bound on the tail sum over j > m, when one is registered.
    pub fn tail_bound(&self, m: usize) -> Option<f64> {
        assert!(m >= 1);
        let mf = m as f64;
        match self {
            NuSeq::InverseSquare => Some(1.0 / (PI * PI * mf)),
            NuSeq::ShiftedInverseSquare => Some(1.0 / (PI * PI * (mf - 0.5))),
            NuSeq::CubicLog => Some(0.5 / (mf * mf)),
            NuSeq::Values(_) => Some(0.0),
            NuSeq::Custom {
                tail_bound_after, ..
            } => tail_bound_after.as_ref().map(|f| f(m)),
        }
    }

    /// Certified upper bound on the total sum, if available.
    pub fn certified_total(&self) -> Option<f64> {
        let m = match self {
            NuSeq::Values(v) => v.len().max(1),
            _ => 64,
        };
        let tail = self.tail_bound(m)?;
        if !tail.is_finite() {
            return None;
        }
        let prefix: f64 = (1..=m).map(|j| self.nu(j)).sum();
        if !prefix.is_finite() {
            return None;
        }
        Some(prefix + tail)
    }
}

/// Eigenfunction family of the expansion basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// phi_j(t) = sqrt(2) sin(j pi t) — coincides with the solution basis.
    Sine,
    /// phi_j(t) = sqrt(2) sin((j-1/2) pi t).
    ShiftedSine,
}

/// A single eigenfunction, evaluable on [0,1].
#[derive(Debug, Clone, Copy)]
pub struct EigenFn {
    basis: BasisKind,
    j: usize,
}

impl EigenFn {
    pub fn eval(&self, t: f64) -> f64 {
        let jf = self.j as f64;
        match self.basis {
            BasisKind::Sine => SQRT_2 * sin_pi(jf * t),
            BasisKind::ShiftedSine => SQRT_2 * sin_pi((jf - 0.5) * t),
        }
    }
}

/// Eigenvalue/eigenfunction pair of the covariance operator.
#[derive(Debug, Clone, Copy)]
pub struct EigenPair {
    pub nu: f64,
    pub phi: EigenFn,
}

impl EigenPair {
    /// Per-function orthonormality check: int_0^1 phi^2 = 1 within 1e-8.
    pub fn check_orthonormal(&self) -> Result<()> {
        let order = sine_order(self.j()).max(64);
        let m = quad::integrate_legendre(order, 0.0, 1.0, |y| {
            let v = self.phi.eval(y);
            v * v
        })?;
        if (m - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidModel(format!(
                "eigenfunction {} has L2 norm^2 {m}, not 1",
                self.j()
            )));
        }
        Ok(())
    }

    fn j(&self) -> usize {
        self.phi.j
    }
}

/// An initial-condition process on [0,1] given by its expansion data
/// mu_phi + sum_j sqrt(nu_j) phi_j xi_j with iid xi_j.
#[derive(Clone)]
pub struct ProcessSpec {
    mean: MeanFn,
    basis: BasisKind,
    nu: NuSeq,
    xi: ScalarDensity,
    gaussian: bool,
}

impl fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessSpec")
            .field("basis", &self.basis)
            .field("nu", &self.nu)
            .field("xi", &self.xi)
            .field("gaussian", &self.gaussian)
            .finish()
    }
}

impl ProcessSpec {
    pub fn mean(&self) -> &MeanFn {
        &self.mean
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn nu(&self, j: usize) -> f64 {
        self.nu.nu(j)
    }

    pub fn nu_seq(&self) -> &NuSeq {
        &self.nu
    }

    pub fn xi_law(&self) -> &ScalarDensity {
        &self.xi
    }

    pub fn is_gaussian(&self) -> bool {
        self.gaussian
    }

    /// Whether the induced coefficients A_1, A_2, ... are independent.
    /// True exactly when the expansion basis is the solution's sine basis.
    pub fn coefficients_independent(&self) -> bool {
        self.basis == BasisKind::Sine
    }

    pub fn eigenpair(&self, j: usize) -> Result<EigenPair> {
        if j == 0 {
            return Err(Error::InvalidModel("eigenpair index starts at 1".into()));
        }
        Ok(EigenPair {
            nu: self.nu(j),
            phi: EigenFn {
                basis: self.basis,
                j,
            },
        })
    }

    /// Replace the mean function (zero for all built-in processes).
    pub fn with_mean(mut self, mean: MeanFn) -> Self {
        self.mean = mean;
        self
    }

    /// Analytic covariance kernel, when one is registered for this family.
    pub fn analytic_kernel(&self) -> Option<fn(f64, f64) -> f64> {
        match (self.basis, &self.nu, self.gaussian) {
            (BasisKind::Sine, NuSeq::InverseSquare, true) => {
                Some(|y, z| y.min(z) - y * z)
            }
            (BasisKind::ShiftedSine, NuSeq::ShiftedInverseSquare, true) => {
                Some(|y: f64, z: f64| y.min(z))
            }
            _ => None,
        }
    }
}

/// Brownian bridge on [0,1]: nu_j = 1/(pi^2 j^2), phi_j = sqrt(2) sin(j pi t),
/// iid standard normal xi.
pub fn make_brownian_bridge_process() -> ProcessSpec {
    ProcessSpec {
        mean: MeanFn::Zero,
        basis: BasisKind::Sine,
        nu: NuSeq::InverseSquare,
        xi: ScalarDensity::standard_normal(),
        gaussian: true,
    }
}

/// Brownian motion on [0,1]: nu_j = 1/((j-1/2)^2 pi^2),
/// phi_j = sqrt(2) sin((j-1/2) pi t). Kept so the library can demonstrate the
/// singular-covariance obstruction (rank(Sigma_N) = 1).
pub fn make_brownian_motion_process() -> ProcessSpec {
    ProcessSpec {
        mean: MeanFn::Zero,
        basis: BasisKind::ShiftedSine,
        nu: NuSeq::ShiftedInverseSquare,
        xi: ScalarDensity::standard_normal(),
        gaussian: true,
    }
}

/// Sine-basis process with caller-supplied spectrum and iid xi law.
///
/// Rejects spectra without a certified finite sum and xi laws whose numeric
/// mean/variance deviate from (0,1) by more than 1e-4.
pub fn make_general_sine_process(nu: NuSeq, xi_law: ScalarDensity) -> Result<ProcessSpec> {
    let total = nu.certified_total().ok_or_else(|| {
        Error::InvalidModel("eigenvalue sequence has no certified finite sum".into())
    })?;
    if !total.is_finite() {
        return Err(Error::InvalidModel(
            "eigenvalue sequence sum is not finite".into(),
        ));
    }
    for j in 1..=8 {
        if nu.nu(j) < 0.0 {
            return Err(Error::InvalidModel(format!("nu_{j} is negative")));
        }
    }
    let (_, mean, var) = xi_law.numeric_moments()?;
    if mean.abs() > 1e-4 || (var - 1.0).abs() > 1e-4 {
        return Err(Error::InvalidModel(format!(
            "xi law must have mean 0 and variance 1; numeric check gave ({mean:.3e}, {var:.6})"
        )));
    }
    let gaussian = matches!(xi_law.kind(), LawKind::Normal { .. });
    Ok(ProcessSpec {
        mean: MeanFn::Zero,
        basis: BasisKind::Sine,
        nu,
        xi: xi_law,
        gaussian,
    })
}

/// The law of the diffusion coefficient alpha^2, supported in [lo, hi] with
/// lo > 0. A degenerate lo = hi point mass is allowed for collapse tests.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    law: Option<ScalarDensity>,
    lo: f64,
    hi: f64,
}

impl DiffusionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::InvalidModel(format!(
                "diffusion support needs 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if hi == lo {
            return Ok(Self { law: None, lo, hi });
        }
        Ok(Self {
            law: Some(ScalarDensity::uniform(lo, hi)?),
            lo,
            hi,
        })
    }

    /// Wrap an arbitrary compactly supported law with lo > 0.
    pub fn from_law(law: ScalarDensity) -> Result<Self> {
        match law.support() {
            crate::law::Support::Compact { lo, hi } if lo > 0.0 => {
                law.check_normalized()?;
                Ok(Self {
                    law: Some(law),
                    lo,
                    hi,
                })
            }
            s => Err(Error::InvalidModel(format!(
                "diffusion law must have compact support inside (0, inf), got {s:?}"
            ))),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_point_mass(&self) -> bool {
        self.law.is_none()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(
            self.law.as_ref().map(|l| l.kind()),
            Some(LawKind::Uniform { .. })
        ) || self.is_point_mass()
    }

    pub fn density(&self, a: f64) -> f64 {
        match &self.law {
            Some(l) => l.evaluate(a),
            None => 0.0,
        }
    }

    pub fn law(&self) -> Option<&ScalarDensity> {
        self.law.as_ref()
    }
}

/// Joint law of the first N sine coefficients.
#[derive(Debug, Clone)]
pub enum CoeffModel {
    Independent { marginals: Vec<ScalarDensity> },
    JointGaussian { mu: DVector<f64>, sigma: DMatrix<f64> },
}

impl CoeffModel {
    pub fn n(&self) -> usize {
        match self {
            CoeffModel::Independent { marginals } => marginals.len(),
            CoeffModel::JointGaussian { mu, .. } => mu.len(),
        }
    }

    /// Admit a joint-Gaussian model, symmetrizing and clipping eigenvalues in
    /// [-1e-12*scale, 0) to zero; anything more negative is rejected.
    pub fn joint_gaussian(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::InvalidModel("covariance shape mismatch".into()));
        }
        let sym = 0.5 * (&sigma + sigma.transpose());
        let eig = sym.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let scale = max_ev.max(1e-300);
        let min_ev = eig.eigenvalues.min();
        if min_ev < -1e-12 * scale {
            return Err(Error::InvalidModel(format!(
                "covariance is not positive semidefinite (min eigenvalue {min_ev:.3e})"
            )));
        }
        let sigma = if min_ev < 0.0 {
            let clipped = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(0.0)));
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
        } else {
            sym
        };
        Ok(CoeffModel::JointGaussian { mu, sigma })
    }
}

/// E[A_n] = 2 int_0^1 E[phi(y)] sin(n pi y) dy.
pub fn fourier_coeff_mean(process: &ProcessSpec, n: usize) -> Result<f64> {
    assert!(n >= 1);
    match process.mean() {
        MeanFn::Zero => Ok(0.0),
        MeanFn::Custom(f) => Ok(2.0 * sine_hat(|y| f(y), n, sine_order(n))?),
    }
}

/// Cov[A_n, A_m] = 4 int int Cov[phi(y), phi(z)] sin(n pi y) sin(m pi z) dy dz.
///
/// Registered analytic kernels (bridge, motion) go through tensor quadrature
/// split along the diagonal, where min{y,z}-type kernels are only C^0; other
/// sine-basis processes use the expansion closed form, which is exact.
pub fn fourier_coeff_cov(process: &ProcessSpec, n: usize, m: usize) -> Result<f64> {
    assert!(n >= 1 && m >= 1);
    if let Some(kernel) = process.analytic_kernel() {
        return kernel_cov_quadrature(kernel, n, m);
    }
    match process.basis() {
        BasisKind::Sine => {
            // phi_hat_j(n) = (sqrt2/2) delta_{jn}: one surviving term.
            if n == m {
                Ok(2.0 * process.nu(n))
            } else {
                Ok(0.0)
            }
        }
        BasisKind::ShiftedSine => Err(Error::InvalidModel(
            "no registered covariance kernel for this shifted-basis process".into(),
        )),
    }
}

/// Tensor quadrature of 4 * k(y,z) sin(n pi y) sin(m pi z) over the unit
/// square, split into the triangles z < y and z > y. With k symmetric the two
/// triangles fold into one integral of k(y,z)*[s_n(y)s_m(z) + s_n(z)s_m(y)].
fn kernel_cov_quadrature(kernel: fn(f64, f64) -> f64, n: usize, m: usize) -> Result<f64> {
    const ORDER: usize = 128;
    let rule = quad::gauss_legendre(ORDER)?;
    let (nf, mf) = (n as f64, m as f64);
    let mut total = 0.0;
    for (&ty, &wy) in rule.nodes.iter().zip(&rule.weights) {
        let y = 0.5 * (ty + 1.0);
        let half_y = 0.5 * y;
        let mut inner = 0.0;
        for (&tz, &wz) in rule.nodes.iter().zip(&rule.weights) {
            let z = half_y * (tz + 1.0);
            let k = kernel(y, z);
            inner += wz * k * (sin_pi(nf * y) * sin_pi(mf * z) + sin_pi(nf * z) * sin_pi(mf * y));
        }
        total += wy * inner * half_y;
    }
    // outer map [−1,1] → [0,1] contributes 1/2
    Ok(4.0 * total * 0.5)
}

/// Joint law of (A_1,...,A_N).
///
/// Sine-basis processes give independent marginals: A_n = sqrt(2 nu_n) xi_n by
/// the change of variables on the xi law. Other Gaussian processes assemble
/// the joint-Gaussian form from the mean/covariance integrals.
pub fn build_coeff_model(process: &ProcessSpec, n_coeffs: usize) -> Result<CoeffModel> {
    assert!(n_coeffs >= 1);
    match process.basis() {
        BasisKind::Sine => {
            let mut marginals = Vec::with_capacity(n_coeffs);
            for n in 1..=n_coeffs {
                let nu = process.nu(n);
                if nu <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "coefficient A_{n} is degenerate: nu_{n} = {nu}"
                    )));
                }
                marginals.push(process.xi_law().scaled(SQRT_2 * nu.sqrt())?);
            }
            if !process.mean().is_zero() {
                return Err(Error::InvalidModel(
                    "independent-marginal form requires a zero mean function".into(),
                ));
            }
            Ok(CoeffModel::Independent { marginals })
        }
        BasisKind::ShiftedSine => {
            if !process.is_gaussian() {
                return Err(Error::InvalidModel(
                    "joint coefficient law is only available for Gaussian processes".into(),
                ));
            }
            let mu = DVector::from_iterator(
                n_coeffs,
                (1..=n_coeffs)
                    .map(|n| fourier_coeff_mean(process, n))
                    .collect::<Result<Vec<_>>>()?,
            );
            let mut sigma = DMatrix::zeros(n_coeffs, n_coeffs);
            for i in 0..n_coeffs {
                for j in i..n_coeffs {
                    let c = fourier_coeff_cov(process, i + 1, j + 1)?;
                    sigma[(i, j)] = c;
                    sigma[(j, i)] = c;
                }
            }
            CoeffModel::joint_gaussian(mu, sigma)
        }
    }
}

/// Joint-Gaussian coefficient law for any Gaussian process, assembled from
/// the mean/covariance integrals. For sine-basis processes this produces the
/// diagonal counterpart of the independent form.
pub fn build_joint_coeff_model(process: &ProcessSpec, n_coeffs: usize) -> Result<CoeffModel> {
    assert!(n_coeffs >= 1);
    if !process.is_gaussian() {
        return Err(Error::InvalidModel(
            "joint coefficient law is only available for Gaussian processes".into(),
        ));
    }
    let mu = DVector::from_iterator(
        n_coeffs,
        (1..=n_coeffs)
            .map(|n| fourier_coeff_mean(process, n))
            .collect::<Result<Vec<_>>>()?,
    );
    let mut sigma = DMatrix::zeros(n_coeffs, n_coeffs);
    for i in 0..n_coeffs {
        for j in i..n_coeffs {
            let c = fourier_coeff_cov(process, i + 1, j + 1)?;
            sigma[(i, j)] = c;
            sigma[(j, i)] = c;
        }
    }
    CoeffModel::joint_gaussian(mu, sigma)
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo, hi)
}

/// Conditional mean and covariance of the leading block of a Gaussian vector
/// given the tail: mu_bar = mu_1 + S12 S22^-1 (a - mu_2),
/// Sigma_bar = S11 - S12 S22^-1 S21.
pub fn gaussian_conditional_params(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    head_dim: usize,
    tail_value: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mu.len();
    assert!(head_dim >= 1 && head_dim < n, "head block must be a proper split");
    assert_eq!(sigma.nrows(), n);
    assert_eq!(tail_value.len(), n - d(head_dim, n));
    let d2 = n - head_dim;

    let s11 = sigma.view((0, 0), (head_dim, head_dim)).into_owned();
    let s12 = sigma.view((0, head_dim), (head_dim, d2)).into_owned();
    let s22 = sigma.view((head_dim, head_dim), (d2, d2)).into_owned();

    let (min_ev, max_ev) = symmetric_extremes(&s22);
    let cond = if min_ev > 0.0 {
        max_ev / min_ev
    } else {
        f64::INFINITY
    };
    if !(min_ev > 0.0) || cond >= 1e12 {
        return Err(Error::Degenerate {
            what: "tail covariance block Sigma_22".into(),
            cond,
        });
    }

    let chol = nalgebra::Cholesky::new(s22).ok_or(Error::Degenerate {
        what: "tail covariance block Sigma_22".into(),
        cond,
    })?;
    // W = S22^-1 S21
    let w = chol.solve(&s12.transpose());
    let mu1 = mu.rows(0, head_dim).into_owned();
    let mu2 = mu.rows(head_dim, d2).into_owned();
    let cond_mean = &mu1 + &s12 * chol.solve(&(tail_value - &mu2));
    let cond_cov = &s11 - &s12 * &w;

    let (bar_min, _) = symmetric_extremes(&cond_cov);
    let scale = s11.diagonal().amax().max(1e-300);
    if bar_min <= 1e-12 * scale {
        return Err(Error::Degenerate {
            what: "conditional variance".into(),
            cond: bar_min / scale,
        });
    }
    Ok((cond_mean, cond_cov))
}

// tail_value length helper kept separate to make the assert above readable
fn d(head_dim: usize, n: usize) -> usize {
    debug_assert!(head_dim < n);
    head_dim
}

/// First diagonal entry of Sigma^-1 via the block identity
/// (S11 - sigma^T S_(2)^-1 sigma)^-1, which avoids forming the full inverse.
pub fn sigma_inv_11(sigma: &DMatrix<f64>) -> Result<f64> {
    let n = sigma.nrows();
    assert!(n >= 1 && sigma.ncols() == n);
    let (min_ev, max_ev) = symmetric_extremes(sigma);
    if !(min_ev > 1e-12 * max_ev.max(1e-300)) {
        return Err(Error::SingularCovariance(format!(
            "det(Sigma_N)=0 within numerical precision (eigenvalue range [{min_ev:.3e}, {max_ev:.3e}])"
        )));
    }
    if n == 1 {
        return Ok(1.0 / sigma[(0, 0)]);
    }
    let minor = sigma.view((1, 1), (n - 1, n - 1)).into_owned();
    let col = sigma.view((1, 0), (n - 1, 1)).into_owned();
    let chol = nalgebra::Cholesky::new(minor).ok_or_else(|| {
        Error::SingularCovariance("trailing block of Sigma_N is not positive definite".into())
    })?;
    let w = chol.solve(&col);
    let s = sigma[(0, 0)] - (col.transpose() * w)[(0, 0)];
    if !(s > 0.0) {
        return Err(Error::SingularCovariance(
            "Schur complement of Sigma_N is not positive".into(),
        ));
    }
    Ok(1.0 / s)
}
