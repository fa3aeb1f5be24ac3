//! Scalar probability densities with the descriptors the quadrature engine
//! needs: support, tail class and moment hints.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Support descriptor of a scalar law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum Support {
    Compact { lo: f64, hi: f64 },
    RealLine,
    HalfLine,
}

/// Quadrature affinity of the tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TailClass {
    Gaussian,
    Compact,
    Heavy,
}

/// A user-supplied density with explicit descriptors.
pub struct CustomLaw {
    pub pdf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub support: Support,
    pub tail: TailClass,
    pub moments: Option<(f64, f64)>,
}

#[derive(Clone)]
pub enum LawKind {
    /// Gaussian with the given mean and standard deviation.
    Normal { mean: f64, sd: f64 },
    /// Uniform on [lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// sqrt(2)/(pi*(1+(x/scale)^4))/scale; zero mean, variance scale^2.
    QuarticTail { scale: f64 },
    Custom(Arc<CustomLaw>),
}

/// A one-dimensional probability density.
#[derive(Clone)]
pub struct ScalarDensity {
    kind: LawKind,
}

impl fmt::Debug for ScalarDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Normal { mean, sd } => write!(f, "Normal(mean={mean}, sd={sd})"),
            LawKind::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            LawKind::QuarticTail { scale } => write!(f, "QuarticTail(scale={scale})"),
            LawKind::Custom(c) => write!(f, "Custom(support={:?})", c.support),
        }
    }
}

impl ScalarDensity {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidModel(format!(
                "normal law needs finite mean and sd > 0, got ({mean}, {sd})"
            )));
        }
        Ok(Self {
            kind: LawKind::Normal { mean, sd },
        })
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0).unwrap()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidModel(format!(
                "uniform law needs lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self {
            kind: LawKind::Uniform { lo, hi },
        })
    }

    /// Uniform on (-sqrt(3), sqrt(3)): zero mean, unit variance.
    pub fn uniform_unit() -> Self {
        let s = 3.0f64.sqrt();
        Self::uniform(-s, s).unwrap()
    }

    /// The quartic-tail law sqrt(2)/(pi*(1+x^4)), scaled by `scale`.
    pub fn quartic_tail(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidModel(format!(
                "quartic-tail law needs scale > 0, got {scale}"
            )));
        }
        Ok(Self {
            kind: LawKind::QuarticTail { scale },
        })
    }

    pub fn custom(law: CustomLaw) -> Self {
        Self {
            kind: LawKind::Custom(Arc::new(law)),
        }
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    /// Density value at `u`; zero outside a compact support.
    pub fn evaluate(&self, u: f64) -> f64 {
        match &self.kind {
            LawKind::Normal { mean, sd } => {
                let z = (u - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            LawKind::Uniform { lo, hi } => {
                if u >= *lo && u <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            LawKind::QuarticTail { scale } => {
                let z = u / scale;
                std::f64::consts::SQRT_2 / (std::f64::consts::PI * (1.0 + z.powi(4))) / scale
            }
            LawKind::Custom(c) => match c.support {
                Support::Compact { lo, hi } if u < lo || u > hi => 0.0,
                _ => (c.pdf)(u),
            },
        }
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            LawKind::Normal { .. } => Support::RealLine,
            LawKind::Uniform { lo, hi } => Support::Compact { lo: *lo, hi: *hi },
            LawKind::QuarticTail { .. } => Support::RealLine,
            LawKind::Custom(c) => c.support,
        }
    }

    pub fn tail_class(&self) -> TailClass {
        match &self.kind {
            LawKind::Normal { .. } => TailClass::Gaussian,
            LawKind::Uniform { .. } => TailClass::Compact,
            LawKind::QuarticTail { .. } => TailClass::Heavy,
            LawKind::Custom(c) => c.tail,
        }
    }

    /// (mean, variance) when known analytically or supplied by the caller.
    pub fn moments_hint(&self) -> Option<(f64, f64)> {
        match &self.kind {
            LawKind::Normal { mean, sd } => Some((*mean, sd * sd)),
            LawKind::Uniform { lo, hi } => {
                let m = 0.5 * (lo + hi);
                Some((m, (hi - lo) * (hi - lo) / 12.0))
            }
            LawKind::QuarticTail { scale } => Some((0.0, scale * scale)),
            LawKind::Custom(c) => c.moments,
        }
    }

    /// Whether the density is Lipschitz on the whole line, when decidable
    /// from the family alone.
    pub fn is_lipschitz(&self) -> Option<bool> {
        match &self.kind {
            LawKind::Normal { .. } => Some(true),
            LawKind::QuarticTail { .. } => Some(true),
            LawKind::Uniform { .. } => Some(false),
            LawKind::Custom(_) => None,
        }
    }

    /// Law of c*X for c != 0.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidModel(format!(
                "scaling constant must be finite and nonzero, got {c}"
            )));
        }
        Ok(match &self.kind {
            LawKind::Normal { mean, sd } => Self {
                kind: LawKind::Normal {
                    mean: mean * c,
                    sd: sd * c.abs(),
                },
            },
            LawKind::Uniform { lo, hi } => {
                let (a, b) = (lo * c, hi * c);
                Self {
                    kind: LawKind::Uniform {
                        lo: a.min(b),
                        hi: a.max(b),
                    },
                }
            }
            LawKind::QuarticTail { scale } => Self {
                kind: LawKind::QuarticTail {
                    scale: scale * c.abs(),
                },
            },
            LawKind::Custom(base) => {
                let inner = base.clone();
                let support = match inner.support {
                    Support::Compact { lo, hi } => {
                        let (a, b) = (lo * c, hi * c);
                        Support::Compact {
                            lo: a.min(b),
                            hi: a.max(b),
                        }
                    }
                    s => s,
                };
                let moments = inner.moments.map(|(m, v)| (m * c, v * c * c));
                let tail = inner.tail;
                Self::custom(CustomLaw {
                    pdf: Box::new(move |u| (inner.pdf)(u / c) / c.abs()),
                    support,
                    tail,
                    moments,
                })
            }
        })
    }

    /// Numeric (mass, mean, variance) under the reference quadrature for the
    /// law's tail class: Gauss-Legendre on compact supports, the tangent
    /// substitution elsewhere.
    pub fn numeric_moments(&self) -> Result<(f64, f64, f64)> {
        let (mass, m1, m2) = match self.support() {
            Support::Compact { lo, hi } => {
                let mass = quad::integrate_legendre(512, lo, hi, |u| self.evaluate(u))?;
                let m1 = quad::integrate_legendre(512, lo, hi, |u| u * self.evaluate(u))?;
                let m2 = quad::integrate_legendre(512, lo, hi, |u| u * u * self.evaluate(u))?;
                (mass, m1, m2)
            }
            _ => {
                let scale = self
                    .moments_hint()
                    .map(|(_, v)| v.sqrt().max(1e-6))
                    .unwrap_or(1.0);
                let mass = quad::integrate_tan(1024, scale, |u| self.evaluate(u))?;
                let m1 = quad::integrate_tan(1024, scale, |u| u * self.evaluate(u))?;
                let m2 = quad::integrate_tan(1024, scale, |u| u * u * self.evaluate(u))?;
                (mass, m1, m2)
            }
        };
        let mean = m1 / mass;
        let var = m2 / mass - mean * mean;
        Ok((mass, mean, var))
    }

    /// Check the unit-mass invariant under the reference quadrature.
    pub fn check_normalized(&self) -> Result<()> {
        let (mass, _, _) = self.numeric_moments()?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidModel(format!(
                "density mass {mass} deviates from 1 by more than 1e-6"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quartic_tail_is_normalized_with_unit_variance() {
        let law = ScalarDensity::quartic_tail(1.0).unwrap();
        let (mass, mean, var) = law.numeric_moments().unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn uniform_unit_has_zero_mean_unit_variance() {
        let law = ScalarDensity::uniform_unit();
        let (mass, mean, var) = law.numeric_moments().unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn normal_moments_match() {
        let law = ScalarDensity::normal(0.5, 2.0).unwrap();
        let (mass, mean, var) = law.numeric_moments().unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(var, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn scaled_law_matches_change_of_variables() {
        let base = ScalarDensity::quartic_tail(1.0).unwrap();
        let scaled = base.scaled(std::f64::consts::SQRT_2).unwrap();
        // f_{cX}(a) = f_X(a/c)/c
        let a = 0.37;
        let c = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(scaled.evaluate(a), base.evaluate(a / c) / c, epsilon = 1e-15);
        assert_abs_diff_eq!(scaled.moments_hint().unwrap().1, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_zero_outside_compact_support() {
        let law = ScalarDensity::uniform(-1.0, 1.0).unwrap();
        assert_eq!(law.evaluate(1.5), 0.0);
        assert_eq!(law.evaluate(-1.0000001), 0.0);
        assert_abs_diff_eq!(law.evaluate(0.3), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn invalid_constructions_rejected() {
        assert!(ScalarDensity::normal(0.0, 0.0).is_err());
        assert!(ScalarDensity::uniform(1.0, 1.0).is_err());
        assert!(ScalarDensity::quartic_tail(-1.0).is_err());
        assert!(ScalarDensity::standard_normal().scaled(0.0).is_err());
    }
}
