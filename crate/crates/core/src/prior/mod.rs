//! Convex regularisers, their proximal maps and Moreau-Yosida envelopes.

mod tv;

pub use tv::{divergence, gradient, prox_tv, tv, ProxReport, TvSolver, VectorField};

use crate::error::{invalid, Result};
use crate::grid::ImageGrid;

/// `sum_i |x_i|`.
pub fn l1(x: &ImageGrid) -> f64 {
    x.as_slice().iter().map(|v| v.abs()).sum()
}

/// Soft thresholding, the prox of `w ||.||_1`.
pub fn prox_l1(x: &ImageGrid, w: f64) -> Result<ImageGrid> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(invalid(format!("prox weight must be positive, got {w}")));
    }
    Ok(x.map(|v| v.signum() * (v.abs() - w).max(0.0)))
}

/// A convex, positively homogeneous regulariser `g`.
#[derive(Clone, Debug, PartialEq)]
pub enum Regulariser {
    TotalVariation(TvSolver),
    L1,
}

impl Default for Regulariser {
    fn default() -> Self {
        Regulariser::TotalVariation(TvSolver::default())
    }
}

impl Regulariser {
    pub fn value(&self, x: &ImageGrid) -> f64 {
        match self {
            Regulariser::TotalVariation(_) => tv(x),
            Regulariser::L1 => l1(x),
        }
    }

    /// `argmin_u w g(u) + ||x - u||^2 / 2`.
    pub fn prox(&self, x: &ImageGrid, w: f64) -> Result<ImageGrid> {
        match self {
            Regulariser::TotalVariation(s) => s.prox_report(x, w).map(|r| r.u),
            Regulariser::L1 => prox_l1(x, w),
        }
    }

    /// Degree `alpha` with `g(t x) = t^alpha g(x)`.
    pub fn homogeneity(&self) -> f64 {
        1.0
    }
}

/// Prior `exp(-theta g(x))` together with its envelope smoothing `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorDescriptor {
    pub theta: f64,
    pub lambda: f64,
    pub regulariser: Regulariser,
}

impl PriorDescriptor {
    pub fn new(theta: f64, lambda: f64, regulariser: Regulariser) -> Result<Self> {
        check_positive("theta", theta)?;
        check_positive("lambda", lambda)?;
        Ok(Self { theta, lambda, regulariser })
    }

    pub fn tv(theta: f64, lambda: f64) -> Result<Self> {
        Self::new(theta, lambda, Regulariser::default())
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(theta, self.lambda, self.regulariser.clone())
    }

    /// `theta g(x)`.
    pub fn potential(&self, x: &ImageGrid) -> f64 {
        self.theta * self.regulariser.value(x)
    }

    /// `prox_{theta lambda g}(x)`.
    pub fn prox(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.regulariser.prox(x, self.theta * self.lambda)
    }

    /// Lipschitz constant `1/lambda` of the envelope gradient.
    pub fn lipschitz(&self) -> f64 {
        1.0 / self.lambda
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `min_u theta g(u) + ||x - u||^2 / (2 lambda)`.
pub fn my_envelope_value(x: &ImageGrid, prior: &PriorDescriptor) -> Result<f64> {
    let u = prior.prox(x)?;
    Ok(prior.potential(&u) + u.sub(x).norm_sq() / (2.0 * prior.lambda))
}

/// `(x - prox_{theta lambda g}(x)) / lambda`.
pub fn my_envelope_grad(x: &ImageGrid, prior: &PriorDescriptor) -> Result<ImageGrid> {
    let u = prior.prox(x)?;
    Ok(x.sub(&u).scaled(1.0 / prior.lambda))
}
