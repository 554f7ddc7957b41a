use super::operator::{multiply, LinearForwardOperator, OperatorKind};
use crate::error::{invalid, Result};
use crate::grid::{ComplexSpectrum, ImageGrid, NoiseSource};
use rustfft::num_complex::Complex64;

/// Noisy data `y = A x + e`, `e ~ N(0, sigma2 I)` on observed components.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: ImageGrid,
    pub sigma2: f64,
    pub snr_db: f64,
}

/// Draws `y = A x + e` with `sigma2 = Var(A x) / 10^(snr_db / 10)`, the
/// variance taken over observed components (blurred-signal SNR).
pub fn simulate_observation(
    x: &ImageGrid,
    op: &LinearForwardOperator,
    snr_db: f64,
    noise: &mut NoiseSource,
) -> Result<Observation> {
    if !snr_db.is_finite() {
        return Err(invalid(format!("SNR must be finite, got {snr_db}")));
    }
    if !x.is_finite() {
        return Err(invalid("image has non-finite entries"));
    }
    let ax = op.apply(x)?;
    let observed: Vec<f64> =
        ax.as_slice().iter().enumerate().filter(|(i, _)| op.is_observed(*i)).map(|(_, &v)| v).collect();
    let m = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / m;
    let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    if !(var > 0.0) {
        return Err(invalid("observed signal has zero variance; SNR undefined"));
    }
    let sigma2 = var / 10f64.powf(snr_db / 10.0);
    let sigma = sigma2.sqrt();
    let eps = noise.standard_normal_field(x.rows(), x.cols());
    let mut y = ax;
    for (i, (v, e)) in y.as_mut_slice().iter_mut().zip(eps.as_slice()).enumerate() {
        if op.is_observed(i) {
            *v += sigma * e;
        } else {
            *v = 0.0;
        }
    }
    Ok(Observation { y, sigma2, snr_db })
}

/// Gaussian likelihood `f_y(x) = ||y - A x||^2 / (2 sigma2)` together with the
/// Gaussian conditional `p(x | y, z, rho2)` of the split model.
///
/// Blur operators are handled diagonally in the Fourier domain, inpainting
/// pixel by pixel.
#[derive(Clone, Debug)]
pub struct GaussianLikelihood {
    op: LinearForwardOperator,
    obs: Observation,
    aty: ImageGrid,
    aty_hat: Option<ComplexSpectrum>,
}

impl GaussianLikelihood {
    pub fn new(op: LinearForwardOperator, obs: Observation) -> Result<Self> {
        if !(obs.sigma2 > 0.0) {
            return Err(invalid(format!("sigma2 must be positive, got {}", obs.sigma2)));
        }
        let aty = op.adjoint(&obs.y)?;
        let aty_hat = match op.fft() {
            Some(fft) => Some(fft.forward(&aty)?),
            None => None,
        };
        Ok(Self { op, obs, aty, aty_hat })
    }

    pub fn operator(&self) -> &LinearForwardOperator {
        &self.op
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn sigma2(&self) -> f64 {
        self.obs.sigma2
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// `A^T y`, the default chain initialisation.
    pub fn adjoint_data(&self) -> &ImageGrid {
        &self.aty
    }

    /// Lipschitz constant of the likelihood gradient, `||A||^2 / sigma2`.
    pub fn lipschitz(&self) -> f64 {
        self.op.norm_sq() / self.obs.sigma2
    }

    pub fn value(&self, x: &ImageGrid) -> Result<f64> {
        let r = self.op.apply(x)?;
        let mut acc = 0.0;
        for (i, (a, b)) in r.as_slice().iter().zip(self.obs.y.as_slice()).enumerate() {
            if self.op.is_observed(i) {
                acc += (a - b) * (a - b);
            }
        }
        Ok(acc / (2.0 * self.obs.sigma2))
    }

    /// `A^T (A x - y) / sigma2`.
    pub fn grad(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let mut r = self.op.apply(x)?;
        r.axpy(-1.0, &self.obs.y);
        let mut g = self.op.adjoint(&r)?;
        g.scale(1.0 / self.obs.sigma2);
        Ok(g)
    }

    /// `E[x | y, z, rho2] = (A^T A / sigma2 + I / rho2)^{-1} (A^T y / sigma2 + z / rho2)`.
    pub fn conditional_mean(&self, z: &ImageGrid, rho2: f64) -> Result<ImageGrid> {
        check_rho2(rho2)?;
        match self.op.kind() {
            OperatorKind::CirculantBlur { .. } => {
                let aty_hat = self.aty_hat.as_ref().expect("blur caches A^T y");
                self.blur_solve(aty_hat, z, rho2)
            }
            OperatorKind::Inpainting { mask, .. } => Ok(self.pixel_solve(&self.obs.y, z, mask, rho2)),
        }
    }

    /// Exact draw from `p(x | y, z, rho2)` by perturbation-optimisation:
    /// perturb the data by `sigma * e1`, the latent by `rho * e2`, and solve
    /// for the conditional mean of the perturbed problem.
    pub fn conditional_sample(&self, z: &ImageGrid, rho2: f64, noise: &mut NoiseSource) -> Result<ImageGrid> {
        check_rho2(rho2)?;
        let (rows, cols) = self.op.shape();
        let e1 = noise.standard_normal_field(rows, cols);
        let e2 = noise.standard_normal_field(rows, cols);
        let sigma = self.obs.sigma2.sqrt();
        let mut z_t = z.clone();
        z_t.axpy(rho2.sqrt(), &e2);
        match self.op.kind() {
            OperatorKind::CirculantBlur { eigenvalues, .. } => {
                let fft = self.op.fft().expect("blur has a plan");
                let mut rhs = fft.forward(&e1)?;
                multiply(&mut rhs, eigenvalues, true);
                let aty_hat = self.aty_hat.as_ref().expect("blur caches A^T y");
                for (r, a) in rhs.as_mut_slice().iter_mut().zip(aty_hat.as_slice()) {
                    *r = *a + *r * sigma;
                }
                self.blur_solve(&rhs, &z_t, rho2)
            }
            OperatorKind::Inpainting { mask, .. } => {
                let mut y_t = self.obs.y.clone();
                y_t.axpy(sigma, &e1);
                Ok(self.pixel_solve(&y_t, &z_t, mask, rho2))
            }
        }
    }

    /// `tr(Q^{-1})` with `Q = A^T A / sigma2 + I / rho2`.
    pub fn conditional_trace_cov(&self, rho2: f64) -> Result<f64> {
        check_rho2(rho2)?;
        let s2 = self.obs.sigma2;
        Ok(match self.op.kind() {
            OperatorKind::CirculantBlur { eigenvalues, .. } => {
                eigenvalues.as_slice().iter().map(|e| 1.0 / (e.norm_sqr() / s2 + 1.0 / rho2)).sum()
            }
            OperatorKind::Inpainting { observed, .. } => {
                let d = self.dim();
                *observed as f64 / (1.0 / s2 + 1.0 / rho2) + (d - observed) as f64 * rho2
            }
        })
    }

    /// Solves `Q x = F^{-1}(aty_hat) / sigma2 + z / rho2` in the Fourier domain.
    fn blur_solve(&self, aty_hat: &ComplexSpectrum, z: &ImageGrid, rho2: f64) -> Result<ImageGrid> {
        let fft = self.op.fft().expect("blur has a plan");
        let eig = self.op.eigenvalues().expect("blur has eigenvalues");
        let (inv_s2, inv_r2) = (1.0 / self.obs.sigma2, 1.0 / rho2);
        let mut zh = fft.forward(z)?;
        for ((v, a), e) in zh.as_mut_slice().iter_mut().zip(aty_hat.as_slice()).zip(eig.as_slice()) {
            let num: Complex64 = *a * inv_s2 + *v * inv_r2;
            *v = num / (e.norm_sqr() * inv_s2 + inv_r2);
        }
        fft.inverse_into_real(zh)
    }

    fn pixel_solve(&self, y: &ImageGrid, z: &ImageGrid, mask: &[bool], rho2: f64) -> ImageGrid {
        let (inv_s2, inv_r2) = (1.0 / self.obs.sigma2, 1.0 / rho2);
        let denom = inv_s2 + inv_r2;
        let data = z
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .zip(mask)
            .map(|((&zi, &yi), &m)| if m { (yi * inv_s2 + zi * inv_r2) / denom } else { zi })
            .collect();
        ImageGrid::new(z.rows(), z.cols(), data).expect("same shape")
    }
}

fn check_rho2(rho2: f64) -> Result<()> {
    if rho2 > 0.0 && rho2.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("rho2 must be positive and finite, got {rho2}")))
    }
}
