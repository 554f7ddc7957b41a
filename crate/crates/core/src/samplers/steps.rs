use super::chebyshev::ChebyshevCoeffs;
use crate::error::{invalid, Error, Result};
use crate::forward::GaussianLikelihood;
use crate::grid::{ImageGrid, NoiseSource};
use crate::prior::{my_envelope_grad, PriorDescriptor};

/// Smoothed posterior `p^lambda(x | y, theta)` on image space.
#[derive(Clone, Copy, Debug)]
pub struct CanonicalModel<'a> {
    pub likelihood: &'a GaussianLikelihood,
    pub prior: &'a PriorDescriptor,
}

impl CanonicalModel<'_> {
    /// `-grad f(x) - (x - prox(x)) / lambda`.
    pub fn grad_log_density(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let mut g = self.likelihood.grad(x)?;
        g.axpy(1.0, &my_envelope_grad(x, self.prior)?);
        g.scale(-1.0);
        Ok(g)
    }
}

/// Split model with latent `z` coupled to `x` through `N(z; x, rho2 I)`.
#[derive(Clone, Copy, Debug)]
pub struct LatentModel<'a> {
    pub likelihood: &'a GaussianLikelihood,
    pub prior: &'a PriorDescriptor,
    pub rho2: f64,
}

impl<'a> LatentModel<'a> {
    pub fn new(likelihood: &'a GaussianLikelihood, prior: &'a PriorDescriptor, rho2: f64) -> Result<Self> {
        if !(rho2 > 0.0) || !rho2.is_finite() {
            return Err(invalid(format!("rho2 must be positive, got {rho2}")));
        }
        Ok(Self { likelihood, prior, rho2 })
    }

    /// Gradient of the latent potential together with the conditional mean it
    /// used: `(grad g^lambda(z) + (z - E[x|z]) / rho2, E[x|z])`.
    pub fn drift(&self, z: &ImageGrid) -> Result<(ImageGrid, ImageGrid)> {
        let mean = self.likelihood.conditional_mean(z, self.rho2)?;
        let mut d = my_envelope_grad(z, self.prior)?;
        d.axpy(1.0 / self.rho2, &z.sub(&mean));
        Ok((d, mean))
    }
}

/// Current position of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    /// Latent iterate, or the image itself for canonical kernels.
    pub z: ImageGrid,
    /// Conditional mean `E[x | y, z]` from the last step (latent kernels).
    pub x_grad: Option<ImageGrid>,
    /// Exact conditional draw from the last step (split Gibbs).
    pub x_sample: Option<ImageGrid>,
    pub iter: u64,
}

impl ChainState {
    pub fn new(z: ImageGrid) -> Self {
        Self { z, x_grad: None, x_sample: None, iter: 0 }
    }

    /// The image-space quantity a chain contributes to estimators: the
    /// conditional mean if available, else the conditional draw, else `z`.
    pub fn estimate(&self) -> &ImageGrid {
        self.x_grad.as_ref().or(self.x_sample.as_ref()).unwrap_or(&self.z)
    }

    fn advance(&self, z: ImageGrid, x_grad: Option<ImageGrid>, x_sample: Option<ImageGrid>) -> Self {
        Self { z, x_grad, x_sample, iter: self.iter + 1 }
    }
}

fn finite(g: ImageGrid, what: &str) -> Result<ImageGrid> {
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("step size must be positive, got {delta}")))
    }
}

/// One unadjusted Langevin step `x + delta grad(x) + sqrt(2 delta) xi`.
pub fn myula_step<G>(x: &ImageGrid, mut grad_log: G, delta: f64, noise: &mut NoiseSource) -> Result<ImageGrid>
where
    G: FnMut(&ImageGrid) -> Result<ImageGrid>,
{
    check_delta(delta)?;
    let g = finite(grad_log(x)?, "gradient")?;
    let xi = noise.standard_normal_field(x.rows(), x.cols());
    let mut out = x.clone();
    out.axpy(delta, &g);
    out.axpy((2.0 * delta).sqrt(), &xi);
    Ok(out)
}

/// Noise coefficient of the first SK-ROCK stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FirstStageNoise {
    /// `k1 xi`.
    #[default]
    Linear,
    /// `k1^2 xi`, kept for comparison with the literal latent-space listing.
    Squared,
}

/// One SK-ROCK step; evaluates `grad_log` exactly `coeffs.s` times.
pub fn skrock_step<G>(
    x: &ImageGrid,
    grad_log: G,
    coeffs: &ChebyshevCoeffs,
    delta: f64,
    noise: &mut NoiseSource,
) -> Result<ImageGrid>
where
    G: FnMut(&ImageGrid) -> Result<ImageGrid>,
{
    skrock_core(x, grad_log, coeffs, delta, noise, FirstStageNoise::Linear)
}

fn skrock_core<G>(
    x: &ImageGrid,
    mut grad_log: G,
    c: &ChebyshevCoeffs,
    delta: f64,
    noise: &mut NoiseSource,
    first: FirstStageNoise,
) -> Result<ImageGrid>
where
    G: FnMut(&ImageGrid) -> Result<ImageGrid>,
{
    check_delta(delta)?;
    let mut xi = noise.standard_normal_field(x.rows(), x.cols());
    xi.scale((2.0 * delta).sqrt());

    let mut probe = x.clone();
    probe.axpy(c.nu1, &xi);
    let g = finite(grad_log(&probe)?, "gradient at stage 1")?;
    let k1 = match first {
        FirstStageNoise::Linear => c.k1,
        FirstStageNoise::Squared => c.k1 * c.k1,
    };
    let mut prev = x.clone();
    let mut cur = x.clone();
    cur.axpy(c.mu1 * delta, &g);
    cur.axpy(k1, &xi);

    for j in 2..=c.s {
        let (mu, nu, k) = c.stage(j);
        let g = finite(grad_log(&cur)?, &format!("gradient at stage {j}"))?;
        let cur_s = cur.as_slice();
        let g_s = g.as_slice();
        for (i, p) in prev.as_mut_slice().iter_mut().enumerate() {
            *p = mu * delta * g_s[i] + nu * cur_s[i] + k * *p;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(cur)
}

/// Split Gibbs: exact `X ~ p(x | y, Z)` then a Langevin move of `Z`.
///
/// `cond_noise` drives the conditional draw and `noise` the latent move, so
/// pinning `cond_noise` reduces this to [`ls_myula_step`].
pub fn sgs_step(
    state: &ChainState,
    model: &LatentModel,
    delta: f64,
    noise: &mut NoiseSource,
    cond_noise: &mut NoiseSource,
) -> Result<ChainState> {
    check_delta(delta)?;
    let x = model.likelihood.conditional_sample(&state.z, model.rho2, cond_noise)?;
    let z = latent_move(&state.z, &x, model, delta, noise)?;
    Ok(state.advance(z, None, Some(x)))
}

/// Latent-space MYULA: the split Gibbs update with the conditional mean in
/// place of the draw.
pub fn ls_myula_step(
    state: &ChainState,
    model: &LatentModel,
    delta: f64,
    noise: &mut NoiseSource,
) -> Result<ChainState> {
    check_delta(delta)?;
    let mean = model.likelihood.conditional_mean(&state.z, model.rho2)?;
    let z = latent_move(&state.z, &mean, model, delta, noise)?;
    Ok(state.advance(z, Some(mean), None))
}

fn latent_move(
    z: &ImageGrid,
    x: &ImageGrid,
    model: &LatentModel,
    delta: f64,
    noise: &mut NoiseSource,
) -> Result<ImageGrid> {
    let env = finite(my_envelope_grad(z, model.prior)?, "envelope gradient")?;
    let xi = noise.standard_normal_field(z.rows(), z.cols());
    let a = delta / model.rho2;
    let b = (2.0 * delta).sqrt();
    let (zs, xs, es, ns) = (z.as_slice(), x.as_slice(), env.as_slice(), xi.as_slice());
    let data = (0..zs.len()).map(|i| zs[i] - delta * es[i] - a * (zs[i] - xs[i]) + b * ns[i]).collect();
    ImageGrid::new(z.rows(), z.cols(), data)?.ensure_finite("latent iterate")
}

/// Latent-space SK-ROCK; the returned state carries the conditional mean of
/// the last stage.
pub fn ls_skrock_step(
    state: &ChainState,
    model: &LatentModel,
    coeffs: &ChebyshevCoeffs,
    delta: f64,
    noise: &mut NoiseSource,
    first: FirstStageNoise,
) -> Result<ChainState> {
    let mut last_mean = None;
    let z = skrock_core(
        &state.z,
        |z| {
            let (mut d, mean) = model.drift(z)?;
            last_mean = Some(mean);
            d.scale(-1.0);
            Ok(d)
        },
        coeffs,
        delta,
        noise,
        first,
    )?;
    Ok(state.advance(z, last_mean, None))
}
