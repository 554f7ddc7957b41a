//! Langevin kernels on image space and on the latent space of the split model.

mod chebyshev;
mod steps;

pub use chebyshev::{chebyshev_coeffs, chebyshev_t, ChebyshevCoeffs, DEFAULT_ETA};
pub use steps::{
    ls_myula_step, ls_skrock_step, myula_step, sgs_step, skrock_step, CanonicalModel, ChainState,
    FirstStageNoise, LatentModel,
};

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{invalid, Error, Result};
use crate::forward::GaussianLikelihood;
use crate::grid::NoiseSource;
use crate::prior::PriorDescriptor;

/// Lipschitz constants of the canonical and latent drifts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzInfo {
    pub l_f: f64,
    /// `1/lambda + L_f`.
    pub l: f64,
    /// `1/lambda + 1/(rho2 + 1/L_f)`.
    pub l_a: f64,
}

impl LipschitzInfo {
    pub fn new(l_f: f64, lambda: f64, rho2: f64) -> Result<Self> {
        if !(l_f >= 0.0) || !(lambda > 0.0) || !(rho2 > 0.0) {
            return Err(invalid(format!(
                "Lipschitz inputs must be positive (L_f {l_f}, lambda {lambda}, rho2 {rho2})"
            )));
        }
        Ok(Self { l_f, l: 1.0 / lambda + l_f, l_a: 1.0 / lambda + 1.0 / (rho2 + 1.0 / l_f) })
    }
}

pub fn stepsize_myula(l: f64) -> Result<f64> {
    if l > 0.0 && l.is_finite() {
        Ok(1.0 / l)
    } else {
        Err(invalid(format!("Lipschitz constant must be positive, got {l}")))
    }
}

/// `frac * l_s / lip`.
pub fn stepsize_skrock(coeffs: &ChebyshevCoeffs, lip: f64, frac: f64) -> Result<f64> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(invalid(format!("step fraction must lie in (0, 1], got {frac}")));
    }
    Ok(frac * coeffs.l_s * stepsize_myula(lip)?)
}

/// A Markov kernel advancing a [`ChainState`] in place.
pub trait Kernel {
    fn step(&mut self, state: &mut ChainState) -> Result<()>;
    /// Gradient (or conditional-mean) evaluations per step.
    fn grad_evals_per_step(&self) -> u64;
    fn delta(&self) -> f64;
}

/// The five available samplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Myula,
    Skrock,
    Sgs,
    LsMyula,
    LsSkrock,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::Myula,
        SamplerKind::Skrock,
        SamplerKind::Sgs,
        SamplerKind::LsMyula,
        SamplerKind::LsSkrock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Myula => "myula",
            SamplerKind::Skrock => "skrock",
            SamplerKind::Sgs => "sgs",
            SamplerKind::LsMyula => "ls-myula",
            SamplerKind::LsSkrock => "ls-skrock",
        }
    }

    pub fn is_latent(self) -> bool {
        matches!(self, SamplerKind::Sgs | SamplerKind::LsMyula | SamplerKind::LsSkrock)
    }

    pub fn is_skrock(self) -> bool {
        matches!(self, SamplerKind::Skrock | SamplerKind::LsSkrock)
    }

    /// Step size for this sampler: `1/L` or `1/L_a` for the single-gradient
    /// kernels, `frac l_s / L` or `frac l_s / L_a` for the Chebyshev ones.
    pub fn step_size(self, lip: &LipschitzInfo, coeffs: Option<&ChebyshevCoeffs>, frac: f64) -> Result<f64> {
        let l = if self.is_latent() { lip.l_a } else { lip.l };
        if self.is_skrock() {
            let c = coeffs.ok_or_else(|| invalid("SK-ROCK samplers need Chebyshev coefficients"))?;
            stepsize_skrock(c, l, frac)
        } else {
            stepsize_myula(l)
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown sampler `{s}`")))
    }
}

/// Settings shared by every sampler build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSettings {
    pub kind: SamplerKind,
    pub stages: usize,
    pub eta: f64,
    pub delta_frac: f64,
    pub first_stage: FirstStageNoise,
    pub seed: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Myula,
            stages: 15,
            eta: DEFAULT_ETA,
            delta_frac: 1.0,
            first_stage: FirstStageNoise::Linear,
            seed: 0,
        }
    }
}

/// A ready-to-run sampler bound to a model.
pub struct Sampler<'a> {
    kind: SamplerKind,
    likelihood: &'a GaussianLikelihood,
    prior: &'a PriorDescriptor,
    rho2: f64,
    coeffs: Option<ChebyshevCoeffs>,
    first_stage: FirstStageNoise,
    delta: f64,
    noise: NoiseSource,
    cond_noise: NoiseSource,
}

impl<'a> Sampler<'a> {
    /// `rho2` is ignored by the canonical samplers apart from validation.
    pub fn new(
        settings: &SamplerSettings,
        likelihood: &'a GaussianLikelihood,
        prior: &'a PriorDescriptor,
        rho2: f64,
    ) -> Result<Self> {
        let lip = LipschitzInfo::new(likelihood.lipschitz(), prior.lambda, rho2)?;
        let coeffs = if settings.kind.is_skrock() {
            Some(chebyshev_coeffs(settings.stages, settings.eta)?)
        } else {
            None
        };
        let delta = settings.kind.step_size(&lip, coeffs.as_ref(), settings.delta_frac)?;
        let noise = NoiseSource::new(settings.seed, 0);
        Ok(Self {
            kind: settings.kind,
            likelihood,
            prior,
            rho2,
            coeffs,
            first_stage: settings.first_stage,
            delta,
            cond_noise: noise.fork(1),
            noise,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn coeffs(&self) -> Option<&ChebyshevCoeffs> {
        self.coeffs.as_ref()
    }

    /// Overrides the step size.
    pub fn set_delta(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(invalid(format!("step size must be positive, got {delta}")));
        }
        self.delta = delta;
        Ok(())
    }
}

impl Kernel for Sampler<'_> {
    fn step(&mut self, state: &mut ChainState) -> Result<()> {
        let canon = CanonicalModel { likelihood: self.likelihood, prior: self.prior };
        let latent = || LatentModel::new(self.likelihood, self.prior, self.rho2);
        let next = match self.kind {
            SamplerKind::Myula => {
                let z = myula_step(&state.z, |x| canon.grad_log_density(x), self.delta, &mut self.noise)?;
                ChainState { z, x_grad: None, x_sample: None, iter: state.iter + 1 }
            }
            SamplerKind::Skrock => {
                let c = self.coeffs.as_ref().expect("built with coefficients");
                let z = skrock_step(&state.z, |x| canon.grad_log_density(x), c, self.delta, &mut self.noise)?;
                ChainState { z, x_grad: None, x_sample: None, iter: state.iter + 1 }
            }
            SamplerKind::Sgs => {
                sgs_step(state, &latent()?, self.delta, &mut self.noise, &mut self.cond_noise)?
            }
            SamplerKind::LsMyula => ls_myula_step(state, &latent()?, self.delta, &mut self.noise)?,
            SamplerKind::LsSkrock => {
                let c = self.coeffs.as_ref().expect("built with coefficients");
                ls_skrock_step(state, &latent()?, c, self.delta, &mut self.noise, self.first_stage)?
            }
        };
        *state = next;
        Ok(())
    }

    fn grad_evals_per_step(&self) -> u64 {
        self.coeffs.as_ref().map_or(1, |c| c.s as u64)
    }

    fn delta(&self) -> f64 {
        self.delta
    }
}

/// Receives retained chain states.
pub trait Observer {
    fn observe(&mut self, state: &ChainState) -> Result<()>;
}

impl<F: FnMut(&ChainState) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &ChainState) -> Result<()> {
        self(state)
    }
}

/// Length, burn-in and thinning of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub n_iters: u64,
    pub burn_in: u64,
    pub thinning: u64,
}

impl ChainConfig {
    /// Whether iteration `i` (1-based) is passed to observers.
    pub fn retains(&self, i: u64) -> bool {
        i > self.burn_in && (i - self.burn_in - 1).is_multiple_of(self.thinning)
    }
}

#[derive(Clone, Debug)]
pub struct ChainSummary {
    pub state: ChainState,
    pub retained: u64,
    pub grad_evals: u64,
    pub elapsed: Duration,
}

/// Runs `kernel` for `cfg.n_iters` steps from `init`, handing every retained
/// state to each observer in turn.
pub fn run_chain(
    kernel: &mut dyn Kernel,
    init: ChainState,
    cfg: &ChainConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<ChainSummary> {
    if cfg.n_iters <= cfg.burn_in {
        return Err(invalid(format!("chain length {} must exceed burn-in {}", cfg.n_iters, cfg.burn_in)));
    }
    if cfg.thinning == 0 {
        return Err(invalid("thinning must be at least 1"));
    }
    let start = Instant::now();
    let mut state = init;
    let mut retained = 0;
    let mut grad_evals = 0;
    for i in 1..=cfg.n_iters {
        kernel.step(&mut state)?;
        grad_evals += kernel.grad_evals_per_step();
        if cfg.retains(i) {
            retained += 1;
            for obs in observers.iter_mut() {
                obs.observe(&state).map_err(|e| Error::Observer { iter: i, source: Box::new(e) })?;
            }
        }
    }
    Ok(ChainSummary { state, retained, grad_evals, elapsed: start.elapsed() })
}
