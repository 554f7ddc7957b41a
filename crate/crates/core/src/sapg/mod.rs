//! Maximum marginal likelihood estimation of the regularisation parameter
//! `theta` and the splitting variance `rho2` by stochastic approximation.

use std::io::Write;
use std::path::Path;

use thiserror::Error as ThisError;

use crate::error::{invalid, Error, Result};
use crate::forward::GaussianLikelihood;
use crate::grid::{ImageGrid, NoiseSource};
use crate::prior::PriorDescriptor;
use crate::samplers::{ls_myula_step, ChainState, LatentModel, LipschitzInfo};

/// `c0 i^{-p}`.
pub fn gamma_schedule(i: u64, c0: f64, p: f64) -> f64 {
    c0 * (i.max(1) as f64).powf(-p)
}

/// Averaging weight of iteration `n`: nothing before `n0`, uniform up to
/// `n1`, then the decreasing step size itself.
pub fn weight(n: u64, n0: u64, n1: u64, gamma_n: f64) -> f64 {
    if n < n0 {
        0.0
    } else if n <= n1 {
        1.0
    } else {
        gamma_n
    }
}

/// Coordinates in which the ascent steps are taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepScale {
    /// Plain projected ascent on the parameter.
    Linear,
    /// Ascent on its logarithm; the gradient picks up a factor of the
    /// parameter itself.
    #[default]
    Log,
}

/// How `E ||x - z||^2` is estimated in the `rho2` gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Rho2Estimator {
    /// One exact conditional draw per latent sample.
    #[default]
    Sample,
    /// `||E[x|z] - z||^2 + tr Cov(x|z)`.
    RaoBlackwell,
    /// `||E[x|z] - z||^2` alone, i.e. the conditional mean used as if it were
    /// a draw. Biased low by `tr Cov(x|z)`; kept for comparison.
    ConditionalMean,
}

/// Closed interval used for projections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(invalid(format!("bounds need 0 < min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SapgConfig {
    pub theta0: f64,
    pub rho2_0: f64,
    pub theta_bounds: Bounds,
    pub rho2_bounds: Bounds,
    pub c0_theta: f64,
    pub c0_rho2: f64,
    pub p: f64,
    /// Latent samples per outer iteration.
    pub inner_samples: usize,
    /// Inner-chain moves at `(theta0, rho2_0)` before the first update, so
    /// the gradient estimates do not start from the `A^T y` transient.
    pub warmup: usize,
    pub max_iters: u64,
    pub n0: u64,
    pub n1: u64,
    pub beta: f64,
    pub theta_scale: StepScale,
    pub rho2_scale: StepScale,
    pub rho2_estimator: Rho2Estimator,
    /// Fraction of `1/L_a` used as the inner step size.
    pub delta_frac: f64,
    /// When false `rho2` stays at `rho2_0`.
    pub estimate_rho2: bool,
    pub seed: u64,
}

impl SapgConfig {
    /// Defaults for a `d`-pixel problem with noise variance `sigma2`:
    /// `theta0 = 0.04`, `rho2_0 = sigma2`, `Theta = [1e-4, 1]`,
    /// `Omega = [sigma2/100, 20 sigma2]`, steps `10 i^{-0.8} / d`, and
    /// averaging from 10% to 50% of the iterations.
    pub fn for_problem(d: usize, sigma2: f64, max_iters: u64) -> Result<Self> {
        let c0 = 10.0 / d as f64;
        Ok(Self {
            theta0: 0.04,
            rho2_0: sigma2,
            theta_bounds: Bounds::new(1e-4, 1.0)?,
            rho2_bounds: Bounds::new(sigma2 / 100.0, 20.0 * sigma2)?,
            c0_theta: c0,
            c0_rho2: c0,
            p: 0.8,
            inner_samples: 1,
            warmup: 100,
            max_iters,
            n0: max_iters / 10,
            n1: max_iters / 2,
            beta: 1e-4,
            theta_scale: StepScale::Log,
            rho2_scale: StepScale::Linear,
            rho2_estimator: Rho2Estimator::default(),
            delta_frac: 1.0,
            estimate_rho2: true,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta_bounds.contains(self.theta0) {
            return Err(invalid(format!("theta0 {} outside its bounds", self.theta0)));
        }
        if !self.rho2_bounds.contains(self.rho2_0) {
            return Err(invalid(format!("rho2_0 {} outside its bounds", self.rho2_0)));
        }
        if !(self.c0_theta >= 0.0 && self.c0_rho2 >= 0.0) {
            return Err(invalid("step scales must be non-negative"));
        }
        if !(0.5..=1.0).contains(&self.p) {
            return Err(invalid(format!("step exponent {} outside [0.5, 1]", self.p)));
        }
        if self.inner_samples == 0 || self.max_iters == 0 {
            return Err(invalid("need at least one iteration and one inner sample"));
        }
        if !(self.n0 <= self.n1 && self.n1 <= self.max_iters) {
            return Err(invalid(format!(
                "averaging phases need n0 <= n1 <= max_iters, got {} {} {}",
                self.n0, self.n1, self.max_iters
            )));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("tolerance beta must be positive"));
        }
        if !(self.delta_frac > 0.0 && self.delta_frac <= 1.0) {
            return Err(invalid("delta_frac must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Projected ascent step for `theta` from latent samples `zs`, using
/// `d / (alpha theta) - E g(z)` with the original (non-smoothed) regulariser.
pub fn theta_update(
    theta: f64,
    zs: &[ImageGrid],
    prior: &PriorDescriptor,
    gamma: f64,
    bounds: &Bounds,
    scale: StepScale,
) -> Result<f64> {
    if zs.is_empty() {
        return Err(Error::Empty("theta update needs at least one sample".into()));
    }
    let d = zs[0].len() as f64;
    let alpha = prior.regulariser.homogeneity();
    let g = zs.iter().map(|z| prior.regulariser.value(z)).sum::<f64>() / zs.len() as f64;
    Ok(theta_step(theta, d / (alpha * theta) - g, gamma, bounds, scale))
}

fn theta_step(theta: f64, grad: f64, gamma: f64, bounds: &Bounds, scale: StepScale) -> f64 {
    match scale {
        StepScale::Linear => bounds.project(theta + gamma * grad),
        StepScale::Log => bounds.project((theta.ln() + gamma * theta * grad).exp()),
    }
}

/// Projected ascent step for `rho2` from paired samples `(x, z)`, using
/// `||x - z||^2 / (2 rho2^2) - d / (2 rho2)`.
pub fn rho2_update(
    rho2: f64,
    pairs: &[(ImageGrid, ImageGrid)],
    gamma: f64,
    bounds: &Bounds,
    scale: StepScale,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("rho2 update needs at least one pair".into()));
    }
    let mut sq = 0.0;
    for (x, z) in pairs {
        x.check_shape(z)?;
        sq += x.sub(z).norm_sq();
    }
    let d = pairs[0].0.len() as f64;
    Ok(rho2_step(rho2, sq / pairs.len() as f64, d, gamma, bounds, scale))
}

fn rho2_grad(rho2: f64, sq: f64, d: f64) -> f64 {
    sq / (2.0 * rho2 * rho2) - d / (2.0 * rho2)
}

fn rho2_step(rho2: f64, sq: f64, d: f64, gamma: f64, bounds: &Bounds, scale: StepScale) -> f64 {
    let grad = rho2_grad(rho2, sq, d);
    match scale {
        StepScale::Linear => bounds.project(rho2 + gamma * grad),
        StepScale::Log => bounds.project((rho2.ln() + gamma * rho2 * grad).exp()),
    }
}

/// Iterates, running averages and stopping information of a SAPG run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SapgTrace {
    /// `theta_0, ..., theta_m`.
    pub theta: Vec<f64>,
    pub rho2: Vec<f64>,
    /// Weighted averages after each iteration; `None` before averaging starts.
    pub theta_avg: Vec<Option<f64>>,
    pub rho2_avg: Vec<Option<f64>>,
    pub theta_change: Vec<Option<f64>>,
    pub rho2_change: Vec<Option<f64>>,
    /// Iteration at which the tolerance was met, if it was.
    pub stopped_at: Option<u64>,
    pub grad_evals: u64,
}

impl SapgTrace {
    pub fn iterations(&self) -> u64 {
        self.theta.len().saturating_sub(1) as u64
    }

    /// Final weighted averages, or the last iterates if averaging never began.
    pub fn estimate(&self) -> (f64, f64) {
        let last = |v: &[Option<f64>], raw: &[f64]| {
            v.last().copied().flatten().unwrap_or_else(|| *raw.last().expect("non-empty trace"))
        };
        (last(&self.theta_avg, &self.theta), last(&self.rho2_avg, &self.rho2))
    }

    /// CSV with one row per iteration.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record([
            "iteration",
            "theta",
            "rho2",
            "theta_avg",
            "rho2_avg",
            "theta_rel_change",
            "rho2_rel_change",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.theta.len() {
            let at = |v: &[Option<f64>]| if i == 0 { None } else { v.get(i - 1).copied().flatten() };
            out.write_record([
                i.to_string(),
                self.theta[i].to_string(),
                self.rho2[i].to_string(),
                opt(at(&self.theta_avg)),
                opt(at(&self.rho2_avg)),
                opt(at(&self.theta_change)),
                opt(at(&self.rho2_change)),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// A failed run together with everything computed before the failure.
#[derive(Debug, ThisError)]
#[error("{source} (after {} SAPG iterations)", trace.iterations())]
pub struct SapgFailure {
    #[source]
    pub source: Error,
    pub trace: Box<SapgTrace>,
}

impl From<SapgFailure> for Error {
    fn from(f: SapgFailure) -> Self {
        f.source
    }
}

struct Inner {
    state: ChainState,
    noise: NoiseSource,
    cond_noise: NoiseSource,
}

/// Averages of `g(z)` and `||x - z||^2` over `n` ls-MYULA moves.
fn inner_pass(
    inner: &mut Inner,
    lik: &GaussianLikelihood,
    prior: &PriorDescriptor,
    rho2: f64,
    delta: f64,
    n: usize,
    estimator: Rho2Estimator,
) -> Result<(f64, f64)> {
    let model = LatentModel::new(lik, prior, rho2)?;
    let (mut g, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        inner.state = ls_myula_step(&inner.state, &model, delta, &mut inner.noise)?;
        let z = &inner.state.z;
        g += prior.regulariser.value(z);
        sq += match estimator {
            Rho2Estimator::Sample => lik.conditional_sample(z, rho2, &mut inner.cond_noise)?.sub(z).norm_sq(),
            Rho2Estimator::RaoBlackwell => {
                lik.conditional_mean(z, rho2)?.sub(z).norm_sq() + lik.conditional_trace_cov(rho2)?
            }
            Rho2Estimator::ConditionalMean => lik.conditional_mean(z, rho2)?.sub(z).norm_sq(),
        };
    }
    let n = n as f64;
    Ok((g / n, sq / n))
}

fn latent_delta(lik: &GaussianLikelihood, prior: &PriorDescriptor, rho2: f64, frac: f64) -> Result<f64> {
    Ok(frac / LipschitzInfo::new(lik.lipschitz(), prior.lambda, rho2)?.l_a)
}

/// Runs the SAPG scheme. `prior.theta` is ignored in favour of
/// `config.theta0`; the chain starts from `A^T y`.
pub fn sapg_run(
    config: &SapgConfig,
    lik: &GaussianLikelihood,
    prior: &PriorDescriptor,
) -> std::result::Result<SapgTrace, SapgFailure> {
    let mut trace = SapgTrace::default();
    match sapg_loop(config, lik, prior, &mut trace) {
        Ok(()) => Ok(trace),
        Err(source) => Err(SapgFailure { source, trace: Box::new(trace) }),
    }
}

fn sapg_loop(
    config: &SapgConfig,
    lik: &GaussianLikelihood,
    prior: &PriorDescriptor,
    trace: &mut SapgTrace,
) -> Result<()> {
    config.validate()?;
    let d = lik.dim() as f64;
    let noise = NoiseSource::new(config.seed, 0);
    let mut inner =
        Inner { state: ChainState::new(lik.adjoint_data().clone()), cond_noise: noise.fork(1), noise };
    let (mut theta, mut rho2) = (config.theta0, config.rho2_0);
    trace.theta.push(theta);
    trace.rho2.push(rho2);
    let (mut wsum, mut wtheta, mut wrho2) = (0.0, 0.0, 0.0);
    let mut prev: Option<(f64, f64)> = None;

    if config.warmup > 0 {
        let start = prior.with_theta(theta)?;
        let delta = latent_delta(lik, &start, rho2, config.delta_frac)?;
        let model = LatentModel::new(lik, &start, rho2)?;
        for _ in 0..config.warmup {
            inner.state = ls_myula_step(&inner.state, &model, delta, &mut inner.noise)?;
        }
        trace.grad_evals += config.warmup as u64;
    }

    for i in 0..config.max_iters {
        let current = prior.with_theta(theta)?;
        let delta = latent_delta(lik, &current, rho2, config.delta_frac)?;
        let (g, sq) =
            inner_pass(&mut inner, lik, &current, rho2, delta, config.inner_samples, config.rho2_estimator)?;
        trace.grad_evals += config.inner_samples as u64;

        let n = i + 1;
        let alpha = current.regulariser.homogeneity();
        let gamma = gamma_schedule(n, config.c0_theta, config.p);
        theta = theta_step(theta, d / (alpha * theta) - g, gamma, &config.theta_bounds, config.theta_scale);
        if config.estimate_rho2 {
            let gamma_r = gamma_schedule(n, config.c0_rho2, config.p);
            rho2 = rho2_step(rho2, sq, d, gamma_r, &config.rho2_bounds, config.rho2_scale);
        }
        if !(theta.is_finite() && rho2.is_finite()) {
            return Err(Error::Numerical(format!("non-finite SAPG iterate at {n}")));
        }
        trace.theta.push(theta);
        trace.rho2.push(rho2);

        let w = weight(n, config.n0, config.n1, gamma_schedule(n, 1.0, config.p));
        wsum += w;
        wtheta += w * theta;
        wrho2 += w * rho2;
        let avg = (wsum > 0.0).then(|| (wtheta / wsum, wrho2 / wsum));
        trace.theta_avg.push(avg.map(|a| a.0));
        trace.rho2_avg.push(avg.map(|a| a.1));
        let change = match (prev, avg) {
            (Some(p), Some(a)) => Some(((a.0 - p.0).abs() / p.0, (a.1 - p.1).abs() / p.1)),
            _ => None,
        };
        trace.theta_change.push(change.map(|c| c.0));
        trace.rho2_change.push(change.map(|c| c.1));
        prev = avg;
        if let Some((ct, cr)) = change {
            if ct < config.beta && cr < config.beta {
                trace.stopped_at = Some(n);
                break;
            }
        }
    }
    Ok(())
}

/// Monte Carlo estimate of the marginal-likelihood gradient at fixed
/// `(theta, rho2)`: mean and standard error of each component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientEstimate {
    pub theta: (f64, f64),
    pub rho2: (f64, f64),
}

/// Runs `burn_in + n` ls-MYULA moves (step `delta_frac / L_a`) at fixed
/// parameters and averages the per-sample gradients; standard errors use
/// batch means over 50 batches.
pub fn estimate_gradients(
    lik: &GaussianLikelihood,
    prior: &PriorDescriptor,
    rho2: f64,
    delta_frac: f64,
    burn_in: usize,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    const BATCHES: usize = 50;
    if n < BATCHES {
        return Err(invalid(format!("need at least {BATCHES} samples, got {n}")));
    }
    let d = lik.dim() as f64;
    let noise = NoiseSource::new(seed, 0);
    let mut inner =
        Inner { state: ChainState::new(lik.adjoint_data().clone()), cond_noise: noise.fork(1), noise };
    let delta = latent_delta(lik, prior, rho2, delta_frac)?;
    if burn_in > 0 {
        inner_pass(&mut inner, lik, prior, rho2, delta, burn_in, Rho2Estimator::Sample)?;
    }
    let alpha = prior.regulariser.homogeneity();
    let per = n / BATCHES;
    let mut gt = Vec::with_capacity(BATCHES);
    let mut gr = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let (g, sq) = inner_pass(&mut inner, lik, prior, rho2, delta, per, Rho2Estimator::Sample)?;
        gt.push(d / (alpha * prior.theta) - g);
        gr.push(rho2_grad(rho2, sq, d));
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
        (m, (var / v.len() as f64).sqrt())
    };
    Ok(GradientEstimate { theta: stats(&gt), rho2: stats(&gr) })
}
