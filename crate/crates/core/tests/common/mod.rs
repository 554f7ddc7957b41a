//! Shared fixtures: the separable l1 toy model and its evidence oracle.
#![allow(dead_code)]

use latent_langevin::forward::{GaussianLikelihood, LinearForwardOperator, Observation};
use latent_langevin::grid::{ImageGrid, NoiseSource};
use latent_langevin::prior::{PriorDescriptor, Regulariser};
use latent_langevin::sapg::{Bounds, SapgConfig, StepScale};

/// Independent pixels `z ~ (theta/2) exp(-theta |z|)`, `x | z ~ N(z, rho2)`,
/// `y | x ~ N(x, sigma2)`, observed through the identity.
pub struct Toy {
    pub lik: GaussianLikelihood,
    pub ys: Vec<f64>,
    pub sigma2: f64,
}

pub fn toy(rows: usize, cols: usize, theta: f64, rho2: f64, sigma2: f64, seed: u64) -> Toy {
    let mut noise = NoiseSource::new(seed, 0);
    let ys: Vec<f64> = (0..rows * cols)
        .map(|_| {
            // Laplace draw by inverse CDF.
            let u = noise.uniform() - 0.5;
            let z = -u.signum() * (1.0 - 2.0 * u.abs()).ln() / theta;
            z + rho2.sqrt() * noise.standard_normal() + sigma2.sqrt() * noise.standard_normal()
        })
        .collect();
    let y = ImageGrid::new(rows, cols, ys.clone()).unwrap();
    let obs = Observation { y, sigma2, snr_db: f64::NAN };
    let lik = GaussianLikelihood::new(LinearForwardOperator::identity(rows, cols), obs).unwrap();
    Toy { lik, ys, sigma2 }
}

pub fn toy_prior(theta: f64) -> PriorDescriptor {
    PriorDescriptor::new(theta, 0.01, Regulariser::L1).unwrap()
}

/// SAPG settings for the toy model: wide bounds, per-pixel steps of order
/// one, small MCMC steps so the discretisation bias stays below 1%.
pub fn toy_config(d: usize, max_iters: u64) -> SapgConfig {
    let mut cfg = SapgConfig::for_problem(d, 0.25, max_iters).unwrap();
    cfg.theta0 = 0.4;
    cfg.rho2_0 = 1.0;
    cfg.theta_bounds = Bounds::new(0.01, 10.0).unwrap();
    cfg.rho2_bounds = Bounds::new(0.01, 10.0).unwrap();
    cfg.c0_theta = 2.0 / d as f64;
    cfg.c0_rho2 = 2.0 / d as f64;
    cfg.p = 0.6;
    cfg.theta_scale = StepScale::Log;
    cfg.rho2_scale = StepScale::Log;
    cfg.delta_frac = 0.2;
    cfg.warmup = 2000;
    cfg.beta = 1e-12;
    cfg.seed = 7;
    cfg
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `log p(y | theta, rho2)` by quadrature over `(x, z)`: `x` integrates out
/// in closed form to `N(y; z, sigma2 + rho2)`, `z` numerically with the kink
/// at the origin as a breakpoint.
pub fn log_evidence(ys: &[f64], theta: f64, rho2: f64, sigma2: f64) -> f64 {
    let s2 = sigma2 + rho2;
    let s = s2.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s2).sqrt();
    ys.iter()
        .map(|&y| {
            let f = |z: f64| {
                0.5 * theta * (-theta * z.abs()).exp() * norm * (-(y - z) * (y - z) / (2.0 * s2)).exp()
            };
            // Breakpoints at the kink and at the edge of the Laplace spike,
            // which is much narrower than the Gaussian for large theta.
            let (a, b) = (y - 14.0 * s, y + 14.0 * s);
            let c = 20.0 / theta;
            let mut knots = vec![a, b];
            knots.extend([-c, 0.0, c].into_iter().filter(|k| *k > a && *k < b));
            knots.sort_by(f64::total_cmp);
            let p: f64 = knots.windows(2).map(|w| simpson(&f, w[0], w[1], 200)).sum();
            p.ln()
        })
        .sum()
}

/// Grid search for the evidence maximiser, refined three times around the
/// current best with a 9x9 grid in log coordinates.
pub fn evidence_argmax(ys: &[f64], sigma2: f64) -> (f64, f64) {
    let (mut lt, mut lr) = (0.0f64, 0.0f64);
    let mut half = 3.0;
    for _ in 0..4 {
        let mut best = (f64::NEG_INFINITY, lt, lr);
        for i in 0..9 {
            for j in 0..9 {
                let t = lt + half * (i as f64 / 4.0 - 1.0);
                let r = lr + half * (j as f64 / 4.0 - 1.0);
                let v = log_evidence(ys, t.exp(), r.exp(), sigma2);
                if v > best.0 {
                    best = (v, t, r);
                }
            }
        }
        (lt, lr) = (best.1, best.2);
        half /= 4.0;
    }
    (lt.exp(), lr.exp())
}
