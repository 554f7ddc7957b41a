use latent_langevin::forward::{make_uniform_blur, GaussianLikelihood, LinearForwardOperator, Observation};
use latent_langevin::grid::{ImageGrid, NoiseSource};
use latent_langevin::prior::{PriorDescriptor, Regulariser};
use latent_langevin::samplers::*;
use latent_langevin::Result;
use proptest::prelude::*;

fn scalar(v: f64) -> ImageGrid {
    ImageGrid::filled(1, 1, v)
}

fn scalar_likelihood(y: f64, sigma2: f64) -> GaussianLikelihood {
    let obs = Observation { y: scalar(y), sigma2, snr_db: f64::NAN };
    GaussianLikelihood::new(LinearForwardOperator::identity(1, 1), obs).unwrap()
}

fn small_blur(n: usize, seed: u64) -> GaussianLikelihood {
    let op = make_uniform_blur(3, n, n).unwrap();
    let mut noise = NoiseSource::new(seed, 0);
    let x = ImageGrid::from_fn(n, n, |r, c| ((r * 7 + c * 3) % 11) as f64);
    let y = op.apply(&x).unwrap().add(&noise.standard_normal_field(n, n).scaled(0.3));
    GaussianLikelihood::new(op, Observation { y, sigma2: 0.09, snr_db: f64::NAN }).unwrap()
}

/// Stationary variance of SK-ROCK on the scalar target `N(0, 1/c)`, from the
/// closed-form stability and noise polynomials
/// `R = T_s(w0 + w1 p) / T_s(w0)` and
/// `S = s w1 (1 + w1 p / 2) U_{s-1}(w0 + w1 p) / T_s(w0)`, `p = -c delta`.
fn skrock_ou_variance(s: usize, eta: f64, c: f64, delta: f64) -> f64 {
    let sf = s as f64;
    let w0 = 1.0 + eta / (sf * sf);
    let ts = |x: f64| if x.abs() <= 1.0 { (sf * x.acos()).cos() } else { (sf * x.acosh()).cosh() };
    let us1 = |x: f64| {
        if x.abs() < 1.0 {
            let t = x.acos();
            (sf * t).sin() / t.sin()
        } else {
            let t = x.acosh();
            (sf * t).sinh() / t.sinh()
        }
    };
    // T_s'(x) = s U_{s-1}(x)
    let w1 = ts(w0) / (sf * us1(w0));
    let p = -c * delta;
    let x = w0 + w1 * p;
    let r = ts(x) / ts(w0);
    let g = sf * w1 * (1.0 + w1 * p / 2.0) * us1(x) / ts(w0);
    2.0 * delta * g * g / (1.0 - r * r)
}

#[test]
fn skrock_ou_oracle_soft_limit() {
    // Far from the stiff end the scheme is nearly exact for the variance.
    let v = skrock_ou_variance(10, 0.05, 1.0, 1.0);
    assert!((v - 1.0).abs() < 0.03, "{v}");
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

#[test]
fn chebyshev_examples() {
    let c = chebyshev_coeffs(15, 0.05).unwrap();
    assert!((c.l_s - 404.98).abs() < 0.01);
    assert!((c.omega0 - 1.0002222).abs() < 1e-7);
    let (t, _) = chebyshev_t(2, 0.5);
    assert_eq!(t[2], -0.5);
}

#[test]
fn cameraman_step_sizes() {
    let c = chebyshev_coeffs(15, 0.05).unwrap();
    let myula = stepsize_myula(5.959).unwrap();
    assert!((myula / 0.167 - 1.0).abs() < 5e-3);
    let sk = stepsize_skrock(&c, 5.959, 1.0).unwrap();
    assert!((sk - 67.959).abs() / 67.959 < 1e-3);
    let ls = stepsize_skrock(&c, 4.205, 1.0).unwrap();
    assert!((ls - 96.294).abs() / 96.294 < 5e-4);
    assert!(stepsize_skrock(&c, 1.0, 1.5).is_err());
    assert!(stepsize_myula(0.0).is_err());
}

proptest! {
    #[test]
    fn latent_lipschitz_is_smaller(l_f in 1e-3f64..1e3, lambda in 1e-3f64..1e2, rho2 in 1e-4f64..1e4) {
        let lip = LipschitzInfo::new(l_f, lambda, rho2).unwrap();
        prop_assert!(lip.l_a < lip.l);
        let c = chebyshev_coeffs(15, 0.05).unwrap();
        let ls = SamplerKind::LsSkrock.step_size(&lip, Some(&c), 1.0).unwrap();
        let can = SamplerKind::Skrock.step_size(&lip, Some(&c), 1.0).unwrap();
        prop_assert!(ls > can);
    }

    #[test]
    fn chebyshev_stage_weights_sum_to_one(s in 2usize..40, eta in 0.0f64..0.5) {
        let c = chebyshev_coeffs(s, eta).unwrap();
        for j in 2..=s {
            let (_, nu, k) = c.stage(j);
            prop_assert!((nu + k - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn ula_gaussian_stationary_variance() {
    let delta = 0.5;
    let mut noise = NoiseSource::new(11, 0);
    let mut x = scalar(0.0);
    let mut xs = Vec::with_capacity(1_000_000);
    for _ in 0..1_000_000 {
        x = myula_step(&x, |v| Ok(v.scaled(-1.0)), delta, &mut noise).unwrap();
        xs.push(x[(0, 0)]);
    }
    let (_, var) = moments(&xs);
    assert!((var / (4.0 / 3.0) - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn ula_fixed_point_without_noise() {
    let x = ImageGrid::from_fn(3, 3, |r, c| (r + c) as f64);
    let mut pinned = NoiseSource::pinned_zero();
    let y = myula_step(&x, |v| Ok(ImageGrid::zeros(v.rows(), v.cols())), 0.3, &mut pinned).unwrap();
    assert_eq!(x, y);
}

#[test]
fn ula_diagonal_gaussian_lyapunov() {
    let sigma = [1.0, 2.0, 3.0, 4.0, 5.0];
    let delta = 0.5;
    let mut noise = NoiseSource::new(12, 0);
    let mut x = ImageGrid::zeros(1, 5);
    let mut sums = [0.0; 5];
    let mut sq = [0.0; 5];
    let n = 1_000_000;
    for _ in 0..n {
        x = myula_step(&x, |v| Ok(ImageGrid::from_fn(1, 5, |_, c| -v[(0, c)] / sigma[c])), delta, &mut noise)
            .unwrap();
        for c in 0..5 {
            sums[c] += x[(0, c)];
            sq[c] += x[(0, c)] * x[(0, c)];
        }
    }
    for c in 0..5 {
        let m = sums[c] / n as f64;
        let var = sq[c] / n as f64 - m * m;
        let want = sigma[c] / (1.0 - delta / (2.0 * sigma[c]));
        assert!((var / want - 1.0).abs() < 0.03, "coordinate {c}: {var} vs {want}");
    }
}

#[test]
fn skrock_scalar_variance_across_step_sizes() {
    let c = chebyshev_coeffs(10, 0.05).unwrap();
    for frac in [0.01, 0.3, 0.7] {
        let delta = stepsize_skrock(&c, 1.0, frac).unwrap();
        let mut noise = NoiseSource::new(14, 0);
        let mut x = scalar(0.0);
        let mut xs = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            x = skrock_step(&x, |v| Ok(v.scaled(-1.0)), &c, delta, &mut noise).unwrap();
            xs.push(x[(0, 0)]);
        }
        let (_, var) = moments(&xs);
        let want = skrock_ou_variance(10, 0.05, 1.0, delta);
        assert!((var / want - 1.0).abs() < 0.1, "frac {frac}: {var} vs {want}");
    }
}

#[test]
fn skrock_is_stable_where_euler_is_not() {
    let c = chebyshev_coeffs(10, 0.05).unwrap();
    let delta = stepsize_skrock(&c, 1.0, 1.0).unwrap();
    let mut noise = NoiseSource::new(13, 0);
    let mut x = scalar(0.0);
    let mut xs = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        x = skrock_step(&x, |v| Ok(v.scaled(-1.0)), &c, delta, &mut noise).unwrap();
        assert!(x[(0, 0)].is_finite());
        xs.push(x[(0, 0)]);
    }
    let (_, var) = moments(&xs);
    let want = skrock_ou_variance(10, 0.05, 1.0, delta);
    assert!((var / want - 1.0).abs() < 0.1, "variance {var} vs {want}");

    let mut noise = NoiseSource::new(13, 0);
    let mut e = scalar(0.0);
    let mut diverged = false;
    for _ in 0..100 {
        match myula_step(&e, |v| Ok(v.scaled(-1.0)), delta, &mut noise) {
            // The quadratic log-density overflows long before the iterate does.
            Ok(next) if next.norm_sq().is_finite() => e = next,
            _ => {
                diverged = true;
                break;
            }
        }
    }
    assert!(diverged, "explicit Euler stayed finite at {}", e[(0, 0)]);
}

#[test]
fn skrock_contracts_deterministically() {
    let c = chebyshev_coeffs(10, 0.05).unwrap();
    let delta = stepsize_skrock(&c, 1.0, 1.0).unwrap();
    let mut pinned = NoiseSource::pinned_zero();
    let mut x = ImageGrid::from_fn(2, 2, |r, c| 1.0 + r as f64 - c as f64);
    let mut norm = x.norm();
    for _ in 0..20 {
        x = skrock_step(&x, |v| Ok(v.scaled(-1.0)), &c, delta, &mut pinned).unwrap();
        assert!(x.norm() < norm);
        norm = x.norm();
    }
}

#[test]
fn skrock_uses_s_gradients() {
    let c = chebyshev_coeffs(7, 0.05).unwrap();
    let mut calls = 0;
    let mut noise = NoiseSource::new(1, 0);
    skrock_step(
        &scalar(1.0),
        |v| {
            calls += 1;
            Ok(v.scaled(-1.0))
        },
        &c,
        1.0,
        &mut noise,
    )
    .unwrap();
    assert_eq!(calls, 7);
}

#[test]
fn non_finite_gradient_is_numerical_error() {
    let mut noise = NoiseSource::new(1, 0);
    let err = myula_step(&scalar(1.0), |_| Ok(scalar(f64::NAN)), 0.1, &mut noise).unwrap_err();
    assert!(err.is_numerical());
    let c = chebyshev_coeffs(3, 0.05).unwrap();
    let err = skrock_step(&scalar(1.0), |_| Ok(scalar(f64::INFINITY)), &c, 0.1, &mut noise).unwrap_err();
    assert!(err.is_numerical());
}

// Linear latent chains on a single pixel, where the TV prior vanishes.
struct ScalarSplit {
    y: f64,
    sigma2: f64,
    rho2: f64,
}

impl ScalarSplit {
    fn v(&self) -> f64 {
        1.0 / (1.0 / self.sigma2 + 1.0 / self.rho2)
    }
    fn contraction(&self, delta: f64) -> f64 {
        1.0 - delta / self.rho2 * (1.0 - self.v() / self.rho2)
    }
    fn ls_variance(&self, delta: f64) -> f64 {
        2.0 * delta / (1.0 - self.contraction(delta).powi(2))
    }
    fn sgs_variance(&self, delta: f64) -> f64 {
        let a = delta / self.rho2;
        (a * a * self.v() + 2.0 * delta) / (1.0 - self.contraction(delta).powi(2))
    }
}

fn scalar_chain(kind: SamplerKind, split: &ScalarSplit, n: usize, seed: u64) -> (Vec<f64>, f64) {
    let lik = scalar_likelihood(split.y, split.sigma2);
    let prior = PriorDescriptor::tv(1.0, split.sigma2).unwrap();
    let settings = SamplerSettings { kind, stages: 10, seed, ..Default::default() };
    let mut sampler = Sampler::new(&settings, &lik, &prior, split.rho2).unwrap();
    let delta = sampler.delta();
    let mut state = ChainState::new(scalar(split.y));
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.step(&mut state).unwrap();
        zs.push(state.z[(0, 0)]);
    }
    (zs, delta)
}

#[test]
fn sgs_scalar_lyapunov() {
    let split = ScalarSplit { y: 2.0, sigma2: 0.5, rho2: 0.8 };
    let (zs, delta) = scalar_chain(SamplerKind::Sgs, &split, 1_000_000, 21);
    let (mean, var) = moments(&zs);
    let want = split.sgs_variance(delta);
    assert!((var / want - 1.0).abs() < 0.03, "{var} vs {want}");
    let se = (want * 50.0 / zs.len() as f64).sqrt();
    assert!((mean - split.y).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn ls_myula_scalar_lyapunov() {
    let split = ScalarSplit { y: -1.0, sigma2: 0.5, rho2: 0.8 };
    let (zs, delta) = scalar_chain(SamplerKind::LsMyula, &split, 1_000_000, 22);
    let (mean, var) = moments(&zs);
    let want = split.ls_variance(delta);
    assert!((var / want - 1.0).abs() < 0.02, "{var} vs {want}");
    let se = (want * 50.0 / zs.len() as f64).sqrt();
    assert!((mean - split.y).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn ls_skrock_scalar_marginal() {
    let split = ScalarSplit { y: 0.5, sigma2: 0.5, rho2: 0.8 };
    let (zs, delta) = scalar_chain(SamplerKind::LsSkrock, &split, 100_000, 23);
    assert!(zs.iter().all(|z| z.is_finite()));
    let (mean, var) = moments(&zs);
    let want = skrock_ou_variance(10, 0.05, 1.0 / (split.sigma2 + split.rho2), delta);
    assert!((var / want - 1.0).abs() < 0.1, "{var} vs {want}");
    assert!((mean - split.y).abs() < 0.05, "mean {mean}");
}

#[test]
fn canonical_scalar_means() {
    // Flat prior on one pixel: the posterior is N(y, sigma2).
    let split = ScalarSplit { y: 1.5, sigma2: 0.5, rho2: 0.8 };
    for kind in [SamplerKind::Myula, SamplerKind::Skrock] {
        let (xs, _) = scalar_chain(kind, &split, 200_000, 24);
        let (mean, var) = moments(&xs);
        let se = (var * 50.0 / xs.len() as f64).sqrt();
        assert!((mean - split.y).abs() < 4.0 * se, "{kind}: mean {mean}");
    }
}

#[test]
fn sgs_hand_step() {
    let lik = scalar_likelihood(1.0, 0.5);
    let prior = PriorDescriptor::tv(1.0, 0.5).unwrap();
    let model = LatentModel::new(&lik, &prior, 2.0).unwrap();
    let state = ChainState::new(scalar(3.0));
    let delta = 0.1;
    let mut zn = NoiseSource::new(5, 0);
    let mut xn = NoiseSource::new(6, 0);
    let next = sgs_step(&state, &model, delta, &mut zn, &mut xn).unwrap();

    let mut xn2 = NoiseSource::new(6, 0);
    let (e1, e2) = (xn2.standard_normal(), xn2.standard_normal());
    let zeta = NoiseSource::new(5, 0).standard_normal();
    let (y_t, z_t) = (1.0 + 0.5f64.sqrt() * e1, 3.0 + 2.0f64.sqrt() * e2);
    let x = (y_t / 0.5 + z_t / 2.0) / (1.0 / 0.5 + 1.0 / 2.0);
    let z = 3.0 - delta / 2.0 * (3.0 - x) + (2.0 * delta).sqrt() * zeta;
    assert!((next.x_sample.as_ref().unwrap()[(0, 0)] - x).abs() < 1e-12);
    assert!((next.z[(0, 0)] - z).abs() < 1e-12);
    assert_eq!(next.iter, 1);
}

#[test]
fn sgs_with_pinned_draws_is_ls_myula() {
    let lik = small_blur(16, 3);
    let prior = PriorDescriptor::tv(0.5, 0.09).unwrap();
    let model = LatentModel::new(&lik, &prior, 0.2).unwrap();
    let delta = 1.0 / LipschitzInfo::new(lik.lipschitz(), 0.09, 0.2).unwrap().l_a;
    let mut a = ChainState::new(lik.adjoint_data().clone());
    let mut b = a.clone();
    let mut na = NoiseSource::new(8, 0);
    let mut nb = NoiseSource::new(8, 0);
    let mut pinned = NoiseSource::pinned_zero();
    for _ in 0..50 {
        a = sgs_step(&a, &model, delta, &mut na, &mut pinned).unwrap();
        b = ls_myula_step(&b, &model, delta, &mut nb).unwrap();
        assert_eq!(a.z, b.z);
    }
}

#[test]
fn averaged_sgs_drift_is_ls_drift() {
    let lik = small_blur(6, 4);
    let prior = PriorDescriptor::tv(0.5, 0.09).unwrap();
    let model = LatentModel::new(&lik, &prior, 0.3).unwrap();
    let state = ChainState::new(lik.adjoint_data().clone());
    let delta = 0.05;
    let mut pinned = NoiseSource::pinned_zero();
    let ls = ls_myula_step(&state, &model, delta, &mut pinned).unwrap();
    let mut xn = NoiseSource::new(9, 0);
    let n = 10_000;
    let mut sum = ImageGrid::zeros(6, 6);
    let mut sq = ImageGrid::zeros(6, 6);
    for _ in 0..n {
        let z = sgs_step(&state, &model, delta, &mut pinned, &mut xn).unwrap().z;
        sq.axpy(1.0, &z.map(|v| v * v));
        sum.axpy(1.0, &z);
    }
    for i in 0..36 {
        let m = sum.as_slice()[i] / n as f64;
        let var = sq.as_slice()[i] / n as f64 - m * m;
        let se = (var / n as f64).sqrt();
        assert!((m - ls.z.as_slice()[i]).abs() < 4.5 * se, "pixel {i}");
    }
}

#[test]
fn ls_skrock_huge_rho_is_prior_only() {
    let lik = scalar_likelihood(0.3, 0.5);
    let prior = PriorDescriptor::new(2.0, 0.1, Regulariser::L1).unwrap();
    let model = LatentModel::new(&lik, &prior, 1e12).unwrap();
    let c = chebyshev_coeffs(5, 0.05).unwrap();
    let delta = stepsize_skrock(&c, 1.0 / 0.1, 1.0).unwrap();
    let mut s = ChainState::new(scalar(1.0));
    let mut x = scalar(1.0);
    let mut na = NoiseSource::new(10, 0);
    let mut nb = NoiseSource::new(10, 0);
    // At the stability edge the piecewise-linear map amplifies the 1e-12 drift
    // difference about tenfold per step, so only a short horizon is comparable.
    for _ in 0..10 {
        s = ls_skrock_step(&s, &model, &c, delta, &mut na, FirstStageNoise::Linear).unwrap();
        x = skrock_step(
            &x,
            |v| Ok(latent_langevin::prior::my_envelope_grad(v, &prior)?.scaled(-1.0)),
            &c,
            delta,
            &mut nb,
        )
        .unwrap();
        assert!((s.z[(0, 0)] - x[(0, 0)]).abs() < 1e-6, "{} vs {}", s.z[(0, 0)], x[(0, 0)]);
    }
}

#[test]
fn squared_first_stage_differs() {
    let lik = small_blur(8, 5);
    let prior = PriorDescriptor::tv(0.5, 0.09).unwrap();
    let model = LatentModel::new(&lik, &prior, 0.2).unwrap();
    let c = chebyshev_coeffs(5, 0.05).unwrap();
    let state = ChainState::new(lik.adjoint_data().clone());
    let a = ls_skrock_step(&state, &model, &c, 1.0, &mut NoiseSource::new(1, 0), FirstStageNoise::Linear)
        .unwrap();
    let b = ls_skrock_step(&state, &model, &c, 1.0, &mut NoiseSource::new(1, 0), FirstStageNoise::Squared)
        .unwrap();
    assert_ne!(a.z, b.z);
    assert!(a.x_grad.is_some());
}

#[test]
fn run_chain_bookkeeping() -> Result<()> {
    let lik = small_blur(8, 6);
    let prior = PriorDescriptor::tv(0.5, 0.09)?;
    for (kind, per) in [
        (SamplerKind::Myula, 1),
        (SamplerKind::Skrock, 15),
        (SamplerKind::LsSkrock, 15),
        (SamplerKind::Sgs, 1),
    ] {
        let settings = SamplerSettings { kind, seed: 3, ..Default::default() };
        let mut sampler = Sampler::new(&settings, &lik, &prior, 0.2)?;
        let mut seen = Vec::new();
        let mut obs = |s: &ChainState| -> Result<()> {
            seen.push(s.iter);
            Ok(())
        };
        let cfg = ChainConfig { n_iters: 10, burn_in: 0, thinning: 1 };
        let out =
            run_chain(&mut sampler, ChainState::new(lik.adjoint_data().clone()), &cfg, &mut [&mut obs])?;
        assert_eq!(seen, (1..=10).collect::<Vec<_>>());
        assert_eq!(out.grad_evals, 10 * per);
        assert_eq!(out.retained, 10);
    }
    Ok(())
}

#[test]
fn run_chain_burn_in_and_thinning() -> Result<()> {
    let lik = small_blur(8, 7);
    let prior = PriorDescriptor::tv(0.5, 0.09)?;
    let settings = SamplerSettings { kind: SamplerKind::LsMyula, seed: 4, ..Default::default() };
    let run = || -> Result<(Vec<u64>, ChainState)> {
        let mut sampler = Sampler::new(&settings, &lik, &prior, 0.2)?;
        let mut seen = Vec::new();
        let mut obs = |s: &ChainState| -> Result<()> {
            seen.push(s.iter);
            Ok(())
        };
        let cfg = ChainConfig { n_iters: 20, burn_in: 5, thinning: 4 };
        let out =
            run_chain(&mut sampler, ChainState::new(lik.adjoint_data().clone()), &cfg, &mut [&mut obs])?;
        Ok((seen, out.state))
    };
    let (seen, a) = run()?;
    assert_eq!(seen, vec![6, 10, 14, 18]);
    let (_, b) = run()?;
    assert_eq!(a, b);

    let mut sampler = Sampler::new(&settings, &lik, &prior, 0.2)?;
    let one = ChainConfig { n_iters: 3, burn_in: 2, thinning: 1 };
    let out = run_chain(&mut sampler, ChainState::new(lik.adjoint_data().clone()), &one, &mut [])?;
    assert_eq!(out.retained, 1);
    let bad = ChainConfig { n_iters: 2, burn_in: 2, thinning: 1 };
    assert!(run_chain(&mut sampler, ChainState::new(lik.adjoint_data().clone()), &bad, &mut []).is_err());
    Ok(())
}

#[test]
fn observer_failure_carries_iteration() {
    let lik = small_blur(8, 8);
    let prior = PriorDescriptor::tv(0.5, 0.09).unwrap();
    let settings = SamplerSettings { kind: SamplerKind::Myula, ..Default::default() };
    let mut sampler = Sampler::new(&settings, &lik, &prior, 0.2).unwrap();
    let mut obs = |s: &ChainState| -> Result<()> {
        if s.iter == 3 {
            Err(latent_langevin::Error::Numerical("boom".into()))
        } else {
            Ok(())
        }
    };
    let cfg = ChainConfig { n_iters: 10, burn_in: 0, thinning: 1 };
    let err = run_chain(&mut sampler, ChainState::new(lik.adjoint_data().clone()), &cfg, &mut [&mut obs])
        .unwrap_err();
    assert!(err.to_string().contains("iteration 3"));
    assert!(err.is_numerical());
}

#[test]
fn sampler_names_roundtrip() {
    for k in SamplerKind::ALL {
        assert_eq!(k.name().parse::<SamplerKind>().unwrap(), k);
    }
    assert!("hmc".parse::<SamplerKind>().is_err());
}
