use std::path::{Path, PathBuf};
use std::time::Instant;

use latent_langevin::diagnostics::{
    acf, ess, log_posterior, mse, slowest_component, MultiscaleStats, PosteriorMean, SampleWindow,
    ScalarSeries, SeriesObserver, STD_FACTORS,
};
use latent_langevin::forward::{
    make_inpainting, make_uniform_blur, simulate_observation, GaussianLikelihood, LinearForwardOperator,
    Observation,
};
use latent_langevin::grid::io::{read_gray, read_raw, Intensity};
use latent_langevin::grid::NoiseSource;
use latent_langevin::prior::PriorDescriptor;
use latent_langevin::samplers::{
    run_chain, ChainConfig, ChainState, Kernel, LipschitzInfo, Observer, Sampler, SamplerKind,
    SamplerSettings,
};
use latent_langevin::sapg::{sapg_run, SapgConfig, SapgTrace};
use latent_langevin::ImageGrid;

use crate::config::{Experiment, ExperimentConfig, Param};
use crate::error::{config, CliError, IoContext, Result};
use crate::manifest::{fingerprint, ChainSummary, Derived, RunManifest, SapgSummary, MANIFEST};
use crate::output;

// Noise streams of the run seed.
const MASK_STREAM: u64 = 100;
const NOISE_STREAM: u64 = 101;

/// Largest lag written by `diagnose`.
const MAX_ACF_LAG: usize = 200;

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn load_truth(cfg: &ExperimentConfig) -> Result<ImageGrid> {
    if !cfg.image.is_file() {
        return Err(config(format!("image {} not found", cfg.image.display())));
    }
    let is_raw = cfg.image.extension().is_some_and(|e| e == "grid");
    let img = if is_raw { read_raw(&cfg.image)? } else { read_gray(&cfg.image)? };
    match cfg.crop {
        Some(size) => Ok(img.center_crop(size)?),
        None => Ok(img),
    }
}

fn operator(cfg: &ExperimentConfig, rows: usize, cols: usize) -> Result<LinearForwardOperator> {
    Ok(match cfg.experiment {
        Experiment::Deblur => make_uniform_blur(cfg.blur_size.expect("validated"), rows, cols)?,
        Experiment::Inpaint => {
            let frac = cfg.observed_fraction.expect("validated");
            make_inpainting(frac, rows, cols, &mut NoiseSource::new(cfg.seed, MASK_STREAM))?
        }
    })
}

/// Generates the observation: `y.grid`, `y.png`, `truth.grid`, the mask for
/// inpainting, and a manifest carrying `sigma2` and `L_f`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let truth = load_truth(cfg)?;
    let (rows, cols) = truth.shape();
    let op = operator(cfg, rows, cols)?;
    let obs = simulate_observation(&truth, &op, cfg.snr_db, &mut NoiseSource::new(cfg.seed, NOISE_STREAM))?;
    let lik = GaussianLikelihood::new(op, obs)?;

    let dir = cfg.observation_dir();
    output::create_dir(&dir)?;
    let y = &lik.observation().y;
    let y_path = output::raw(&dir, "y", y)?;
    output::image(&dir, "y", y)?;
    output::raw(&dir, "truth", &truth)?;
    output::image(&dir, "truth", &truth)?;
    if let Some(mask) = lik.operator().mask() {
        let m = ImageGrid::new(rows, cols, mask.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect())?;
        output::image_with(&dir, "mask", &m, Intensity::Clamp)?;
    }

    let l_f = lik.lipschitz();
    let derived = Derived {
        rows,
        cols,
        sigma2: lik.sigma2(),
        observed: lik.operator().observed_count(),
        l_f: Some(l_f),
        lambda: Some(cfg.lambda_rule.lambda(l_f)),
        ..Derived::default()
    };
    let raw = std::fs::read(&y_path).at(&y_path)?;
    let mut m = RunManifest::new("simulate", cfg, fingerprint(&raw), derived);
    m.timings.insert("simulate".into(), secs(start));
    m.write(&dir)
}

/// An observation loaded back from `simulate` output.
struct Problem {
    lik: GaussianLikelihood,
    truth: ImageGrid,
    fingerprint: String,
}

impl Problem {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.observation_dir();
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Err(CliError::Missing { what: "observation", path, needs: "simulate" });
        }
        let m = RunManifest::read(&path)?;
        let (a, b) = (&m.config, cfg);
        if a.experiment != b.experiment
            || a.crop != b.crop
            || a.blur_size != b.blur_size
            || a.observed_fraction != b.observed_fraction
            || a.snr_db != b.snr_db
        {
            return Err(config(format!(
                "the observation in {} was simulated with a different setup; re-run `simulate`",
                dir.display()
            )));
        }
        let y = read_raw(dir.join("y.grid"))?;
        let truth = read_raw(dir.join("truth.grid"))?;
        // The mask is a function of the simulation seed.
        let op = operator(a, y.rows(), y.cols())?;
        let obs = Observation { y, sigma2: m.derived.sigma2, snr_db: a.snr_db };
        Ok(Self { lik: GaussianLikelihood::new(op, obs)?, truth, fingerprint: m.observation })
    }

    fn derived(&self, cfg: &ExperimentConfig) -> Derived {
        let l_f = self.lik.lipschitz();
        let (rows, cols) = self.lik.operator().shape();
        Derived {
            rows,
            cols,
            sigma2: self.lik.sigma2(),
            observed: self.lik.operator().observed_count(),
            l_f: Some(l_f),
            lambda: Some(cfg.lambda_rule.lambda(l_f)),
            ..Derived::default()
        }
    }
}

/// Runs SAPG from `theta0 = 0.04`, `rho2_0 = sigma2` and records the
/// averaged estimates for `sample` to pick up.
pub fn sapg(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let problem = Problem::load(cfg)?;
    let lik = &problem.lik;
    let mut derived = problem.derived(cfg);
    let lambda = derived.lambda.expect("set by derived");

    let mut sc = SapgConfig::for_problem(lik.dim(), lik.sigma2(), cfg.sapg_max_iters)?;
    sc.seed = cfg.seed;
    if let Some(beta) = cfg.sapg_beta {
        sc.beta = beta;
    }
    let prior = PriorDescriptor::tv(sc.theta0, lambda)?;
    let dir = cfg.sapg_dir();
    output::create_dir(&dir)?;
    let start = Instant::now();
    let write_trace = |t: &SapgTrace| -> Result<()> { Ok(t.write_csv_file(dir.join("sapg_trace.csv"))?) };
    let trace = match sapg_run(&sc, lik, &prior) {
        Ok(t) => t,
        Err(failure) => {
            write_trace(&failure.trace)?;
            return Err(failure.source.into());
        }
    };
    let elapsed = secs(start);
    write_trace(&trace)?;

    let (theta, rho2) = trace.estimate();
    let lip = LipschitzInfo::new(lik.lipschitz(), lambda, rho2)?;
    derived.theta = Some(theta);
    derived.rho2 = Some(rho2);
    derived.l = Some(lip.l);
    derived.l_a = Some(lip.l_a);
    let mut m = RunManifest::new("sapg", cfg, problem.fingerprint.clone(), derived);
    m.timings.insert("sapg".into(), elapsed);
    m.grad_evals = trace.grad_evals;
    m.sapg = Some(SapgSummary { theta, rho2, iterations: trace.iterations(), stopped_at: trace.stopped_at });
    m.write(&dir)
}

/// Resolves `"sapg"` parameters from the SAPG manifest of the same
/// observation.
fn resolve(cfg: &ExperimentConfig, fingerprint: &str) -> Result<(f64, Option<f64>)> {
    let needs_sapg = cfg.theta == Param::Sapg || cfg.rho2 == Some(Param::Sapg);
    let sapg = if needs_sapg {
        let path = cfg.sapg_dir().join(MANIFEST);
        if !path.is_file() {
            return Err(CliError::Missing { what: "SAPG estimate", path, needs: "sapg" });
        }
        let m = RunManifest::read(&path)?;
        if m.observation != fingerprint {
            return Err(CliError::Mismatch(format!(
                "{} was estimated on another observation",
                path.display()
            )));
        }
        m.sapg.ok_or_else(|| CliError::Parse { path, msg: "no SAPG summary".into() })?.into()
    } else {
        None
    };
    let pick = |p: Param, from: fn(&SapgSummary) -> f64| match p {
        Param::Value(v) => v,
        Param::Sapg => from(sapg.as_ref().expect("loaded above")),
    };
    Ok((pick(cfg.theta, |s| s.theta), cfg.rho2.map(|p| pick(p, |s| s.rho2))))
}

/// MSE of the running posterior mean against the truth.
struct MseTrace<'a> {
    mean: PosteriorMean,
    truth: &'a ImageGrid,
    values: Vec<f64>,
}

impl Observer for MseTrace<'_> {
    fn observe(&mut self, state: &ChainState) -> latent_langevin::Result<()> {
        self.mean.push(state.estimate())?;
        self.values.push(mse(&self.mean.mean()?, self.truth)?);
        Ok(())
    }
}

/// Writes `index, iteration, grad_evals, <name>` for a trace of retained
/// states.
fn write_trace(path: &Path, name: &str, values: &[f64], cfg: &ExperimentConfig, per_step: u64) -> Result<()> {
    let rows: Vec<[String; 4]> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let iter = cfg.burn_in + 1 + i as u64 * cfg.thinning;
            [i.to_string(), iter.to_string(), (iter * per_step).to_string(), v.to_string()]
        })
        .collect();
    output::table(path, &["index", "iteration", "grad_evals", name], &rows)
}

/// Runs the configured sampler from `A^T y` and writes its traces, the
/// posterior mean, std maps, the slowest-component series and an ESS row.
pub fn sample(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let problem = Problem::load(cfg)?;
    let lik = &problem.lik;
    let (theta, rho2) = resolve(cfg, &problem.fingerprint)?;
    let kind = cfg.sampler.0;
    let mut derived = problem.derived(cfg);
    let lambda = derived.lambda.expect("set by derived");
    let prior = PriorDescriptor::tv(theta, lambda)?;
    // Canonical kernels ignore rho2; sigma2 only satisfies validation.
    let rho2_or = rho2.unwrap_or(lik.sigma2());
    let settings = SamplerSettings {
        kind,
        stages: cfg.stages(),
        delta_frac: cfg.delta_frac,
        seed: cfg.seed,
        ..SamplerSettings::default()
    };
    let mut sampler = Sampler::new(&settings, lik, &prior, rho2_or)?;
    let lip = LipschitzInfo::new(lik.lipschitz(), lambda, rho2_or)?;
    derived.theta = Some(theta);
    derived.rho2 = rho2;
    derived.l = Some(lip.l);
    derived.l_a = kind.is_latent().then_some(lip.l_a);
    derived.delta = Some(sampler.delta());
    derived.l_s = sampler.coeffs().map(|c| c.l_s);
    let per_step = sampler.grad_evals_per_step();

    let (rows, cols) = lik.operator().shape();
    let mut logpost = SeriesObserver::new(
        ScalarSeries::new("log_posterior", cfg.thinning, cfg.thinning * per_step),
        |s: &ChainState| log_posterior(s.estimate(), lik, &prior),
    );
    let mut mse_trace = MseTrace { mean: PosteriorMean::new(), truth: &problem.truth, values: Vec::new() };
    let mut std_maps = MultiscaleStats::new(rows, cols, &STD_FACTORS);
    let mut window = SampleWindow::new(cfg.keep_samples);
    let chain = ChainConfig { n_iters: cfg.n_samples, burn_in: cfg.burn_in, thinning: cfg.thinning };
    let summary = run_chain(
        &mut sampler,
        ChainState::new(lik.adjoint_data().clone()),
        &chain,
        &mut [&mut logpost, &mut mse_trace, &mut std_maps, &mut window],
    )?;

    let dir = cfg.sample_dir();
    output::create_dir(&dir)?;
    write_trace(&dir.join("log_posterior.csv"), "log_posterior", &logpost.series.values, cfg, per_step)?;
    write_trace(&dir.join("mse.csv"), "mse", &mse_trace.values, cfg, per_step)?;
    let mean = mse_trace.mean.mean()?;
    output::raw(&dir, "mean", &mean)?;
    output::image(&dir, "mean", &mean)?;
    if summary.retained >= 2 {
        for f in std_maps.factors() {
            output::image(&dir, &format!("std_x{f}"), &std_maps.std(f)?)?;
        }
    }
    let ess_slowest = if window.len() >= 2 {
        let slow = slowest_component(&window.samples())?;
        slow.series.write_csv(std::fs::File::create(dir.join("slowest.csv")).at(dir.join("slowest.csv"))?)?;
        Some(ess(&slow.series.values)?)
    } else {
        None
    };
    let ess_lp = if logpost.series.len() >= 2 { Some(ess(&logpost.series.values)?) } else { None };
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let seconds = summary.elapsed.as_secs_f64();
    output::table(
        &dir.join("ess.csv"),
        &["sampler", "retained", "grad_evals", "ess_slowest", "ess_log_posterior"],
        &[[
            kind.name().to_string(),
            summary.retained.to_string(),
            summary.grad_evals.to_string(),
            fmt(ess_slowest),
            fmt(ess_lp),
        ]],
    )?;

    let mut resolved = cfg.clone();
    resolved.theta = Param::Value(theta);
    resolved.rho2 = rho2.map(Param::Value);
    let mut m = RunManifest::new("sample", &resolved, problem.fingerprint.clone(), derived);
    m.timings.insert("chain".into(), seconds);
    m.grad_evals = summary.grad_evals;
    m.chain = Some(ChainSummary {
        iterations: cfg.n_samples,
        retained: summary.retained,
        ess_slowest,
        ess_log_posterior: ess_lp,
        final_mse: mse_trace.values.last().copied(),
    });
    m.write(&dir)
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST)
    } else {
        p.to_path_buf()
    }
}

/// ACF and ESS of every trace a sample run wrote, as `acf_<trace>.csv` and
/// `diagnostics.csv` in the run directory.
pub fn diagnose(run: &Path) -> Result<PathBuf> {
    let path = manifest_path(run);
    let m = RunManifest::read(&path)?;
    if m.command != "sample" {
        return Err(config(format!("{} is not a sample run", path.display())));
    }
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut rows = Vec::new();
    for (file, column) in
        [("log_posterior.csv", "log_posterior"), ("mse.csv", "mse"), ("slowest.csv", "slowest_component")]
    {
        let p = dir.join(file);
        if !p.is_file() {
            continue;
        }
        let values = output::read_column(&p, column)?;
        if values.len() < 2 {
            continue;
        }
        let rho = acf(&values, MAX_ACF_LAG.min(values.len() - 1))?;
        let acf_rows: Vec<[String; 2]> =
            rho.iter().enumerate().map(|(k, r)| [k.to_string(), r.to_string()]).collect();
        output::table(&dir.join(format!("acf_{column}.csv")), &["lag", "acf"], &acf_rows)?;
        let e = ess(&values)?;
        rows.push([
            column.to_string(),
            values.len().to_string(),
            e.to_string(),
            (e / m.grad_evals as f64).to_string(),
        ]);
    }
    let out = dir.join("diagnostics.csv");
    output::table(&out, &["series", "n", "ess", "ess_per_grad_eval"], &rows)?;
    Ok(out)
}

/// Joint ESS table with speed-ups relative to the MYULA run (or the first
/// run when there is none), and MSE traces aligned on gradient evaluations.
pub fn compare(runs: &[PathBuf], out: &Path) -> Result<PathBuf> {
    if runs.len() < 2 {
        return Err(config("compare needs at least two runs"));
    }
    let mut loaded = Vec::new();
    for r in runs {
        let path = manifest_path(r);
        let m = RunManifest::read(&path)?;
        if m.command != "sample" {
            return Err(config(format!("{} is not a sample run", path.display())));
        }
        loaded.push((path, m));
    }
    let first = &loaded[0].1.observation;
    if let Some((p, _)) = loaded.iter().find(|(_, m)| &m.observation != first) {
        return Err(CliError::Mismatch(format!(
            "{} and {} were run on different observations",
            loaded[0].0.display(),
            p.display()
        )));
    }
    let mut labels: Vec<String> = Vec::new();
    for (_, m) in &loaded {
        let base = m.config.sampler.to_string();
        let n = labels.iter().filter(|l| l.split('#').next() == Some(base.as_str())).count();
        labels.push(if n == 0 { base } else { format!("{base}#{}", n + 1) });
    }
    let ess_of = |(path, m): &(PathBuf, RunManifest)| {
        m.chain.as_ref().and_then(|c| c.ess_slowest).ok_or_else(|| {
            config(format!(
                "{} has no slowest-component ESS; re-run with --keep-samples >= 2",
                path.display()
            ))
        })
    };
    let efficiency: Vec<f64> =
        loaded.iter().map(|r| Ok(ess_of(r)? / r.1.grad_evals as f64)).collect::<Result<_>>()?;
    let reference = loaded.iter().position(|(_, m)| m.config.sampler.0 == SamplerKind::Myula).unwrap_or(0);

    output::create_dir(out)?;
    let mut rows = Vec::new();
    for (i, ((path, m), label)) in loaded.iter().zip(&labels).enumerate() {
        rows.push([
            label.clone(),
            path.display().to_string(),
            ess_of(&loaded[i])?.to_string(),
            m.grad_evals.to_string(),
            m.timings.get("chain").copied().unwrap_or(0.0).to_string(),
            format!("{:.2}", efficiency[i] / efficiency[reference]),
        ]);
    }
    let table = out.join("compare.csv");
    output::table(&table, &["run", "manifest", "ess", "grad_evals", "seconds", "speedup"], &rows)?;

    // Each trace is carried forward (last value at or before a given count)
    // onto the union of all gradient-evaluation counts.
    let mut traces = Vec::new();
    for (path, _) in &loaded {
        let p = path.parent().unwrap_or(Path::new(".")).join("mse.csv");
        let g = output::read_column(&p, "grad_evals")?;
        let v = output::read_column(&p, "mse")?;
        traces.push((g, v));
    }
    let mut grid: Vec<f64> = traces.iter().flat_map(|t| t.0.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut cursor = vec![0usize; traces.len()];
    let mut aligned = Vec::with_capacity(grid.len());
    for &g in &grid {
        let mut row = vec![format!("{g}")];
        for (t, c) in traces.iter().zip(cursor.iter_mut()) {
            while *c < t.0.len() && t.0[*c] <= g {
                *c += 1;
            }
            row.push(if *c == 0 { String::new() } else { t.1[*c - 1].to_string() });
        }
        aligned.push(row);
    }
    let mut header = vec!["grad_evals"];
    header.extend(labels.iter().map(String::as_str));
    output::table(&out.join("mse_aligned.csv"), &header, &aligned)?;
    Ok(table)
}
