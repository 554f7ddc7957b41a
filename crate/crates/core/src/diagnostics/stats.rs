use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::grid::{downsample_by_averaging, ImageGrid};
use crate::samplers::{ChainState, Observer};

/// Streaming per-pixel mean and sum of squared deviations (Welford).
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: ImageGrid,
    m2: ImageGrid,
}

impl RunningStats {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { count: 0, mean: ImageGrid::zeros(rows, cols), m2: ImageGrid::zeros(rows, cols) }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &ImageGrid) -> Result<()> {
        self.mean.check_shape(x)?;
        self.count += 1;
        let n = self.count as f64;
        let mean = self.mean.as_mut_slice();
        let m2 = self.m2.as_mut_slice();
        for (i, &v) in x.as_slice().iter().enumerate() {
            let delta = v - mean[i];
            mean[i] += delta / n;
            m2[i] += delta * (v - mean[i]);
        }
        Ok(())
    }

    /// Combines two streams as if their samples had been pushed into one.
    pub fn merge(&mut self, other: &RunningStats) -> Result<()> {
        self.mean.check_shape(&other.mean)?;
        if other.count == 0 {
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mean = self.mean.as_mut_slice();
        let m2 = self.m2.as_mut_slice();
        for i in 0..mean.len() {
            let delta = other.mean.as_slice()[i] - mean[i];
            mean[i] += delta * nb / n;
            m2[i] += other.m2.as_slice()[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> Result<&ImageGrid> {
        if self.count == 0 {
            return Err(Error::Empty("no samples accumulated".into()));
        }
        Ok(&self.mean)
    }

    /// Unbiased per-pixel variance `M2 / (n - 1)`.
    pub fn variance(&self) -> Result<ImageGrid> {
        if self.count < 2 {
            return Err(Error::Empty(format!("variance needs two samples, have {}", self.count)));
        }
        let n1 = (self.count - 1) as f64;
        Ok(self.m2.map(|v| v.max(0.0) / n1))
    }

    pub fn std(&self) -> Result<ImageGrid> {
        Ok(self.variance()?.map(f64::sqrt))
    }
}

/// Per-pixel standard deviation of the accumulated samples.
pub fn pixelwise_std(stats: &RunningStats) -> Result<ImageGrid> {
    stats.std()
}

/// Running statistics of the sample stream downsampled by several factors.
#[derive(Clone, Debug)]
pub struct MultiscaleStats {
    levels: Vec<(usize, RunningStats)>,
}

pub const STD_FACTORS: [usize; 4] = [1, 2, 4, 8];

impl MultiscaleStats {
    /// Factors that do not divide the image are skipped.
    pub fn new(rows: usize, cols: usize, factors: &[usize]) -> Self {
        let levels = factors
            .iter()
            .filter(|&&f| f > 0 && rows.is_multiple_of(f) && cols.is_multiple_of(f))
            .map(|&f| (f, RunningStats::new(rows / f, cols / f)))
            .collect();
        Self { levels }
    }

    pub fn push(&mut self, x: &ImageGrid) -> Result<()> {
        for (f, stats) in &mut self.levels {
            if *f == 1 {
                stats.push(x)?;
            } else {
                stats.push(&downsample_by_averaging(x, *f)?)?;
            }
        }
        Ok(())
    }

    pub fn factors(&self) -> Vec<usize> {
        self.levels.iter().map(|(f, _)| *f).collect()
    }

    pub fn stats(&self, factor: usize) -> Result<&RunningStats> {
        self.levels
            .iter()
            .find(|(f, _)| *f == factor)
            .map(|(_, s)| s)
            .ok_or_else(|| invalid(format!("factor {factor} not tracked")))
    }

    /// Standard deviation of the stream downsampled by `factor`.
    pub fn std(&self, factor: usize) -> Result<ImageGrid> {
        self.stats(factor)?.std()
    }
}

impl Observer for MultiscaleStats {
    fn observe(&mut self, state: &ChainState) -> Result<()> {
        self.push(state.estimate())
    }
}

/// Posterior-mean accumulator over chain estimates. For latent chains these
/// are conditional means, which makes the average Rao-Blackwellised.
#[derive(Clone, Debug)]
pub struct PosteriorMean {
    sum: Option<ImageGrid>,
    count: u64,
}

impl Default for PosteriorMean {
    fn default() -> Self {
        Self::new()
    }
}

impl PosteriorMean {
    pub fn new() -> Self {
        Self { sum: None, count: 0 }
    }

    pub fn push(&mut self, x: &ImageGrid) -> Result<()> {
        match &mut self.sum {
            Some(s) => {
                s.check_shape(x)?;
                s.axpy(1.0, x);
            }
            None => self.sum = Some(x.clone()),
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Result<ImageGrid> {
        match &self.sum {
            Some(s) => Ok(s.scaled(1.0 / self.count as f64)),
            None => Err(Error::Empty("posterior mean of an empty chain".into())),
        }
    }
}

impl Observer for PosteriorMean {
    fn observe(&mut self, state: &ChainState) -> Result<()> {
        self.push(state.estimate())
    }
}

/// Rao-Blackwellised posterior mean over a sequence of chain states:
/// conditional means for latent chains, plain averages otherwise.
pub fn rb_posterior_mean<'a>(states: impl IntoIterator<Item = &'a ChainState>) -> Result<ImageGrid> {
    let mut acc = PosteriorMean::new();
    for s in states {
        acc.push(s.estimate())?;
    }
    acc.mean()
}

/// A named scalar trace, such as the log-posterior or the MSE of the running
/// mean, with enough metadata to align traces by gradient evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub thinning: u64,
    pub grad_evals_per_entry: u64,
}

impl ScalarSeries {
    pub fn new(name: impl Into<String>, thinning: u64, grad_evals_per_entry: u64) -> Self {
        Self { name: name.into(), values: Vec::new(), thinning, grad_evals_per_entry }
    }

    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), values, thinning: 1, grad_evals_per_entry: 1 }
    }

    pub fn push(&mut self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite value in series {}", self.name)));
        }
        self.values.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every `k`-th entry, starting with the `k`-th.
    pub fn thinned(&self, k: usize) -> ScalarSeries {
        let k = k.max(1);
        ScalarSeries {
            name: self.name.clone(),
            values: self.values.iter().skip(k - 1).step_by(k).copied().collect(),
            thinning: self.thinning * k as u64,
            grad_evals_per_entry: self.grad_evals_per_entry * k as u64,
        }
    }

    /// CSV with columns `index, grad_evals, <name>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["index", "grad_evals", self.name.as_str()]).map_err(io)?;
        for (i, v) in self.values.iter().enumerate() {
            let evals = (i as u64 + 1) * self.grad_evals_per_entry;
            out.write_record([i.to_string(), evals.to_string(), v.to_string()]).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Observer that appends `f(state)` to a series.
pub struct SeriesObserver<F> {
    pub series: ScalarSeries,
    f: F,
}

impl<F: FnMut(&ChainState) -> Result<f64>> SeriesObserver<F> {
    pub fn new(series: ScalarSeries, f: F) -> Self {
        Self { series, f }
    }
}

impl<F: FnMut(&ChainState) -> Result<f64>> Observer for SeriesObserver<F> {
    fn observe(&mut self, state: &ChainState) -> Result<()> {
        let v = (self.f)(state)?;
        self.series.push(v)
    }
}

/// Keeps the estimates of the most recent `capacity` retained states.
#[derive(Clone, Debug)]
pub struct SampleWindow {
    capacity: usize,
    samples: std::collections::VecDeque<ImageGrid>,
}

impl SampleWindow {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, samples: Default::default() }
    }

    pub fn samples(&self) -> Vec<ImageGrid> {
        self.samples.iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl Observer for SampleWindow {
    fn observe(&mut self, state: &ChainState) -> Result<()> {
        if self.capacity == 0 {
            return Ok(());
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(state.estimate().clone());
        Ok(())
    }
}
