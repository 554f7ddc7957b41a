use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

/// Biased-normalised autocorrelation `rho_k = c_k / c_0`, `k = 0..=max_lag`,
/// computed by zero-padded FFT.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(invalid(format!("series of length {n} too short for lag {max_lag}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in series".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let magnitude = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Rounding alone leaves deviations of order 1e-16 |v| in a constant series.
    if var.sqrt() <= 1e-12 * magnitude || var == 0.0 {
        return Err(invalid("series has zero variance"));
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = series
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in &mut buf {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    Ok(buf[..=max_lag].iter().map(|v| v.re / c0).collect())
}

/// Effective sample size `N / (1 + 2 sum_{k=1}^{K-1} rho_k)`, where `K` is the
/// first lag whose autocorrelation drops below 0.05.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(invalid("ESS needs at least two values"));
    }
    let rho = acf(series, n - 1)?;
    let mut sum = 0.0;
    for &r in &rho[1..] {
        if r < 0.05 {
            break;
        }
        sum += r;
    }
    Ok(n as f64 / (1.0 + 2.0 * sum))
}
