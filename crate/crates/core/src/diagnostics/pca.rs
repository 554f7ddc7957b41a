use super::stats::ScalarSeries;
use crate::error::{invalid, Result};
use crate::grid::ImageGrid;

/// Leading principal direction of a sample set and the projections onto it.
#[derive(Clone, Debug)]
pub struct SlowestComponent {
    pub series: ScalarSeries,
    pub eigenvalue: f64,
    /// Unit vector, sign fixed so that its largest-magnitude entry is positive.
    pub eigenvector: ImageGrid,
    pub iterations: usize,
}

const MAX_POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-8;

/// Power iteration on the empirical covariance of `samples`, applied without
/// forming the matrix.
pub fn slowest_component(samples: &[ImageGrid]) -> Result<SlowestComponent> {
    if samples.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    let first = &samples[0];
    for s in samples {
        first.check_shape(s)?;
    }
    let n = samples.len() as f64;
    let mut mean = ImageGrid::zeros(first.rows(), first.cols());
    for s in samples {
        mean.axpy(1.0 / n, s);
    }
    let centered: Vec<ImageGrid> = samples.iter().map(|s| s.sub(&mean)).collect();
    let cov = |v: &ImageGrid| {
        let mut out = ImageGrid::zeros(v.rows(), v.cols());
        for c in &centered {
            out.axpy(c.dot(v) / (n - 1.0), c);
        }
        out
    };

    // Start from C 1, which does not depend on the sample order.
    let mut v = cov(&ImageGrid::filled(first.rows(), first.cols(), 1.0));
    if v.norm() == 0.0 {
        let var = centered
            .iter()
            .fold(ImageGrid::zeros(first.rows(), first.cols()), |acc, c| acc.add(&c.map(|x| x * x)));
        let k = var
            .as_slice()
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0;
        let mut e = ImageGrid::zeros(first.rows(), first.cols());
        e.as_mut_slice()[k] = 1.0;
        v = cov(&e);
    }
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(invalid("samples have zero variance"));
    }
    v.scale(1.0 / norm);

    let mut eigenvalue = 0.0;
    let mut iterations = 0;
    for it in 1..=MAX_POWER_ITERS {
        iterations = it;
        let w = cov(&v);
        let lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w.scaled(1.0 / wn);
        let converged = (lambda - eigenvalue).abs() <= POWER_TOL * lambda.abs();
        eigenvalue = lambda;
        if converged {
            break;
        }
    }
    // Fix the sign, then report the Rayleigh quotient of the final vector.
    let (_, big) =
        v.as_slice().iter().fold((0.0, 0.0), |(m, s), &x| if x.abs() > m { (x.abs(), x) } else { (m, s) });
    if big < 0.0 {
        v.scale(-1.0);
    }
    eigenvalue = v.dot(&cov(&v));
    let values = samples.iter().map(|s| s.dot(&v)).collect();
    Ok(SlowestComponent {
        series: ScalarSeries::from_values("slowest_component", values),
        eigenvalue,
        eigenvector: v,
        iterations,
    })
}
