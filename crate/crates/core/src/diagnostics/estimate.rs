use crate::error::{invalid, Error, Result};
use crate::forward::GaussianLikelihood;
use crate::grid::ImageGrid;
use crate::prior::{PriorDescriptor, Regulariser, TvSolver};

/// Mean squared error per pixel.
pub fn mse(estimate: &ImageGrid, truth: &ImageGrid) -> Result<f64> {
    estimate.check_shape(truth)?;
    Ok(estimate.sub(truth).norm_sq() / truth.len() as f64)
}

/// Unnormalised `log p(x | y, theta) = -f_y(x) - theta g(x)` with the
/// original, non-smoothed regulariser.
pub fn log_posterior(x: &ImageGrid, lik: &GaussianLikelihood, prior: &PriorDescriptor) -> Result<f64> {
    Ok(-lik.value(x)? - prior.potential(x))
}

#[derive(Clone, Debug)]
pub struct MapEstimate {
    pub x: ImageGrid,
    /// Objective after each iteration, starting with the initial point.
    pub objective: Vec<f64>,
    pub converged: bool,
}

/// Proximal-gradient solution of `min_x f_y(x) + theta g(x)` from `A^T y`
/// with step `1/L_f`. Stops when the relative objective change falls below
/// `tol`; an objective increase is reported as a numerical failure.
pub fn map_estimate(
    lik: &GaussianLikelihood,
    regulariser: &Regulariser,
    theta: f64,
    iters: usize,
    tol: f64,
) -> Result<MapEstimate> {
    if iters == 0 {
        return Err(invalid("MAP needs at least one iteration"));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(invalid(format!("theta must be non-negative, got {theta}")));
    }
    let l_f = lik.lipschitz();
    if !(l_f > 0.0) {
        return Err(invalid("likelihood has a zero Lipschitz constant"));
    }
    // The descent guarantee needs an accurate prox.
    let regulariser = match regulariser {
        Regulariser::TotalVariation(s) => {
            Regulariser::TotalVariation(TvSolver { max_iter: 5000, tol: 1e-9, ..*s })
        }
        other => other.clone(),
    };
    let objective = |x: &ImageGrid| -> Result<f64> { Ok(lik.value(x)? + theta * regulariser.value(x)) };
    let mut x = lik.adjoint_data().clone();
    let mut trace = vec![objective(&x)?];
    let mut converged = false;
    for _ in 0..iters {
        let mut v = x.clone();
        v.axpy(-1.0 / l_f, &lik.grad(&x)?);
        let next = if theta > 0.0 { regulariser.prox(&v, theta / l_f)? } else { v };
        let obj = objective(&next)?;
        let prev = *trace.last().expect("initial objective");
        if obj > prev + 1e-10 * (1.0 + prev.abs()) {
            return Err(Error::Numerical(format!("MAP objective increased from {prev} to {obj}")));
        }
        x = next;
        trace.push(obj);
        if (prev - obj).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(MapEstimate { x, objective: trace, converged })
}
