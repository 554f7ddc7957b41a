//! Estimators and convergence diagnostics for sampler output.

mod acf;
mod estimate;
mod pca;
mod stats;

pub use acf::{acf, ess};
pub use estimate::{log_posterior, map_estimate, mse, MapEstimate};
pub use pca::{slowest_component, SlowestComponent};
pub use stats::{
    pixelwise_std, rb_posterior_mean, MultiscaleStats, PosteriorMean, RunningStats, SampleWindow,
    ScalarSeries, SeriesObserver, STD_FACTORS,
};
