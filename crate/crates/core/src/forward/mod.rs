//! Gaussian likelihoods for deblurring and inpainting, and exact sampling of
//! the Gaussian conditional `p(x | y, z, rho2)` of the split model.

mod likelihood;
mod operator;

pub use likelihood::{simulate_observation, GaussianLikelihood, Observation};
pub use operator::{make_inpainting, make_uniform_blur, LinearForwardOperator, OperatorKind};
