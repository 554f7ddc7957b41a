use crate::error::{invalid, Result};

/// Damped Chebyshev coefficients of an `s`-stage SK-ROCK step.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevCoeffs {
    pub s: usize,
    pub eta: f64,
    /// Stability length: SK-ROCK is stable for `delta * Lip <= l_s`.
    pub l_s: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub mu1: f64,
    pub nu1: f64,
    pub k1: f64,
    // Indexed by stage j; entries 0 and 1 are unused.
    mu: Vec<f64>,
    nu: Vec<f64>,
    k: Vec<f64>,
}

pub const DEFAULT_ETA: f64 = 0.05;

impl ChebyshevCoeffs {
    /// `(mu_j, nu_j, k_j)` for `2 <= j <= s`.
    pub fn stage(&self, j: usize) -> (f64, f64, f64) {
        assert!((2..=self.s).contains(&j), "stage {j} outside 2..={}", self.s);
        (self.mu[j], self.nu[j], self.k[j])
    }
}

/// `T_0(x), ..., T_n(x)` and their derivatives, by the three-term recursions.
pub fn chebyshev_t(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![1.0; n + 1];
    let mut dt = vec![0.0; n + 1];
    if n >= 1 {
        t[1] = x;
        dt[1] = 1.0;
    }
    for j in 2..=n {
        t[j] = 2.0 * x * t[j - 1] - t[j - 2];
        dt[j] = 2.0 * t[j - 1] + 2.0 * x * dt[j - 1] - dt[j - 2];
    }
    (t, dt)
}

pub fn chebyshev_coeffs(s: usize, eta: f64) -> Result<ChebyshevCoeffs> {
    if s < 2 {
        return Err(invalid(format!("SK-ROCK needs at least 2 stages, got {s}")));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(invalid(format!("damping must be non-negative, got {eta}")));
    }
    let sf = s as f64;
    let l_s = (sf - 0.5).powi(2) * (2.0 - 4.0 * eta / 3.0) - 1.5;
    if !(l_s > 0.0) {
        return Err(invalid(format!("stability length {l_s} is not positive")));
    }
    let omega0 = 1.0 + eta / (sf * sf);
    let (t, dt) = chebyshev_t(s, omega0);
    let omega1 = t[s] / dt[s];
    let mut mu = vec![0.0; s + 1];
    let mut nu = vec![0.0; s + 1];
    let mut k = vec![0.0; s + 1];
    for j in 2..=s {
        mu[j] = 2.0 * omega1 * t[j - 1] / t[j];
        nu[j] = 2.0 * omega0 * t[j - 1] / t[j];
        k[j] = 1.0 - nu[j];
    }
    Ok(ChebyshevCoeffs {
        s,
        eta,
        l_s,
        omega0,
        omega1,
        mu1: omega1 / omega0,
        nu1: sf * omega1 / 2.0,
        k1: sf * omega1 / omega0,
        mu,
        nu,
        k,
    })
}
