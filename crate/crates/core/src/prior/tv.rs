use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::grid::ImageGrid;

/// Horizontal and vertical forward differences of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub h: ImageGrid,
    pub v: ImageGrid,
}

/// Forward differences with Neumann boundary: zero on the last column (`h`)
/// and last row (`v`).
pub fn gradient(x: &ImageGrid) -> VectorField {
    let (rows, cols) = x.shape();
    let h = ImageGrid::from_fn(rows, cols, |r, c| if c + 1 < cols { x[(r, c + 1)] - x[(r, c)] } else { 0.0 });
    let v = ImageGrid::from_fn(rows, cols, |r, c| if r + 1 < rows { x[(r + 1, c)] - x[(r, c)] } else { 0.0 });
    VectorField { h, v }
}

/// Negative adjoint of [`gradient`]: `<grad u, p> = -<u, div p>`.
pub fn divergence(p: &VectorField) -> ImageGrid {
    let (rows, cols) = p.h.shape();
    ImageGrid::from_fn(rows, cols, |r, c| div_h(p.h.row(r), c, cols) + div_v(&p.v, r, c, rows))
}

#[inline]
fn div_h(row: &[f64], c: usize, cols: usize) -> f64 {
    let here = if c + 1 < cols { row[c] } else { 0.0 };
    let left = if c > 0 { row[c - 1] } else { 0.0 };
    here - left
}

#[inline]
fn div_v(v: &ImageGrid, r: usize, c: usize, rows: usize) -> f64 {
    let here = if r + 1 < rows { v[(r, c)] } else { 0.0 };
    let up = if r > 0 { v[(r - 1, c)] } else { 0.0 };
    here - up
}

/// Isotropic total variation `sum_i sqrt((D_h x)_i^2 + (D_v x)_i^2)`.
pub fn tv(x: &ImageGrid) -> f64 {
    let (rows, cols) = x.shape();
    let s = x.as_slice();
    let mut acc = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let dh = if c + 1 < cols { s[i + 1] - s[i] } else { 0.0 };
            let dv = if r + 1 < rows { s[i + cols] - s[i] } else { 0.0 };
            acc += (dh * dh + dv * dv).sqrt();
        }
    }
    acc
}

/// Settings of the dual solver behind [`prox_tv`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvSolver {
    pub max_iter: usize,
    /// Stop once `||p_k+1 - p_k|| / ||p_k+1||` drops below this.
    pub tol: f64,
    /// Certified accuracy: the result has duality gap at most
    /// `gap_tol * (1 + |objective|)`. If the two rules above stop short of
    /// it, iterations continue in blocks of ten up to `gap_iter`.
    pub gap_tol: f64,
    pub gap_iter: usize,
    pub exec: Execution,
}

impl Default for TvSolver {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-5, gap_tol: 1e-6, gap_iter: 20_000, exec: Execution::default() }
    }
}

/// Output of the TV prox with its accuracy certificate.
#[derive(Clone, Debug)]
pub struct ProxReport {
    pub u: ImageGrid,
    pub iterations: usize,
    /// Primal objective `w TV(u) + ||u - x||^2 / 2`.
    pub objective: f64,
    /// Primal minus dual objective; non-negative.
    pub gap: f64,
}

#[derive(Clone, Copy, Default)]
struct Dual {
    p: [f64; 2],
    r: [f64; 2],
}

const DUAL_STEP: f64 = 1.0 / 8.0;

impl TvSolver {
    /// `argmin_u w TV(u) + ||x - u||^2 / 2` with the certificate.
    ///
    /// Accelerated projected gradient on the dual `min_{|p_i| <= 1}
    /// ||div p - x / w||^2 / 2`, step 1/8; the primal point is
    /// `u = x - w div p`.
    pub fn prox_report(&self, x: &ImageGrid, w: f64) -> Result<ProxReport> {
        if !x.is_finite() {
            // Inside a chain this means the iterates have diverged.
            return Err(Error::Numerical("prox_tv input has non-finite entries".into()));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(invalid(format!("prox_tv weight must be positive, got {w}")));
        }
        let (rows, cols) = x.shape();
        let exec = self.exec.for_pixels(x.len());
        let f = x.as_slice();
        let inv_w = 1.0 / w;
        let mut dual = vec![Dual::default(); rows * cols];
        let mut resid = vec![0.0; rows * cols];
        let mut t = 1.0_f64;
        let mut iterations = 0;
        let cap = self.max_iter.max(self.gap_iter);
        let mut next_check = 0;

        loop {
            iterations += 1;
            // resid = div r - x / w
            exec.for_each_row_mut(&mut resid, cols, |r, out| {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = div_at(&dual, rows, cols, r, c, |d| d.r) - f[r * cols + c] * inv_w;
                }
            });
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            t = t_next;
            let resid = &resid;
            let sums = exec.map_rows_mut(&mut dual, cols, |r, row| {
                let mut change = 0.0;
                let mut size = 0.0;
                for (c, d) in row.iter_mut().enumerate() {
                    let i = r * cols + c;
                    let gh = if c + 1 < cols { resid[i + 1] - resid[i] } else { 0.0 };
                    let gv = if r + 1 < rows { resid[i + cols] - resid[i] } else { 0.0 };
                    let mut qh = d.r[0] + DUAL_STEP * gh;
                    let mut qv = d.r[1] + DUAL_STEP * gv;
                    let n = (qh * qh + qv * qv).sqrt();
                    if n > 1.0 {
                        qh /= n;
                        qv /= n;
                    }
                    let (dh, dv) = (qh - d.p[0], qv - d.p[1]);
                    change += dh * dh + dv * dv;
                    size += qh * qh + qv * qv;
                    d.r = [qh + momentum * dh, qv + momentum * dv];
                    d.p = [qh, qv];
                }
                (change, size)
            });
            let (change, size) = sums.into_iter().fold((0.0, 0.0), |(a, b), (c, s)| (a + c, b + s));
            let settled = size == 0.0 || change.sqrt() <= self.tol * size.sqrt();
            let due = settled || iterations >= self.max_iter;
            if (due && iterations >= next_check) || iterations >= cap {
                let report = primal(x, w, &dual, exec, iterations);
                if report.gap <= self.gap_tol * (1.0 + report.objective.abs()) || iterations >= cap {
                    return Ok(report);
                }
                next_check = iterations + 10;
            }
        }
    }
}

/// Primal point `x - w div p` and its certificate.
fn primal(x: &ImageGrid, w: f64, dual: &[Dual], exec: Execution, iterations: usize) -> ProxReport {
    let (rows, cols) = x.shape();
    let f = x.as_slice();
    let mut u = ImageGrid::zeros(rows, cols);
    exec.for_each_row_mut(u.as_mut_slice(), cols, |r, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = f[r * cols + c] - w * div_at(dual, rows, cols, r, c, |d| d.p);
        }
    });
    let fit = u.sub(x).norm_sq();
    let objective = w * tv(&u) + 0.5 * fit;
    let dual_value = 0.5 * (x.norm_sq() - u.norm_sq());
    ProxReport { u, iterations, objective, gap: (objective - dual_value).max(0.0) }
}

#[inline]
fn div_at(
    dual: &[Dual],
    rows: usize,
    cols: usize,
    r: usize,
    c: usize,
    pick: impl Fn(&Dual) -> [f64; 2],
) -> f64 {
    let i = r * cols + c;
    let here = pick(&dual[i]);
    let h = if c + 1 < cols { here[0] } else { 0.0 } - if c > 0 { pick(&dual[i - 1])[0] } else { 0.0 };
    let v = if r + 1 < rows { here[1] } else { 0.0 } - if r > 0 { pick(&dual[i - cols])[1] } else { 0.0 };
    h + v
}

/// `argmin_u w TV(u) + ||x - u||^2 / 2` with the default solver settings.
pub fn prox_tv(x: &ImageGrid, w: f64) -> Result<ImageGrid> {
    TvSolver::default().prox_report(x, w).map(|r| r.u)
}
