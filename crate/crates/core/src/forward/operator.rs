use crate::error::{dims, invalid, Result};
use crate::grid::{ComplexSpectrum, Fft2, ImageGrid, NoiseSource};
use rustfft::num_complex::Complex64;

/// Linear observation operator: a periodic blur or a pixel-subset mask.
///
/// Inpainting operators keep full-size grids: `apply` zeroes unobserved
/// pixels, and every likelihood term skips them.
#[derive(Clone, Debug)]
pub struct LinearForwardOperator {
    rows: usize,
    cols: usize,
    kind: OperatorKind,
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    CirculantBlur {
        size: usize,
        /// Eigenvalues: FFT of the centred, zero-padded kernel.
        eigenvalues: ComplexSpectrum,
        fft: Fft2,
    },
    Inpainting {
        mask: Vec<bool>,
        observed: usize,
    },
}

impl LinearForwardOperator {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// Every pixel observed with unit weight.
    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            kind: OperatorKind::Inpainting { mask: vec![true; rows * cols], observed: rows * cols },
        }
    }

    /// Observation mask; `None` for a blur (all pixels observed).
    pub fn mask(&self) -> Option<&[bool]> {
        match &self.kind {
            OperatorKind::Inpainting { mask, .. } => Some(mask),
            OperatorKind::CirculantBlur { .. } => None,
        }
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.mask().is_none_or(|m| m[i])
    }

    /// Number of observed components `m`.
    pub fn observed_count(&self) -> usize {
        match &self.kind {
            OperatorKind::Inpainting { observed, .. } => *observed,
            OperatorKind::CirculantBlur { .. } => self.dim(),
        }
    }

    pub fn eigenvalues(&self) -> Option<&ComplexSpectrum> {
        match &self.kind {
            OperatorKind::CirculantBlur { eigenvalues, .. } => Some(eigenvalues),
            OperatorKind::Inpainting { .. } => None,
        }
    }

    pub(crate) fn fft(&self) -> Option<&Fft2> {
        match &self.kind {
            OperatorKind::CirculantBlur { fft, .. } => Some(fft),
            OperatorKind::Inpainting { .. } => None,
        }
    }

    /// Largest squared singular value of the operator.
    pub fn norm_sq(&self) -> f64 {
        match &self.kind {
            OperatorKind::CirculantBlur { eigenvalues, .. } => {
                eigenvalues.as_slice().iter().fold(0.0, |m, e| m.max(e.norm_sqr()))
            }
            OperatorKind::Inpainting { observed, .. } => {
                if *observed > 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn check(&self, x: &ImageGrid) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(dims(format!(
                "operator is {}x{}, grid is {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.check(x)?;
        match &self.kind {
            OperatorKind::CirculantBlur { eigenvalues, fft, .. } => {
                let mut s = fft.forward(x)?;
                multiply(&mut s, eigenvalues, false);
                fft.inverse_into_real(s)
            }
            OperatorKind::Inpainting { mask, .. } => Ok(masked(x, mask)),
        }
    }

    pub fn adjoint(&self, v: &ImageGrid) -> Result<ImageGrid> {
        self.check(v)?;
        match &self.kind {
            OperatorKind::CirculantBlur { eigenvalues, fft, .. } => {
                let mut s = fft.forward(v)?;
                multiply(&mut s, eigenvalues, true);
                fft.inverse_into_real(s)
            }
            OperatorKind::Inpainting { mask, .. } => Ok(masked(v, mask)),
        }
    }
}

fn masked(x: &ImageGrid, mask: &[bool]) -> ImageGrid {
    let data = x.as_slice().iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    ImageGrid::new(x.rows(), x.cols(), data).expect("same shape")
}

pub(crate) fn multiply(s: &mut ComplexSpectrum, eig: &ComplexSpectrum, conjugate: bool) {
    for (a, e) in s.as_mut_slice().iter_mut().zip(eig.as_slice()) {
        *a *= if conjugate { e.conj() } else { *e };
    }
}

/// Periodic `size x size` box blur with entries `1 / size^2`.
pub fn make_uniform_blur(size: usize, rows: usize, cols: usize) -> Result<LinearForwardOperator> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(invalid(format!("blur size must be odd, got {size}")));
    }
    if size > rows.min(cols) {
        return Err(invalid(format!("blur size {size} exceeds grid {rows}x{cols}")));
    }
    let half = (size / 2) as isize;
    let weight = 1.0 / (size * size) as f64;
    let mut kernel = ImageGrid::zeros(rows, cols);
    for dr in -half..=half {
        for dc in -half..=half {
            let r = dr.rem_euclid(rows as isize) as usize;
            let c = dc.rem_euclid(cols as isize) as usize;
            kernel[(r, c)] = weight;
        }
    }
    let fft = Fft2::new(rows, cols);
    let mut eigenvalues = fft.forward(&kernel)?;
    // The box kernel is even, so its spectrum is real up to rounding.
    for e in eigenvalues.as_mut_slice() {
        *e = Complex64::new(e.re, 0.0);
    }
    Ok(LinearForwardOperator { rows, cols, kind: OperatorKind::CirculantBlur { size, eigenvalues, fft } })
}

/// Observes `round(fraction * rows * cols)` pixels chosen uniformly without
/// replacement.
pub fn make_inpainting(
    fraction: f64,
    rows: usize,
    cols: usize,
    noise: &mut NoiseSource,
) -> Result<LinearForwardOperator> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("observed fraction must lie in (0, 1], got {fraction}")));
    }
    let d = rows * cols;
    let m = (fraction * d as f64).round() as usize;
    let mut order: Vec<usize> = (0..d).collect();
    // Partial Fisher-Yates: the first m entries are a uniform m-subset.
    for i in 0..m.min(d.saturating_sub(1)) {
        let j = i + noise.index_below(d - i);
        order.swap(i, j);
    }
    let mut mask = vec![false; d];
    for &i in &order[..m] {
        mask[i] = true;
    }
    Ok(LinearForwardOperator { rows, cols, kind: OperatorKind::Inpainting { mask, observed: m } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_one_is_identity() {
        let op = make_uniform_blur(1, 4, 5).unwrap();
        for e in op.eigenvalues().unwrap().as_slice() {
            assert!((e.re - 1.0).abs() < 1e-14 && e.im == 0.0);
        }
    }

    #[test]
    fn dc_eigenvalue_is_one() {
        let op = make_uniform_blur(5, 16, 16).unwrap();
        assert!((op.eigenvalues().unwrap().get(0, 0).re - 1.0).abs() < 1e-14);
        assert!(op.norm_sq() <= 1.0 + 1e-12);
    }

    #[test]
    fn blur_rejects_even_or_oversized() {
        assert!(make_uniform_blur(4, 8, 8).is_err());
        assert!(make_uniform_blur(9, 8, 8).is_err());
    }

    #[test]
    fn inpainting_counts() {
        let mut n = NoiseSource::new(1, 0);
        let op = make_inpainting(0.6, 256, 256, &mut n).unwrap();
        assert_eq!(op.observed_count(), 39322);
        assert_eq!(op.mask().unwrap().iter().filter(|&&b| b).count(), 39322);

        let full = make_inpainting(1.0, 8, 8, &mut n).unwrap();
        assert_eq!(full.observed_count(), 64);
        let x = NoiseSource::new(2, 0).standard_normal_field(8, 8);
        assert_eq!(full.apply(&x).unwrap(), x);

        assert!(make_inpainting(0.0, 8, 8, &mut n).is_err());
        assert!(make_inpainting(1.5, 8, 8, &mut n).is_err());
    }

    #[test]
    fn inpainting_mask_is_reproducible() {
        let a = make_inpainting(0.3, 32, 32, &mut NoiseSource::new(5, 2)).unwrap();
        let b = make_inpainting(0.3, 32, 32, &mut NoiseSource::new(5, 2)).unwrap();
        assert_eq!(a.mask(), b.mask());
    }
}
