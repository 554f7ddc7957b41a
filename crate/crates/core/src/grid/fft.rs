use super::ImageGrid;
use crate::error::{dims, Result};
use crate::exec::Execution;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

/// Unnormalised 2D spectrum of an [`ImageGrid`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(dims(format!("re has {} entries, im has {}", re.len(), im.len())));
        }
        if rows == 0 || cols == 0 || re.len() != rows * cols {
            return Err(dims(format!("{} entries for {rows}x{cols}", re.len())));
        }
        let data = re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.im).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }
}

/// Planned forward/inverse 2D FFT for one grid shape.
///
/// The forward transform is unnormalised; the inverse divides by
/// `rows * cols`, so `inverse(forward(g)) == g`.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    exec: Execution,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self::with_execution(rows, cols, Execution::default())
    }

    pub fn with_execution(rows: usize, cols: usize, exec: Execution) -> Self {
        assert!(rows > 0 && cols > 0, "FFT of an empty grid");
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            exec: exec.for_pixels(rows * cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, g: &ImageGrid) -> Result<ComplexSpectrum> {
        self.check(g.shape())?;
        let mut data: Vec<Complex64> = g.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Ok(ComplexSpectrum::from_vec(self.rows, self.cols, data))
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse(&self, s: &ComplexSpectrum) -> Result<ImageGrid> {
        self.check(s.shape())?;
        let mut data = s.data.clone();
        self.transform(&mut data, true);
        let norm = 1.0 / (self.rows * self.cols) as f64;
        ImageGrid::new(self.rows, self.cols, data.into_iter().map(|c| c.re * norm).collect())
    }

    /// In-place inverse of a spectrum the caller owns, keeping the real part.
    pub fn inverse_into_real(&self, mut s: ComplexSpectrum) -> Result<ImageGrid> {
        self.check(s.shape())?;
        self.transform(&mut s.data, true);
        let norm = 1.0 / (self.rows * self.cols) as f64;
        ImageGrid::new(self.rows, self.cols, s.data.into_iter().map(|c| c.re * norm).collect())
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.rows, self.cols) {
            return Err(dims(format!(
                "FFT planned for {}x{}, got {}x{}",
                self.rows, self.cols, shape.0, shape.1
            )));
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (row_fft, col_fft) =
            if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        let (rows, cols) = (self.rows, self.cols);
        self.exec.for_each_row_mut(data, cols, |_, row| row_fft.process(row));
        if rows == 1 {
            return;
        }
        let mut t = transpose(data, rows, cols);
        self.exec.for_each_row_mut(&mut t, rows, |_, col| col_fft.process(col));
        let back = transpose(&t, cols, rows);
        data.copy_from_slice(&back);
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    out
}

/// Unnormalised forward 2D FFT.
pub fn fft2(g: &ImageGrid) -> ComplexSpectrum {
    Fft2::new(g.rows(), g.cols()).forward(g).expect("plan matches grid shape")
}

/// Inverse 2D FFT (divides by `rows * cols`), real part.
pub fn ifft2(s: &ComplexSpectrum) -> ImageGrid {
    Fft2::new(s.rows(), s.cols()).inverse(s).expect("plan matches spectrum shape")
}
