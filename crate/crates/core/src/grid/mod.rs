//! Dense 2D real fields, the 2D FFT, seeded Gaussian noise and image I/O.

mod fft;
pub mod io;
mod noise;

pub use fft::{fft2, ifft2, ComplexSpectrum, Fft2};
pub use noise::{draw_standard_normal_field, NoiseSource};

use crate::error::{dims, invalid, Error, Result};
use std::ops::{Index, IndexMut};

/// A row-major `rows x cols` grid of reals.
///
/// Holds images, observations, chain states and gradients alike.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(dims(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(dims(format!("{} values for a {rows}x{cols} grid", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(dims(format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `self` unchanged if every entry is finite, an error naming
    /// `what` otherwise.
    pub fn ensure_finite(self, what: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Numerical(format!("non-finite values in {what}")))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Entrywise `f(self, other)`. Panics on shape mismatch.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        assert!(self.same_shape(other), "zip_map on mismatched shapes");
        ImageGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ImageGrid) {
        assert!(self.same_shape(other), "axpy on mismatched shapes");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> ImageGrid {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &ImageGrid) -> ImageGrid {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ImageGrid) -> ImageGrid {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        assert!(self.same_shape(other), "dot on mismatched shapes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    /// Population variance (divides by the number of entries).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// The `height x width` block starting at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ImageGrid> {
        if height == 0 || width == 0 || top + height > self.rows || left + width > self.cols {
            return Err(dims(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(ImageGrid::from_fn(height, width, |r, c| self[(top + r, left + c)]))
    }

    /// Central `size x size` crop.
    pub fn center_crop(&self, size: usize) -> Result<ImageGrid> {
        if size > self.rows || size > self.cols {
            return Err(dims(format!("crop {size} larger than {}x{}", self.rows, self.cols)));
        }
        self.crop((self.rows - size) / 2, (self.cols - size) / 2, size, size)
    }
}

impl Index<(usize, usize)> for ImageGrid {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ImageGrid {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Block average: each output pixel is the mean of a `factor x factor` block.
pub fn downsample_by_averaging(g: &ImageGrid, factor: usize) -> Result<ImageGrid> {
    if factor == 0 || !g.rows.is_multiple_of(factor) || !g.cols.is_multiple_of(factor) {
        return Err(invalid(format!("factor {factor} does not divide {}x{}", g.rows, g.cols)));
    }
    if factor == 1 {
        return Ok(g.clone());
    }
    let (rows, cols) = (g.rows / factor, g.cols / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; rows * cols];
    for r in 0..g.rows {
        let orow = &mut out[(r / factor) * cols..(r / factor + 1) * cols];
        for (c, v) in g.row(r).iter().enumerate() {
            orow[c / factor] += v;
        }
    }
    out.iter_mut().for_each(|v| *v *= norm);
    ImageGrid::new(rows, cols, out)
}
