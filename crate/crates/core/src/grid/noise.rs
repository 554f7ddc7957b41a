use super::ImageGrid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded stream of standard-normal draws.
///
/// `(seed, stream)` fixes the sequence. Independent chains take distinct
/// stream ids under one seed; a source is never shared between threads.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    seed: u64,
    stream: u64,
    rng: Option<ChaCha8Rng>,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng: Some(rng) }
    }

    /// A degenerate source whose every draw is exactly zero.
    pub fn pinned_zero() -> Self {
        Self { seed: 0, stream: 0, rng: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn is_pinned(&self) -> bool {
        self.rng.is_none()
    }

    /// Fresh source on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        if self.is_pinned() {
            Self::pinned_zero()
        } else {
            Self::new(self.seed, stream)
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        match self.rng.as_mut() {
            Some(rng) => StandardNormal.sample(rng),
            None => 0.0,
        }
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        match self.rng.as_mut() {
            Some(rng) => out.iter_mut().for_each(|v| *v = StandardNormal.sample(rng)),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    pub fn standard_normal_field(&mut self, rows: usize, cols: usize) -> ImageGrid {
        let mut g = ImageGrid::zeros(rows, cols);
        self.fill_standard_normal(g.as_mut_slice());
        g
    }

    /// Uniform draw in `[0, 1)`; zero for a pinned source.
    pub fn uniform(&mut self) -> f64 {
        use rand::Rng;
        match self.rng.as_mut() {
            Some(rng) => rng.random::<f64>(),
            None => 0.0,
        }
    }

    /// Uniform index in `0..n`.
    pub fn index_below(&mut self, n: usize) -> usize {
        use rand::Rng;
        match self.rng.as_mut() {
            Some(rng) => rng.random_range(0..n),
            None => 0,
        }
    }
}

/// `rows x cols` field of independent N(0, 1) draws; advances `noise`.
pub fn draw_standard_normal_field(noise: &mut NoiseSource, rows: usize, cols: usize) -> ImageGrid {
    noise.standard_normal_field(rows, cols)
}
