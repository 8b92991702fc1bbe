use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::{Cholesky, Matrix};
use crate::error::Result;

/// Independent random stream addressed by `(seed, stream_index)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives each replicate its
/// own sequence without any coordination between workers.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_index);
        Self {
            seed,
            stream_index,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn standard_normals(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.standard_normal()).collect()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `mean + L z` for a lower Cholesky factor `L`.
pub fn mvn_from_standard(mean: &[f64], chol: &Cholesky, z: &[f64]) -> Vec<f64> {
    let l = chol.factor();
    let mut out = mean.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        *o += super::matrix::dot(&l.row(i)[..=i], &z[..=i]);
    }
    out
}

/// One draw from `N(mean, cov)`.
pub fn sample_mvn(mean: &[f64], cov: &Matrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    let chol = cov.cholesky()?;
    let z = rng.standard_normals(mean.len());
    Ok(mvn_from_standard(mean, &chol, &z))
}

/// Repeated draws sharing one factorisation.
#[derive(Clone, Debug)]
pub struct MvnSampler {
    mean: Vec<f64>,
    chol: Cholesky,
}

impl MvnSampler {
    pub fn new(mean: Vec<f64>, cov: &Matrix) -> Result<Self> {
        Ok(Self {
            mean,
            chol: cov.cholesky()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let z = rng.standard_normals(self.mean.len());
        mvn_from_standard(&self.mean, &self.chol, &z)
    }
}
