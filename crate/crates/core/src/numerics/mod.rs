//! Dense matrices, normal-distribution kernels and seeded random streams.

mod matrix;
mod normal;
mod rng;

pub use matrix::{axpy, dot, max_abs, solve_spd, Cholesky, Matrix, PINV_TOLERANCE, PIVOT_TOLERANCE};
pub use normal::{expit, normal_cdf, normal_pdf, normal_quantile};
pub use rng::{mvn_from_standard, sample_mvn, MvnSampler, RngStream};
