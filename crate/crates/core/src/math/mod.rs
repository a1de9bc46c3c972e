//! Probability kernels and Gaussian linear algebra shared by the samplers.
//!
//! Everything here is pure given an explicit [`RngStream`].

pub mod normal;
mod rng;
mod spd;
mod truncnorm;

pub use normal::{normal_cdf, normal_quantile};
pub use rng::RngStream;
pub use spd::{mvn_sample, mvn_sample_precision, SpdMatrix};
pub use truncnorm::{sample_truncated_normal, std_normal_above, truncated_normal_unchecked};
