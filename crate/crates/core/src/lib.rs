//! Exact moments, density approximations and normal-approximation diagnostics
//! for the empirical correlation of two AR(1) series.
//!
//! The building blocks are the kernel matrix of the centred quadratic form and
//! its characteristic polynomial `d_n(lambda) = det(I - lambda K_n)`, which
//! has a closed form. Moments of `sqrt(n) theta_n` are two-dimensional
//! integrals of Taylor coefficients of the joint moment generating function,
//! evaluated with truncated power series and adaptive Gauss-Legendre panels.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod charpoly;
pub mod density;
pub mod error;
pub mod jet;
pub mod kernel;
pub mod mgf;
pub mod normal;
pub mod quadrature;
pub mod simulation;
pub mod tables;

pub use asymptotics::{
    ca_auto, chaos_constants, kolmogorov_distance, mc_power, power_lower_bound, rate_fit,
    scaling_constant, wasserstein1_distance, ChaosConstants, Distance, RateFit,
};
pub use charpoly::{d_n, d_n_prime, det_oracle};
pub use density::{evaluate_density, legendre_from_moments, DensityApprox};
pub use error::{Error, Result};
pub use jet::{Jet, Scalar};
pub use mgf::{limit_second_moment, moment, phi_n, second_moment_scaled, MomentResult};
pub use quadrature::{QuadOptions, QuadResult};
pub use simulation::{
    empirical_stats, sample_theta, simulate_pair, Family, ModelSpec, PathPair, ThetaSampleSet,
};
