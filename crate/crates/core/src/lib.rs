//! Laplace random fields for asymptotically independent spatial extremes.
//!
//! A Laplace field is a centred Gaussian field `W` multiplied by an
//! independent Rayleigh variable `Y` (so `Y²` is exponential with mean 2).
//! Its margins are standard Laplace, its joint tails decay faster than its
//! margins (asymptotic independence), and the Gaussian scale mixture keeps
//! densities, conditional laws and exceedance probabilities tractable.
//!
//! The crate is layered bottom-up:
//!
//! - [`special`], [`quad`], [`dist`]: Bessel `K_ν`, normal helpers,
//!   quadrature rules and the univariate laws (standard Laplace, Weibull
//!   tail, GPD, log-Laplace target, Rayleigh).
//! - [`linalg`], [`covariance`], [`mvn`]: jittered Cholesky, correlation
//!   families with geometric anisotropy, Gaussian sampling/conditioning and
//!   the quasi-Monte Carlo multivariate normal cdf.
//! - [`field`]: the multivariate Laplace density, radial law, unconditional
//!   and conditional simulation, and the mixture integral for joint cdfs.
//! - [`tail`]: residual and tail correlation coefficients, extrapolation
//!   factors, empirical estimators and QQ transforms.
//! - [`inference`]: censored Weibull margins, rank PIT, censored dependence
//!   likelihood, Nelder–Mead fitting, block bootstrap.
//! - [`risk`]: joint exceedance probabilities, return periods and levels.
//! - [`io`]: file schemas (CSV, TOML, JSON) shared with the CLI.

pub mod covariance;
pub mod dist;
pub mod error;
pub mod field;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mvn;
pub mod optim;
pub mod quad;
pub mod risk;
pub mod special;
pub mod tail;

pub use error::{Error, Result};
