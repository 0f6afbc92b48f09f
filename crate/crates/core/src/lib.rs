//! Scalar wave-optics and wave-packet simulations of a dual-pinhole
//! interferometer with a lens and a grid of thin wires at the dark fringes.
//!
//! Modules, bottom up:
//! - [`field`]: sampled fields, irradiance profiles, flux, apodization.
//! - [`analytic`]: closed-form fringe/envelope models and the V, K, η metrics.
//! - [`propagation`]: angular-spectrum and Fresnel propagation, masks, the imaging pipeline.
//! - [`experiment`]: control / decoherent / coherent runs and the complementarity report.
//! - [`wavepacket`]: 2D time-dependent Schrödinger solver with a Dirichlet obstacle.
//! - [`photons`]: Monte Carlo photon arrivals and likelihood-ratio discrimination.
//! - [`config`]: the JSON experiment configuration.

pub mod analytic;
pub mod config;
pub mod error;
pub mod experiment;
pub mod field;
pub mod io;
pub mod photons;
pub mod propagation;
pub mod wavepacket;

pub use error::{Error, Result};
pub use field::{ComplexField, Dims, Grid, IrradianceProfile};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
