//! Bilateral prices, fair-price ranges and their structural properties for
//! contracts traded under differential funding rates, partial netting and
//! value-dependent collateral.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision instantiation.

pub mod bsde;
pub mod contracts;
pub mod error;
pub mod generators;
pub mod lattice;
pub mod market;
pub mod oracle;
pub mod piecewise;
pub mod pricing;
pub mod properties;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RateEnvironment64 = market::RateEnvironment<f64>;
pub type AssetDynamics64 = market::AssetDynamics<f64>;
pub type PiecewiseLinear64 = piecewise::PiecewiseLinear<f64>;
pub type ContractSpec64 = contracts::ContractSpec<f64>;
pub type CollateralConvention64 = contracts::CollateralConvention<f64>;
pub type GeneratorSpec64 = generators::GeneratorSpec<f64>;
pub type Lattice64 = lattice::Lattice<f64>;
