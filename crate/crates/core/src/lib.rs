//! Physics-informed neural network lab for the 1-D advection–dispersion
//! column, built around residual-driven adaptive collocation sampling.

pub mod diffnet;
pub mod error;
pub mod experiment;
pub mod fdsolver;
pub mod metrics;
pub mod pde;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
