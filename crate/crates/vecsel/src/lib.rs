//! Steady states and quantum photocurrent-noise spectra for two orthogonally
//! polarized VECSEL modes whose active regions partly overlap.

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod fluctuation;
pub mod model;
pub mod steadystate;
pub mod toymodel;
pub mod verification;

mod linalg;

pub use error::{Error, Result};
pub use fluctuation::{FluctuationSystem, SpectrumPoint};
pub use model::{CouplingModel, DerivedRates, DichroismSign, ModelParams};
pub use steadystate::SteadyState;

pub type C64 = num_complex::Complex64;
