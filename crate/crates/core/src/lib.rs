//! Identification of displacement-dependent restoring forces as networks of
//! gapped piecewise-linear springs, and response forecasting for
//! single-degree-of-freedom oscillators built on the identified models.

pub mod basis;
pub mod cli;
pub mod dataio;
pub mod dynamics;
pub mod error;
pub mod regress;
pub mod series;
pub mod sigproc;
pub mod synth;

pub use error::{Error, Result};
pub use series::TimeSeries;
