pub mod bench;
pub mod cli;
pub mod coremodel;
pub mod data;
pub mod error;
pub mod matrix;
pub mod model_io;
pub mod onlad;
pub mod oselm;

pub use error::{Error, Result};
pub use matrix::{Activation, Matrix};
pub use onlad::{DetectorConfig, OnladDetector, StepReport};
pub use oselm::{InitRange, OselmModel, UpdateStatus};
