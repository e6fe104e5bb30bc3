pub mod analysis;
pub mod benchmarks;
pub mod cells;
pub mod error;
pub mod functions;
pub mod kernel;
pub mod math;
pub mod model;
pub mod params;
pub mod training;

pub use error::{Error, Result};
