//! Mixed causal-noncausal autoregressions with heavy-tailed errors.

pub mod bubble;
pub mod error;
pub mod estimation;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod series;
pub mod tail;

pub use error::{Error, Result};
pub use model::{ErrorDist, MarModel};
pub use series::TimeSeries;
