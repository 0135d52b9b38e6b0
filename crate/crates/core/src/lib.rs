//! Distribution-free prediction regions with finite-sample coverage.

pub mod calibrate;
pub mod cli;
pub mod cluster;
pub mod conditional;
pub mod data;
pub mod error;
pub mod martingale;
pub mod metrics;
pub mod models;
pub mod quantile;
pub mod resample;
pub mod rng;
pub mod scores;
pub mod special;
pub mod synthlab;

pub use data::{Dataset, Responses, Split, TaskKind};
pub use error::{Error, Result};
pub use quantile::{empirical_quantile, lower_quantile, SignificanceLevel, SortedSample};
pub use rng::SeededRng;
