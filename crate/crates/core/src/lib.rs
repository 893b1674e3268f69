pub mod audit;
pub mod data;
pub mod distribution;
pub mod error;
pub mod export;
pub mod model;
pub mod regularizer;
pub mod run;
pub mod trainer;

pub use data::{Dataset, Group, LabeledExample};
pub use error::{Error, Result};
