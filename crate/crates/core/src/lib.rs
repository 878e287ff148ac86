pub mod agents;
pub mod allocator;
pub mod backtest;
pub mod data;
pub mod error;
pub mod indicators;
pub mod macro_agent;
pub mod risk;

pub use error::{Error, Result};
