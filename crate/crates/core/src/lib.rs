pub mod error;
pub mod eval;
pub mod graphs;
pub mod io;
pub mod model;
pub mod numeric;
pub mod parallel;
pub mod pipeline;
pub mod propagation;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
