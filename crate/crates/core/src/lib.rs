pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod renderer;
pub mod tensor;

pub use error::{Error, Result};
