pub mod error;
pub mod json;
pub mod linalg;
pub mod bounds;
pub mod circuit;
pub mod classify;
pub mod optimize;
pub mod oracle;
pub mod suite;
pub mod trig;

pub use error::{Error, Result};
