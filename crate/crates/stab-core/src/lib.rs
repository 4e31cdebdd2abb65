pub mod averaging;
pub mod classify;
pub mod error;
pub mod expr;
pub mod linearize;
pub mod ode;
mod par;

pub use error::{Result, StabError};
