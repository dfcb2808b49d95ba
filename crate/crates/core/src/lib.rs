//! Concentration inequalities for dependent sequences via transport and entropy.

pub mod error;
pub mod io;
pub mod lp;
pub mod certify;
pub mod cli;
pub mod constants;
pub mod coupling;
pub mod entropy;
pub mod measure;
pub mod numeric;
pub mod processes;
pub mod transport;

pub use error::{Error, Result};
