pub mod boundary;
pub mod cli;
pub mod error;
pub mod expr;
pub mod gl_validator;
pub mod output;
pub mod quasipoly;
pub mod rational_oracle;
pub mod regions;
pub mod rhp_counter;
pub mod slice;
pub mod specfile;

pub use error::{Error, Result};
