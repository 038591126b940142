//! Open interval maps with holes: transfer operators, pressure, escape rates
//! and survivor-set dimension.

pub mod conditions;
pub mod dimension;
pub mod error;
pub mod escape;
pub mod inducing;
pub mod maps;
pub mod numeric;
pub mod open_system;
pub mod sft;
pub mod spectral;
pub mod zerohole;

pub use error::{Error, Result};
