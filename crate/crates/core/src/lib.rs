//! Certified strong spatial mixing bounds for the hard-core and Ising models
//! on the square lattice, with exact oracles for small instances.

pub mod branching;
pub mod dms;
pub mod error;
pub mod exact;
pub mod gibbs;
pub mod ising;
pub mod lattice;
pub mod sawtree;
pub mod search;

pub use error::{Error, Result};
pub use exact::{Rational, RationalInterval};
