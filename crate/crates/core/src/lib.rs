//! Numerical toolkit for the Einstein–Euler system: weighted fractional Sobolev
//! norms, the Makino-variable Euler symbol, fluid data reconstruction, the
//! conformal constraint pipeline and a symmetric hyperbolic evolution driver.

pub mod constraints;
pub mod error;
pub mod evolve;
pub mod fields;
pub mod fluid;
pub mod idata;
pub mod linalg;
pub mod spaces;

pub use error::{EekError, Result};
pub use fields::{Grid, GridField};
