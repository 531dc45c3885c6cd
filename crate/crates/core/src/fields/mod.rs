//! Grid-sampled fields on the truncated box [−L, L)³, binary I/O, trilinear
//! rescaling and FFT-based Bessel potential norms.

mod grid;
mod io;
mod scale;
pub mod spectral;
pub mod stencil;

pub use grid::{Grid, GridField, SobolevIndex};
pub use io::{read_field, write_field};
pub use scale::{scale_field, scale_field_onto};
pub use spectral::{bessel_norm, Spectral};
