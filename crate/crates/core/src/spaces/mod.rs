//! Weighted fractional Sobolev spaces H_{s,δ}: the dyadic partition of unity,
//! interchangeable norm strategies and a numerical harness for the standard
//! product, composition, embedding and interpolation estimates.

mod norms;
mod partition;
pub mod properties;

pub use norms::{
    integral_norm, weighted_norm, DyadicResampled, DyadicSpectral, IntegralNorm, NormRegistry, NormReport,
    NormStrategy,
};
pub use partition::{build_partition, smooth_step, DyadicPartition};
pub use properties::{gaussian_family, kato_ponce_check, property_suite, KatoPonceReport, PropertyRegistry, PropertyResult};
