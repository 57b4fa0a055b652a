//! Numerical evaluation of error exponents for typical random codes and
//! expurgated codes over discrete memoryless channels, together with dual
//! bounds and an exact-enumeration simulator.

pub mod duals;
pub mod error;
pub mod exponents;
pub mod prob;
pub mod search;
pub mod serde_ext;
pub mod simulator;

pub use error::{Error, Result};
pub use exponents::{DecodingMetric, ExponentCurve, ExponentKind, ExponentResult, RatePoint};
pub use prob::{Alphabet, Channel, CondDist, Dist, Joint2, Joint3};
pub use search::{OptimizerOptions, RaySup};
pub use simulator::{Codebook, Decoder, ErrorProfile, GldConfig, TrialSummary};
