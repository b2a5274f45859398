//! Test-collection reliability analysis: judgment I/O, graded metrics,
//! inter-annotator agreement, judgment aggregation and combinations,
//! system-order stability, annotator oracles, and re-annotation pooling.

pub mod error;
pub mod metrics;
pub mod trec_io;

pub use error::{Error, Result};
pub mod aggregation;
pub mod agreement;
pub mod combinations;
pub mod oracle;
pub mod pooling;
pub mod stability;
pub mod synthetic;
