//! Annotation service: per-annotator task queues over an append-only,
//! durably committed event log, exposed as a JSON HTTP API.

pub mod error;
pub mod faults;
pub mod http;
pub mod service;
pub mod setup;
pub mod store;

pub use error::{Result, ServiceError};
pub use service::AnnotationService;
pub use setup::{Roster, ServiceSetup};
