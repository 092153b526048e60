//! Dataset construction and ingestion: the synthetic two-motif benchmark,
//! the plain-text multi-file graph corpus format, tabular expression
//! pipelines, and the native JSON serialization.

pub mod json;
pub mod synthetic;
pub mod tabular;
pub mod tu;
