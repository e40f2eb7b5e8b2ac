//! Fine-grained retrieval of relevant sub-tables across a multi-table
//! database: offline preprocessing, schema retrieval, cell retrieval,
//! evaluation and benchmark construction.

pub mod bench_builder;
pub mod cell_retrieval;
pub mod config;
pub mod eval;
pub mod llm;
pub mod model;
pub mod preprocess;
pub mod schema_retrieval;

pub use config::{derive_seed, MergeMode, RunConfig};
