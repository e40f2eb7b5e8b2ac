//! Offline phase: profiling, schema descriptions, join discovery and the
//! per-column value index.

pub mod artifacts;
pub mod hnsw;
pub mod index;
pub mod joins;
pub mod profile;
pub mod semantize;

pub use artifacts::{
    load_artifacts, preprocess, preprocess_into, write_artifacts, ArtifactError, Artifacts, Manifest,
    PreprocessOptions, PreprocessSummary,
};
pub use hnsw::{Hnsw, HnswParams};
pub use index::{build_cell_index, query_index, CellIndex, CellMatch, ColumnIndex, IndexError, ValueRows};
pub use joins::{connection_weight, discover_joins, jaccard, JoinCandidate, JoinGraph};
pub use profile::{profile_column, profile_columns, ColumnProfile, TopValue};
pub use semantize::{semantize_schema, SemanticSchema, TableSemantics};
