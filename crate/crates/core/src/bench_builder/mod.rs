//! Benchmark construction from Text-to-SQL datasets: find the columns a gold
//! query touches, execute a column-only rewrite of it to get the gold cells,
//! and optionally swap cell values for synonyms.

mod augment;
mod materialize;
mod sql;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Database, ModelError, SourceFormat};

pub use augment::{augment, AugmentDiagnostic, Augmented, SynonymMap};
pub use materialize::{materialize_gold, BenchSample, GoldSubtable, SqlEngine, EMPTY_GOLD_FLAG};
pub use sql::{columns_of, extract_columns, parse_select, quote_ident, rewrite_select, SelectQuery, TableRef};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unsupported SQL: {0}")]
    UnsupportedSql(String),
    #[error("SQL syntax error: {0}")]
    SqlSyntax(String),
    #[error("ambiguous column `{0}`")]
    AmbiguousColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("query execution failed: {0}")]
    Execution(String),
    #[error("malformed dataset: {0}")]
    Dataset(String),
    #[error("invalid synonym map: {0}")]
    InvalidSynonyms(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl BenchError {
    pub fn code(&self) -> &'static str {
        match self {
            BenchError::UnsupportedSql(_) => "unsupported_sql",
            BenchError::SqlSyntax(_) => "sql_syntax",
            BenchError::AmbiguousColumn(_) => "ambiguous_column",
            BenchError::UnknownColumn(_) => "unknown_column",
            BenchError::UnknownTable(_) => "unknown_table",
            BenchError::Execution(_) => "execution_failed",
            BenchError::Dataset(_) => "malformed_dataset",
            BenchError::InvalidSynonyms(_) => "invalid_synonyms",
            BenchError::Model(ModelError::NotFound(_)) => "db_not_found",
            BenchError::Model(_) => "model_error",
        }
    }
}

/// One question of a Text-to-SQL dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub qid: String,
    pub question: String,
    pub db_id: String,
    pub sql: String,
}

/// Reads a JSON array of `{question, db_id, query}` objects. `SQL` is accepted
/// for `query`; `question_id` or `id` give the qid, else the array position.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetEntry>, BenchError> {
    let items: Vec<Value> = serde_json::from_str(text).map_err(|e| BenchError::Dataset(e.to_string()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let field = |names: &[&str]| {
                names
                    .iter()
                    .find_map(|n| item.get(n).and_then(Value::as_str))
                    .map(str::to_string)
                    .ok_or_else(|| BenchError::Dataset(format!("entry {i} has no `{}`", names[0])))
            };
            let qid = match ["question_id", "id"].iter().find_map(|n| item.get(n)) {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => i.to_string(),
            };
            Ok(DatasetEntry {
                qid,
                question: field(&["question"])?,
                db_id: field(&["db_id"])?,
                sql: field(&["query", "SQL"])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub qid: String,
    pub db_id: String,
    pub code: String,
    pub reason: String,
}

impl SkipRecord {
    pub fn new(entry: &DatasetEntry, err: &BenchError) -> Self {
        Self {
            qid: entry.qid.clone(),
            db_id: entry.db_id.clone(),
            code: err.code().into(),
            reason: err.to_string(),
        }
    }
}

/// Finds `db_id` under `db_dir`: `<id>/<id>.sqlite`, `<id>.sqlite`, `<id>.db`,
/// or a directory `<id>/` of CSV files.
pub fn locate_database(db_dir: &Path, db_id: &str) -> Option<(PathBuf, SourceFormat)> {
    let nested = db_dir.join(db_id);
    let candidates = [
        nested.join(format!("{db_id}.sqlite")),
        db_dir.join(format!("{db_id}.sqlite")),
        db_dir.join(format!("{db_id}.db")),
    ];
    if let Some(p) = candidates.into_iter().find(|p| p.is_file()) {
        return Some((p, SourceFormat::Sqlite));
    }
    nested.is_dir().then_some((nested, SourceFormat::CsvDir))
}

/// Materializes every entry against one database. Failures become skip
/// records; nothing aborts the batch. Output keeps input order.
pub fn build_samples(
    entries: &[DatasetEntry],
    db: &Database,
    engine: &SqlEngine,
) -> (Vec<BenchSample>, Vec<SkipRecord>) {
    let mut samples = Vec::new();
    let mut skips = Vec::new();
    for entry in entries {
        match materialize_gold(entry, db, engine) {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::info!("skipping {}: {e}", entry.qid);
                skips.push(SkipRecord::new(entry, &e));
            }
        }
    }
    (samples, skips)
}
