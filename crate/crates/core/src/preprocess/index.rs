use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::derive_seed;
use crate::llm::{EmbeddingVector, LlmError, LlmGateway};
use crate::model::{parse_decimal, CellValue, Column, ColumnType, Database, QualifiedColumn};

use super::hnsw::{ef_search, Hnsw, HnswParams};
use super::joins::embed_in_batches;

/// Share of parseable non-null values above which a text column is indexed
/// as numeric.
pub const NUMERIC_SHARE: f64 = 0.99;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("column `{0}` is not indexed")]
    UnknownColumn(QualifiedColumn),
    #[error("column `{0}` is numeric and has no semantic index")]
    NumericColumn(QualifiedColumn),
    #[error("query vector has dimension {found}, index expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding column `{column}` failed: {source}")]
    Embedding {
        column: QualifiedColumn,
        #[source]
        source: Box<LlmError>,
    },
}

impl IndexError {
    pub fn code(&self) -> &'static str {
        match self {
            IndexError::UnknownColumn(_) => "unknown_column",
            IndexError::NumericColumn(_) => "numeric_column",
            IndexError::DimensionMismatch { .. } => "dimension_mismatch",
            IndexError::Embedding { .. } => "embedding_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRows {
    pub value: CellValue,
    pub rows: Vec<usize>,
}

/// Value to row map of one column, plus an ANN graph over its distinct values
/// when the column is not numeric. Graph node `i` is `entries[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnIndex {
    pub column: QualifiedColumn,
    pub numeric: bool,
    pub entries: Vec<ValueRows>,
    pub ann: Option<Hnsw>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMatch {
    pub value: CellValue,
    pub similarity: f64,
    pub rows: Vec<usize>,
}

impl ColumnIndex {
    pub fn distinct_count(&self) -> usize {
        self.entries.len()
    }

    /// Union of all row lists, sorted.
    pub fn indexed_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.entries.iter().flat_map(|e| e.rows.iter().copied()).collect();
        rows.sort_unstable();
        rows
    }

    pub fn rows_of(&self, value: &CellValue) -> Option<&[usize]> {
        self.entries
            .binary_search_by(|e| e.value.cmp(value))
            .ok()
            .map(|i| self.entries[i].rows.as_slice())
    }

    pub fn query(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<CellMatch>, IndexError> {
        let ann = self
            .ann
            .as_ref()
            .ok_or_else(|| IndexError::NumericColumn(self.column.clone()))?;
        if query.dimension() != ann.dim() {
            return Err(IndexError::DimensionMismatch {
                expected: ann.dim(),
                found: query.dimension(),
            });
        }
        let q = query.to_f32();
        let hits = if k >= ann.len() {
            ann.brute_force(&q, ann.len())
        } else {
            ann.search(&q, k.max(1), ef_search(k))
        };
        let mut out: Vec<CellMatch> = hits
            .into_iter()
            .map(|(id, sim)| {
                let e = &self.entries[id as usize];
                CellMatch {
                    value: e.value.clone(),
                    similarity: f64::from(sim),
                    rows: e.rows.clone(),
                }
            })
            .collect();
        out.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| text_key(&a.value).cmp(&text_key(&b.value)))
        });
        out.truncate(k);
        Ok(out)
    }
}

fn text_key(v: &CellValue) -> String {
    v.canonical().unwrap_or_default()
}

/// Whether the column gets exact numeric matching instead of an ANN graph.
pub fn is_numeric_column(col: &Column) -> bool {
    if col.declared_type.is_numeric() {
        return true;
    }
    if col.declared_type != ColumnType::Text {
        return false;
    }
    let mut total = 0usize;
    let mut parsed = 0usize;
    for v in &col.values {
        match v {
            CellValue::Null => {}
            CellValue::Text(s) => {
                total += 1;
                if parse_decimal(s.trim()).is_some() {
                    parsed += 1;
                }
            }
            CellValue::Number(_) => {
                total += 1;
                parsed += 1;
            }
            CellValue::Boolean(_) => total += 1,
        }
    }
    total > 0 && parsed as f64 >= NUMERIC_SHARE * total as f64
}

/// Groups non-null rows by value. Numeric columns key parseable text by its
/// number; anything else keeps its original value.
pub fn row_map(col: &Column, numeric: bool) -> Vec<ValueRows> {
    let mut map: BTreeMap<CellValue, Vec<usize>> = BTreeMap::new();
    for (row, v) in col.values.iter().enumerate() {
        let key = match v {
            CellValue::Null => continue,
            CellValue::Text(s) if numeric => parse_decimal(s.trim())
                .map(CellValue::Number)
                .unwrap_or_else(|| v.clone()),
            _ => v.clone(),
        };
        map.entry(key).or_default().push(row);
    }
    map.into_iter().map(|(value, rows)| ValueRows { value, rows }).collect()
}

pub fn column_seed(seed: u64, column: &QualifiedColumn) -> u64 {
    let (t, c) = column.key();
    derive_seed(seed, &format!("hnsw:{t}.{c}"), 0)
}

/// Builds the index of one column.
pub fn build_column_index(
    column: QualifiedColumn,
    col: &Column,
    gateway: &LlmGateway,
    params: HnswParams,
) -> Result<ColumnIndex, IndexError> {
    let numeric = is_numeric_column(col);
    let entries = row_map(col, numeric);
    let ann = if numeric {
        None
    } else {
        let texts: Vec<String> = entries.iter().map(|e| text_key(&e.value)).collect();
        let dim = gateway.embedding_dimension().ok_or_else(|| IndexError::Embedding {
            column: column.clone(),
            source: Box::new(LlmError::NotConfigured("embedding")),
        })?;
        let mut graph = Hnsw::new(dim, params);
        if !texts.is_empty() {
            let vectors = embed_in_batches(gateway, &texts).map_err(|source| IndexError::Embedding {
                column: column.clone(),
                source: Box::new(source),
            })?;
            for v in vectors {
                graph.insert(v.to_f32());
            }
        }
        Some(graph)
    };
    Ok(ColumnIndex {
        column,
        numeric,
        entries,
        ann,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellIndex {
    columns: BTreeMap<QualifiedColumn, ColumnIndex>,
}

impl CellIndex {
    pub fn from_columns(columns: impl IntoIterator<Item = ColumnIndex>) -> Self {
        Self {
            columns: columns.into_iter().map(|c| (c.column.clone(), c)).collect(),
        }
    }

    pub fn column(&self, column: &QualifiedColumn) -> Result<&ColumnIndex, IndexError> {
        self.columns
            .get(column)
            .ok_or_else(|| IndexError::UnknownColumn(column.clone()))
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnIndex> {
        self.columns.values()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Distinct values carried by ANN graphs.
    pub fn embedded_value_count(&self) -> usize {
        self.columns
            .values()
            .filter(|c| c.ann.is_some())
            .map(|c| c.entries.len())
            .sum()
    }
}

/// Top-`k` values of a column by similarity to `query`, ties in value order.
pub fn query_index(
    index: &CellIndex,
    column: &QualifiedColumn,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<CellMatch>, IndexError> {
    index.column(column)?.query(query, k)
}

pub fn build_cell_index(db: &Database, gateway: &LlmGateway, params: HnswParams) -> Result<CellIndex, IndexError> {
    let work: Vec<(QualifiedColumn, &Column)> = db
        .tables()
        .iter()
        .flat_map(|t| t.columns().iter().map(move |c| (t.qualified(c), c)))
        .collect();
    let built: Vec<ColumnIndex> = work
        .into_par_iter()
        .map(|(qc, col)| {
            let p = HnswParams {
                seed: column_seed(params.seed, &qc),
                ..params
            };
            build_column_index(qc, col, gateway, p)
        })
        .collect::<Result<_, _>>()?;
    Ok(CellIndex::from_columns(built))
}
