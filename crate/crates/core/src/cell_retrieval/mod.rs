//! Online stage two: range parsing, cell mapping and row merging.

mod mapping;
mod predicate;
mod ranges;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mapping::{map_cells, match_numeric, match_text, CellMappingOptions, CellMatchSet, MatchedValue};
pub use predicate::{Predicate, PredicateError};
pub use ranges::{parse_ranges, range_prompt, ColumnConstraint, ConstraintKind, RangeParse};

use crate::config::{MergeMode, RunConfig};
use crate::llm::{LlmError, TemplateError};
use crate::model::{project, Database, ModelError, QualifiedColumn, SubTable};
use crate::preprocess::IndexError;
use crate::schema_retrieval::{
    retrieve_schema, ParsedQuestion, RetrievalContext, SchemaDiagnostics, SchemaError, SchemaSelection, VoteTally,
};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl RetrievalError {
    pub fn code(&self) -> &'static str {
        match self {
            RetrievalError::Schema(e) => e.code(),
            RetrievalError::Index(e) => e.code(),
            RetrievalError::Llm(e) => e.code(),
            RetrievalError::Model(_) => "model_error",
            RetrievalError::Template(_) => "template_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDiagnostics {
    pub table: String,
    pub constrained_columns: usize,
    pub rows: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RetrievalDiagnostics {
    pub parsed_question: Option<ParsedQuestion>,
    pub schema: SchemaDiagnostics,
    pub range_parse_degraded: bool,
    pub constraints: Vec<ColumnConstraint>,
    pub matches: Vec<CellMatchSet>,
    pub tables: Vec<TableDiagnostics>,
    /// Tables whose merged row set came out empty and were left out.
    pub empty_tables: Vec<String>,
    pub cell_count: usize,
    /// Rough size of the sub-tables in tokens (serialized bytes / 4).
    pub approx_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub selected: BTreeSet<QualifiedColumn>,
    pub filled: BTreeSet<QualifiedColumn>,
    pub join_edges_used: Vec<crate::preprocess::JoinCandidate>,
    pub tally: Option<VoteTally>,
}

/// Output of one question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    /// Caller-supplied question id, echoed for batch runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    pub question: String,
    pub schema_selection: SelectionRecord,
    pub sub_tables: Vec<SubTable>,
    pub diagnostics: RetrievalDiagnostics,
}

/// Per table: the union (or intersection) of the constrained columns' row
/// sets, or every row up to `row_cap` when all its columns are dependent.
pub fn merge_cells(
    selection: &SchemaSelection,
    constraints: &[ColumnConstraint],
    matches: &[CellMatchSet],
    db: &Database,
    merge_mode: MergeMode,
    row_cap: usize,
) -> Result<(Vec<SubTable>, Vec<TableDiagnostics>, Vec<String>), ModelError> {
    let by_column: BTreeMap<&QualifiedColumn, &CellMatchSet> = matches.iter().map(|m| (&m.column, m)).collect();
    let mut sub_tables = Vec::new();
    let mut diags = Vec::new();
    let mut empty = Vec::new();
    for table in db.tables() {
        let columns: Vec<&QualifiedColumn> = selection.filled.iter().filter(|c| c.belongs_to(table.name())).collect();
        if columns.is_empty() {
            continue;
        }
        let constrained: Vec<&CellMatchSet> = constraints
            .iter()
            .filter(|c| c.is_constrained() && c.column.belongs_to(table.name()))
            .filter_map(|c| by_column.get(&c.column).copied())
            .collect();
        let mut truncated = false;
        let rows: Vec<usize> = if constrained.is_empty() {
            truncated = table.row_count() > row_cap;
            (0..table.row_count().min(row_cap)).collect()
        } else {
            let mut sets = constrained
                .iter()
                .map(|m| m.row_indices.iter().copied().collect::<BTreeSet<usize>>());
            let first = sets.next().expect("non-empty");
            let merged = sets.fold(first, |acc, s| match merge_mode {
                MergeMode::Union => &acc | &s,
                MergeMode::Intersection => &acc & &s,
            });
            merged.into_iter().collect()
        };
        if truncated {
            log::warn!("table `{}` truncated to {row_cap} rows", table.name());
        }
        diags.push(TableDiagnostics {
            table: table.name().to_string(),
            constrained_columns: constrained.len(),
            rows: rows.len(),
            truncated,
        });
        if rows.is_empty() {
            empty.push(table.name().to_string());
            continue;
        }
        sub_tables.push(project(table, columns, rows)?);
    }
    Ok((sub_tables, diags, empty))
}

/// Cell stage for an existing schema selection.
pub fn retrieve_cells(
    question: &str,
    selection: &SchemaSelection,
    ctx: &RetrievalContext<'_>,
    config: &RunConfig,
) -> Result<
    (
        RangeParse,
        Vec<CellMatchSet>,
        Vec<SubTable>,
        Vec<TableDiagnostics>,
        Vec<String>,
    ),
    RetrievalError,
> {
    let ranges = parse_ranges(
        question,
        selection,
        &ctx.artifacts.schema,
        ctx.db,
        ctx.gateway,
        ctx.prompts,
        config.parsing_temperature,
    )?;
    let options = CellMappingOptions {
        sigma: config.sigma,
        k_min: config.k_min,
    };
    let matches: Vec<CellMatchSet> = ranges
        .constraints
        .par_iter()
        .map(|c| map_cells(c, &ctx.artifacts.index, ctx.gateway, &options))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    for m in matches.iter().filter(|m| m.no_match) {
        log::info!("no cell of `{}` matched its constraint", m.column);
    }
    let (sub_tables, tables, empty) = merge_cells(
        selection,
        &ranges.constraints,
        &matches,
        ctx.db,
        config.merge_mode,
        config.row_cap,
    )?;
    Ok((ranges, matches, sub_tables, tables, empty))
}

/// Schema retrieval followed by cell retrieval.
pub fn retrieve(
    question: &str,
    ctx: &RetrievalContext<'_>,
    config: &RunConfig,
) -> Result<RetrievalResult, RetrievalError> {
    let schema = retrieve_schema(question, ctx, config)?;
    let (ranges, matches, sub_tables, tables, empty_tables) =
        retrieve_cells(&schema.parsed.question, &schema.selection, ctx, config)?;
    let cell_count = sub_tables.iter().map(SubTable::cell_count).sum();
    let approx_tokens = serde_json::to_vec(&sub_tables).map(|b| b.len() / 4).unwrap_or(0);
    Ok(RetrievalResult {
        qid: None,
        question: schema.parsed.question.clone(),
        schema_selection: SelectionRecord {
            selected: schema.selection.selected.clone(),
            filled: schema.selection.filled.clone(),
            join_edges_used: schema.selection.join_edges_used.clone(),
            tally: Some(schema.tally),
        },
        sub_tables,
        diagnostics: RetrievalDiagnostics {
            parsed_question: Some(schema.parsed),
            schema: schema.diagnostics,
            range_parse_degraded: ranges.degraded,
            constraints: ranges.constraints,
            matches,
            tables,
            empty_tables,
            cell_count,
            approx_tokens,
        },
    })
}
