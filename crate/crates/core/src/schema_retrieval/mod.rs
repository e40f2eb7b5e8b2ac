//! Online stage one: question parsing, voted column mapping and key filling.

mod fill;
mod mapping;
mod parse;

use serde::{Deserialize, Serialize};

pub use fill::{fill_schema, shortest_path, SchemaSelection};
pub use mapping::{
    map_schema, mapping_prompt, meets_threshold, select_columns, shuffled_layout, FailedIteration, MappingDiagnostics,
    MappingOutcome, VoteTally,
};
pub use parse::{fallback_key_elements, parse_question, parse_question_prompt, tokenize, ParsedQuestion};

use crate::config::RunConfig;
use crate::llm::{LlmGateway, PromptSet, TemplateError};
use crate::model::Database;
use crate::preprocess::{Artifacts, SemanticSchema};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("every mapping iteration failed")]
    MappingUnavailable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl SchemaError {
    pub fn code(&self) -> &'static str {
        match self {
            SchemaError::EmptyQuestion => "empty_question",
            SchemaError::MappingUnavailable => "mapping_unavailable",
            SchemaError::InvalidArgument(_) => "invalid_argument",
            SchemaError::Template(_) => "template_error",
        }
    }
}

/// Read-only inputs shared by every question of a run.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalContext<'a> {
    pub db: &'a Database,
    pub artifacts: &'a Artifacts,
    pub gateway: &'a LlmGateway,
    pub prompts: &'a PromptSet,
}

/// JSON object of `table -> {column: description}`. `layout` fixes table and
/// column order; `None` keeps database order.
pub fn table_structure(db: &Database, schema: &SemanticSchema, layout: Option<&[(String, Vec<String>)]>) -> String {
    let default_layout: Vec<(String, Vec<String>)>;
    let layout = match layout {
        Some(l) => l,
        None => {
            default_layout = db
                .tables()
                .iter()
                .map(|t| {
                    (
                        t.name().to_string(),
                        t.columns().iter().map(|c| c.name.clone()).collect(),
                    )
                })
                .collect();
            &default_layout
        }
    };
    let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
    let mut out = String::from("{\n");
    for (ti, (table, cols)) in layout.iter().enumerate() {
        out.push_str(&format!("  {}: {{\n", quote(table)));
        for (ci, col) in cols.iter().enumerate() {
            let qc = crate::model::QualifiedColumn::new(table.as_str(), col.as_str())
                .expect("database identifiers are non-empty");
            out.push_str(&format!("    {}: {}", quote(col), quote(&schema.describe(&qc))));
            out.push_str(if ci + 1 < cols.len() { ",\n" } else { "\n" });
        }
        out.push_str("  }");
        out.push_str(if ti + 1 < layout.len() { ",\n" } else { "\n" });
    }
    out.push('}');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SchemaDiagnostics {
    pub parse_degraded: bool,
    pub dropped_columns: Vec<String>,
    pub failed_iterations: Vec<FailedIteration>,
    pub disconnected_tables: Vec<(String, String)>,
}

/// Schema-stage result with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRetrieval {
    pub parsed: ParsedQuestion,
    pub tally: VoteTally,
    pub selection: SchemaSelection,
    pub diagnostics: SchemaDiagnostics,
}

pub fn retrieve_schema(
    question: &str,
    ctx: &RetrievalContext<'_>,
    config: &RunConfig,
) -> Result<SchemaRetrieval, SchemaError> {
    let schema = &ctx.artifacts.schema;
    let parsed = parse_question(
        question,
        schema,
        ctx.db,
        ctx.gateway,
        ctx.prompts,
        config.parsing_temperature,
    )?;
    let outcome = map_schema(
        &parsed,
        schema,
        ctx.db,
        ctx.gateway,
        ctx.prompts,
        config.k_iterations,
        config.theta,
        config.seed,
        config.mapping_temperature,
    )?;
    let mut selected = select_columns(&outcome.tally);
    if config.hard_hints {
        selected.extend(parsed.hinted_columns.iter().cloned());
    }
    let selection = fill_schema(&selected, ctx.db, &ctx.artifacts.joins);
    let diagnostics = SchemaDiagnostics {
        parse_degraded: parsed.degraded,
        dropped_columns: outcome.diagnostics.dropped_columns,
        failed_iterations: outcome.diagnostics.failed_iterations,
        disconnected_tables: selection.disconnected_tables.clone(),
    };
    Ok(SchemaRetrieval {
        parsed,
        tally: outcome.tally,
        selection,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockChat;
    use crate::model::{CellValue, Column, QualifiedColumn, Table};
    use crate::preprocess::{preprocess, PreprocessOptions};
    use std::collections::BTreeSet;

    fn qc(s: &str) -> QualifiedColumn {
        s.parse().unwrap()
    }

    #[test]
    fn structure_rendering() {
        let t = Table::new(
            "t",
            vec![
                Column::infer("a", vec![CellValue::from("x")]).unwrap(),
                Column::infer("b\"q", vec![CellValue::from("y")]).unwrap(),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let db = Database::new("d", vec![t]).unwrap();
        let s = table_structure(&db, &SemanticSchema::default(), None);
        assert_eq!(
            s,
            "{\n  \"t\": {\n    \"a\": \"a\",\n    \"b\\\"q\": \"b\\\"q\"\n  }\n}"
        );
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["t"]["a"], "a");
    }

    fn toy() -> Database {
        let schools = Table::new(
            "schools",
            vec![
                Column::infer("CDSCode", ["c1", "c2", "c3"].map(CellValue::from).to_vec()).unwrap(),
                Column::infer(
                    "County",
                    ["Alameda", "Contra Costa", "Los Angeles"].map(CellValue::from).to_vec(),
                )
                .unwrap(),
                Column::infer("City", ["Oakland", "Concord", "Pasadena"].map(CellValue::from).to_vec()).unwrap(),
            ],
            vec!["CDSCode".into()],
            vec![],
        )
        .unwrap();
        let sat = Table::new(
            "satscores",
            vec![
                Column::infer("cds", ["c1", "c2", "c3"].map(CellValue::from).to_vec()).unwrap(),
                Column::infer("NumTstTakr", vec![100i64.into(), 250i64.into(), 300i64.into()]).unwrap(),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        Database::new("toy", vec![schools, sat]).unwrap()
    }

    #[test]
    fn end_to_end_with_script() {
        let db = toy();
        let prompts = PromptSet::default();
        let arts = preprocess(
            &db,
            &LlmGateway::mock(MockChat::default()),
            &prompts,
            &PreprocessOptions::default(),
        )
        .unwrap();
        assert!(arts.joins.edge_between("schools", "satscores").is_some());
        let config = RunConfig::default();
        let q = "Which counties have schools with at most 250 test takers?";
        // The parse call is unscripted, so the token fallback supplies the hints.
        let parsed = ParsedQuestion {
            question: q.into(),
            key_elements: fallback_key_elements(q),
            hinted_columns: vec![],
            degraded: true,
        };
        let answers = [
            r#"{"reasoning":"","columns":["schools.County","satscores.NumTstTakr"]}"#,
            r#"{"reasoning":"","columns":["schools.County","satscores.NumTstTakr","schools.City"]}"#,
            r#"{"reasoning":"","columns":["schools.County"]}"#,
            r#"{"reasoning":"","columns":["schools.County","satscores.NumTstTakr"]}"#,
            r#"{"reasoning":"","columns":["schools.City"]}"#,
        ];
        let mut mock = MockChat::default();
        for (i, a) in answers.iter().enumerate() {
            mock.insert(
                &mapping_prompt(&prompts, &parsed, &arts.schema, &db, config.seed, i as u32).unwrap(),
                *a,
            );
        }
        let gateway = LlmGateway::mock(mock);
        let ctx = RetrievalContext {
            db: &db,
            artifacts: &arts,
            gateway: &gateway,
            prompts: &prompts,
        };
        let out = retrieve_schema(q, &ctx, &config).unwrap();
        assert!(out.diagnostics.parse_degraded);
        // County 4/5, NumTstTakr 3/5 reach 3.0; City 2/5 does not.
        assert_eq!(
            out.selection.selected,
            [qc("schools.County"), qc("satscores.NumTstTakr")].into()
        );
        let expect: BTreeSet<_> = [
            "schools.County",
            "satscores.NumTstTakr",
            "schools.CDSCode",
            "satscores.cds",
        ]
        .map(qc)
        .into();
        assert_eq!(out.selection.filled, expect);

        // Explicit arguments agree with the config defaults.
        let explicit = map_schema(&parsed, &arts.schema, &db, &gateway, &prompts, 5, 0.6, 0, 0.2).unwrap();
        assert_eq!(explicit.tally, out.tally);
    }

    #[test]
    fn empty_selection_is_valid() {
        let db = toy();
        let prompts = PromptSet::default();
        let arts = preprocess(
            &db,
            &LlmGateway::mock(MockChat::default()),
            &prompts,
            &PreprocessOptions::default(),
        )
        .unwrap();
        let config = RunConfig {
            k_iterations: 1,
            ..RunConfig::default()
        };
        let q = "nothing relevant";
        let parsed = ParsedQuestion {
            question: q.into(),
            key_elements: fallback_key_elements(q),
            hinted_columns: vec![],
            degraded: true,
        };
        let mut mock = MockChat::default();
        mock.insert(
            &mapping_prompt(&prompts, &parsed, &arts.schema, &db, 0, 0).unwrap(),
            r#"{"reasoning":"","columns":[]}"#,
        );
        let gateway = LlmGateway::mock(mock);
        let ctx = RetrievalContext {
            db: &db,
            artifacts: &arts,
            gateway: &gateway,
            prompts: &prompts,
        };
        let out = retrieve_schema(q, &ctx, &config).unwrap();
        assert!(out.selection.selected.is_empty() && out.selection.filled.is_empty());
    }
}
