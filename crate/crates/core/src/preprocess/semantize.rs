use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::llm::{extract_json_object, ChatRequest, LlmGateway, ParseError, PromptKind, PromptSet};
use crate::model::{ident_eq, Database, QualifiedColumn, Table};

use super::ColumnProfile;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableSemantics {
    pub description: String,
    pub columns: BTreeMap<String, String>,
}

/// Natural-language descriptions for every table and column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SemanticSchema {
    pub tables: BTreeMap<String, TableSemantics>,
}

impl SemanticSchema {
    fn table_entry(&self, table: &str) -> Option<&TableSemantics> {
        self.tables
            .get(table)
            .or_else(|| self.tables.iter().find(|(k, _)| ident_eq(k, table)).map(|(_, v)| v))
    }

    pub fn table_description(&self, table: &str) -> Option<&str> {
        self.table_entry(table).map(|t| t.description.as_str())
    }

    pub fn column_description(&self, column: &QualifiedColumn) -> Option<&str> {
        let t = self.table_entry(column.table())?;
        t.columns
            .get(column.column())
            .or_else(|| {
                t.columns
                    .iter()
                    .find(|(k, _)| ident_eq(k, column.column()))
                    .map(|(_, v)| v)
            })
            .map(String::as_str)
    }

    /// Description of `column`, or its name when none is recorded.
    pub fn describe(&self, column: &QualifiedColumn) -> String {
        self.column_description(column)
            .map(str::to_string)
            .unwrap_or_else(|| column.column().to_string())
    }

    /// True when every column of `db` has a description entry.
    pub fn covers(&self, db: &Database) -> bool {
        db.all_columns().iter().all(|c| self.column_description(c).is_some())
    }
}

pub fn fallback_column_description(profile: &ColumnProfile) -> String {
    let examples: Vec<&str> = profile.top_values.iter().map(|t| t.value.as_str()).collect();
    format!(
        "column {} of type {}; examples: {}",
        profile.column.column(),
        profile.declared_type,
        examples.join(", ")
    )
}

pub fn fallback_table_description(table: &Table) -> String {
    let cols: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    format!("table {} with columns {}", table.name(), cols.join(", "))
}

fn metadata_json(table: &Table, profiles: &[ColumnProfile]) -> String {
    let cols: Vec<Value> = table
        .columns()
        .iter()
        .map(|c| {
            let p = profiles
                .iter()
                .find(|p| p.column == table.qualified(c));
            json!({
                "column": c.name,
                "type": c.declared_type.as_str(),
                "top_values": p.map(|p| p.top_values.iter().map(|t| t.value.clone()).collect::<Vec<_>>()).unwrap_or_default(),
                "longest_example": p.and_then(|p| p.longest_example.clone()),
                "shortest_example": p.and_then(|p| p.shortest_example.clone()),
            })
        })
        .collect();
    serde_json::to_string_pretty(&cols).expect("json values serialize")
}

pub fn semantize_prompt(prompts: &PromptSet, table: &Table, profiles: &[ColumnProfile]) -> String {
    prompts
        .render(
            PromptKind::Semantize,
            &[("TABLE", table.name()), ("METADATA", &metadata_json(table, profiles))],
        )
        .expect("semantize template uses TABLE and METADATA only")
}

#[derive(Debug, Clone, PartialEq)]
struct TableAnswer {
    description: String,
    columns: BTreeMap<String, String>,
}

fn parse_table_answer(raw: &str) -> Result<TableAnswer, ParseError> {
    let map = extract_json_object(raw)?;
    let description = match map.get("table_description") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ParseError::WrongType("table_description".into())),
        None => return Err(ParseError::MissingKey("table_description".into())),
    };
    let columns = match map.get("columns") {
        Some(Value::Object(cols)) => cols
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(ParseError::WrongType("columns".into())),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(ParseError::WrongType("columns".into())),
        None => return Err(ParseError::MissingKey("columns".into())),
    };
    Ok(TableAnswer { description, columns })
}

/// One model call per table. Failures never abort: the affected table and
/// columns get fallback descriptions built from their profiles.
pub fn semantize_schema(
    db: &Database,
    profiles: &[ColumnProfile],
    gateway: &LlmGateway,
    prompts: &PromptSet,
    temperature: f64,
) -> SemanticSchema {
    let tables: Vec<(String, TableSemantics)> = db
        .tables()
        .par_iter()
        .map(|table| {
            let prompt = semantize_prompt(prompts, table, profiles);
            let req = ChatRequest::new(prompt).temperature(temperature);
            let answer = match gateway.complete_structured(&req, parse_table_answer) {
                Ok(a) => Some(a),
                Err(e) => {
                    log::warn!("schema description for `{}` failed ({e}); using fallback", table.name());
                    None
                }
            };
            let mut sem = TableSemantics {
                description: answer
                    .as_ref()
                    .map(|a| a.description.trim().to_string())
                    .filter(|d| !d.is_empty())
                    .unwrap_or_else(|| fallback_table_description(table)),
                columns: BTreeMap::new(),
            };
            for col in table.columns() {
                let qc = table.qualified(col);
                let described = answer.as_ref().and_then(|a| {
                    a.columns
                        .iter()
                        .find(|(k, _)| ident_eq(k, &col.name))
                        .map(|(_, v)| v.trim().to_string())
                        .filter(|v| !v.is_empty())
                });
                let text = described.unwrap_or_else(|| {
                    profiles
                        .iter()
                        .find(|p| p.column == qc)
                        .map(fallback_column_description)
                        .unwrap_or_else(|| format!("column {} of type {}; examples: ", col.name, col.declared_type))
                });
                sem.columns.insert(col.name.clone(), text);
            }
            (table.name().to_string(), sem)
        })
        .collect();
    SemanticSchema {
        tables: tables.into_iter().collect(),
    }
}
