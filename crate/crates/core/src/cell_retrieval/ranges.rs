use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{
    extract_json_object, take_string, take_string_list, ChatRequest, LlmGateway, ParseError, PromptKind, PromptSet,
};
use crate::model::{Database, QualifiedColumn};
use crate::preprocess::SemanticSchema;
use crate::schema_retrieval::SchemaSelection;

use super::predicate::Predicate;
use super::RetrievalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    ConstrainedText { keywords: Vec<String> },
    ConstrainedNumeric { predicate: Predicate },
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnConstraint {
    pub column: QualifiedColumn,
    #[serde(flatten)]
    pub kind: ConstraintKind,
}

impl ColumnConstraint {
    pub fn dependent(column: QualifiedColumn) -> Self {
        Self {
            column,
            kind: ConstraintKind::Dependent,
        }
    }

    pub fn is_constrained(&self) -> bool {
        !matches!(self.kind, ConstraintKind::Dependent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeParse {
    /// One entry per filled column, in selection order.
    pub constraints: Vec<ColumnConstraint>,
    pub degraded: bool,
    /// Columns the model named that are not in the selection.
    pub ignored_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct RawConstraint {
    column: QualifiedColumn,
    kind: ConstraintKind,
}

fn parse_constraint(item: &Value) -> Result<RawConstraint, ParseError> {
    let obj = item
        .as_object()
        .ok_or_else(|| ParseError::WrongType("constraints".into()))?;
    let column_text = take_string(obj, "column")?;
    let column: QualifiedColumn = column_text
        .parse()
        .map_err(|_| ParseError::MalformedColumn(column_text.clone()))?;
    let kind = match take_string(obj, "kind")?.to_ascii_lowercase().as_str() {
        "text" | "constrained_text" => {
            let mut keywords: Vec<String> = Vec::new();
            for k in take_string_list(obj, "keywords")? {
                let k = k.trim().to_string();
                if !k.is_empty() && !keywords.contains(&k) {
                    keywords.push(k);
                }
            }
            if keywords.is_empty() {
                return Err(ParseError::InvalidValue(format!("no keywords for `{column}`")));
            }
            ConstraintKind::ConstrainedText { keywords }
        }
        "numeric" | "constrained_numeric" => {
            let raw = take_string(obj, "predicate")?;
            let predicate = raw
                .parse()
                .map_err(|e: super::predicate::PredicateError| ParseError::InvalidValue(e.to_string()))?;
            ConstraintKind::ConstrainedNumeric { predicate }
        }
        "dependent" => ConstraintKind::Dependent,
        other => return Err(ParseError::InvalidValue(format!("unknown kind `{other}`"))),
    };
    Ok(RawConstraint { column, kind })
}

fn parse_answer(raw: &str) -> Result<Vec<RawConstraint>, ParseError> {
    let map = extract_json_object(raw)?;
    take_string(&map, "reasoning")?;
    let items = match map.get("constraints") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(ParseError::WrongType("constraints".into())),
        None => return Err(ParseError::MissingKey("constraints".into())),
    };
    if let Some(extra) = map.keys().find(|k| !matches!(k.as_str(), "reasoning" | "constraints")) {
        return Err(ParseError::UnexpectedKey(extra.clone()));
    }
    items.iter().map(parse_constraint).collect()
}

fn columns_block(selection: &SchemaSelection, schema: &SemanticSchema, db: &Database) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
    let mut out = String::from("{\n");
    let n = selection.filled.len();
    for (i, c) in selection.filled.iter().enumerate() {
        let ty = db
            .column(c)
            .map(|(_, col)| col.declared_type.as_str())
            .unwrap_or("text");
        out.push_str(&format!(
            "  {}: {}",
            quote(&c.to_string()),
            quote(&format!("{} ({ty})", schema.describe(c)))
        ));
        out.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    out.push('}');
    out
}

pub fn range_prompt(
    prompts: &PromptSet,
    question: &str,
    selection: &SchemaSelection,
    schema: &SemanticSchema,
    db: &Database,
) -> Result<String, RetrievalError> {
    Ok(prompts.render(
        PromptKind::RangeParsing,
        &[
            ("QUESTION", question),
            ("COLUMNS", &columns_block(selection, schema, db)),
        ],
    )?)
}

/// Classifies every filled column as text-constrained, numeric-constrained or
/// dependent. Columns the model leaves out, join keys included, stay
/// dependent; an unusable answer leaves every column dependent.
pub fn parse_ranges(
    question: &str,
    selection: &SchemaSelection,
    schema: &SemanticSchema,
    db: &Database,
    gateway: &LlmGateway,
    prompts: &PromptSet,
    temperature: f64,
) -> Result<RangeParse, RetrievalError> {
    let all_dependent = || -> Vec<ColumnConstraint> {
        selection
            .filled
            .iter()
            .cloned()
            .map(ColumnConstraint::dependent)
            .collect()
    };
    if selection.filled.is_empty() {
        return Ok(RangeParse {
            constraints: Vec::new(),
            degraded: false,
            ignored_columns: Vec::new(),
        });
    }
    let prompt = range_prompt(prompts, question, selection, schema, db)?;
    let req = ChatRequest::new(prompt).temperature(temperature);
    let raw = match gateway.complete_structured(&req, parse_answer) {
        Ok(raw) => raw,
        Err(e) => {
            log::warn!("range parsing failed ({e}); retrieving full ranges");
            return Ok(RangeParse {
                constraints: all_dependent(),
                degraded: true,
                ignored_columns: Vec::new(),
            });
        }
    };
    let mut by_column: BTreeMap<QualifiedColumn, ConstraintKind> = BTreeMap::new();
    let mut ignored = Vec::new();
    for rc in raw {
        if !selection.filled.contains(&rc.column) {
            ignored.push(rc.column.to_string());
            continue;
        }
        match (by_column.get_mut(&rc.column), rc.kind) {
            (None, kind) => {
                by_column.insert(rc.column, kind);
            }
            (
                Some(ConstraintKind::ConstrainedText { keywords }),
                ConstraintKind::ConstrainedText { keywords: more },
            ) => {
                for k in more {
                    if !keywords.contains(&k) {
                        keywords.push(k);
                    }
                }
            }
            (Some(_), _) => log::warn!("conflicting constraints for `{}`; keeping the first", rc.column),
        }
    }
    let constraints = selection
        .filled
        .iter()
        .map(|c| ColumnConstraint {
            column: c.clone(),
            kind: by_column.remove(c).unwrap_or(ConstraintKind::Dependent),
        })
        .collect();
    Ok(RangeParse {
        constraints,
        degraded: false,
        ignored_columns: ignored,
    })
}
