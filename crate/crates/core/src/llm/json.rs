use serde_json::{Map, Value};

use crate::model::QualifiedColumn;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJsonObject,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("unexpected key `{0}`")]
    UnexpectedKey(String),
    #[error("key `{0}` has the wrong type")]
    WrongType(String),
    #[error("malformed column reference `{0}`")]
    MalformedColumn(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::NoJsonObject => "no_json_object",
            ParseError::InvalidJson(_) => "invalid_json",
            ParseError::MissingKey(_) => "missing_key",
            ParseError::UnexpectedKey(_) => "unexpected_key",
            ParseError::WrongType(_) => "wrong_type",
            ParseError::MalformedColumn(_) => "malformed_column",
            ParseError::InvalidValue(_) => "invalid_value",
        }
    }
}

/// Finds the first balanced `{...}` in `raw` that parses as a JSON object.
/// Surrounding prose and code fences are ignored.
pub fn extract_json_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    let bytes = raw.as_bytes();
    let mut last_err = None;
    let mut start = 0;
    while let Some(off) = raw[start..].find('{') {
        let open = start + off;
        if let Some(close) = matching_brace(bytes, open) {
            match serde_json::from_str::<Value>(&raw[open..=close]) {
                Ok(Value::Object(map)) => return Ok(map),
                Ok(_) => {}
                Err(e) => last_err = Some(ParseError::InvalidJson(e.to_string())),
            }
        }
        start = open + 1;
    }
    Err(last_err.unwrap_or(ParseError::NoJsonObject))
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

pub(crate) fn take_string(map: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match map.get(key) {
        None => Err(ParseError::MissingKey(key.into())),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::WrongType(key.into())),
    }
}

pub(crate) fn take_string_list(map: &Map<String, Value>, key: &str) -> Result<Vec<String>, ParseError> {
    match map.get(key) {
        None => Err(ParseError::MissingKey(key.into())),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                _ => Err(ParseError::WrongType(key.into())),
            })
            .collect(),
        Some(_) => Err(ParseError::WrongType(key.into())),
    }
}

pub(crate) fn parse_column_list(items: &[String]) -> Result<Vec<QualifiedColumn>, ParseError> {
    let mut out: Vec<QualifiedColumn> = Vec::with_capacity(items.len());
    for item in items {
        let qc: QualifiedColumn = item.parse().map_err(|_| ParseError::MalformedColumn(item.clone()))?;
        if !out.contains(&qc) {
            out.push(qc);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSelectionResponse {
    pub reasoning: String,
    pub columns: Vec<QualifiedColumn>,
}

/// Strict parse of the `{"reasoning": ..., "columns": [...]}` answer format.
pub fn parse_column_selection(raw: &str) -> Result<ColumnSelectionResponse, ParseError> {
    let map = extract_json_object(raw)?;
    let reasoning = take_string(&map, "reasoning")?;
    let columns = parse_column_list(&take_string_list(&map, "columns")?)?;
    if let Some(extra) = map.keys().find(|k| *k != "reasoning" && *k != "columns") {
        return Err(ParseError::UnexpectedKey(extra.clone()));
    }
    Ok(ColumnSelectionResponse { reasoning, columns })
}

pub fn serialize_column_selection(r: &ColumnSelectionResponse) -> String {
    serde_json::json!({
        "reasoning": r.reasoning,
        "columns": r.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
    })
    .to_string()
}
