use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::llm::LlmGateway;
use crate::model::{parse_decimal, CellValue, QualifiedColumn};
use crate::preprocess::{CellIndex, ColumnIndex};

use super::predicate::Predicate;
use super::ranges::{ColumnConstraint, ConstraintKind};
use super::RetrievalError;

/// Knobs of cell mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMappingOptions {
    /// Similarity at or above which a value is always kept.
    pub sigma: f64,
    /// Lower bound on candidates per keyword.
    pub k_min: usize,
}

impl Default for CellMappingOptions {
    fn default() -> Self {
        Self { sigma: 0.85, k_min: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedValue {
    pub value: CellValue,
    /// Cosine similarity for semantic matches; `None` for exact matches.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMatchSet {
    pub column: QualifiedColumn,
    pub matched_values: Vec<MatchedValue>,
    /// Sorted union of the row lists of `matched_values`.
    pub row_indices: Vec<usize>,
    /// No value satisfied the constraint on its own terms.
    pub no_match: bool,
    /// Values that could not be read as numbers under a numeric predicate.
    pub unparseable: usize,
}

fn numeric_key(v: &CellValue) -> Option<f64> {
    match v {
        CellValue::Number(n) => Some(*n),
        CellValue::Text(s) => parse_decimal(s.trim()),
        _ => None,
    }
}

/// Exact scan of the value map with a numeric predicate.
pub fn match_numeric(index: &ColumnIndex, predicate: &Predicate) -> CellMatchSet {
    let mut matched = Vec::new();
    let mut rows = BTreeSet::new();
    let mut unparseable = 0;
    for e in &index.entries {
        match numeric_key(&e.value) {
            Some(x) if predicate.eval(x) => {
                matched.push(MatchedValue {
                    value: e.value.clone(),
                    similarity: None,
                });
                rows.extend(e.rows.iter().copied());
            }
            Some(_) => {}
            None => unparseable += e.rows.len(),
        }
    }
    if unparseable > 0 {
        log::debug!("{unparseable} cells of `{}` are not numeric", index.column);
    }
    CellMatchSet {
        column: index.column.clone(),
        no_match: matched.is_empty(),
        matched_values: matched,
        row_indices: rows.into_iter().collect(),
        unparseable,
    }
}

/// Exact lookup of keywords in a column without a semantic index.
fn match_exact_keywords(index: &ColumnIndex, keywords: &[String]) -> CellMatchSet {
    let mut matched = Vec::new();
    let mut rows = BTreeSet::new();
    for k in keywords {
        let mut keys = vec![CellValue::Text(k.clone())];
        if let Some(n) = parse_decimal(k.trim()) {
            keys.push(CellValue::Number(n));
        }
        for key in keys {
            if let Some(r) = index.rows_of(&key) {
                if !matched.iter().any(|m: &MatchedValue| m.value == key) {
                    rows.extend(r.iter().copied());
                    matched.push(MatchedValue {
                        value: key,
                        similarity: None,
                    });
                }
            }
        }
    }
    CellMatchSet {
        column: index.column.clone(),
        no_match: matched.is_empty(),
        matched_values: matched,
        row_indices: rows.into_iter().collect(),
        unparseable: 0,
    }
}

/// Semantic matching: per keyword the top `max(n, k_min)` values plus every
/// value scoring at least `sigma`, unioned over keywords. Stored values equal
/// to a keyword are always kept.
pub fn match_text(
    index: &ColumnIndex,
    keywords: &[String],
    gateway: &LlmGateway,
    options: &CellMappingOptions,
) -> Result<CellMatchSet, RetrievalError> {
    if index.ann.is_none() {
        return Ok(match_exact_keywords(index, keywords));
    }
    let distinct = index.distinct_count();
    let base_k = keywords.len().max(options.k_min).max(1);
    let mut found: Vec<MatchedValue> = Vec::new();
    let add = |value: &CellValue, similarity: f64, found: &mut Vec<MatchedValue>| match found
        .iter_mut()
        .find(|m| &m.value == value)
    {
        Some(m) => {
            if m.similarity.is_some_and(|s| similarity > s) {
                m.similarity = Some(similarity);
            }
        }
        None => found.push(MatchedValue {
            value: value.clone(),
            similarity: Some(similarity),
        }),
    };
    if distinct > 0 {
        let vectors = gateway.embed(keywords)?;
        for (keyword, q) in keywords.iter().zip(&vectors) {
            let mut k = base_k;
            let mut hits = index.query(q, k)?;
            // Widen while the tail still clears sigma.
            while hits.len() == k && k < distinct && hits.last().is_some_and(|h| h.similarity >= options.sigma) {
                k = (k * 2).min(distinct);
                hits = index.query(q, k)?;
            }
            for (i, h) in hits.iter().enumerate() {
                if i < base_k || h.similarity >= options.sigma {
                    add(&h.value, h.similarity, &mut found);
                }
            }
            if index.rows_of(&CellValue::Text(keyword.clone())).is_some() {
                add(&CellValue::Text(keyword.clone()), 1.0, &mut found);
            }
        }
    }
    let mut rows = BTreeSet::new();
    for m in &found {
        if let Some(r) = index.rows_of(&m.value) {
            rows.extend(r.iter().copied());
        }
    }
    found.sort_by(|a, b| {
        b.similarity
            .unwrap_or(1.0)
            .total_cmp(&a.similarity.unwrap_or(1.0))
            .then_with(|| a.value.cmp(&b.value))
    });
    Ok(CellMatchSet {
        column: index.column.clone(),
        no_match: found.is_empty(),
        matched_values: found,
        row_indices: rows.into_iter().collect(),
        unparseable: 0,
    })
}

/// Maps one constrained column to its matching cells. Dependent columns have
/// no match set.
pub fn map_cells(
    constraint: &ColumnConstraint,
    index: &CellIndex,
    gateway: &LlmGateway,
    options: &CellMappingOptions,
) -> Result<Option<CellMatchSet>, RetrievalError> {
    let column = index.column(&constraint.column)?;
    Ok(match &constraint.kind {
        ConstraintKind::Dependent => None,
        ConstraintKind::ConstrainedNumeric { predicate } => Some(match_numeric(column, predicate)),
        ConstraintKind::ConstrainedText { keywords } => Some(match_text(column, keywords, gateway, options)?),
    })
}
