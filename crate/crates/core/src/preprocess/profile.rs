use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CellValue, Column, ColumnType, Database, QualifiedColumn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopValue {
    pub value: String,
    pub count: usize,
}

/// Per-column statistics feeding schema descriptions and join discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub column: QualifiedColumn,
    pub declared_type: ColumnType,
    pub distinct_count: usize,
    pub row_count: usize,
    pub uniqueness: f64,
    pub top_values: Vec<TopValue>,
    pub longest_example: Option<String>,
    pub shortest_example: Option<String>,
}

pub fn profile_columns(db: &Database) -> Vec<ColumnProfile> {
    let work: Vec<(QualifiedColumn, &Column)> = db
        .tables()
        .iter()
        .flat_map(|t| t.columns().iter().map(move |c| (t.qualified(c), c)))
        .collect();
    work.into_par_iter().map(|(qc, col)| profile_column(qc, col)).collect()
}

pub fn profile_column(column: QualifiedColumn, col: &Column) -> ColumnProfile {
    let mut counts: HashMap<&CellValue, usize> = HashMap::new();
    for v in col.values.iter().filter(|v| !v.is_null()) {
        *counts.entry(v).or_default() += 1;
    }
    let row_count = col.values.len();
    let distinct_count = counts.len();
    let uniqueness = if row_count > 0 {
        distinct_count as f64 / row_count as f64
    } else {
        0.0
    };

    let mut ranked: Vec<(String, usize)> = counts
        .iter()
        .map(|(v, n)| (v.canonical().unwrap_or_default(), *n))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top_values = ranked
        .iter()
        .take(3)
        .map(|(value, count)| TopValue {
            value: value.clone(),
            count: *count,
        })
        .collect();

    let by_len = |a: &&(String, usize), b: &&(String, usize)| {
        a.0.chars()
            .count()
            .cmp(&b.0.chars().count())
            .then_with(|| b.0.cmp(&a.0))
    };
    let longest_example = ranked.iter().max_by(by_len).map(|(v, _)| v.clone());
    let shortest_example = ranked
        .iter()
        .min_by(|a, b| {
            a.0.chars()
                .count()
                .cmp(&b.0.chars().count())
                .then_with(|| a.0.cmp(&b.0))
        })
        .map(|(v, _)| v.clone());

    ColumnProfile {
        column,
        declared_type: col.declared_type,
        distinct_count,
        row_count,
        uniqueness,
        top_values,
        longest_example,
        shortest_example,
    }
}
