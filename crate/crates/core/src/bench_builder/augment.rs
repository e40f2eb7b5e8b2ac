use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::derive_seed;
use crate::model::{ident_eq, CellValue, Database};

use super::materialize::{materialize_gold, BenchSample, SqlEngine};
use super::sql::parse_select;
use super::{BenchError, DatasetEntry};

/// Surface string to replacement, applied to text cells only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymMap(BTreeMap<String, String>);

impl SynonymMap {
    pub fn new(map: BTreeMap<String, String>) -> Result<Self, BenchError> {
        for (k, v) in &map {
            if k.is_empty() {
                return Err(BenchError::InvalidSynonyms("empty key".into()));
            }
            if k == v {
                return Err(BenchError::InvalidSynonyms(format!("`{k}` maps to itself")));
            }
        }
        Ok(Self(map))
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| BenchError::InvalidSynonyms(e.to_string()))?;
        Self::new(map)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentDiagnostic {
    pub qid: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub db: Database,
    pub samples: Vec<BenchSample>,
    /// (table, column, original, replacement) in the order applied.
    pub replacements: Vec<(String, String, String, String)>,
    pub diagnostics: Vec<AugmentDiagnostic>,
}

fn quote_literal(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Replaces gold text cells found in `synonyms` throughout their column and
/// re-materializes every sample on the changed database. String literals in
/// the gold SQL that name a replaced value are rewritten so the query still
/// selects the same rows; question text is left alone.
pub fn augment(
    db: &Database,
    samples: &[BenchSample],
    synonyms: &SynonymMap,
    seed: u64,
) -> Result<Augmented, BenchError> {
    let unchanged = |diagnostics| Augmented {
        db: db.clone(),
        samples: samples.to_vec(),
        replacements: Vec::new(),
        diagnostics,
    };
    if synonyms.is_empty() || samples.is_empty() {
        return Ok(unchanged(Vec::new()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "augment", 0)));

    let mut current = db.clone();
    let mut decided: BTreeSet<(String, String, String)> = BTreeSet::new();
    let mut replacements = Vec::new();
    let mut diagnostics = Vec::new();
    for &i in &order {
        let sample = &samples[i];
        for record in &sample.gold_tables {
            for (c, column) in record.columns.iter().enumerate() {
                for row in &record.rows {
                    let CellValue::Text(original) = &row[c] else { continue };
                    let Some(replacement) = synonyms.get(original) else {
                        continue;
                    };
                    let key = (record.table.to_lowercase(), column.to_lowercase(), original.clone());
                    if !decided.insert(key) {
                        continue;
                    }
                    let table = current
                        .table(&record.table)
                        .ok_or_else(|| BenchError::UnknownTable(record.table.clone()))?;
                    let idx = table
                        .column_index(column)
                        .ok_or_else(|| BenchError::UnknownColumn(format!("{}.{column}", record.table)))?;
                    let target = CellValue::Text(replacement.to_string());
                    if table.columns()[idx].values.contains(&target) {
                        diagnostics.push(AugmentDiagnostic {
                            qid: sample.qid.clone(),
                            code: "synonym_collision".into(),
                            detail: format!(
                                "{}.{column} already holds `{replacement}`; `{original}` kept",
                                record.table
                            ),
                        });
                        continue;
                    }
                    let from = CellValue::Text(original.clone());
                    let changed = table.map_column(idx, |v| if *v == from { target.clone() } else { v.clone() });
                    current = current.replace_table(changed);
                    replacements.push((
                        record.table.clone(),
                        column.clone(),
                        original.clone(),
                        replacement.to_string(),
                    ));
                }
            }
        }
    }
    if replacements.is_empty() {
        return Ok(unchanged(diagnostics));
    }

    let engine = SqlEngine::from_database(&current)?;
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let sql = rewrite_literals(sample, &replacements, &current)?;
        let entry = DatasetEntry {
            qid: sample.qid.clone(),
            question: sample.question.clone(),
            db_id: sample.db_id.clone(),
            sql,
        };
        match materialize_gold(&entry, &current, &engine) {
            Ok(s) => out.push(s),
            Err(e) => {
                diagnostics.push(AugmentDiagnostic {
                    qid: sample.qid.clone(),
                    code: e.code().into(),
                    detail: format!("re-materialization failed, sample kept as is: {e}"),
                });
                let mut kept = sample.clone();
                kept.flags.push("augment_failed".into());
                out.push(kept);
            }
        }
    }
    Ok(Augmented {
        db: current,
        samples: out,
        replacements,
        diagnostics,
    })
}

/// Gold SQL with literals equal to a replaced value swapped for the
/// replacement, when the replacement happened in one of the sample's columns.
fn rewrite_literals(
    sample: &BenchSample,
    replacements: &[(String, String, String, String)],
    db: &Database,
) -> Result<String, BenchError> {
    let relevant: Vec<&(String, String, String, String)> = replacements
        .iter()
        .filter(|(t, c, _, _)| {
            sample
                .gold_columns
                .iter()
                .any(|qc| ident_eq(qc.table(), t) && ident_eq(qc.column(), c))
        })
        .collect();
    if relevant.is_empty() {
        return Ok(sample.gold_sql.clone());
    }
    let query = parse_select(&sample.gold_sql)?;
    let mut sql = sample.gold_sql.clone();
    for (value, span) in query.string_literals(db).into_iter().rev() {
        if let Some((_, _, _, to)) = relevant.iter().find(|(_, _, from, _)| *from == value) {
            sql.replace_range(span, &quote_literal(to));
        }
    }
    Ok(sql)
}
