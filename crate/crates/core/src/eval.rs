//! Precision, recall, F2 and strict recall at column and cell level.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CellValue, QualifiedColumn, SubTableRecord};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("cannot resolve row keys: {0}")]
    Unresolvable(String),
    #[error("question ids differ: missing from retrieved {missing_retrieved:?}, missing from gold {missing_gold:?}")]
    IdMismatch {
        missing_retrieved: Vec<String>,
        missing_gold: Vec<String>,
    },
    #[error("no questions to aggregate")]
    NoQuestions,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::EmptyGold => "empty_gold",
            EvalError::Unresolvable(_) => "unresolvable_row_key",
            EvalError::IdMismatch { .. } => "id_mismatch",
            EvalError::NoQuestions => "no_questions",
            EvalError::Csv(_) => "io_error",
        }
    }
}

/// Scores of one question at one level; P, R and F2 are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub strict_recall: u8,
}

/// F-beta with beta = 2 on percentages.
pub fn f2(precision: f64, recall: f64) -> f64 {
    let denom = 4.0 * precision + recall;
    if denom > 0.0 {
        5.0 * precision * recall / denom
    } else {
        0.0
    }
}

impl Scores {
    pub fn from_pr(precision: f64, recall: f64, strict: bool) -> Self {
        Self {
            precision,
            recall,
            f2: f2(precision, recall),
            strict_recall: strict as u8,
        }
    }

    fn from_counts(hits_retrieved: usize, retrieved: usize, hits_gold: usize, gold: usize) -> Self {
        let p = if retrieved == 0 {
            0.0
        } else {
            100.0 * hits_retrieved as f64 / retrieved as f64
        };
        let r = 100.0 * hits_gold as f64 / gold as f64;
        Self::from_pr(p, r, hits_gold == gold)
    }
}

pub fn score_sets<T: Ord>(retrieved: &BTreeSet<T>, gold: &BTreeSet<T>) -> Result<Scores, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let hits = retrieved.intersection(gold).count();
    Ok(Scores::from_counts(hits, retrieved.len(), hits, gold.len()))
}

pub fn score_schema(
    retrieved: &BTreeSet<QualifiedColumn>,
    gold: &BTreeSet<QualifiedColumn>,
) -> Result<Scores, EvalError> {
    score_sets(retrieved, gold)
}

struct GoldTable {
    columns: Vec<String>,
    keys: HashSet<Vec<CellValue>>,
}

fn lower(s: &str) -> String {
    s.to_lowercase()
}

fn check_rows(record: &SubTableRecord) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for c in &record.columns {
        if !seen.insert(lower(c)) {
            return Err(EvalError::Unresolvable(format!(
                "duplicate column `{}.{c}`",
                record.table
            )));
        }
    }
    match record.rows.iter().find(|r| r.len() != record.columns.len()) {
        Some(r) => Err(EvalError::Unresolvable(format!(
            "row of {} cells in `{}` with {} columns",
            r.len(),
            record.table,
            record.columns.len()
        ))),
        None => Ok(()),
    }
}

fn gold_tables(gold: &[SubTableRecord]) -> Result<HashMap<String, GoldTable>, EvalError> {
    let mut out: HashMap<String, GoldTable> = HashMap::new();
    for rec in gold {
        check_rows(rec)?;
        let columns: Vec<String> = rec.columns.iter().map(|c| lower(c)).collect();
        let entry = out.entry(lower(&rec.table)).or_insert_with(|| GoldTable {
            columns: columns.clone(),
            keys: HashSet::new(),
        });
        if entry.columns != columns {
            return Err(EvalError::Unresolvable(format!(
                "gold table `{}` listed with different column sets",
                rec.table
            )));
        }
        entry.keys.extend(rec.rows.iter().cloned());
    }
    Ok(out)
}

/// Cell-level scores. A cell is `(table, row key, column)` where the row key
/// is the row's values on that table's gold columns. Retrieved sub-tables
/// that carry only some of the gold columns are keyed on the shared ones;
/// tables without gold columns are keyed on their full rows.
pub fn score_cells(retrieved: &[SubTableRecord], gold: &[SubTableRecord]) -> Result<Scores, EvalError> {
    let gold = gold_tables(gold)?;
    let gold_total: usize = gold.values().map(|g| g.keys.len() * g.columns.len()).sum();
    if gold_total == 0 {
        return Err(EvalError::EmptyGold);
    }
    // (table, shared column positions in gold order, partial key, column)
    let mut retrieved_cells: HashSet<(String, Vec<usize>, Vec<CellValue>, String)> = HashSet::new();
    let mut correct = 0usize;
    // (table, gold key, column) triples that were hit.
    let mut hit: HashSet<(String, Vec<CellValue>, String)> = HashSet::new();
    for rec in retrieved {
        check_rows(rec)?;
        let table = lower(&rec.table);
        let columns: Vec<String> = rec.columns.iter().map(|c| lower(c)).collect();
        let g = gold.get(&table);
        // For each gold column present here: (position in gold key, position in record).
        let shared: Vec<(usize, usize)> = g
            .map(|g| {
                g.columns
                    .iter()
                    .enumerate()
                    .filter_map(|(gi, gc)| columns.iter().position(|c| c == gc).map(|ri| (gi, ri)))
                    .collect()
            })
            .unwrap_or_default();
        if shared.is_empty() {
            for row in &rec.rows {
                for c in &columns {
                    retrieved_cells.insert((table.clone(), Vec::new(), row.clone(), c.clone()));
                }
            }
            continue;
        }
        let g = g.expect("shared columns imply a gold table");
        let gold_positions: Vec<usize> = shared.iter().map(|&(gi, _)| gi).collect();
        let mut by_partial: HashMap<Vec<CellValue>, Vec<&Vec<CellValue>>> = HashMap::new();
        for k in &g.keys {
            by_partial
                .entry(gold_positions.iter().map(|&gi| k[gi].clone()).collect())
                .or_default()
                .push(k);
        }
        for row in &rec.rows {
            let partial: Vec<CellValue> = shared.iter().map(|&(_, ri)| row[ri].clone()).collect();
            let matches = by_partial.get(&partial);
            for c in &columns {
                let fresh = retrieved_cells.insert((table.clone(), gold_positions.clone(), partial.clone(), c.clone()));
                let in_gold = g.columns.contains(c);
                if fresh && in_gold && matches.is_some() {
                    correct += 1;
                }
                if let (true, Some(keys)) = (in_gold, matches) {
                    for k in keys {
                        hit.insert((table.clone(), (*k).clone(), c.clone()));
                    }
                }
            }
        }
    }
    Ok(Scores::from_counts(
        correct,
        retrieved_cells.len(),
        hit.len(),
        gold_total,
    ))
}

/// Macro average over questions; strict recall becomes a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub questions: usize,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub strict_recall: f64,
}

pub fn aggregate(scores: &[Scores]) -> Result<AggregateScores, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&Scores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(AggregateScores {
        questions: scores.len(),
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f2: mean(|s| s.f2),
        strict_recall: 100.0 * mean(|s| s.strict_recall as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub qid: String,
    pub gold_columns: BTreeSet<QualifiedColumn>,
    /// Gold cells split per source table; rows are value tuples.
    pub gold_tables: Vec<SubTableRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub qid: String,
    pub columns: BTreeSet<QualifiedColumn>,
    pub sub_tables: Vec<SubTableRecord>,
}

impl From<&GoldStandard> for RetrievedItem {
    fn from(g: &GoldStandard) -> Self {
        Self {
            qid: g.qid.clone(),
            columns: g.gold_columns.clone(),
            sub_tables: g.gold_tables.clone(),
        }
    }
}

#[derive(Deserialize)]
struct SelectionColumns {
    filled: BTreeSet<QualifiedColumn>,
}

/// The fields of a retrieval document that scoring reads.
#[derive(Deserialize)]
struct RetrievalDocument {
    qid: Option<String>,
    question: String,
    schema_selection: SelectionColumns,
    sub_tables: Vec<SubTableRecord>,
}

impl RetrievedItem {
    /// Reads one retrieval output document. Without a `qid` the question text
    /// serves as the id.
    pub fn from_retrieval_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: RetrievalDocument = serde_json::from_str(text)?;
        Ok(Self {
            qid: doc.qid.unwrap_or(doc.question),
            columns: doc.schema_selection.filled,
            sub_tables: doc.sub_tables,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub level: String,
    pub code: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScores {
    pub qid: String,
    pub schema: Option<Scores>,
    pub cell: Option<Scores>,
    pub skipped: Vec<Skip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub questions: Vec<QuestionScores>,
    pub schema: Option<AggregateScores>,
    pub cell: Option<AggregateScores>,
}

impl ScoreReport {
    pub fn skipped_count(&self) -> usize {
        self.questions.iter().map(|q| q.skipped.len()).sum()
    }

    /// Rows `qid,level,P,R,F2,SR` for every scored question and level.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["qid", "level", "P", "R", "F2", "SR"])?;
        for q in &self.questions {
            for (level, s) in [("schema", q.schema), ("cell", q.cell)] {
                if let Some(s) = s {
                    w.write_record([
                        q.qid.clone(),
                        level.to_string(),
                        format!("{:.4}", s.precision),
                        format!("{:.4}", s.recall),
                        format!("{:.4}", s.f2),
                        s.strict_recall.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn score_question(r: &RetrievedItem, g: &GoldStandard) -> QuestionScores {
    let mut skipped = Vec::new();
    let mut skip = |level: &str, e: EvalError| {
        log::warn!("question {}: {level} scoring skipped: {e}", g.qid);
        skipped.push(Skip {
            level: level.into(),
            code: e.code().into(),
            reason: e.to_string(),
        });
    };
    let schema = score_schema(&r.columns, &g.gold_columns)
        .map_err(|e| skip("schema", e))
        .ok();
    let cell = score_cells(&r.sub_tables, &g.gold_tables)
        .map_err(|e| skip("cell", e))
        .ok();
    QuestionScores {
        qid: g.qid.clone(),
        schema,
        cell,
        skipped,
    }
}

/// Scores every gold question against the retrieved item with the same id.
/// Both sides must cover the same ids.
pub fn evaluate(retrieved: &[RetrievedItem], gold: &[GoldStandard]) -> Result<ScoreReport, EvalError> {
    let by_id: BTreeMap<&str, &RetrievedItem> = retrieved.iter().map(|r| (r.qid.as_str(), r)).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.qid.as_str()).collect();
    let missing_retrieved: Vec<String> = gold_ids
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let missing_gold: Vec<String> = by_id
        .keys()
        .filter(|id| !gold_ids.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing_retrieved.is_empty() || !missing_gold.is_empty() {
        return Err(EvalError::IdMismatch {
            missing_retrieved,
            missing_gold,
        });
    }
    let questions: Vec<QuestionScores> = gold
        .par_iter()
        .map(|g| score_question(by_id[g.qid.as_str()], g))
        .collect();
    let schema: Vec<Scores> = questions.iter().filter_map(|q| q.schema).collect();
    let cell: Vec<Scores> = questions.iter().filter_map(|q| q.cell).collect();
    Ok(ScoreReport {
        schema: aggregate(&schema).ok(),
        cell: aggregate(&cell).ok(),
        questions,
    })
}
