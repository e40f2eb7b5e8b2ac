use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rusqlite::types::{Value, ValueRef};
use rusqlite::{params_from_iter, Connection, OpenFlags};
use serde::{Deserialize, Serialize};

use crate::eval::GoldStandard;
use crate::model::{CellValue, ColumnType, Database, QualifiedColumn, SubTableRecord};

use super::sql::{columns_of, parse_select, quote_ident, rewrite_parsed};
use super::{BenchError, DatasetEntry};

/// SQLite connection the gold queries run on.
pub struct SqlEngine {
    conn: Connection,
}

impl SqlEngine {
    pub fn open(path: &Path) -> Result<Self, BenchError> {
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY)
            .map_err(|e| BenchError::Execution(e.to_string()))?;
        Ok(Self { conn })
    }

    /// In-memory copy of `db`. Columns carry no declared type so every cell
    /// keeps the storage class it has in the model.
    pub fn from_database(db: &Database) -> Result<Self, BenchError> {
        let exec = |e: rusqlite::Error| BenchError::Execution(e.to_string());
        let mut conn = Connection::open_in_memory().map_err(exec)?;
        let tx = conn.transaction().map_err(exec)?;
        for table in db.tables() {
            let cols: Vec<String> = table.columns().iter().map(|c| quote_ident(&c.name)).collect();
            let name = quote_ident(table.name());
            tx.execute(&format!("CREATE TABLE {name} ({})", cols.join(", ")), [])
                .map_err(exec)?;
            let marks = vec!["?"; cols.len()].join(", ");
            let mut stmt = tx
                .prepare(&format!("INSERT INTO {name} VALUES ({marks})"))
                .map_err(exec)?;
            for r in 0..table.row_count() {
                let row = table.columns().iter().map(|c| to_sql(&c.values[r]));
                stmt.execute(params_from_iter(row)).map_err(exec)?;
            }
        }
        tx.commit().map_err(exec)?;
        Ok(Self { conn })
    }

    /// Runs `sql` and returns every result row.
    pub fn query(&self, sql: &str) -> Result<Vec<Vec<CellValue>>, BenchError> {
        let exec = |e: rusqlite::Error| BenchError::Execution(e.to_string());
        let mut stmt = self.conn.prepare(sql).map_err(exec)?;
        let width = stmt.column_count();
        let mut rows = stmt.query([]).map_err(exec)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next().map_err(exec)? {
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                values.push(from_sql(row.get_ref(i).map_err(exec)?));
            }
            out.push(values);
        }
        Ok(out)
    }
}

fn to_sql(v: &CellValue) -> Value {
    match v {
        CellValue::Null => Value::Null,
        CellValue::Text(s) => Value::Text(s.clone()),
        CellValue::Number(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => Value::Integer(*n as i64),
        CellValue::Number(n) => Value::Real(*n),
        CellValue::Boolean(b) => Value::Integer(i64::from(*b)),
    }
}

fn from_sql(v: ValueRef<'_>) -> CellValue {
    match v {
        ValueRef::Null => CellValue::Null,
        ValueRef::Integer(i) => CellValue::Number(i as f64),
        ValueRef::Real(r) => CellValue::Number(r),
        ValueRef::Text(t) | ValueRef::Blob(t) => CellValue::Text(String::from_utf8_lossy(t).into_owned()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldSubtable {
    pub columns: Vec<QualifiedColumn>,
    pub rows: Vec<Vec<CellValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub qid: String,
    pub question: String,
    pub db_id: String,
    pub gold_sql: String,
    pub rewritten_sql: String,
    pub gold_columns: BTreeSet<QualifiedColumn>,
    /// Rows of the rewritten query, deduplicated, in execution order.
    pub gold_subtable: GoldSubtable,
    /// The gold rows split onto each source table.
    pub gold_tables: Vec<SubTableRecord>,
    pub gold_answer: Vec<Vec<CellValue>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl BenchSample {
    pub fn gold_standard(&self) -> GoldStandard {
        GoldStandard {
            qid: self.qid.clone(),
            gold_columns: self.gold_columns.clone(),
            gold_tables: self.gold_tables.clone(),
        }
    }
}

pub const EMPTY_GOLD_FLAG: &str = "empty_gold_subtable";

fn dedup(rows: Vec<Vec<CellValue>>) -> Vec<Vec<CellValue>> {
    let mut seen = HashSet::new();
    rows.into_iter().filter(|r| seen.insert(r.clone())).collect()
}

/// Parses, rewrites and executes one dataset entry.
pub fn materialize_gold(entry: &DatasetEntry, db: &Database, engine: &SqlEngine) -> Result<BenchSample, BenchError> {
    let query = parse_select(&entry.sql)?;
    let gold_columns = columns_of(&query, db)?;
    let rewritten_sql = rewrite_parsed(&query, &gold_columns)?;
    let columns: Vec<QualifiedColumn> = gold_columns.iter().cloned().collect();

    // SQLite hands booleans back as integers; restore the model's typing.
    let boolean: Vec<bool> = columns
        .iter()
        .map(|qc| matches!(db.column(qc), Some((_, c)) if c.declared_type == ColumnType::Boolean))
        .collect();
    let rows: Vec<Vec<CellValue>> = engine
        .query(&rewritten_sql)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&boolean)
                .map(|(v, &b)| match v {
                    CellValue::Number(n) if b && (n == 0.0 || n == 1.0) => CellValue::Boolean(n == 1.0),
                    other => other,
                })
                .collect()
        })
        .collect();
    let rows = dedup(rows);
    let gold_answer = engine.query(&entry.sql)?;

    let mut gold_tables = Vec::new();
    for table in db.tables() {
        let picks: Vec<(usize, String)> = table
            .columns()
            .iter()
            .filter_map(|c| {
                let qc = table.qualified(c);
                columns.iter().position(|x| *x == qc).map(|i| (i, c.name.clone()))
            })
            .collect();
        if picks.is_empty() {
            continue;
        }
        // An all-null projection is the missing side of a LEFT JOIN.
        let split: Vec<Vec<CellValue>> = rows
            .iter()
            .map(|r| picks.iter().map(|(i, _)| r[*i].clone()).collect::<Vec<_>>())
            .filter(|r| r.iter().any(|v| !v.is_null()))
            .collect();
        let split = dedup(split);
        if !split.is_empty() {
            gold_tables.push(SubTableRecord {
                table: table.name().to_string(),
                columns: picks.into_iter().map(|(_, n)| n).collect(),
                rows: split,
            });
        }
    }

    let mut flags = Vec::new();
    if rows.is_empty() {
        flags.push(EMPTY_GOLD_FLAG.to_string());
    }
    Ok(BenchSample {
        qid: entry.qid.clone(),
        question: entry.question.clone(),
        db_id: entry.db_id.clone(),
        gold_sql: entry.sql.clone(),
        rewritten_sql,
        gold_columns,
        gold_subtable: GoldSubtable { columns, rows },
        gold_tables,
        gold_answer,
        flags,
    })
}
