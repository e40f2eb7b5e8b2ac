use std::fs;
use std::path::Path;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

use super::{ident_eq, CellValue, Column, ColumnType, Database, ForeignKey, ModelError, QualifiedColumn, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Sqlite,
    CsvDir,
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqlite" => Ok(SourceFormat::Sqlite),
            "csv_dir" | "csv" => Ok(SourceFormat::CsvDir),
            other => Err(format!("unknown database format `{other}`")),
        }
    }
}

pub fn load_database(path: &Path, format: SourceFormat) -> Result<Database, ModelError> {
    if !path.exists() {
        return Err(ModelError::NotFound(path.display().to_string()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "db".to_string());
    match format {
        SourceFormat::Sqlite => load_sqlite(path, name),
        SourceFormat::CsvDir => load_csv_dir(path, name),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_csv_dir(dir: &Path, name: String) -> Result<Database, ModelError> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let mut tables = Vec::with_capacity(files.len());
    for file in files {
        tables.push(load_csv_table(&file)?);
    }
    Database::new(name, tables)
}

fn load_csv_table(path: &Path) -> Result<Table, ModelError> {
    let display = path.display().to_string();
    let csv_err = |e: csv::Error| ModelError::Csv {
        path: display.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let mut raw: Vec<Vec<CellValue>> = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != headers.len() {
            return Err(ModelError::RaggedRow {
                path: display.clone(),
                row: i + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (slot, field) in raw.iter_mut().zip(record.iter()) {
            slot.push(if field.is_empty() {
                CellValue::Null
            } else {
                CellValue::Text(field.to_string())
            });
        }
    }
    let columns = headers
        .into_iter()
        .zip(raw)
        .map(|(h, values)| Column::infer(h, values))
        .collect::<Result<Vec<_>, _>>()?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Table::new(name, columns, vec![], vec![])
}

/// Writes one CSV file per table. Null cells become empty fields.
pub fn save_csv_dir(db: &Database, dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for table in db.tables() {
        let path = dir.join(format!("{}.csv", table.name()));
        let display = path.display().to_string();
        let csv_err = |e: csv::Error| ModelError::Csv {
            path: display.clone(),
            message: e.to_string(),
        };
        let mut writer = csv::Writer::from_path(&path).map_err(csv_err)?;
        writer
            .write_record(table.columns().iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for r in 0..table.row_count() {
            let fields: Vec<String> = table
                .columns()
                .iter()
                .map(|c| c.values[r].canonical().unwrap_or_default())
                .collect();
            writer.write_record(&fields).map_err(csv_err)?;
        }
        writer.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn sqlite_type(decl: &str) -> ColumnType {
    let d = decl.to_ascii_uppercase();
    if d.contains("INT") {
        ColumnType::Integer
    } else if d.contains("BOOL") {
        ColumnType::Boolean
    } else if ["REAL", "FLOA", "DOUB", "NUMERIC", "DECIMAL"]
        .iter()
        .any(|k| d.contains(k))
    {
        ColumnType::Real
    } else if d.contains("DATE") || d.contains("TIME") {
        ColumnType::Date
    } else if d.contains("CHAR") || d.contains("TEXT") || d.contains("CLOB") || d.is_empty() {
        ColumnType::Text
    } else {
        ColumnType::Other
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn load_sqlite(path: &Path, name: String) -> Result<Database, ModelError> {
    let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY)?;
    let table_names: Vec<String> = {
        let mut stmt = conn.prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' \
             AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
        )?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
        rows.collect::<Result<_, _>>()?
    };

    struct RawTable {
        name: String,
        columns: Vec<(String, ColumnType)>,
        pk: Vec<(i64, String)>,
        fks: Vec<(String, String, Option<String>)>,
    }

    let mut raws = Vec::with_capacity(table_names.len());
    for t in &table_names {
        let mut columns = Vec::new();
        let mut pk = Vec::new();
        let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(t)))?;
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let col: String = row.get(1)?;
            let decl: Option<String> = row.get(2)?;
            let pk_pos: i64 = row.get(5)?;
            if pk_pos > 0 {
                pk.push((pk_pos, col.clone()));
            }
            columns.push((col, sqlite_type(decl.as_deref().unwrap_or(""))));
        }
        pk.sort();
        let mut fks = Vec::new();
        let mut stmt = conn.prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(t)))?;
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let remote: String = row.get(2)?;
            let from: String = row.get(3)?;
            let to: Option<String> = row.get(4)?;
            fks.push((from, remote, to));
        }
        raws.push(RawTable {
            name: t.clone(),
            columns,
            pk,
            fks,
        });
    }

    let view = raws_view(&raws);
    let mut tables = Vec::with_capacity(raws.len());
    for raw in &raws {
        let select = format!(
            "SELECT {} FROM {}",
            raw.columns
                .iter()
                .map(|(c, _)| quote_ident(c))
                .collect::<Vec<_>>()
                .join(", "),
            quote_ident(&raw.name)
        );
        let mut values: Vec<Vec<CellValue>> = vec![Vec::new(); raw.columns.len()];
        if !raw.columns.is_empty() {
            let mut stmt = conn.prepare(&select)?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                for (i, slot) in values.iter_mut().enumerate() {
                    slot.push(match row.get_ref(i)? {
                        ValueRef::Null => CellValue::Null,
                        ValueRef::Integer(n) => CellValue::Number(n as f64),
                        ValueRef::Real(f) => CellValue::Number(f),
                        ValueRef::Text(b) => CellValue::Text(String::from_utf8_lossy(b).into_owned()),
                        ValueRef::Blob(b) => CellValue::Text(String::from_utf8_lossy(b).into_owned()),
                    });
                }
            }
        }
        let mut columns = Vec::with_capacity(raw.columns.len());
        for ((col, ty), vals) in raw.columns.iter().zip(values) {
            columns.push(sqlite_column(&raw.name, col, *ty, vals)?);
        }
        let fks = raw
            .fks
            .iter()
            .filter_map(|(from, remote, to)| resolve_fk(&view, &raw.name, from, remote, to.as_deref()))
            .collect();
        tables.push(Table::new(
            raw.name.clone(),
            columns,
            raw.pk.iter().map(|(_, c)| c.clone()).collect(),
            fks,
        )?);
    }

    fn raws_view(raws: &[RawTable]) -> Vec<(&str, Vec<&str>, Vec<&str>)> {
        raws.iter()
            .map(|r| {
                (
                    r.name.as_str(),
                    r.columns.iter().map(|(c, _)| c.as_str()).collect(),
                    r.pk.iter().map(|(_, c)| c.as_str()).collect(),
                )
            })
            .collect()
    }

    Database::new(name, tables)
}

/// Declared numeric columns keep their type only when every value is numeric;
/// SQLite's type affinity lets text slip in, in which case the column is text.
fn sqlite_column(table: &str, name: &str, ty: ColumnType, values: Vec<CellValue>) -> Result<Column, ModelError> {
    let ty = match ty {
        ColumnType::Integer | ColumnType::Real => {
            if values.iter().all(|v| v.is_null() || v.as_number().is_some()) {
                ty
            } else {
                log::warn!("{table}.{name}: declared {ty} but holds text; treating as text");
                ColumnType::Text
            }
        }
        ColumnType::Boolean => {
            if values
                .iter()
                .all(|v| v.is_null() || matches!(v.as_number(), Some(n) if n == 0.0 || n == 1.0))
            {
                let values = values
                    .into_iter()
                    .map(|v| match v.as_number() {
                        Some(n) => CellValue::Boolean(n != 0.0),
                        None => CellValue::Null,
                    })
                    .collect();
                return Column::new(name, ColumnType::Boolean, values);
            }
            ColumnType::Other
        }
        other => other,
    };
    Column::new(name, ty, values)
}

fn resolve_fk(
    tables: &[(&str, Vec<&str>, Vec<&str>)],
    owner: &str,
    from: &str,
    remote: &str,
    to: Option<&str>,
) -> Option<ForeignKey> {
    let (owner_name, owner_cols, _) = tables.iter().find(|(n, _, _)| ident_eq(n, owner))?;
    let local = owner_cols.iter().find(|c| ident_eq(c, from))?;
    let (remote_name, remote_cols, remote_pk) = match tables.iter().find(|(n, _, _)| ident_eq(n, remote)) {
        Some(t) => t,
        None => {
            log::warn!("{owner_name}.{from}: foreign key to unknown table `{remote}` ignored");
            return None;
        }
    };
    let target = match to {
        Some(to) => remote_cols.iter().find(|c| ident_eq(c, to)).copied(),
        None => remote_pk.first().copied(),
    };
    let Some(target) = target else {
        log::warn!("{owner_name}.{from}: unresolvable foreign key target in `{remote}` ignored");
        return None;
    };
    Some(ForeignKey {
        column: local.to_string(),
        references: QualifiedColumn::new(*remote_name, target).ok()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_gives_empty_database() {
        let dir = tempfile::tempdir().unwrap();
        let db = load_database(dir.path(), SourceFormat::CsvDir).unwrap();
        assert!(db.tables().is_empty());
    }

    #[test]
    fn csv_table_read_back() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("people.csv"), "id,name\n1,Ann\n2,\"Bo, Jr\"\n").unwrap();
        let db = load_database(dir.path(), SourceFormat::CsvDir).unwrap();
        let t = db.table("people").unwrap();
        assert_eq!(t.columns().len(), 2);
        assert_eq!(t.row_count(), 2);
        assert_eq!(t.column("id").unwrap().declared_type, ColumnType::Integer);
        assert_eq!(t.column("name").unwrap().values[1], CellValue::from("Bo, Jr"));
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("t.csv"), "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(
            load_database(dir.path(), SourceFormat::CsvDir),
            Err(ModelError::RaggedRow { row: 2, .. })
        ));
    }

    #[test]
    fn duplicate_csv_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("t.csv"), "a,A\n1,2\n").unwrap();
        assert!(matches!(
            load_database(dir.path(), SourceFormat::CsvDir),
            Err(ModelError::DuplicateColumn { .. })
        ));
    }

    #[test]
    fn missing_path() {
        assert!(matches!(
            load_database(Path::new("/definitely/not/here"), SourceFormat::Sqlite),
            Err(ModelError::NotFound(_))
        ));
    }

    #[test]
    fn sqlite_schema_and_foreign_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("school.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE schools (CDSCode TEXT PRIMARY KEY, County TEXT, Virtual TEXT);
             CREATE TABLE satscores (cds TEXT PRIMARY KEY REFERENCES schools(CDSCode), NumTstTakr INTEGER, AvgScrMath REAL);
             CREATE TABLE frpm (CDSCode TEXT, Enrollment INTEGER, FOREIGN KEY (CDSCode) REFERENCES schools);
             INSERT INTO schools VALUES ('01', 'Alameda', 'N'), ('02', 'Contra Costa', NULL);
             INSERT INTO satscores VALUES ('01', 120, 410.5);
             INSERT INTO frpm VALUES ('02', 300);",
        )
        .unwrap();
        drop(conn);

        let db = load_database(&path, SourceFormat::Sqlite).unwrap();
        assert_eq!(db.name(), "school");
        assert_eq!(db.tables().len(), 3);

        // Independent introspection of the same file.
        let conn = Connection::open(&path).unwrap();
        for table in db.tables() {
            let mut stmt = conn
                .prepare(&format!("PRAGMA foreign_key_list({})", table.name()))
                .unwrap();
            let expected: Vec<(String, String)> = stmt
                .query_map([], |r| Ok((r.get::<_, String>(3)?, r.get::<_, String>(2)?)))
                .unwrap()
                .map(Result::unwrap)
                .collect();
            let got: Vec<(String, String)> = table
                .declared_foreign_keys()
                .iter()
                .map(|fk| (fk.column.clone(), fk.references.table().to_string()))
                .collect();
            assert_eq!(got, expected, "{}", table.name());
        }
        let frpm = db.table("frpm").unwrap();
        assert_eq!(
            frpm.declared_foreign_keys()[0].references.to_string(),
            "schools.CDSCode"
        );
        let sat = db.table("satscores").unwrap();
        assert_eq!(sat.primary_key(), ["cds"]);
        assert_eq!(sat.column("NumTstTakr").unwrap().declared_type, ColumnType::Integer);
        assert_eq!(sat.column("AvgScrMath").unwrap().values[0], CellValue::Number(410.5));
        assert!(db.table("schools").unwrap().column("Virtual").unwrap().values[1].is_null());
    }

    #[test]
    fn numeric_column_with_text_downgrades() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch("CREATE TABLE t (n INTEGER); INSERT INTO t VALUES (1), ('x');")
            .unwrap();
        drop(conn);
        let db = load_database(&path, SourceFormat::Sqlite).unwrap();
        assert_eq!(
            db.table("t").unwrap().column("n").unwrap().declared_type,
            ColumnType::Text
        );
    }
}
