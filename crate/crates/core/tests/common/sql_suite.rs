//! Twenty hand-checked gold queries over a small SQLite file. Column sets are
//! written out by hand; gold rows come from plain Rust scans of the tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use fgtr_core::bench_builder::{build_samples, extract_columns, BenchSample, DatasetEntry, SqlEngine};
use fgtr_core::model::{load_database, CellValue, Column, Database, QualifiedColumn, SourceFormat, Table};

pub type Row = BTreeMap<String, CellValue>;

pub fn t(s: &str) -> CellValue {
    CellValue::Text(s.into())
}

pub fn n(x: f64) -> CellValue {
    CellValue::Number(x)
}

pub fn write_toy_sqlite(path: &Path) {
    let conn = rusqlite::Connection::open(path).unwrap();
    conn.execute_batch(
        "CREATE TABLE schools (CDSCode TEXT PRIMARY KEY, School TEXT, County TEXT, City TEXT, Charter INTEGER, FundingType TEXT);
         CREATE TABLE satscores (cds TEXT PRIMARY KEY REFERENCES schools(CDSCode), NumTstTakr INTEGER, AvgScrMath INTEGER);
         CREATE TABLE frpm (CDSCode TEXT REFERENCES schools(CDSCode), FreeMealCount REAL, Enrollment INTEGER);
         INSERT INTO schools VALUES
           ('c1', 'Alpha High', 'Alameda', 'Oakland', 0, NULL),
           ('c2', 'Beta Prep', 'Contra Costa', 'Orinda', 1, 'Directly funded'),
           ('c3', 'Gamma Academy', 'Los Angeles', 'Los Angeles', 1, 'Locally funded'),
           ('c4', 'Delta School', 'Fresno', 'Fresno', 0, NULL),
           ('c5', 'Epsilon High', 'Los Angeles', 'Pasadena', 0, NULL),
           ('c6', 'Zeta Charter', 'Contra Costa', 'Orinda', 0, 'Directly funded'),
           ('c7', 'Eta Middle', 'Alameda', 'Oakland', 1, 'Directly funded');
         INSERT INTO satscores VALUES
           ('c1', 100, 480), ('c2', 250, 520), ('c3', 300, 610),
           ('c4', 400, 450), ('c5', 50, NULL), ('c6', 320, 505);
         INSERT INTO frpm VALUES ('c1', 12.5, 300), ('c3', 40.0, 820), ('c5', 7.25, 150), ('c6', 0, 410);",
    )
    .unwrap();
}

pub fn scan(db: &Database, table: &str) -> Vec<Row> {
    let tb = db.table(table).unwrap();
    (0..tb.row_count())
        .map(|r| {
            tb.columns()
                .iter()
                .map(|c| (format!("{}.{}", table, c.name).to_lowercase(), c.values[r].clone()))
                .collect()
        })
        .collect()
}

pub fn join(a: &[Row], b: &[Row], on: impl Fn(&Row, &Row) -> bool) -> Vec<Row> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            if on(x, y) {
                out.push(x.iter().chain(y.iter()).map(|(k, v)| (k.clone(), v.clone())).collect());
            }
        }
    }
    out
}

pub fn num(r: &Row, k: &str) -> Option<f64> {
    r[k].as_number()
}

pub fn eq(r: &Row, k: &str, v: &str) -> bool {
    r[k] == t(v)
}

pub struct Case {
    pub sql: &'static str,
    pub columns: &'static [&'static str],
    pub oracle: fn(&Database) -> Vec<Row>,
}

/// Expected skip code for queries outside the supported grammar.
pub struct SkipCase {
    pub sql: &'static str,
    pub code: &'static str,
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            sql: "SELECT School FROM schools WHERE County = 'Alameda'",
            columns: &["schools.School", "schools.County"],
            oracle: |db| scan(db, "schools").into_iter().filter(|r| eq(r, "schools.county", "Alameda")).collect(),
        },
        Case {
            sql: "SELECT count(*) FROM schools WHERE Charter = 1",
            columns: &["schools.Charter"],
            oracle: |db| scan(db, "schools").into_iter().filter(|r| num(r, "schools.charter") == Some(1.0)).collect(),
        },
        Case {
            sql: "SELECT * FROM satscores",
            columns: &["satscores.cds", "satscores.NumTstTakr", "satscores.AvgScrMath"],
            oracle: |db| scan(db, "satscores"),
        },
        Case {
            sql: "SELECT T1.School FROM schools AS T1 JOIN satscores AS T2 ON T1.CDSCode = T2.cds WHERE T2.NumTstTakr <= 250",
            columns: &["schools.School", "schools.CDSCode", "satscores.cds", "satscores.NumTstTakr"],
            oracle: |db| {
                join(&scan(db, "schools"), &scan(db, "satscores"), |a, b| a["schools.cdscode"] == b["satscores.cds"])
                    .into_iter()
                    .filter(|r| num(r, "satscores.numtsttakr").is_some_and(|x| x <= 250.0))
                    .collect()
            },
        },
        Case {
            sql: "SELECT City, count(*) FROM schools GROUP BY City HAVING count(*) > 1",
            columns: &["schools.City"],
            oracle: |db| scan(db, "schools"),
        },
        Case {
            sql: "SELECT School FROM schools ORDER BY School DESC LIMIT 2",
            columns: &["schools.School"],
            oracle: |db| scan(db, "schools"),
        },
        Case {
            sql: "SELECT DISTINCT County FROM schools WHERE City LIKE 'o%'",
            columns: &["schools.County", "schools.City"],
            oracle: |db| {
                scan(db, "schools")
                    .into_iter()
                    .filter(|r| matches!(&r["schools.city"], CellValue::Text(s) if s.to_lowercase().starts_with('o')))
                    .collect()
            },
        },
        Case {
            sql: "SELECT School FROM schools WHERE County IN ('Alameda', 'Fresno')",
            columns: &["schools.School", "schools.County"],
            oracle: |db| {
                scan(db, "schools")
                    .into_iter()
                    .filter(|r| eq(r, "schools.county", "Alameda") || eq(r, "schools.county", "Fresno"))
                    .collect()
            },
        },
        Case {
            sql: "SELECT cds FROM satscores WHERE AvgScrMath BETWEEN 450 AND 550",
            columns: &["satscores.cds", "satscores.AvgScrMath"],
            oracle: |db| {
                scan(db, "satscores")
                    .into_iter()
                    .filter(|r| num(r, "satscores.avgscrmath").is_some_and(|x| (450.0..=550.0).contains(&x)))
                    .collect()
            },
        },
        Case {
            sql: "SELECT T1.County, avg(T2.AvgScrMath) FROM schools T1 INNER JOIN satscores T2 ON T1.CDSCode = T2.cds GROUP BY T1.County",
            columns: &["schools.County", "schools.CDSCode", "satscores.cds", "satscores.AvgScrMath"],
            oracle: |db| join(&scan(db, "schools"), &scan(db, "satscores"), |a, b| a["schools.cdscode"] == b["satscores.cds"]),
        },
        Case {
            sql: "SELECT s.School, f.FreeMealCount FROM schools s LEFT JOIN frpm f ON s.CDSCode = f.CDSCode WHERE s.County = 'Los Angeles'",
            columns: &["schools.School", "schools.CDSCode", "schools.County", "frpm.CDSCode", "frpm.FreeMealCount"],
            oracle: |db| {
                let frpm = scan(db, "frpm");
                let mut out = Vec::new();
                for s in scan(db, "schools").into_iter().filter(|r| eq(r, "schools.county", "Los Angeles")) {
                    let hits: Vec<Row> = join(std::slice::from_ref(&s), &frpm, |a, b| a["schools.cdscode"] == b["frpm.cdscode"]);
                    if hits.is_empty() {
                        let mut r = s.clone();
                        for k in ["frpm.cdscode", "frpm.freemealcount", "frpm.enrollment"] {
                            r.insert(k.into(), CellValue::Null);
                        }
                        out.push(r);
                    }
                    out.extend(hits);
                }
                out
            },
        },
        Case {
            sql: "SELECT School FROM schools WHERE FundingType IS NULL",
            columns: &["schools.School", "schools.FundingType"],
            oracle: |db| scan(db, "schools").into_iter().filter(|r| r["schools.fundingtype"].is_null()).collect(),
        },
        Case {
            sql: "SELECT School FROM schools, satscores WHERE schools.CDSCode = satscores.cds AND NumTstTakr > 300",
            columns: &["schools.School", "schools.CDSCode", "satscores.cds", "satscores.NumTstTakr"],
            oracle: |db| {
                join(&scan(db, "schools"), &scan(db, "satscores"), |a, b| a["schools.cdscode"] == b["satscores.cds"])
                    .into_iter()
                    .filter(|r| num(r, "satscores.numtsttakr").is_some_and(|x| x > 300.0))
                    .collect()
            },
        },
        Case {
            sql: "SELECT max(Enrollment) FROM frpm",
            columns: &["frpm.Enrollment"],
            oracle: |db| scan(db, "frpm"),
        },
        Case {
            sql: "SELECT School FROM schools WHERE County = \"Contra Costa\" AND NOT Charter = 1",
            columns: &["schools.School", "schools.County", "schools.Charter"],
            oracle: |db| {
                scan(db, "schools")
                    .into_iter()
                    .filter(|r| eq(r, "schools.county", "Contra Costa") && num(r, "schools.charter") != Some(1.0))
                    .collect()
            },
        },
        Case {
            sql: "SELECT T3.Enrollment FROM schools AS T1 JOIN satscores AS T2 ON T1.CDSCode = T2.cds \
                  JOIN frpm AS T3 ON T3.CDSCode = T1.CDSCode WHERE T2.AvgScrMath > 500 AND T1.Charter = 0",
            columns: &[
                "frpm.Enrollment",
                "frpm.CDSCode",
                "schools.CDSCode",
                "schools.Charter",
                "satscores.cds",
                "satscores.AvgScrMath",
            ],
            oracle: |db| {
                let st = join(&scan(db, "schools"), &scan(db, "satscores"), |a, b| a["schools.cdscode"] == b["satscores.cds"]);
                join(&st, &scan(db, "frpm"), |a, b| a["schools.cdscode"] == b["frpm.cdscode"])
                    .into_iter()
                    .filter(|r| {
                        num(r, "satscores.avgscrmath").is_some_and(|x| x > 500.0) && num(r, "schools.charter") == Some(0.0)
                    })
                    .collect()
            },
        },
        Case {
            sql: "SELECT School FROM schools WHERE County = 'Nowhere';",
            columns: &["schools.School", "schools.County"],
            oracle: |_| Vec::new(),
        },
    ]
}

pub fn skip_cases() -> Vec<SkipCase> {
    vec![
        SkipCase {
            sql: "SELECT School FROM schools WHERE CDSCode IN (SELECT cds FROM satscores)",
            code: "unsupported_sql",
        },
        SkipCase {
            sql: "SELECT School FROM schools UNION SELECT cds FROM satscores",
            code: "unsupported_sql",
        },
        SkipCase {
            sql: "SELECT CDSCode FROM schools JOIN frpm ON schools.CDSCode = frpm.CDSCode",
            code: "ambiguous_column",
        },
    ]
}

pub fn qcs(cols: &[&str]) -> BTreeSet<QualifiedColumn> {
    cols.iter().map(|c| c.parse().unwrap()).collect()
}

pub fn toy() -> (tempfile::TempDir, Database, SqlEngine) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.sqlite");
    write_toy_sqlite(&path);
    let db = load_database(&path, SourceFormat::Sqlite).unwrap();
    let engine = SqlEngine::open(&path).unwrap();
    (dir, db, engine)
}

pub fn entries(sqls: &[&str]) -> Vec<DatasetEntry> {
    sqls.iter()
        .enumerate()
        .map(|(i, s)| DatasetEntry {
            qid: format!("q{i}"),
            question: format!("question {i}"),
            db_id: "toy".into(),
            sql: s.to_string(),
        })
        .collect()
}

pub fn expected_rows(sample: &BenchSample, oracle: Vec<Row>) -> BTreeSet<Vec<CellValue>> {
    oracle
        .iter()
        .map(|r| {
            sample
                .gold_subtable
                .columns
                .iter()
                .map(|qc| r[&qc.to_string().to_lowercase()].clone())
                .collect()
        })
        .collect()
}

/// The database with each referenced table cut down to rows whose gold
/// columns appear in the sample's gold cells.
pub fn restrict(db: &Database, sample: &BenchSample) -> Database {
    let tables = db
        .tables()
        .iter()
        .map(|table| {
            let gold_cols: Vec<usize> = table
                .columns()
                .iter()
                .enumerate()
                .filter(|(_, c)| sample.gold_columns.contains(&table.qualified(c)))
                .map(|(i, _)| i)
                .collect();
            if gold_cols.is_empty() {
                return table.clone();
            }
            let record = sample.gold_tables.iter().find(|r| r.table == table.name());
            let keep: Vec<usize> = (0..table.row_count())
                .filter(|&r| {
                    let key: Vec<CellValue> = gold_cols
                        .iter()
                        .map(|&c| table.columns()[c].values[r].clone())
                        .collect();
                    record.is_some_and(|rec| rec.rows.contains(&key))
                })
                .collect();
            let columns = table
                .columns()
                .iter()
                .map(|c| {
                    Column::new(
                        c.name.clone(),
                        c.declared_type,
                        keep.iter().map(|&r| c.values[r].clone()).collect(),
                    )
                    .unwrap()
                })
                .collect();
            Table::new(
                table.name(),
                columns,
                table.primary_key().to_vec(),
                table.declared_foreign_keys().to_vec(),
            )
            .unwrap()
        })
        .collect();
    Database::new(db.name(), tables).unwrap()
}

pub fn sorted(mut rows: Vec<Vec<CellValue>>) -> Vec<Vec<CellValue>> {
    rows.sort();
    rows
}

/// Builds all twenty queries and checks each against its hand oracle or
/// expected skip code. Returns (built, skipped).
pub fn check_twenty_query_suite() -> (usize, usize) {
    let (_dir, db, engine) = toy();
    let cases = cases();
    let skips = skip_cases();
    assert_eq!(cases.len() + skips.len(), 20);

    let sqls: Vec<&str> = cases.iter().map(|c| c.sql).chain(skips.iter().map(|s| s.sql)).collect();
    let (samples, skipped) = build_samples(&entries(&sqls), &db, &engine);
    assert_eq!(samples.len(), cases.len());
    assert_eq!(skipped.len(), skips.len());
    for (rec, case) in skipped.iter().zip(&skips) {
        assert_eq!(rec.code, case.code, "{}", case.sql);
    }

    for (sample, case) in samples.iter().zip(&cases) {
        let want = qcs(case.columns);
        assert_eq!(extract_columns(case.sql, &db).unwrap(), want, "{}", case.sql);
        assert_eq!(sample.gold_columns, want, "{}", case.sql);
        assert_eq!(sample.gold_subtable.columns, want.iter().cloned().collect::<Vec<_>>());

        let got: BTreeSet<Vec<CellValue>> = sample.gold_subtable.rows.iter().cloned().collect();
        assert_eq!(
            got.len(),
            sample.gold_subtable.rows.len(),
            "rows are deduplicated: {}",
            case.sql
        );
        assert_eq!(got, expected_rows(sample, (case.oracle)(&db)), "{}", case.sql);

        // FROM through WHERE survives the rewrite byte for byte.
        let from = case.sql.find(" FROM ").unwrap();
        let tail = ["GROUP BY", "ORDER BY", "HAVING", "LIMIT", ";"]
            .iter()
            .filter_map(|k| case.sql.find(k))
            .min()
            .unwrap_or(case.sql.len());
        assert_eq!(
            &sample.rewritten_sql[sample.rewritten_sql.find(" FROM ").unwrap()..],
            case.sql[from..tail].trim_end()
        );
    }
    (samples.len(), skipped.len())
}
