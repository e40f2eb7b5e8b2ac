//! Relational data model: databases, tables, columns, cells and projected
//! sub-tables. Everything here is immutable once constructed.

mod load;
mod value;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use load::{load_database, save_csv_dir, SourceFormat};
pub use value::{format_number, parse_decimal, CellValue};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("database not found: {0}")]
    NotFound(String),
    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
    #[error("sqlite error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("ragged row {row} in {path}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("empty identifier")]
    EmptyIdentifier,
    #[error("malformed column reference `{0}`, expected `table.column`")]
    MalformedColumnRef(String),
    #[error("column `{column}` has {found} values but table `{table}` has {expected} rows")]
    RowCountMismatch {
        table: String,
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` is declared numeric but holds non-numeric value `{1}`")]
    NonNumericValue(String, String),
    #[error("primary key column `{column}` does not exist in table `{table}`")]
    UnknownPrimaryKey { table: String, column: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("row index {index} out of range for table `{table}` with {rows} rows")]
    RowOutOfRange { table: String, index: usize, rows: usize },
}

pub(crate) fn ident_eq(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b) || a.to_lowercase() == b.to_lowercase()
}

/// A `table.column` reference. Stored with its original casing, compared
/// case-insensitively.
#[derive(Clone, Debug)]
pub struct QualifiedColumn {
    table: String,
    column: String,
    key: (String, String),
}

impl QualifiedColumn {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Result<Self, ModelError> {
        let table = table.into();
        let column = column.into();
        if table.trim().is_empty() || column.trim().is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        let key = (table.to_lowercase(), column.to_lowercase());
        Ok(Self { table, column, key })
    }

    pub fn table(&self) -> &str {
        &self.table
    }

    pub fn column(&self) -> &str {
        &self.column
    }

    pub fn belongs_to(&self, table: &str) -> bool {
        self.key.0 == table.to_lowercase()
    }

    /// Lowercased `(table, column)`; the identity used for comparisons.
    pub fn key(&self) -> &(String, String) {
        &self.key
    }
}

impl PartialEq for QualifiedColumn {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for QualifiedColumn {}

impl Hash for QualifiedColumn {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl PartialOrd for QualifiedColumn {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QualifiedColumn {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Display for QualifiedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.table.contains(|c: char| c.is_whitespace() || c == '.' || c == '"') {
            write!(f, "\"{}\".{}", self.table.replace('"', "\"\""), self.column)
        } else {
            write!(f, "{}.{}", self.table, self.column)
        }
    }
}

impl FromStr for QualifiedColumn {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        // `"odd table".column`: a double-quoted table may hold anything.
        if let Some(rest) = s.strip_prefix('"') {
            let mut table = String::new();
            let mut chars = rest.char_indices();
            while let Some((i, c)) = chars.next() {
                if c != '"' {
                    table.push(c);
                } else if rest[i + 1..].starts_with('"') {
                    table.push('"');
                    chars.next();
                } else {
                    let column = rest[i + 1..]
                        .strip_prefix('.')
                        .ok_or_else(|| ModelError::MalformedColumnRef(s.to_string()))?;
                    return QualifiedColumn::new(table, column.trim());
                }
            }
            return Err(ModelError::MalformedColumnRef(s.to_string()));
        }
        let (table, column) = s
            .split_once('.')
            .ok_or_else(|| ModelError::MalformedColumnRef(s.to_string()))?;
        let strip = |x: &str| {
            x.trim()
                .trim_matches(|c| c == '`' || c == '"' || c == '[' || c == ']')
                .to_string()
        };
        let (table, column) = (strip(table), strip(column));
        if table.is_empty() || column.is_empty() || table.contains(char::is_whitespace) {
            return Err(ModelError::MalformedColumnRef(s.to_string()));
        }
        QualifiedColumn::new(table, column)
    }
}

impl Serialize for QualifiedColumn {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedColumn {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Integer,
    Real,
    Boolean,
    Date,
    Other,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Real)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Boolean => "boolean",
            ColumnType::Date => "date",
            ColumnType::Other => "other",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub declared_type: ColumnType,
    pub values: Vec<CellValue>,
}

impl Column {
    pub fn new(name: impl Into<String>, declared_type: ColumnType, values: Vec<CellValue>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        if declared_type.is_numeric() {
            if let Some(bad) = values.iter().find(|v| !v.is_null() && v.as_number().is_none()) {
                return Err(ModelError::NonNumericValue(name, bad.to_string()));
            }
        }
        Ok(Self {
            name,
            declared_type,
            values,
        })
    }

    /// Column typed by content: integer or real when every non-null cell is a
    /// decimal number, text otherwise. Numeric-looking text is converted.
    pub fn infer(name: impl Into<String>, values: Vec<CellValue>) -> Result<Self, ModelError> {
        let numeric = values
            .iter()
            .filter(|v| !v.is_null())
            .all(|v| v.to_number_lossy().is_some());
        let any_value = values.iter().any(|v| !v.is_null());
        if numeric && any_value {
            let values: Vec<CellValue> = values
                .into_iter()
                .map(|v| match v.to_number_lossy() {
                    Some(n) => CellValue::Number(n),
                    None => CellValue::Null,
                })
                .collect();
            let integral = values.iter().filter_map(CellValue::as_number).all(|n| n.fract() == 0.0);
            let ty = if integral {
                ColumnType::Integer
            } else {
                ColumnType::Real
            };
            Column::new(name, ty, values)
        } else {
            Column::new(name, ColumnType::Text, values)
        }
    }

    pub fn non_null_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_null()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub references: QualifiedColumn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    primary_key: Vec<String>,
    declared_foreign_keys: Vec<ForeignKey>,
    row_count: usize,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        primary_key: Vec<String>,
        declared_foreign_keys: Vec<ForeignKey>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        let row_count = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.to_lowercase()) {
                return Err(ModelError::DuplicateColumn {
                    table: name,
                    column: col.name.clone(),
                });
            }
            if col.values.len() != row_count {
                return Err(ModelError::RowCountMismatch {
                    table: name,
                    column: col.name.clone(),
                    expected: row_count,
                    found: col.values.len(),
                });
            }
        }
        let mut pk = Vec::with_capacity(primary_key.len());
        for key in primary_key {
            match columns.iter().find(|c| ident_eq(&c.name, &key)) {
                Some(col) => pk.push(col.name.clone()),
                None => {
                    return Err(ModelError::UnknownPrimaryKey {
                        table: name,
                        column: key,
                    })
                }
            }
        }
        Ok(Self {
            name,
            columns,
            primary_key: pk,
            declared_foreign_keys,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn primary_key(&self) -> &[String] {
        &self.primary_key
    }

    pub fn declared_foreign_keys(&self) -> &[ForeignKey] {
        &self.declared_foreign_keys
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| ident_eq(&c.name, name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| ident_eq(&c.name, name))
    }

    pub fn qualified(&self, column: &Column) -> QualifiedColumn {
        QualifiedColumn::new(self.name.clone(), column.name.clone())
            .expect("table and column names are validated non-empty")
    }

    pub fn qualified_columns(&self) -> Vec<QualifiedColumn> {
        self.columns.iter().map(|c| self.qualified(c)).collect()
    }

    pub fn primary_key_columns(&self) -> Vec<QualifiedColumn> {
        self.primary_key
            .iter()
            .filter_map(|k| self.column(k))
            .map(|c| self.qualified(c))
            .collect()
    }

    pub fn row(&self, index: usize) -> Vec<CellValue> {
        self.columns.iter().map(|c| c.values[index].clone()).collect()
    }

    /// Copy of the table with values of `column` rewritten by `f`.
    pub(crate) fn map_column(&self, column: usize, f: impl Fn(&CellValue) -> CellValue) -> Table {
        let mut out = self.clone();
        for v in &mut out.columns[column].values {
            *v = f(v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    name: String,
    tables: Vec<Table>,
}

impl Database {
    pub fn new(name: impl Into<String>, tables: Vec<Table>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for t in &tables {
            if !seen.insert(t.name.to_lowercase()) {
                return Err(ModelError::DuplicateTable(t.name.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            tables,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| ident_eq(&t.name, name))
    }

    pub fn column(&self, qc: &QualifiedColumn) -> Option<(&Table, &Column)> {
        let table = self.table(qc.table())?;
        let column = table.column(qc.column())?;
        Some((table, column))
    }

    /// The same reference spelled with the database's own casing, or `None`
    /// when the column does not exist.
    pub fn resolve(&self, qc: &QualifiedColumn) -> Option<QualifiedColumn> {
        self.column(qc).map(|(t, c)| t.qualified(c))
    }

    pub fn all_columns(&self) -> Vec<QualifiedColumn> {
        self.tables.iter().flat_map(|t| t.qualified_columns()).collect()
    }

    pub(crate) fn replace_table(&self, table: Table) -> Database {
        let mut out = self.clone();
        if let Some(slot) = out.tables.iter_mut().find(|t| ident_eq(&t.name, &table.name)) {
            *slot = table;
        }
        out
    }
}

/// `table[rows, columns]`: a projection of one source table.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTable {
    pub source_table: String,
    pub columns: Vec<QualifiedColumn>,
    pub row_indices: Vec<usize>,
    pub rows: Vec<Vec<CellValue>>,
}

impl SubTable {
    pub fn to_record(&self) -> SubTableRecord {
        SubTableRecord {
            table: self.source_table.clone(),
            columns: self.columns.iter().map(|c| c.column().to_string()).collect(),
            rows: self.rows.clone(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.columns.len()
    }
}

impl Serialize for SubTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

/// Wire form of a sub-table: `{"table", "columns", "rows"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTableRecord {
    pub table: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
}

/// Projects `table` onto `columns` and `rows`. Columns come out in the
/// table's own order, rows in ascending index order.
pub fn project<'a>(
    table: &Table,
    columns: impl IntoIterator<Item = &'a QualifiedColumn>,
    rows: impl IntoIterator<Item = usize>,
) -> Result<SubTable, ModelError> {
    let mut wanted = BTreeSet::new();
    for qc in columns {
        if !qc.belongs_to(table.name()) {
            return Err(ModelError::UnknownColumn(qc.to_string()));
        }
        let idx = table
            .column_index(qc.column())
            .ok_or_else(|| ModelError::UnknownColumn(qc.to_string()))?;
        wanted.insert(idx);
    }
    let row_indices: BTreeSet<usize> = rows.into_iter().collect();
    if let Some(&bad) = row_indices.iter().find(|&&r| r >= table.row_count()) {
        return Err(ModelError::RowOutOfRange {
            table: table.name().to_string(),
            index: bad,
            rows: table.row_count(),
        });
    }
    let cols: Vec<usize> = wanted.into_iter().collect();
    let materialized = row_indices
        .iter()
        .map(|&r| cols.iter().map(|&c| table.columns()[c].values[r].clone()).collect())
        .collect();
    Ok(SubTable {
        source_table: table.name().to_string(),
        columns: cols.iter().map(|&c| table.qualified(&table.columns()[c])).collect(),
        row_indices: row_indices.into_iter().collect(),
        rows: materialized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qc(s: &str) -> QualifiedColumn {
        s.parse().unwrap()
    }

    pub(crate) fn sample_table() -> Table {
        Table::new(
            "T",
            vec![
                Column::infer("a", (0..4).map(|i| CellValue::Number(i as f64)).collect()).unwrap(),
                Column::infer("b", ["w", "x", "y", "z"].map(CellValue::from).to_vec()).unwrap(),
            ],
            vec!["a".into()],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn qualified_column_case_insensitive() {
        let a = qc("Schools.County");
        let b = qc("schools.county");
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "Schools.County");
        assert!("nodot".parse::<QualifiedColumn>().is_err());
        assert!(".x".parse::<QualifiedColumn>().is_err());
        assert_eq!(qc("`t`.`c`").to_string(), "t.c");
    }

    #[test]
    fn odd_table_names_round_trip() {
        for (t, c) in [("odd table", "my col"), ("a.b", "x"), ("q\"t", "y"), ("plain", "z z")] {
            let q = QualifiedColumn::new(t, c).unwrap();
            let back: QualifiedColumn = q.to_string().parse().unwrap();
            assert_eq!(back.table(), t);
            assert_eq!(back.column(), c);
        }
        assert!("\"open.x".parse::<QualifiedColumn>().is_err());
        assert!("\"t\"x".parse::<QualifiedColumn>().is_err());
    }

    #[test]
    fn identity_projection() {
        let t = sample_table();
        let sub = project(&t, &t.qualified_columns(), 0..4).unwrap();
        assert_eq!(sub.rows.len(), 4);
        for (i, row) in sub.rows.iter().enumerate() {
            assert_eq!(row, &t.row(i));
        }
    }

    #[test]
    fn empty_row_projection() {
        let t = sample_table();
        let sub = project(&t, &[qc("T.a")], []).unwrap();
        assert_eq!(sub.columns, vec![qc("T.a")]);
        assert!(sub.rows.is_empty());
    }

    #[test]
    fn projection_keeps_row_order() {
        let t = sample_table();
        let sub = project(&t, &[qc("t.A")], [3, 1]).unwrap();
        assert_eq!(sub.row_indices, vec![1, 3]);
        assert_eq!(
            sub.rows,
            vec![vec![CellValue::Number(1.0)], vec![CellValue::Number(3.0)]]
        );
        let json = serde_json::to_string(&sub).unwrap();
        assert_eq!(json, r#"{"table":"T","columns":["a"],"rows":[[1],[3]]}"#);
    }

    #[test]
    fn projection_errors() {
        let t = sample_table();
        assert!(matches!(
            project(&t, &[qc("T.zz")], [0]),
            Err(ModelError::UnknownColumn(_))
        ));
        assert!(matches!(
            project(&t, &[qc("U.a")], [0]),
            Err(ModelError::UnknownColumn(_))
        ));
        assert!(matches!(
            project(&t, &[qc("T.a")], [4]),
            Err(ModelError::RowOutOfRange { .. })
        ));
    }

    #[test]
    fn table_invariants() {
        let c1 = Column::infer("a", vec![CellValue::Number(1.0)]).unwrap();
        let c2 = Column::infer("A", vec![CellValue::Number(1.0)]).unwrap();
        assert!(matches!(
            Table::new("t", vec![c1.clone(), c2], vec![], vec![]),
            Err(ModelError::DuplicateColumn { .. })
        ));
        let short = Column::infer("b", vec![]).unwrap();
        assert!(matches!(
            Table::new("t", vec![c1.clone(), short], vec![], vec![]),
            Err(ModelError::RowCountMismatch { .. })
        ));
        assert!(matches!(
            Table::new("t", vec![c1.clone()], vec!["zz".into()], vec![]),
            Err(ModelError::UnknownPrimaryKey { .. })
        ));
        let t = Table::new("t", vec![c1], vec!["A".into()], vec![]).unwrap();
        assert_eq!(t.primary_key(), ["a"]);
        assert!(matches!(
            Database::new("d", vec![t.clone(), t]),
            Err(ModelError::DuplicateTable(_))
        ));
        assert!(Column::new("n", ColumnType::Integer, vec!["x".into()]).is_err());
    }

    #[test]
    fn inference() {
        let c = Column::infer("n", vec!["1".into(), CellValue::Null, "2.5".into()]).unwrap();
        assert_eq!(c.declared_type, ColumnType::Real);
        assert_eq!(c.values[2], CellValue::Number(2.5));
        let c = Column::infer("n", vec!["1".into(), "2.0".into()]).unwrap();
        assert_eq!(c.declared_type, ColumnType::Integer);
        let c = Column::infer("n", vec!["1".into(), "x".into()]).unwrap();
        assert_eq!(c.declared_type, ColumnType::Text);
        assert_eq!(c.values[0], CellValue::Text("1".into()));
    }

    fn cell() -> impl Strategy<Value = CellValue> {
        prop_oneof![
            Just(CellValue::Null),
            "[a-z ]{0,6}".prop_map(CellValue::Text),
            (-1000i32..1000).prop_map(|n| CellValue::Number(n as f64 / 8.0)),
            any::<bool>().prop_map(CellValue::Boolean),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_round_trips_through_json(
            cells in proptest::collection::vec(proptest::collection::vec(cell(), 3), 0..8),
            pick in proptest::collection::vec(any::<bool>(), 3),
            rows in proptest::collection::btree_set(0usize..8, 0..8),
        ) {
            let n = cells.len();
            let columns = (0..3)
                .map(|c| Column::new(format!("c{c}"), ColumnType::Text, cells.iter().map(|r| r[c].clone()).collect()))
                .collect::<Result<Vec<_>, _>>()
                .unwrap();
            let t = Table::new("T", columns, vec![], vec![]).unwrap();
            let cols: Vec<QualifiedColumn> = t
                .qualified_columns()
                .into_iter()
                .zip(&pick)
                .filter(|(_, p)| **p)
                .map(|(c, _)| c)
                .collect();
            let rows: Vec<usize> = rows.into_iter().filter(|r| *r < n).collect();
            let sub = project(&t, &cols, rows.iter().copied()).unwrap();
            let back: SubTableRecord = serde_json::from_str(&serde_json::to_string(&sub).unwrap()).unwrap();
            prop_assert_eq!(&back, &sub.to_record());
            prop_assert_eq!(&sub.row_indices, &rows);
            for (r, row) in rows.iter().zip(&back.rows) {
                let want: Vec<CellValue> = cells[*r].iter().zip(&pick).filter(|(_, p)| **p).map(|(v, _)| v.clone()).collect();
                prop_assert_eq!(row, &want);
            }
        }
    }
}
