//! Gold SQL handling: parse one SELECT with the SQLite dialect, resolve every
//! column it touches against the database, and swap its SELECT list.
//!
//! The AST comes from `sqlparser`; a small lexer over the raw text supplies
//! byte spans, so the FROM..WHERE part can be kept verbatim in the rewrite
//! and string literals can be replaced in place.

use std::collections::BTreeSet;
use std::ops::{ControlFlow, Range};

use sqlparser::ast::{
    visit_expressions, Expr, GroupByExpr, JoinConstraint, JoinOperator, ObjectName, ObjectNamePart, Query, SelectItem,
    SelectItemQualifiedWildcardKind, SetExpr, Statement, TableFactor,
};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;

use crate::model::{ident_eq, Database, QualifiedColumn, Table};

use super::BenchError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    /// `"x"`, `` `x` `` or `[x]`; the flag marks double quotes, which SQLite
    /// reads as a string when no column has that name.
    Quoted(String, bool),
    Str(String),
    LParen,
    RParen,
    Semi,
    Other,
}

fn unsupported(what: impl Into<String>) -> BenchError {
    BenchError::UnsupportedSql(what.into())
}

fn syntax(message: impl Into<String>) -> BenchError {
    BenchError::SqlSyntax(message.into())
}

fn lex(sql: &str) -> Result<Vec<(Tok, Range<usize>)>, BenchError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let end = sql[i + 2..].find("*/").ok_or_else(|| syntax("unterminated comment"))?;
            i += end + 4;
            continue;
        }
        let tok = match c {
            b'\'' | b'"' | b'`' | b'[' => {
                let close = if c == b'[' { b']' } else { c };
                let mut text = String::new();
                i += 1;
                loop {
                    let pos = sql[i..]
                        .find(close as char)
                        .ok_or_else(|| syntax("unterminated quote"))?;
                    text.push_str(&sql[i..i + pos]);
                    i += pos + 1;
                    // A doubled closing quote is an escaped quote.
                    if close != b']' && bytes.get(i) == Some(&close) {
                        text.push(close as char);
                        i += 1;
                    } else {
                        break;
                    }
                }
                match c {
                    b'\'' => Tok::Str(text),
                    b'"' => Tok::Quoted(text, true),
                    _ => Tok::Quoted(text, false),
                }
            }
            _ if c.is_ascii_alphanumeric() || c == b'_' || c >= 0x80 => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'$') || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                Tok::Word(sql[start..i].to_string())
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b';' => {
                i += 1;
                Tok::Semi
            }
            _ => {
                i += sql[i..].chars().next().map_or(1, char::len_utf8);
                Tok::Other
            }
        };
        out.push((tok, start..i));
    }
    Ok(out)
}

/// Byte range from the top-level `FROM` through the end of the WHERE clause
/// (or of the join list when there is none).
fn from_where_span(sql: &str) -> Result<Range<usize>, BenchError> {
    let tokens = lex(sql)?;
    let mut depth = 0i32;
    let mut start = None;
    let mut end = None;
    for (k, (tok, span)) in tokens.iter().enumerate() {
        match tok {
            Tok::LParen => depth += 1,
            Tok::RParen => depth -= 1,
            Tok::Semi if depth == 0 && start.is_some() => {
                end = Some(k);
                break;
            }
            Tok::Word(w) if depth == 0 => {
                let w = w.to_ascii_lowercase();
                if start.is_none() && w == "from" {
                    start = Some(span.start);
                } else if start.is_some()
                    && [
                        "group",
                        "having",
                        "order",
                        "limit",
                        "window",
                        "union",
                        "intersect",
                        "except",
                    ]
                    .contains(&w.as_str())
                {
                    end = Some(k);
                    break;
                }
            }
            _ => {}
        }
    }
    let start = start.ok_or_else(|| unsupported("query without FROM"))?;
    let last = end.unwrap_or(tokens.len());
    let stop = tokens[..last].last().map_or(sql.len(), |(_, s)| s.end);
    Ok(start..stop)
}

/// A table of the FROM clause: its name as written and its alias.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// The name the rest of the query uses for this table.
    pub fn handle(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

/// A parsed gold query within the supported grammar.
#[derive(Debug, Clone)]
pub struct SelectQuery {
    sql: String,
    statement: Statement,
    pub tables: Vec<TableRef>,
    /// Output aliases of the SELECT list.
    pub aliases: Vec<String>,
    /// `USING (...)` columns of each join, aligned with `tables[1..]`.
    using: Vec<Vec<String>>,
    wildcards: Vec<Option<String>>,
    pub from_span: Range<usize>,
}

fn single_name(name: &ObjectName) -> Result<String, BenchError> {
    match name.0.as_slice() {
        [ObjectNamePart::Identifier(id)] => Ok(id.value.clone()),
        _ => Err(unsupported(format!("qualified name `{name}`"))),
    }
}

fn table_ref(factor: &TableFactor) -> Result<TableRef, BenchError> {
    match factor {
        TableFactor::Table {
            name,
            alias,
            args: None,
            ..
        } => Ok(TableRef {
            name: single_name(name)?,
            alias: alias.as_ref().map(|a| a.name.value.clone()),
        }),
        TableFactor::Derived { .. } => Err(unsupported("derived table")),
        other => Err(unsupported(format!("table expression `{other}`"))),
    }
}

fn plain_select(query: &Query) -> Result<&sqlparser::ast::Select, BenchError> {
    if query.with.is_some() {
        return Err(unsupported("common table expression"));
    }
    match query.body.as_ref() {
        SetExpr::Select(s) => {
            if !matches!(&s.group_by, GroupByExpr::Expressions(_, mods) if mods.is_empty()) {
                return Err(unsupported("GROUP BY modifier"));
            }
            Ok(s)
        }
        SetExpr::SetOperation { .. } => Err(unsupported("set operation")),
        SetExpr::Query(_) => Err(unsupported("parenthesized query")),
        other => Err(unsupported(format!("query body `{other}`"))),
    }
}

pub fn parse_select(sql: &str) -> Result<SelectQuery, BenchError> {
    let mut statements = Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| syntax(e.to_string()))?;
    if statements.len() != 1 {
        return Err(if statements.is_empty() {
            syntax("empty query")
        } else {
            unsupported("more than one statement")
        });
    }
    let statement = statements.remove(0);
    let Statement::Query(query) = &statement else {
        return Err(unsupported("not a SELECT statement"));
    };
    let select = plain_select(query)?;

    let mut tables = Vec::new();
    let mut using = Vec::new();
    for (i, twj) in select.from.iter().enumerate() {
        tables.push(table_ref(&twj.relation)?);
        if i > 0 {
            using.push(Vec::new());
        }
        for join in &twj.joins {
            let constraint = match &join.join_operator {
                JoinOperator::Join(c)
                | JoinOperator::Inner(c)
                | JoinOperator::Left(c)
                | JoinOperator::LeftOuter(c)
                | JoinOperator::CrossJoin(c) => c,
                _ => return Err(unsupported("join kind other than INNER, LEFT or CROSS")),
            };
            tables.push(table_ref(&join.relation)?);
            using.push(match constraint {
                JoinConstraint::Using(cols) => cols.iter().map(single_name).collect::<Result<_, _>>()?,
                JoinConstraint::Natural => return Err(unsupported("NATURAL join")),
                JoinConstraint::On(_) | JoinConstraint::None => Vec::new(),
            });
        }
    }
    if tables.is_empty() {
        return Err(unsupported("query without FROM"));
    }

    let mut aliases = Vec::new();
    let mut wildcards = Vec::new();
    for item in &select.projection {
        match item {
            SelectItem::UnnamedExpr(_) => {}
            SelectItem::ExprWithAlias { alias, .. } => aliases.push(alias.value.clone()),
            SelectItem::ExprWithAliases { aliases: a, .. } => aliases.extend(a.iter().map(|x| x.value.clone())),
            SelectItem::Wildcard(_) => wildcards.push(None),
            SelectItem::QualifiedWildcard(SelectItemQualifiedWildcardKind::ObjectName(name), _) => {
                wildcards.push(Some(single_name(name)?))
            }
            SelectItem::QualifiedWildcard(..) => return Err(unsupported("wildcard over an expression")),
        }
    }

    let nested = visit_expressions(&statement, |e| match e {
        Expr::Subquery(_) | Expr::InSubquery { .. } | Expr::Exists { .. } => ControlFlow::Break("subquery"),
        Expr::Function(f) if f.over.is_some() => ControlFlow::Break("window function"),
        _ => ControlFlow::Continue(()),
    });
    if let ControlFlow::Break(what) = nested {
        return Err(unsupported(what));
    }

    Ok(SelectQuery {
        sql: sql.to_string(),
        from_span: from_where_span(sql)?,
        statement,
        tables,
        aliases,
        using,
        wildcards,
    })
}

/// Tables in the FROM clause bound to the database.
struct Scope<'a> {
    tables: Vec<(String, &'a Table)>,
    aliases: &'a [String],
}

impl<'a> Scope<'a> {
    fn new(query: &'a SelectQuery, db: &'a Database) -> Result<Self, BenchError> {
        let mut tables: Vec<(String, &Table)> = Vec::new();
        for t in &query.tables {
            let table = db
                .table(&t.name)
                .ok_or_else(|| BenchError::UnknownTable(t.name.clone()))?;
            if tables.iter().any(|(_, seen)| ident_eq(seen.name(), table.name())) {
                return Err(unsupported(format!("table `{}` joined with itself", t.name)));
            }
            if tables.iter().any(|(h, _)| ident_eq(h, t.handle())) {
                return Err(unsupported(format!("duplicate table name `{}`", t.handle())));
            }
            tables.push((t.handle().to_string(), table));
        }
        Ok(Self {
            tables,
            aliases: &query.aliases,
        })
    }

    fn by_handle(&self, handle: &str) -> Option<&'a Table> {
        self.tables.iter().find(|(h, _)| ident_eq(h, handle)).map(|(_, t)| *t)
    }

    fn owners(&self, column: &str) -> Vec<&'a Table> {
        self.tables
            .iter()
            .filter(|(_, t)| t.column(column).is_some())
            .map(|(_, t)| *t)
            .collect()
    }

    /// `None` for names that are no column: output aliases, and double-quoted
    /// words SQLite falls back to reading as strings.
    fn resolve(
        &self,
        qualifier: Option<&str>,
        name: &str,
        double_quoted: bool,
    ) -> Result<Option<QualifiedColumn>, BenchError> {
        if let Some(q) = qualifier {
            let table = self
                .by_handle(q)
                .ok_or_else(|| BenchError::UnknownTable(q.to_string()))?;
            let col = table
                .column(name)
                .ok_or_else(|| BenchError::UnknownColumn(format!("{q}.{name}")))?;
            return Ok(Some(table.qualified(col)));
        }
        match self.owners(name).as_slice() {
            [owner] => Ok(Some(owner.qualified(owner.column(name).expect("owner has the column")))),
            [] if double_quoted || self.aliases.iter().any(|a| ident_eq(a, name)) => Ok(None),
            [] => Err(BenchError::UnknownColumn(name.to_string())),
            _ => Err(BenchError::AmbiguousColumn(name.to_string())),
        }
    }
}

/// Every column the query references, fully qualified with the database's
/// own spelling. `*` expands to all columns of the tables in scope; `count(*)`
/// references none.
pub fn extract_columns(sql: &str, db: &Database) -> Result<BTreeSet<QualifiedColumn>, BenchError> {
    columns_of(&parse_select(sql)?, db)
}

pub fn columns_of(query: &SelectQuery, db: &Database) -> Result<BTreeSet<QualifiedColumn>, BenchError> {
    let scope = Scope::new(query, db)?;
    let mut out = BTreeSet::new();
    for w in &query.wildcards {
        match w {
            Some(q) => {
                let t = scope.by_handle(q).ok_or_else(|| BenchError::UnknownTable(q.clone()))?;
                out.extend(t.qualified_columns());
            }
            None => out.extend(scope.tables.iter().flat_map(|(_, t)| t.qualified_columns())),
        }
    }
    for (i, names) in query.using.iter().enumerate() {
        for name in names {
            let right = scope.tables[i + 1].1;
            let col = right
                .column(name)
                .ok_or_else(|| BenchError::UnknownColumn(format!("{}.{name}", right.name())))?;
            out.insert(right.qualified(col));
            let left: Vec<QualifiedColumn> = scope.tables[..=i]
                .iter()
                .filter_map(|(_, t)| t.column(name).map(|c| t.qualified(c)))
                .collect();
            if left.is_empty() {
                return Err(BenchError::UnknownColumn(name.clone()));
            }
            out.extend(left);
        }
    }
    let walk = visit_expressions(&query.statement, |e| {
        let found = match e {
            Expr::Identifier(id) => scope.resolve(None, &id.value, id.quote_style == Some('"')),
            Expr::CompoundIdentifier(parts) => match parts.as_slice() {
                [q, c] => scope.resolve(Some(&q.value), &c.value, false),
                _ => Err(unsupported(format!("column reference `{e}`"))),
            },
            _ => Ok(None),
        };
        match found {
            Ok(qc) => {
                out.extend(qc);
                ControlFlow::Continue(())
            }
            Err(err) => ControlFlow::Break(err),
        }
    });
    match walk {
        ControlFlow::Break(err) => Err(err),
        ControlFlow::Continue(()) => Ok(out),
    }
}

impl SelectQuery {
    /// Every string literal with its byte span, counting double-quoted words
    /// that name no column of the tables in scope.
    pub fn string_literals(&self, db: &Database) -> Vec<(String, Range<usize>)> {
        let scope = Scope::new(self, db).ok();
        let Ok(tokens) = lex(&self.sql) else {
            return Vec::new();
        };
        tokens
            .into_iter()
            .filter_map(|(tok, span)| match tok {
                Tok::Str(s) => Some((s, span)),
                Tok::Quoted(s, true) => {
                    let is_column = scope.as_ref().is_some_and(|sc| !sc.owners(&s).is_empty());
                    (!is_column).then_some((s, span))
                }
                _ => None,
            })
            .collect()
    }
}

/// SQLite's keywords, sorted; identifiers matching one get quoted.
const SQLITE_KEYWORDS: &[&str] = &[
    "ABORT",
    "ACTION",
    "ADD",
    "AFTER",
    "ALL",
    "ALTER",
    "ALWAYS",
    "ANALYZE",
    "AND",
    "AS",
    "ASC",
    "ATTACH",
    "AUTOINCREMENT",
    "BEFORE",
    "BEGIN",
    "BETWEEN",
    "BY",
    "CASCADE",
    "CASE",
    "CAST",
    "CHECK",
    "COLLATE",
    "COLUMN",
    "COMMIT",
    "CONFLICT",
    "CONSTRAINT",
    "CREATE",
    "CROSS",
    "CURRENT",
    "CURRENT_DATE",
    "CURRENT_TIME",
    "CURRENT_TIMESTAMP",
    "DATABASE",
    "DEFAULT",
    "DEFERRABLE",
    "DEFERRED",
    "DELETE",
    "DESC",
    "DETACH",
    "DISTINCT",
    "DO",
    "DROP",
    "EACH",
    "ELSE",
    "END",
    "ESCAPE",
    "EXCEPT",
    "EXCLUDE",
    "EXCLUSIVE",
    "EXISTS",
    "EXPLAIN",
    "FAIL",
    "FILTER",
    "FIRST",
    "FOLLOWING",
    "FOR",
    "FOREIGN",
    "FROM",
    "FULL",
    "GENERATED",
    "GLOB",
    "GROUP",
    "GROUPS",
    "HAVING",
    "IF",
    "IGNORE",
    "IMMEDIATE",
    "IN",
    "INDEX",
    "INDEXED",
    "INITIALLY",
    "INNER",
    "INSERT",
    "INSTEAD",
    "INTERSECT",
    "INTO",
    "IS",
    "ISNULL",
    "JOIN",
    "KEY",
    "LAST",
    "LEFT",
    "LIKE",
    "LIMIT",
    "MATCH",
    "MATERIALIZED",
    "NATURAL",
    "NO",
    "NOT",
    "NOTHING",
    "NOTNULL",
    "NULL",
    "NULLS",
    "OF",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "OTHERS",
    "OUTER",
    "OVER",
    "PARTITION",
    "PLAN",
    "PRAGMA",
    "PRECEDING",
    "PRIMARY",
    "QUERY",
    "RAISE",
    "RANGE",
    "RECURSIVE",
    "REFERENCES",
    "REGEXP",
    "REINDEX",
    "RELEASE",
    "RENAME",
    "REPLACE",
    "RESTRICT",
    "RETURNING",
    "RIGHT",
    "ROLLBACK",
    "ROW",
    "ROWS",
    "SAVEPOINT",
    "SELECT",
    "SET",
    "TABLE",
    "TEMP",
    "TEMPORARY",
    "THEN",
    "TIES",
    "TO",
    "TRANSACTION",
    "TRIGGER",
    "UNBOUNDED",
    "UNION",
    "UNIQUE",
    "UPDATE",
    "USING",
    "VACUUM",
    "VALUES",
    "VIEW",
    "VIRTUAL",
    "WHEN",
    "WHERE",
    "WINDOW",
    "WITH",
    "WITHOUT",
];

fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && SQLITE_KEYWORDS.binary_search(&s.to_ascii_uppercase().as_str()).is_err()
}

pub fn quote_ident(s: &str) -> String {
    if is_plain_ident(s) {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('"', "\"\""))
    }
}

/// Replaces the SELECT list with `columns` (sorted, qualified by each table's
/// handle in the FROM clause) and drops DISTINCT, GROUP BY, HAVING, ORDER BY
/// and LIMIT. The FROM and WHERE text is kept byte for byte.
pub fn rewrite_select(sql: &str, columns: &BTreeSet<QualifiedColumn>) -> Result<String, BenchError> {
    rewrite_parsed(&parse_select(sql)?, columns)
}

pub(crate) fn rewrite_parsed(query: &SelectQuery, columns: &BTreeSet<QualifiedColumn>) -> Result<String, BenchError> {
    if columns.is_empty() {
        return Err(unsupported("query references no columns"));
    }
    let mut list = Vec::with_capacity(columns.len());
    for qc in columns {
        let t = query
            .tables
            .iter()
            .find(|t| ident_eq(&t.name, qc.table()))
            .ok_or_else(|| BenchError::UnknownTable(qc.table().to_string()))?;
        list.push(format!("{}.{}", quote_ident(t.handle()), quote_ident(qc.column())));
    }
    Ok(format!(
        "SELECT {} {}",
        list.join(", "),
        &query.sql[query.from_span.clone()]
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellValue, Column, Table};

    fn qc(s: &str) -> QualifiedColumn {
        s.parse().unwrap()
    }

    fn set(cols: &[&str]) -> BTreeSet<QualifiedColumn> {
        cols.iter().map(|c| qc(c)).collect()
    }

    fn table(name: &str, cols: &[&str]) -> Table {
        let columns = cols
            .iter()
            .map(|c| Column::infer(*c, vec![CellValue::from(1i64)]).unwrap())
            .collect();
        Table::new(name, columns, vec![], vec![]).unwrap()
    }

    fn db() -> Database {
        Database::new(
            "d",
            vec![
                table("schools", &["CDSCode", "name", "County", "City"]),
                table("a", &["id", "v"]),
                table("b", &["aid", "x", "v"]),
                table("t", &["a", "b", "c"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn documented_extractions() {
        let d = db();
        assert_eq!(
            extract_columns("SELECT T1.name FROM schools AS T1 WHERE T1.County = 'LA'", &d).unwrap(),
            set(&["schools.name", "schools.County"])
        );
        assert_eq!(
            extract_columns("SELECT count(*) FROM a JOIN b ON a.id = b.aid WHERE b.x > 3", &d).unwrap(),
            set(&["a.id", "b.aid", "b.x"])
        );
        assert_eq!(
            extract_columns("SELECT * FROM t", &d).unwrap(),
            set(&["t.a", "t.b", "t.c"])
        );
    }

    #[test]
    fn clauses_and_resolution() {
        let d = db();
        let sql = "select distinct county, max(x) as m from schools join b on b.aid = schools.CDSCode \
                   where city like '%o%' and not (x between 1 and 5) group by county having count(*) > 1 order by m desc limit 3";
        assert_eq!(
            extract_columns(sql, &d).unwrap(),
            set(&["schools.County", "b.x", "b.aid", "schools.CDSCode", "schools.City"])
        );
        // Double-quoted text that is no column is a string.
        assert_eq!(
            extract_columns("SELECT a FROM t WHERE b = \"hello\"", &d).unwrap(),
            set(&["t.a", "t.b"])
        );
        assert_eq!(extract_columns("SELECT \"a\" FROM t", &d).unwrap(), set(&["t.a"]));
        assert_eq!(
            extract_columns("SELECT [a], `b` FROM `t` WHERE [t].c = 1", &d).unwrap(),
            set(&["t.a", "t.b", "t.c"])
        );
        assert_eq!(
            extract_columns("SELECT b.* FROM a, b", &d).unwrap(),
            set(&["b.aid", "b.x", "b.v"])
        );
        assert_eq!(
            extract_columns("SELECT x FROM a JOIN b USING (v)", &d).unwrap(),
            set(&["a.v", "b.v", "b.x"])
        );
        assert_eq!(
            extract_columns("SELECT CASE WHEN a > 1 THEN b ELSE 'n' END, CAST(c AS REAL) FROM t", &d).unwrap(),
            set(&["t.a", "t.b", "t.c"])
        );
    }

    #[test]
    fn errors() {
        let d = db();
        let code = |sql: &str| extract_columns(sql, &d).unwrap_err().code();
        assert_eq!(code("SELECT v FROM a JOIN b ON a.id = b.aid"), "ambiguous_column");
        assert_eq!(code("SELECT nope FROM t"), "unknown_column");
        assert_eq!(code("SELECT a FROM zzz"), "unknown_table");
        assert_eq!(code("SELECT a FROM t WHERE a IN (SELECT a FROM t)"), "unsupported_sql");
        assert_eq!(code("SELECT a FROM t UNION SELECT a FROM t"), "unsupported_sql");
        assert_eq!(code("SELECT (SELECT max(a) FROM t) FROM t"), "unsupported_sql");
        assert_eq!(
            code("SELECT T1.a FROM t AS T1 JOIN t AS T2 ON T1.a = T2.b"),
            "unsupported_sql"
        );
        assert_eq!(code("SELECT a FROM t RIGHT JOIN a ON 1"), "unsupported_sql");
        assert_eq!(code("SELECT a FROM t WHERE"), "sql_syntax");
        assert_eq!(code("SELECT a FROM t WHERE a = 'x"), "sql_syntax");
    }

    #[test]
    fn rewrites() {
        assert_eq!(
            rewrite_select("SELECT count(*) FROM t WHERE t.a=1", &set(&["t.a"])).unwrap(),
            "SELECT t.a FROM t WHERE t.a=1"
        );
        let sql =
            "SELECT T2.x FROM a AS T1 JOIN b AS T2 ON T1.id  =  T2.aid WHERE T2.x > 3 ORDER BY T2.x DESC LIMIT 1;";
        let out = rewrite_select(sql, &set(&["a.id", "b.aid", "b.x"])).unwrap();
        assert_eq!(
            out,
            "SELECT T1.id, T2.aid, T2.x FROM a AS T1 JOIN b AS T2 ON T1.id  =  T2.aid WHERE T2.x > 3"
        );
        let out = rewrite_select(
            "SELECT DISTINCT a FROM t GROUP BY a HAVING count(*) > 1",
            &set(&["t.a"]),
        )
        .unwrap();
        assert_eq!(out, "SELECT t.a FROM t");
        let out = rewrite_select(
            "SELECT \"my col\" FROM \"odd table\"",
            &BTreeSet::from([QualifiedColumn::new("odd table", "my col").unwrap()]),
        )
        .unwrap();
        assert_eq!(out, "SELECT \"odd table\".\"my col\" FROM \"odd table\"");
    }

    #[test]
    fn string_literal_spans() {
        let d = db();
        let sql = "SELECT a FROM t WHERE b = 'it''s' OR c = \"LA\"";
        let q = parse_select(sql).unwrap();
        let lits = q.string_literals(&d);
        assert_eq!(lits.len(), 2);
        assert_eq!(lits[0].0, "it's");
        assert_eq!(&sql[lits[0].1.clone()], "'it''s'");
        assert_eq!(&sql[lits[1].1.clone()], "\"LA\"");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(1000))]

        #[test]
        fn parser_never_panics(sql in "[ -~]{0,80}") {
            let _ = parse_select(&sql);
        }

        #[test]
        fn parser_never_panics_on_near_queries(
            where_part in "[a-c0-9 =<>'\"().,*%-]{0,30}",
            tail in proptest::sample::select(vec!["", " LIMIT 2", " ORDER BY a", " GROUP BY b HAVING", ";", " UNION"]),
        ) {
            let sql = format!("SELECT a FROM t WHERE {where_part}{tail}");
            let _ = extract_columns(&sql, &db());
        }
    }
}
