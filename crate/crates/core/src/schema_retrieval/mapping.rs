use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::derive_seed;
use crate::llm::{parse_column_selection, ChatRequest, LlmGateway, PromptKind, PromptSet};
use crate::model::{Database, QualifiedColumn};
use crate::preprocess::SemanticSchema;

use super::{table_structure, ParsedQuestion, SchemaError};

/// Per-column vote counts over `k` mapping iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub counts: BTreeMap<QualifiedColumn, u32>,
    pub k: u32,
    pub theta: f64,
}

impl VoteTally {
    pub fn new(k: u32, theta: f64) -> Self {
        Self {
            counts: BTreeMap::new(),
            k,
            theta,
        }
    }

    /// Adds one iteration's answer; repeated columns count once.
    pub fn record<'a>(&mut self, columns: impl IntoIterator<Item = &'a QualifiedColumn>) {
        let distinct: BTreeSet<&QualifiedColumn> = columns.into_iter().collect();
        for c in distinct {
            *self.counts.entry(c.clone()).or_default() += 1;
        }
    }

    pub fn count(&self, column: &QualifiedColumn) -> u32 {
        self.counts.get(column).copied().unwrap_or(0)
    }
}

/// `theta` as an exact decimal fraction `num / den`, taken from its shortest
/// round-trip representation.
fn decimal_fraction(theta: f64) -> Option<(u128, u128)> {
    let text = format!("{theta}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    if int.starts_with('-') || int.len() + frac.len() > 30 {
        return None;
    }
    let den = 10u128.checked_pow(frac.len() as u32)?;
    let num: u128 = format!("{int}{frac}").parse().ok()?;
    Some((num, den))
}

/// True when `count >= theta * k`, decided without rounding error.
pub fn meets_threshold(count: u32, k: u32, theta: f64) -> bool {
    match decimal_fraction(theta) {
        Some((num, den)) => u128::from(count) * den >= num * u128::from(k),
        None => f64::from(count) >= theta * f64::from(k),
    }
}

/// Columns whose vote count reaches `theta * K`.
pub fn select_columns(tally: &VoteTally) -> BTreeSet<QualifiedColumn> {
    tally
        .counts
        .iter()
        .filter(|(_, &n)| meets_threshold(n, tally.k, tally.theta))
        .map(|(c, _)| c.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MappingDiagnostics {
    /// Well-formed column names that do not exist in the database.
    pub dropped_columns: Vec<String>,
    pub failed_iterations: Vec<FailedIteration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedIteration {
    pub iteration: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingOutcome {
    pub tally: VoteTally,
    pub diagnostics: MappingDiagnostics,
}

fn render_hints(parsed: &ParsedQuestion) -> String {
    let mut hints = serde_json::to_string(&parsed.key_elements).expect("strings serialize");
    if !parsed.hinted_columns.is_empty() {
        let cols: Vec<String> = parsed.hinted_columns.iter().map(|c| c.to_string()).collect();
        hints.push_str("\nPossibly relevant columns: ");
        hints.push_str(&cols.join(", "));
    }
    hints
}

/// Table order and per-table column order for iteration `i`.
pub fn shuffled_layout(db: &Database, seed: u64, iteration: u32) -> Vec<(String, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle", u64::from(iteration)));
    let mut tables: Vec<(String, Vec<String>)> = db
        .tables()
        .iter()
        .map(|t| {
            (
                t.name().to_string(),
                t.columns().iter().map(|c| c.name.clone()).collect(),
            )
        })
        .collect();
    tables.shuffle(&mut rng);
    for (_, cols) in &mut tables {
        cols.shuffle(&mut rng);
    }
    tables
}

pub fn mapping_prompt(
    prompts: &PromptSet,
    parsed: &ParsedQuestion,
    schema: &SemanticSchema,
    db: &Database,
    seed: u64,
    iteration: u32,
) -> Result<String, SchemaError> {
    let layout = shuffled_layout(db, seed, iteration);
    let structure = table_structure(db, schema, Some(&layout));
    Ok(prompts.render(
        PromptKind::SchemaMapping,
        &[
            ("TABLESTRUCTURE", &structure),
            ("QUESTION", &parsed.question),
            ("HINTS", &render_hints(parsed)),
        ],
    )?)
}

/// Runs `k` mapping calls over differently shuffled schemas and tallies the
/// validated column sets.
#[allow(clippy::too_many_arguments)]
pub fn map_schema(
    parsed: &ParsedQuestion,
    schema: &SemanticSchema,
    db: &Database,
    gateway: &LlmGateway,
    prompts: &PromptSet,
    k: u32,
    theta: f64,
    seed: u64,
    temperature: f64,
) -> Result<MappingOutcome, SchemaError> {
    if k == 0 {
        return Err(SchemaError::InvalidArgument("k must be at least 1".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(SchemaError::InvalidArgument("theta must lie in (0, 1]".into()));
    }
    let prompts_by_iter: Vec<String> = (0..k)
        .map(|i| mapping_prompt(prompts, parsed, schema, db, seed, i))
        .collect::<Result<_, _>>()?;
    let answers: Vec<_> = prompts_by_iter
        .into_par_iter()
        .enumerate()
        .map(|(i, prompt)| {
            let req = ChatRequest::new(prompt)
                .temperature(temperature)
                .seed(derive_seed(seed, "mapping", i as u64));
            gateway.complete_structured(&req, parse_column_selection)
        })
        .collect();

    let mut tally = VoteTally::new(k, theta);
    let mut diagnostics = MappingDiagnostics::default();
    for (i, answer) in answers.into_iter().enumerate() {
        match answer {
            Ok(sel) => {
                let mut valid = Vec::with_capacity(sel.columns.len());
                for c in &sel.columns {
                    match db.resolve(c) {
                        Some(r) => valid.push(r),
                        None => {
                            log::warn!("mapping iteration {i} named unknown column `{c}`; dropped");
                            diagnostics.dropped_columns.push(c.to_string());
                        }
                    }
                }
                tally.record(&valid);
            }
            Err(e) => {
                log::warn!("mapping iteration {i} failed: {e}");
                diagnostics.failed_iterations.push(FailedIteration {
                    iteration: i as u32,
                    error: e.to_string(),
                });
            }
        }
    }
    if diagnostics.failed_iterations.len() == k as usize {
        return Err(SchemaError::MappingUnavailable);
    }
    Ok(MappingOutcome { tally, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockChat;
    use crate::model::{CellValue, Column, Table};
    use proptest::prelude::*;

    fn qc(s: &str) -> QualifiedColumn {
        s.parse().unwrap()
    }

    fn tally(k: u32, theta: f64, counts: &[(&str, u32)]) -> VoteTally {
        VoteTally {
            counts: counts.iter().map(|(c, n)| (qc(c), *n)).collect(),
            k,
            theta,
        }
    }

    #[test]
    fn threshold_examples() {
        let t = tally(5, 0.6, &[("t.a", 5), ("t.b", 3), ("t.c", 2)]);
        assert_eq!(select_columns(&t), [qc("t.a"), qc("t.b")].into());
        let t = tally(5, 1.0, &[("t.a", 5), ("t.b", 4)]);
        assert_eq!(select_columns(&t), [qc("t.a")].into());
        let t = tally(5, 0.6, &[("t.a", 1), ("t.b", 2)]);
        assert!(select_columns(&t).is_empty());
    }

    #[test]
    fn exact_boundary() {
        // 0.28 * 25 is 7.000000000000001 in binary floating point.
        assert!(std::hint::black_box(0.28f64) * 25.0 > 7.0);
        assert!(meets_threshold(7, 25, 0.28));
        assert!(meets_threshold(3, 5, 0.6));
        assert!(meets_threshold(7, 10, 0.7));
        assert!(!meets_threshold(2, 10, 0.3));
        assert!(meets_threshold(1, 3, 1.0 / 3.0));
        assert!(meets_threshold(1, 1, 1.0));
    }

    fn db() -> Database {
        let mk = |name: &str, cols: &[&str]| {
            Table::new(
                name,
                cols.iter()
                    .map(|c| Column::infer(*c, vec![CellValue::from("v")]).unwrap())
                    .collect(),
                vec![],
                vec![],
            )
            .unwrap()
        };
        Database::new(
            "d",
            vec![mk("t", &["A", "B", "C", "D"]), mk("u", &["x", "y"]), mk("w", &["p"])],
        )
        .unwrap()
    }

    fn parsed() -> ParsedQuestion {
        ParsedQuestion {
            question: "q".into(),
            key_elements: vec!["q".into()],
            hinted_columns: vec![],
            degraded: false,
        }
    }

    fn script(answers: &[&str], k: u32, seed: u64) -> MockChat {
        let db = db();
        let prompts = PromptSet::default();
        let mut mock = MockChat::default();
        for i in 0..k {
            let p = mapping_prompt(&prompts, &parsed(), &SemanticSchema::default(), &db, seed, i).unwrap();
            if let Some(a) = answers.get(i as usize) {
                mock.insert(&p, *a);
            }
        }
        mock
    }

    fn run(mock: MockChat, k: u32, seed: u64) -> Result<MappingOutcome, SchemaError> {
        map_schema(
            &parsed(),
            &SemanticSchema::default(),
            &db(),
            &LlmGateway::mock(mock),
            &PromptSet::default(),
            k,
            0.6,
            seed,
            0.2,
        )
    }

    #[test]
    fn counts_votes() {
        let answers = [
            r#"{"reasoning":"","columns":["t.A","t.B"]}"#,
            r#"{"reasoning":"","columns":["t.A","t.B"]}"#,
            r#"{"reasoning":"","columns":["t.A"]}"#,
            r#"{"reasoning":"","columns":["t.A","t.C"]}"#,
            r#"{"reasoning":"","columns":["t.a","t.A"]}"#,
        ];
        let out = run(script(&answers, 5, 3), 5, 3).unwrap();
        let expect: BTreeMap<_, _> = [(qc("t.A"), 5), (qc("t.B"), 2), (qc("t.C"), 1)].into();
        assert_eq!(out.tally.counts, expect);
        assert_eq!(select_columns(&out.tally), [qc("t.A")].into());
    }

    #[test]
    fn single_iteration() {
        let out = run(script(&[r#"{"reasoning":"","columns":["t.A","u.y"]}"#], 1, 0), 1, 0).unwrap();
        assert_eq!(out.tally.counts, [(qc("t.A"), 1), (qc("u.y"), 1)].into());
    }

    #[test]
    fn hallucinations_dropped_and_counted() {
        let out = run(script(&[r#"{"reasoning":"","columns":["t.A","t.Zed"]}"#], 1, 0), 1, 0).unwrap();
        assert_eq!(out.tally.counts.len(), 1);
        assert_eq!(out.diagnostics.dropped_columns, vec!["t.Zed"]);
    }

    #[test]
    fn all_failures_is_an_error() {
        assert_eq!(
            run(MockChat::default(), 3, 0).unwrap_err().code(),
            "mapping_unavailable"
        );
        // One surviving iteration is enough.
        let out = run(script(&[r#"{"reasoning":"","columns":["t.A"]}"#], 3, 0), 3, 0).unwrap();
        assert_eq!(out.diagnostics.failed_iterations.len(), 2);
        assert_eq!(out.tally.k, 3);
    }

    #[test]
    fn shuffles_are_seeded() {
        let db = db();
        let p = PromptSet::default();
        let a = mapping_prompt(&p, &parsed(), &SemanticSchema::default(), &db, 7, 2).unwrap();
        let b = mapping_prompt(&p, &parsed(), &SemanticSchema::default(), &db, 7, 2).unwrap();
        assert_eq!(a, b);
        let distinct: BTreeSet<String> = (0..5)
            .map(|i| mapping_prompt(&p, &parsed(), &SemanticSchema::default(), &db, 7, i).unwrap())
            .collect();
        assert!(distinct.len() > 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn theta_monotone(counts in proptest::collection::vec(0u32..=10, 1..8), t1 in 1u32..=100, t2 in 1u32..=100) {
            let (lo, hi) = (t1.min(t2) as f64 / 100.0, t1.max(t2) as f64 / 100.0);
            let named: Vec<(String, u32)> = counts.iter().enumerate().map(|(i, n)| (format!("t.c{i}"), *n)).collect();
            let refs: Vec<(&str, u32)> = named.iter().map(|(c, n)| (c.as_str(), *n)).collect();
            let loose = select_columns(&tally(10, lo, &refs));
            let strict = select_columns(&tally(10, hi, &refs));
            prop_assert!(strict.is_subset(&loose));
        }

        #[test]
        fn threshold_matches_integer_arithmetic(count in 0u32..=20, k in 1u32..=20, pct in 1u32..=100) {
            let theta = pct as f64 / 100.0;
            prop_assert_eq!(meets_threshold(count, k, theta), count * 100 >= pct * k);
        }

        #[test]
        fn validation_is_order_independent(seed in any::<u64>(), i in 0u32..8) {
            let layout = shuffled_layout(&db(), seed, i);
            let mut names: Vec<String> = layout
                .iter()
                .flat_map(|(t, cs)| cs.iter().map(move |c| format!("{t}.{c}")))
                .collect();
            names.sort();
            let mut all: Vec<String> = db().all_columns().iter().map(|c| c.to_string()).collect();
            all.sort();
            prop_assert_eq!(names, all);
        }
    }
}
