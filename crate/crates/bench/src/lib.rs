//! Seeded fixtures shared by the benches.

use std::collections::BTreeSet;

use fgtr_core::eval::GoldStandard;
use fgtr_core::llm::{EmbeddingVector, HashEmbedder};
use fgtr_core::model::{CellValue, Column, Database, QualifiedColumn, SubTableRecord, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` unit vectors from the hashing embedder, as stored in the index.
pub fn unit_vectors(n: usize, dim: usize) -> Vec<Vec<f32>> {
    let embedder = HashEmbedder::new(dim, 0);
    (0..n)
        .map(|i| {
            EmbeddingVector::normalized(embedder.vector(&format!("value {i} item{}", i * 7919 % 10_007)))
                .expect("non-zero embedding")
                .to_f32()
        })
        .collect()
}

/// One table `t` with a numeric column `x` (about 5% nulls) and a text column `s`.
pub fn numeric_db(rows: usize, seed: u64) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..rows)
        .map(|_| {
            if rng.random_range(0..20) == 0 {
                CellValue::Null
            } else {
                CellValue::from(rng.random_range(-10_000..10_000) as f64 / 4.0)
            }
        })
        .collect();
    let s = (0..rows).map(|i| CellValue::from(format!("row {}", i % 97))).collect();
    let table = Table::new(
        "t",
        vec![
            Column::infer("x", x).expect("numeric"),
            Column::infer("s", s).expect("text"),
        ],
        vec![],
        vec![],
    )
    .expect("valid table");
    Database::new("bench", vec![table]).expect("valid database")
}

/// A gold standard with `tables` sub-tables of `rows` x 4 cells each.
pub fn gold(qid: usize, tables: usize, rows: usize, seed: u64) -> GoldStandard {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ qid as u64);
    let mut gold_columns = BTreeSet::new();
    let gold_tables = (0..tables)
        .map(|t| {
            let table = format!("t{t}");
            let columns: Vec<String> = (0..4).map(|c| format!("c{c}")).collect();
            for c in &columns {
                gold_columns.insert(QualifiedColumn::new(&table, c).expect("valid name"));
            }
            let rows = (0..rows)
                .map(|r| {
                    vec![
                        CellValue::from(r as i64),
                        CellValue::from(format!("v{}", rng.random_range(0..50))),
                        CellValue::from(rng.random_range(0..1000) as f64 / 8.0),
                        CellValue::from(rng.random_bool(0.5)),
                    ]
                })
                .collect();
            SubTableRecord { table, columns, rows }
        })
        .collect();
    GoldStandard {
        qid: format!("q{qid}"),
        gold_columns,
        gold_tables,
    }
}
