use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{cosine, EmbeddingVector, LlmError, LlmGateway};
use crate::model::{Column, Database, QualifiedColumn};

use super::{ColumnProfile, SemanticSchema};

/// A scored cross-table column pair.
///
/// `weight` is always `(semantic_sim + jaccard) * uniqueness_max`. Declared
/// foreign keys carry `declared = true` and rank above every discovered pair
/// (see [`JoinCandidate::rank_weight`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinCandidate {
    pub left: QualifiedColumn,
    pub right: QualifiedColumn,
    pub semantic_sim: f64,
    pub jaccard: f64,
    pub uniqueness_max: f64,
    pub weight: f64,
    #[serde(default)]
    pub declared: bool,
}

impl JoinCandidate {
    pub fn new(
        left: QualifiedColumn,
        right: QualifiedColumn,
        semantic_sim: f64,
        jaccard: f64,
        uniqueness_max: f64,
    ) -> Self {
        Self {
            left,
            right,
            semantic_sim,
            jaccard,
            uniqueness_max,
            weight: connection_weight(semantic_sim, jaccard, uniqueness_max),
            declared: false,
        }
    }

    /// `+inf` for declared keys, the connection weight otherwise.
    pub fn rank_weight(&self) -> f64 {
        if self.declared {
            f64::INFINITY
        } else {
            self.weight
        }
    }

    /// Lowercased table pair in sorted order.
    pub fn table_pair(&self) -> (String, String) {
        let a = self.left.key().0.clone();
        let b = self.right.key().0.clone();
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.left.belongs_to(a) && self.right.belongs_to(b)) || (self.left.belongs_to(b) && self.right.belongs_to(a))
    }

    /// The column of this edge owned by `table`.
    pub fn side(&self, table: &str) -> Option<&QualifiedColumn> {
        if self.left.belongs_to(table) {
            Some(&self.left)
        } else if self.right.belongs_to(table) {
            Some(&self.right)
        } else {
            None
        }
    }

    fn sort_key(&self) -> (&(String, String), &(String, String)) {
        (self.left.key(), self.right.key())
    }
}

pub fn connection_weight(semantic_sim: f64, jaccard: f64, uniqueness_max: f64) -> f64 {
    (semantic_sim + jaccard) * uniqueness_max
}

/// Jaccard index of two sets; two empty sets score 0.
pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|v| large.contains(*v)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Distinct non-null values of a column in canonical string form.
pub fn distinct_values(col: &Column) -> HashSet<String> {
    col.values.iter().filter_map(|v| v.canonical()).collect()
}

/// Text embedded for a column's semantic similarity.
pub fn column_signature(column: &QualifiedColumn, schema: &SemanticSchema) -> String {
    format!("{}: {}", column, schema.describe(column))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct JoinGraph {
    pub nodes: Vec<String>,
    /// Accepted edges, at most one per unordered table pair.
    pub edges: Vec<JoinCandidate>,
    /// Every scored cross-table pair, for auditing.
    pub candidates: Vec<JoinCandidate>,
    pub tau_join: f64,
}

impl JoinGraph {
    pub fn edge_between(&self, a: &str, b: &str) -> Option<&JoinCandidate> {
        self.edges.iter().find(|e| e.connects(a, b))
    }

    pub fn neighbors(&self, table: &str) -> Vec<(&str, &JoinCandidate)> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.left.belongs_to(table) {
                    Some((e.right.table(), e))
                } else if e.right.belongs_to(table) {
                    Some((e.left.table(), e))
                } else {
                    None
                }
            })
            .collect()
    }
}

const EMBED_BATCH: usize = 256;

pub(crate) fn embed_in_batches(gateway: &LlmGateway, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
    let chunks: Vec<&[String]> = texts.chunks(EMBED_BATCH).collect();
    let results: Vec<Result<Vec<EmbeddingVector>, LlmError>> = chunks.par_iter().map(|c| gateway.embed(c)).collect();
    let mut out = Vec::with_capacity(texts.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Scores every cross-table column pair and keeps, per table pair, the best
/// candidate when its weight reaches `tau_join`. Declared foreign keys are
/// always kept and win their table pair.
pub fn discover_joins(
    db: &Database,
    profiles: &[ColumnProfile],
    schema: &SemanticSchema,
    gateway: &LlmGateway,
    tau_join: f64,
) -> Result<JoinGraph, LlmError> {
    let columns: Vec<(usize, QualifiedColumn, &Column)> = db
        .tables()
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.columns().iter().map(move |c| (ti, t.qualified(c), c)))
        .collect();
    let nodes: Vec<String> = db.tables().iter().map(|t| t.name().to_string()).collect();
    if columns.is_empty() || db.tables().len() < 2 {
        return Ok(JoinGraph {
            nodes,
            tau_join,
            ..JoinGraph::default()
        });
    }

    let signatures: Vec<String> = columns.iter().map(|(_, qc, _)| column_signature(qc, schema)).collect();
    let vectors = embed_in_batches(gateway, &signatures)?;
    let value_sets: Vec<HashSet<String>> = columns.par_iter().map(|(_, _, c)| distinct_values(c)).collect();
    let uniqueness: HashMap<&QualifiedColumn, f64> = profiles.iter().map(|p| (&p.column, p.uniqueness)).collect();

    let pairs: Vec<(usize, usize)> = (0..columns.len())
        .flat_map(|i| ((i + 1)..columns.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| columns[i].0 != columns[j].0)
        .collect();
    let mut candidates: Vec<JoinCandidate> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = cosine(&vectors[i], &vectors[j]).max(0.0);
            let jac = jaccard(&value_sets[i], &value_sets[j]);
            let u = uniqueness
                .get(&columns[i].1)
                .copied()
                .unwrap_or(0.0)
                .max(uniqueness.get(&columns[j].1).copied().unwrap_or(0.0));
            JoinCandidate::new(columns[i].1.clone(), columns[j].1.clone(), s, jac, u)
        })
        .collect();

    // Mark declared foreign keys.
    let declared: HashSet<(QualifiedColumn, QualifiedColumn)> = db
        .tables()
        .iter()
        .flat_map(|t| {
            t.declared_foreign_keys().iter().filter_map(move |fk| {
                let local = db.resolve(&QualifiedColumn::new(t.name(), fk.column.as_str()).ok()?)?;
                let remote = db.resolve(&fk.references)?;
                (local.key().0 != remote.key().0).then_some((local, remote))
            })
        })
        .flat_map(|(a, b)| [(a.clone(), b.clone()), (b, a)])
        .collect();
    for c in &mut candidates {
        if declared.contains(&(c.left.clone(), c.right.clone())) {
            c.declared = true;
        }
    }

    let mut best: BTreeMap<(String, String), &JoinCandidate> = BTreeMap::new();
    for c in &candidates {
        if !c.declared && c.weight < tau_join {
            continue;
        }
        let slot = best.entry(c.table_pair()).or_insert(c);
        let better = c.rank_weight() > slot.rank_weight()
            || (c.rank_weight() == slot.rank_weight() && c.sort_key() < slot.sort_key());
        if better {
            *slot = c;
        }
    }
    let edges = best.into_values().cloned().collect();
    candidates.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(JoinGraph {
        nodes,
        edges,
        candidates,
        tau_join,
    })
}
