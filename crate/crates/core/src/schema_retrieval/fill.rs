use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{Database, QualifiedColumn};
use crate::preprocess::{JoinCandidate, JoinGraph};

/// Best path found so far: summed weight, lowercase table sequence and the
/// edges walked.
#[derive(Debug, Clone)]
struct PathState {
    weight: f64,
    tables: Vec<String>,
    edges: Vec<usize>,
}

fn better(a: &PathState, b: &PathState) -> bool {
    match a.weight.total_cmp(&b.weight) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.tables < b.tables,
    }
}

/// Shortest hop path between two tables. Equal-length paths prefer the larger
/// total weight, then the lexicographically smaller table sequence. Returns
/// edge indices into `graph.edges`.
pub fn shortest_path(graph: &JoinGraph, from: &str, to: &str) -> Option<Vec<usize>> {
    let from = from.to_lowercase();
    let to = to.to_lowercase();
    if from == to {
        return Some(Vec::new());
    }
    let mut adjacency: HashMap<String, Vec<(String, usize)>> = HashMap::new();
    for (i, e) in graph.edges.iter().enumerate() {
        let (a, b) = (e.left.key().0.clone(), e.right.key().0.clone());
        adjacency.entry(a.clone()).or_default().push((b.clone(), i));
        adjacency.entry(b).or_default().push((a, i));
    }
    let mut best: BTreeMap<String, PathState> = BTreeMap::new();
    best.insert(
        from.clone(),
        PathState {
            weight: 0.0,
            tables: vec![from.clone()],
            edges: Vec::new(),
        },
    );
    let mut frontier = vec![from];
    while !frontier.is_empty() && !best.contains_key(&to) {
        let mut next: BTreeMap<String, PathState> = BTreeMap::new();
        for node in &frontier {
            let state = best[node].clone();
            for (n, edge) in adjacency.get(node).into_iter().flatten() {
                if best.contains_key(n) {
                    continue;
                }
                let mut cand = state.clone();
                cand.weight += graph.edges[*edge].rank_weight();
                cand.tables.push(n.clone());
                cand.edges.push(*edge);
                match next.get(n) {
                    Some(cur) if !better(&cand, cur) => {}
                    _ => {
                        next.insert(n.clone(), cand);
                    }
                }
            }
        }
        frontier = next.keys().cloned().collect();
        best.extend(next);
    }
    best.remove(&to).map(|s| s.edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSelection {
    /// Columns chosen by voting.
    pub selected: BTreeSet<QualifiedColumn>,
    /// `selected` plus primary keys and join keys.
    pub filled: BTreeSet<QualifiedColumn>,
    pub join_edges_used: Vec<JoinCandidate>,
    /// Table pairs with no join path, in lowercase.
    pub disconnected_tables: Vec<(String, String)>,
}

impl SchemaSelection {
    pub fn empty() -> Self {
        Self {
            selected: BTreeSet::new(),
            filled: BTreeSet::new(),
            join_edges_used: Vec::new(),
            disconnected_tables: Vec::new(),
        }
    }

    /// Columns added by filling rather than voting.
    pub fn key_columns(&self) -> BTreeSet<&QualifiedColumn> {
        self.filled.difference(&self.selected).collect()
    }

    /// Tables owning filled columns, in database order.
    pub fn tables<'a>(&self, db: &'a Database) -> Vec<&'a str> {
        db.tables()
            .iter()
            .filter(|t| self.filled.iter().any(|c| c.belongs_to(t.name())))
            .map(|t| t.name())
            .collect()
    }
}

/// Adds primary keys of the touched tables and the join keys along the
/// shortest paths between every pair of them, bridge tables included.
pub fn fill_schema(selected: &BTreeSet<QualifiedColumn>, db: &Database, joins: &JoinGraph) -> SchemaSelection {
    let selected: BTreeSet<QualifiedColumn> = selected.iter().filter_map(|c| db.resolve(c)).collect();
    let mut filled = selected.clone();
    let touched: Vec<&str> = db
        .tables()
        .iter()
        .filter(|t| selected.iter().any(|c| c.belongs_to(t.name())))
        .map(|t| t.name())
        .collect();
    for t in &touched {
        filled.extend(db.table(t).expect("touched tables exist").primary_key_columns());
    }

    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut disconnected = Vec::new();
    for (i, a) in touched.iter().enumerate() {
        for b in &touched[i + 1..] {
            match shortest_path(joins, a, b) {
                Some(path) => used.extend(path),
                None => {
                    log::warn!("no join path between `{a}` and `{b}`");
                    disconnected.push((a.to_lowercase(), b.to_lowercase()));
                }
            }
        }
    }
    let join_edges_used: Vec<JoinCandidate> = used.iter().map(|&i| joins.edges[i].clone()).collect();
    for e in &join_edges_used {
        filled.extend([&e.left, &e.right].into_iter().filter_map(|c| db.resolve(c)));
    }

    // Declared keys between touched tables.
    for t in &touched {
        let table = db.table(t).expect("touched tables exist");
        for fk in table.declared_foreign_keys() {
            if !touched.iter().any(|o| fk.references.belongs_to(o)) {
                continue;
            }
            let local = QualifiedColumn::new(table.name(), fk.column.as_str())
                .ok()
                .and_then(|c| db.resolve(&c));
            let remote = db.resolve(&fk.references);
            if let (Some(l), Some(r)) = (local, remote) {
                filled.insert(l);
                filled.insert(r);
            }
        }
    }

    SchemaSelection {
        selected,
        filled,
        join_edges_used,
        disconnected_tables: disconnected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellValue, Column, ForeignKey, Table};
    use proptest::prelude::*;

    fn qc(s: &str) -> QualifiedColumn {
        s.parse().unwrap()
    }

    fn table(name: &str, cols: &[&str], pk: &[&str]) -> Table {
        Table::new(
            name,
            cols.iter()
                .map(|c| Column::infer(*c, vec![CellValue::from(1i64)]).unwrap())
                .collect(),
            pk.iter().map(|s| s.to_string()).collect(),
            vec![],
        )
        .unwrap()
    }

    fn edge(l: &str, r: &str, w: f64) -> JoinCandidate {
        JoinCandidate::new(qc(l), qc(r), w, 0.0, 1.0)
    }

    fn graph(nodes: &[&str], edges: Vec<JoinCandidate>) -> JoinGraph {
        JoinGraph {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges,
            candidates: vec![],
            tau_join: 0.5,
        }
    }

    #[test]
    fn two_table_example() {
        let db = Database::new(
            "d",
            vec![
                table("schools", &["CDSCode", "County"], &["CDSCode"]),
                table("satscores", &["cds", "NumTstTakr"], &[]),
            ],
        )
        .unwrap();
        let g = graph(
            &["schools", "satscores"],
            vec![edge("schools.CDSCode", "satscores.cds", 0.9)],
        );
        let sel = fill_schema(&[qc("schools.County"), qc("satscores.NumTstTakr")].into(), &db, &g);
        let expect: BTreeSet<_> = [
            "schools.County",
            "satscores.NumTstTakr",
            "schools.CDSCode",
            "satscores.cds",
        ]
        .map(qc)
        .into();
        assert_eq!(sel.filled, expect);
        assert_eq!(sel.join_edges_used.len(), 1);
        assert!(sel.disconnected_tables.is_empty());
    }

    #[test]
    fn single_table_adds_pk() {
        let db = Database::new("d", vec![table("t", &["id", "x", "y"], &["id"])]).unwrap();
        let sel = fill_schema(&[qc("t.x")].into(), &db, &graph(&["t"], vec![]));
        assert_eq!(sel.filled, [qc("t.id"), qc("t.x")].into());
    }

    fn line_db() -> (Database, JoinGraph) {
        let db = Database::new(
            "d",
            vec![
                table("a", &["id", "v"], &[]),
                table("b", &["a_id", "c_id", "w"], &[]),
                table("c", &["id", "z"], &[]),
            ],
        )
        .unwrap();
        let g = graph(
            &["a", "b", "c"],
            vec![edge("a.id", "b.a_id", 0.8), edge("b.c_id", "c.id", 0.7)],
        );
        (db, g)
    }

    #[test]
    fn bridge_keys_added() {
        let (db, g) = line_db();
        let sel = fill_schema(&[qc("a.v"), qc("c.z")].into(), &db, &g);
        let expect: BTreeSet<_> = ["a.v", "c.z", "a.id", "b.a_id", "b.c_id", "c.id"].map(qc).into();
        assert_eq!(sel.filled, expect);
        assert!(!sel.filled.contains(&qc("b.w")));
    }

    #[test]
    fn disconnected_pair_reported() {
        let (db, _) = line_db();
        let g = graph(&["a", "b", "c"], vec![edge("a.id", "b.a_id", 0.8)]);
        let sel = fill_schema(&[qc("a.v"), qc("c.z")].into(), &db, &g);
        assert_eq!(sel.disconnected_tables, vec![("a".to_string(), "c".to_string())]);
        assert_eq!(sel.filled, [qc("a.v"), qc("c.z")].into());
    }

    #[test]
    fn equal_hops_prefer_heavier_path() {
        let g = graph(
            &["s", "m1", "m2", "e"],
            vec![
                edge("s.k", "m1.k", 0.6),
                edge("m1.k", "e.k", 0.6),
                edge("s.k", "m2.k", 0.9),
                edge("m2.k", "e.k", 0.9),
            ],
        );
        let path = shortest_path(&g, "s", "e").unwrap();
        assert_eq!(path, vec![2, 3]);
        // Equal weights fall back to table-name order.
        let g = graph(
            &["s", "m1", "m2", "e"],
            vec![
                edge("s.k", "m2.k", 0.5),
                edge("m2.k", "e.k", 0.5),
                edge("s.k", "m1.k", 0.5),
                edge("m1.k", "e.k", 0.5),
            ],
        );
        assert_eq!(shortest_path(&g, "s", "e").unwrap(), vec![2, 3]);
    }

    #[test]
    fn declared_keys_between_selected_tables() {
        let child = Table::new(
            "child",
            vec![
                Column::infer("pid", vec![CellValue::from(1i64)]).unwrap(),
                Column::infer("x", vec![CellValue::from(1i64)]).unwrap(),
            ],
            vec![],
            vec![ForeignKey {
                column: "pid".into(),
                references: qc("parent.id"),
            }],
        )
        .unwrap();
        let db = Database::new("d", vec![table("parent", &["id", "y"], &[]), child]).unwrap();
        let sel = fill_schema(
            &[qc("child.x"), qc("parent.y")].into(),
            &db,
            &graph(&["parent", "child"], vec![]),
        );
        assert!(sel.filled.contains(&qc("child.pid")) && sel.filled.contains(&qc("parent.id")));
    }

    /// Exhaustive simple-path enumeration used as the oracle for path length.
    fn all_paths(g: &JoinGraph, from: &str, to: &str) -> Vec<Vec<usize>> {
        fn walk(
            g: &JoinGraph,
            at: &str,
            to: &str,
            seen: &mut Vec<String>,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if at == to {
                out.push(path.clone());
                return;
            }
            for (i, e) in g.edges.iter().enumerate() {
                let next = if e.left.belongs_to(at) {
                    e.right.key().0.clone()
                } else if e.right.belongs_to(at) {
                    e.left.key().0.clone()
                } else {
                    continue;
                };
                if seen.contains(&next) {
                    continue;
                }
                seen.push(next.clone());
                path.push(i);
                walk(g, &next, to, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
        let mut out = Vec::new();
        walk(g, from, to, &mut vec![from.to_string()], &mut Vec::new(), &mut out);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn shortest_path_matches_enumeration(raw in proptest::collection::vec((0usize..6, 0usize..6, 0u32..100), 0..10)) {
            let names = ["t0", "t1", "t2", "t3", "t4", "t5"];
            let mut seen = BTreeSet::new();
            let mut edges = Vec::new();
            for (a, b, w) in raw {
                if a == b || !seen.insert((a.min(b), a.max(b))) {
                    continue;
                }
                edges.push(edge(&format!("{}.k", names[a]), &format!("{}.k", names[b]), w as f64 / 100.0));
            }
            let g = graph(&names, edges);
            let got = shortest_path(&g, "t0", "t5");
            let paths = all_paths(&g, "t0", "t5");
            match got {
                None => prop_assert!(paths.is_empty()),
                Some(p) => {
                    let min = paths.iter().map(|p| p.len()).min().unwrap();
                    prop_assert_eq!(p.len(), min);
                    let w = |p: &Vec<usize>| p.iter().map(|&i| g.edges[i].weight).sum::<f64>();
                    let best = paths.iter().filter(|q| q.len() == min).map(w).fold(f64::MIN, f64::max);
                    prop_assert!((w(&p) - best).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn filled_is_superset(pick in proptest::collection::vec(any::<bool>(), 7)) {
            let (db, g) = line_db();
            let all = db.all_columns();
            let chosen: BTreeSet<_> = all.iter().zip(&pick).filter(|(_, p)| **p).map(|(c, _)| c.clone()).collect();
            let sel = fill_schema(&chosen, &db, &g);
            prop_assert!(sel.filled.is_superset(&sel.selected));
            prop_assert_eq!(&sel.selected, &chosen);
            for c in &sel.filled {
                prop_assert!(db.column(c).is_some());
            }
        }
    }
}
