//! Hierarchical navigable small-world graph over unit vectors, scored by dot
//! product (cosine similarity).

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAGIC: &[u8; 5] = b"FGTR1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            seed: 0,
        }
    }
}

/// Search breadth used for a top-`k` query.
pub fn ef_search(k: usize) -> usize {
    64.max(4 * k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f32,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    vector: Vec<f32>,
    links: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct Hnsw {
    dim: usize,
    params: HnswParams,
    nodes: Vec<Node>,
    entry: Option<u32>,
    max_level: usize,
    rng: ChaCha8Rng,
}

impl PartialEq for Hnsw {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.params == other.params
            && self.entry == other.entry
            && self.max_level == other.max_level
            && self.nodes == other.nodes
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Hnsw {
    pub fn new(dim: usize, params: HnswParams) -> Self {
        assert!(params.m >= 2, "hnsw m must be at least 2");
        Self {
            dim,
            params,
            nodes: Vec::new(),
            entry: None,
            max_level: 0,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn vector(&self, id: u32) -> &[f32] {
        &self.nodes[id as usize].vector
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn random_level(&mut self) -> usize {
        let ml = 1.0 / (self.params.m as f64).ln();
        let u: f64 = self.rng.random::<f64>();
        let level = (-(1.0 - u).ln() * ml).floor();
        (level as usize).min(32)
    }

    fn sim(&self, q: &[f32], id: u32) -> f32 {
        dot(q, &self.nodes[id as usize].vector)
    }

    /// Best-first search of one layer; returns up to `ef` nodes, best first.
    fn search_layer(&self, q: &[f32], entry: &[Scored], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited: HashSet<u32> = entry.iter().map(|s| s.id).collect();
        let mut frontier: BinaryHeap<Scored> = entry.iter().copied().collect();
        let mut best: BinaryHeap<Reverse<Scored>> = entry.iter().copied().map(Reverse).collect();
        while best.len() > ef {
            best.pop();
        }
        while let Some(cur) = frontier.pop() {
            let worst = best.peek().map(|r| r.0.sim).unwrap_or(f32::NEG_INFINITY);
            if cur.sim < worst && best.len() >= ef {
                break;
            }
            for &n in &self.nodes[cur.id as usize].links[level] {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored {
                    sim: self.sim(q, n),
                    id: n,
                };
                let worst = best.peek().map(|r| r.0.sim).unwrap_or(f32::NEG_INFINITY);
                if best.len() < ef || s.sim > worst {
                    frontier.push(s);
                    best.push(Reverse(s));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Neighbor-selection heuristic: keep a candidate only if it is closer to
    /// the base than to every neighbor kept so far, then top up with the
    /// pruned ones.
    fn select_neighbors(&self, candidates: &[Scored], limit: usize) -> Vec<u32> {
        let mut kept: Vec<Scored> = Vec::with_capacity(limit);
        let mut pruned = Vec::new();
        for &c in candidates {
            if kept.len() >= limit {
                break;
            }
            let cv = &self.nodes[c.id as usize].vector;
            let diverse = kept.iter().all(|k| dot(cv, &self.nodes[k.id as usize].vector) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= limit {
                break;
            }
            kept.push(c);
        }
        kept.into_iter().map(|s| s.id).collect()
    }

    pub fn insert(&mut self, vector: Vec<f32>) -> u32 {
        assert_eq!(vector.len(), self.dim, "vector dimension mismatch");
        let id = self.nodes.len() as u32;
        let level = self.random_level();
        self.nodes.push(Node {
            vector,
            links: vec![Vec::new(); level + 1],
        });
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return id;
        };
        let q = self.nodes[id as usize].vector.clone();
        let mut ep = vec![Scored {
            sim: self.sim(&q, entry),
            id: entry,
        }];
        for l in ((level + 1)..=self.max_level).rev() {
            ep = self.search_layer(&q, &ep, 1, l);
        }
        for l in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&q, &ep, self.params.ef_construction, l);
            let neighbors = self.select_neighbors(&found, self.params.m);
            self.nodes[id as usize].links[l] = neighbors.clone();
            for n in neighbors {
                self.link_back(n, id, l);
            }
            ep = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
        id
    }

    fn link_back(&mut self, from: u32, to: u32, level: usize) {
        let limit = self.max_links(level);
        let links = &mut self.nodes[from as usize].links[level];
        links.push(to);
        if links.len() <= limit {
            return;
        }
        let base = self.nodes[from as usize].vector.clone();
        let mut scored: Vec<Scored> = self.nodes[from as usize].links[level]
            .iter()
            .map(|&n| Scored {
                sim: dot(&base, &self.nodes[n as usize].vector),
                id: n,
            })
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&scored, limit);
        self.nodes[from as usize].links[level] = kept;
    }

    /// Approximate top-`k` by similarity, best first.
    pub fn search(&self, query: &[f32], k: usize, ef: usize) -> Vec<(u32, f32)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let mut ep = vec![Scored {
            sim: self.sim(query, entry),
            id: entry,
        }];
        for l in (1..=self.max_level).rev() {
            ep = self.search_layer(query, &ep, 1, l);
        }
        let found = self.search_layer(query, &ep, ef.max(k), 0);
        found.into_iter().take(k).map(|s| (s.id, s.sim)).collect()
    }

    /// Exact top-`k` by full scan.
    pub fn brute_force(&self, query: &[f32], k: usize) -> Vec<(u32, f32)> {
        let mut all: Vec<Scored> = (0..self.nodes.len() as u32)
            .map(|id| Scored {
                sim: self.sim(query, id),
                id,
            })
            .collect();
        all.sort_by(|a, b| b.cmp(a));
        all.into_iter().take(k).map(|s| (s.id, s.sim)).collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u32::<LittleEndian>(self.params.m as u32)?;
        w.write_u32::<LittleEndian>(self.params.ef_construction as u32)?;
        w.write_u64::<LittleEndian>(self.params.seed)?;
        w.write_u32::<LittleEndian>(self.nodes.len() as u32)?;
        w.write_i64::<LittleEndian>(self.entry.map_or(-1, i64::from))?;
        w.write_u32::<LittleEndian>(self.max_level as u32)?;
        for node in &self.nodes {
            for &x in &node.vector {
                w.write_f32::<LittleEndian>(x)?;
            }
            w.write_u32::<LittleEndian>(node.links.len() as u32)?;
            for layer in &node.links {
                w.write_u32::<LittleEndian>(layer.len() as u32)?;
                for &n in layer {
                    w.write_u32::<LittleEndian>(n)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not an FGTR1 index file"));
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let ef_construction = r.read_u32::<LittleEndian>()? as usize;
        let seed = r.read_u64::<LittleEndian>()?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let entry = r.read_i64::<LittleEndian>()?;
        let max_level = r.read_u32::<LittleEndian>()? as usize;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut vector = vec![0f32; dim];
            r.read_f32_into::<LittleEndian>(&mut vector)?;
            let levels = r.read_u32::<LittleEndian>()? as usize;
            let mut links = Vec::with_capacity(levels);
            for _ in 0..levels {
                let n = r.read_u32::<LittleEndian>()? as usize;
                let mut layer = vec![0u32; n];
                r.read_u32_into::<LittleEndian>(&mut layer)?;
                if layer.iter().any(|&x| x as usize >= count) {
                    return Err(bad("link target out of range"));
                }
                links.push(layer);
            }
            nodes.push(Node { vector, links });
        }
        let entry = if entry < 0 { None } else { Some(entry as u32) };
        if entry.is_some_and(|e| e as usize >= count) {
            return Err(bad("entry point out of range"));
        }
        let params = HnswParams {
            m,
            ef_construction,
            seed,
        };
        // The RNG only drives level draws for future inserts; reseeding from
        // (seed, count) keeps reloaded graphs deterministic.
        let rng = ChaCha8Rng::seed_from_u64(seed ^ (count as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Ok(Self {
            dim,
            params,
            nodes,
            entry,
            max_level,
            rng,
        })
    }
}
