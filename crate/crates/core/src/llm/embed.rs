use std::collections::HashMap;
use std::sync::Arc;

use super::LlmError;

pub const DEFAULT_DIMENSION: usize = 64;

/// Unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. A zero vector is rejected as non-finite after
    /// normalization would divide by zero.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, LlmError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(LlmError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LlmError::NonFinite);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

/// A text-embedding backend. Vectors need not be normalized; the gateway
/// does that.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

/// Deterministic embedder: signed feature hashing of lowercase character
/// n-grams (n = 2..=4) plus whole words, into a fixed number of dimensions.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, 0)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    fn add(&self, out: &mut [f64], feature: &[u8], weight: f64) {
        let h = fnv1a(self.seed, feature);
        let idx = (h % self.dimension as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        out[idx] += sign * weight;
        // A second projection per feature spreads mass and reduces collisions.
        let h2 = splitmix(h);
        let idx2 = (h2 % self.dimension as u64) as usize;
        let sign2 = if (h2 >> 63) == 0 { 1.0 } else { -1.0 };
        out[idx2] += sign2 * weight * 0.5;
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        let lower = text.trim().to_lowercase();
        let padded: Vec<char> = format!("^{lower}$").chars().collect();
        for n in 2..=4 {
            for window in padded.windows(n) {
                let gram: String = window.iter().collect();
                self.add(&mut out, gram.as_bytes(), 1.0);
            }
        }
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let mut tagged = Vec::with_capacity(word.len() + 2);
            tagged.extend_from_slice(b"w:");
            tagged.extend_from_slice(word.as_bytes());
            self.add(&mut out, &tagged, 2.0);
        }
        if out.iter().all(|&v| v == 0.0) {
            self.add(&mut out, b"<empty>", 1.0);
        }
        out
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Wraps an embedder with a synonym table: a text listed as an alias is
/// embedded exactly as its canonical form, so `"LA"` can be made to land on
/// `"Los Angeles"`. Lookups are case-insensitive.
#[derive(Clone)]
pub struct SynonymEmbedder {
    inner: Arc<dyn Embedder>,
    aliases: HashMap<String, String>,
}

impl SynonymEmbedder {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self {
            inner,
            aliases: HashMap::new(),
        }
    }

    pub fn alias(mut self, alias: &str, canonical: &str) -> Self {
        self.aliases.insert(alias.trim().to_lowercase(), canonical.to_string());
        self
    }
}

impl Embedder for SynonymEmbedder {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let mapped: Vec<String> = texts
            .iter()
            .map(|t| {
                self.aliases
                    .get(&t.trim().to_lowercase())
                    .cloned()
                    .unwrap_or_else(|| t.clone())
            })
            .collect();
        self.inner.embed(&mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(e: &HashEmbedder, s: &str) -> EmbeddingVector {
        EmbeddingVector::normalized(e.vector(s)).unwrap()
    }

    #[test]
    fn deterministic_and_fixed_dimension() {
        let e = HashEmbedder::default();
        assert_eq!(e.vector("abc"), e.vector("abc"));
        assert_eq!(e.vector("abc").len(), 64);
        assert_ne!(e.vector("abc"), HashEmbedder::new(64, 7).vector("abc"));
        assert!(e.vector("").iter().any(|&v| v != 0.0));
    }

    #[test]
    fn similar_strings_are_closer() {
        let e = HashEmbedder::default();
        let a = unit(&e, "Contra Costa");
        let b = unit(&e, "contra costa county");
        let c = unit(&e, "Yolo");
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn synonym_table_maps_alias() {
        let base: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let syn = SynonymEmbedder::new(base.clone()).alias("LA", "Los Angeles");
        let got = syn.embed(&["la".into()]).unwrap();
        assert_eq!(got[0], base.embed(&["Los Angeles".into()]).unwrap()[0]);
    }

    #[test]
    fn cosine_bounds() {
        let e = HashEmbedder::default();
        let words = ["a", "bb", "Los Angeles", "x y z", "12345"];
        for a in words {
            for b in words {
                let c = cosine(&unit(&e, a), &unit(&e, b));
                assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
