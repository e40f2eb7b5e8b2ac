//! Run-wide settings and seed derivation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::SourceFormat;

/// Row-set combination across a table's constrained columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    #[default]
    Union,
    Intersection,
}

impl std::str::FromStr for MergeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "union" => Ok(MergeMode::Union),
            "intersection" => Ok(MergeMode::Intersection),
            other => Err(format!("unknown merge mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Every knob of a run. Deserializable from a TOML/JSON config file; fields
/// left out take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub db_path: Option<PathBuf>,
    pub db_format: Option<SourceFormat>,
    pub artifact_dir: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,

    pub llm_url: Option<String>,
    pub llm_key: Option<String>,
    pub llm_model: String,
    pub embed_url: Option<String>,
    pub embed_key: Option<String>,
    pub embed_model: String,
    pub embed_dimension: usize,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,

    pub k_iterations: u32,
    pub theta: f64,
    pub sigma: f64,
    pub tau_join: f64,
    pub k_min: usize,
    pub merge_mode: MergeMode,
    pub row_cap: usize,
    pub seed: u64,
    pub mapping_temperature: f64,
    pub parsing_temperature: f64,
    pub hard_hints: bool,

    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            db_path: None,
            db_format: None,
            artifact_dir: None,
            prompt_dir: None,
            llm_url: None,
            llm_key: None,
            llm_model: "gpt-4o".into(),
            embed_url: None,
            embed_key: None,
            embed_model: "text-embedding-3-small".into(),
            embed_dimension: 1536,
            request_timeout_secs: 60,
            max_in_flight: 8,
            max_retries: 3,
            k_iterations: 5,
            theta: 0.6,
            sigma: 0.85,
            tau_join: 0.5,
            k_min: 3,
            merge_mode: MergeMode::Union,
            row_cap: 10_000,
            seed: 0,
            mapping_temperature: 0.2,
            parsing_temperature: 0.0,
            hard_hints: false,
            hnsw_m: 16,
            hnsw_ef_construction: 200,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_string()));
        if self.k_iterations == 0 {
            return fail("k_iterations must be at least 1");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return fail("theta must lie in (0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.sigma) {
            return fail("sigma must lie in [-1, 1]");
        }
        if !self.tau_join.is_finite() {
            return fail("tau_join must be finite");
        }
        if self.k_min == 0 {
            return fail("k_min must be at least 1");
        }
        if self.row_cap == 0 {
            return fail("row_cap must be at least 1");
        }
        if self.mapping_temperature < 0.0 || self.parsing_temperature < 0.0 {
            return fail("temperatures must be non-negative");
        }
        if self.hnsw_m < 2 || self.hnsw_ef_construction == 0 {
            return fail("hnsw_m must be >= 2 and hnsw_ef_construction >= 1");
        }
        if self.max_in_flight == 0 {
            return fail("max_in_flight must be at least 1");
        }
        Ok(())
    }
}

/// Named sub-seed of the run seed, e.g. `derive_seed(seed, "shuffle", i)`.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.update([0]);
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!((c.k_iterations, c.theta, c.sigma, c.tau_join), (5, 0.6, 0.85, 0.5));
        assert_eq!(c.row_cap, 10_000);
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            RunConfig {
                theta: 0.0,
                ..Default::default()
            },
            RunConfig {
                theta: 1.5,
                ..Default::default()
            },
            RunConfig {
                k_iterations: 0,
                ..Default::default()
            },
            RunConfig {
                sigma: 2.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn sub_seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, "shuffle", 0), derive_seed(1, "shuffle", 0));
        assert_ne!(derive_seed(1, "shuffle", 0), derive_seed(1, "shuffle", 1));
        assert_ne!(derive_seed(1, "shuffle", 0), derive_seed(1, "hnsw", 0));
        assert_ne!(derive_seed(1, "shuffle", 0), derive_seed(2, "shuffle", 0));
    }

    #[test]
    fn partial_config_file() {
        let c: RunConfig = serde_json::from_str(r#"{"theta": 0.4, "merge_mode": "intersection"}"#).unwrap();
        assert_eq!(c.theta, 0.4);
        assert_eq!(c.merge_mode, MergeMode::Intersection);
        assert_eq!(c.k_iterations, 5);
    }
}
