use anyhow::Result;
use fgtr_core::preprocess::{preprocess_into, HnswParams, PreprocessOptions};
use fgtr_core::RunConfig;
use serde_json::json;

use crate::{fail, settings, GlobalArgs, Outcome};

pub fn run(args: &GlobalArgs, config: &RunConfig) -> Result<Outcome> {
    let db_path = config
        .db_path
        .as_ref()
        .ok_or_else(|| fail("invalid_argument", "no database given (--db or db_path)"))?;
    let dir = args.out.as_ref().or(config.artifact_dir.as_ref()).ok_or_else(|| {
        fail(
            "invalid_argument",
            "no artifact directory given (--out, --artifacts or artifact_dir)",
        )
    })?;
    let (db, path, format) = settings::database(db_path, config.db_format)?;
    let gateway = settings::gateway(config, args)?;
    let prompts = settings::prompts(config)?;
    let opts = PreprocessOptions {
        seed: config.seed,
        tau_join: config.tau_join,
        hnsw: HnswParams {
            m: config.hnsw_m,
            ef_construction: config.hnsw_ef_construction,
            seed: config.seed,
        },
        ..PreprocessOptions::default()
    };
    log::info!("preprocessing {} into {}", db.name(), dir.display());
    let artifacts = preprocess_into(dir, &db, &gateway, &prompts, &opts, Some((path, format)))?;
    let summary = artifacts.summary();
    println!(
        "{}",
        json!({
            "artifact_dir": dir,
            "tables": summary.tables,
            "columns": summary.columns,
            "indexed_values": summary.indexed_values,
            "join_edges": summary.join_edges,
        })
    );
    Ok(Outcome::Success)
}
