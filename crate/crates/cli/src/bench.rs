use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use fgtr_core::bench_builder::{
    augment, locate_database, materialize_gold, parse_dataset, AugmentDiagnostic, BenchError, BenchSample,
    DatasetEntry, SkipRecord, SqlEngine, SynonymMap,
};
use fgtr_core::model::{load_database, save_csv_dir, Database, SourceFormat};
use fgtr_core::RunConfig;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{fail, GlobalArgs, Outcome};

/// (table, column, original value, replacement)
type Replacement = (String, String, String, String);

pub const SAMPLES_FILE: &str = "bench.jsonl";
pub const SKIPS_FILE: &str = "skipped.jsonl";
pub const AUGMENT_FILE: &str = "augment.jsonl";

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Spider/BIRD-style JSON array of `{question, db_id, query}`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding one database per `db_id`.
    #[arg(long)]
    pub db_dir: PathBuf,
    /// JSON object mapping cell values to synonyms.
    #[arg(long, value_name = "SYNONYMS")]
    pub augment: Option<PathBuf>,
}

/// Per-database augmentation record, one JSON line each.
#[derive(Serialize)]
struct AugmentLog<'a> {
    db_id: &'a str,
    replacements: &'a [Replacement],
    diagnostics: &'a [AugmentDiagnostic],
}

struct DbOutput {
    db_id: String,
    samples: Vec<(usize, BenchSample)>,
    skips: Vec<(usize, SkipRecord)>,
    augmented: Option<(Database, Vec<Replacement>, Vec<AugmentDiagnostic>)>,
}

fn skip_all(db_id: &str, entries: &[(usize, DatasetEntry)], err: &BenchError) -> DbOutput {
    DbOutput {
        db_id: db_id.to_string(),
        samples: Vec::new(),
        skips: entries.iter().map(|(i, e)| (*i, SkipRecord::new(e, err))).collect(),
        augmented: None,
    }
}

fn build_one(
    db_dir: &Path,
    db_id: &str,
    entries: &[(usize, DatasetEntry)],
    synonyms: Option<&SynonymMap>,
    seed: u64,
) -> DbOutput {
    let Some((path, format)) = locate_database(db_dir, db_id) else {
        let err = BenchError::Model(fgtr_core::model::ModelError::NotFound(
            db_dir.join(db_id).display().to_string(),
        ));
        return skip_all(db_id, entries, &err);
    };
    let loaded = load_database(&path, format).map_err(BenchError::from).and_then(|db| {
        let engine = match format {
            SourceFormat::Sqlite => SqlEngine::open(&path)?,
            SourceFormat::CsvDir => SqlEngine::from_database(&db)?,
        };
        Ok((db, engine))
    });
    let (db, engine) = match loaded {
        Ok(x) => x,
        Err(e) => return skip_all(db_id, entries, &e),
    };

    let mut samples = Vec::new();
    let mut skips = Vec::new();
    for (i, entry) in entries {
        match materialize_gold(entry, &db, &engine) {
            Ok(s) => samples.push((*i, s)),
            Err(e) => {
                log::info!("skipping {}: {e}", entry.qid);
                skips.push((*i, SkipRecord::new(entry, &e)));
            }
        }
    }
    let mut augmented = None;
    if let Some(map) = synonyms {
        let plain: Vec<BenchSample> = samples.iter().map(|(_, s)| s.clone()).collect();
        match augment(&db, &plain, map, seed) {
            Ok(a) => {
                for ((_, slot), s) in samples.iter_mut().zip(a.samples) {
                    *slot = s;
                }
                augmented = Some((a.db, a.replacements, a.diagnostics));
            }
            Err(e) => log::warn!("augmentation of {db_id} failed, samples kept as is: {e}"),
        }
    }
    DbOutput {
        db_id: db_id.to_string(),
        samples,
        skips,
        augmented,
    }
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &GlobalArgs, config: &RunConfig, cmd: &BenchArgs) -> Result<Outcome> {
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| fail("invalid_argument", "bench-build needs --out"))?;
    let text = std::fs::read_to_string(&cmd.dataset).with_context(|| format!("reading {}", cmd.dataset.display()))?;
    let entries = parse_dataset(&text)?;
    if !cmd.db_dir.is_dir() {
        return Err(fail(
            "db_not_found",
            format!("database directory {} not found", cmd.db_dir.display()),
        ));
    }
    let synonyms = match &cmd.augment {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(SynonymMap::from_json(&text)?)
        }
        None => None,
    };

    let mut groups: BTreeMap<&str, Vec<(usize, DatasetEntry)>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(e.db_id.as_str()).or_default().push((i, e.clone()));
    }
    let outputs: Vec<DbOutput> = groups
        .par_iter()
        .map(|(db_id, group)| build_one(&cmd.db_dir, db_id, group, synonyms.as_ref(), config.seed))
        .collect();

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut samples: Vec<(usize, &BenchSample)> = Vec::new();
    let mut skips: Vec<(usize, &SkipRecord)> = Vec::new();
    let mut diagnostics = 0;
    let mut logs = Vec::new();
    for o in &outputs {
        samples.extend(o.samples.iter().map(|(i, s)| (*i, s)));
        skips.extend(o.skips.iter().map(|(i, s)| (*i, s)));
        if let Some((db, replacements, diags)) = &o.augmented {
            diagnostics += diags.len();
            if !replacements.is_empty() {
                let dir = out.join("databases").join(&o.db_id);
                save_csv_dir(db, &dir).with_context(|| format!("writing augmented database {}", dir.display()))?;
            }
            logs.push(AugmentLog {
                db_id: &o.db_id,
                replacements,
                diagnostics: diags,
            });
        }
    }
    samples.sort_by_key(|(i, _)| *i);
    skips.sort_by_key(|(i, _)| *i);
    write_lines(&out.join(SAMPLES_FILE), samples.iter().map(|(_, s)| s))?;
    write_lines(&out.join(SKIPS_FILE), skips.iter().map(|(_, s)| s))?;
    if synonyms.is_some() {
        write_lines(&out.join(AUGMENT_FILE), &logs)?;
    }
    println!(
        "{}",
        json!({"samples": samples.len(), "skipped": skips.len(), "augment_diagnostics": diagnostics, "out": out})
    );
    Ok(Outcome::from_skips(skips.len() + diagnostics))
}
