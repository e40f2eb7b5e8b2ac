use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use fgtr_core::eval::{evaluate, GoldStandard, RetrievedItem};
use serde_json::Value;

use crate::output::Sink;
use crate::{fail, GlobalArgs, Outcome};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Retrieval output (JSON-lines, or a single document).
    #[arg(long)]
    pub retrieved: PathBuf,
    /// Gold standards: a benchmark JSON-lines file.
    #[arg(long)]
    pub gold: PathBuf,
    /// Also write per-question scores as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn json_lines(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(doc @ Value::Object(_)) = serde_json::from_str::<Value>(&text) {
        return Ok(vec![(1, doc)]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect()
}

/// A retrieval document, a bare `{qid, columns, sub_tables}` item, or a
/// gold record read as if it had been retrieved.
pub fn retrieved_item(doc: &Value) -> Option<RetrievedItem> {
    if doc.get("schema_selection").is_some() {
        return RetrievedItem::from_retrieval_json(&doc.to_string()).ok();
    }
    if let Ok(item) = serde_json::from_value::<RetrievedItem>(doc.clone()) {
        return Some(item);
    }
    serde_json::from_value::<GoldStandard>(doc.clone())
        .ok()
        .map(|g| RetrievedItem::from(&g))
}

pub fn run(args: &GlobalArgs, cmd: &EvalArgs) -> Result<Outcome> {
    let retrieved = json_lines(&cmd.retrieved)?
        .into_iter()
        .map(|(line, doc)| {
            retrieved_item(&doc).ok_or_else(|| {
                fail(
                    "malformed_retrieval",
                    format!("{} line {line} is not a retrieval record", cmd.retrieved.display()),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gold = json_lines(&cmd.gold)?
        .into_iter()
        .map(|(line, doc)| {
            serde_json::from_value::<GoldStandard>(doc)
                .map_err(|e| fail("malformed_gold", format!("{} line {line}: {e}", cmd.gold.display())))
        })
        .collect::<Result<Vec<_>>>()?;

    let report = evaluate(&retrieved, &gold)?;
    let mut sink = Sink::open(args, "report.json")?;
    sink.line(&serde_json::to_string(&report)?)?;
    sink.finish()?;
    if let Some(path) = &cmd.csv {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    Ok(Outcome::from_skips(report.skipped_count()))
}
