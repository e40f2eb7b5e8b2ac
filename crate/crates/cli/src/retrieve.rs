use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use fgtr_core::cell_retrieval::retrieve;
use fgtr_core::preprocess::{load_artifacts, Artifacts};
use fgtr_core::schema_retrieval::RetrievalContext;
use fgtr_core::RunConfig;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::Sink;
use crate::{fail, settings, GlobalArgs, Outcome};

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["question", "questions"])))]
pub struct RetrieveArgs {
    /// A single question; prints one JSON document.
    #[arg(long)]
    pub question: Option<String>,
    /// JSON-lines file of `{"qid", "question"}` objects (benchmark files
    /// work as-is); prints one JSON line per question in input order.
    #[arg(long)]
    pub questions: Option<PathBuf>,
}

/// One batch input line.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchQuestion {
    pub qid: String,
    pub question: String,
}

/// Lines are JSON objects with `question` and `qid` (or `id`/`question_id`),
/// bare JSON strings, or plain text. Ids default to the line's position
/// among non-blank lines.
pub fn parse_batch(text: &str) -> Result<Vec<BatchQuestion>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let (qid, question) = match serde_json::from_str::<Value>(line) {
                Ok(Value::Object(obj)) => {
                    let question = obj
                        .get("question")
                        .and_then(Value::as_str)
                        .ok_or_else(|| fail("malformed_questions", format!("line {} has no `question`", i + 1)))?;
                    let qid = match ["qid", "question_id", "id"].iter().find_map(|k| obj.get(*k)) {
                        Some(Value::String(s)) => Some(s.clone()),
                        Some(Value::Number(n)) => Some(n.to_string()),
                        _ => None,
                    };
                    (qid, question.to_string())
                }
                Ok(Value::String(s)) => (None, s),
                _ => (None, line.trim().to_string()),
            };
            Ok(BatchQuestion {
                qid: qid.unwrap_or_else(|| i.to_string()),
                question,
            })
        })
        .collect()
}

fn load(config: &RunConfig) -> Result<Artifacts> {
    let dir = config.artifact_dir.as_ref().ok_or_else(|| {
        fail(
            "artifacts_missing",
            "no artifact directory given (--artifacts or artifact_dir)",
        )
    })?;
    load_artifacts(dir).with_context(|| format!("loading artifacts from {}", dir.display()))
}

pub fn run(args: &GlobalArgs, config: &RunConfig, cmd: &RetrieveArgs) -> Result<Outcome> {
    let artifacts = load(config)?;
    let db_path = config
        .db_path
        .clone()
        .or_else(|| artifacts.manifest.db_path.clone())
        .ok_or_else(|| fail("db_not_found", "artifacts record no database path; pass --db"))?;
    let format = config.db_format.or(artifacts.manifest.db_format);
    let (db, _, _) = settings::database(&db_path, format)?;
    let gateway = settings::gateway(config, args)?;
    let prompts = settings::prompts(config)?;
    let ctx = RetrievalContext {
        db: &db,
        artifacts: &artifacts,
        gateway: &gateway,
        prompts: &prompts,
    };

    let mut sink = Sink::open(args, "retrieval.jsonl")?;
    if let Some(q) = &cmd.question {
        let result = retrieve(q, &ctx, config)?;
        sink.line(&serde_json::to_string(&result)?)?;
        sink.finish()?;
        return Ok(Outcome::Success);
    }

    let path = cmd.questions.as_ref().expect("clap enforces one input");
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let batch = parse_batch(&text)?;
    let results: Vec<_> = batch
        .par_iter()
        .map(|q| {
            retrieve(&q.question, &ctx, config).map(|mut r| {
                r.qid = Some(q.qid.clone());
                r
            })
        })
        .collect();
    let mut failures = 0;
    for (q, result) in batch.iter().zip(results) {
        match result {
            Ok(r) => sink.line(&serde_json::to_string(&r)?)?,
            Err(e) => {
                failures += 1;
                eprintln!("{}", json!({"code": e.code(), "qid": q.qid, "message": e.to_string()}));
            }
        }
    }
    sink.finish()?;
    Ok(Outcome::from_skips(failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_line_forms() {
        let text =
            "{\"qid\": \"a\", \"question\": \"q1\"}\n\n\"q2\"\nplain q3\n{\"question_id\": 7, \"question\": \"q4\"}\n";
        let b = parse_batch(text).unwrap();
        let got: Vec<_> = b.iter().map(|q| (q.qid.as_str(), q.question.as_str())).collect();
        assert_eq!(got, [("a", "q1"), ("1", "q2"), ("2", "plain q3"), ("7", "q4")]);
        assert_eq!(
            crate::code_of(&parse_batch("{\"qid\": 1}").unwrap_err()),
            "malformed_questions"
        );
    }
}
