//! On-disk layout of preprocessing output.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/schema.json
//! <dir>/profiles.json
//! <dir>/joins.json
//! <dir>/index/<table>.<column>.hnsw
//! <dir>/rowmap/<table>.<column>.json
//! ```
//!
//! A column is complete once its row map is written; the graph file goes
//! first. Interrupted builds resume by skipping complete columns.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::llm::{LlmError, LlmGateway, PromptSet};
use crate::model::{Database, QualifiedColumn, SourceFormat};

use super::hnsw::{Hnsw, HnswParams};
use super::index::{build_column_index, column_seed, CellIndex, ColumnIndex, IndexError, ValueRows};
use super::joins::{discover_joins, JoinGraph};
use super::profile::{profile_columns, ColumnProfile};
use super::semantize::{semantize_schema, SemanticSchema};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact `{0}` is missing")]
    Missing(PathBuf),
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact `{path}`: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl ArtifactError {
    pub fn code(&self) -> &'static str {
        match self {
            ArtifactError::Missing(_) => "artifacts_missing",
            ArtifactError::Io { .. } => "io_error",
            ArtifactError::Malformed { .. } => "artifacts_malformed",
            ArtifactError::Llm(e) => e.code(),
            ArtifactError::Index(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub database: String,
    pub db_path: Option<PathBuf>,
    pub db_format: Option<SourceFormat>,
    pub seed: u64,
    pub embed_dimension: usize,
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub tau_join: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    pub seed: u64,
    pub tau_join: f64,
    pub hnsw: HnswParams,
    pub temperature: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tau_join: 0.5,
            hnsw: HnswParams::default(),
            temperature: 0.0,
        }
    }
}

/// Everything the online stage needs besides the database itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub manifest: Manifest,
    pub profiles: Vec<ColumnProfile>,
    pub schema: SemanticSchema,
    pub joins: JoinGraph,
    pub index: CellIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub tables: usize,
    pub columns: usize,
    pub indexed_values: usize,
    pub join_edges: usize,
}

impl Artifacts {
    pub fn summary(&self) -> PreprocessSummary {
        PreprocessSummary {
            tables: self.joins.nodes.len(),
            columns: self.profiles.len(),
            indexed_values: self.index.embedded_value_count(),
            join_edges: self.joins.edges.len(),
        }
    }
}

fn manifest_for(db: &Database, gateway: &LlmGateway, opts: &PreprocessOptions) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        database: db.name().to_string(),
        db_path: None,
        db_format: None,
        seed: opts.seed,
        embed_dimension: gateway.embedding_dimension().unwrap_or(0),
        hnsw_m: opts.hnsw.m,
        hnsw_ef_construction: opts.hnsw.ef_construction,
        tau_join: opts.tau_join,
    }
}

fn column_params(opts: &PreprocessOptions, column: &QualifiedColumn) -> HnswParams {
    HnswParams {
        seed: column_seed(opts.seed, column),
        ..opts.hnsw
    }
}

/// Full offline pass held in memory.
pub fn preprocess(
    db: &Database,
    gateway: &LlmGateway,
    prompts: &PromptSet,
    opts: &PreprocessOptions,
) -> Result<Artifacts, ArtifactError> {
    let profiles = profile_columns(db);
    let schema = semantize_schema(db, &profiles, gateway, prompts, opts.temperature);
    let joins = discover_joins(db, &profiles, &schema, gateway, opts.tau_join)?;
    let index = super::index::build_cell_index(
        db,
        gateway,
        HnswParams {
            seed: opts.seed,
            ..opts.hnsw
        },
    )?;
    Ok(Artifacts {
        manifest: manifest_for(db, gateway, opts),
        profiles,
        schema,
        joins,
        index,
    })
}

/// Offline pass that persists as it goes and reuses finished columns from an
/// earlier run with the same manifest.
pub fn preprocess_into(
    dir: &Path,
    db: &Database,
    gateway: &LlmGateway,
    prompts: &PromptSet,
    opts: &PreprocessOptions,
    source: Option<(PathBuf, SourceFormat)>,
) -> Result<Artifacts, ArtifactError> {
    let mut manifest = manifest_for(db, gateway, opts);
    if let Some((path, format)) = source {
        manifest.db_path = Some(path);
        manifest.db_format = Some(format);
    }
    let previous: Option<Manifest> = read_json(&dir.join("manifest.json")).ok();
    let reuse = previous.as_ref().is_some_and(|p| same_index_settings(p, &manifest));
    if !reuse {
        for sub in ["index", "rowmap"] {
            let p = dir.join(sub);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(|source| ArtifactError::Io {
                    path: p.clone(),
                    source,
                })?;
            }
        }
    }
    create_dir(dir)?;
    create_dir(&dir.join("index"))?;
    create_dir(&dir.join("rowmap"))?;
    write_json(&dir.join("manifest.json"), &manifest)?;

    let profiles = profile_columns(db);
    write_json(&dir.join("profiles.json"), &profiles)?;
    let schema = semantize_schema(db, &profiles, gateway, prompts, opts.temperature);
    write_json(&dir.join("schema.json"), &schema)?;
    let joins = discover_joins(db, &profiles, &schema, gateway, opts.tau_join)?;
    write_json(&dir.join("joins.json"), &joins)?;

    let mut built = Vec::new();
    let mut failures = Vec::new();
    for table in db.tables() {
        for col in table.columns() {
            let qc = table.qualified(col);
            if reuse {
                if let Ok(done) = read_column(dir, &qc) {
                    built.push(done);
                    continue;
                }
            }
            match build_column_index(qc.clone(), col, gateway, column_params(opts, &qc)) {
                Ok(ci) => {
                    write_column(dir, &ci)?;
                    built.push(ci);
                }
                Err(e) => {
                    log::error!("{e}; rerun to resume from the finished columns");
                    failures.push(e);
                }
            }
        }
    }
    if let Some(first) = failures.into_iter().next() {
        return Err(first.into());
    }
    Ok(Artifacts {
        manifest,
        profiles,
        schema,
        joins,
        index: CellIndex::from_columns(built),
    })
}

fn same_index_settings(a: &Manifest, b: &Manifest) -> bool {
    a.format_version == b.format_version
        && a.database == b.database
        && a.seed == b.seed
        && a.embed_dimension == b.embed_dimension
        && a.hnsw_m == b.hnsw_m
        && a.hnsw_ef_construction == b.hnsw_ef_construction
}

pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), ArtifactError> {
    create_dir(dir)?;
    for sub in ["index", "rowmap"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|source| ArtifactError::Io {
                path: p.clone(),
                source,
            })?;
        }
        create_dir(&p)?;
    }
    write_json(&dir.join("manifest.json"), &artifacts.manifest)?;
    write_json(&dir.join("profiles.json"), &artifacts.profiles)?;
    write_json(&dir.join("schema.json"), &artifacts.schema)?;
    write_json(&dir.join("joins.json"), &artifacts.joins)?;
    for ci in artifacts.index.columns() {
        write_column(dir, ci)?;
    }
    Ok(())
}

pub fn load_artifacts(dir: &Path) -> Result<Artifacts, ArtifactError> {
    if !dir.is_dir() {
        return Err(ArtifactError::Missing(dir.to_path_buf()));
    }
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ArtifactError::Malformed {
            path: dir.join("manifest.json"),
            message: format!("unsupported format version {}", manifest.format_version),
        });
    }
    let profiles: Vec<ColumnProfile> = read_json(&dir.join("profiles.json"))?;
    let schema: SemanticSchema = read_json(&dir.join("schema.json"))?;
    let joins: JoinGraph = read_json(&dir.join("joins.json"))?;
    let mut columns = Vec::with_capacity(profiles.len());
    for p in &profiles {
        columns.push(read_column(dir, &p.column)?);
    }
    Ok(Artifacts {
        manifest,
        profiles,
        schema,
        joins,
        index: CellIndex::from_columns(columns),
    })
}

/// File stem for a column: `<table>.<column>` with unsafe bytes %-encoded.
pub fn column_file_stem(column: &QualifiedColumn) -> String {
    let mut out = String::new();
    for (i, part) in [column.table(), column.column()].into_iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        for b in part.bytes() {
            let safe = b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b' ' | b'(' | b')');
            if safe {
                out.push(b as char);
            } else {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct RowMapFile {
    table: String,
    column: String,
    numeric: bool,
    entries: Vec<ValueRows>,
}

fn write_column(dir: &Path, ci: &ColumnIndex) -> Result<(), ArtifactError> {
    let stem = column_file_stem(&ci.column);
    let graph_path = dir.join("index").join(format!("{stem}.hnsw"));
    if let Some(ann) = &ci.ann {
        let mut bytes = Vec::new();
        ann.write_to(&mut bytes).expect("writing to a Vec cannot fail");
        write_atomic(&graph_path, &bytes)?;
    }
    let file = RowMapFile {
        table: ci.column.table().to_string(),
        column: ci.column.column().to_string(),
        numeric: ci.numeric,
        entries: ci.entries.clone(),
    };
    write_json(&dir.join("rowmap").join(format!("{stem}.json")), &file)
}

fn read_column(dir: &Path, column: &QualifiedColumn) -> Result<ColumnIndex, ArtifactError> {
    let stem = column_file_stem(column);
    let map_path = dir.join("rowmap").join(format!("{stem}.json"));
    let file: RowMapFile = read_json(&map_path)?;
    let malformed = |path: &Path, message: String| ArtifactError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let qc = QualifiedColumn::new(file.table, file.column).map_err(|e| malformed(&map_path, e.to_string()))?;
    if &qc != column {
        return Err(malformed(&map_path, format!("holds `{qc}`, expected `{column}`")));
    }
    let ann = if file.numeric {
        None
    } else {
        let graph_path = dir.join("index").join(format!("{stem}.hnsw"));
        let f = fs::File::open(&graph_path).map_err(|e| io_or_missing(&graph_path, e))?;
        let graph = Hnsw::read_from(&mut BufReader::new(f)).map_err(|e| malformed(&graph_path, e.to_string()))?;
        if graph.len() != file.entries.len() {
            return Err(malformed(
                &graph_path,
                format!("{} graph nodes for {} values", graph.len(), file.entries.len()),
            ));
        }
        Some(graph)
    };
    Ok(ColumnIndex {
        column: qc,
        numeric: file.numeric,
        entries: file.entries,
        ann,
    })
}

fn io_or_missing(path: &Path, e: std::io::Error) -> ArtifactError {
    if e.kind() == std::io::ErrorKind::NotFound {
        ArtifactError::Missing(path.to_path_buf())
    } else {
        ArtifactError::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }
}

fn create_dir(p: &Path) -> Result<(), ArtifactError> {
    fs::create_dir_all(p).map_err(|source| ArtifactError::Io {
        path: p.to_path_buf(),
        source,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let tmp = path.with_extension("tmp");
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    {
        let mut w = BufWriter::new(fs::File::create(&tmp).map_err(io)?);
        w.write_all(bytes).map_err(io)?;
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ArtifactError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let f = fs::File::open(path).map_err(|e| io_or_missing(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| ArtifactError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
