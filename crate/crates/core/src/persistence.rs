//! Run directories: a manifest plus JSONL/JSON artifacts.
//!
//! A run is complete once `manifest.json` exists. Writers remove the manifest
//! before touching any artifact and write it again last, with a SHA-256 for
//! every artifact, so an interrupted update leaves an incomplete run rather
//! than a stale one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answer::AnswerValue;
use crate::baselines::TieRule;
use crate::dfa::Dfa;
use crate::error::PersistError;
use crate::evaluation::{DfaScore, DifficultyClass, ResultsRow};
use crate::model_client::{write_atomic, EndpointConfig, Transcript};
use crate::prompts::PromptFormat;
use crate::taskgen::{GeneratedTask, PublicTaskSet, TaskConfig, TaskKind, TaskSet};

pub const SCHEMA_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u64 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const DFAS: &str = "dfas.jsonl";
pub const TASKS: &str = "tasks.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const RESULTS_TABLE: &str = "results_table.json";
pub const SIGNIFICANCE: &str = "significance.json";
pub const DIFFICULTY: &str = "difficulty.json";

/// Every artifact a run may hold, in write order.
pub const ARTIFACTS: [&str; 8] =
    [DFAS, TASKS, PREDICTIONS, TRANSCRIPTS, SCORES, RESULTS_TABLE, SIGNIFICANCE, DIFFICULTY];

/// How seeds map to DFAs and instances; recorded so a reader does not have to
/// guess.
pub const SEED_SCHEME: &str = "slot i: child(\"dfa\", i); attempt a: child(\"attempt\", a); \
DFA drawn from child(\"dfa\", 0); pilot instance from child(\"pilot\", 0), drawn and discarded \
for every candidate; instance j from child(\"instance\", j); random-s instance j from \
child(\"random-s\", j) of the attempt seed";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

/// Holds no timestamps, so rerunning a command with the same flags rewrites
/// it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub task_kind: TaskKind,
    pub num_dfas: usize,
    pub config: TaskConfig,
    pub seed_scheme: String,
    /// Formats sent to models so far.
    #[serde(default)]
    pub prompt_formats: Vec<PromptFormat>,
    /// Endpoint snapshots; only the API key's variable name is stored.
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    pub tie_rule: TieRule,
    /// Predictor ids present in `predictions.jsonl`.
    #[serde(default)]
    pub predictors: Vec<String>,
    #[serde(default)]
    pub files: BTreeMap<String, FileEntry>,
}

impl RunManifest {
    pub fn new(master_seed: u64, task_kind: TaskKind, num_dfas: usize, config: TaskConfig) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            task_kind,
            num_dfas,
            config,
            seed_scheme: SEED_SCHEME.into(),
            prompt_formats: Vec::new(),
            endpoints: Vec::new(),
            tie_rule: TieRule::default(),
            predictors: Vec::new(),
            files: BTreeMap::new(),
        }
    }
}

/// A line of `dfas.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfaRecord {
    pub id: u64,
    #[serde(flatten)]
    pub dfa: Dfa,
    pub seed: String,
    #[serde(default)]
    pub rejected_dfas: u64,
}

impl From<&GeneratedTask> for DfaRecord {
    fn from(g: &GeneratedTask) -> Self {
        DfaRecord { id: g.id, dfa: g.dfa.clone(), seed: g.seed.clone(), rejected_dfas: g.rejected_dfas }
    }
}

/// A line of `predictions.jsonl`. `answer: null` is a non-answer; a failed
/// request is marked `unevaluated` instead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dfa_id: u64,
    pub instance_idx: usize,
    pub predictor: String,
    pub answer: Option<AnswerValue>,
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unevaluated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub task_kind: TaskKind,
    pub resamples: usize,
    pub rows: Vec<ResultsRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub a: String,
    pub b: String,
    pub p_value: f64,
    pub resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub dfa_id: u64,
    pub class: DifficultyClass,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable record");
        out.push(b'\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn parse_jsonl<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, PersistError> {
    let text = std::str::from_utf8(bytes).map_err(|e| PersistError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| PersistError::Json { path: path.to_path_buf(), line: i + 1, source })
        })
        .collect()
}

fn check_schema(version: &str) -> Result<(), PersistError> {
    let major = version.split('.').next().and_then(|m| m.parse::<u64>().ok());
    match major {
        Some(SUPPORTED_MAJOR) => Ok(()),
        _ => Err(PersistError::SchemaVersionUnsupported(version.to_string())),
    }
}

/// Writes artifacts into a run directory. The manifest is removed on open and
/// written by [`RunWriter::finish`].
#[derive(Debug)]
pub struct RunWriter {
    root: PathBuf,
}

impl RunWriter {
    /// Starts a new run, clearing any artifacts of a previous run in `root`.
    pub fn create(root: impl AsRef<Path>) -> Result<Self, PersistError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let w = RunWriter { root };
        w.remove(MANIFEST)?;
        for name in ARTIFACTS {
            w.remove(name)?;
        }
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    fn remove(&self, name: &str) -> Result<(), PersistError> {
        let p = self.root.join(name);
        match fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(&p)(e)),
            _ => Ok(()),
        }
    }

    pub fn put_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), PersistError> {
        let p = self.root.join(name);
        write_atomic(&self.root, &p, bytes).map_err(io_err(&p))
    }

    pub fn put_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<(), PersistError> {
        self.put_bytes(name, &to_jsonl(records))
    }

    pub fn put_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), PersistError> {
        self.put_bytes(name, &to_json(value))
    }

    /// Drops an artifact that the new contents make stale.
    pub fn discard(&self, name: &str) -> Result<(), PersistError> {
        self.remove(name)
    }

    /// Hashes every artifact present and writes the manifest.
    pub fn finish(self, mut manifest: RunManifest) -> Result<Run, PersistError> {
        manifest.files.clear();
        for name in ARTIFACTS {
            let p = self.root.join(name);
            match fs::read(&p) {
                Ok(bytes) => {
                    manifest.files.insert(
                        name.to_string(),
                        FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 },
                    );
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&p)(e)),
            }
        }
        self.put_json(MANIFEST, &manifest)?;
        Ok(Run { root: self.root, manifest })
    }
}

/// Writes a whole run in one go; `artifacts` maps file names to contents.
pub fn write_run(
    root: impl AsRef<Path>,
    manifest: RunManifest,
    artifacts: &BTreeMap<String, Vec<u8>>,
) -> Result<Run, PersistError> {
    let w = RunWriter::create(root)?;
    for (name, bytes) in artifacts {
        w.put_bytes(name, bytes)?;
    }
    w.finish(manifest)
}

/// A validated run: the manifest exists, its schema is supported, and every
/// listed artifact matched its hash when loaded.
#[derive(Clone, Debug)]
pub struct Run {
    root: PathBuf,
    pub manifest: RunManifest,
}

pub fn load_run(root: impl AsRef<Path>) -> Result<Run, PersistError> {
    let root = root.as_ref().to_path_buf();
    let mpath = root.join(MANIFEST);
    let bytes = match fs::read(&mpath) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PersistError::IncompleteRun(root)),
        Err(e) => return Err(io_err(&mpath)(e)),
    };
    let json_err = |source| PersistError::Json { path: mpath.clone(), line: 1, source };
    let raw: serde_json::Value = serde_json::from_slice(&bytes).map_err(json_err)?;
    let version = raw.get("schema_version").and_then(|v| v.as_str()).unwrap_or("missing");
    check_schema(version)?;
    let manifest: RunManifest = serde_json::from_value(raw).map_err(json_err)?;
    for (name, entry) in &manifest.files {
        let p = root.join(name);
        let data = match fs::read(&p) {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PersistError::MissingArtifact(p)),
            Err(e) => return Err(io_err(&p)(e)),
        };
        let actual = sha256_hex(&data);
        if actual != entry.sha256 {
            return Err(PersistError::HashMismatch { path: p, expected: entry.sha256.clone(), actual });
        }
    }
    Ok(Run { root, manifest })
}

impl Run {
    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn has(&self, name: &str) -> bool {
        self.manifest.files.contains_key(name)
    }

    /// Raw bytes of a listed artifact, re-checked against the manifest.
    pub fn bytes(&self, name: &str) -> Result<Vec<u8>, PersistError> {
        let p = self.root.join(name);
        let entry = self.manifest.files.get(name).ok_or_else(|| PersistError::MissingArtifact(p.clone()))?;
        let data = fs::read(&p).map_err(io_err(&p))?;
        let actual = sha256_hex(&data);
        if actual != entry.sha256 {
            return Err(PersistError::HashMismatch { path: p, expected: entry.sha256.clone(), actual });
        }
        Ok(data)
    }

    pub fn read_jsonl<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, PersistError> {
        parse_jsonl(&self.root.join(name), &self.bytes(name)?)
    }

    /// Like [`Run::read_jsonl`], but an absent artifact reads as empty.
    pub fn read_jsonl_or_empty<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, PersistError> {
        if self.has(name) {
            self.read_jsonl(name)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, PersistError> {
        let p = self.root.join(name);
        serde_json::from_slice(&self.bytes(name)?).map_err(|source| PersistError::Json { path: p, line: 1, source })
    }

    pub fn dfas(&self) -> Result<Vec<DfaRecord>, PersistError> {
        self.read_jsonl(DFAS)
    }

    /// Task sets with targets, for scoring.
    pub fn tasks(&self) -> Result<Vec<TaskSet>, PersistError> {
        self.read_jsonl(TASKS)
    }

    /// Task sets with targets removed, for predictors.
    pub fn public_tasks(&self) -> Result<Vec<PublicTaskSet>, PersistError> {
        Ok(self.tasks()?.iter().map(TaskSet::public).collect())
    }

    pub fn predictions(&self) -> Result<Vec<PredictionRecord>, PersistError> {
        self.read_jsonl_or_empty(PREDICTIONS)
    }

    pub fn transcripts(&self) -> Result<Vec<Transcript>, PersistError> {
        self.read_jsonl_or_empty(TRANSCRIPTS)
    }

    pub fn scores(&self) -> Result<Vec<DfaScore>, PersistError> {
        self.read_jsonl_or_empty(SCORES)
    }

    pub fn results_table(&self) -> Result<ResultsTable, PersistError> {
        self.read_json(RESULTS_TABLE)
    }

    pub fn significance(&self) -> Result<Vec<SignificanceRecord>, PersistError> {
        if self.has(SIGNIFICANCE) {
            self.read_json(SIGNIFICANCE)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn difficulty(&self) -> Result<Vec<DifficultyRecord>, PersistError> {
        self.read_json(DIFFICULTY)
    }

    /// Reopens the run for writing; the manifest is removed until
    /// [`RunWriter::finish`].
    pub fn update(self) -> Result<(RunWriter, RunManifest), PersistError> {
        let w = RunWriter { root: self.root };
        w.remove(MANIFEST)?;
        Ok((w, self.manifest))
    }
}

/// Replaces every record whose key is in `fresh` and keeps the rest.
pub fn upsert<T, K: Ord + Clone>(existing: Vec<T>, fresh: Vec<T>, key: impl Fn(&T) -> K) -> Vec<T> {
    let replaced: std::collections::BTreeSet<K> = fresh.iter().map(&key).collect();
    let mut out: Vec<T> = existing.into_iter().filter(|r| !replaced.contains(&key(r))).collect();
    out.extend(fresh);
    out
}

/// Merges predictions, replacing whole predictors, in a stable order.
pub fn upsert_predictions(existing: Vec<PredictionRecord>, fresh: Vec<PredictionRecord>) -> Vec<PredictionRecord> {
    let mut out = upsert(existing, fresh, |r| r.predictor.clone());
    out.sort_by(|a, b| (&a.predictor, a.dfa_id, a.instance_idx).cmp(&(&b.predictor, b.dfa_id, b.instance_idx)));
    out
}

pub fn upsert_scores(existing: Vec<DfaScore>, fresh: Vec<DfaScore>) -> Vec<DfaScore> {
    let mut out = upsert(existing, fresh, |r| r.predictor.clone());
    out.sort_by(|a, b| (&a.predictor, a.dfa_id).cmp(&(&b.predictor, b.dfa_id)));
    out
}
