//! Content-addressed, append-only persistence of run records.
//!
//! Layout under the root:
//!
//! ```text
//! runs/<run_id>/manifest.json   metadata + SHA-256 of every artifact
//! runs/<run_id>/params.bin      final parameters, LE binary32
//! runs/<run_id>/params.json     (name, shape) layout of params.bin
//! runs/<run_id>/preds.bin       final test logits (VLPM)
//! runs/<run_id>/history.csv     per-epoch metrics
//! runs/<run_id>/snap<k>.params.bin, snap<k>.preds.bin
//! runs/<run_id>/act_<layer>.bin captured activations (VLPM)
//! index.jsonl                   run_id and manifest digest, one per line
//! ```
//!
//! A run directory is built under `runs/.tmp-*` and renamed into place only
//! once every artifact and the manifest are on disk, so an interrupted write
//! never leaves a directory that [`RunStore::load`] accepts.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::sha256_hex;
use crate::error::{Error, Result};
use crate::models::{ActivationCapture, ModelSpec, Params};
use crate::numerics::Tensor;
use crate::perturbation::BitFlipDescriptor;
use crate::training::{EpochMetrics, PredictionMatrix, RunInput, RunRecord, Snapshot, TrainConfig};

const MAGIC: &[u8; 4] = b"VLPM";
const MATRIX_VERSION: u32 = 1;
const MANIFEST_VERSION: u32 = 1;
pub const STORE_ENV: &str = "VARLAB_STORE";

static NONCE: AtomicU64 = AtomicU64::new(0);

/// `VLPM` header (magic, version, rows, cols as LE u32) then LE binary32.
pub fn encode_matrix(t: &Tensor) -> Vec<u8> {
    let (rows, cols) = (t.rows(), t.row_len());
    let mut out = Vec::with_capacity(16 + t.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [MATRIX_VERSION, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Tensor> {
    let bad = |why: &str| Error::Store(format!("matrix file: {why}"));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing VLPM header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    if word(4) != MATRIX_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (rows, cols) = (word(8), word(12));
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(bad("payload length disagrees with header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(vec![rows, cols], data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    run_id: String,
    config_digest: String,
    dataset: String,
    dataset_fingerprint: String,
    model: ModelSpec,
    config: TrainConfig,
    input: RunInput,
    bitflip: Option<BitFlipDescriptor>,
    history: Vec<EpochMetrics>,
    params_digest: String,
    snapshot_epochs: Vec<usize>,
    activation_layers: Vec<String>,
    /// Artifact file name → SHA-256.
    files: BTreeMap<String, String>,
}

/// One entry of the `params.json` sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    sha256: String,
}

fn params_sidecar(params: &Params) -> Vec<TensorEntry> {
    params
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            sha256: sha256_hex(&t.to_le_bytes()),
        })
        .collect()
}

fn history_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_loss,test_accuracy,test_cross_entropy\n");
    for h in history {
        s.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            h.epoch, h.train_loss, h.test_accuracy, h.test_cross_entropy
        ));
    }
    s
}

fn activation_file(layer: &str) -> String {
    format!("act_{layer}.bin")
}

/// Handle on a store directory. Cheap to clone; safe to share across threads.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Opens (creating if needed) the store at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let runs = root.join("runs");
        fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
        Ok(Self { root })
    }

    /// `VARLAB_STORE` if set, else `default`.
    pub fn resolve_root(default: &Path) -> PathBuf {
        std::env::var_os(STORE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| default.to_path_buf())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    /// True if a complete run directory exists; contents are verified by
    /// [`RunStore::load`].
    pub fn contains(&self, run_id: &str) -> bool {
        self.run_dir(run_id).join("manifest.json").is_file()
    }

    /// Ids of all complete runs, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') && self.contains(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Removes leftovers of interrupted writes. Returns how many were removed.
    pub fn clean_stale(&self) -> Result<usize> {
        let dir = self.runs_dir();
        let mut n = 0;
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            let stale = name.starts_with(".tmp-")
                || (!name.starts_with('.') && path.is_dir() && !path.join("manifest.json").is_file());
            if stale {
                fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Persists a run. Saving an id that is already present is a no-op.
    pub fn save(&self, record: &RunRecord) -> Result<()> {
        if self.contains(&record.run_id) {
            return Ok(());
        }
        let tmp = self.runs_dir().join(format!(
            ".tmp-{}-{}-{}",
            record.run_id,
            std::process::id(),
            NONCE.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let result = self.write_run(&tmp, record);
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result
    }

    fn write_run(&self, tmp: &Path, record: &RunRecord) -> Result<()> {
        let mut files = BTreeMap::new();
        let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
            let path = tmp.join(&name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            files.insert(name, sha256_hex(&bytes));
            Ok(())
        };
        put("params.bin".into(), record.params.to_le_bytes())?;
        put(
            "params.json".into(),
            serde_json::to_vec_pretty(&params_sidecar(&record.params))?,
        )?;
        put("preds.bin".into(), encode_matrix(record.predictions.logits()))?;
        put("history.csv".into(), history_csv(&record.history).into_bytes())?;
        for (k, s) in record.snapshots.iter().enumerate() {
            put(format!("snap{k}.params.bin"), s.params.to_le_bytes())?;
            put(format!("snap{k}.preds.bin"), encode_matrix(s.predictions.logits()))?;
        }
        for (layer, t) in &record.activations.layers {
            put(activation_file(layer), encode_matrix(t))?;
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            run_id: record.run_id.clone(),
            config_digest: record.config_digest.clone(),
            dataset: record.dataset.clone(),
            dataset_fingerprint: record.dataset_fingerprint.clone(),
            model: record.model.clone(),
            config: record.config.clone(),
            input: record.input,
            bitflip: record.bitflip.clone(),
            history: record.history.clone(),
            params_digest: record.params_digest.clone(),
            snapshot_epochs: record.snapshots.iter().map(|s| s.epoch).collect(),
            activation_layers: record.activations.names().map(String::from).collect(),
            files,
        };
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        let manifest_digest = sha256_hex(&bytes);
        let path = tmp.join("manifest.json");
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;

        let dest = self.run_dir(&record.run_id);
        if let Err(e) = fs::rename(tmp, &dest) {
            // Another writer finished the same run first.
            if self.contains(&record.run_id) {
                let _ = fs::remove_dir_all(tmp);
                return Ok(());
            }
            return Err(Error::io(&dest, e));
        }
        self.append_index(&record.run_id, &manifest_digest)
    }

    fn append_index(&self, run_id: &str, digest: &str) -> Result<()> {
        let path = self.root.join("index.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.lock().map_err(|e| Error::io(&path, e))?;
        let line = serde_json::json!({ "run_id": run_id, "manifest_sha256": digest });
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    /// Loads and verifies a run; any missing or altered artifact is an error.
    pub fn load(&self, run_id: &str) -> Result<RunRecord> {
        let dir = self.run_dir(run_id);
        let path = dir.join("manifest.json");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        if m.version != MANIFEST_VERSION || m.run_id != run_id {
            return Err(Error::Store(format!(
                "manifest of {run_id} is not for this run or version"
            )));
        }
        let read = |name: &str| -> Result<Vec<u8>> {
            let expected = m
                .files
                .get(name)
                .ok_or_else(|| Error::Store(format!("run {run_id}: manifest lacks {name}")))?;
            let p = dir.join(name);
            let b = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let actual = sha256_hex(&b);
            if &actual != expected {
                return Err(Error::Checksum {
                    path: p,
                    expected: expected.clone(),
                    actual,
                });
            }
            Ok(b)
        };
        let sidecar: Vec<TensorEntry> = serde_json::from_slice(&read("params.json")?)?;
        let layout: Vec<(String, Vec<usize>)> = sidecar.into_iter().map(|e| (e.name, e.shape)).collect();
        let params = Params::from_le_bytes(&layout, &read("params.bin")?)?;
        if params.digest() != m.params_digest {
            return Err(Error::Store(format!("run {run_id}: params digest mismatch")));
        }
        let predictions = PredictionMatrix::new(decode_matrix(&read("preds.bin")?)?)?;
        let snapshots = m
            .snapshot_epochs
            .iter()
            .enumerate()
            .map(|(k, &epoch)| {
                Ok(Snapshot {
                    epoch,
                    params: Params::from_le_bytes(&layout, &read(&format!("snap{k}.params.bin"))?)?,
                    predictions: PredictionMatrix::new(decode_matrix(&read(&format!("snap{k}.preds.bin"))?)?)?,
                })
            })
            .collect::<Result<_>>()?;
        let activations = ActivationCapture {
            layers: m
                .activation_layers
                .iter()
                .map(|l| Ok((l.clone(), decode_matrix(&read(&activation_file(l))?)?)))
                .collect::<Result<_>>()?,
        };
        read("history.csv")?;
        Ok(RunRecord {
            run_id: m.run_id,
            config_digest: m.config_digest,
            dataset: m.dataset,
            dataset_fingerprint: m.dataset_fingerprint,
            model: m.model,
            config: m.config,
            input: m.input,
            bitflip: m.bitflip,
            history: m.history,
            predictions,
            snapshots,
            activations,
            params,
            params_digest: m.params_digest,
        })
    }

    /// Moves a run directory that failed verification out of the way so the
    /// run can be recomputed.
    pub fn quarantine(&self, run_id: &str) -> Result<()> {
        let from = self.run_dir(run_id);
        let to = self.runs_dir().join(format!(
            ".corrupt-{run_id}-{}-{}",
            std::process::id(),
            NONCE.fetch_add(1, Ordering::Relaxed)
        ));
        fs::rename(&from, &to).map_err(|e| Error::io(&from, e))
    }

    /// SHA-256 of a stored artifact, as recorded in the manifest.
    pub fn artifact_digest(&self, run_id: &str, name: &str) -> Result<Option<String>> {
        let path = self.run_dir(run_id).join("manifest.json");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        Ok(m.files.get(name).cloned())
    }

    /// Writes a derived prediction matrix (e.g. `preds_snap.bin`) beside a
    /// run, atomically. Derived files are caches and are not in the manifest.
    pub fn save_derived(&self, run_id: &str, name: &str, preds: &PredictionMatrix) -> Result<()> {
        let dir = self.run_dir(run_id);
        let tmp = dir.join(format!(".{name}.{}.tmp", NONCE.fetch_add(1, Ordering::Relaxed)));
        fs::write(&tmp, encode_matrix(preds.logits())).map_err(|e| Error::io(&tmp, e))?;
        let dest = dir.join(name);
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }

    pub fn load_derived(&self, run_id: &str, name: &str) -> Result<Option<PredictionMatrix>> {
        let path = self.run_dir(run_id).join(name);
        match fs::read(&path) {
            Ok(b) => Ok(Some(PredictionMatrix::new(decode_matrix(&b)?)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}
