//! The on-disk model store.
//!
//! A store directory holds `stats.egw` (the shared reference statistics),
//! one `EGW1` gate file and one `EGW1` expert file per task, and
//! `manifest.tsv` listing the tasks in arrival order with the columns
//! `task_name, gate_file, expert_file, method, chosen_prior, rel`. The rel
//! column is empty for tasks started from the base model.
//!
//! Expert files hold the body followed by the heads. Head names, the
//! expert's origin and its training method go in a sidecar named after the
//! expert file with `.heads.tsv` in place of `.egw`.

use std::fs;
use std::path::{Path, PathBuf};

use expertgate_core::experts::Head;
use expertgate_core::gating::TransferMethod;
use expertgate_core::pipeline::{ExpertStore, ManifestEntry};
use expertgate_core::{
    AutoencoderGate, Error as CoreError, ExpertModel, GateEnsemble, ModelRegistry, PipelineConfig,
    ReferenceStats, TrainMethod,
};

use crate::weights::{decode_layers, decode_stats, encode_layers, encode_stats};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const STATS_FILE: &str = "stats.egw";
/// Source id given to statistics read back from a store.
pub const STORE_STATS_ID: &str = "store";
const MANIFEST_HEADER: &str = "task_name\tgate_file\texpert_file\tmethod\tchosen_prior\trel";

pub fn gate_file_name(index: usize) -> String {
    format!("gate_{index:03}.egw")
}

pub fn expert_file_name(index: usize) -> String {
    format!("expert_{index:03}.egw")
}

fn sidecar_name(expert_file: &str) -> String {
    format!("{}.heads.tsv", expert_file.strip_suffix(".egw").unwrap_or(expert_file))
}

/// Experts kept as files in a store directory.
#[derive(Clone, Debug)]
pub struct FileExpertStore {
    dir: PathBuf,
    files: Vec<String>,
}

impl FileExpertStore {
    /// A store writing into `dir`, which is created if missing.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn expert_files(&self) -> &[String] {
        &self.files
    }
}

fn store_err(e: Error) -> CoreError {
    match e {
        Error::Core(c) => c,
        other => CoreError::Store(other.to_string()),
    }
}

impl ExpertStore for FileExpertStore {
    fn save_expert(&mut self, index: usize, _task: &str, model: &ExpertModel) -> expertgate_core::Result<()> {
        if index > self.files.len() {
            return Err(CoreError::Store(format!("expert slot {index} skips ahead")));
        }
        let name = expert_file_name(index);
        write_expert(&self.dir, &name, model).map_err(store_err)?;
        if index == self.files.len() {
            self.files.push(name);
        } else {
            self.files[index] = name;
        }
        Ok(())
    }

    fn load_expert(&self, index: usize, task: &str) -> expertgate_core::Result<ExpertModel> {
        let name = self
            .files
            .get(index)
            .ok_or_else(|| CoreError::Store(format!("no expert file for `{task}`")))?;
        read_expert(&self.dir, name).map_err(store_err)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::StoreCorrupt(format!("{}: {e}", path.display())))
}

pub fn write_expert(dir: &Path, name: &str, model: &ExpertModel) -> Result<()> {
    let mut layers = vec![&model.body];
    layers.extend(model.heads().iter().map(|h| &h.layer));
    write(&dir.join(name), &encode_layers(&layers)?)?;
    let mut meta = format!("origin\t{}\nmethod\t{}\n", model.origin, model.method);
    for h in model.heads() {
        meta.push_str(&format!("head\t{}\n", h.task));
    }
    write(&dir.join(sidecar_name(name)), meta.as_bytes())
}

/// Format problems inside a store are corruption of the store.
fn corrupt(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Format(m) | Error::Parameter(m) => Error::StoreCorrupt(format!("{name}: {m}")),
        Error::Core(c) => Error::StoreCorrupt(format!("{name}: {c}")),
        other => other,
    }
}

pub fn read_expert(dir: &Path, name: &str) -> Result<ExpertModel> {
    let mut layers = decode_layers(&read(dir, name)?).map_err(corrupt(name))?.into_iter();
    let side = sidecar_name(name);
    let meta = String::from_utf8(read(dir, &side)?)
        .map_err(|_| Error::StoreCorrupt(format!("{side} is not UTF-8")))?;
    let bad = |m: &str| Error::StoreCorrupt(format!("{side}: {m}"));
    let (mut origin, mut method, mut heads) = (None, None, Vec::new());
    for line in meta.lines() {
        match line.split_once('\t') {
            Some(("origin", v)) => origin = Some(v.to_string()),
            Some(("method", v)) => method = Some(TrainMethod::parse(v).ok_or_else(|| bad("unknown method"))?),
            Some(("head", v)) => heads.push(v.to_string()),
            _ => return Err(bad(&format!("unexpected line `{line}`"))),
        }
    }
    let body = layers.next().ok_or_else(|| bad("expert file has no layers"))?;
    let layers: Vec<_> = layers.collect();
    if layers.len() != heads.len() {
        return Err(bad(&format!("{} head names for {} head layers", heads.len(), layers.len())));
    }
    let heads = heads
        .into_iter()
        .zip(layers)
        .map(|(task, layer)| Head { task, layer })
        .collect();
    ExpertModel::from_parts(
        body,
        heads,
        origin.ok_or_else(|| bad("missing origin"))?,
        method.ok_or_else(|| bad("missing method"))?,
    )
    .map_err(|e| bad(&e.to_string()))
}

fn manifest_text(manifest: &[ManifestEntry], experts: &[String]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for (i, (m, e)) in manifest.iter().zip(experts).enumerate() {
        let rel = m.rel.map(|r| r.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            m.task_name,
            gate_file_name(i),
            e,
            m.method,
            m.chosen_prior,
            rel
        ));
    }
    out
}

/// Writes the statistics, every gate and the manifest. Experts are already
/// on disk, written by the registry's [`FileExpertStore`].
pub fn save_store(registry: &ModelRegistry<FileExpertStore>) -> Result<()> {
    let dir = registry.store().dir();
    let experts = registry.store().expert_files();
    if experts.len() != registry.len() {
        return Err(Error::StoreCorrupt(format!(
            "{} expert files for {} tasks",
            experts.len(),
            registry.len()
        )));
    }
    if let Some(stats) = registry.stats() {
        write(&dir.join(STATS_FILE), &encode_stats(stats)?)?;
    }
    if let Some(ensemble) = registry.ensemble() {
        for (i, g) in ensemble.gates().iter().enumerate() {
            write(&dir.join(gate_file_name(i)), &encode_layers(&[&g.encoder, &g.decoder])?)?;
        }
    }
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    write(&tmp, manifest_text(registry.manifest(), experts).as_bytes())?;
    let path = dir.join(MANIFEST_FILE);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

struct Row {
    entry: ManifestEntry,
    gate: String,
    expert: String,
}

fn plain_file_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(['/', '\\']) && name != "." && name != ".."
}

fn parse_manifest(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::StoreCorrupt("manifest header missing".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |m: &str| Error::StoreCorrupt(format!("manifest row {}: {m}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            let [task, gate, expert, method, prior, rel] = f.as_slice() else {
                return Err(bad(&format!("{} fields, expected 6", f.len())));
            };
            if !plain_file_name(gate) || !plain_file_name(expert) {
                return Err(bad("file names must not contain paths"));
            }
            let method = TransferMethod::parse(method).ok_or_else(|| bad("unknown method"))?;
            let rel = match *rel {
                "" => None,
                r => Some(r.parse::<f64>().map_err(|_| bad("rel is not a number"))?),
            };
            Ok(Row {
                entry: ManifestEntry {
                    task_name: task.to_string(),
                    method,
                    chosen_prior: prior.to_string(),
                    rel,
                },
                gate: gate.to_string(),
                expert: expert.to_string(),
            })
        })
        .collect()
}

/// Whether `dir` already holds a manifest.
pub fn store_exists(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

/// Reads a store back into a registry. Every file the manifest references
/// must exist and parse.
pub fn load_store(dir: &Path, config: PipelineConfig) -> Result<ModelRegistry<FileExpertStore>> {
    let text = String::from_utf8(read(dir, MANIFEST_FILE)?)
        .map_err(|_| Error::StoreCorrupt("manifest is not UTF-8".into()))?;
    let rows = parse_manifest(&text)?;
    for r in &rows {
        for name in [&r.gate, &r.expert, &sidecar_name(&r.expert)] {
            if !dir.join(name).is_file() {
                return Err(Error::StoreCorrupt(format!(
                    "manifest references missing file {name}"
                )));
            }
        }
    }
    let store = FileExpertStore {
        dir: dir.to_path_buf(),
        files: rows.iter().map(|r| r.expert.clone()).collect(),
    };
    if rows.is_empty() {
        return Ok(ModelRegistry::new(store, config));
    }
    let stats = load_stats(dir)?;
    let gates = rows
        .iter()
        .map(|r| {
            let layers = decode_layers(&read(dir, &r.gate)?).map_err(corrupt(&r.gate))?;
            let [encoder, decoder]: [_; 2] = layers.try_into().map_err(|_| {
                Error::StoreCorrupt(format!("{} must hold exactly two layers", r.gate))
            })?;
            AutoencoderGate::from_layers(&r.entry.task_name, encoder, decoder, STORE_STATS_ID)
                .map_err(|e| Error::StoreCorrupt(format!("{}: {e}", r.gate)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = GateEnsemble::with_gates(stats, config.temperature, gates)
        .map_err(|e| Error::StoreCorrupt(e.to_string()))?;
    let manifest = rows.into_iter().map(|r| r.entry).collect();
    ModelRegistry::from_parts(store, config, ensemble, manifest)
        .map_err(|e| Error::StoreCorrupt(e.to_string()))
}

/// The store's reference statistics.
pub fn load_stats(dir: &Path) -> Result<ReferenceStats> {
    decode_stats(&read(dir, STATS_FILE)?, STORE_STATS_ID).map_err(corrupt(STATS_FILE))
}
