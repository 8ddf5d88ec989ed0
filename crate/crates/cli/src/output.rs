//! Artifact writers and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cardiomr_core::driver::Snapshot;
use cardiomr_core::mrtree::io::{write_flattened, write_leaf_dump};
use cardiomr_core::{FieldMask, ScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Content hash in the style of git object ids: `sha256("blob <len>\0" ++ bytes)`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command arguments other than the config (methods, candidates, seed).
    pub arguments: serde_json::Value,
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub outputs: Vec<OutputFile>,
    pub wall_seconds: f64,
    pub timings: Vec<Timing>,
}

/// Collects the files written under one output directory.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    pub fn write_csv(&mut self, rel: impl AsRef<Path>, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        self.write(rel, |w| {
            writeln!(w, "{header}")?;
            for r in rows {
                writeln!(w, "{r}")?;
            }
            Ok(())
        })
    }

    /// Flattened finest-grid CSV per field plus the leaf dump, under `prefix/t<time>/`.
    pub fn write_snapshot(&mut self, prefix: &str, snap: &Snapshot, fields: FieldMask) -> Result<()> {
        let dir = PathBuf::from(prefix).join(format!("t{:.4}", snap.t));
        for field in fields.iter() {
            self.write(dir.join(format!("{}.csv", field.name())), |w| write_flattened(w, snap.level, &snap.flat, field))?;
        }
        self.write(dir.join("leaves.csv"), |w| write_leaf_dump(w, &snap.leaves))
    }

    /// Hash every written file and store the manifest next to them.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest> {
        self.files.sort();
        self.files.dedup();
        manifest.outputs = self
            .files
            .iter()
            .map(|rel| {
                let bytes = fs::read(self.root.join(rel))?;
                Ok(OutputFile { path: rel.to_string_lossy().replace('\\', "/"), hash: content_hash(&bytes) })
            })
            .collect::<Result<_>>()?;
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join(MANIFEST_FILE), text + "\n")?;
        Ok(manifest)
    }
}
