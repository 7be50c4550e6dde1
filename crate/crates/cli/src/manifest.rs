//! Run manifests: the provenance record every subcommand leaves behind.
//!
//! A manifest echoes the fully resolved configuration, hashes its inputs
//! git-blob style (`sha256("blob {len}\0" + bytes)`), lists every artifact
//! with size and checksum, and records the gate table and timings. Data
//! artifacts are byte-identical across reruns of the same config; the
//! timing block is the one part of the manifest allowed to vary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dkga::solver::GateReport;

use crate::CliError;

/// Git-style blob hash of a byte string.
pub fn blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Gate rows are mirrored into a manifest-owned shape so manifests can be
/// read back without the solver types.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateRow {
    pub hypothesis: String,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Flags {
    pub out_dir: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    /// `ok`, `refused` (a gate failed), or `failed` (run error).
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool: String,
    pub inputs: Vec<InputRecord>,
    /// Fully resolved `key = value` map, defaults included.
    pub config: BTreeMap<String, String>,
    pub flags: Flags,
    pub gates: Vec<GateRow>,
    pub outcome: Outcome,
    /// Wall-clock seconds, total and per step. Nondeterministic by nature.
    pub timings: BTreeMap<String, f64>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl Manifest {
    pub fn set_gates(&mut self, report: &GateReport) {
        self.gates = report
            .entries
            .iter()
            .map(|e| GateRow {
                hypothesis: e.hypothesis.clone(),
                value: e.value,
                bound: e.bound,
                margin: e.margin,
            })
            .collect();
    }
}

/// Owns the output directory, the manifest under construction, and the run
/// clock. Every command goes through one of these so the manifest is
/// written no matter how the run ends.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    started: Instant,
}

impl RunContext {
    pub fn new(command: &str, out_dir: &Path, flags: Flags) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir).map_err(|e| {
            CliError::Usage(format!(
                "cannot create output directory {}: {e}",
                out_dir.display()
            ))
        })?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                tool: format!("dkga {}", env!("CARGO_PKG_VERSION")),
                inputs: Vec::new(),
                config: BTreeMap::new(),
                flags,
                gates: Vec::new(),
                outcome: Outcome {
                    status: "failed".into(),
                    detail: "run did not complete".into(),
                },
                timings: BTreeMap::new(),
                artifacts: Vec::new(),
            },
            started: Instant::now(),
        })
    }

    pub fn record_input(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.manifest.inputs.push(InputRecord {
            name: name.into(),
            sha256: blob_sha256(bytes),
        });
    }

    /// Writes `name` under the output directory and records it. Re-writing
    /// the same name replaces its record rather than duplicating it.
    pub fn write_artifact(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        let record = ArtifactRecord {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: blob_sha256(bytes),
        };
        match self.manifest.artifacts.iter_mut().find(|a| a.name == name) {
            Some(slot) => *slot = record,
            None => self.manifest.artifacts.push(record),
        }
        Ok(())
    }

    pub fn timing(&mut self, step: &str, seconds: f64) {
        self.manifest.timings.insert(step.to_string(), seconds);
    }

    /// Stamps the outcome from the command's result, writes `manifest.json`,
    /// and hands the result back. The manifest write itself failing turns an
    /// otherwise clean run into a usage error.
    pub fn finish(mut self, result: Result<(), CliError>) -> Result<(), CliError> {
        self.manifest.outcome = match &result {
            Ok(()) => Outcome {
                status: "ok".into(),
                detail: String::new(),
            },
            Err(CliError::Gate(msg)) => Outcome {
                status: "refused".into(),
                detail: msg.clone(),
            },
            Err(e) => Outcome {
                status: "failed".into(),
                detail: e.to_string(),
            },
        };
        self.manifest
            .timings
            .insert("wall_seconds".into(), self.started.elapsed().as_secs_f64());
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.out_dir.join("manifest.json");
        let written = std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())));
        result.and(written)
    }
}
