//! Pipeline stages and the plumbing they share: output layout, manifest
//! resolution, per-utterance seeding, and the worker pool.

pub mod enhance;
pub mod score;
pub mod simulate;

use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub fn corpus_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.io.out_dir.join("corpus")
}

pub fn enhanced_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.io.out_dir.join("enhanced")
}

pub fn corpus_manifest_path(cfg: &PipelineConfig) -> PathBuf {
    corpus_dir(cfg).join("manifest.tsv")
}

pub fn enhanced_manifest_path(cfg: &PipelineConfig) -> PathBuf {
    enhanced_dir(cfg).join("manifest.tsv")
}

/// Manifest that enhance and score read their input utterances from:
/// `io.manifest` when set, otherwise the simulate output.
pub fn input_manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.io.manifest.clone().unwrap_or_else(|| corpus_manifest_path(cfg))
}

/// Per-utterance seed; every other stream seed is derived from this.
pub fn utt_seed(seed: u64, utt_index: usize) -> u64 {
    seed ^ utt_index as u64
}

pub fn utt_id(utt_index: usize) -> String {
    format!("utt{utt_index:04}")
}

/// Run `f` on a dedicated rayon pool with `jobs` threads (`None` lets rayon
/// pick). Results are collected in input order, so thread count never
/// affects output bytes.
pub fn with_pool<R: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> R + Send,
) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::data(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path)
        .map_err(|e| CliError::data(format!("cannot resolve {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

/// Every invocation records the fully resolved config next to its outputs.
pub fn write_resolved_config(cfg: &PipelineConfig) -> Result<(), CliError> {
    create_dir(&cfg.io.out_dir)?;
    let path = cfg.io.out_dir.join("resolved_config.toml");
    std::fs::write(&path, cfg.to_toml())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}
