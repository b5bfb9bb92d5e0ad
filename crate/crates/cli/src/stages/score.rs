//! Scoring: match estimates to references by utterance id, score each pair
//! set, and write aggregate plus per-utterance reports.

use rayon::prelude::*;

use sepkit::audio::{read_manifest, read_wav, Manifest, ManifestEntry, Waveform};
use sepkit::metrics::score::{score_utterance, ScoreOptions, ScoreReport, UttScore};

use crate::config::PipelineConfig;
use crate::error::CliError;

use super::{create_dir, enhanced_manifest_path, input_manifest_path, with_pool};

pub fn run(cfg: &PipelineConfig, force: bool) -> Result<(), CliError> {
    let json_path = cfg.io.out_dir.join("report.json");
    let csv_path = cfg.io.out_dir.join("report.csv");
    if json_path.exists() && !force {
        println!("score: {} exists, skipping (--force rescores)", json_path.display());
        return Ok(());
    }
    create_dir(&cfg.io.out_dir)?;

    let refs_path = cfg.score.references.clone().unwrap_or_else(|| input_manifest_path(cfg));
    let refs = read_manifest(&refs_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", refs_path.display())))?;

    // The baseline mode scores the raw mixture against every reference
    // instead of reading an estimates manifest.
    let ests: Option<Manifest> = if cfg.score.mixture_as_estimate {
        None
    } else {
        let path = cfg.score.estimates.clone().unwrap_or_else(|| enhanced_manifest_path(cfg));
        Some(
            read_manifest(&path)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?,
        )
    };

    let opts = ScoreOptions {
        metrics: cfg.metrics.clone(),
        trim: cfg.score.trim,
        bss_filter_len: cfg.score.bss_filter_len,
    };
    let scored: Vec<(String, UttScore)> = with_pool(cfg.jobs, || {
        refs.entries
            .par_iter()
            .map(|entry| score_utt(entry, ests.as_ref(), &opts))
            .collect::<Result<_, CliError>>()
    })??;

    let mut report = ScoreReport::default();
    for (id, score) in scored {
        report.push(id, score);
    }
    std::fs::write(&json_path, report.to_json())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", json_path.display())))?;
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", csv_path.display())))?;

    println!("score: {} utterances -> {}", refs.entries.len(), json_path.display());
    for (metric, value) in report.aggregates() {
        println!("  {metric}: {value:.4}");
    }
    Ok(())
}

fn score_utt(
    entry: &ManifestEntry,
    ests_manifest: Option<&Manifest>,
    opts: &ScoreOptions,
) -> Result<(String, UttScore), CliError> {
    let id = &entry.utt_id;
    let fail = |msg: String| CliError::data(format!("{id}: {msg}"));

    let mut refs: Vec<Waveform<f64>> = Vec::with_capacity(entry.references.len());
    for path in &entry.references {
        refs.push(read_wav(path).map_err(|e| fail(e.to_string()))?);
    }
    let ests: Vec<Waveform<f64>> = match ests_manifest {
        None => {
            let mix: Waveform<f64> =
                read_wav(&entry.mixture).map_err(|e| fail(e.to_string()))?;
            vec![mix; refs.len()]
        }
        Some(manifest) => {
            let est_entry = manifest
                .get(id)
                .ok_or_else(|| fail("missing from estimates manifest".into()))?;
            let mut out = Vec::with_capacity(est_entry.references.len());
            for path in &est_entry.references {
                out.push(read_wav(path).map_err(|e| fail(e.to_string()))?);
            }
            out
        }
    };

    let score = score_utterance(&ests, &refs, opts).map_err(|e| fail(e.to_string()))?;
    Ok((id.clone(), score))
}
