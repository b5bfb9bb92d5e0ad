//! Enhancement: run the configured chain on every manifest utterance and
//! emit one estimate per reference source (or one dereverbed channel for a
//! WPE-only chain), plus a manifest pointing at the estimates.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use sepkit::audio::{
    read_manifest, read_wav, write_manifest, write_wav, Manifest, ManifestEntry, WavEncoding,
    Waveform,
};
use sepkit::beamform::{
    apply_beamformer, estimate_scm, mpdr, mvdr_souden, steering_matrix_or_selector, wpd,
};
use sepkit::mask::{apply_mask, compute_oracle_masks, TimeFreqMask, DEFAULT_CLIP};
use sepkit::stft::{analyze, synthesize, ComplexSpectrogram};
use sepkit::wpe::wpe;

use crate::config::{ChainStep, PipelineConfig};
use crate::error::CliError;

use super::{
    absolute, create_dir, enhanced_dir, enhanced_manifest_path, input_manifest_path, with_pool,
};

pub fn run(cfg: &PipelineConfig, force: bool) -> Result<(), CliError> {
    let manifest_path = enhanced_manifest_path(cfg);
    if manifest_path.exists() && !force {
        println!("enhance: {} exists, skipping (--force regenerates)", manifest_path.display());
        return Ok(());
    }
    let input_path = input_manifest_path(cfg);
    let input = read_manifest(&input_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", input_path.display())))?;
    let dir = enhanced_dir(cfg);
    create_dir(&dir)?;

    let entries: Vec<ManifestEntry> = with_pool(cfg.jobs, || {
        input
            .entries
            .par_iter()
            .map(|entry| enhance_utt(cfg, entry, &dir))
            .collect::<Result<_, CliError>>()
    })??;

    write_manifest(&manifest_path, &Manifest { entries })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", manifest_path.display())))?;
    println!("enhance: wrote estimates for {} utterances to {}", input.entries.len(), dir.display());
    Ok(())
}

fn enhance_utt(
    cfg: &PipelineConfig,
    entry: &ManifestEntry,
    dir: &Path,
) -> Result<ManifestEntry, CliError> {
    let id = &entry.utt_id;
    let fail = |msg: String| CliError::data(format!("{id}: {msg}"));

    let mixture: Waveform<f64> = read_wav(&entry.mixture).map_err(|e| fail(e.to_string()))?;
    let ref_channel = cfg.enhance.ref_channel;
    if ref_channel >= mixture.channels() {
        return Err(fail(format!(
            "ref_channel {ref_channel} out of range for {} channels",
            mixture.channels()
        )));
    }
    let beamformer = cfg.enhance_chain.iter().copied().find(|s| s.is_beamformer());
    if beamformer.is_some() && mixture.channels() < 2 {
        return Err(fail("beamformer steps need a multichannel mixture".into()));
    }

    // Dereverberate in place first; masks and beamformers then see the
    // processed spectrogram.
    let mut spec = analyze(&mixture, cfg.stft).map_err(|e| fail(e.to_string()))?;
    for step in &cfg.enhance_chain {
        if matches!(step, ChainStep::Wpe) {
            spec = wpe(&spec, &cfg.enhance.wpe).map_err(|e| fail(e.to_string()))?;
        }
    }
    let mix_ref = spec.channel(ref_channel);

    let estimates: Vec<Waveform<f64>> = match cfg.chain_mask_kind() {
        None => {
            let w = synthesize(&mix_ref).map_err(|e| fail(e.to_string()))?;
            vec![w]
        }
        Some(kind) => {
            let masks = oracle_masks(cfg, entry, &mix_ref, kind).map_err(&fail)?;
            let mut out = Vec::with_capacity(masks.len());
            for mask in &masks {
                let est_spec = match beamformer {
                    None => apply_mask(&mix_ref, mask).map_err(|e| fail(e.to_string()))?,
                    Some(ChainStep::Mvdr) => {
                        let scm_s = estimate_scm(&spec, mask).map_err(|e| fail(e.to_string()))?;
                        let scm_n = estimate_scm(&spec, &mask.complement())
                            .map_err(|e| fail(e.to_string()))?;
                        let w = mvdr_souden(&scm_s, &scm_n, ref_channel)
                            .map_err(|e| fail(e.to_string()))?;
                        apply_beamformer(&w, &spec).map_err(|e| fail(e.to_string()))?
                    }
                    Some(ChainStep::Mpdr) => {
                        let ones = TimeFreqMask {
                            values: Array2::ones((mask.frames(), mask.bins())),
                            kind: mask.kind,
                            clip: mask.clip,
                        };
                        let scm_y = estimate_scm(&spec, &ones).map_err(|e| fail(e.to_string()))?;
                        let scm_s = estimate_scm(&spec, mask).map_err(|e| fail(e.to_string()))?;
                        let d = steering_matrix_or_selector(&scm_s, ref_channel);
                        let w =
                            mpdr(&scm_y, &d, ref_channel).map_err(|e| fail(e.to_string()))?;
                        apply_beamformer(&w, &spec).map_err(|e| fail(e.to_string()))?
                    }
                    Some(ChainStep::Wpd) => {
                        wpd(&spec, mask, cfg.enhance.wpd.delay, cfg.enhance.wpd.taps, ref_channel)
                            .map_err(|e| fail(e.to_string()))?
                    }
                    Some(step) => unreachable!("{step} is not a beamformer"),
                };
                out.push(synthesize(&est_spec).map_err(|e| fail(e.to_string()))?);
            }
            out
        }
    };

    let mut estimate_paths: Vec<PathBuf> = Vec::with_capacity(estimates.len());
    for (j, est) in estimates.iter().enumerate() {
        let path = dir.join(format!("{id}_est{j}.wav"));
        write_wav(&path, est, WavEncoding::Float32).map_err(|e| fail(e.to_string()))?;
        estimate_paths.push(absolute(&path)?);
    }
    Ok(ManifestEntry {
        utt_id: id.clone(),
        mixture: absolute(&entry.mixture)?,
        references: estimate_paths,
        noise: None,
    })
}

/// Oracle masks for each reference source against the current (possibly
/// dereverberated) reference-channel spectrogram. Whatever the references do
/// not explain is appended as an extra competitor so noise energy never gets
/// attributed to a source.
fn oracle_masks(
    cfg: &PipelineConfig,
    entry: &ManifestEntry,
    mix_ref: &ComplexSpectrogram<f64>,
    kind: sepkit::mask::MaskKind,
) -> Result<Vec<TimeFreqMask<f64>>, String> {
    let mut ref_specs: Vec<ComplexSpectrogram<f64>> = Vec::with_capacity(entry.references.len());
    for path in &entry.references {
        let w: Waveform<f64> = read_wav(path).map_err(|e| e.to_string())?;
        let mono = Waveform::from_mono(w.sample_rate, w.samples(0).to_vec());
        ref_specs.push(analyze(&mono, cfg.stft).map_err(|e| e.to_string())?);
    }

    let mut residual = mix_ref.clone();
    for s in &ref_specs {
        if s.frames() != residual.frames() || s.bins() != residual.bins() {
            return Err(format!(
                "reference spectrogram is {}x{}, mixture is {}x{}",
                s.frames(),
                s.bins(),
                residual.frames(),
                residual.bins()
            ));
        }
        residual.values -= &s.values;
    }
    ref_specs.push(residual);

    let sources = entry.references.len();
    let clip = DEFAULT_CLIP;
    let mut masks =
        compute_oracle_masks(&ref_specs, mix_ref, kind, clip).map_err(|e| e.to_string())?;
    masks.truncate(sources);
    Ok(masks)
}
