//! Corpus synthesis: seeded speech-like sources, optional room
//! spatialization, optional noise at a target SNR, one WAV set plus a JSON
//! recipe sidecar per utterance, and a manifest tying it together.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use sepkit::audio::{write_manifest, write_wav, Manifest, ManifestEntry, WavEncoding, Waveform};
use sepkit::sim::{
    convolve, gen_noise, gen_speech_like, generate_rir, mix_at_snr, speed_perturb, MixSpec,
    NoiseKind, RirSpec, SPEED_OF_SOUND,
};

use crate::config::{NoisePlacement, PipelineConfig, RoomConfig};
use crate::error::CliError;

use super::{absolute, corpus_dir, corpus_manifest_path, create_dir, utt_id, utt_seed, with_pool};

const SOURCE_SEED_STRIDE: u64 = 1_000_003;
const NOISE_SEED_OFFSET: u64 = 777_777_777;
const GEOMETRY_SEED_OFFSET: u64 = 555_555_555;

pub fn run(cfg: &PipelineConfig, force: bool) -> Result<(), CliError> {
    let manifest_path = corpus_manifest_path(cfg);
    if manifest_path.exists() && !force {
        println!("simulate: {} exists, skipping (--force regenerates)", manifest_path.display());
        return Ok(());
    }
    let dir = corpus_dir(cfg);
    create_dir(&dir)?;

    let entries: Vec<ManifestEntry> = with_pool(cfg.jobs, || {
        (0..cfg.simulate.utterances)
            .into_par_iter()
            .map(|i| simulate_utt(cfg, i, &dir))
            .collect::<Result<_, CliError>>()
    })??;

    write_manifest(&manifest_path, &Manifest { entries })
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", manifest_path.display())))?;
    println!("simulate: wrote {} utterances to {}", cfg.simulate.utterances, dir.display());
    Ok(())
}

/// Per-utterance recipe, enough to regenerate the files from scratch.
#[derive(Serialize)]
struct Sidecar {
    seed: u64,
    speed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mix: Option<MixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rirs: Option<Vec<RirSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_rir: Option<RirSpec>,
}

fn simulate_utt(cfg: &PipelineConfig, index: usize, dir: &Path) -> Result<ManifestEntry, CliError> {
    let id = utt_id(index);
    let fail = |msg: String| CliError::data(format!("{id}: {msg}"));

    let sim = &cfg.simulate;
    let fs = sim.sample_rate;
    let seed = utt_seed(cfg.seed, index);
    let factor = sim.speed_factors[index % sim.speed_factors.len()];
    let base_len = ((sim.duration * fs as f64).round() as usize).max(1);

    // Generate at a length that perturbation maps back onto the target, so
    // every utterance in the corpus has exactly the configured duration.
    let gen_len = ((base_len as f64 * factor).round() as usize).max(1);
    let mut sources: Vec<Waveform<f64>> = Vec::with_capacity(sim.sources);
    for j in 0..sim.sources {
        let sseed = seed.wrapping_add(SOURCE_SEED_STRIDE * (j as u64 + 1));
        let dry = gen_speech_like::<f64>(fs, gen_len, sseed);
        let dry = if factor == 1.0 {
            dry
        } else {
            speed_perturb(&dry, factor).map_err(|e| fail(e.to_string()))?
        };
        sources.push(fit_length(&dry, base_len));
    }

    // Source 0 keeps its level; the rest are scaled source_snr dB below it.
    let p0 = mean_power(&sources[0]);
    if p0 <= 0.0 {
        return Err(fail("source 0 is silent".into()));
    }
    for (j, src) in sources.iter_mut().enumerate().skip(1) {
        let p = mean_power(src);
        if p <= 0.0 {
            return Err(fail(format!("source {j} is silent")));
        }
        let gain = (p0 / (p * 10.0f64.powf(sim.source_snr / 10.0))).sqrt();
        src.data.mapv_inplace(|v| v * gain);
    }

    // Spatialize through per-source RIRs when a room is configured; the
    // reference for each source is its image at the reference channel.
    let mut geom = GeomStream::new(seed.wrapping_add(GEOMETRY_SEED_OFFSET));
    let channels = sim.room.as_ref().map_or(1, |r| r.mics.len());
    let mut speech_sum: Array2<f64> = Array2::zeros((channels, base_len));
    let mut references: Vec<Waveform<f64>> = Vec::with_capacity(sim.sources);
    let mut rir_specs: Vec<RirSpec> = Vec::new();
    for (j, src) in sources.iter().enumerate() {
        match &sim.room {
            Some(room) => {
                let spec = rir_spec(room, geom.position(room), fs);
                let image = spatialize(src, &spec).map_err(|e| fail(format!("source {j}: {e}")))?;
                speech_sum += &image.data;
                references.push(Waveform::new(fs, image.data.slice(s![cfg.enhance.ref_channel..cfg.enhance.ref_channel + 1, ..]).to_owned()));
                rir_specs.push(spec);
            }
            None => {
                speech_sum += &src.data;
                references.push(src.clone());
            }
        }
    }
    let speech_sum = Waveform::new(fs, speech_sum);

    let mut mix_spec = None;
    let mut noise_rir = None;
    let (mixture, noise) = match sim.noise_snr {
        Some(snr) => {
            let nseed = seed.wrapping_add(NOISE_SEED_OFFSET);
            let noise = match (sim.noise_kind, &sim.room) {
                (NoisePlacement::Point, Some(room)) => {
                    let dry = gen_noise::<f64>(fs, base_len, 1, nseed, NoiseKind::White)
                        .map_err(|e| fail(e.to_string()))?;
                    let spec = rir_spec(room, geom.position(room), fs);
                    let image =
                        spatialize(&dry, &spec).map_err(|e| fail(format!("noise: {e}")))?;
                    noise_rir = Some(spec);
                    image
                }
                _ => gen_noise::<f64>(fs, base_len, channels, nseed, NoiseKind::White)
                    .map_err(|e| fail(e.to_string()))?,
            };
            let out = mix_at_snr(&speech_sum, &noise, snr).map_err(|e| fail(e.to_string()))?;
            mix_spec = Some(MixSpec { snr, seed: nseed, sources: sim.sources });
            (out.mixture, Some(out.scaled_noise))
        }
        None => (speech_sum, None),
    };

    let save = |name: &str, w: &Waveform<f64>| -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        write_wav(&path, w, WavEncoding::Float32).map_err(|e| fail(e.to_string()))?;
        absolute(&path)
    };
    let mixture_path = save(&format!("{id}_mix.wav"), &mixture)?;
    let mut reference_paths = Vec::with_capacity(references.len());
    for (j, r) in references.iter().enumerate() {
        reference_paths.push(save(&format!("{id}_src{j}.wav"), r)?);
    }
    let noise_path = noise.as_ref().map(|n| save(&format!("{id}_noise.wav"), n)).transpose()?;

    let sidecar = Sidecar {
        seed,
        speed: factor,
        mix: mix_spec,
        rirs: if rir_specs.is_empty() { None } else { Some(rir_specs) },
        noise_rir,
    };
    let sidecar_path = dir.join(format!("{id}.json"));
    let mut body = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    body.push('\n');
    std::fs::write(&sidecar_path, body)
        .map_err(|e| fail(format!("cannot write {}: {e}", sidecar_path.display())))?;

    Ok(ManifestEntry {
        utt_id: id,
        mixture: mixture_path,
        references: reference_paths,
        noise: noise_path,
    })
}

fn rir_spec(room: &RoomConfig, source: [f64; 3], fs: u32) -> RirSpec {
    RirSpec {
        room: room.size,
        source,
        mics: room.mics.clone(),
        t60: room.t60,
        max_order: room.max_order,
        fs,
        c: SPEED_OF_SOUND,
    }
}

/// Convolve a mono signal with one RIR per mic into a multichannel image.
fn spatialize(
    src: &Waveform<f64>,
    spec: &RirSpec,
) -> Result<Waveform<f64>, sepkit::sim::SimError> {
    let rirs = generate_rir::<f64>(spec)?;
    let mut data = Array2::zeros((rirs.len(), src.len()));
    for (c, rir) in rirs.iter().enumerate() {
        let wet = convolve(src, rir)?;
        data.row_mut(c).assign(&wet.data.row(0));
    }
    Ok(Waveform::new(src.sample_rate, data))
}

/// Zero-pad or truncate to exactly `len` samples.
fn fit_length(w: &Waveform<f64>, len: usize) -> Waveform<f64> {
    let mut data = Array2::zeros((w.channels(), len));
    let n = w.len().min(len);
    data.slice_mut(s![.., ..n]).assign(&w.data.slice(s![.., ..n]));
    Waveform::new(w.sample_rate, data)
}

fn mean_power(w: &Waveform<f64>) -> f64 {
    w.data.iter().map(|v| v * v).sum::<f64>() / (w.channels() * w.len()) as f64
}

/// Seeded position sampler for sources and point noise.
struct GeomStream {
    rng: ChaCha12Rng,
}

impl GeomStream {
    fn new(seed: u64) -> Self {
        GeomStream { rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform position away from the walls; resampled while it lands on a
    /// microphone.
    fn position(&mut self, room: &RoomConfig) -> [f64; 3] {
        let mut pos = [0.0; 3];
        for _ in 0..32 {
            for (axis, p) in pos.iter_mut().enumerate() {
                let dim = room.size[axis];
                let margin = (0.3f64).min(dim / 4.0);
                *p = margin + self.uniform() * (dim - 2.0 * margin);
            }
            let clear = room.mics.iter().all(|m| {
                let d2: f64 =
                    m.iter().zip(&pos).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 >= 0.05 * 0.05
            });
            if clear {
                break;
            }
        }
        pos
    }
}
