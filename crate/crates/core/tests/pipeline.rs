//! End-to-end flows through the core: oracle masking, beamforming, and
//! scoring chained together the way the pipeline uses them.

use sepkit::audio::Waveform;
use sepkit::beamform::wpd;
use sepkit::mask::{apply_mask, compute_oracle_masks, MaskKind, TimeFreqMask, DEFAULT_CLIP};
use sepkit::metrics::score::{score_utterance, MetricKind, ScoreOptions};
use sepkit::metrics::si_snr;
use sepkit::sim::{gen_speech_like, generate_rir, mix_at_snr, RirSpec, SPEED_OF_SOUND};
use sepkit::stft::{analyze, synthesize, StftConfig};

const FS: u32 = 16_000;

fn img(src: &Waveform<f64>, spec: &RirSpec) -> Waveform<f64> {
    let rirs = generate_rir::<f64>(spec).unwrap();
    let mut data = ndarray::Array2::zeros((rirs.len(), src.len()));
    for (c, rir) in rirs.iter().enumerate() {
        let wet = sepkit::sim::convolve(src, rir).unwrap();
        data.row_mut(c).assign(&wet.data.row(0));
    }
    Waveform::new(src.sample_rate, data)
}

#[test]
fn iam_mask_on_clean_source_reconstructs_it() {
    let source = gen_speech_like::<f64>(FS, 32_000, 41);
    let cfg = StftConfig::default();
    let spec = analyze(&source, cfg).unwrap();
    let masks =
        compute_oracle_masks(std::slice::from_ref(&spec), &spec, MaskKind::Iam, DEFAULT_CLIP)
            .unwrap();
    let est = synthesize(&apply_mask(&spec, &masks[0]).unwrap()).unwrap();
    let v = si_snr(&est, &source).unwrap();
    assert!(v > 40.0, "IAM reconstruction of a clean source: {v} dB");
}

#[test]
fn irm_masks_separate_two_anechoic_speakers() {
    let cfg = StftConfig::default();
    let s0 = gen_speech_like::<f64>(FS, 48_000, 710);
    let s1 = gen_speech_like::<f64>(FS, 48_000, 711);
    let mix = Waveform::new(FS, &s0.data + &s1.data);

    let mix_spec = analyze(&mix, cfg).unwrap();
    let specs = vec![analyze(&s0, cfg).unwrap(), analyze(&s1, cfg).unwrap()];
    let masks = compute_oracle_masks(&specs, &mix_spec, MaskKind::Irm, DEFAULT_CLIP).unwrap();

    let ests: Vec<Waveform<f64>> = masks
        .iter()
        .map(|m| synthesize(&apply_mask(&mix_spec, m).unwrap()).unwrap())
        .collect();
    let refs = vec![s0.clone(), s1.clone()];
    let opts = ScoreOptions {
        metrics: vec![MetricKind::SiSnr],
        ..ScoreOptions::default()
    };

    let masked = score_utterance(&ests, &refs, &opts).unwrap();
    let baseline = score_utterance(&[mix.clone(), mix], &refs, &opts).unwrap();
    let gain = masked.values["si_snr"] - baseline.values["si_snr"];
    assert!(
        masked.values["si_snr"] > 5.0 && gain > 5.0,
        "IRM separation {:.2} dB, mixture baseline {:.2} dB",
        masked.values["si_snr"],
        baseline.values["si_snr"]
    );
    // The identity assignment is optimal when each mask targets its source.
    assert_eq!(masked.permutation, vec![0, 1]);
}

#[test]
fn wpd_recovers_the_reference_channel_of_an_anechoic_capture() {
    let cfg = StftConfig::default();
    let source = gen_speech_like::<f64>(FS, 40_000, 52);
    let spec = RirSpec {
        room: [4.0, 3.0, 2.5],
        source: [1.2, 1.9, 1.1],
        mics: vec![[2.4, 1.5, 1.3], [2.48, 1.5, 1.3]],
        t60: 0.0,
        max_order: 0,
        fs: FS,
        c: SPEED_OF_SOUND,
    };
    let image = img(&source, &spec);
    let reference = Waveform::from_mono(FS, image.samples(0).to_vec());

    // Weak sensor noise keeps the stacked covariance well conditioned.
    let noisy = mix_at_snr(&image, &white(image.channels(), image.len(), 9100), 60.0).unwrap();
    let mix_spec = analyze(&noisy.mixture, cfg).unwrap();
    let ones = TimeFreqMask {
        values: ndarray::Array2::ones((mix_spec.frames(), mix_spec.bins())),
        kind: MaskKind::Irm,
        clip: DEFAULT_CLIP,
    };
    let out = wpd(&mix_spec, &ones, 3, 8, 0).unwrap();
    let est = synthesize(&out).unwrap();
    let v = si_snr(&est, &reference).unwrap();
    assert!(v > 30.0, "WPD on an anechoic capture: {v} dB");
}

fn white(channels: usize, len: usize, seed: u64) -> Waveform<f64> {
    sepkit::sim::gen_noise(FS, len, channels, seed, sepkit::sim::NoiseKind::White).unwrap()
}
