//! PCM WAV audio I/O and utterance manifests.
//!
//! Manifests bind a mixture recording to its reference sources, one
//! tab-separated record per line:
//!
//! ```text
//! utt_id<TAB>mixture.wav<TAB>ref1.wav,ref2.wav[<TAB>noise.wav]
//! ```
//!
//! Paths are literal files; pipe-style commands are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::scalar::Scalar;

/// Multichannel sampled signal. `data` is channels x samples; amplitudes are
/// nominally in [-1, 1] but not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub sample_rate: u32,
    pub data: Array2<T>,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(sample_rate: u32, data: Array2<T>) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        assert!(data.nrows() >= 1, "waveform must have at least one channel");
        Waveform { sample_rate, data }
    }

    /// Single-channel waveform from a sample vector.
    pub fn from_mono(sample_rate: u32, samples: Vec<T>) -> Self {
        let n = samples.len();
        Waveform::new(sample_rate, Array2::from_shape_vec((1, n), samples).unwrap())
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Copy of one channel as a mono waveform.
    pub fn channel(&self, c: usize) -> Waveform<T> {
        Waveform::new(self.sample_rate, self.data.row(c).insert_axis(ndarray::Axis(0)).to_owned())
    }

    /// Borrowed view of one channel's samples.
    pub fn samples(&self, c: usize) -> ndarray::ArrayView1<'_, T> {
        self.data.row(c)
    }
}

/// Sample encoding used by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported codec or bit depth in {path}: {detail}")]
    UnsupportedCodec { path: PathBuf, detail: String },
    #[error("truncated or corrupt chunk in {path}: {detail}")]
    TruncatedChunk { path: PathBuf, detail: String },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn map_read_err(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            AudioError::MissingFile(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::TruncatedChunk { path: path.to_path_buf(), detail: e.to_string() }
        }
        hound::Error::Unsupported => AudioError::UnsupportedCodec {
            path: path.to_path_buf(),
            detail: "unsupported WAVE codec".into(),
        },
        other => AudioError::TruncatedChunk { path: path.to_path_buf(), detail: other.to_string() },
    }
}

/// Read a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, any channel
/// count). Integer PCM is scaled by 1/32768.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>, AudioError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_read_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;

    let interleaved: Vec<T> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            let scale = T::from_f64_c(1.0 / 32768.0);
            reader
                .samples::<i16>()
                .map(|s| s.map(|v| T::from_f64_c(v as f64) * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| map_read_err(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| T::from_f64_c(v as f64)))
            .collect::<Result<_, _>>()
            .map_err(|e| map_read_err(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedCodec {
                path: path.to_path_buf(),
                detail: format!("{fmt:?} {bits}-bit"),
            })
        }
    };

    let frames = interleaved.len() / channels;
    let mut data = Array2::zeros((channels, frames));
    for (i, v) in interleaved.into_iter().enumerate() {
        data[(i % channels, i / channels)] = v;
    }
    Ok(Waveform::new(spec.sample_rate, data))
}

/// Write a waveform as RIFF/WAVE. `Pcm16` clamps amplitudes to [-1, 1) and
/// rounds to the nearest integer sample; `Float32` stores samples bit-exact.
pub fn write_wav<T: Scalar>(
    path: impl AsRef<Path>,
    w: &Waveform<T>,
    encoding: WavEncoding,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: w.channels() as u16,
        sample_rate: w.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let map_write = |e: hound::Error| match e {
        hound::Error::IoError(source) => AudioError::Unwritable { path: path.to_path_buf(), source },
        other => AudioError::Unwritable {
            path: path.to_path_buf(),
            source: std::io::Error::other(other.to_string()),
        },
    };

    let mut writer = hound::WavWriter::create(path, spec).map_err(map_write)?;
    for frame in 0..w.len() {
        for ch in 0..w.channels() {
            let v = w.data[(ch, frame)].to_f64_c();
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q).map_err(map_write)?;
                }
                WavEncoding::Float32 => {
                    writer.write_sample(v as f32).map_err(map_write)?;
                }
            }
        }
    }
    writer.finalize().map_err(map_write)
}

/// One utterance record: mixture plus its reference sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub mixture: PathBuf,
    pub references: Vec<PathBuf>,
    pub noise: Option<PathBuf>,
}

/// Ordered utterance list with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest not readable: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate utt_id {utt_id:?} at line {line}")]
    DuplicateId { utt_id: String, line: usize },
    #[error("malformed manifest line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
}

impl Manifest {
    pub fn get(&self, utt_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.utt_id == utt_id)
    }

    /// Serialize back to the manifest text format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let refs: Vec<_> = e.references.iter().map(|p| p.display().to_string()).collect();
            let _ = write!(out, "{}\t{}\t{}", e.utt_id, e.mixture.display(), refs.join(","));
            if let Some(noise) = &e.noise {
                let _ = write!(out, "\t{}", noise.display());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest, ManifestError> {
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(ManifestError::MalformedLine {
                    line: line_no,
                    detail: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let utt_id = fields[0].trim();
            if utt_id.is_empty() {
                return Err(ManifestError::MalformedLine {
                    line: line_no,
                    detail: "empty utt_id".into(),
                });
            }
            if entries.iter().any(|e| e.utt_id == utt_id) {
                return Err(ManifestError::DuplicateId { utt_id: utt_id.into(), line: line_no });
            }
            let mixture = parse_path(fields[1], line_no)?;
            let mut references = Vec::new();
            for part in fields[2].split(',') {
                references.push(parse_path(part, line_no)?);
            }
            let noise = match fields.get(3) {
                Some(f) => Some(parse_path(f, line_no)?),
                None => None,
            };
            entries.push(ManifestEntry { utt_id: utt_id.into(), mixture, references, noise });
        }
        Ok(Manifest { entries })
    }
}

fn parse_path(field: &str, line: usize) -> Result<PathBuf, ManifestError> {
    let field = field.trim();
    if field.is_empty() {
        return Err(ManifestError::MalformedLine { line, detail: "empty path field".into() });
    }
    // Kaldi-style pipe commands ("cmd ... |") are deliberately unsupported.
    if field.ends_with('|') || field.contains(' ') {
        return Err(ManifestError::MalformedLine {
            line,
            detail: format!("pipe-style or space-containing path unsupported: {field:?}"),
        });
    }
    Ok(PathBuf::from(field))
}

/// Read and parse a manifest file.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    Manifest::parse(&std::fs::read_to_string(path)?)
}

/// Write a manifest file.
pub fn write_manifest(path: impl AsRef<Path>, m: &Manifest) -> Result<(), ManifestError> {
    Ok(std::fs::write(path, m.to_tsv())?)
}
