//! Per-utterance scoring with a single consistent permutation, plus report
//! assembly and serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{bss_eval, si_snr, snr, stoi, MetricError, DEFAULT_FILTER_LEN};
use crate::audio::Waveform;
use crate::objective::for_each_permutation;
use crate::scalar::Scalar;
use crate::DB_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    SiSnr,
    Snr,
    Sdr,
    Sir,
    Sar,
    Stoi,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::SiSnr,
        MetricKind::Snr,
        MetricKind::Sdr,
        MetricKind::Sir,
        MetricKind::Sar,
        MetricKind::Stoi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::SiSnr => "si_snr",
            MetricKind::Snr => "snr",
            MetricKind::Sdr => "sdr",
            MetricKind::Sir => "sir",
            MetricKind::Sar => "sar",
            MetricKind::Stoi => "stoi",
        }
    }

    fn needs_bss(self) -> bool {
        matches!(self, MetricKind::Sdr | MetricKind::Sir | MetricKind::Sar)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MetricError::InvalidParameter(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub metrics: Vec<MetricKind>,
    /// Trim every signal to the shortest length instead of rejecting
    /// mismatched lengths.
    pub trim: bool,
    pub bss_filter_len: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            metrics: MetricKind::ALL.to_vec(),
            trim: false,
            bss_filter_len: DEFAULT_FILTER_LEN,
        }
    }
}

/// One scored utterance: metric name to value, and the estimate-to-reference
/// assignment every metric was computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct UttScore {
    pub values: BTreeMap<String, f64>,
    pub permutation: Vec<usize>,
}

/// Score a set of estimates against references. One permutation is chosen
/// per utterance (from BSS-eval when any of sdr/sir/sar is requested,
/// otherwise from SI-SNR PIT) and reused for every metric.
///
/// STOI is omitted from the result, rather than failing the utterance, when
/// the signal is too short or too quiet to evaluate.
pub fn score_utterance<T: Scalar>(
    ests: &[Waveform<T>],
    refs: &[Waveform<T>],
    opts: &ScoreOptions,
) -> Result<UttScore, MetricError> {
    if ests.len() != refs.len() {
        return Err(MetricError::SourceCountMismatch(ests.len(), refs.len()));
    }
    let sources = refs.len();
    if sources == 0 {
        return Err(MetricError::InvalidParameter("empty source list".into()));
    }

    let min_len = ests.iter().chain(refs.iter()).map(Waveform::len).min().unwrap();
    let max_len = ests.iter().chain(refs.iter()).map(Waveform::len).max().unwrap();
    if min_len != max_len && !opts.trim {
        return Err(MetricError::LengthMismatch(min_len, max_len));
    }
    let cut = |w: &Waveform<T>| -> Waveform<T> {
        Waveform::from_mono(w.sample_rate, w.samples(0).iter().take(min_len).cloned().collect())
    };
    let ests: Vec<Waveform<T>> = ests.iter().map(cut).collect();
    let refs: Vec<Waveform<T>> = refs.iter().map(cut).collect();

    let wants_bss = opts.metrics.iter().any(|m| m.needs_bss());
    let bss = if wants_bss {
        Some(bss_eval(&ests, &refs, opts.bss_filter_len)?)
    } else {
        None
    };
    let permutation = match &bss {
        Some(b) => b.permutation.clone(),
        None if sources == 1 => vec![0],
        None => {
            let mut losses = vec![vec![0.0f64; sources]; sources];
            for i in 0..sources {
                for j in 0..sources {
                    losses[i][j] = -si_snr(&ests[i], &refs[j])?;
                }
            }
            if sources > crate::objective::PIT_LIMIT {
                return Err(MetricError::TooManySources {
                    sources,
                    limit: crate::objective::PIT_LIMIT,
                });
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            for_each_permutation(sources, |perm| {
                let total: f64 = perm.iter().enumerate().map(|(i, &j)| losses[i][j]).sum();
                if best.as_ref().is_none_or(|(b, _)| total < *b) {
                    best = Some((total, perm.to_vec()));
                }
            });
            best.expect("at least one permutation").1
        }
    };

    let mean_over_pairs = |f: &dyn Fn(usize, usize) -> Result<f64, MetricError>| {
        let mut total = 0.0;
        for (i, &j) in permutation.iter().enumerate() {
            total += f(i, j)?;
        }
        Ok(total / sources as f64)
    };

    let mut values = BTreeMap::new();
    for &metric in &opts.metrics {
        let value = match metric {
            MetricKind::SiSnr => mean_over_pairs(&|i, j| si_snr(&ests[i], &refs[j]))?,
            MetricKind::Snr => mean_over_pairs(&|i, j| snr(&ests[i], &refs[j]))?,
            MetricKind::Sdr => mean(&bss.as_ref().unwrap().sdr),
            MetricKind::Sir => mean(&bss.as_ref().unwrap().sir),
            MetricKind::Sar => mean(&bss.as_ref().unwrap().sar),
            MetricKind::Stoi => {
                match mean_over_pairs(&|i, j| stoi(&ests[i], &refs[j])) {
                    Ok(v) => v,
                    Err(MetricError::TooShort { .. } | MetricError::ZeroReference) => continue,
                    Err(e) => return Err(e),
                }
            }
        };
        values.insert(metric.name().to_string(), value);
    }
    Ok(UttScore { values, permutation })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scored corpus: utterances in manifest order plus metric means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub entries: Vec<(String, UttScore)>,
}

/// dB-capped values render as infinity strings so a reader never mistakes
/// the cap for a measured ratio.
fn render_value(v: f64) -> Value {
    if v >= DB_CAP {
        Value::String("inf".into())
    } else if v <= -DB_CAP {
        Value::String("-inf".into())
    } else {
        json!(v)
    }
}

fn render_csv_value(v: f64) -> String {
    if v >= DB_CAP {
        "inf".into()
    } else if v <= -DB_CAP {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

impl ScoreReport {
    pub fn push(&mut self, utt_id: impl Into<String>, score: UttScore) {
        self.entries.push((utt_id.into(), score));
    }

    /// Mean of each metric over the utterances that report it.
    pub fn aggregates(&self) -> BTreeMap<String, f64> {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (_, score) in &self.entries {
            for (name, value) in &score.values {
                let slot = sums.entry(name.clone()).or_insert((0.0, 0));
                slot.0 += value;
                slot.1 += 1;
            }
        }
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    pub fn to_json(&self) -> String {
        let per_utt: serde_json::Map<String, Value> = self
            .entries
            .iter()
            .map(|(id, score)| {
                let mut obj = serde_json::Map::new();
                for (name, value) in &score.values {
                    obj.insert(name.clone(), render_value(*value));
                }
                obj.insert("permutation".into(), json!(score.permutation));
                (id.clone(), Value::Object(obj))
            })
            .collect();
        let aggregates: serde_json::Map<String, Value> = self
            .aggregates()
            .into_iter()
            .map(|(k, v)| (k, render_value(v)))
            .collect();
        let root = json!({
            "aggregates": aggregates,
            "per_utt": per_utt,
        });
        let mut out = serde_json::to_string_pretty(&root).expect("report is valid JSON");
        out.push('\n');
        out
    }

    /// One row per utterance in manifest order; columns are the sorted
    /// union of reported metrics. Missing metrics leave the cell empty.
    pub fn to_csv(&self) -> String {
        let mut columns: Vec<String> = self
            .entries
            .iter()
            .flat_map(|(_, s)| s.values.keys().cloned())
            .collect();
        columns.sort();
        columns.dedup();
        let mut out = String::from("utt_id,permutation");
        for c in &columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (id, score) in &self.entries {
            out.push_str(id);
            out.push(',');
            let perm: Vec<String> = score.permutation.iter().map(usize::to_string).collect();
            out.push_str(&perm.join(" "));
            for c in &columns {
                out.push(',');
                if let Some(v) = score.values.get(c) {
                    out.push_str(&render_csv_value(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}
