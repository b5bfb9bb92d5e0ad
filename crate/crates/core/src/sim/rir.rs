//! Image-method room impulse responses for a shoebox room.
//!
//! Uniform wall absorption comes from the target decay time through
//! Sabine's formula; each image source contributes an 81-tap Hann-windowed
//! sinc pulse centered on its fractional arrival time.

use serde::{Deserialize, Serialize};

use super::{SimError, SPEED_OF_SOUND};
use crate::audio::Waveform;
use crate::scalar::Scalar;

/// Half-width of the fractional-delay pulse; the full kernel spans
/// `2 * PULSE_HALF + 1` taps.
const PULSE_HALF: isize = 40;

fn default_c() -> f64 {
    SPEED_OF_SOUND
}

/// Shoebox room geometry and reverberation target for one source position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirSpec {
    /// Room dimensions in meters.
    pub room: [f64; 3],
    /// Source position in meters.
    pub source: [f64; 3],
    /// Microphone positions in meters.
    pub mics: Vec<[f64; 3]>,
    /// Reverberation time in seconds; 0 generates only the direct path.
    pub t60: f64,
    /// Cap on the total number of wall reflections per image.
    pub max_order: usize,
    pub fs: u32,
    /// Speed of sound in m/s.
    #[serde(default = "default_c")]
    pub c: f64,
}

impl RirSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidGeometry(msg));
        if self.room.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return bad(format!("room dimensions must be positive, got {:?}", self.room));
        }
        let inside = |p: &[f64; 3]| {
            p.iter().zip(&self.room).all(|(&x, &l)| x > 0.0 && x < l && x.is_finite())
        };
        if !inside(&self.source) {
            return bad(format!("source {:?} is not strictly inside the room", self.source));
        }
        if self.mics.is_empty() {
            return bad("at least one microphone is required".into());
        }
        for (i, mic) in self.mics.iter().enumerate() {
            if !inside(mic) {
                return bad(format!("mic {i} at {mic:?} is not strictly inside the room"));
            }
            let d2: f64 =
                mic.iter().zip(&self.source).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < 1e-6 {
                return bad(format!("mic {i} coincides with the source"));
            }
        }
        if self.t60 < 0.0 || !self.t60.is_finite() {
            return bad(format!("t60 must be nonnegative, got {}", self.t60));
        }
        if self.fs == 0 {
            return bad("sample rate must be positive".into());
        }
        if self.c <= 0.0 || !self.c.is_finite() {
            return bad(format!("speed of sound must be positive, got {}", self.c));
        }
        Ok(())
    }
}

/// Uniform Sabine absorption for the requested decay time.
fn sabine_alpha(room: &[f64; 3], t60: f64) -> f64 {
    let [lx, ly, lz] = *room;
    let volume = lx * ly * lz;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    0.1611 * volume / (surface * t60)
}

/// One mirrored source: pressure amplitude and arrival time in samples.
struct Image {
    amplitude: f64,
    delay: f64,
}

fn enumerate_images(spec: &RirSpec, mic: &[f64; 3], beta: f64, max_order: usize) -> Vec<Image> {
    // Allen-Berkley indexing: per axis the image coordinate is
    // (1 - 2q) * source + 2m * room_len with q in {0, 1}, and the image has
    // bounced |m - q| + |m| times off that axis's wall pair.
    let reach = (max_order as isize + 1) / 2 + 1;
    let per_axis: Vec<Vec<(f64, usize)>> = (0..3)
        .map(|d| {
            let mut list = Vec::new();
            for m in -reach..=reach {
                for q in 0..2isize {
                    let count = (m - q).unsigned_abs() + m.unsigned_abs();
                    if count > max_order {
                        continue;
                    }
                    let coord =
                        (1 - 2 * q) as f64 * spec.source[d] + 2.0 * m as f64 * spec.room[d];
                    list.push((coord, count));
                }
            }
            list
        })
        .collect();

    let mut images = Vec::new();
    for &(x, cx) in &per_axis[0] {
        for &(y, cy) in &per_axis[1] {
            let partial = cx + cy;
            if partial > max_order {
                continue;
            }
            for &(z, cz) in &per_axis[2] {
                let count = partial + cz;
                if count > max_order {
                    continue;
                }
                let dist = ((x - mic[0]).powi(2) + (y - mic[1]).powi(2) + (z - mic[2]).powi(2))
                    .sqrt();
                images.push(Image {
                    amplitude: beta.powi(count as i32)
                        / (4.0 * std::f64::consts::PI * dist),
                    delay: dist / spec.c * spec.fs as f64,
                });
            }
        }
    }
    images
}

fn add_pulse(h: &mut [f64], amplitude: f64, delay: f64) {
    let lo = (delay - PULSE_HALF as f64).ceil() as isize;
    let hi = (delay + PULSE_HALF as f64).floor() as isize;
    for j in lo.max(0)..=hi.min(h.len() as isize - 1) {
        let x = j as f64 - delay;
        let sinc = if x == 0.0 {
            1.0
        } else {
            let px = std::f64::consts::PI * x;
            px.sin() / px
        };
        let window = 0.5 * (1.0 + (std::f64::consts::PI * x / PULSE_HALF as f64).cos());
        h[j as usize] += amplitude * sinc * window;
    }
}

/// Image-method RIRs, one mono waveform per microphone.
pub fn generate_rir<T: Scalar>(spec: &RirSpec) -> Result<Vec<Waveform<T>>, SimError> {
    spec.validate()?;
    let anechoic = spec.t60 == 0.0;
    let max_order = if anechoic { 0 } else { spec.max_order };
    let beta = if anechoic {
        0.0
    } else {
        let alpha = sabine_alpha(&spec.room, spec.t60);
        if alpha > 1.0 {
            return Err(SimError::RoomTooSmall { alpha, t60: spec.t60 });
        }
        (1.0 - alpha).sqrt()
    };

    let mut rirs = Vec::with_capacity(spec.mics.len());
    for mic in &spec.mics {
        let images = enumerate_images(spec, mic, beta, max_order);
        let max_delay = images.iter().fold(0.0f64, |acc, im| acc.max(im.delay));
        let len = ((spec.t60 * spec.fs as f64).ceil() as usize + 81)
            .max(max_delay.ceil() as usize + PULSE_HALF as usize + 1);
        let mut h = vec![0.0f64; len];
        for im in &images {
            add_pulse(&mut h, im.amplitude, im.delay);
        }
        rirs.push(Waveform::from_mono(
            spec.fs,
            h.into_iter().map(T::from_f64_c).collect(),
        ));
    }
    Ok(rirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> RirSpec {
        RirSpec {
            room: [6.0, 5.0, 4.0],
            source: [1.0, 1.0, 1.0],
            mics: vec![[2.715, 1.0, 1.0]],
            t60: 0.0,
            max_order: 0,
            fs: 16_000,
            c: SPEED_OF_SOUND,
        }
    }

    #[test]
    fn anechoic_direct_path_lands_on_the_geometric_delay() {
        // 1.715 m at 343 m/s and 16 kHz is exactly 80 samples.
        let h = &generate_rir::<f64>(&base_spec()).unwrap()[0];
        let taps = h.samples(0);
        let expected = 1.0 / (4.0 * std::f64::consts::PI * 1.715);
        assert!((taps[80] - expected).abs() < 1e-12, "peak {}", taps[80]);
        for (j, &v) in taps.iter().enumerate() {
            if j != 80 {
                assert!(v.abs() < 1e-15, "stray energy at {j}: {v}");
            }
        }
        assert_eq!(h.len(), 121);
    }

    #[test]
    fn t60_zero_ignores_max_order() {
        let spec = RirSpec { max_order: 4, ..base_spec() };
        let h = &generate_rir::<f64>(&spec).unwrap()[0];
        let energy_off_peak: f64 = h
            .samples(0)
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 80)
            .map(|(_, v)| v * v)
            .sum();
        assert!(energy_off_peak < 1e-28);
    }

    #[test]
    fn fractional_delay_peaks_within_one_sample() {
        for dist in [0.9, 1.3371, 2.0502, 3.777] {
            let spec = RirSpec {
                mics: vec![[1.0 + dist, 1.0, 1.0]],
                ..base_spec()
            };
            let h = &generate_rir::<f64>(&spec).unwrap()[0];
            let delay = dist / SPEED_OF_SOUND * 16_000.0;
            let peak = h
                .samples(0)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            assert!(
                (peak as f64 - delay).abs() <= 1.0,
                "dist {dist}: peak {peak} vs delay {delay}"
            );
        }
    }

    #[test]
    fn first_order_images_match_hand_mirrors() {
        // Cube of side 4 with source at the center and mic 1 m away on x:
        // direct path 1 m, x-wall mirrors at 3 m and 5 m, and the four
        // y/z mirrors all at sqrt(17) m.
        let spec = RirSpec {
            room: [4.0, 4.0, 4.0],
            source: [2.0, 2.0, 2.0],
            mics: vec![[3.0, 2.0, 2.0]],
            t60: 0.4,
            max_order: 1,
            fs: 16_000,
            c: SPEED_OF_SOUND,
        };
        let alpha = sabine_alpha(&spec.room, spec.t60);
        let beta = (1.0 - alpha).sqrt();
        let mut got: Vec<(f64, f64)> = enumerate_images(&spec, &spec.mics[0], beta, 1)
            .into_iter()
            .map(|im| (im.delay, im.amplitude))
            .collect();
        got.sort_by(|a, b| a.0.total_cmp(&b.0));

        let fourpi = 4.0 * std::f64::consts::PI;
        let s17 = 17.0f64.sqrt();
        let mut expect: Vec<(f64, f64)> = vec![
            (1.0, 1.0 / fourpi),
            (3.0, beta / (fourpi * 3.0)),
            (5.0, beta / (fourpi * 5.0)),
            (s17, beta / (fourpi * s17)),
            (s17, beta / (fourpi * s17)),
            (s17, beta / (fourpi * s17)),
            (s17, beta / (fourpi * s17)),
        ]
        .into_iter()
        .map(|(d, a)| (d / SPEED_OF_SOUND * 16_000.0, a))
        .collect();
        expect.sort_by(|a, b| a.0.total_cmp(&b.0));

        assert_eq!(got.len(), expect.len());
        for ((gd, ga), (ed, ea)) in got.iter().zip(&expect) {
            assert!((gd - ed).abs() < 1e-9, "delay {gd} vs {ed}");
            assert!((ga - ea).abs() < 1e-12, "amp {ga} vs {ea}");
        }
    }

    #[test]
    fn sabine_rejects_impossible_decay() {
        // A large room cannot decay in 0.1 s with physical absorption.
        let spec = RirSpec {
            room: [10.0, 10.0, 10.0],
            source: [3.0, 4.0, 5.0],
            mics: vec![[6.0, 4.0, 5.0]],
            t60: 0.1,
            max_order: 2,
            fs: 16_000,
            c: SPEED_OF_SOUND,
        };
        assert!(matches!(
            generate_rir::<f64>(&spec),
            Err(SimError::RoomTooSmall { .. })
        ));
    }

    #[test]
    fn geometry_validation_rejects_outside_positions() {
        let outside = RirSpec {
            source: [7.0, 1.0, 1.0],
            ..base_spec()
        };
        assert!(matches!(
            generate_rir::<f64>(&outside),
            Err(SimError::InvalidGeometry(_))
        ));
        let on_wall = RirSpec {
            mics: vec![[6.0, 1.0, 1.0]],
            ..base_spec()
        };
        assert!(matches!(
            generate_rir::<f64>(&on_wall),
            Err(SimError::InvalidGeometry(_))
        ));
        let coincident = RirSpec {
            mics: vec![[1.0, 1.0, 1.0]],
            ..base_spec()
        };
        assert!(matches!(
            generate_rir::<f64>(&coincident),
            Err(SimError::InvalidGeometry(_))
        ));
    }

    /// Backward-integrated energy decay, fit between -5 and -25 dB.
    fn schroeder_t60(h: &[f64], fs: f64) -> f64 {
        let mut energy: Vec<f64> = h.iter().rev().scan(0.0, |acc, &v| {
            *acc += v * v;
            Some(*acc)
        }).collect();
        energy.reverse();
        let total = energy[0];
        let db: Vec<f64> = energy.iter().map(|e| 10.0 * (e / total).log10()).collect();
        let t5 = db.iter().position(|&v| v <= -5.0).unwrap();
        let t25 = db.iter().position(|&v| v <= -25.0).unwrap();
        // Least-squares slope of the decay curve over the fit range.
        let pts: Vec<(f64, f64)> = (t5..=t25).map(|i| (i as f64 / fs, db[i])).collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        -60.0 / slope
    }

    #[test]
    fn schroeder_decay_tracks_the_requested_t60() {
        let spec = RirSpec {
            room: [3.2, 2.6, 2.2],
            source: [0.8, 1.3, 1.1],
            mics: vec![[2.3, 1.5, 1.2]],
            t60: 0.3,
            max_order: 30,
            fs: 16_000,
            c: SPEED_OF_SOUND,
        };
        let h = &generate_rir::<f64>(&spec).unwrap()[0];
        let t = schroeder_t60(h.samples(0).as_slice().unwrap(), 16_000.0);
        assert!(
            (t - 0.3).abs() <= 0.06,
            "Schroeder t60 {t} vs requested 0.3"
        );
    }

    #[test]
    fn rir_length_covers_decay_and_latest_arrival() {
        let spec = RirSpec {
            room: [3.2, 2.6, 2.2],
            source: [0.8, 1.3, 1.1],
            mics: vec![[2.3, 1.5, 1.2]],
            t60: 0.25,
            max_order: 6,
            fs: 16_000,
            c: SPEED_OF_SOUND,
        };
        let h = &generate_rir::<f64>(&spec).unwrap()[0];
        assert!(h.len() >= (0.25f64 * 16_000.0) as usize + 81);
        let tail: f64 = h.samples(0).iter().rev().take(4).map(|v| v * v).sum();
        let total: f64 = h.samples(0).iter().map(|v| v * v).sum();
        assert!(tail < total * 1e-4, "energy piled at the truncation edge");
    }
}
