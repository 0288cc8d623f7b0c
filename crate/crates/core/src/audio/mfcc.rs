use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const FEATURE_DIM: usize = 39;
const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub mel_filters: usize,
    pub coefficients: usize,
    pub delta_window: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            mel_filters: 26,
            coefficients: 13,
            delta_window: 2,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return Err(Error::Config(format!(
                "frame length {} ms must be at least the hop {} ms (> 0)",
                self.frame_ms, self.hop_ms
            )));
        }
        if self.coefficients == 0 || self.coefficients > self.mel_filters {
            return Err(Error::Config(format!(
                "coefficient count {} must be within 1..={}",
                self.coefficients, self.mel_filters
            )));
        }
        if self.delta_window == 0 {
            return Err(Error::Config("delta window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.frame_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn output_dim(&self) -> usize {
        3 * self.coefficients
    }

    pub fn timing(&self, sample_rate: u32) -> FrameTiming {
        FrameTiming {
            sample_rate,
            frame_samples: self.frame_samples(sample_rate),
            hop_samples: self.hop_samples(sample_rate),
        }
    }
}

/// Frame placement in samples, used to map frames back to time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameTiming {
    pub sample_rate: u32,
    pub frame_samples: usize,
    pub hop_samples: usize,
}

impl FrameTiming {
    pub fn center_s(&self, frame: usize) -> f64 {
        (frame * self.hop_samples) as f64 / self.sample_rate as f64
            + self.frame_samples as f64 / (2.0 * self.sample_rate as f64)
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_samples as f64 / self.sample_rate as f64
    }
}

/// Static cepstra plus first and second differences: `T × 3C`, with C0
/// replaced by the log frame energy.
pub fn mfcc39(w: &Waveform, cfg: &MfccConfig) -> Result<Matrix> {
    cfg.validate()?;
    let frame = cfg.frame_samples(w.sample_rate);
    let hop = cfg.hop_samples(w.sample_rate);
    if frame == 0 || hop == 0 {
        return Err(Error::Config("frame or hop rounds to zero samples".into()));
    }
    if w.samples.len() < frame {
        return Err(Error::AudioTooShort {
            samples: w.samples.len(),
            needed: frame,
        });
    }
    let frames = (w.samples.len() - frame) / hop + 1;

    let mut emphasized = Vec::with_capacity(w.samples.len());
    emphasized.push(w.samples[0]);
    for pair in w.samples.windows(2) {
        emphasized.push(pair[1] - PRE_EMPHASIS * pair[0]);
    }

    let n_fft = frame.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let window: Vec<f64> = (0..frame)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (frame as f64 - 1.0).max(1.0)).cos())
        .collect();
    let filters = mel_filterbank(cfg.mel_filters, n_fft, w.sample_rate);

    let c = cfg.coefficients;
    let mut statics = Matrix::zeros(frames, c);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        let chunk = &emphasized[t * hop..t * hop + frame];
        let energy: f64 = chunk.iter().map(|v| v * v).sum();
        buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        for (b, (x, wv)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            b.re = x * wv;
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|z| z.norm_sqr()).collect();
        let log_mel: Vec<f64> = filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().map(|&(k, wt)| wt * power[k]).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        let cep = dct2_orthonormal(&log_mel, c);
        let row = statics.row_mut(t);
        row.copy_from_slice(&cep);
        row[0] = energy.max(LOG_FLOOR).ln();
    }

    let d1 = deltas(&statics, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    Matrix::hstack(&[&statics, &d1, &d2])
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced evenly on the mel scale from 0 Hz to Nyquist,
/// as sparse `(bin, weight)` lists.
fn mel_filterbank(count: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate as f64 / 2.0;
    let max_mel = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..count + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (count + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..count)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=n_fft / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

fn dct2_orthonormal(x: &[f64], keep: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..keep)
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / m).sqrt()
            } else {
                (2.0 / m).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * i as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Regression deltas over `±window` frames, repeating edge frames.
pub fn deltas(x: &Matrix, window: usize) -> Matrix {
    let (rows, cols) = x.shape();
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let clamp = |t: isize| t.clamp(0, rows as isize - 1) as usize;
    Matrix::from_fn(rows, cols, |t, c| {
        (1..=window)
            .map(|n| {
                let ahead = x.get(clamp(t as isize + n as isize), c);
                let behind = x.get(clamp(t as isize - n as isize), c);
                n as f64 * (ahead - behind)
            })
            .sum::<f64>()
            / denom
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize) -> Waveform {
        Waveform {
            sample_rate: 16_000,
            samples: (0..len)
                .map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.1 * (i as f64 * 0.31).cos())
                .collect(),
        }
    }

    #[test]
    fn one_second_gives_98_frames() {
        let m = mfcc39(&tone(16_000), &MfccConfig::default()).unwrap();
        assert_eq!(m.shape(), (98, FEATURE_DIM));
        assert!(m.is_finite());
    }

    #[test]
    fn silence_has_flat_dynamics() {
        let w = Waveform {
            sample_rate: 16_000,
            samples: vec![0.0; 4000],
        };
        let m = mfcc39(&w, &MfccConfig::default()).unwrap();
        for r in 1..m.rows() {
            assert_eq!(m.row(r), m.row(0));
        }
        for r in 0..m.rows() {
            assert!(m.row(r)[13..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn too_short_audio_is_an_error() {
        let err = mfcc39(&tone(399), &MfccConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AudioTooShort { needed: 400, .. }));
    }

    #[test]
    fn one_hop_shift_shifts_rows() {
        let base = tone(6000);
        let mut shifted = base.clone();
        let mut prefix: Vec<f64> = (0..160).map(|i| 0.05 * (i as f64 * 0.2).sin()).collect();
        prefix.extend(&base.samples);
        shifted.samples = prefix;
        let cfg = MfccConfig::default();
        let a = mfcc39(&base, &cfg).unwrap();
        let b = mfcc39(&shifted, &cfg).unwrap();
        // Deltas reach two frames, delta-deltas four, so skip the edges.
        for t in 5..a.rows() - 5 {
            for c in 0..FEATURE_DIM {
                assert!((a.get(t, c) - b.get(t + 1, c)).abs() < 1e-9, "t={t} c={c}");
            }
        }
    }

    #[test]
    fn deltas_of_a_ramp_are_its_slope() {
        let x = Matrix::from_fn(10, 1, |r, _| 2.0 * r as f64);
        let d = deltas(&x, 2);
        for t in 2..8 {
            assert!((d.get(t, 0) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = MfccConfig {
            frame_ms: 5.0,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MfccConfig {
            coefficients: 27,
            ..MfccConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
