use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file holding 16-bit mono PCM.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

fn fmt_err(field: &'static str, detail: impl Into<String>) -> Error {
    Error::WavFormat {
        field,
        detail: detail.into(),
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(fmt_err("riff magic", "file does not start with `RIFF`"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(fmt_err("wave magic", "RIFF form type is not `WAVE`"));
    }
    let mut pos = 12;
    let mut sample_rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.saturating_add(size).min(bytes.len());
        match id {
            b"fmt " => {
                if end - body < 16 {
                    return Err(fmt_err(
                        "fmt chunk",
                        format!("{} bytes, need 16", end - body),
                    ));
                }
                let code = u16_at(bytes, body);
                if code != 1 {
                    return Err(fmt_err(
                        "compression code",
                        format!("{code}, only PCM (1) is supported"),
                    ));
                }
                let channels = u16_at(bytes, body + 2);
                if channels != 1 {
                    return Err(fmt_err(
                        "channel count",
                        format!("{channels}, only mono is supported"),
                    ));
                }
                let rate = u32_at(bytes, body + 4);
                if rate == 0 {
                    return Err(fmt_err("sample rate", "0"));
                }
                let bits = u16_at(bytes, body + 14);
                if bits != 16 {
                    return Err(fmt_err(
                        "bits per sample",
                        format!("{bits}, only 16 is supported"),
                    ));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate
                    .ok_or_else(|| fmt_err("fmt chunk", "data chunk before fmt chunk"))?;
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return Ok(Waveform {
                    sample_rate: rate,
                    samples,
                });
            }
            _ => {}
        }
        // Chunks are padded to even sizes.
        pos = body.saturating_add(size + (size & 1));
    }
    Err(fmt_err("data chunk", "missing"))
}

/// Encodes samples as 16-bit mono PCM, clamping to the representable range.
pub fn encode_wav(sample_rate: u32, samples: &[f64]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0)
            .round()
            .clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, sample_rate: u32, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav(sample_rate, samples)).map_err(|e| Error::io(path, e))
}
