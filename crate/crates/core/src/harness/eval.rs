//! Top-k scoring and the evaluation report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Percentage of references found among the first `k` ranked words, for
/// each requested `k`.
pub fn eval_topk<S: AsRef<str>>(
    ranked: &[Vec<S>],
    references: &[S],
    ks: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if ranked.len() != references.len() {
        return Err(Error::shape("eval_topk", references.len(), ranked.len()));
    }
    if let Some(i) = ranked.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCandidates(i));
    }
    if references.is_empty() {
        return Ok(ks.iter().map(|&k| (k, 0.0)).collect());
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranked
                .iter()
                .zip(references)
                .filter(|(list, r)| list.iter().take(k).any(|w| w.as_ref() == r.as_ref()))
                .count();
            (k, 100.0 * hits as f64 / references.len() as f64)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub top1: f64,
    pub top10: f64,
    pub tokens: usize,
}

impl TopK {
    pub fn from_predictions(preds: &[&TokenPrediction]) -> Result<Self> {
        let ranked: Vec<Vec<&str>> = preds
            .iter()
            .map(|p| p.ranked.iter().map(String::as_str).collect())
            .collect();
        let refs: Vec<&str> = preds.iter().map(|p| p.reference.as_str()).collect();
        let acc = eval_topk(&ranked, &refs, &[1, 10])?;
        Ok(Self {
            top1: acc[0].1,
            top10: acc[1].1,
            tokens: preds.len(),
        })
    }
}

/// One decoded spoken token, as written to the predictions dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub token: usize,
    pub utterance: String,
    pub speaker: String,
    pub reference: String,
    pub seed: bool,
    pub ranked: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamAccuracy {
    pub beam_width: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptPair {
    pub utterance: String,
    pub reference: Vec<String>,
    pub before: Vec<String>,
    pub after: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Nearest-centroid speaker accuracy on speaker vectors, in percent.
    pub speaker_probe: Option<f64>,
    /// Discriminator pair accuracy on phonetic vectors, in percent.
    pub discriminator: Option<f64>,
    pub speech_loss_first: Option<f64>,
    pub speech_loss_last: Option<f64>,
    pub text_loss_first: Option<f64>,
    pub text_loss_last: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub seeds: usize,
    pub vocabulary: usize,
    pub paired: TopK,
    pub unpaired: TopK,
    /// Unpaired top-1 after LM rescoring, per beam width.
    pub rescored: Vec<BeamAccuracy>,
    /// Before/after transcripts at the widest beam.
    pub transcripts: Vec<TranscriptPair>,
    pub diagnostics: Diagnostics,
    pub timings_s: BTreeMap<String, f64>,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

impl EvalReport {
    /// The report with timings cleared, for comparing reruns.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_s: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "seeds N = {}, vocabulary = {}",
            self.seeds, self.vocabulary
        );
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8} {:>8}",
            "set", "tokens", "top-1", "top-10"
        );
        for (name, t) in [("paired", &self.paired), ("unpaired", &self.unpaired)] {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>8.1} {:>8.1}",
                name,
                t.tokens,
                round1(t.top1),
                round1(t.top10)
            );
        }
        if !self.rescored.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<10} {:>8}", "beam K", "top-1");
            let _ = writeln!(s, "{:<10} {:>8.1}", "no LM", round1(self.unpaired.top1));
            for b in &self.rescored {
                let _ = writeln!(s, "{:<10} {:>8.1}", b.beam_width, round1(b.accuracy));
            }
        }
        let d = &self.diagnostics;
        if d.speaker_probe.is_some() || d.discriminator.is_some() {
            let _ = writeln!(s);
            if let Some(p) = d.speaker_probe {
                let _ = writeln!(s, "speaker probe on v_s: {:.1}", round1(p));
            }
            if let Some(p) = d.discriminator {
                let _ = writeln!(s, "discriminator on v_p pairs: {:.1}", round1(p));
            }
        }
        s
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()? + "\n").map_err(|e| Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.table()).map_err(|e| Error::io(&txt, e))
    }
}

pub fn write_predictions(preds: &[TokenPrediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut buf, p)?;
        buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<TokenPrediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
