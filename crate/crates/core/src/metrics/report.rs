use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mos::MosSummary;
use super::speech::{mcd, secs};
use super::text::{char_counts, word_counts, ErrorCounts};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// One reference/synthesis pairing to score.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub reference: Waveform,
    pub synth: Waveform,
    pub ref_text: String,
    pub hyp_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScores {
    pub id: String,
    pub wer: f64,
    pub cer: f64,
    pub mcd: f64,
    pub secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosField {
    pub mean: f64,
    pub ci95: f64,
}

impl From<MosSummary> for MosField {
    fn from(m: MosSummary) -> Self {
        Self {
            mean: m.mean,
            ci95: m.half_width_95,
        }
    }
}

/// Corpus scores: WER/CER pooled over all references, MCD/SECS as medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub wer: f64,
    pub cer: f64,
    pub mcd_median: f64,
    pub secs_median: f64,
    pub mos: Option<MosField>,
    pub n_utts: usize,
    pub utterances: Vec<UtteranceScores>,
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("median of nothing".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn evaluate(items: &[EvalItem], mos: Option<MosSummary>) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::InsufficientData("no utterance pairs to evaluate".into()));
    }
    let mut words = ErrorCounts::default();
    let mut chars = ErrorCounts::default();
    let mut utterances = Vec::with_capacity(items.len());
    for item in items {
        let w = word_counts(&item.ref_text, &item.hyp_text)?;
        let c = char_counts(&item.ref_text, &item.hyp_text)?;
        words = words.merge(w);
        chars = chars.merge(c);
        utterances.push(UtteranceScores {
            id: item.id.clone(),
            wer: w.rate()?,
            cer: c.rate()?,
            mcd: mcd(&item.reference, &item.synth)?,
            secs: secs(&item.reference, &item.synth)?,
        });
    }
    let mcds: Vec<f64> = utterances.iter().map(|u| u.mcd).collect();
    let secss: Vec<f64> = utterances.iter().map(|u| u.secs).collect();
    Ok(EvalReport {
        wer: words.rate()?,
        cer: chars.rate()?,
        mcd_median: median(&mcds)?,
        secs_median: median(&secss)?,
        mos: mos.map(MosField::from),
        n_utts: items.len(),
        utterances,
    })
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// One row per utterance: id, wer, cer, mcd, secs.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(to_io)?;
        for u in &self.utterances {
            w.serialize(u).map_err(to_io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
