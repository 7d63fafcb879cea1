use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::normalize_chars;
use crate::emi_condition::{concat_condition_var, AttentionParams, AttentionVars, CouplingParams, CouplingVars};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng, Tape, Var};

pub const VOCAB: &str = "abcdefghijklmnopqrstuvwxyz .";
pub const MIN_FRAMES: usize = 1;
pub const MAX_FRAMES: usize = 20;

/// Where the emotion embedding enters the acoustic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Frame-wise concatenation (Tacotron-style).
    #[serde(rename = "tacotron")]
    Concat,
    /// Conditional cross-attention (FastSpeech-style).
    #[serde(rename = "fastspeech")]
    CrossAttention,
    /// Emotion-conditioned affine coupling (VITS-style).
    #[serde(rename = "vits")]
    CouplingFlow,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Concat, Variant::CrossAttention, Variant::CouplingFlow];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Concat => "tacotron",
            Variant::CrossAttention => "fastspeech",
            Variant::CouplingFlow => "vits",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tacotron" | "concat" => Ok(Variant::Concat),
            "fastspeech" | "cross-attention" | "attention" => Ok(Variant::CrossAttention),
            "vits" | "flow" | "coupling" => Ok(Variant::CouplingFlow),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected vits, fastspeech or tacotron)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsDims {
    pub char_dim: usize,
    pub emo_dim: usize,
    pub spk_dim: usize,
    pub n_speakers: usize,
    pub hidden: usize,
    pub n_mels: usize,
}

impl Default for TtsDims {
    fn default() -> Self {
        Self {
            char_dim: 32,
            emo_dim: 32,
            spk_dim: 8,
            n_speakers: 4,
            hidden: 64,
            n_mels: 40,
        }
    }
}

impl TtsDims {
    pub fn validate(&self) -> Result<()> {
        if self.char_dim == 0 || self.char_dim % 2 != 0 {
            return Err(Error::Config(format!("char_dim {} must be positive and even", self.char_dim)));
        }
        for (name, v) in [
            ("emo_dim", self.emo_dim),
            ("n_speakers", self.n_speakers),
            ("hidden", self.hidden),
            ("n_mels", self.n_mels),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of the conditioned character features for a variant.
    pub fn cond_width(&self, variant: Variant) -> usize {
        match variant {
            Variant::Concat => self.char_dim + self.emo_dim + self.spk_dim,
            _ => self.char_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Conditioning {
    Concat,
    Attention(AttentionParams),
    Coupling(CouplingParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsParams {
    pub variant: Variant,
    pub dims: TtsDims,
    pub char_table: Matrix,
    pub enc_w: Matrix,
    pub enc_b: Matrix,
    pub speaker_table: Matrix,
    pub dur_w: Matrix,
    pub dur_b: Matrix,
    pub dec_w1: Matrix,
    pub dec_b1: Matrix,
    pub dec_w2: Matrix,
    pub dec_b2: Matrix,
    pub conditioning: Conditioning,
}

const BASE_TENSORS: usize = 10;

impl TtsParams {
    /// Each component draws from its own stream, so components shared by
    /// two variants start identical under the same seed.
    pub fn init(variant: Variant, dims: TtsDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let s = |name: &str| Rng::stream(seed, &format!("synth.{name}"));
        let (l, width) = (dims.char_dim, dims.cond_width(variant));
        let joint = dims.emo_dim + dims.spk_dim;
        let mut enc = s("encoder");
        let mut dec = s("decoder");
        let conditioning = match variant {
            Variant::Concat => Conditioning::Concat,
            Variant::CrossAttention => Conditioning::Attention(AttentionParams::init(l, joint, &mut s("attention"))),
            Variant::CouplingFlow => Conditioning::Coupling(CouplingParams::init(l, joint, &mut s("coupling"), 0.1)?),
        };
        Ok(Self {
            variant,
            dims,
            char_table: s("char_table").normal_matrix(VOCAB.len(), l, 1.0),
            enc_w: enc.glorot(l, l),
            enc_b: Matrix::zeros(1, l),
            speaker_table: s("speaker_table").normal_matrix(dims.n_speakers, dims.spk_dim, 1.0),
            dur_w: s("duration").normal_matrix(width, 1, 0.01),
            dur_b: Matrix::zeros(1, 1),
            dec_w1: dec.glorot(width + 1, dims.hidden),
            dec_b1: Matrix::zeros(1, dims.hidden),
            dec_w2: dec.glorot(dims.hidden, dims.n_mels),
            dec_b2: Matrix::zeros(1, dims.n_mels),
            conditioning,
        })
    }

    pub fn to_tensors(&self) -> Vec<Matrix> {
        let mut t = vec![
            self.char_table.clone(),
            self.enc_w.clone(),
            self.enc_b.clone(),
            self.speaker_table.clone(),
            self.dur_w.clone(),
            self.dur_b.clone(),
            self.dec_w1.clone(),
            self.dec_b1.clone(),
            self.dec_w2.clone(),
            self.dec_b2.clone(),
        ];
        match &self.conditioning {
            Conditioning::Concat => {}
            Conditioning::Attention(a) => t.extend(a.to_tensors()),
            Conditioning::Coupling(c) => t.extend(c.to_tensors()),
        }
        t
    }

    /// Rebuilds parameters of the same variant and dims from `t`.
    pub fn with_tensors(&self, t: &[Matrix]) -> Result<Self> {
        let expected = self.to_tensors();
        if t.len() != expected.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", expected.len(), t.len())));
        }
        for (i, (a, b)) in t.iter().zip(&expected).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "tensor {i} is {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        let rest = &t[BASE_TENSORS..];
        let conditioning = match &self.conditioning {
            Conditioning::Concat => Conditioning::Concat,
            Conditioning::Attention(a) => Conditioning::Attention(AttentionParams::from_tensors(a.dim, rest)?),
            Conditioning::Coupling(c) => Conditioning::Coupling(CouplingParams::from_tensors(c.channels, rest)?),
        };
        Ok(Self {
            variant: self.variant,
            dims: self.dims,
            char_table: t[0].clone(),
            enc_w: t[1].clone(),
            enc_b: t[2].clone(),
            speaker_table: t[3].clone(),
            dur_w: t[4].clone(),
            dur_b: t[5].clone(),
            dec_w1: t[6].clone(),
            dec_b1: t[7].clone(),
            dec_w2: t[8].clone(),
            dec_b2: t[9].clone(),
            conditioning,
        })
    }

    /// Structural check after loading.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::init(self.variant, self.dims, 0)?;
        fresh.with_tensors(&self.to_tensors())?;
        if self.to_tensors().iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn speaker_embedding(&self, speaker: usize) -> Result<Vec<f64>> {
        if speaker >= self.dims.n_speakers {
            return Err(Error::InvalidInput(format!(
                "speaker {speaker} out of range (model has {})",
                self.dims.n_speakers
            )));
        }
        Ok(self.speaker_table.row(speaker).to_vec())
    }
}

/// Character indices of the normalized text.
pub fn char_indices(text: &str) -> Result<Vec<usize>> {
    let norm = normalize_chars(text);
    if norm.is_empty() {
        return Err(Error::InvalidInput(format!("{text:?} has no characters in the vocabulary")));
    }
    Ok(norm
        .chars()
        .map(|c| VOCAB.find(c).expect("normalized characters are in the vocabulary"))
        .collect())
}

/// Frame-level decoder inputs: source row per frame and in-segment position.
pub fn expand_plan(durations: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut pos = Vec::new();
    for (i, &d) in durations.iter().enumerate() {
        for k in 0..d {
            rows.push(i);
            pos.push((k as f64 + 0.5) / d as f64);
        }
    }
    (rows, pos)
}

pub fn round_duration(raw: f64) -> usize {
    raw.round().clamp(MIN_FRAMES as f64, MAX_FRAMES as f64) as usize
}

/// The model's tensors as tape variables.
pub(crate) struct TtsVars {
    pub variant: Variant,
    pub char_table: Var,
    pub enc_w: Var,
    pub enc_b: Var,
    pub speaker_table: Var,
    pub dur_w: Var,
    pub dur_b: Var,
    pub dec_w1: Var,
    pub dec_b1: Var,
    pub dec_w2: Var,
    pub dec_b2: Var,
    pub attention: Option<AttentionVars>,
    pub coupling: Option<CouplingVars>,
}

impl TtsVars {
    pub fn from_vars(params: &TtsParams, v: &[Var]) -> Self {
        let rest = &v[BASE_TENSORS..];
        let (attention, coupling) = match &params.conditioning {
            Conditioning::Concat => (None, None),
            Conditioning::Attention(a) => (Some(AttentionVars::from_vars(a.dim, rest)), None),
            Conditioning::Coupling(c) => (None, Some(CouplingVars::from_vars(c.channels, rest))),
        };
        Self {
            variant: params.variant,
            char_table: v[0],
            enc_w: v[1],
            enc_b: v[2],
            speaker_table: v[3],
            dur_w: v[4],
            dur_b: v[5],
            dec_w1: v[6],
            dec_b1: v[7],
            dec_w2: v[8],
            dec_b2: v[9],
            attention,
            coupling,
        }
    }

    pub fn constants(tape: &mut Tape, params: &TtsParams) -> Self {
        let v: Vec<Var> = params.to_tensors().into_iter().map(|m| tape.constant(m)).collect();
        Self::from_vars(params, &v)
    }

    /// `h_lg`: character embedding followed by a position-wise tanh layer.
    pub fn encode(&self, tape: &mut Tape, chars: &[usize]) -> Result<Var> {
        let e = tape.gather_rows(self.char_table, chars)?;
        let h = tape.matmul(e, self.enc_w)?;
        let h = tape.add_row(h, self.enc_b)?;
        Ok(tape.tanh(h))
    }

    /// Applies the variant's conditioning to `h_lg`.
    pub fn condition(&self, tape: &mut Tape, h_lg: Var, u_emo: Var, speaker: usize) -> Result<Var> {
        let u_spk = tape.gather_rows(self.speaker_table, &[speaker])?;
        let joint = tape.concat_cols(u_emo, u_spk)?;
        match self.variant {
            Variant::Concat => concat_condition_var(tape, h_lg, joint),
            Variant::CrossAttention => {
                let a = self.attention.expect("attention params");
                let c = a.condition(tape, joint)?;
                a.attend(tape, h_lg, c)
            }
            Variant::CouplingFlow => {
                let (h, _log_det) = self.coupling.expect("coupling params").forward(tape, h_lg, joint)?;
                Ok(h)
            }
        }
    }

    /// Softplus duration head, one raw (unrounded) value per character.
    pub fn durations(&self, tape: &mut Tape, h_cond: Var) -> Result<Var> {
        let d = tape.matmul(h_cond, self.dur_w)?;
        let d = tape.add_row(d, self.dur_b)?;
        Ok(tape.softplus(d))
    }

    /// Duration expansion and the two-layer frame decoder.
    pub fn decode(&self, tape: &mut Tape, h_cond: Var, durations: &[usize]) -> Result<Var> {
        let (rows, pos) = expand_plan(durations);
        if rows.is_empty() {
            return Err(Error::InvalidInput("no frames to decode".into()));
        }
        let frames = tape.gather_rows(h_cond, &rows)?;
        let n = pos.len();
        let pos = tape.constant(Matrix::from_vec(n, 1, pos)?);
        let x = tape.concat_cols(frames, pos)?;
        let h = tape.matmul(x, self.dec_w1)?;
        let h = tape.add_row(h, self.dec_b1)?;
        let h = tape.tanh(h);
        let y = tape.matmul(h, self.dec_w2)?;
        tape.add_row(y, self.dec_b2)
    }
}
