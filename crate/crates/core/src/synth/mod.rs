//! Character-level emotional TTS at toy scale: text encoder, emotion
//! conditioning (concat, cross-attention or coupling flow), duration
//! expansion, a frame-wise mel decoder and a Griffin-Lim vocoder.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_tts_checkpoint, save_tts_checkpoint, TtsCheckpoint, TTS_CHECKPOINT_MAGIC};
pub use model::{
    char_indices, expand_plan, round_duration, Conditioning, TtsDims, TtsParams, Variant, MAX_FRAMES,
    MIN_FRAMES, VOCAB,
};
pub use train::{tts_examples, train_tts, TrainTtsConfig, TrainedTts, TtsExample};

use model::TtsVars;

use crate::dsp::{GriffinLim, MelSpectrogram, SpectralConfig, Waveform, GRIFFIN_LIM_ITERS};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub waveform: Waveform,
    pub mel: MelSpectrogram,
    pub durations: Vec<usize>,
}

fn check_emotion(u_emo: &[f64], params: &TtsParams) -> Result<()> {
    if u_emo.len() != params.dims.emo_dim {
        return Err(Error::Shape(format!(
            "emotion embedding has {} values, model expects {}",
            u_emo.len(),
            params.dims.emo_dim
        )));
    }
    if u_emo.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("emotion embedding is not finite".into()));
    }
    Ok(())
}

/// Linguistic features `h_lg` (chars x char_dim).
pub fn text_encode(text: &str, params: &TtsParams) -> Result<Matrix> {
    let chars = char_indices(text)?;
    let mut tape = Tape::new();
    let vars = TtsVars::constants(&mut tape, params);
    let h = vars.encode(&mut tape, &chars)?;
    Ok(tape.value(h).clone())
}

/// Emotion- and speaker-conditioned character features.
pub fn condition_features(h_lg: &Matrix, u_emo: &[f64], speaker: usize, params: &TtsParams) -> Result<Matrix> {
    check_emotion(u_emo, params)?;
    params.speaker_embedding(speaker)?;
    let mut tape = Tape::new();
    let vars = TtsVars::constants(&mut tape, params);
    let h = tape.constant(h_lg.clone());
    let u = tape.constant(Matrix::row_vector(u_emo));
    let out = vars.condition(&mut tape, h, u, speaker)?;
    Ok(tape.value(out).clone())
}

/// Frames per character: softplus head, rounded, clamped to `[1, 20]`.
pub fn predict_durations(h_cond: &Matrix, params: &TtsParams) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let vars = TtsVars::constants(&mut tape, params);
    let h = tape.constant(h_cond.clone());
    let raw = vars.durations(&mut tape, h)?;
    Ok(tape.value(raw).data().iter().map(|&d| round_duration(d)).collect())
}

/// Log-mel frames for `text`, using predicted durations unless given.
pub fn synthesize_mel(
    text: &str,
    u_emo: &[f64],
    speaker: usize,
    params: &TtsParams,
    durations: Option<&[usize]>,
) -> Result<(MelSpectrogram, Vec<usize>)> {
    check_emotion(u_emo, params)?;
    params.speaker_embedding(speaker)?;
    let chars = char_indices(text)?;
    let mut tape = Tape::new();
    let vars = TtsVars::constants(&mut tape, params);
    let h_lg = vars.encode(&mut tape, &chars)?;
    let u = tape.constant(Matrix::row_vector(u_emo));
    let h_cond = vars.condition(&mut tape, h_lg, u, speaker)?;
    let durations = match durations {
        Some(d) if d.len() != chars.len() => {
            return Err(Error::Shape(format!("{} durations for {} characters", d.len(), chars.len())))
        }
        Some(d) => d.to_vec(),
        None => {
            let raw = vars.durations(&mut tape, h_cond)?;
            tape.value(raw).data().iter().map(|&d| round_duration(d)).collect()
        }
    };
    let mel = vars.decode(&mut tape, h_cond, &durations)?;
    let cfg = SpectralConfig::default();
    Ok((MelSpectrogram::new(tape.value(mel).clone(), cfg.sample_rate, cfg.hop)?, durations))
}

/// Full pipeline: text to waveform through the vocoder.
pub fn synthesize(
    text: &str,
    u_emo: &[f64],
    speaker: usize,
    params: &TtsParams,
    vocoder: &GriffinLim,
) -> Result<SynthOutput> {
    let (mel, durations) = synthesize_mel(text, u_emo, speaker, params, None)?;
    let waveform = vocoder.reconstruct(&mel, GRIFFIN_LIM_ITERS)?;
    Ok(SynthOutput { waveform, mel, durations })
}
