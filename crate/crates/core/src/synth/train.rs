use std::path::Path;

use super::model::{char_indices, TtsDims, TtsParams, TtsVars, Variant};
use crate::datagen::{is_held_out, load_wav, Corpus};
use crate::error::{Error, Result};
use crate::metrics::analysis_mel;
use crate::numeric::{Adam, AdamConfig, Matrix, Rng, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TtsExample {
    pub text: String,
    pub emotion: usize,
    pub speaker: usize,
    pub durations: Vec<usize>,
    /// Target log-mel, one row per teacher frame.
    pub mel: Matrix,
}

/// Teacher-forced examples from one side of the corpus split. Audio is read
/// from `dir` when given, otherwise rendered.
pub fn tts_examples(corpus: &Corpus, dir: Option<&Path>, held_out: bool) -> Result<Vec<TtsExample>> {
    let mut out = Vec::new();
    for (i, u) in corpus.utterances.iter().enumerate() {
        if is_held_out(i) != held_out {
            continue;
        }
        let wav = match dir {
            Some(d) => load_wav(d, u)?,
            None => corpus.render(u)?,
        };
        let mel = analysis_mel(&wav)?;
        let frames: usize = u.durations.iter().sum();
        if mel.n_frames() < frames {
            return Err(Error::InvalidInput(format!(
                "{}: audio has {} frames, durations need {frames}",
                u.id,
                mel.n_frames()
            )));
        }
        let rows: Vec<usize> = (0..frames).collect();
        out.push(TtsExample {
            text: u.text.clone(),
            emotion: u.emotion,
            speaker: u.speaker,
            durations: u.durations.clone(),
            mel: mel.frames.gather_rows(&rows)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTtsConfig {
    pub variant: Variant,
    pub dims: TtsDims,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the duration loss next to the mel loss.
    pub duration_weight: f64,
    /// Steps between loss-curve points.
    pub log_every: usize,
}

impl Default for TrainTtsConfig {
    fn default() -> Self {
        Self {
            variant: Variant::CouplingFlow,
            dims: TtsDims::default(),
            steps: 2000,
            lr: 3e-3,
            batch_size: 4,
            seed: 42,
            duration_weight: 0.1,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTts {
    pub params: TtsParams,
    pub initial_loss: f64,
    /// Monitor-set loss after every `log_every` steps (and after the last).
    pub loss_curve: Vec<f64>,
}

const MONITOR_SIZE: usize = 8;

fn validate(examples: &[TtsExample], emotions: &Matrix, cfg: &TrainTtsConfig) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    if cfg.steps == 0 || cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::Config("steps, batch size and log interval must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate {} is invalid", cfg.lr)));
    }
    if !(cfg.duration_weight >= 0.0 && cfg.duration_weight.is_finite()) {
        return Err(Error::Config("duration weight must be non-negative".into()));
    }
    if emotions.cols() != cfg.dims.emo_dim {
        return Err(Error::Shape(format!(
            "emotion table is {} wide, model expects {}",
            emotions.cols(),
            cfg.dims.emo_dim
        )));
    }
    for ex in examples {
        if ex.emotion >= emotions.rows() {
            return Err(Error::InvalidLabel { label: ex.emotion, classes: emotions.rows() });
        }
        if ex.speaker >= cfg.dims.n_speakers {
            return Err(Error::InvalidInput(format!("speaker {} out of range", ex.speaker)));
        }
        let n = char_indices(&ex.text)?.len();
        if ex.durations.len() != n || ex.durations.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!("{:?}: durations do not match text", ex.text)));
        }
        if ex.mel.rows() != ex.durations.iter().sum::<usize>() || ex.mel.cols() != cfg.dims.n_mels {
            return Err(Error::Shape(format!("{:?}: mel target has the wrong shape", ex.text)));
        }
    }
    Ok(())
}

fn squared_error(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

fn example_loss(
    tape: &mut Tape,
    vars: &TtsVars,
    ex: &TtsExample,
    emotions: &Matrix,
    duration_weight: f64,
) -> Result<Var> {
    let chars = char_indices(&ex.text)?;
    let h_lg = vars.encode(tape, &chars)?;
    let u = tape.constant(Matrix::row_vector(emotions.row(ex.emotion)));
    let h_cond = vars.condition(tape, h_lg, u, ex.speaker)?;
    let raw = vars.durations(tape, h_cond)?;
    let teacher: Vec<f64> = ex.durations.iter().map(|&d| d as f64).collect();
    let teacher = tape.constant(Matrix::from_vec(teacher.len(), 1, teacher)?);
    let dur_loss = squared_error(tape, raw, teacher)?;
    let mel = vars.decode(tape, h_cond, &ex.durations)?;
    let target = tape.constant(ex.mel.clone());
    let mel_loss = squared_error(tape, mel, target)?;
    let dur_loss = tape.scale(dur_loss, duration_weight);
    tape.add(mel_loss, dur_loss)
}

fn batch_loss(
    tape: &mut Tape,
    vars: &TtsVars,
    batch: &[&TtsExample],
    emotions: &Matrix,
    duration_weight: f64,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for ex in batch {
        let l = example_loss(tape, vars, ex, emotions, duration_weight)?;
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::Config("empty batch".into()))?;
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

fn monitor_loss(params: &TtsParams, monitor: &[&TtsExample], emotions: &Matrix, w: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = TtsVars::constants(&mut tape, params);
    let l = batch_loss(&mut tape, &vars, monitor, emotions, w)?;
    Ok(tape.scalar_value(l))
}

/// Teacher-forced training: mel MSE plus weighted duration MSE, Adam.
/// `emotions` holds one emotion embedding per class (C x emo_dim).
pub fn train_tts(examples: &[TtsExample], emotions: &Matrix, cfg: &TrainTtsConfig) -> Result<TrainedTts> {
    validate(examples, emotions, cfg)?;
    let mut params = TtsParams::init(cfg.variant, cfg.dims, cfg.seed)?;
    let mut tensors = params.to_tensors();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &tensors);
    let mut rng = Rng::stream(cfg.seed, "synth.batches");
    let monitor: Vec<&TtsExample> = examples.iter().take(MONITOR_SIZE).collect();
    let initial_loss = monitor_loss(&params, &monitor, emotions, cfg.duration_weight)?;
    let mut loss_curve = Vec::new();
    for step in 1..=cfg.steps {
        let batch: Vec<&TtsExample> = (0..cfg.batch_size).map(|_| &examples[rng.below(examples.len())]).collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|m| tape.param(m.clone())).collect();
        let tv = TtsVars::from_vars(&params, &vars);
        let loss = batch_loss(&mut tape, &tv, &batch, emotions, cfg.duration_weight)?;
        if !tape.scalar_value(loss).is_finite() {
            return Err(Error::Degenerate(format!("loss diverged at step {step}")));
        }
        let grads = tape.backward(loss)?;
        let g: Vec<Matrix> = vars.iter().map(|&v| grads.get(v)).collect();
        let mut refs: Vec<&mut Matrix> = tensors.iter_mut().collect();
        adam.step(&mut refs, &g)?;
        if step % cfg.log_every == 0 || step == cfg.steps {
            params = params.with_tensors(&tensors)?;
            loss_curve.push(monitor_loss(&params, &monitor, emotions, cfg.duration_weight)?);
        }
    }
    let params = params.with_tensors(&tensors)?;
    Ok(TrainedTts { params, initial_loss, loss_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_corpus, CorpusConfig};

    fn tiny() -> (Vec<TtsExample>, Matrix) {
        let corpus = gen_corpus(&CorpusConfig { samples_per_class: 3, ..CorpusConfig::default() }).unwrap();
        let ex = tts_examples(&corpus, None, false).unwrap();
        let emotions = Matrix::from_fn(5, 32, |r, c| if r == c { 1.0 } else { 0.0 });
        (ex, emotions)
    }

    fn quick(lr: f64) -> TrainTtsConfig {
        TrainTtsConfig { steps: 20, lr, log_every: 5, batch_size: 2, ..TrainTtsConfig::default() }
    }

    #[test]
    fn examples_match_teacher_durations() {
        let (ex, _) = tiny();
        assert_eq!(ex.len(), 12);
        for e in &ex {
            assert_eq!(e.mel.rows(), e.durations.iter().sum::<usize>());
            assert_eq!(e.mel.cols(), 40);
        }
    }

    #[test]
    fn zero_lr_keeps_curve_flat() {
        let (ex, emo) = tiny();
        let t = train_tts(&ex, &emo, &quick(0.0)).unwrap();
        assert_eq!(t.loss_curve.len(), 4);
        assert!(t.loss_curve.iter().all(|&l| l == t.initial_loss));
    }

    #[test]
    fn same_seed_same_curve_and_loss_drops() {
        let (ex, emo) = tiny();
        let a = train_tts(&ex, &emo, &quick(1e-2)).unwrap();
        let b = train_tts(&ex, &emo, &quick(1e-2)).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert!(*a.loss_curve.last().unwrap() < a.initial_loss);
    }

    #[test]
    fn config_errors() {
        let (ex, emo) = tiny();
        assert!(matches!(train_tts(&[], &emo, &quick(1e-3)), Err(Error::Config(_))));
        assert!(matches!(train_tts(&ex, &emo, &TrainTtsConfig { steps: 0, ..quick(1e-3) }), Err(Error::Config(_))));
        assert!(matches!(train_tts(&ex, &emo, &quick(f64::NAN)), Err(Error::Config(_))));
        let small = Matrix::zeros(2, 32);
        assert!(matches!(train_tts(&ex, &small, &quick(1e-3)), Err(Error::InvalidLabel { .. })));
    }
}
