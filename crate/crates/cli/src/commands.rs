use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use emoforge::datagen::{self, emotion_index, load_corpus, CorpusConfig, EMOTION_NAMES};
use emoforge::dsp::{wav_read, wav_write, GriffinLim, SpectralConfig};
use emoforge::ep_align::{
    align_infer, eval_alignment, load_checkpoint, prompt_embeddings, save_checkpoint, train_epalign,
    AlignCheckpoint, Modality, ModalityFeatures, TrainAlignConfig,
};
use emoforge::metrics::{evaluate, mos_aggregate, EvalItem, MosSummary};
use emoforge::synth::{
    load_tts_checkpoint, save_tts_checkpoint, synthesize, train_tts, tts_examples, TrainTtsConfig,
    TtsCheckpoint, TtsDims, Variant,
};
use emoforge::Error;

pub enum CliError {
    /// Bad flag values or combinations (exit 1).
    Usage(String),
    /// Unreadable or malformed data (exit 2).
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "emoforge", version, about = "Emotion-prompt alignment, emotional TTS and speech metrics")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multimodal emotion corpus.
    GenData(GenData),
    /// Train EP-Align on a corpus's training split.
    TrainAlign(TrainAlign),
    /// Score an EP-Align checkpoint on the held-out split.
    EvalAlign(EvalAlign),
    /// Train an emotion-conditioned TTS model.
    TrainTts(TrainTts),
    /// Synthesize one utterance to WAV.
    Synth(Synth),
    /// WER/CER/MCD/SECS over reference and synthesized pairs.
    Eval(Eval),
    /// Aggregate opinion scores into mean and 95% interval.
    Mos(Mos),
}

#[derive(Debug, Args)]
struct Seed {
    #[arg(long, env = "EMOFORGE_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    speakers: usize,
    #[arg(long = "per-class", default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Debug, Args)]
struct TrainAlign {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "vis,audio,tex")]
    modalities: String,
    #[arg(long, default_value = "tex")]
    anchor: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Debug, Args)]
struct EvalAlign {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the modalities the checkpoint was trained on.
    #[arg(long)]
    modalities: Option<String>,
    /// Report path (default: next to the checkpoint, `.eval.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainTts {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "vits")]
    variant: String,
    #[arg(long = "align-ckpt")]
    align_ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Debug, Args)]
struct Synth {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "align-ckpt")]
    align_ckpt: PathBuf,
    #[arg(long)]
    text: String,
    #[arg(long, conflicts_with = "ref_features", required_unless_present = "ref_features")]
    emotion: Option<String>,
    /// JSON object with any of "vis", "audio", "tex" feature arrays.
    #[arg(long = "ref-features")]
    ref_features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    speaker: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional raw mel dump (u32 T, u32 n_mels, f32 LE frames).
    #[arg(long = "mel-out")]
    mel_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Eval {
    #[arg(long = "ref-dir")]
    ref_dir: PathBuf,
    #[arg(long = "syn-dir")]
    syn_dir: PathBuf,
    /// JSON lines: {"id", "ref", "syn", "ref_text", "hyp_text"?}.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-utterance CSV export.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Ratings file (one per line) to include as the MOS field.
    #[arg(long = "mos-scores")]
    mos_scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Mos {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainAlign(a) => train_align(a),
        Command::EvalAlign(a) => eval_align(a),
        Command::TrainTts(a) => train_tts_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Mos(a) => mos(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn modalities(flag: &str) -> CliResult<Vec<Modality>> {
    Modality::parse_list(flag).map_err(|e| CliError::Usage(format!("--modalities: {e}")))
}

fn gen_data(a: GenData) -> CliResult {
    let config = CorpusConfig {
        n_classes: a.classes,
        n_speakers: a.speakers,
        samples_per_class: a.per_class,
        dim_vis: a.dim,
        dim_audio: a.dim,
        dim_text: a.dim,
        cluster_separation: a.sep,
        noise_std: a.noise,
        seed: a.seed.seed,
    };
    let corpus = datagen::gen_corpus(&config)?;
    datagen::write_corpus(&corpus, &a.out)?;
    println!("wrote {} utterances to {}", corpus.utterances.len(), a.out.display());
    Ok(())
}

fn train_align(a: TrainAlign) -> CliResult {
    let mods = modalities(&a.modalities)?;
    let anchor: Modality = a.anchor.parse().map_err(|e| CliError::Usage(format!("--anchor: {e}")))?;
    let corpus = load_corpus(&a.data)?;
    let (train, _) = corpus.split();
    let config = TrainAlignConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed.seed,
        modalities: mods.clone(),
        anchor,
        classes: corpus.config.n_classes,
        ..TrainAlignConfig::default()
    };
    let trained = train_epalign(&train, &config)?;
    save_checkpoint(&a.out, &AlignCheckpoint::new(trained.params, mods, a.seed.seed))?;
    let last = trained.loss_curve.last().copied().unwrap_or(trained.initial_loss);
    println!("loss {:.4} -> {:.4}; saved {}", trained.initial_loss, last, a.out.display());
    Ok(())
}

fn eval_align(a: EvalAlign) -> CliResult {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let mods = match &a.modalities {
        Some(m) => modalities(m)?,
        None => ckpt.modalities.clone(),
    };
    let corpus = load_corpus(&a.data)?;
    let (_, held_out) = corpus.split();
    let report = eval_alignment(&ckpt.params, &held_out, &mods)?;
    let names: Vec<&str> = mods.iter().map(|m| m.name()).collect();
    println!("modalities: {}", names.join(","));
    println!("macro F1: {:.4}", report.macro_f1);
    println!("accuracy: {:.4}", report.accuracy);
    println!("confusion (rows true, columns predicted):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|n| format!("{n:5}")).collect();
        println!("{}", cells.join(" "));
    }
    let out = a.out.unwrap_or_else(|| a.ckpt.with_extension("eval.json"));
    write_json(&out, &report)?;
    Ok(())
}

fn train_tts_cmd(a: TrainTts) -> CliResult {
    let variant: Variant = a.variant.parse().map_err(|e| CliError::Usage(format!("--variant: {e}")))?;
    let align = load_checkpoint(&a.align_ckpt)?;
    let corpus = load_corpus(&a.data)?;
    if align.params.dims.classes != corpus.config.n_classes {
        return Err(CliError::Data(Error::InvalidInput(format!(
            "alignment checkpoint has {} classes, corpus has {}",
            align.params.dims.classes, corpus.config.n_classes
        ))));
    }
    let emotions = prompt_embeddings(&align.params)?;
    let examples = tts_examples(&corpus, Some(&a.data), false)?;
    let config = TrainTtsConfig {
        variant,
        dims: TtsDims {
            emo_dim: align.params.dims.embed,
            n_speakers: corpus.config.n_speakers,
            ..TtsDims::default()
        },
        steps: a.steps,
        lr: a.lr,
        batch_size: a.batch,
        seed: a.seed.seed,
        ..TrainTtsConfig::default()
    };
    let trained = train_tts(&examples, &emotions, &config)?;
    save_tts_checkpoint(&a.out, &TtsCheckpoint::new(trained.params, a.seed.seed, a.steps))?;
    let last = trained.loss_curve.last().copied().unwrap_or(trained.initial_loss);
    println!("{variant}: loss {:.4} -> {:.4}; saved {}", trained.initial_loss, last, a.out.display());
    Ok(())
}

fn synth(a: Synth) -> CliResult {
    let tts = load_tts_checkpoint(&a.ckpt)?;
    let align = load_checkpoint(&a.align_ckpt)?;
    let classes = align.params.dims.classes;
    let u_emo = match (&a.emotion, &a.ref_features) {
        (Some(name), _) => {
            let idx = emotion_index(name).filter(|&i| i < classes).ok_or_else(|| {
                CliError::Usage(format!(
                    "--emotion {name:?} is not one of {}",
                    EMOTION_NAMES[..classes.min(EMOTION_NAMES.len())].join(", ")
                ))
            })?;
            prompt_embeddings(&align.params)?.row(idx).to_vec()
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let features: ModalityFeatures =
                serde_json::from_str(&text).map_err(|e| Error::Json { path: path.clone(), source: e })?;
            let r = align_infer(&features, &align.params)?;
            let name = EMOTION_NAMES.get(r.predicted_class).copied().unwrap_or("?");
            println!("reference aligned to class {} ({name})", r.predicted_class);
            r.u_emo
        }
        (None, None) => return Err(CliError::Usage("one of --emotion or --ref-features is required".into())),
    };
    let vocoder = GriffinLim::new(SpectralConfig::default())?;
    let out = synthesize(&a.text, &u_emo, a.speaker, &tts.params, &vocoder)?;
    wav_write(&a.out, &out.waveform)?;
    if let Some(path) = &a.mel_out {
        fs::write(path, out.mel.to_bytes()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    println!(
        "{} frames, {:.2} s -> {}",
        out.mel.n_frames(),
        out.waveform.duration_secs(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairLine {
    id: String,
    #[serde(rename = "ref")]
    reference: String,
    syn: String,
    ref_text: String,
    /// Transcript of the synthesized audio; the reference text when absent.
    hyp_text: Option<String>,
}

fn read_lines(path: &Path) -> CliResult<Vec<(u64, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::Io { path: path.into(), source: e })?;
        let len = line.len() as u64 + 1;
        if !line.trim().is_empty() {
            out.push((offset, line));
        }
        offset += len;
    }
    Ok(out)
}

fn read_scores(path: &Path) -> CliResult<Vec<f64>> {
    read_lines(path)?
        .into_iter()
        .map(|(offset, line)| {
            line.trim().parse::<f64>().map_err(|_| {
                CliError::Data(Error::Format {
                    offset,
                    message: format!("{}: {:?} is not a rating", path.display(), line.trim()),
                })
            })
        })
        .collect()
}

fn eval(a: Eval) -> CliResult {
    let mut items = Vec::new();
    for (offset, line) in read_lines(&a.pairs)? {
        let p: PairLine = serde_json::from_str(&line).map_err(|e| Error::Format {
            offset,
            message: format!("{}: {e}", a.pairs.display()),
        })?;
        items.push(EvalItem {
            reference: wav_read(a.ref_dir.join(&p.reference))?,
            synth: wav_read(a.syn_dir.join(&p.syn))?,
            hyp_text: p.hyp_text.unwrap_or_else(|| p.ref_text.clone()),
            ref_text: p.ref_text,
            id: p.id,
        });
    }
    let mos = match &a.mos_scores {
        Some(path) => Some(mos_aggregate(&read_scores(path)?)?),
        None => None,
    };
    let report = evaluate(&items, mos)?;
    report.write_json(&a.out)?;
    if let Some(csv) = &a.csv {
        report.write_csv(csv)?;
    }
    println!(
        "n={} WER {:.4} CER {:.4} MCD {:.3} SECS {:.4}",
        report.n_utts, report.wer, report.cer, report.mcd_median, report.secs_median
    );
    Ok(())
}

fn mos(a: Mos) -> CliResult {
    let summary: MosSummary = mos_aggregate(&read_scores(&a.scores)?)?;
    println!("{summary}");
    if let Some(out) = &a.out {
        write_json(out, &summary)?;
    }
    Ok(())
}
