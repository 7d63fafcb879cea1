//! Deterministic synthetic emotion corpus: Gaussian feature clusters per
//! modality plus rendered reference audio with known per-character durations.

mod render;

pub use render::{
    char_frames, durations, emotion_index, emotion_profile, normalize_chars, render_reference,
    speaker_f0, Contour, EmotionProfile, EMOTION_NAMES, OTHER_FRAMES, SPACE_FRAMES, VOWEL_FRAMES,
};

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{wav_read, wav_write, Waveform};
use crate::ep_align::MultimodalSample;
use crate::error::{Error, Result};
use crate::numeric::{normalize, Rng};

pub const MANIFEST: &str = "manifest.jsonl";
pub const CONFIG: &str = "config.json";
pub const WAV_DIR: &str = "wavs";

/// Utterances with `index % HOLDOUT_EVERY == HOLDOUT_EVERY - 1` are held out.
pub const HOLDOUT_EVERY: usize = 5;

pub const TEXT_POOL: [&str; 16] = [
    "the quick brown fox",
    "jumps over the lazy dog",
    "pack my box",
    "with five dozen liquor jugs",
    "how vexingly quick",
    "daft zebras jump",
    "sphinx of black quartz",
    "judge my vow",
    "the five boxing wizards",
    "jump quickly",
    "bright vixens jump",
    "dozy fowl quack",
    "waltz bad nymph",
    "for quick jigs vex",
    "jackdaws love my big sphinx",
    "glib jocks quiz nymph",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_classes: usize,
    pub n_speakers: usize,
    pub samples_per_class: usize,
    pub dim_vis: usize,
    pub dim_audio: usize,
    pub dim_text: usize,
    pub cluster_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_speakers: 4,
            samples_per_class: 200,
            dim_vis: 64,
            dim_audio: 64,
            dim_text: 64,
            cluster_separation: 4.0,
            noise_std: 1.0,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > EMOTION_NAMES.len() {
            return Err(Error::Config(format!(
                "classes must be in 2..={}, got {}",
                EMOTION_NAMES.len(),
                self.n_classes
            )));
        }
        if self.n_speakers == 0 {
            return Err(Error::Config("need at least one speaker".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples per class must be positive".into()));
        }
        for (name, d) in [("vis", self.dim_vis), ("audio", self.dim_audio), ("tex", self.dim_text)] {
            if d < self.n_classes {
                return Err(Error::Config(format!(
                    "{name} dimension {d} cannot hold {} orthogonal class directions",
                    self.n_classes
                )));
            }
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::Config("cluster separation must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.dim_vis, self.dim_audio, self.dim_text]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub emotion: usize,
    pub speaker: usize,
    /// Relative to the corpus directory.
    pub wav: String,
    pub durations: Vec<usize>,
    pub feat_vis: Vec<f64>,
    pub feat_audio: Vec<f64>,
    pub feat_text: Vec<f64>,
}

impl Utterance {
    pub fn to_sample(&self) -> MultimodalSample {
        MultimodalSample {
            vision: self.feat_vis.clone(),
            audio: self.feat_audio.clone(),
            text: self.feat_text.clone(),
            label: self.emotion,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub utterances: Vec<Utterance>,
}

pub fn is_held_out(index: usize) -> bool {
    index % HOLDOUT_EVERY == HOLDOUT_EVERY - 1
}

impl Corpus {
    pub fn samples(&self) -> Vec<MultimodalSample> {
        self.utterances.iter().map(Utterance::to_sample).collect()
    }

    /// Deterministic (train, held-out) split of the alignment samples.
    pub fn split(&self) -> (Vec<MultimodalSample>, Vec<MultimodalSample>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, u) in self.utterances.iter().enumerate() {
            if is_held_out(i) {
                test.push(u.to_sample());
            } else {
                train.push(u.to_sample());
            }
        }
        (train, test)
    }

    pub fn render(&self, u: &Utterance) -> Result<Waveform> {
        render_reference(&u.text, u.emotion, u.speaker, self.config.seed)
    }
}

/// Orthonormal class directions (rows) via Gram-Schmidt on Gaussian draws.
pub fn class_directions(n_classes: usize, dim: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    while out.len() < n_classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        // A near-dependent draw is simply redrawn.
        if let Ok(n) = normalize(&v) {
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
                out.push(n);
            }
        }
    }
    Ok(out)
}

/// Builds the corpus in memory; audio is rendered on demand.
pub fn gen_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let seed = config.seed;
    let mut dirs = Vec::with_capacity(3);
    for (name, d) in ["vis", "audio", "tex"].iter().zip(config.dims()) {
        let mut rng = Rng::stream(seed, &format!("datagen.directions.{name}"));
        dirs.push(class_directions(config.n_classes, d, &mut rng)?);
    }
    let mut feat_rng = Rng::stream(seed, "datagen.features");
    let mut text_rng = Rng::stream(seed, "datagen.texts");
    let mut utterances = Vec::with_capacity(config.n_classes * config.samples_per_class);
    for c in 0..config.n_classes {
        for k in 0..config.samples_per_class {
            let mut feats = dirs.iter().map(|d| {
                d[c].iter()
                    .map(|x| config.cluster_separation * x + config.noise_std * feat_rng.normal())
                    .collect::<Vec<f64>>()
            });
            let (feat_vis, feat_audio, feat_text) = (
                feats.next().expect("vis"),
                feats.next().expect("audio"),
                feats.next().expect("tex"),
            );
            let text = TEXT_POOL[text_rng.below(TEXT_POOL.len())].to_string();
            let id = format!("utt{:05}", utterances.len());
            utterances.push(Utterance {
                wav: format!("{WAV_DIR}/{id}.wav"),
                id,
                durations: durations(&text),
                text,
                emotion: c,
                speaker: k % config.n_speakers,
                feat_vis,
                feat_audio,
                feat_text,
            });
        }
    }
    Ok(Corpus {
        config: config.clone(),
        utterances,
    })
}

fn write_json_line<W: Write>(w: &mut W, path: &Path, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Writes `config.json`, `manifest.jsonl` and one WAV per utterance.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let wav_dir = dir.join(WAV_DIR);
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let cfg_path = dir.join(CONFIG);
    let cfg = serde_json::to_string_pretty(&corpus.config).map_err(|e| Error::json(&cfg_path, e))?;
    fs::write(&cfg_path, cfg + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    let man_path = dir.join(MANIFEST);
    let file = fs::File::create(&man_path).map_err(|e| Error::io(&man_path, e))?;
    let mut out = BufWriter::new(file);
    for u in &corpus.utterances {
        write_json_line(&mut out, &man_path, u)?;
        wav_write(dir.join(&u.wav), &corpus.render(u)?)?;
    }
    out.flush().map_err(|e| Error::io(&man_path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let len = line.len() as u64 + 1;
        if !line.trim().is_empty() {
            let u: Utterance = serde_json::from_str(&line)
                .map_err(|e| Error::format(offset, format!("{}: {e}", path.display())))?;
            out.push(u);
        }
        offset += len;
    }
    Ok(out)
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let cfg_path = dir.join(CONFIG);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config: CorpusConfig = serde_json::from_str(&text).map_err(|e| Error::json(&cfg_path, e))?;
    config.validate()?;
    let utterances = read_manifest(dir.join(MANIFEST))?;
    if utterances.is_empty() {
        return Err(Error::InvalidInput(format!("{} lists no utterances", dir.join(MANIFEST).display())));
    }
    Ok(Corpus { config, utterances })
}

pub fn wav_path(dir: impl AsRef<Path>, u: &Utterance) -> PathBuf {
    dir.as_ref().join(&u.wav)
}

pub fn load_wav(dir: impl AsRef<Path>, u: &Utterance) -> Result<Waveform> {
    wav_read(wav_path(dir, u))
}

/// Held-out accuracy of a nearest-centroid classifier on one modality.
pub fn nearest_centroid_accuracy(corpus: &Corpus, pick: impl Fn(&Utterance) -> &[f64]) -> f64 {
    let c = corpus.config.n_classes;
    let dim = pick(&corpus.utterances[0]).len();
    let mut sums = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    for (i, u) in corpus.utterances.iter().enumerate() {
        if !is_held_out(i) {
            counts[u.emotion] += 1;
            sums[u.emotion].iter_mut().zip(pick(u)).for_each(|(s, x)| *s += x);
        }
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= (*n).max(1) as f64);
    }
    let (mut right, mut total) = (0, 0);
    for (i, u) in corpus.utterances.iter().enumerate() {
        if is_held_out(i) {
            let x = pick(u);
            let best = (0..c)
                .min_by(|&a, &b| {
                    let da: f64 = sums[a].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                    let db: f64 = sums[b].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .expect("classes");
            right += usize::from(best == u.emotion);
            total += 1;
        }
    }
    right as f64 / total.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> CorpusConfig {
        CorpusConfig {
            samples_per_class: 20,
            seed,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn directions_are_orthonormal() {
        let d = class_directions(5, 8, &mut Rng::new(3)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let p: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_features_collapse_per_class() {
        let corpus = gen_corpus(&CorpusConfig { noise_std: 0.0, ..small(1) }).unwrap();
        for u in &corpus.utterances {
            let first = corpus.utterances.iter().find(|v| v.emotion == u.emotion).unwrap();
            assert_eq!(u.feat_vis, first.feat_vis);
            assert_eq!(u.feat_audio, first.feat_audio);
            assert_eq!(u.feat_text, first.feat_text);
        }
    }

    #[test]
    fn defaults_are_separable_by_nearest_centroid() {
        let corpus = gen_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!(corpus.utterances.len(), 1000);
        let acc = nearest_centroid_accuracy(&corpus, |u| &u.feat_audio);
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn separability_grows_with_separation() {
        let mut last = 0.0;
        for sep in [1.0, 2.0, 4.0] {
            let cfg = CorpusConfig {
                cluster_separation: sep,
                samples_per_class: 100,
                ..CorpusConfig::default()
            };
            let acc = nearest_centroid_accuracy(&gen_corpus(&cfg).unwrap(), |u| &u.feat_audio);
            assert!(acc >= last, "sep {sep}: {acc} < {last}");
            last = acc;
        }
    }

    #[test]
    fn config_validation() {
        for bad in [
            CorpusConfig { n_classes: 1, ..small(1) },
            CorpusConfig { n_classes: 6, ..small(1) },
            CorpusConfig { cluster_separation: 0.0, ..small(1) },
            CorpusConfig { noise_std: -1.0, ..small(1) },
            CorpusConfig { dim_text: 3, ..small(1) },
            CorpusConfig { n_speakers: 0, ..small(1) },
        ] {
            assert!(matches!(gen_corpus(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn split_is_balanced() {
        let corpus = gen_corpus(&small(2)).unwrap();
        let (train, test) = corpus.split();
        assert_eq!(train.len() + test.len(), 100);
        for c in 0..5 {
            assert_eq!(test.iter().filter(|s| s.label == c).count(), 4);
        }
    }
}
