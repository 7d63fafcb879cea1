use std::f64::consts::PI;

use crate::dsp::{Waveform, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::numeric::Rng;

pub const EMOTION_NAMES: [&str; 5] = ["neutral", "happy", "sad", "angry", "surprise"];

const SPEAKER_F0: [f64; 4] = [110.0, 146.0, 196.0, 246.0];
const HARMONICS: usize = 8;
const SPEAKER_FORMANT: [f64; 4] = [450.0, 800.0, 1150.0, 1500.0];
const FORMANT_WIDTH: f64 = 250.0;
const FORMANT_GAIN: f64 = 8.0;
const NOISE_FLOOR: f64 = 0.01;
const FADE: usize = 64;

pub const VOWEL_FRAMES: usize = 9;
pub const SPACE_FRAMES: usize = 5;
pub const OTHER_FRAMES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contour {
    Flat,
    Rising,
    Falling,
    Peaked,
}

/// How an emotion shapes each voiced segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionProfile {
    pub f0_mult: f64,
    pub contour: Contour,
    pub energy: f64,
    /// Added to the harmonic roll-off exponent (negative is brighter).
    pub tilt: f64,
}

pub fn emotion_profile(emotion: usize) -> Result<EmotionProfile> {
    let (f0_mult, contour, energy, tilt) = match emotion {
        0 => (1.0, Contour::Flat, 0.55, 0.0),
        1 => (1.3, Contour::Rising, 0.7, -0.2),
        2 => (0.8, Contour::Falling, 0.4, 0.4),
        3 => (1.2, Contour::Flat, 0.95, -0.5),
        4 => (1.4, Contour::Peaked, 0.75, -0.1),
        _ => {
            return Err(Error::InvalidLabel {
                label: emotion,
                classes: EMOTION_NAMES.len(),
            })
        }
    };
    Ok(EmotionProfile { f0_mult, contour, energy, tilt })
}

pub fn emotion_index(name: &str) -> Option<usize> {
    EMOTION_NAMES.iter().position(|e| e.eq_ignore_ascii_case(name))
}

pub fn speaker_f0(speaker: usize) -> f64 {
    SPEAKER_F0[speaker % 4] * 2f64.powf((speaker / 4) as f64 / 4.0)
}

fn speaker_tilt(speaker: usize) -> f64 {
    0.8 + 0.3 * (speaker % 4) as f64
}

/// Centre of a fixed resonance that boosts harmonics near it, independent of
/// emotion (the harmonic frequencies move, the resonance does not).
fn speaker_formant(speaker: usize) -> f64 {
    SPEAKER_FORMANT[speaker % 4] * 2f64.powf((speaker / 4) as f64 / 8.0)
}

/// Keeps the renderable alphabet: lowercase letters, space and period.
pub fn normalize_chars(text: &str) -> String {
    text.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_lowercase() || *c == ' ' || *c == '.')
        .collect()
}

pub fn char_frames(c: char) -> usize {
    match c {
        'a' | 'e' | 'i' | 'o' | 'u' => VOWEL_FRAMES,
        ' ' => SPACE_FRAMES,
        _ => OTHER_FRAMES,
    }
}

/// Frames per character of the normalized text.
pub fn durations(text: &str) -> Vec<usize> {
    normalize_chars(text).chars().map(char_frames).collect()
}

fn contour_factor(contour: Contour, pos: f64) -> f64 {
    match contour {
        Contour::Flat => 1.0,
        Contour::Rising => 0.9 + 0.2 * pos,
        Contour::Falling => 1.1 - 0.2 * pos,
        Contour::Peaked => 0.9 + 0.2 * (PI * pos).sin(),
    }
}

/// Character-specific harmonic weights (a crude formant pattern).
fn char_weights(c: char, tilt: f64, f0: f64, formant: f64) -> [f64; HARMONICS] {
    let ci = (c as u8 - b'a') as f64;
    let mut w = [0.0; HARMONICS];
    for (h, slot) in w.iter_mut().enumerate() {
        let k = (h + 1) as f64;
        let shape = 1.0 + 0.8 * (2.0 * PI * (0.37 * k + 0.21 * ci)).cos();
        let resonance = 1.0 + FORMANT_GAIN * (-((k * f0 - formant) / FORMANT_WIDTH).powi(2)).exp();
        *slot = shape * resonance / k.powf(tilt);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn fade(i: usize, n: usize) -> f64 {
    let edge = FADE.min(n / 2).max(1);
    let d = i.min(n - 1 - i);
    if d >= edge {
        1.0
    } else {
        0.5 - 0.5 * (PI * d as f64 / edge as f64).cos()
    }
}

/// Deterministic tone rendering of `text` for one emotion and speaker.
/// The noise floor is seeded from `seed`, the text, emotion and speaker.
pub fn render_reference(text: &str, emotion: usize, speaker: usize, seed: u64) -> Result<Waveform> {
    let chars = normalize_chars(text);
    if chars.is_empty() {
        return Err(Error::InvalidInput(format!("nothing to render in {text:?}")));
    }
    let profile = emotion_profile(emotion)?;
    let f0 = speaker_f0(speaker) * profile.f0_mult;
    let tilt = (speaker_tilt(speaker) + profile.tilt).max(0.1);
    let mut rng = Rng::stream(seed, &format!("datagen.render.{emotion}.{speaker}.{chars}"));
    let rate = SAMPLE_RATE as f64;
    let mut samples = Vec::new();
    for c in chars.chars() {
        let n = char_frames(c) * HOP;
        if c == ' ' || c == '.' {
            samples.extend((0..n).map(|_| 0.0));
            continue;
        }
        let weights = char_weights(c, tilt, f0, speaker_formant(speaker));
        let mut phase = 0.0;
        for i in 0..n {
            let pos = i as f64 / n as f64;
            phase += 2.0 * PI * f0 * contour_factor(profile.contour, pos) / rate;
            let tone: f64 = weights
                .iter()
                .enumerate()
                .map(|(h, w)| w * ((h + 1) as f64 * phase).sin())
                .sum();
            samples.push(profile.energy * fade(i, n) * tone);
        }
    }
    for s in samples.iter_mut() {
        *s += NOISE_FLOOR * rng.uniform_range(-1.0, 1.0);
    }
    let mut w = Waveform::new(samples, SAMPLE_RATE)?;
    w.normalize_peak(0.99);
    Ok(w)
}
