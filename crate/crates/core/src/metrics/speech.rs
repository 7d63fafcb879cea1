use super::dtw::dtw_align;
use crate::dsp::{mel_cepstra, mel_spectrogram, MelSpectrogram, SpectralConfig, Waveform};
use crate::error::{Error, Result};
use crate::numeric::{cosine_similarity, normalize, Matrix};

/// Cepstral coefficients computed per frame (c0 included).
pub const MCD_COEFFS: usize = 14;
/// Minimum number of mel frames for a speaker embedding.
pub const MIN_EMBED_FRAMES: usize = 5;

fn mcd_const() -> f64 {
    10.0 / std::f64::consts::LN_10 * 2f64.sqrt()
}

fn analysis_config(rate: u32) -> SpectralConfig {
    SpectralConfig {
        sample_rate: rate,
        f_max: SpectralConfig::default().f_max.min(rate as f64 / 2.0),
        ..SpectralConfig::default()
    }
}

pub fn analysis_mel(w: &Waveform) -> Result<MelSpectrogram> {
    mel_spectrogram(w, &analysis_config(w.sample_rate))
}

/// MCD between two cepstral sequences; column 0 (energy) is ignored.
pub fn mcd_from_cepstra(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols() < 2 || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "cepstra must share a width of at least 2, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let a1 = a.slice_cols(1, a.cols())?;
    let b1 = b.slice_cols(1, b.cols())?;
    let path = dtw_align(&a1, &b1)?;
    Ok(mcd_const() * path.cost / path.pairs.len() as f64)
}

/// Mel-cepstral distortion in dB, DTW-aligned over c1..c13.
pub fn mcd(reference: &Waveform, synth: &Waveform) -> Result<f64> {
    if reference.sample_rate != synth.sample_rate {
        return Err(Error::InvalidInput(format!(
            "sample rates differ: {} vs {}",
            reference.sample_rate, synth.sample_rate
        )));
    }
    let a = mel_cepstra(&analysis_mel(reference)?, MCD_COEFFS)?;
    let b = mel_cepstra(&analysis_mel(synth)?, MCD_COEFFS)?;
    mcd_from_cepstra(&a, &b)
}

/// Per-band mean and standard deviation of log-mel frames, unit length.
pub fn speaker_embedding_from_mel(m: &MelSpectrogram) -> Result<Vec<f64>> {
    let t = m.n_frames();
    if t < MIN_EMBED_FRAMES {
        return Err(Error::InvalidInput(format!(
            "{t} mel frames, speaker embedding needs at least {MIN_EMBED_FRAMES}"
        )));
    }
    let bands = m.n_mels();
    let mut out = vec![0.0; 2 * bands];
    for j in 0..bands {
        let mean = (0..t).map(|i| m.frames.get(i, j)).sum::<f64>() / t as f64;
        let var = (0..t).map(|i| (m.frames.get(i, j) - mean).powi(2)).sum::<f64>() / t as f64;
        out[j] = mean;
        out[bands + j] = var.sqrt();
    }
    normalize(&out)
}

pub fn speaker_embedding(w: &Waveform) -> Result<Vec<f64>> {
    speaker_embedding_from_mel(&analysis_mel(w)?)
}

pub fn secs(reference: &Waveform, synth: &Waveform) -> Result<f64> {
    if reference.sample_rate != synth.sample_rate {
        return Err(Error::InvalidInput("sample rates differ".into()));
    }
    cosine_similarity(&speaker_embedding(reference)?, &speaker_embedding(synth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{norm, Rng};

    fn signal(seed: u64, n: usize) -> Waveform {
        let mut rng = Rng::new(seed);
        let s = (0..n)
            .map(|i| {
                0.4 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16000.0).sin()
                    + 0.3 * rng.uniform_range(-1.0, 1.0)
            })
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn mcd_identity_gain_and_symmetry() {
        let w = signal(1, 4000);
        assert_eq!(mcd(&w, &w).unwrap(), 0.0);
        for g in [0.25, 0.5, 2.0] {
            assert!(mcd(&w, &w.scaled(g)).unwrap() < 1e-6, "gain {g}");
        }
        let v = signal(2, 5000);
        let (ab, ba) = (mcd(&w, &v).unwrap(), mcd(&v, &w).unwrap());
        assert!(ab > 0.0);
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mcd_rate_mismatch() {
        let w = signal(1, 4000);
        let v = Waveform::new(w.samples.clone(), 8000).unwrap();
        assert!(matches!(mcd(&w, &v), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn embedding_properties() {
        let w = signal(3, 4000);
        let e = speaker_embedding(&w).unwrap();
        assert_eq!(e.len(), 80);
        assert!((norm(&e) - 1.0).abs() < 1e-12);
        assert_eq!(e, speaker_embedding(&w).unwrap());
        assert!((secs(&w, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((secs(&w, &w.scaled(-1.0)).unwrap() - 1.0).abs() < 1e-12);
        let short = Waveform::new(vec![0.1; 300], 16000).unwrap();
        assert!(matches!(speaker_embedding(&short), Err(Error::InvalidInput(_))));
    }
}
