use super::{istft, magnitude, stft, Complex64, MelFilterbank, MelSpectrogram, SpectralConfig, Spectrogram, Waveform, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Griffin-Lim vocoder with the mel-to-linear map precomputed.
#[derive(Debug, Clone)]
pub struct GriffinLim {
    cfg: SpectralConfig,
    inverse: Matrix,
}

impl GriffinLim {
    pub fn new(cfg: SpectralConfig) -> Result<Self> {
        let inverse = MelFilterbank::new(&cfg)?.pseudo_inverse()?;
        Ok(Self { cfg, inverse })
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.cfg
    }

    /// Linear magnitudes (T x bins) implied by a log-mel spectrogram.
    pub fn linear_magnitude(&self, m: &MelSpectrogram) -> Result<Vec<Vec<f64>>> {
        if m.n_mels() != self.inverse.cols() {
            return Err(Error::Shape(format!(
                "mel has {} bands, vocoder expects {}",
                m.n_mels(),
                self.inverse.cols()
            )));
        }
        let power = m.frames.map(|v| (v.exp() - LOG_FLOOR).max(0.0));
        let lin = power.matmul(&self.inverse.transpose())?;
        Ok(lin.iter_rows().map(|r| r.iter().map(|p| p.max(0.0).sqrt()).collect()).collect())
    }

    pub fn reconstruct(&self, m: &MelSpectrogram, iters: usize) -> Result<Waveform> {
        let target = self.linear_magnitude(m)?;
        let samples = run(&target, self.cfg.n_fft, self.cfg.hop, iters)?;
        Waveform::new(samples, self.cfg.sample_rate)
    }
}

fn with_magnitude(target: &[Vec<f64>], phase_from: Option<&Spectrogram>, n_fft: usize, hop: usize) -> Spectrogram {
    let frames = target
        .iter()
        .enumerate()
        .map(|(t, mags)| {
            mags.iter()
                .enumerate()
                .map(|(k, &a)| match phase_from {
                    Some(s) => {
                        let c = s.frames[t][k];
                        let n = c.norm();
                        if n > 0.0 {
                            c * (a / n)
                        } else {
                            Complex64::new(a, 0.0)
                        }
                    }
                    None => Complex64::new(a, 0.0),
                })
                .collect()
        })
        .collect();
    Spectrogram { frames, n_fft, hop }
}

/// Iterative phase recovery from linear magnitudes, zero-phase start.
fn run(target: &[Vec<f64>], n_fft: usize, hop: usize, iters: usize) -> Result<Vec<f64>> {
    if iters == 0 {
        return Err(Error::InvalidInput("griffin-lim needs at least one iteration".into()));
    }
    let t = target.len();
    let length = t.saturating_sub(1) * hop;
    if length <= n_fft / 2 {
        return Err(Error::InvalidInput(format!("{t} frames are too few to reconstruct")));
    }
    let mut x = istft(&with_magnitude(target, None, n_fft, hop), Some(length))?;
    for _ in 1..iters {
        let est = stft(&x, n_fft, hop)?;
        x = istft(&with_magnitude(target, Some(&est), n_fft, hop), Some(length))?;
    }
    Ok(x)
}

/// Spectral convergence `|| |STFT(x)| - S ||_F / ||S||_F`.
pub fn spectral_convergence(x: &[f64], target: &[Vec<f64>], n_fft: usize, hop: usize) -> Result<f64> {
    let mag = magnitude(&stft(x, n_fft, hop)?);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in mag.iter().zip(target) {
        for (p, q) in a.iter().zip(b) {
            num += (p - q).powi(2);
            den += q * q;
        }
    }
    if den == 0.0 {
        return Err(Error::Degenerate("target spectrum is all zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Default-configured reconstruction from a log-mel spectrogram.
pub fn griffin_lim(m: &MelSpectrogram, iters: usize) -> Result<Waveform> {
    let cfg = SpectralConfig {
        sample_rate: m.sample_rate,
        hop: m.hop,
        n_mels: m.n_mels(),
        ..SpectralConfig::default()
    };
    GriffinLim::new(cfg)?.reconstruct(m, iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel_spectrogram;

    fn sine(freq: f64, n: usize) -> Waveform {
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    fn peak_bin(x: &[f64]) -> usize {
        let mag = magnitude(&stft(x, 512, 128).unwrap());
        let mid = &mag[mag.len() / 2];
        (0..mid.len()).max_by(|&a, &b| mid[a].total_cmp(&mid[b])).unwrap()
    }

    #[test]
    fn sine_reconstruction_keeps_peak_bin() {
        let w = sine(1000.0, 8000);
        let m = mel_spectrogram(&w, &SpectralConfig::default()).unwrap();
        let out = griffin_lim(&m, 32).unwrap();
        assert_eq!(peak_bin(&out.samples), peak_bin(&w.samples));
        let expect = m.n_frames() * 128;
        assert!(out.len().abs_diff(expect) <= 512);
    }

    #[test]
    fn floor_mel_gives_silence() {
        let m = MelSpectrogram::new(Matrix::filled(30, 40, LOG_FLOOR.ln()), 16000, 128).unwrap();
        assert!(griffin_lim(&m, 4).unwrap().rms() < 1e-3);
    }

    #[test]
    fn deterministic() {
        let w = sine(440.0, 4000);
        let m = mel_spectrogram(&w, &SpectralConfig::default()).unwrap();
        assert_eq!(griffin_lim(&m, 8).unwrap(), griffin_lim(&m, 8).unwrap());
    }

    #[test]
    fn more_iterations_do_not_raise_residual() {
        let mut x = sine(440.0, 6000).samples;
        for (i, v) in x.iter_mut().enumerate() {
            *v += 0.3 * (2.0 * std::f64::consts::PI * 1730.0 * i as f64 / 16000.0).sin();
        }
        let target = magnitude(&stft(&x, 512, 128).unwrap());
        let mut last = f64::INFINITY;
        for iters in [4, 8, 16, 32] {
            let y = run(&target, 512, 128, iters).unwrap();
            let sc = spectral_convergence(&y, &target, 512, 128).unwrap();
            assert!(sc <= last, "{iters} iters: {sc} > {last}");
            last = sc;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MelSpectrogram::new(Matrix::zeros(20, 40), 16000, 128).unwrap();
        assert!(griffin_lim(&m, 0).is_err());
        let short = MelSpectrogram::new(Matrix::zeros(2, 40), 16000, 128).unwrap();
        assert!(griffin_lim(&short, 2).is_err());
    }
}
