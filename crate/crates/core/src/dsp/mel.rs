use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{magnitude, stft, SpectralConfig, Waveform};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Additive floor inside the log of mel power.
pub const LOG_FLOOR: f64 = 1e-10;

// Slaney scale: linear below 1 kHz, logarithmic above.
const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn logstep() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / logstep()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (logstep() * (mel - MIN_LOG_MEL)).exp()
    } else {
        mel * F_SP
    }
}

/// Triangular, area-normalized filters over the one-sided FFT bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    /// n_mels x (n_fft/2 + 1)
    pub weights: Matrix,
    pub f_min: f64,
    pub f_max: f64,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.n_bins();
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let weights = Matrix::from_fn(cfg.n_mels, n_bins, |m, k| {
            let f = k as f64 * cfg.bin_hz();
            let rise = (f - edges[m]) / (edges[m + 1] - edges[m]);
            let fall = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
            rise.min(fall).max(0.0) * 2.0 / (edges[m + 2] - edges[m])
        });
        Ok(Self {
            weights,
            f_min: cfg.f_min,
            f_max: cfg.f_max,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    /// Mel power for one frame of linear power.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Moore-Penrose inverse, (n_fft/2 + 1) x n_mels.
    pub fn pseudo_inverse(&self) -> Result<Matrix> {
        let (r, c) = self.weights.shape();
        let m = DMatrix::from_row_slice(r, c, self.weights.data());
        let pinv = m
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Degenerate(format!("mel pseudo-inverse failed: {e}")))?;
        Ok(Matrix::from_fn(c, r, |i, j| pinv[(i, j)]))
    }
}

/// Log-mel frames (T x n_mels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub frames: Matrix,
    pub sample_rate: u32,
    pub hop: usize,
}

impl MelSpectrogram {
    pub fn new(frames: Matrix, sample_rate: u32, hop: usize) -> Result<Self> {
        if frames.rows() == 0 || frames.cols() == 0 {
            return Err(Error::InvalidInput("mel spectrogram is empty".into()));
        }
        frames.ensure_finite("mel spectrogram")?;
        Ok(Self { frames, sample_rate, hop })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }

    /// `u32 T`, `u32 n_mels`, then row-major little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.frames.len());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels() as u32).to_le_bytes());
        for &v in self.frames.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }
}

pub fn mel_spectrogram(w: &Waveform, cfg: &SpectralConfig) -> Result<MelSpectrogram> {
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidInput(format!(
            "waveform rate {} differs from analysis rate {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let fb = MelFilterbank::new(cfg)?;
    let mag = magnitude(&stft(&w.samples, cfg.n_fft, cfg.hop)?);
    let rows: Vec<Vec<f64>> = mag
        .iter()
        .map(|frame| {
            let power: Vec<f64> = frame.iter().map(|m| m * m).collect();
            fb.apply(&power).into_iter().map(|p| (p + LOG_FLOOR).ln()).collect()
        })
        .collect();
    MelSpectrogram::new(Matrix::from_rows(&rows)?, cfg.sample_rate, cfg.hop)
}

/// Orthonormal DCT-II of `x`, first `n_coeffs` outputs.
pub fn dct_ii(x: &[f64], n_coeffs: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_coeffs)
        .map(|k| {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Per-frame cepstra `c_0..c_{n_coeffs-1}`.
pub fn mel_cepstra(m: &MelSpectrogram, n_coeffs: usize) -> Result<Matrix> {
    if n_coeffs == 0 || n_coeffs > m.n_mels() {
        return Err(Error::Shape(format!(
            "cannot take {n_coeffs} cepstral coefficients from {} mel bands",
            m.n_mels()
        )));
    }
    let rows: Vec<Vec<f64>> = m.frames.iter_rows().map(|r| dct_ii(r, n_coeffs)).collect();
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{norm, Rng};

    fn noise(seed: u64, n: usize, amp: f64) -> Waveform {
        let mut rng = Rng::new(seed);
        Waveform::new((0..n).map(|_| amp * rng.uniform_range(-1.0, 1.0)).collect(), 16000).unwrap()
    }

    #[test]
    fn slaney_scale_round_trips() {
        for hz in [0.0, 300.0, 999.0, 1000.0, 4321.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn filterbank_rows_and_coverage() {
        let cfg = SpectralConfig::default();
        let fb = MelFilterbank::new(&cfg).unwrap();
        assert_eq!(fb.weights.shape(), (40, 257));
        for row in fb.weights.iter_rows() {
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0);
        }
        // Triangles vanish at their outer edges, so the band endpoints
        // themselves carry zero weight; every interior bin is covered.
        for k in 1..256 {
            assert!((0..40).any(|m| fb.weights.get(m, k) > 0.0), "bin {k}");
        }
    }

    #[test]
    fn zero_signal_sits_on_floor() {
        let w = Waveform::new(vec![0.0; 2000], 16000).unwrap();
        let m = mel_spectrogram(&w, &SpectralConfig::default()).unwrap();
        assert!(m.frames.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn doubling_amplitude_adds_log_four() {
        let w = noise(3, 4000, 0.3);
        let cfg = SpectralConfig::default();
        let a = mel_spectrogram(&w, &cfg).unwrap();
        let b = mel_spectrogram(&w.scaled(2.0), &cfg).unwrap();
        for (x, y) in a.frames.data().iter().zip(b.frames.data()) {
            assert!((y - x - 4f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn white_noise_spreads_over_bands() {
        let w = noise(11, 32000, 0.5);
        let m = mel_spectrogram(&w, &SpectralConfig::default()).unwrap();
        let mut band: Vec<f64> = (0..40)
            .map(|j| (0..m.n_frames()).map(|t| m.frames.get(t, j).exp()).sum::<f64>())
            .collect();
        let max = band.iter().cloned().fold(0.0, f64::max);
        band.sort_by(f64::total_cmp);
        let median = 0.5 * (band[19] + band[20]);
        assert!(max <= 3.0 * median, "max {max} median {median}");
    }

    #[test]
    fn rate_mismatch_rejected() {
        let w = Waveform::new(vec![0.1; 2000], 22050).unwrap();
        assert!(mel_spectrogram(&w, &SpectralConfig::default()).is_err());
    }

    #[test]
    fn dct_constant_and_impulses() {
        let c = dct_ii(&[2.5; 40], 14);
        assert!((c[0] - 2.5 * 40f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        for i in 0..40 {
            let mut e = vec![0.0; 40];
            e[i] = 1.0;
            assert!((norm(&dct_ii(&e, 40)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dct_matches_direct_sum() {
        let mut rng = Rng::new(5);
        let x: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let c = dct_ii(&x, 40);
        for (k, ck) in c.iter().enumerate() {
            let mut s = 0.0;
            for (i, xi) in x.iter().enumerate() {
                s += xi * (std::f64::consts::PI / 40.0 * (i as f64 + 0.5) * k as f64).cos();
            }
            s *= if k == 0 { (1.0f64 / 40.0).sqrt() } else { (2.0f64 / 40.0).sqrt() };
            assert!((s - ck).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_moves_only_c0() {
        let w = noise(8, 6000, 0.8);
        let cfg = SpectralConfig::default();
        let a = mel_cepstra(&mel_spectrogram(&w, &cfg).unwrap(), 14).unwrap();
        let b = mel_cepstra(&mel_spectrogram(&w.scaled(2.0), &cfg).unwrap(), 14).unwrap();
        for t in 0..a.rows() {
            assert!((a.get(t, 0) - b.get(t, 0)).abs() > 1.0);
            for k in 1..14 {
                assert!((a.get(t, k) - b.get(t, k)).abs() < 1e-9, "t {t} k {k} {}", (a.get(t, k) - b.get(t, k)).abs());
            }
        }
        let m = mel_spectrogram(&w, &cfg).unwrap();
        assert!(mel_cepstra(&m, 41).is_err());
        assert!(mel_cepstra(&m, 0).is_err());
    }

    #[test]
    fn time_reversal_of_frame_aligned_input() {
        let cfg = SpectralConfig::default();
        let fb = MelFilterbank::new(&cfg).unwrap();
        let mut rng = Rng::new(1);
        let frames: Vec<Vec<f64>> = (0..6).map(|_| (0..257).map(|_| rng.uniform()).collect()).collect();
        let fwd: Vec<Vec<f64>> = frames.iter().map(|f| fb.apply(f)).collect();
        let rev: Vec<Vec<f64>> = frames.iter().rev().map(|f| fb.apply(f)).collect();
        assert!(fwd.iter().rev().eq(rev.iter()));
    }

    #[test]
    fn mel_dump_header() {
        let m = MelSpectrogram::new(Matrix::filled(3, 2, 1.5), 16000, 128).unwrap();
        let b = m.to_bytes();
        assert_eq!(b.len(), 8 + 24);
        assert_eq!(&b[0..4], &3u32.to_le_bytes());
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &1.5f32.to_le_bytes());
    }
}
