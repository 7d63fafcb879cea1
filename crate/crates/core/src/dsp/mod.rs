//! Audio front end: 16-bit WAV I/O, STFT/ISTFT, Slaney mel filterbank,
//! log-mel features, mel cepstra and Griffin-Lim reconstruction.

mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, spectral_convergence, GriffinLim};
pub use mel::{dct_ii, mel_cepstra, mel_spectrogram, MelFilterbank, MelSpectrogram, LOG_FLOOR};
pub use stft::{hann_window, istft, magnitude, stft, Complex64, Spectrogram};
pub use wav::{wav_from_bytes, wav_read, wav_to_bytes, wav_write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 512;
pub const HOP: usize = 128;
pub const N_MELS: usize = 40;
pub const F_MIN: f64 = 0.0;
pub const F_MAX: f64 = 8000.0;
pub const GRIFFIN_LIM_ITERS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("waveform has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("waveform has non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Scales down so the peak is at most `limit`; quieter signals are left alone.
    pub fn normalize_peak(&mut self, limit: f64) {
        let peak = self.peak();
        if peak > limit {
            let k = limit / peak;
            self.samples.iter_mut().for_each(|s| *s *= k);
        }
    }
}

/// Analysis settings shared by every spectral routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            n_fft: N_FFT,
            hop: HOP,
            n_mels: N_MELS,
            f_min: F_MIN,
            f_max: F_MAX,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(Error::Config(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!("hop {} must be in 1..={}", self.hop, self.n_fft)));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::Config(format!(
                "mel range {}..{} Hz is invalid for rate {}",
                self.f_min, self.f_max, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.n_fft as f64
    }
}
