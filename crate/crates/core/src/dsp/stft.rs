use rustfft::FftPlanner;
pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex short-time spectrum, `frames[t][k]` for bins `0..=n_fft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub n_fft: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Periodic Hann window (satisfies COLA for hop = n/4 and n/2).
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn check_params(n_fft: usize, hop: usize) -> Result<()> {
    if n_fft < 2 || !n_fft.is_power_of_two() {
        return Err(Error::InvalidInput(format!("n_fft {n_fft} is not a power of two")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::InvalidInput(format!("hop {hop} must be in 1..={n_fft}")));
    }
    Ok(())
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((0..pad).map(|i| x[pad - i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|j| x[n - 2 - j]));
    out
}

/// Centered STFT with reflect padding of `n_fft/2`, giving `1 + len/hop` frames.
pub fn stft(x: &[f64], n_fft: usize, hop: usize) -> Result<Spectrogram> {
    check_params(n_fft, hop)?;
    let pad = n_fft / 2;
    if x.len() <= pad {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is too short for a {n_fft}-point window",
            x.len()
        )));
    }
    let padded = reflect_pad(x, pad);
    let window = hann_window(n_fft);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let n_frames = 1 + (padded.len() - n_fft) / hop;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let frames = (0..n_frames)
        .map(|t| {
            let seg = &padded[t * hop..t * hop + n_fft];
            for (b, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                *b = Complex64::new(s * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..=n_fft / 2].to_vec()
        })
        .collect();
    Ok(Spectrogram { frames, n_fft, hop })
}

/// Windowed overlap-add inverse of [`stft`]. `length` defaults to `(T-1)*hop`.
pub fn istft(spec: &Spectrogram, length: Option<usize>) -> Result<Vec<f64>> {
    let (n_fft, hop) = (spec.n_fft, spec.hop);
    check_params(n_fft, hop)?;
    if spec.frames.is_empty() {
        return Err(Error::InvalidInput("spectrogram has no frames".into()));
    }
    let half = n_fft / 2;
    if let Some(bad) = spec.frames.iter().position(|f| f.len() != half + 1) {
        return Err(Error::Shape(format!("frame {bad} does not have {} bins", half + 1)));
    }
    let t = spec.frames.len();
    let length = length.unwrap_or((t - 1) * hop);
    let window = hann_window(n_fft);
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let total = n_fft + (t - 1) * hop;
    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (i, frame) in spec.frames.iter().enumerate() {
        buf[..=half].copy_from_slice(frame);
        // Real signal: imaginary parts at DC and Nyquist carry no information.
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for k in 1..half {
            buf[n_fft - k] = frame[k].conj();
        }
        ifft.process(&mut buf);
        let off = i * hop;
        for j in 0..n_fft {
            acc[off + j] += buf[j].re / n_fft as f64 * window[j];
            wsum[off + j] += window[j] * window[j];
        }
    }
    let out = (0..length)
        .map(|i| {
            let p = i + half;
            if p < total && wsum[p] > 1e-11 {
                acc[p] / wsum[p]
            } else {
                0.0
            }
        })
        .collect();
    Ok(out)
}

pub fn magnitude(spec: &Spectrogram) -> Vec<Vec<f64>> {
    spec.frames
        .iter()
        .map(|f| f.iter().map(|c| c.norm()).collect())
        .collect()
}
