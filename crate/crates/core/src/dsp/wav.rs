use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const PCM: u16 = 1;
const FULL_SCALE: f64 = 32768.0;

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn need(bytes: &[u8], off: usize, n: usize, what: &str) -> Result<()> {
    if bytes.len() < off + n {
        return Err(Error::format(
            off as u64,
            format!("truncated {what}: need {n} bytes, {} left", bytes.len().saturating_sub(off)),
        ));
    }
    Ok(())
}

struct Fmt {
    sample_rate: u32,
}

fn parse_fmt(bytes: &[u8], off: usize, size: usize) -> Result<Fmt> {
    if size < 16 {
        return Err(Error::format(off as u64, format!("fmt chunk too small ({size} bytes)")));
    }
    let tag = u16_at(bytes, off);
    if tag != PCM {
        return Err(Error::format(off as u64, format!("unsupported encoding tag {tag}, only PCM")));
    }
    let channels = u16_at(bytes, off + 2);
    if channels != 1 {
        return Err(Error::format(off as u64 + 2, format!("{channels} channels, only mono is supported")));
    }
    let sample_rate = u32_at(bytes, off + 4);
    if sample_rate == 0 {
        return Err(Error::format(off as u64 + 4, "sample rate is zero"));
    }
    let bits = u16_at(bytes, off + 14);
    if bits != 16 {
        return Err(Error::format(off as u64 + 14, format!("{bits}-bit samples, only 16-bit")));
    }
    Ok(Fmt { sample_rate })
}

pub fn wav_from_bytes(bytes: &[u8]) -> Result<Waveform> {
    need(bytes, 0, 12, "RIFF header")?;
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::format(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format(8, "missing WAVE tag"));
    }
    let mut off = 12;
    let mut fmt = None;
    loop {
        need(bytes, off, 8, "chunk header")?;
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body = off + 8;
        need(bytes, body, size, "chunk body")?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(bytes, body, size)?),
            b"data" => {
                let Some(fmt) = fmt else {
                    return Err(Error::format(off as u64, "data chunk before fmt chunk"));
                };
                if size % 2 != 0 {
                    return Err(Error::format(off as u64 + 4, "odd data size for 16-bit samples"));
                }
                if size == 0 {
                    return Err(Error::format(off as u64 + 4, "data chunk is empty"));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / FULL_SCALE)
                    .collect();
                return Waveform::new(samples, fmt.sample_rate);
            }
            _ => {}
        }
        off = body + size + (size & 1);
    }
}

pub fn wav_to_bytes(w: &Waveform) -> Vec<u8> {
    let data_len = (w.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        let q = (s * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn wav_read(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    wav_from_bytes(&bytes)
}

pub fn wav_write(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, wav_to_bytes(w)).map_err(|e| Error::io(path, e))
}
