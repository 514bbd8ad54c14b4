//! Minimal RIFF WAV codec: PCM 16-bit and IEEE float 32-bit, mono or
//! stereo. Stereo reads select a channel (or downmix); this also covers
//! corpora that store two sources in the left/right channels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

/// How to turn a stereo file into one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSelect {
    Left,
    Right,
    /// Average of both channels.
    #[default]
    Downmix,
}

struct WavData {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

/// Reads a WAV file as one mono clip; `channel` applies when the file is
/// stereo.
pub fn read_wav(path: &Path, channel: ChannelSelect) -> Result<AudioClip> {
    let wav = read_raw(path)?;
    let samples = match (wav.channels.len(), channel) {
        (1, _) => wav.channels.into_iter().next().unwrap(),
        (2, ChannelSelect::Left) => wav.channels.into_iter().next().unwrap(),
        (2, ChannelSelect::Right) => wav.channels.into_iter().nth(1).unwrap(),
        (2, ChannelSelect::Downmix) => wav.channels[0]
            .iter()
            .zip(&wav.channels[1])
            .map(|(l, r)| 0.5 * (l + r))
            .collect(),
        (n, _) => {
            return Err(Error::Format(format!(
                "{}: unsupported channel count {n}",
                path.display()
            )))
        }
    };
    AudioClip::new(samples, wav.sample_rate)
}

/// Reads a stereo WAV as two clips (left, right), for corpora that keep
/// sources in separate channels.
pub fn read_wav_stereo(path: &Path) -> Result<(AudioClip, AudioClip)> {
    let wav = read_raw(path)?;
    if wav.channels.len() != 2 {
        return Err(Error::Format(format!(
            "{}: expected a stereo file, found {} channel(s)",
            path.display(),
            wav.channels.len()
        )));
    }
    let mut it = wav.channels.into_iter();
    Ok((
        AudioClip::new(it.next().unwrap(), wav.sample_rate)?,
        AudioClip::new(it.next().unwrap(), wav.sample_rate)?,
    ))
}

fn read_raw(path: &Path) -> Result<WavData> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?,
    );
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(bad("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + (size & 1); // chunks are word-aligned
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels == 0 || rate == 0 {
        return Err(bad("invalid fmt fields"));
    }
    let nch = channels as usize;
    let decode: Box<dyn Fn(&[u8]) -> f64> = match (format, bits) {
        (FMT_PCM, 16) => Box::new(|b: &[u8]| {
            i16::from_le_bytes(b.try_into().unwrap()) as f64 / 32768.0
        }),
        (FMT_IEEE_FLOAT, 32) => {
            Box::new(|b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        }
        _ => {
            return Err(bad(&format!(
                "unsupported encoding: format tag {format}, {bits} bits"
            )))
        }
    };
    let sample_bytes = bits as usize / 8;
    let frame_bytes = sample_bytes * nch;
    let frames = data.len() / frame_bytes;
    let mut out = vec![Vec::with_capacity(frames); nch];
    for f in 0..frames {
        for (c, channel) in out.iter_mut().enumerate() {
            let start = f * frame_bytes + c * sample_bytes;
            channel.push(decode(&data[start..start + sample_bytes]));
        }
    }
    Ok(WavData { channels: out, sample_rate: rate })
}

/// Writes a mono IEEE float 32-bit WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let mut body = Vec::with_capacity(clip.len() * 4);
    for &s in &clip.samples {
        body.extend_from_slice(&(s as f32).to_le_bytes());
    }
    write_chunks(path, FMT_IEEE_FLOAT, 32, clip.sample_rate, clip.len(), &body)
}

/// Writes a mono PCM 16-bit WAV, clamping to the representable range.
pub fn write_wav_pcm16(path: &Path, clip: &AudioClip) -> Result<()> {
    let mut body = Vec::with_capacity(clip.len() * 2);
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        body.extend_from_slice(&v.to_le_bytes());
    }
    write_chunks(path, FMT_PCM, 16, clip.sample_rate, clip.len(), &body)
}

fn write_chunks(
    path: &Path,
    format: u16,
    bits: u16,
    rate: u32,
    n_frames: usize,
    body: &[u8],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let block_align = bits / 8; // mono
    let byte_rate = rate * block_align as u32;
    let fact = format == FMT_IEEE_FLOAT;
    let riff_size = 4 + (8 + 16) + if fact { 8 + 4 } else { 0 } + 8 + body.len();

    w.write_all(b"RIFF")?;
    w.write_all(&(riff_size as u32).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&format.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?;
    w.write_all(&rate.to_le_bytes())?;
    w.write_all(&byte_rate.to_le_bytes())?;
    w.write_all(&(block_align).to_le_bytes())?;
    w.write_all(&bits.to_le_bytes())?;
    if fact {
        w.write_all(b"fact")?;
        w.write_all(&4u32.to_le_bytes())?;
        w.write_all(&(n_frames as u32).to_le_bytes())?;
    }
    w.write_all(b"data")?;
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}
