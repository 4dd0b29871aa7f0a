//! Audio and feature file IO.
//!
//! Feature files: magic `WSFT`, u32 LE frame count, u32 LE dimension,
//! f32 LE frames-per-second, then the matrix row-major as f32 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

use super::AudioClip;

const FEATURE_MAGIC: &[u8; 4] = b"WSFT";

/// Read a mono 16-bit PCM WAV file, scaling samples to [-1, 1).
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono audio, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Data(format!(
            "{}: expected 16-bit PCM samples",
            path.display()
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Write a clip as mono 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_features(path: &Path, data: ArrayView2<f32>, frames_per_second: f32) -> Result<()> {
    let (t, d) = data.dim();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(t as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&frames_per_second.to_le_bytes())?;
    for row in data.rows() {
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Array2<f32>, f32)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Data(format!(
            "{}: not a feature file (bad magic)",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let t = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let fps = f32::from_le_bytes(u32buf);

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != t * d * 4 {
        return Err(Error::Data(format!(
            "{}: feature blob is {} bytes, header promises {}",
            path.display(),
            blob.len(),
            t * d * 4
        )));
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Array2::from_shape_vec((t, d), values)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((data, fps))
}
