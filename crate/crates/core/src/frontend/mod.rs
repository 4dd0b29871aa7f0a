//! Audio frontend: windowed FFT, mel filterbank energies, log compression,
//! and context stacking with subsampling.

pub mod io;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Mono audio at a known sample rate. Samples are in [-1, 1] by convention
/// but nothing enforces it.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log mel filterbank features, one row per analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub data: Array2<f32>,
    pub frames_per_second: f32,
}

/// Stacked and subsampled features ready for the acoustic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub data: Array2<f32>,
    pub frames_per_second: f32,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    /// Analysis window length in samples.
    pub frame_len: usize,
    /// Hop between adjacent frames in samples.
    pub frame_shift: usize,
    pub fft_size: usize,
    pub num_mels: usize,
    /// Frames of context stacked on each side.
    pub context: usize,
    /// Keep every `subsample`-th stacked frame.
    pub subsample: usize,
}

impl Default for FrontendConfig {
    /// 25 ms windows every 10 ms at 16 kHz, 512-point FFT, 40 mel channels,
    /// 7-frame stacking, 3x subsampling.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 400,
            frame_shift: 160,
            fft_size: 512,
            num_mels: 40,
            context: 3,
            subsample: 3,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.frame_len == 0 || self.frame_shift == 0 {
            return Err(Error::Config("frame_len and frame_shift must be positive".into()));
        }
        if self.fft_size < self.frame_len {
            return Err(Error::Config(format!(
                "fft_size {} smaller than frame_len {}",
                self.fft_size, self.frame_len
            )));
        }
        if self.num_mels == 0 {
            return Err(Error::Config("num_mels must be positive".into()));
        }
        if self.subsample == 0 {
            return Err(Error::Config("subsample must be positive".into()));
        }
        Ok(())
    }

    /// Feature dimension after stacking: `(2*context + 1) * num_mels`.
    pub fn stacked_dim(&self) -> usize {
        (2 * self.context + 1) * self.num_mels
    }

    pub fn frames_per_second(&self) -> f32 {
        self.sample_rate as f32 / self.frame_shift as f32
    }
}

/// Additive floor inside the log, so silent channels map to `ln(1e-10)`.
pub const ENERGY_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0_f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided spectrum, `(num_mels, fft/2+1)`.
/// Ramps are evaluated at exact bin frequencies (no bin snapping) and each
/// triangle is scaled to unit area, `2 / (f_hi - f_lo)`.
pub fn mel_filterbank(config: &FrontendConfig) -> Result<Array2<f64>> {
    config.validate()?;
    let num_bins = config.fft_size / 2 + 1;
    let nyquist = config.sample_rate as f64 / 2.0;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(nyquist);
    let m = config.num_mels;

    // m + 2 equally spaced mel points: edges and centers of the triangles.
    let points: Vec<f64> = (0..m + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (m + 1) as f64))
        .collect();

    let mut bank = Array2::<f64>::zeros((m, num_bins));
    for ch in 0..m {
        let (lo, center, hi) = (points[ch], points[ch + 1], points[ch + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..num_bins {
            let f = k as f64 * config.sample_rate as f64 / config.fft_size as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            bank[(ch, k)] = w * norm;
        }
    }
    Ok(bank)
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided power spectrum of a zero-padded windowed frame.
fn power_spectrum(frame: ArrayView1<f64>, fft_size: usize, fft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_size)
        .collect();
    fft.process(&mut buf);
    buf[..fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Number of full analysis frames in `len` samples, zero if the clip is
/// shorter than one window.
pub fn num_frames(len: usize, config: &FrontendConfig) -> usize {
    if len < config.frame_len {
        0
    } else {
        (len - config.frame_len) / config.frame_shift + 1
    }
}

/// Log mel features for one clip. All arithmetic runs in f64; the result is
/// stored as f32.
pub fn compute_features(clip: &AudioClip, config: &FrontendConfig) -> Result<FeatureSequence> {
    config.validate()?;
    if clip.sample_rate != config.sample_rate {
        return Err(Error::Config(format!(
            "clip sample rate {} != configured {}",
            clip.sample_rate, config.sample_rate
        )));
    }
    let t_len = num_frames(clip.samples.len(), config);
    if t_len == 0 {
        return Err(Error::EmptyInput(format!(
            "clip of {} samples is shorter than one {}-sample window",
            clip.samples.len(),
            config.frame_len
        )));
    }

    let window = hann(config.frame_len);
    let bank = mel_filterbank(config)?;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(config.fft_size);

    let mut data = Array2::<f32>::zeros((t_len, config.num_mels));
    let mut frame = ndarray::Array1::<f64>::zeros(config.frame_len);
    for t in 0..t_len {
        let start = t * config.frame_shift;
        for i in 0..config.frame_len {
            frame[i] = clip.samples[start + i] as f64 * window[i];
        }
        let power = power_spectrum(frame.view(), config.fft_size, fft.as_ref());
        for ch in 0..config.num_mels {
            let mut e = 0.0;
            for (k, &p) in power.iter().enumerate() {
                e += bank[(ch, k)] * p;
            }
            data[(t, ch)] = (e + ENERGY_FLOOR).ln() as f32;
        }
    }

    Ok(FeatureSequence {
        data,
        frames_per_second: config.frames_per_second(),
    })
}

/// Stack `context` frames on each side of every kept frame (edges clamp to
/// the first/last frame) and keep every `subsample`-th frame, starting at 0.
/// `(T, D) -> (ceil(T / subsample), (2*context + 1) * D)`.
pub fn stack_and_subsample(
    features: &FeatureSequence,
    context: usize,
    subsample: usize,
) -> Result<ModelInput> {
    if subsample == 0 {
        return Err(Error::Config("subsample must be positive".into()));
    }
    let (t_len, d) = features.data.dim();
    if t_len == 0 {
        return Err(Error::EmptyInput("cannot stack zero frames".into()));
    }
    let out_len = t_len.div_ceil(subsample);
    let width = (2 * context + 1) * d;
    let mut data = Array2::<f32>::zeros((out_len, width));
    for (j, mut row) in data.rows_mut().into_iter().enumerate() {
        let center = j * subsample;
        for (slot, offset) in (-(context as isize)..=context as isize).enumerate() {
            let src = (center as isize + offset).clamp(0, t_len as isize - 1) as usize;
            row.slice_mut(ndarray::s![slot * d..(slot + 1) * d])
                .assign(&features.data.row(src));
        }
    }
    Ok(ModelInput {
        data,
        frames_per_second: features.frames_per_second / subsample as f32,
    })
}
