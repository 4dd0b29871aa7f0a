//! Training-set augmentation: RIR convolution, echo-residual mixing, and
//! assembly of the tripled manifest (clean + reverberated + reverberated
//! with residual).

use std::path::Path;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::manifest::{ManifestEntry, Provenance, Variant};
use crate::error::{Error, Result};
use crate::frontend::io::{read_wav, write_wav};
use crate::frontend::AudioClip;

/// Room impulse response used for reverberation.
#[derive(Debug, Clone)]
pub struct ImpulseResponse {
    pub id: String,
    pub taps: Vec<f32>,
    pub sample_rate: u32,
}

/// Echo-residual noise clip mixed into reverberated audio.
#[derive(Debug, Clone)]
pub struct ResidualClip {
    pub id: String,
    pub clip: AudioClip,
}

/// What `mix_residual` does with a residual of zero energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroResidualPolicy {
    /// Refuse: the SNR scale is undefined.
    #[default]
    Error,
    /// Return the clip unchanged.
    PassThrough,
}

/// Kernels longer than this take the FFT path in [`convolve_rir`].
const FFT_KERNEL_THRESHOLD: usize = 64;

/// SNR range (dB) drawn per utterance when mixing residuals into the
/// augmented set, standing in for playback at various volumes.
pub const SNR_RANGE_DB: (f32, f32) = (-5.0, 20.0);

fn direct_convolve(x: &[f32], h: &[f32]) -> Vec<f32> {
    let mut y = vec![0.0f32; x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        let k_max = h.len().min(n + 1);
        for k in 0..k_max {
            acc += h[k] as f64 * x[n - k] as f64;
        }
        *out = acc as f32;
    }
    y
}

fn fft_convolve(x: &[f32], h: &[f32]) -> Vec<f32> {
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v as f64, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut b: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v as f64, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (av, bv) in a.iter_mut().zip(&b) {
        *av *= bv;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..x.len()].iter().map(|c| (c.re * scale) as f32).collect()
}

fn peak(samples: &[f32]) -> f32 {
    samples.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
}

/// Full linear convolution truncated to the input length, then rescaled so
/// the output peak equals the input peak (no clipping from hot RIRs).
pub fn convolve_rir(clip: &AudioClip, rir: &ImpulseResponse) -> Result<AudioClip> {
    if rir.sample_rate != clip.sample_rate {
        return Err(Error::Config(format!(
            "RIR {} at {} Hz cannot filter {} Hz audio",
            rir.id, rir.sample_rate, clip.sample_rate
        )));
    }
    if rir.taps.is_empty() {
        return Err(Error::EmptyInput(format!("RIR {} has no taps", rir.id)));
    }
    if clip.samples.is_empty() {
        return Err(Error::EmptyInput("cannot convolve an empty clip".into()));
    }
    if rir.taps.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("RIR {} has non-finite taps", rir.id)));
    }

    let mut out = if rir.taps.len() > FFT_KERNEL_THRESHOLD {
        fft_convolve(&clip.samples, &rir.taps)
    } else {
        direct_convolve(&clip.samples, &rir.taps)
    };

    let in_peak = peak(&clip.samples);
    let out_peak = peak(&out);
    if in_peak > 0.0 && out_peak > 0.0 {
        let scale = in_peak / out_peak;
        for v in &mut out {
            *v *= scale;
        }
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    })
}

fn energy(samples: &[f32]) -> f64 {
    samples.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

/// Add the residual at a given SNR: the residual is tiled to the clip
/// length and scaled so `10*log10(E_clip / E_residual) = snr_db`.
pub fn mix_residual(
    clip: &AudioClip,
    residual: &ResidualClip,
    snr_db: f32,
    zero_residual: ZeroResidualPolicy,
) -> Result<AudioClip> {
    if residual.clip.sample_rate != clip.sample_rate {
        return Err(Error::Config(format!(
            "residual {} at {} Hz cannot mix into {} Hz audio",
            residual.id, residual.clip.sample_rate, clip.sample_rate
        )));
    }
    if clip.samples.is_empty() || residual.clip.samples.is_empty() {
        return Err(Error::EmptyInput("cannot mix empty audio".into()));
    }
    let e_clip = energy(&clip.samples);
    if e_clip == 0.0 {
        return Err(Error::Numeric(
            "clip is silent; SNR relative to it is undefined".into(),
        ));
    }

    let res = &residual.clip.samples;
    let tiled: Vec<f32> = (0..clip.samples.len()).map(|i| res[i % res.len()]).collect();
    let e_res = energy(&tiled);
    if e_res == 0.0 {
        return match zero_residual {
            ZeroResidualPolicy::Error => Err(Error::Numeric(format!(
                "residual {} has zero energy",
                residual.id
            ))),
            ZeroResidualPolicy::PassThrough => Ok(clip.clone()),
        };
    }

    let scale = (e_clip / (e_res * 10f64.powf(snr_db as f64 / 10.0))).sqrt() as f32;
    let samples = clip
        .samples
        .iter()
        .zip(&tiled)
        .map(|(&c, &r)| c + scale * r)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Synthetic RIR: unit direct path followed by an exponentially decaying
/// noise tail.
pub fn synth_rir(id: String, sample_rate: u32, rng: &mut StdRng) -> ImpulseResponse {
    let tail_len = rng.random_range(200..1600);
    let tau = rng.random_range(60.0..400.0);
    let level = rng.random_range(0.1..0.4);
    let mut taps = Vec::with_capacity(tail_len + 1);
    taps.push(1.0f32);
    for k in 0..tail_len {
        let noise: f64 = rng.random_range(-1.0..1.0);
        taps.push((noise * level * (-(k as f64) / tau).exp()) as f32);
    }
    ImpulseResponse { id, taps, sample_rate }
}

/// Synthetic echo residual: low-passed noise with a slow amplitude
/// modulation, imitating leaked playback.
pub fn synth_residual(id: String, sample_rate: u32, len: usize, rng: &mut StdRng) -> ResidualClip {
    let mod_hz = rng.random_range(0.5..4.0);
    let mut lp = 0.0f64;
    let alpha = 0.15;
    let mut samples = Vec::with_capacity(len);
    for i in 0..len {
        let white: f64 = rng.random_range(-1.0..1.0);
        lp += alpha * (white - lp);
        let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * mod_hz * i as f64 / sample_rate as f64).sin();
        samples.push((lp * env * 0.5) as f32);
    }
    ResidualClip {
        id,
        clip: AudioClip { samples, sample_rate },
    }
}

pub fn synth_rir_pool(n: usize, sample_rate: u32, seed: u64) -> Vec<ImpulseResponse> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| synth_rir(format!("rir{i:03}"), sample_rate, &mut rng))
        .collect()
}

pub fn synth_residual_pool(n: usize, sample_rate: u32, len: usize, seed: u64) -> Vec<ResidualClip> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| synth_residual(format!("res{i:03}"), sample_rate, len, &mut rng))
        .collect()
}

/// Triple a manifest of clean WAV utterances: for each input, emit the
/// clean entry plus a reverberated and a reverberated+residual variant,
/// writing the new audio under `out_dir`. The residual variant reuses its
/// sibling's RIR. Labels are copied unchanged.
pub fn build_augmented_set(
    manifest: &[ManifestEntry],
    rir_pool: &[ImpulseResponse],
    residual_pool: &[ResidualClip],
    out_dir: &Path,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("augmentation input manifest is empty".into()));
    }
    if rir_pool.is_empty() || residual_pool.is_empty() {
        return Err(Error::Config("RIR and residual pools must be nonempty".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(manifest.len() * 3);
    for entry in manifest {
        let clip = read_wav(Path::new(&entry.audio_path))?;
        let rir = &rir_pool[rng.random_range(0..rir_pool.len())];
        let residual = &residual_pool[rng.random_range(0..residual_pool.len())];
        let snr_db = rng.random_range(SNR_RANGE_DB.0..SNR_RANGE_DB.1);

        let reverb = convolve_rir(&clip, rir)?;
        let echoed = mix_residual(&reverb, residual, snr_db, ZeroResidualPolicy::Error)?;

        let reverb_path = out_dir.join(format!("{}__reverb.wav", entry.id));
        let echo_path = out_dir.join(format!("{}__reverb_echo.wav", entry.id));
        write_wav(&reverb_path, &reverb)?;
        write_wav(&echo_path, &echoed)?;

        out.push(entry.clone());
        out.push(ManifestEntry {
            id: format!("{}__reverb", entry.id),
            audio_path: reverb_path.to_string_lossy().into_owned(),
            variant: Variant::Reverb,
            provenance: Some(Provenance {
                rir_id: Some(rir.id.clone()),
                residual_id: None,
                snr_db: None,
            }),
            ..entry.clone()
        });
        out.push(ManifestEntry {
            id: format!("{}__reverb_echo", entry.id),
            audio_path: echo_path.to_string_lossy().into_owned(),
            variant: Variant::ReverbEcho,
            provenance: Some(Provenance {
                rir_id: Some(rir.id.clone()),
                residual_id: Some(residual.id.clone()),
                snr_db: Some(snr_db),
            }),
            ..entry.clone()
        });
    }
    Ok(out)
}
