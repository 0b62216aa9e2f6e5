//! Desk-scale feature extractors: autocorrelation F0, warped-cepstrum
//! mel-cepstra, and 1-dim coded aperiodicity. Deterministic given input bytes.
//!
//! Externally produced features in the same container format are accepted by
//! the rest of the pipeline; these extractors just make it self-contained.

use std::f64::consts::PI;

use crate::dsp::{hann_periodic, log_power_spectrum, real_cepstrum, reflect_index, Waveform};
use crate::error::{Error, Result};
use crate::features::{quantize, AuxFeatureFrames, F0Contour, MCEP_DIM};
use crate::mat::Mat;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F0ExtractConfig {
    pub frame_shift: usize,
    /// Analysis window length in samples; must cover ~3 periods of f0_floor.
    pub window: usize,
    pub f0_floor: f64,
    pub f0_ceil: f64,
    /// Frames whose peak normalized autocorrelation falls below this are
    /// marked unvoiced.
    pub voicing_threshold: f64,
    /// Octave-error mitigation: the shortest lag whose correlation reaches
    /// this fraction of the peak wins.
    pub rel_peak: f64,
    /// Mean-square floor below which a frame is treated as silence.
    pub energy_floor: f64,
}

impl Default for F0ExtractConfig {
    fn default() -> Self {
        F0ExtractConfig {
            frame_shift: 80,
            window: 1024,
            f0_floor: 70.0,
            f0_ceil: 400.0,
            voicing_threshold: 0.45,
            rel_peak: 0.85,
            energy_floor: 1e-8,
        }
    }
}

/// Windowed segment centered at `center`, reflect-padded at the edges,
/// mean-removed.
fn centered_segment(w: &Waveform, center: isize, window: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let mut seg: Vec<f64> = (0..window as isize)
        .map(|j| w.samples[reflect_index(center - half + j, w.len())])
        .collect();
    let mean = seg.iter().sum::<f64>() / window as f64;
    for v in seg.iter_mut() {
        *v -= mean;
    }
    seg
}

/// Normalized autocorrelation of `seg` at `lag`, in [-1, 1].
fn normalized_autocorr(seg: &[f64], lag: usize) -> f64 {
    let n = seg.len() - lag;
    let mut num = 0.0;
    let mut e0 = 0.0;
    let mut e1 = 0.0;
    for t in 0..n {
        num += seg[t] * seg[t + lag];
        e0 += seg[t] * seg[t];
        e1 += seg[t + lag] * seg[t + lag];
    }
    let denom = (e0 * e1).sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        num / denom
    }
}

/// Pitch of one analysis frame in Hz, 0 when unvoiced.
fn analyze_frame(w: &Waveform, center: isize, cfg: &F0ExtractConfig) -> f64 {
    let seg = centered_segment(w, center, cfg.window);
    let ms = seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64;
    if ms < cfg.energy_floor {
        return 0.0;
    }
    let fs = w.sample_rate as f64;
    let lag_min = (fs / cfg.f0_ceil).floor().max(2.0) as usize;
    let lag_max = ((fs / cfg.f0_floor).ceil() as usize).min(cfg.window / 2);
    let corr: Vec<f64> = (lag_min..=lag_max).map(|l| normalized_autocorr(&seg, l)).collect();
    let peak = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak < cfg.voicing_threshold {
        return 0.0;
    }
    // shortest local maximum reaching rel_peak * peak wins, defeating
    // subharmonic (octave-down) picks
    let floor = cfg.rel_peak * peak;
    let mut best = None;
    for i in 0..corr.len() {
        let left = if i == 0 { f64::NEG_INFINITY } else { corr[i - 1] };
        let right = if i + 1 == corr.len() { f64::NEG_INFINITY } else { corr[i + 1] };
        if corr[i] >= floor && corr[i] >= left && corr[i] >= right {
            best = Some(i);
            break;
        }
    }
    let i = match best {
        Some(i) => i,
        None => return 0.0,
    };
    let lag = (lag_min + i) as f64;
    // parabolic refinement around the discrete peak
    let delta = if i > 0 && i + 1 < corr.len() {
        let denom = corr[i - 1] - 2.0 * corr[i] + corr[i + 1];
        if denom.abs() > 1e-12 {
            (0.5 * (corr[i - 1] - corr[i + 1]) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    (fs / (lag + delta)).clamp(cfg.f0_floor, cfg.f0_ceil)
}

/// Per-frame F0 from normalized autocorrelation peaks.
pub fn extract_f0(w: &Waveform, cfg: &F0ExtractConfig) -> Result<F0Contour> {
    if cfg.f0_floor >= cfg.f0_ceil || cfg.f0_ceil >= w.sample_rate as f64 / 2.0 {
        return Err(Error::Parameter(format!(
            "need f0_floor < f0_ceil < nyquist, got {} / {} at fs {}",
            cfg.f0_floor, cfg.f0_ceil, w.sample_rate
        )));
    }
    if w.len() < cfg.window {
        return Err(Error::Data(format!(
            "waveform of {} samples is shorter than the {}-sample analysis window",
            w.len(),
            cfg.window
        )));
    }
    let frames = w.len().div_ceil(cfg.frame_shift);
    let values = (0..frames)
        .map(|n| quantize(analyze_frame(w, (n * cfg.frame_shift) as isize, cfg)))
        .collect();
    Ok(F0Contour { values, frame_shift: cfg.frame_shift, sample_rate: w.sample_rate })
}

const MCEP_WINDOW: usize = 512;
const MCEP_DFT: usize = 1024;

/// Inverse of the all-pass frequency warp: linear frequency (radians) that
/// maps onto warped frequency `theta` under warp factor `alpha`.
fn unwarp_freq(theta: f64, alpha: f64) -> f64 {
    theta - 2.0 * (alpha * theta.sin() / (1.0 + alpha * theta.cos())).atan()
}

fn interp_log_spec(spec: &[f64], pos: f64) -> f64 {
    let max = (spec.len() - 1) as f64;
    let p = pos.clamp(0.0, max);
    let i = p.floor() as usize;
    if i >= spec.len() - 1 {
        return spec[spec.len() - 1];
    }
    let frac = p - i as f64;
    spec[i] * (1.0 - frac) + spec[i + 1] * frac
}

/// Mel-cepstra via warped log spectrum + cepstral truncation. Rows are the
/// `order+1` coefficients, columns are frames (frame n centered at n*shift).
pub fn extract_mcep(w: &Waveform, frame_shift: usize, order: usize, alpha: f64) -> Result<Mat> {
    if order + 1 != MCEP_DIM {
        return Err(Error::Parameter(format!(
            "mcep order must be {}, got {order}",
            MCEP_DIM - 1
        )));
    }
    if w.is_empty() {
        return Err(Error::Data("cannot extract mcep from empty waveform".into()));
    }
    let frames = w.len().div_ceil(frame_shift);
    let win = hann_periodic(MCEP_WINDOW);
    let half = (MCEP_WINDOW / 2) as isize;
    let k_bins = MCEP_DFT / 2 + 1;
    // warped uniform grid -> fractional position on the linear-frequency grid
    let warp_pos: Vec<f64> = (0..k_bins)
        .map(|m| {
            let theta = PI * m as f64 / (k_bins - 1) as f64;
            unwarp_freq(theta, alpha) / PI * (k_bins - 1) as f64
        })
        .collect();

    let mut out = Mat::zeros(MCEP_DIM, frames);
    let mut frame = vec![0.0; MCEP_WINDOW];
    for n in 0..frames {
        let center = (n * frame_shift) as isize;
        for (j, f) in frame.iter_mut().enumerate() {
            *f = w.samples[reflect_index(center - half + j as isize, w.len())] * win[j];
        }
        let spec = log_power_spectrum(&frame, MCEP_DFT)?;
        let warped: Vec<f64> = warp_pos.iter().map(|&p| interp_log_spec(&spec, p)).collect();
        let cep = real_cepstrum(&warped, MCEP_DFT)?;
        for (d, v) in out.col_mut(n).iter_mut().enumerate() {
            *v = quantize(cep[d]);
        }
    }
    Ok(out)
}

/// Reconstructs the warped log-power envelope a mel-cepstrum frame encodes
/// (inverse of the truncation in [`extract_mcep`]), for diagnostics and
/// spectral-distortion metrics.
pub fn mcep_to_warped_log_spec(mcep: &[f64]) -> Result<Vec<f64>> {
    let k_bins = MCEP_DFT / 2 + 1;
    let mut cep = vec![0.0; k_bins];
    if mcep.len() > cep.len() {
        return Err(Error::Parameter("mel-cepstrum longer than quefrency axis".into()));
    }
    cep[..mcep.len()].copy_from_slice(mcep);
    crate::dsp::cepstrum_to_log_spec(&cep, MCEP_DFT)
}

/// 1-dim coded aperiodicity: log of the autocorrelation deficit (1 - peak) at
/// the F0 lag for voiced frames, 0 for unvoiced. This coder is intentionally
/// simple and is not interchangeable with WORLD's band aperiodicity.
pub fn extract_coded_ap(w: &Waveform, f0: &F0Contour, cfg: &F0ExtractConfig) -> Result<Vec<f64>> {
    let frames = w.len().div_ceil(f0.frame_shift);
    if frames != f0.frames() {
        return Err(Error::Shape(format!(
            "f0 contour has {} frames but waveform implies {frames}",
            f0.frames()
        )));
    }
    let mut out = Vec::with_capacity(frames);
    for (n, &f) in f0.values.iter().enumerate() {
        if f <= 0.0 {
            out.push(0.0);
            continue;
        }
        let center = (n * f0.frame_shift) as isize;
        let seg = centered_segment(w, center, cfg.window);
        let lag = (w.sample_rate as f64 / f).round() as usize;
        let lag = lag.clamp(2, cfg.window / 2);
        let r = normalized_autocorr(&seg, lag);
        out.push(quantize((1.0 - r).clamp(1e-4, 1.0).ln()));
    }
    Ok(out)
}

/// Runs all extractors and assembles the conditioning features.
pub fn extract_all(
    w: &Waveform,
    cfg: &F0ExtractConfig,
    alpha: f64,
) -> Result<(F0Contour, AuxFeatureFrames)> {
    let f0 = extract_f0(w, cfg)?;
    let mcep = extract_mcep(w, cfg.frame_shift, MCEP_DIM - 1, alpha)?;
    let coded_ap = extract_coded_ap(w, &f0, cfg)?;
    let aux = AuxFeatureFrames {
        mcep,
        coded_ap,
        vuv: f0.voiced_flags(),
        frame_shift: cfg.frame_shift,
    };
    aux.validate()?;
    Ok((f0, aux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::EPS_POW;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};

    fn tone(freq: f64, fs: u32, n: usize, amp: f64) -> Waveform {
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / fs as f64).sin()).collect();
        Waveform::new(s, fs).unwrap()
    }

    fn sawtooth(f0: f64, fs: u32, n: usize) -> Waveform {
        // additive harmonic sawtooth, band-limited below nyquist
        let nyq = fs as f64 / 2.0;
        let hmax = (nyq / f0).floor() as usize - 1;
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs as f64;
                (1..=hmax)
                    .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
                    * 0.4
            })
            .collect();
        Waveform::new(s, fs).unwrap()
    }

    fn white_noise(n: usize, fs: u32, seed: u64) -> Waveform {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.2).unwrap();
        Waveform::new((0..n).map(|_| dist.sample(&mut rng)).collect(), fs).unwrap()
    }

    #[test]
    fn f0_of_pure_tone_within_2hz() {
        let w = tone(200.0, 16000, 16000, 0.5);
        let f0 = extract_f0(&w, &F0ExtractConfig::default()).unwrap();
        let voiced: Vec<f64> = f0.values.iter().cloned().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() > f0.frames() * 9 / 10, "tone should be mostly voiced");
        for v in voiced {
            assert!((v - 200.0).abs() <= 2.0, "got {v}");
        }
    }

    #[test]
    fn f0_of_noise_is_mostly_unvoiced() {
        let w = white_noise(16000, 16000, 11);
        let f0 = extract_f0(&w, &F0ExtractConfig::default()).unwrap();
        let unvoiced = f0.values.iter().filter(|&&v| v == 0.0).count();
        assert!(
            unvoiced * 10 >= f0.frames() * 9,
            "want >= 90% unvoiced, got {unvoiced}/{}",
            f0.frames()
        );
    }

    #[test]
    fn f0_of_silence_is_zero() {
        let w = Waveform::new(vec![0.0; 8000], 16000).unwrap();
        let f0 = extract_f0(&w, &F0ExtractConfig::default()).unwrap();
        assert!(f0.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn f0_of_sawtooth_within_2_percent() {
        for base in [100.0, 200.0, 400.0] {
            let w = sawtooth(base, 16000, 16000);
            let f0 = extract_f0(&w, &F0ExtractConfig::default()).unwrap();
            let voiced: Vec<f64> = f0.values.iter().cloned().filter(|&v| v > 0.0).collect();
            assert!(voiced.len() > f0.frames() / 2, "sawtooth {base} should be voiced");
            for v in voiced {
                assert!((v - base).abs() / base <= 0.02, "base {base}: got {v}");
            }
        }
    }

    #[test]
    fn mcep_of_silence_is_floor_energy_only() {
        let w = Waveform::new(vec![0.0; 4000], 16000).unwrap();
        let mcep = extract_mcep(&w, 80, 24, 0.42).unwrap();
        for t in 0..mcep.cols() {
            assert!((mcep.get(0, t) - EPS_POW.ln()).abs() < 1e-3);
            for d in 1..MCEP_DIM {
                assert!(mcep.get(d, t).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mcep_is_deterministic() {
        let w = white_noise(4000, 16000, 3);
        let a = extract_mcep(&w, 80, 24, 0.42).unwrap();
        let b = extract_mcep(&w, 80, 24, 0.42).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn mcep_envelope_matches_known_filter_within_1db() {
        // noise through a broad two-pole resonator; envelope is known in
        // closed form, mcep truncation should track it closely midband
        let fs = 16000u32;
        let n = 120000;
        let noise = white_noise(n, fs, 7);
        let (r, f_res) = (0.88, 1400.0);
        let theta = 2.0 * PI * f_res / fs as f64;
        let (a1, a2) = (-2.0 * r * theta.cos(), r * r);
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = noise.samples[i]
                - a1 * if i >= 1 { y[i - 1] } else { 0.0 }
                - a2 * if i >= 2 { y[i - 2] } else { 0.0 };
        }
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in y.iter_mut() {
            *v *= 0.5 / peak;
        }
        let w = Waveform::new(y, fs).unwrap();
        let mcep = extract_mcep(&w, 80, 24, 0.42).unwrap();

        // mean mcep across frames -> one envelope estimate
        let mut mean = vec![0.0; MCEP_DIM];
        for t in 0..mcep.cols() {
            for d in 0..MCEP_DIM {
                mean[d] += mcep.get(d, t);
            }
        }
        for v in mean.iter_mut() {
            *v /= mcep.cols() as f64;
        }
        let env = mcep_to_warped_log_spec(&mean).unwrap();

        // closed-form filter response sampled on the same warped grid
        let k_bins = env.len();
        let target: Vec<f64> = (0..k_bins)
            .map(|m| {
                let themf = PI * m as f64 / (k_bins - 1) as f64;
                let om = unwarp_freq(themf, 0.42);
                let e1 = num_complexish(om);
                let e2 = num_complexish(2.0 * om);
                let den_re = 1.0 + a1 * e1.0 + a2 * e2.0;
                let den_im = a1 * e1.1 + a2 * e2.1;
                -( den_re * den_re + den_im * den_im ).ln()
            })
            .collect();

        // compare shapes (mean-removed) over the midband of the warped axis
        let lo = k_bins * 5 / 100;
        let hi = k_bins * 70 / 100;
        let env_mean = env[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let tgt_mean = target[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let mut sq = 0.0;
        for i in lo..hi {
            let d = (env[i] - env_mean) - (target[i] - tgt_mean);
            sq += d * d;
        }
        let rms_db = (sq / (hi - lo) as f64).sqrt() * 10.0 / std::f64::consts::LN_10;
        assert!(rms_db < 1.0, "midband envelope RMS error {rms_db} dB");
    }

    fn num_complexish(om: f64) -> (f64, f64) {
        ((-om).cos(), (-om).sin())
    }

    #[test]
    fn coded_ap_low_for_tone_zero_for_unvoiced() {
        let w = tone(180.0, 16000, 12000, 0.5);
        let cfg = F0ExtractConfig::default();
        let f0 = extract_f0(&w, &cfg).unwrap();
        let ap = extract_coded_ap(&w, &f0, &cfg).unwrap();
        let margin = cfg.window / 2;
        for (n, (&f, &a)) in f0.values.iter().zip(ap.iter()).enumerate() {
            let center = n * cfg.frame_shift;
            let interior = center >= margin && center + margin <= w.len();
            if f > 0.0 && interior {
                // edge frames see reflection artifacts; only interior ones
                // must look strongly periodic
                assert!(a < -4.0, "frame {n}: periodic tone should have low ap, got {a}");
            } else if f <= 0.0 {
                assert_eq!(a, 0.0);
            }
        }
    }

    #[test]
    fn extract_all_shapes_align() {
        let w = sawtooth(150.0, 16000, 8000);
        let (f0, aux) = extract_all(&w, &F0ExtractConfig::default(), 0.42).unwrap();
        assert_eq!(f0.frames(), aux.frames());
        assert_eq!(aux.mcep.rows(), MCEP_DIM);
        assert_eq!(f0.frames(), 100);
        assert_eq!(aux.vuv, f0.voiced_flags());
    }
}
