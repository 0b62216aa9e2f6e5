//! Shared signal-processing primitives: framing, windowing, spectral
//! transforms, cepstrum transforms, and frame-to-sample upsampling.
//!
//! All functions are pure and sequential, so outputs are bit-reproducible.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Floor added to power values before every logarithm; keeps losses finite on
/// silent frames.
pub const EPS_POW: f64 = 1e-12;

/// Mono waveform with nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("waveform contains non-finite samples".into()));
        }
        Ok(Waveform { samples, sample_rate })
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
}

/// Complex STFT grid: `frames` frames by `bins` = dft_bins/2+1 one-sided bins.
/// Frame `n` is centered at sample `n * frame_shift` of the source waveform.
#[derive(Debug, Clone)]
pub struct SpectrogramGrid {
    re: Vec<f64>,
    im: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub frame_shift: usize,
    pub frame_size: usize,
    pub dft_bins: usize,
}

impl SpectrogramGrid {
    #[inline]
    pub fn re(&self, frame: usize, bin: usize) -> f64 {
        self.re[frame * self.bins + bin]
    }

    #[inline]
    pub fn im(&self, frame: usize, bin: usize) -> f64 {
        self.im[frame * self.bins + bin]
    }

    pub fn power(&self, frame: usize, bin: usize) -> f64 {
        let r = self.re(frame, bin);
        let i = self.im(frame, bin);
        r * r + i * i
    }

    /// Sum of `power` over the whole grid.
    pub fn total_power(&self) -> f64 {
        let mut acc = 0.0;
        for (r, i) in self.re.iter().zip(self.im.iter()) {
            acc += r * r + i * i;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
    Rectangular,
}

/// Periodic Hann window of length `n` (DFT-even form used for analysis).
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// In-place forward DFT (no normalization).
pub fn fft_forward(buf: &mut [Complex<f64>]) {
    plan_forward(buf.len()).process(buf);
}

/// In-place inverse DFT, normalized by 1/N.
pub fn fft_inverse(buf: &mut [Complex<f64>]) {
    plan_inverse(buf.len()).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Mirror indexing without edge duplication: ..2,1,0,1,2,..,L-1,L-2,..
pub fn reflect_index(pos: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut p = pos.rem_euclid(period);
    if p >= len as isize {
        p = period - p;
    }
    p as usize
}

/// Short-time Fourier transform. Reflect-pads `frame_size/2` samples at both
/// ends so `frames = ceil(len / frame_shift)` and frame `n` is centered at
/// sample `n * frame_shift`. Frames are windowed, zero-padded to `dft_bins`,
/// and transformed; only the one-sided half is kept.
pub fn stft(
    w: &Waveform,
    frame_shift: usize,
    frame_size: usize,
    dft_bins: usize,
    window: WindowKind,
) -> Result<SpectrogramGrid> {
    if w.is_empty() {
        return Err(Error::Data("stft of empty waveform".into()));
    }
    if frame_shift == 0 || frame_size == 0 {
        return Err(Error::Parameter("frame_shift and frame_size must be positive".into()));
    }
    if dft_bins < frame_size {
        return Err(Error::Parameter(format!(
            "dft_bins {dft_bins} must be >= frame_size {frame_size}"
        )));
    }
    if frame_shift > frame_size {
        return Err(Error::Parameter(format!(
            "frame_shift {frame_shift} must be <= frame_size {frame_size}"
        )));
    }

    let len = w.len();
    let frames = len.div_ceil(frame_shift);
    let bins = dft_bins / 2 + 1;
    let win = match window {
        WindowKind::Hann => hann_periodic(frame_size),
        WindowKind::Rectangular => vec![1.0; frame_size],
    };
    let half = (frame_size / 2) as isize;

    let mut re = vec![0.0; frames * bins];
    let mut im = vec![0.0; frames * bins];
    let mut buf = vec![Complex::new(0.0, 0.0); dft_bins];
    for n in 0..frames {
        let center = (n * frame_shift) as isize;
        for (j, wv) in win.iter().enumerate() {
            let src = reflect_index(center - half + j as isize, len);
            buf[j] = Complex::new(w.samples[src] * wv, 0.0);
        }
        for v in buf.iter_mut().skip(frame_size) {
            *v = Complex::new(0.0, 0.0);
        }
        fft_forward(&mut buf);
        for k in 0..bins {
            re[n * bins + k] = buf[k].re;
            im[n * bins + k] = buf[k].im;
        }
    }
    Ok(SpectrogramGrid { re, im, frames, bins, frame_shift, frame_size, dft_bins })
}

/// Log power spectrum of one (already windowed) frame: entry k is
/// `ln(Re^2 + Im^2 + EPS_POW)` for the one-sided bins of a `dft_bins` DFT.
pub fn log_power_spectrum(frame: &[f64], dft_bins: usize) -> Result<Vec<f64>> {
    if frame.len() > dft_bins {
        return Err(Error::Parameter(format!(
            "frame length {} exceeds dft_bins {dft_bins}",
            frame.len()
        )));
    }
    let mut buf = vec![Complex::new(0.0, 0.0); dft_bins];
    for (b, &s) in buf.iter_mut().zip(frame.iter()) {
        b.re = s;
    }
    fft_forward(&mut buf);
    Ok(buf[..dft_bins / 2 + 1].iter().map(|c| (c.norm_sqr() + EPS_POW).ln()).collect())
}

/// Real cepstrum of a one-sided log spectrum (length dft_bins/2+1),
/// interpreted as half of an even-symmetric spectrum. Returns quefrencies
/// 0..=dft_bins/2 (same length as the input).
pub fn real_cepstrum(log_spec: &[f64], dft_bins: usize) -> Result<Vec<f64>> {
    let k_bins = dft_bins / 2 + 1;
    if log_spec.len() != k_bins {
        return Err(Error::Parameter(format!(
            "log_spec length {} does not match dft_bins {dft_bins} (want {k_bins})",
            log_spec.len()
        )));
    }
    let mut buf = vec![Complex::new(0.0, 0.0); dft_bins];
    for (k, &v) in log_spec.iter().enumerate() {
        buf[k].re = v;
        if k != 0 && k != dft_bins / 2 {
            buf[dft_bins - k].re = v;
        }
    }
    fft_inverse(&mut buf);
    Ok(buf[..k_bins].iter().map(|c| c.re).collect())
}

/// Inverse of [`real_cepstrum`]: symmetric cepstrum back to the one-sided log
/// spectrum.
pub fn cepstrum_to_log_spec(cepstrum: &[f64], dft_bins: usize) -> Result<Vec<f64>> {
    let k_bins = dft_bins / 2 + 1;
    if cepstrum.len() != k_bins {
        return Err(Error::Parameter(format!(
            "cepstrum length {} does not match dft_bins {dft_bins} (want {k_bins})",
            cepstrum.len()
        )));
    }
    let mut buf = vec![Complex::new(0.0, 0.0); dft_bins];
    for (q, &v) in cepstrum.iter().enumerate() {
        buf[q].re = v;
        if q != 0 && q != dft_bins / 2 {
            buf[dft_bins - q].re = v;
        }
    }
    fft_forward(&mut buf);
    Ok(buf[..k_bins].iter().map(|c| c.re).collect())
}

/// Step (hold) upsampling: each frame value is repeated `hop` times.
pub fn upsample_frames(frames: &[f64], hop: usize) -> Vec<f64> {
    assert!(hop > 0, "hop must be positive");
    let mut out = Vec::with_capacity(frames.len() * hop);
    for &v in frames {
        out.extend(std::iter::repeat(v).take(hop));
    }
    out
}

/// Step upsampling of a frame matrix (rows = feature dims, cols = frames).
pub fn upsample_frames_mat(frames: &Mat, hop: usize) -> Mat {
    assert!(hop > 0, "hop must be positive");
    let mut out = Mat::zeros(frames.rows(), frames.cols() * hop);
    for t in 0..frames.cols() {
        let src = frames.col(t);
        for j in 0..hop {
            out.col_mut(t * hop + j).copy_from_slice(src);
        }
    }
    out
}
