//! Objective evaluation: log-F0 RMSE, voicing decision error, mel-cepstral
//! distortion, and log spectral distortion, plus corpus-level reports.
//!
//! Conventions, chosen once and documented here: F0 RMSE is computed in the
//! natural-log domain over frames voiced in both contours (voicing
//! disagreements are counted separately by `uv_error`); MCD excludes the
//! energy coefficient and compares frame-synchronously (copy synthesis
//! preserves timing, so time warping would only hide bugs); LSD uses the
//! first spectral-loss resolution (shift 80, size 320, 512-bin DFT) after
//! normalizing both waveforms to unit RMS.

use std::f64::consts::{LN_10, SQRT_2};
use std::path::Path;

use serde::Serialize;

use crate::dsp::{stft, Waveform, WindowKind, EPS_POW};
use crate::error::{Error, Result};
use crate::excitation::utterance_seed;
use crate::extract::{extract_f0, extract_mcep, F0ExtractConfig};
use crate::features::{list_utterances, load_features, F0Contour, MCEP_DIM};
use crate::mat::Mat;
use crate::model::Generator;
use crate::synth::synthesize_utterance;
use crate::wav::read_wav;

/// dB scaling of the cepstral Euclidean distance: 10 * sqrt(2) / ln 10.
pub fn mcd_constant() -> f64 {
    10.0 * SQRT_2 / LN_10
}

fn check_same_grid(a: &F0Contour, b: &F0Contour) -> Result<()> {
    if a.frames() != b.frames()
        || a.frame_shift != b.frame_shift
        || a.sample_rate != b.sample_rate
    {
        return Err(Error::Shape(format!(
            "f0 contours disagree: {} frames shift {} fs {} vs {} frames shift {} fs {}",
            a.frames(),
            a.frame_shift,
            a.sample_rate,
            b.frames(),
            b.frame_shift,
            b.sample_rate
        )));
    }
    Ok(())
}

/// RMSE of ln(scale * f0_ref) - ln(f0_gen) over frames voiced in both
/// contours. Unitless (log-Hz, natural log).
pub fn rmse_log_f0(f0_ref: &F0Contour, f0_gen: &F0Contour, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!("f0 scale must be positive, got {scale}")));
    }
    check_same_grid(f0_ref, f0_gen)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&r, &g) in f0_ref.values.iter().zip(&f0_gen.values) {
        if r > 0.0 && g > 0.0 {
            let d = (scale * r).ln() - g.ln();
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no commonly-voiced frames".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Percentage of frames whose voiced/unvoiced decisions disagree.
pub fn uv_error(f0_ref: &F0Contour, f0_gen: &F0Contour) -> Result<f64> {
    check_same_grid(f0_ref, f0_gen)?;
    let total = f0_ref.frames();
    if total == 0 {
        return Err(Error::UndefinedMetric("empty f0 contours".into()));
    }
    let mismatches = f0_ref
        .values
        .iter()
        .zip(&f0_gen.values)
        .filter(|(&r, &g)| (r > 0.0) != (g > 0.0))
        .count();
    Ok(100.0 * mismatches as f64 / total as f64)
}

/// Mel-cepstral distortion in dB: mean over frames of the scaled Euclidean
/// distance over coefficients 1.. (the energy coefficient c0 is excluded).
pub fn mcd(mcep_ref: &Mat, mcep_gen: &Mat) -> Result<f64> {
    if mcep_ref.shape() != mcep_gen.shape() {
        return Err(Error::Shape(format!(
            "mcep shapes disagree: {:?} vs {:?}",
            mcep_ref.shape(),
            mcep_gen.shape()
        )));
    }
    if mcep_ref.rows() < 2 {
        return Err(Error::Parameter("mcd needs at least two cepstral coefficients".into()));
    }
    if mcep_ref.cols() == 0 {
        return Err(Error::UndefinedMetric("no frames to compare".into()));
    }
    let k = mcd_constant();
    let mut total = 0.0;
    for t in 0..mcep_ref.cols() {
        let a = mcep_ref.col(t);
        let b = mcep_gen.col(t);
        let ss: f64 = a[1..].iter().zip(&b[1..]).map(|(x, y)| (x - y) * (x - y)).sum();
        total += k * ss.sqrt();
    }
    Ok(total / mcep_ref.cols() as f64)
}

fn normalize_rms(w: &Waveform) -> Result<Waveform> {
    let ms = w.samples.iter().map(|s| s * s).sum::<f64>() / w.len() as f64;
    if ms <= 0.0 {
        return Err(Error::UndefinedMetric("zero-power waveform".into()));
    }
    let inv = 1.0 / ms.sqrt();
    Waveform::new(w.samples.iter().map(|s| s * inv).collect(), w.sample_rate)
}

/// Log spectral distortion in dB: per frame, the RMS over bins of
/// 10*log10 of the power ratio; averaged over frames. Both waveforms are
/// normalized to unit RMS first, so pure gain changes measure zero.
pub fn lsd(w_ref: &Waveform, w_gen: &Waveform) -> Result<f64> {
    if w_ref.len() != w_gen.len() || w_ref.sample_rate != w_gen.sample_rate {
        return Err(Error::Shape(format!(
            "waveforms disagree: {} samples at {} Hz vs {} samples at {} Hz",
            w_ref.len(),
            w_ref.sample_rate,
            w_gen.len(),
            w_gen.sample_rate
        )));
    }
    let a = normalize_rms(w_ref)?;
    let b = normalize_rms(w_gen)?;
    let (shift, size, bins) = (80, 320, 512);
    let sa = stft(&a, shift, size, bins, WindowKind::Hann)?;
    let sb = stft(&b, shift, size, bins, WindowKind::Hann)?;
    let db = 10.0 / LN_10;
    let mut total = 0.0;
    for n in 0..sa.frames {
        let mut ss = 0.0;
        for k in 0..sa.bins {
            // floor both powers: frames of exact digital silence would
            // otherwise contribute ln(0)
            let d = db * ((sa.power(n, k) + EPS_POW).ln() - (sb.power(n, k) + EPS_POW).ln());
            ss += d * d;
        }
        total += (ss / sa.bins as f64).sqrt();
    }
    Ok(total / sa.frames as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct UtteranceEval {
    pub id: String,
    /// None when the pair had no commonly-voiced frames.
    pub rmse_logf0: Option<f64>,
    pub uv_error_percent: f64,
    pub mcd_db: f64,
    /// Only measured at scale 1.0, where the reference audio is the target.
    pub lsd_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub f0_scale: f64,
    pub utterances: Vec<UtteranceEval>,
    pub mean_rmse_logf0: Option<f64>,
    pub mean_uv_error_percent: f64,
    pub mean_mcd_db: f64,
    pub mean_lsd_db: Option<f64>,
}

impl EvalReport {
    pub fn from_utterances(f0_scale: f64, utterances: Vec<UtteranceEval>) -> Self {
        let mean_opt = |vals: Vec<f64>| {
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        let mean_rmse_logf0 =
            mean_opt(utterances.iter().filter_map(|u| u.rmse_logf0).collect());
        let mean_lsd_db = mean_opt(utterances.iter().filter_map(|u| u.lsd_db).collect());
        let n = utterances.len().max(1) as f64;
        let mean_uv_error_percent =
            utterances.iter().map(|u| u.uv_error_percent).sum::<f64>() / n;
        let mean_mcd_db = utterances.iter().map(|u| u.mcd_db).sum::<f64>() / n;
        EvalReport {
            f0_scale,
            utterances,
            mean_rmse_logf0,
            mean_uv_error_percent,
            mean_mcd_db,
            mean_lsd_db,
        }
    }

    /// Human-readable table: one row per utterance plus a summary block.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:8.4}"),
            None => format!("{:>8}", "-"),
        };
        let mut out = String::new();
        out.push_str(&format!("f0 scale: {:.2}\n", self.f0_scale));
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8}\n",
            "utterance", "rmse_lf0", "uv_pct", "mcd_db", "lsd_db"
        ));
        for u in &self.utterances {
            out.push_str(&format!(
                "{:<24} {} {:8.3} {:8.3} {}\n",
                u.id,
                fmt_opt(u.rmse_logf0),
                u.uv_error_percent,
                u.mcd_db,
                fmt_opt(u.lsd_db)
            ));
        }
        out.push_str(&format!(
            "{:<24} {} {:8.3} {:8.3} {}\n",
            "mean",
            fmt_opt(self.mean_rmse_logf0),
            self.mean_uv_error_percent,
            self.mean_mcd_db,
            fmt_opt(self.mean_lsd_db)
        ));
        out
    }

    /// Machine-readable table, one row per utterance plus a mean row.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("id,f0_scale,rmse_logf0,uv_error_percent,mcd_db,lsd_db\n");
        for u in &self.utterances {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                u.id,
                self.f0_scale,
                cell(u.rmse_logf0),
                u.uv_error_percent,
                u.mcd_db,
                cell(u.lsd_db)
            ));
        }
        out.push_str(&format!(
            "mean,{},{},{:.6},{:.6},{}\n",
            self.f0_scale,
            cell(self.mean_rmse_logf0),
            self.mean_uv_error_percent,
            self.mean_mcd_db,
            cell(self.mean_lsd_db)
        ));
        out
    }
}

/// F0 analysis range widened to cover the scaled pitch, since the synthesis
/// target sits at scale * f0 rather than in the training range.
fn eval_extract_config(
    base: &F0ExtractConfig,
    scale: f64,
    sample_rate: u32,
    frame_shift: usize,
) -> F0ExtractConfig {
    let mut cfg = base.clone();
    cfg.frame_shift = frame_shift;
    cfg.f0_floor = (base.f0_floor * scale.min(1.0) * 0.9).max(30.0);
    cfg.f0_ceil = (base.f0_ceil * scale.max(1.0) * 1.1).min(0.45 * sample_rate as f64);
    cfg
}

/// Synthesizes every utterance in the corpus at the given f0 scale, then
/// measures the outputs against the stored reference features (and, at scale
/// 1.0, against the reference audio). `alpha` is the mel-warping factor used
/// when the reference features were extracted.
pub fn evaluate_corpus(
    gen: &Generator,
    corpus_dir: &Path,
    scale: f64,
    seed: u64,
    extract_cfg: &F0ExtractConfig,
    alpha: f64,
) -> Result<EvalReport> {
    let dirs = list_utterances(corpus_dir)?;
    let mut utterances = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let (record, f0, aux) = load_features(&dir)?;
        let (wav, _) =
            synthesize_utterance(gen, &f0, &aux, scale, utterance_seed(seed, &record.id))?;
        let ex_cfg = eval_extract_config(extract_cfg, scale, f0.sample_rate, f0.frame_shift);
        let f0_out = extract_f0(&wav, &ex_cfg)?;
        let mcep_out = extract_mcep(&wav, f0.frame_shift, MCEP_DIM - 1, alpha)?;
        let rmse_logf0 = match rmse_log_f0(&f0, &f0_out, scale) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let uv = uv_error(&f0, &f0_out)?;
        let mcd_db = mcd(&aux.mcep, &mcep_out)?;
        let lsd_db = if scale == 1.0 {
            let reference = read_wav(&record.wav_path)?;
            // synthesis length is rounded up to whole frames; compare the
            // common prefix
            let n = reference.len().min(wav.len());
            let a = Waveform::new(reference.samples[..n].to_vec(), reference.sample_rate)?;
            let b = Waveform::new(wav.samples[..n].to_vec(), wav.sample_rate)?;
            Some(lsd(&a, &b)?)
        } else {
            None
        };
        utterances.push(UtteranceEval {
            id: record.id,
            rmse_logf0,
            uv_error_percent: uv,
            mcd_db,
            lsd_db,
        });
    }
    Ok(EvalReport::from_utterances(scale, utterances))
}
