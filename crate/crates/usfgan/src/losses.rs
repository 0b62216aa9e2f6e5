//! Training objectives: least-squares adversarial losses, multi-resolution
//! log-power spectral loss, envelope flatness term, and their weighted sums.

use std::rc::Rc;

use rustfft::num_complex::Complex;

use crate::autodiff::ScalarLoss;
use crate::dsp::{fft_inverse, hann_periodic, reflect_index, stft, SpectrogramGrid, Waveform, WindowKind, EPS_POW};
use crate::envelope::{envelope_reg_loss, F0AnalysisTables};
use crate::error::{Error, Result};
use crate::features::F0Contour;
use crate::mat::Mat;

/// One STFT analysis setting: (frame_shift, frame_size, dft_bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub frame_shift: usize,
    pub frame_size: usize,
    pub dft_bins: usize,
}

/// The three default analysis resolutions (5/2.5/40 ms shifts at 16 kHz).
pub fn default_stft_configs() -> Vec<StftConfig> {
    vec![
        StftConfig { frame_shift: 80, frame_size: 320, dft_bins: 512 },
        StftConfig { frame_shift: 40, frame_size: 80, dft_bins: 128 },
        StftConfig { frame_shift: 640, frame_size: 1920, dft_bins: 2048 },
    ]
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_reg: f64,
    pub stft_configs: Vec<StftConfig>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_adv: 4.0, lambda_reg: 1.0, stft_configs: default_stft_configs() }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_adv < 0.0 || self.lambda_reg < 0.0 {
            return Err(Error::Parameter("loss weights must be non-negative".into()));
        }
        if self.stft_configs.is_empty() {
            return Err(Error::Parameter("need at least one STFT config".into()));
        }
        Ok(())
    }
}

/// Generator adversarial loss: mean (1 - D(G(z)))^2.
pub fn adv_loss_g(scores_fake: &[f64]) -> f64 {
    if scores_fake.is_empty() {
        return 0.0;
    }
    scores_fake.iter().map(|s| (1.0 - s) * (1.0 - s)).sum::<f64>() / scores_fake.len() as f64
}

/// Discriminator loss: mean (1 - D(x))^2 + mean D(G(z))^2.
pub fn adv_loss_d(scores_real: &[f64], scores_fake: &[f64]) -> f64 {
    let real = if scores_real.is_empty() {
        0.0
    } else {
        scores_real.iter().map(|s| (1.0 - s) * (1.0 - s)).sum::<f64>() / scores_real.len() as f64
    };
    let fake = if scores_fake.is_empty() {
        0.0
    } else {
        scores_fake.iter().map(|s| s * s).sum::<f64>() / scores_fake.len() as f64
    };
    real + fake
}

fn grid_log_power(grid: &SpectrogramGrid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.frames * grid.bins);
    for n in 0..grid.frames {
        for k in 0..grid.bins {
            out.push((grid.power(n, k) + EPS_POW).ln());
        }
    }
    out
}

fn as_waveform(samples: &[f64]) -> Waveform {
    // sample_rate is irrelevant to the loss; grids only use sample indices
    Waveform { samples: samples.to_vec(), sample_rate: 1 }
}

/// Squared log-power-ratio loss for one analysis setting, averaged over the
/// N x K grid: (1 / 2NK) sum of (ln P(y) - ln P(y_hat))^2.
pub fn stft_loss_single(y: &[f64], y_hat: &[f64], cfg: &StftConfig) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "waveform lengths differ: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    let gy = stft(&as_waveform(y), cfg.frame_shift, cfg.frame_size, cfg.dft_bins, WindowKind::Hann)?;
    let gh = stft(&as_waveform(y_hat), cfg.frame_shift, cfg.frame_size, cfg.dft_bins, WindowKind::Hann)?;
    let ly = grid_log_power(&gy);
    let lh = grid_log_power(&gh);
    let nk = ly.len() as f64;
    let sum: f64 = ly.iter().zip(lh.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * sum / nk)
}

/// [`stft_loss_single`] plus its gradient with respect to `y_hat`.
pub fn stft_loss_single_grad(
    y: &[f64],
    y_hat: &[f64],
    cfg: &StftConfig,
) -> Result<(f64, Vec<f64>)> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "waveform lengths differ: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    let gy = stft(&as_waveform(y), cfg.frame_shift, cfg.frame_size, cfg.dft_bins, WindowKind::Hann)?;
    let gh = stft(&as_waveform(y_hat), cfg.frame_shift, cfg.frame_size, cfg.dft_bins, WindowKind::Hann)?;
    let win = hann_periodic(cfg.frame_size);
    let half = (cfg.frame_size / 2) as isize;
    let nk = (gh.frames * gh.bins) as f64;
    let t_len = y_hat.len();

    let mut loss = 0.0;
    let mut grad = vec![0.0; t_len];
    let mut gbuf = vec![Complex::new(0.0, 0.0); cfg.dft_bins];
    for n in 0..gh.frames {
        for v in gbuf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for k in 0..gh.bins {
            let py = gy.power(n, k) + EPS_POW;
            let ph = gh.power(n, k) + EPS_POW;
            let diff = ph.ln() - py.ln();
            loss += 0.5 * diff * diff / nk;
            // d loss / d ln(ph) = diff / nk; d ln(ph) / d ph = 1 / ph
            let d_power = diff / (nk * ph);
            gbuf[k] = Complex::new(
                2.0 * gh.re(n, k) * d_power,
                2.0 * gh.im(n, k) * d_power,
            );
        }
        // adjoint of the one-sided real-input DFT: d_frame = N * Re(IDFT(g))
        fft_inverse(&mut gbuf);
        let center = (n * cfg.frame_shift) as isize;
        for (j, &wv) in win.iter().enumerate() {
            let src = reflect_index(center - half + j as isize, t_len);
            grad[src] += cfg.dft_bins as f64 * gbuf[j].re * wv;
        }
    }
    Ok((loss, grad))
}

/// Mean of [`stft_loss_single`] over all configured resolutions.
pub fn multi_stft_loss(y: &[f64], y_hat: &[f64], weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let mut acc = 0.0;
    for cfg in &weights.stft_configs {
        acc += stft_loss_single(y, y_hat, cfg)?;
    }
    Ok(acc / weights.stft_configs.len() as f64)
}

/// [`multi_stft_loss`] plus its gradient with respect to `y_hat`.
pub fn multi_stft_loss_grad(
    y: &[f64],
    y_hat: &[f64],
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    weights.validate()?;
    let m = weights.stft_configs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; y_hat.len()];
    for cfg in &weights.stft_configs {
        let (l, g) = stft_loss_single_grad(y, y_hat, cfg)?;
        loss += l / m;
        for (acc, v) in grad.iter_mut().zip(g.iter()) {
            *acc += v / m;
        }
    }
    Ok((loss, grad))
}

/// Combined auxiliary loss: spectral term plus weighted envelope flatness on
/// the intermediate excitation.
pub fn aux_loss(
    y: &[f64],
    y_hat: &[f64],
    e_hat: &[f64],
    f0: &F0Contour,
    tables: &F0AnalysisTables,
    weights: &LossWeights,
) -> Result<f64> {
    let stft_term = multi_stft_loss(y, y_hat, weights)?;
    if weights.lambda_reg == 0.0 {
        return Ok(stft_term);
    }
    Ok(stft_term + weights.lambda_reg * envelope_reg_loss(e_hat, f0, tables)?)
}

/// Generator total: auxiliary loss plus weighted adversarial term.
pub fn gen_total_loss(aux: f64, adv: f64, weights: &LossWeights) -> f64 {
    aux + weights.lambda_adv * adv
}

/// Graph adapter: multi-resolution spectral loss of a 1-row generated
/// waveform node against a fixed target.
pub struct MultiStftLossOp {
    pub target: Vec<f64>,
    pub weights: Rc<LossWeights>,
}

impl ScalarLoss for MultiStftLossOp {
    fn forward(&self, input: &Mat) -> f64 {
        assert_eq!(input.rows(), 1, "waveform node must be 1 x T");
        multi_stft_loss(&self.target, input.data(), &self.weights)
            .expect("spectral loss on validated shapes")
    }

    fn backward(&self, input: &Mat) -> Mat {
        let (_, grad) = multi_stft_loss_grad(&self.target, input.data(), &self.weights)
            .expect("spectral gradient on validated shapes");
        Mat::from_vec(1, input.cols(), grad)
    }
}
