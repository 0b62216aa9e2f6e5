//! Python bindings exposing a few pure kernels of the vocoder crate for
//! cross-language spot checks: pitch-dependent dilation, the cumulative-phase
//! sinusoid, seeded noise, the spectral losses, F0 extraction, and WAV I/O.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use usfgan::dsp::Waveform;
use usfgan::envelope::{build_analysis_tables, envelope_reg_loss as env_loss};
use usfgan::extract::{extract_f0 as rs_extract_f0, F0ExtractConfig};
use usfgan::features::F0Contour;
use usfgan::losses::{
    adv_loss_d as rs_adv_d, adv_loss_g as rs_adv_g, multi_stft_loss as rs_multi_stft,
    LossWeights,
};

fn to_py(e: usfgan::Error) -> PyErr {
    match &e {
        usfgan::Error::Parameter(_) | usfgan::Error::Config(_) | usfgan::Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        usfgan::Error::Io(_) | usfgan::Error::NotFound(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Dilation of a pitch-adaptive block: round(base * fs / (f0 * dense_factor)),
/// clamped to at least 1; unvoiced frames (f0 = 0) keep the base dilation.
#[pyfunction]
fn pitch_dilation(base: usize, f0: f64, sample_rate: u32, dense_factor: f64) -> usize {
    usfgan::model::pitch_dilation(base, f0, sample_rate, dense_factor)
}

/// Cumulative-phase sinusoid over an upsampled f0 track: sin of the running
/// phase on voiced samples, exactly 0 on unvoiced ones.
#[pyfunction]
fn gen_sinusoid(f0_upsampled: Vec<f64>, sample_rate: u32) -> PyResult<Vec<f64>> {
    usfgan::excitation::gen_sinusoid(&f0_upsampled, sample_rate).map_err(to_py)
}

/// Seeded standard-normal noise; identical sequence for identical seeds.
#[pyfunction]
fn gen_noise(length: usize, seed: u64) -> Vec<f64> {
    usfgan::excitation::gen_noise(length, seed)
}

/// Multi-resolution log-power spectral distance with the default configs.
#[pyfunction]
fn multi_stft_loss(y: Vec<f64>, y_hat: Vec<f64>) -> PyResult<f64> {
    rs_multi_stft(&y, &y_hat, &LossWeights::default()).map_err(to_py)
}

/// Least-squares generator adversarial loss: mean of (1 - score)^2.
#[pyfunction]
fn adv_loss_g(scores_fake: Vec<f64>) -> f64 {
    rs_adv_g(&scores_fake)
}

/// Least-squares discriminator loss: mean (1 - real)^2 + mean fake^2.
#[pyfunction]
fn adv_loss_d(scores_real: Vec<f64>, scores_fake: Vec<f64>) -> f64 {
    rs_adv_d(&scores_real, &scores_fake)
}

/// Envelope-flatness regularization loss of an excitation given a frame-rate
/// f0 track (frame shift in samples).
#[pyfunction]
fn envelope_reg_loss(
    e: Vec<f64>,
    f0_values: Vec<f64>,
    frame_shift: usize,
    sample_rate: u32,
) -> PyResult<f64> {
    let tables = build_analysis_tables(70.0, 400.0, sample_rate, 2048).map_err(to_py)?;
    let f0 = F0Contour { values: f0_values, frame_shift, sample_rate };
    env_loss(&e, &f0, &tables).map_err(to_py)
}

/// Autocorrelation F0 track of a waveform; returns (values_hz, frame_shift).
/// Unvoiced frames are 0.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, f0_floor = 70.0, f0_ceil = 400.0))]
fn extract_f0(
    samples: Vec<f64>,
    sample_rate: u32,
    f0_floor: f64,
    f0_ceil: f64,
) -> PyResult<(Vec<f64>, usize)> {
    let w = Waveform::new(samples, sample_rate).map_err(to_py)?;
    let cfg = F0ExtractConfig { f0_floor, f0_ceil, ..Default::default() };
    let c = rs_extract_f0(&w, &cfg).map_err(to_py)?;
    Ok((c.values, c.frame_shift))
}

/// Writes mono 16-bit PCM; samples clipped to [-1, 1).
#[pyfunction]
fn write_wav(path: String, samples: Vec<f64>, sample_rate: u32) -> PyResult<()> {
    let w = Waveform::new(samples, sample_rate).map_err(to_py)?;
    usfgan::wav::write_wav(&w, path.as_ref()).map_err(to_py)
}

/// Reads mono 16-bit PCM; returns (samples, sample_rate).
#[pyfunction]
fn read_wav(path: String) -> PyResult<(Vec<f64>, u32)> {
    let w = usfgan::wav::read_wav(path.as_ref()).map_err(to_py)?;
    Ok((w.samples, w.sample_rate))
}

#[pymodule]
fn usfgan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(pitch_dilation, m)?)?;
    m.add_function(wrap_pyfunction!(gen_sinusoid, m)?)?;
    m.add_function(wrap_pyfunction!(gen_noise, m)?)?;
    m.add_function(wrap_pyfunction!(multi_stft_loss, m)?)?;
    m.add_function(wrap_pyfunction!(adv_loss_g, m)?)?;
    m.add_function(wrap_pyfunction!(adv_loss_d, m)?)?;
    m.add_function(wrap_pyfunction!(envelope_reg_loss, m)?)?;
    m.add_function(wrap_pyfunction!(extract_f0, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    Ok(())
}
