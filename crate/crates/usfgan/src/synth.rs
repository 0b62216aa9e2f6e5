//! Inference: synthesize a waveform from stored features, with optional
//! pitch scaling. The scale multiplies f0 before the sinusoid is generated
//! and before the per-sample dilations are computed; the spectral
//! conditioning is left unchanged.

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::features::{AuxFeatureFrames, F0Contour};
use crate::model::Generator;

pub fn synthesize_utterance(
    gen: &Generator,
    f0: &F0Contour,
    aux: &AuxFeatureFrames,
    f0_scale: f64,
    noise_seed: u64,
) -> Result<(Waveform, Vec<f64>)> {
    if !(f0_scale > 0.0) || !f0_scale.is_finite() {
        return Err(Error::Parameter(format!("f0 scale must be positive, got {f0_scale}")));
    }
    let scaled = f0.scaled(f0_scale);
    let nyquist = f0.sample_rate as f64 / 2.0;
    let peak = scaled.values.iter().cloned().fold(0.0, f64::max);
    if peak >= nyquist {
        return Err(Error::Parameter(format!(
            "scaled f0 reaches {peak:.1} Hz, at or above the {nyquist:.0} Hz Nyquist limit"
        )));
    }
    gen.generator_forward(&scaled, aux, noise_seed)
}
