//! Deterministic excitation inputs: the cumulative-phase sinusoid fed to the
//! source network, the harmonic sine basis kept for diagnostics, and seeded
//! Gaussian noise channels.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

fn validate_f0(f0_upsampled: &[f64], sample_rate: u32) -> Result<()> {
    let nyquist = sample_rate as f64 / 2.0;
    for &f in f0_upsampled {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::Data("f0 must be finite and non-negative".into()));
        }
        if f >= nyquist {
            return Err(Error::Parameter(format!("f0 {f} Hz reaches nyquist {nyquist} Hz")));
        }
    }
    Ok(())
}

/// Sinusoid with cumulative phase: sample t is sin(sum of 2*pi*f0_k/fs for
/// k <= t) on voiced samples, exactly 0 on unvoiced ones. The accumulator is
/// never reset, so phase stays continuous across unvoiced gaps.
pub fn gen_sinusoid(f0_upsampled: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
    validate_f0(f0_upsampled, sample_rate)?;
    let fs = sample_rate as f64;
    let two_pi = 2.0 * PI;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(f0_upsampled.len());
    for &f in f0_upsampled {
        phase = (phase + two_pi * f / fs).rem_euclid(two_pi);
        out.push(if f > 0.0 { phase.sin() } else { 0.0 });
    }
    Ok(out)
}

/// Harmonic sine basis configuration.
#[derive(Debug, Clone)]
pub struct HarmonicBasisConfig {
    pub num_harmonics: usize,
    pub noise_std: f64,
}

impl Default for HarmonicBasisConfig {
    fn default() -> Self {
        HarmonicBasisConfig { num_harmonics: 8, noise_std: 0.003 }
    }
}

/// Harmonic sine basis: for harmonic h, voiced samples carry
/// sin(h * cumulative phase + phi_h) + n_t with n_t ~ N(0, sigma^2); unvoiced
/// samples carry n_t / (3 sigma), i.e. noise with std 1/3 regardless of
/// sigma. Initial phases phi_h are drawn once per call from `seed`.
pub fn gen_nsf_basis(
    f0_upsampled: &[f64],
    cfg: &HarmonicBasisConfig,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if cfg.num_harmonics == 0 {
        return Err(Error::Parameter("need at least one harmonic".into()));
    }
    if cfg.noise_std <= 0.0 {
        return Err(Error::Parameter("noise_std must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let phase_dist = Uniform::new_inclusive(-PI, PI);
    let phases: Vec<f64> = (0..cfg.num_harmonics).map(|_| phase_dist.sample(&mut rng)).collect();
    gen_nsf_basis_with_phases(f0_upsampled, cfg, sample_rate, &mut rng, &phases)
}

/// Same as [`gen_nsf_basis`] but with caller-supplied initial phases (one per
/// harmonic); used by tests that need phi = 0.
pub fn gen_nsf_basis_with_phases(
    f0_upsampled: &[f64],
    cfg: &HarmonicBasisConfig,
    sample_rate: u32,
    rng: &mut ChaCha20Rng,
    phases: &[f64],
) -> Result<Vec<Vec<f64>>> {
    validate_f0(f0_upsampled, sample_rate)?;
    if phases.len() != cfg.num_harmonics {
        return Err(Error::Shape("one initial phase per harmonic required".into()));
    }
    let fs = sample_rate as f64;
    let two_pi = 2.0 * PI;
    let sigma = cfg.noise_std;
    let mut basis = Vec::with_capacity(cfg.num_harmonics);
    for (h, &phi) in phases.iter().enumerate() {
        let mult = (h + 1) as f64;
        let mut phase = 0.0;
        let mut sig = Vec::with_capacity(f0_upsampled.len());
        for &f in f0_upsampled {
            phase = (phase + two_pi * mult * f / fs).rem_euclid(two_pi);
            let n: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * sigma;
            if f > 0.0 {
                sig.push((phase + phi).sin() + n);
            } else {
                sig.push(n / (3.0 * sigma));
            }
        }
        basis.push(sig);
    }
    Ok(basis)
}

/// Seeded standard-normal noise channel.
pub fn gen_noise(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..length)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect()
}

/// Stable per-utterance seed: FNV-1a over the utterance id, mixed with the
/// global seed. Keeps batches reproducible without a shared RNG.
pub fn utterance_seed(global_seed: u64, utterance_id: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ global_seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in utterance_id.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
