//! Acoustic feature types and the on-disk utterance container.
//!
//! Container layout: one directory per utterance holding `manifest.json` plus
//! raw little-endian f32 streams `f0.f32`, `mcep.f32`, `ap.f32`, `vuv.f32`
//! (frame-major). Feature values are kept f32-representable in memory so the
//! save/load round trip is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

pub const MCEP_DIM: usize = 25;

/// Per-frame fundamental frequency in Hz; 0 marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    pub values: Vec<f64>,
    pub frame_shift: usize,
    pub sample_rate: u32,
}

impl F0Contour {
    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn voiced_flags(&self) -> Vec<f64> {
        self.values.iter().map(|&f| if f > 0.0 { 1.0 } else { 0.0 }).collect()
    }

    /// Multiplies voiced frames by `scale`, leaving unvoiced zeros untouched.
    pub fn scaled(&self, scale: f64) -> F0Contour {
        F0Contour {
            values: self.values.iter().map(|&f| quantize(f * scale)).collect(),
            frame_shift: self.frame_shift,
            sample_rate: self.sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("F0 contour must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Conditioning features: mel-cepstra (rows = coefficients, cols = frames),
/// 1-dim coded aperiodicity, and a binary voiced flag per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFeatureFrames {
    pub mcep: Mat,
    pub coded_ap: Vec<f64>,
    pub vuv: Vec<f64>,
    pub frame_shift: usize,
}

impl AuxFeatureFrames {
    pub fn frames(&self) -> usize {
        self.mcep.cols()
    }

    /// Conditioning dimension: mcep rows + aperiodicity + voiced flag.
    pub fn cond_dim(&self) -> usize {
        self.mcep.rows() + 2
    }

    /// Stacks mcep, coded_ap, and vuv into one per-frame conditioning matrix.
    pub fn stacked(&self) -> Mat {
        let frames = self.frames();
        let mut out = Mat::zeros(self.cond_dim(), frames);
        for t in 0..frames {
            let col = out.col_mut(t);
            col[..self.mcep.rows()].copy_from_slice(self.mcep.col(t));
            col[self.mcep.rows()] = self.coded_ap[t];
            col[self.mcep.rows() + 1] = self.vuv[t];
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.mcep.rows() != MCEP_DIM {
            return Err(Error::Shape(format!(
                "mcep dimension {} does not match expected {MCEP_DIM}",
                self.mcep.rows()
            )));
        }
        let frames = self.frames();
        if self.coded_ap.len() != frames || self.vuv.len() != frames {
            return Err(Error::Shape(format!(
                "frame counts differ: mcep {frames}, ap {}, vuv {}",
                self.coded_ap.len(),
                self.vuv.len()
            )));
        }
        if self.vuv.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Data("vuv flags must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// One utterance: id, where its audio lives, and bookkeeping metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub wav_path: PathBuf,
    pub speaker: String,
    pub duration_secs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    id: String,
    speaker: String,
    wav_path: PathBuf,
    duration_secs: f64,
    sample_rate: u32,
    frame_shift: usize,
    frames: usize,
    mcep_dim: usize,
}

const MANIFEST_VERSION: u32 = 1;

/// Clamps a value through f32 so container round trips are bit-exact.
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn write_f32_stream(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f32_stream(path: &Path, expect: usize) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != expect * 4 {
        return Err(Error::Schema(format!(
            "{}: expected {} f32 values, found {} bytes",
            path.display(),
            expect,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// Writes manifest plus all feature streams into `dir`.
pub fn save_features(
    dir: &Path,
    rec: &UtteranceRecord,
    f0: &F0Contour,
    aux: &AuxFeatureFrames,
) -> Result<()> {
    f0.validate()?;
    aux.validate()?;
    if f0.frames() != aux.frames() {
        return Err(Error::Shape(format!(
            "f0 frames {} != aux frames {}",
            f0.frames(),
            aux.frames()
        )));
    }
    if f0.frame_shift != aux.frame_shift {
        return Err(Error::Shape("f0/aux frame_shift mismatch".into()));
    }
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        id: rec.id.clone(),
        speaker: rec.speaker.clone(),
        wav_path: rec.wav_path.clone(),
        duration_secs: rec.duration_secs,
        sample_rate: f0.sample_rate,
        frame_shift: f0.frame_shift,
        frames: f0.frames(),
        mcep_dim: aux.mcep.rows(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    write_f32_stream(&dir.join("f0.f32"), f0.values.iter().copied())?;
    write_f32_stream(&dir.join("mcep.f32"), aux.mcep.data().iter().copied())?;
    write_f32_stream(&dir.join("ap.f32"), aux.coded_ap.iter().copied())?;
    write_f32_stream(&dir.join("vuv.f32"), aux.vuv.iter().copied())?;
    Ok(())
}

/// Loads one utterance directory back into memory.
pub fn load_features(dir: &Path) -> Result<(UtteranceRecord, F0Contour, AuxFeatureFrames)> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(Error::NotFound(mpath));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Schema(format!(
            "unsupported container version {}",
            manifest.version
        )));
    }
    if manifest.mcep_dim != MCEP_DIM {
        return Err(Error::Schema(format!(
            "mcep_dim {} in manifest, expected {MCEP_DIM}",
            manifest.mcep_dim
        )));
    }
    let frames = manifest.frames;
    let f0 = F0Contour {
        values: read_f32_stream(&dir.join("f0.f32"), frames)?,
        frame_shift: manifest.frame_shift,
        sample_rate: manifest.sample_rate,
    };
    let mcep_vals = read_f32_stream(&dir.join("mcep.f32"), frames * manifest.mcep_dim)?;
    let aux = AuxFeatureFrames {
        mcep: Mat::from_vec(manifest.mcep_dim, frames, mcep_vals),
        coded_ap: read_f32_stream(&dir.join("ap.f32"), frames)?,
        vuv: read_f32_stream(&dir.join("vuv.f32"), frames)?,
        frame_shift: manifest.frame_shift,
    };
    f0.validate()?;
    aux.validate()?;
    let rec = UtteranceRecord {
        id: manifest.id,
        wav_path: manifest.wav_path,
        speaker: manifest.speaker,
        duration_secs: manifest.duration_secs,
    };
    Ok((rec, f0, aux))
}

#[derive(Debug, Serialize, Deserialize)]
struct SignalManifest {
    version: u32,
    id: String,
    sample_rate: u32,
    samples: usize,
}

/// Stores one sample-rate signal (e.g. an excitation dump) in the same
/// container style as features: manifest.json plus an f32 stream.
pub fn save_signal(dir: &Path, id: &str, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = SignalManifest {
        version: MANIFEST_VERSION,
        id: id.to_string(),
        sample_rate,
        samples: samples.len(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    write_f32_stream(&dir.join("signal.f32"), samples.iter().copied())
}

pub fn load_signal(dir: &Path) -> Result<(String, Vec<f64>, u32)> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(Error::NotFound(mpath));
    }
    let manifest: SignalManifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Schema(format!("unsupported container version {}", manifest.version)));
    }
    let samples = read_f32_stream(&dir.join("signal.f32"), manifest.samples)?;
    Ok((manifest.id, samples, manifest.sample_rate))
}

/// Lists utterance directories (those containing manifest.json) under a corpus
/// root, sorted by name for deterministic iteration order.
pub fn list_utterances(corpus_dir: &Path) -> Result<Vec<PathBuf>> {
    if !corpus_dir.is_dir() {
        return Err(Error::NotFound(corpus_dir.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(corpus_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("manifest.json").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!(
            "no utterance directories under {}",
            corpus_dir.display()
        )));
    }
    Ok(dirs)
}
