//! Layered run configuration: a TOML file (all sections optional) plus
//! dotted `key=value` overrides applied on top, deserialized strictly so
//! typos in keys fail fast.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::F0ExtractConfig;
use crate::trainer::TrainConfig;

/// Feature extraction stage: which audio to analyze and where the
/// per-utterance containers land.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub wav_dir: PathBuf,
    pub features_dir: PathBuf,
    /// Mel-cepstral frequency warping; 0.42 suits 16 kHz audio.
    pub alpha: f64,
    pub f0: F0ExtractConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            wav_dir: PathBuf::from("data/wav"),
            features_dir: PathBuf::from("data/features"),
            alpha: 0.42,
            f0: F0ExtractConfig::default(),
        }
    }
}

/// Synthesis stage: model checkpoint, conditioning corpus, output location.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub checkpoint: PathBuf,
    pub features_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Also write each utterance's excitation signal as a feature container.
    pub dump_excitation: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            checkpoint: PathBuf::from("runs/train/ckpt-final"),
            features_dir: PathBuf::from("data/features"),
            out_dir: PathBuf::from("synth"),
            dump_excitation: false,
        }
    }
}

/// Objective evaluation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub features_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Pitch scales to evaluate when the command line passes none.
    pub scales: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: PathBuf::from("runs/train/ckpt-final"),
            features_dir: PathBuf::from("data/features"),
            out_dir: PathBuf::from("eval"),
            scales: vec![1.0],
        }
    }
}

/// Excitation inspection plots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Checkpoint to render; omit to plot an untrained model's excitation.
    pub checkpoint: Option<PathBuf>,
    pub features_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            checkpoint: None,
            features_dir: PathBuf::from("data/features"),
            out_dir: PathBuf::from("plots"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub extract: ExtractConfig,
    pub trainer: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub plot: PlotConfig,
}

impl AppConfig {
    /// File (optional) plus overrides, strictly deserialized.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        toml::Value::Table(table)
            .try_into::<AppConfig>()
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }
}

/// Applies one `dotted.key=value` override into the raw config table. The
/// value side is parsed as TOML (so numbers, booleans, and arrays work) and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if key.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(format!("override '{key}' descends into a non-table value"))
            })?;
    }
    cur.insert(parts.last().unwrap().to_string(), value);
    Ok(())
}
