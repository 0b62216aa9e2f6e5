//! Command-line interface: extract, train, synth, eval, plot-excitation.
//! Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{AppConfig, ExtractConfig};
use crate::error::{Error, Result};
use crate::excitation::utterance_seed;
use crate::extract::extract_all;
use crate::features::{
    list_utterances, load_features, save_features, save_signal, UtteranceRecord,
};
use crate::model::Generator;
use crate::plot::plot_excitation;
use crate::synth::synthesize_utterance;
use crate::trainer::{load_generator, run_training};
use crate::wav::{read_wav, write_wav};

#[derive(Debug, Parser)]
#[command(
    name = "usfgan",
    version,
    about = "Neural vocoder with a factorized source-filter generator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dotted KEY=VALUE setting applied over the file (repeatable).
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed for all randomness; defaults to 0, never wall clock.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Extract F0 and conditioning features for every WAV in a directory.
    Extract {
        /// Leave already-extracted feature containers untouched.
        #[arg(long)]
        skip_existing: bool,
    },
    /// Train the vocoder, writing checkpoints and logs.
    Train {
        /// Continue from this checkpoint directory.
        #[arg(long, value_name = "DIR")]
        resume: Option<PathBuf>,
    },
    /// Synthesize every utterance in the corpus through a trained model.
    Synth {
        /// Multiply voiced F0 by this factor before synthesis.
        #[arg(long = "f0-scale", value_name = "X", default_value_t = 1.0)]
        f0_scale: f64,
        /// Also dump each utterance's excitation as a signal container.
        #[arg(long)]
        dump_excitation: bool,
    },
    /// Score synthesis against the reference corpus.
    Eval {
        /// Pitch scale to score (repeatable; the config supplies defaults).
        #[arg(long = "f0-scale", value_name = "X")]
        f0_scale: Vec<f64>,
    },
    /// Render the source network's excitation for one utterance.
    PlotExcitation {
        /// Utterance id (its directory name in the feature corpus).
        #[arg(long, value_name = "ID")]
        utterance: String,
        /// Multiply voiced F0 by this factor before synthesis.
        #[arg(long = "f0-scale", value_name = "X", default_value_t = 1.0)]
        f0_scale: f64,
    },
}

pub fn run() -> Result<()> {
    dispatch(Cli::parse())
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut app = AppConfig::load(cli.common.config.as_deref(), &cli.common.overrides)?;
    if let Some(seed) = cli.common.seed {
        app.trainer.seed = seed;
    }
    let seed = app.trainer.seed;
    println!("resolved config: {}", serde_json::to_string(&app)?);
    match cli.cmd {
        Cmd::Extract { skip_existing } => cmd_extract(&app, skip_existing),
        Cmd::Train { resume } => cmd_train(&app, resume.as_deref()),
        Cmd::Synth { f0_scale, dump_excitation } => {
            cmd_synth(&app, f0_scale, dump_excitation, seed)
        }
        Cmd::Eval { f0_scale } => cmd_eval(&app, &f0_scale, seed),
        Cmd::PlotExcitation { utterance, f0_scale } => {
            cmd_plot(&app, &utterance, f0_scale, seed)
        }
    }
}

fn cmd_extract(app: &AppConfig, skip_existing: bool) -> Result<()> {
    let cfg = &app.extract;
    if !cfg.wav_dir.is_dir() {
        return Err(Error::Config(format!(
            "wav_dir {} does not exist",
            cfg.wav_dir.display()
        )));
    }
    let mut wavs: Vec<PathBuf> = fs::read_dir(&cfg.wav_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::Config(format!(
            "no WAV files under {}",
            cfg.wav_dir.display()
        )));
    }
    let mut failures = 0usize;
    for path in &wavs {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let dir = cfg.features_dir.join(&id);
        if skip_existing && dir.join("manifest.json").exists() {
            println!("skip {id}: container exists");
            continue;
        }
        match extract_one(path, &dir, &id, cfg) {
            Ok(frames) => println!("extracted {id}: {frames} frames"),
            Err(e) => {
                failures += 1;
                eprintln!("failed {id}: {e}");
            }
        }
    }
    if failures > 0 {
        return Err(Error::Data(format!("{failures} of {} files failed", wavs.len())));
    }
    Ok(())
}

fn extract_one(path: &Path, dir: &Path, id: &str, cfg: &ExtractConfig) -> Result<usize> {
    let wav = read_wav(path)?;
    let (f0, aux) = extract_all(&wav, &cfg.f0, cfg.alpha)?;
    let rec = UtteranceRecord {
        id: id.to_string(),
        wav_path: path.canonicalize()?,
        speaker: "unknown".to_string(),
        duration_secs: wav.duration_secs(),
    };
    save_features(dir, &rec, &f0, &aux)?;
    Ok(f0.frames())
}

fn cmd_train(app: &AppConfig, resume: Option<&Path>) -> Result<()> {
    let outcome = run_training(&app.trainer, resume)?;
    println!("training complete at iteration {}", outcome.final_iteration);
    println!("checkpoint: {}", outcome.checkpoint_dir.display());
    println!("losses: {}", outcome.losses_log.display());
    Ok(())
}

/// Output stem: the utterance id, suffixed with the pitch scale when it
/// differs from 1.
fn scaled_stem(id: &str, scale: f64) -> String {
    if scale == 1.0 {
        id.to_string()
    } else {
        format!("{id}-f0x{scale}")
    }
}

fn cmd_synth(app: &AppConfig, f0_scale: f64, dump_excitation: bool, seed: u64) -> Result<()> {
    let s = &app.synth;
    let (gen, _) = load_generator(&s.checkpoint)?;
    let utt_dirs = list_utterances(&s.features_dir)?;
    fs::create_dir_all(&s.out_dir)?;
    let dump = dump_excitation || s.dump_excitation;
    for dir in &utt_dirs {
        let (rec, f0, aux) = load_features(dir)?;
        let (wav, excitation) =
            synthesize_utterance(&gen, &f0, &aux, f0_scale, utterance_seed(seed, &rec.id))?;
        let stem = scaled_stem(&rec.id, f0_scale);
        let out = s.out_dir.join(format!("{stem}.wav"));
        write_wav(&wav, &out)?;
        println!("synthesized {} ({} samples)", out.display(), wav.len());
        if dump {
            let dump_dir = s.out_dir.join(format!("{stem}-excitation"));
            save_signal(&dump_dir, &rec.id, &excitation, wav.sample_rate)?;
            println!("dumped excitation to {}", dump_dir.display());
        }
    }
    Ok(())
}

fn cmd_eval(app: &AppConfig, cli_scales: &[f64], seed: u64) -> Result<()> {
    let e = &app.eval;
    let scales = if cli_scales.is_empty() { e.scales.clone() } else { cli_scales.to_vec() };
    if scales.is_empty() {
        return Err(Error::Parameter("no pitch scales requested".into()));
    }
    for &s in &scales {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Parameter(format!("pitch scale must be positive, got {s}")));
        }
    }
    let (gen, _) = load_generator(&e.checkpoint)?;
    fs::create_dir_all(&e.out_dir)?;
    let mut text = String::new();
    let mut csv = String::new();
    for (i, &scale) in scales.iter().enumerate() {
        let report = crate::metrics::evaluate_corpus(
            &gen,
            &e.features_dir,
            scale,
            seed,
            &app.extract.f0,
            app.extract.alpha,
        )?;
        text.push_str(&report.to_text());
        text.push('\n');
        let block = report.to_csv();
        if i == 0 {
            csv.push_str(&block);
        } else {
            // skip the repeated header line
            csv.push_str(block.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
        }
    }
    let text_path = e.out_dir.join("report.txt");
    let csv_path = e.out_dir.join("report.csv");
    fs::write(&text_path, &text)?;
    fs::write(&csv_path, &csv)?;
    print!("{text}");
    println!("wrote {} and {}", text_path.display(), csv_path.display());
    Ok(())
}

fn cmd_plot(app: &AppConfig, utterance: &str, f0_scale: f64, seed: u64) -> Result<()> {
    let p = &app.plot;
    let utt_dir = p.features_dir.join(utterance);
    if !utt_dir.join("manifest.json").exists() {
        return Err(Error::NotFound(utt_dir));
    }
    let (rec, f0, aux) = load_features(&utt_dir)?;
    let gen = match &p.checkpoint {
        Some(c) => load_generator(c)?.0,
        None => Generator::new(app.trainer.generator.clone(), seed)?,
    };
    let (_, excitation) =
        synthesize_utterance(&gen, &f0, &aux, f0_scale, utterance_seed(seed, &rec.id))?;
    let outs = plot_excitation(&excitation, &f0.scaled(f0_scale), &p.out_dir, &rec.id)?;
    println!("wrote {}", outs.spectrogram_png.display());
    println!("wrote {}", outs.waveform_png.display());
    println!("wrote {}", outs.arrays_dir.display());
    Ok(())
}
