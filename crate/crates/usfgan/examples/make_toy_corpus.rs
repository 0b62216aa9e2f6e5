//! Builds the synthetic training corpus: WAVs plus extracted feature
//! containers, ready for `usfgan train --config configs/toy.toml`.
//!
//! Usage: cargo run --example make_toy_corpus [-- ROOT_DIR]

use std::path::PathBuf;

use usfgan::extract::F0ExtractConfig;
use usfgan::synthdata::{build_toy_dataset, ToyCorpusConfig};

fn main() {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/toy"));
    let cfg = ToyCorpusConfig::default();
    match build_toy_dataset(&root, &cfg, &F0ExtractConfig::default(), 0.42) {
        Ok(features) => {
            println!("corpus ready: {} utterances", cfg.utterances);
            println!("wavs:     {}", root.join("wav").display());
            println!("features: {}", features.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
