//! End-to-end command-line behavior: exit codes, overrides, idempotency,
//! and per-seed determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use usfgan::extract::F0ExtractConfig;
use usfgan::synthdata::{build_toy_dataset, ToyCorpusConfig};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_usfgan")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn usfgan")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Fixture {
    _dir: TempDir,
    features: PathBuf,
    wavs: PathBuf,
    checkpoint: PathBuf,
}

/// Tiny corpus plus a 4-iteration checkpoint, built once for all tests.
fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = ToyCorpusConfig { utterances: 2, duration_secs: 0.5, ..Default::default() };
        let features =
            build_toy_dataset(dir.path(), &corpus, &F0ExtractConfig::default(), 0.42).unwrap();
        let out = dir.path().join("run");
        let st = run(&[
            "train",
            "--override",
            &format!("trainer.data_dir={}", features.display()),
            "--override",
            &format!("trainer.out_dir={}", out.display()),
            "--override",
            "trainer.total_iters=4",
            "--override",
            "trainer.warmup_iters=2",
            "--override",
            "trainer.batch_size=1",
            "--override",
            "trainer.segment_len=800",
            "--override",
            "trainer.generator={source_blocks=2, filter_blocks=2, residual_channels=16, skip_channels=16, cond_channels=27, kernel_size=3, cycle_len=2, dense_factor=4.0}",
            "--override",
            "trainer.discriminator={layers=4, kernel_size=3, channels=16, leaky_slope=0.2}",
            "--override",
            "trainer.log_every=0",
            "--override",
            "trainer.checkpoint_every=0",
        ]);
        assert_eq!(code(&st), 0, "fixture training failed: {}", String::from_utf8_lossy(&st.stderr));
        Fixture {
            wavs: dir.path().join("wav"),
            features,
            checkpoint: out.join("ckpt-final"),
            _dir: dir,
        }
    })
}

fn synth_args<'a>(fix: &'a Fixture, out: &'a Path) -> Vec<String> {
    vec![
        "synth".into(),
        "--override".into(),
        format!("synth.checkpoint={}", fix.checkpoint.display()),
        "--override".into(),
        format!("synth.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("synth.out_dir={}", out.display()),
    ]
}

fn run_owned(args: &[String]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn usfgan")
}

#[test]
fn train_with_missing_dataset_is_a_config_error() {
    let out = run(&["train", "--override", "trainer.data_dir=/nonexistent/features"]);
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_keys_exit_2() {
    let out = run(&["train", "--override", "trainer.total_itres=5"]);
    assert_eq!(code(&out), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[trainer]\nbogus = 1\n").unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_scale_token_is_a_usage_error() {
    let out = run(&["eval", "--f0-scale", "fast"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn override_caps_total_iterations() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("capped");
    let st = run(&[
        "train",
        "--override",
        &format!("trainer.data_dir={}", fix.features.display()),
        "--override",
        &format!("trainer.out_dir={}", out_dir.display()),
        "--override",
        "trainer.total_iters=3",
        "--override",
        "trainer.warmup_iters=3",
        "--override",
        "trainer.batch_size=1",
        "--override",
        "trainer.segment_len=800",
        "--override",
        "trainer.generator={source_blocks=2, filter_blocks=2, residual_channels=16, skip_channels=16, cond_channels=27, kernel_size=3, cycle_len=2, dense_factor=4.0}",
        "--override",
        "trainer.discriminator={layers=4, kernel_size=3, channels=16, leaky_slope=0.2}",
        "--override",
        "trainer.checkpoint_every=0",
    ]);
    assert_eq!(code(&st), 0, "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let log = fs::read_to_string(out_dir.join("losses.log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().last().unwrap().starts_with("iter 3 "));
}

#[test]
fn extract_skips_existing_and_reports_corrupt_files() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let wav_dir = dir.path().join("wav");
    fs::create_dir_all(&wav_dir).unwrap();
    for entry in fs::read_dir(&fix.wavs).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, wav_dir.join(p.file_name().unwrap())).unwrap();
    }
    let feat_dir = dir.path().join("features");
    let base: Vec<String> = vec![
        "extract".into(),
        "--override".into(),
        format!("extract.wav_dir={}", wav_dir.display()),
        "--override".into(),
        format!("extract.features_dir={}", feat_dir.display()),
    ];
    let st = run_owned(&base);
    assert_eq!(code(&st), 0, "stderr: {}", String::from_utf8_lossy(&st.stderr));
    assert!(feat_dir.join("utt00/manifest.json").exists());

    // rerun with the skip flag: manifests untouched
    let before = fs::metadata(feat_dir.join("utt00/manifest.json")).unwrap().modified().unwrap();
    let mut skip = base.clone();
    skip.push("--skip-existing".into());
    let st = run_owned(&skip);
    assert_eq!(code(&st), 0);
    let after = fs::metadata(feat_dir.join("utt00/manifest.json")).unwrap().modified().unwrap();
    assert_eq!(before, after, "skip run rewrote a container");

    // corrupt newcomer: per-file failure, exit 3, existing ones intact
    fs::write(wav_dir.join("zzbad.wav"), b"RIFFgarbage").unwrap();
    let st = run_owned(&skip);
    assert_eq!(code(&st), 3);
    assert!(String::from_utf8_lossy(&st.stderr).contains("zzbad"));
    assert!(feat_dir.join("utt01/manifest.json").exists());
    assert!(!feat_dir.join("zzbad/manifest.json").exists());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let fix = fixture();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let d3 = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&d1, "7"), (&d2, "7"), (&d3, "8")] {
        let mut args = synth_args(fix, dir.path());
        args.push("--seed".into());
        args.push(seed.to_string());
        let st = run_owned(&args);
        assert_eq!(code(&st), 0, "stderr: {}", String::from_utf8_lossy(&st.stderr));
    }
    let a = fs::read(d1.path().join("utt00.wav")).unwrap();
    let b = fs::read(d2.path().join("utt00.wav")).unwrap();
    let c = fs::read(d3.path().join("utt00.wav")).unwrap();
    assert_eq!(a, b, "same seed must give identical audio");
    assert_ne!(a, c, "different seeds must give different audio");
}

#[test]
fn synth_rejects_scales_past_nyquist() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut args = synth_args(fix, dir.path());
    args.push("--f0-scale".into());
    args.push("60".into());
    let st = run_owned(&args);
    assert_eq!(code(&st), 2, "stderr: {}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn synth_with_missing_checkpoint_is_a_data_error() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let st = run_owned(&[
        "synth".into(),
        "--override".into(),
        "synth.checkpoint=/nonexistent/ckpt".into(),
        "--override".into(),
        format!("synth.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("synth.out_dir={}", dir.path().display()),
    ]);
    assert_eq!(code(&st), 3);
}

#[test]
fn poisoned_checkpoint_fails_numerically() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bad_ckpt = dir.path().join("bad-ckpt");
    let (meta, mut arrays) = usfgan::store::load_arrays(&fix.checkpoint).unwrap();
    for (name, m) in arrays.iter_mut() {
        if name.starts_with("gen.") {
            m.data_mut().iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
    let named: Vec<(String, &usfgan::mat::Mat)> =
        arrays.iter().map(|(n, m)| (n.clone(), m)).collect();
    usfgan::store::save_arrays(&bad_ckpt, meta, &named).unwrap();
    let st = run_owned(&[
        "synth".into(),
        "--override".into(),
        format!("synth.checkpoint={}", bad_ckpt.display()),
        "--override".into(),
        format!("synth.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("synth.out_dir={}", dir.path().join("out").display()),
    ]);
    assert_eq!(code(&st), 4, "stderr: {}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn eval_writes_reports_and_rejects_empty_corpora() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let st = run_owned(&[
        "eval".into(),
        "--override".into(),
        format!("eval.checkpoint={}", fix.checkpoint.display()),
        "--override".into(),
        format!("eval.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("eval.out_dir={}", out_dir.display()),
        "--f0-scale".into(),
        "1.0".into(),
    ]);
    assert_eq!(code(&st), 0, "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    // header + 2 utterances + mean row
    assert_eq!(csv.lines().count(), 4);
    assert!(out_dir.join("report.txt").exists());

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let st = run_owned(&[
        "eval".into(),
        "--override".into(),
        format!("eval.checkpoint={}", fix.checkpoint.display()),
        "--override".into(),
        format!("eval.features_dir={}", empty.display()),
        "--override".into(),
        format!("eval.out_dir={}", out_dir.display()),
    ]);
    assert_eq!(code(&st), 3);
}

#[test]
fn plot_excitation_works_untrained_and_flags_missing_utterances() {
    let fix = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("plots");
    let st = run_owned(&[
        "plot-excitation".into(),
        "--utterance".into(),
        "utt00".into(),
        "--override".into(),
        format!("plot.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("plot.out_dir={}", out_dir.display()),
        "--override".into(),
        "trainer.generator={source_blocks=2, filter_blocks=2, residual_channels=16, skip_channels=16, cond_channels=27, kernel_size=3, cycle_len=2, dense_factor=4.0}".into(),
    ]);
    assert_eq!(code(&st), 0, "stderr: {}", String::from_utf8_lossy(&st.stderr));
    assert!(out_dir.join("utt00-excitation-spectrogram.png").exists());
    assert!(out_dir.join("utt00-excitation-waveform.png").exists());
    assert!(out_dir.join("utt00-arrays/manifest.json").exists());

    let st = run_owned(&[
        "plot-excitation".into(),
        "--utterance".into(),
        "nope".into(),
        "--override".into(),
        format!("plot.features_dir={}", fix.features.display()),
        "--override".into(),
        format!("plot.out_dir={}", out_dir.display()),
    ]);
    assert_eq!(code(&st), 3);
}
