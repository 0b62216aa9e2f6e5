//! Two-phase adversarial training loop.
//!
//! Phase 1 (warmup) trains the generator on the spectral loss plus the
//! excitation envelope regularizer. Phase 2 adds the least-squares
//! adversarial term and starts updating the discriminator, one step per
//! generator step. Every random draw derives from (seed, iteration), so a
//! run resumed from a checkpoint replays the exact trajectory of an
//! uninterrupted one.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::envelope::{
    build_analysis_tables, EnvelopeRegLossOp, F0AnalysisTables, ENVELOPE_DFT_BINS,
};
use crate::error::{Error, Result};
use crate::features::{list_utterances, load_features, AuxFeatureFrames, F0Contour};
use crate::losses::{LossWeights, MultiStftLossOp};
use crate::mat::Mat;
use crate::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::optim::{OptimizerConfig, RAdam};
use crate::store::{load_arrays, save_arrays};
use crate::wav::read_wav;

const SALT_GEN_INIT: u64 = 0x67656e5f696e6974;
const SALT_DISC_INIT: u64 = 0x64697363696e6974;
const SALT_BATCH: u64 = 0x62617463685f726e;
const SALT_NOISE: u64 = 0x6e6f6973655f726e;

/// Stable hash of (seed, iteration, salt) for stream-local RNGs.
fn derive_seed(seed: u64, iter: u64, salt: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for w in [seed, iter, salt] {
        for b in w.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Directory of extracted feature containers (one subdir per utterance).
    pub data_dir: PathBuf,
    /// Run directory: logs and checkpoints land here.
    pub out_dir: PathBuf,
    pub total_iters: usize,
    /// Iterations of phase 1; the adversarial term joins afterwards.
    pub warmup_iters: usize,
    pub batch_size: usize,
    /// Training crop length in samples; must be a multiple of the frame
    /// shift and cover both networks' receptive fields.
    pub segment_len: usize,
    pub seed: u64,
    /// Periodic checkpoint interval in iterations (0 = final only).
    pub checkpoint_every: usize,
    /// Progress line interval for train.log (0 = silent).
    pub log_every: usize,
    pub gen_opt: OptimizerConfig,
    pub disc_opt: OptimizerConfig,
    /// Stepwise decay: lr = base * lr_decay^(iter / lr_decay_every).
    pub lr_decay: f64,
    /// Decay interval in iterations (0 disables the schedule).
    pub lr_decay_every: usize,
    pub weights: LossWeights,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Pitch range of the envelope regularizer's analysis tables.
    pub f0_floor: f64,
    pub f0_ceil: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data_dir: PathBuf::from("data/features"),
            out_dir: PathBuf::from("runs/train"),
            total_iters: 20000,
            warmup_iters: 5000,
            batch_size: 4,
            segment_len: 12800,
            seed: 0,
            checkpoint_every: 5000,
            log_every: 50,
            gen_opt: OptimizerConfig::with_lr(1e-4),
            disc_opt: OptimizerConfig::with_lr(5e-5),
            lr_decay: 0.5,
            lr_decay_every: 0,
            weights: LossWeights::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            f0_floor: 70.0,
            f0_ceil: 400.0,
        }
    }
}

impl TrainConfig {
    /// Small preset that trains in minutes on one core.
    pub fn toy(data_dir: PathBuf, out_dir: PathBuf) -> Self {
        TrainConfig {
            data_dir,
            out_dir,
            total_iters: 2000,
            warmup_iters: 1000,
            batch_size: 2,
            segment_len: 2400,
            checkpoint_every: 0,
            log_every: 100,
            gen_opt: OptimizerConfig::with_lr(1e-3),
            disc_opt: OptimizerConfig::with_lr(5e-4),
            lr_decay_every: 700,
            generator: GeneratorConfig::toy(),
            discriminator: DiscriminatorConfig::toy(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.gen_opt.validate()?;
        self.disc_opt.validate()?;
        if self.total_iters == 0 {
            return Err(Error::Config("total_iters must be positive".into()));
        }
        if self.warmup_iters > self.total_iters {
            return Err(Error::Config(format!(
                "warmup_iters {} exceeds total_iters {}",
                self.warmup_iters, self.total_iters
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1]".into()));
        }
        if !(self.f0_floor > 0.0 && self.f0_ceil > self.f0_floor) {
            return Err(Error::Config("need 0 < f0_floor < f0_ceil".into()));
        }
        let need = self.generator.composed_receptive_field().max(self.discriminator.receptive_field());
        if self.segment_len < need {
            return Err(Error::Config(format!(
                "segment_len {} shorter than the receptive field {need}; crops would \
                 never span full context",
                self.segment_len
            )));
        }
        Ok(())
    }
}

struct Utterance {
    wav: Vec<f64>,
    f0: F0Contour,
    aux: AuxFeatureFrames,
}

/// Whole training corpus held in memory, trimmed to whole frames.
pub struct Dataset {
    utts: Vec<Utterance>,
    sample_rate: u32,
    hop: usize,
}

impl Dataset {
    pub fn load(features_dir: &Path) -> Result<Self> {
        if !features_dir.is_dir() {
            return Err(Error::Config(format!(
                "dataset directory {} does not exist",
                features_dir.display()
            )));
        }
        let dirs = list_utterances(features_dir)
            .map_err(|e| Error::Config(format!("unusable dataset: {e}")))?;
        let mut utts = Vec::with_capacity(dirs.len());
        let mut sample_rate = 0u32;
        let mut hop = 0usize;
        for dir in &dirs {
            let (rec, f0, aux) = load_features(dir)?;
            let wav = read_wav(&rec.wav_path)?;
            if sample_rate == 0 {
                sample_rate = wav.sample_rate;
                hop = f0.frame_shift;
            }
            if wav.sample_rate != sample_rate || f0.frame_shift != hop || aux.frame_shift != hop {
                return Err(Error::Data(format!(
                    "utterance {} mixes rates: wav {} Hz hop {}, corpus {} Hz hop {}",
                    rec.id, wav.sample_rate, f0.frame_shift, sample_rate, hop
                )));
            }
            let usable = f0.frames() * hop;
            if wav.len() < usable {
                return Err(Error::Data(format!(
                    "utterance {}: {} samples cannot cover {} frames of {} samples",
                    rec.id,
                    wav.len(),
                    f0.frames(),
                    hop
                )));
            }
            let mut samples = wav.samples;
            samples.truncate(usable);
            utts.push(Utterance { wav: samples, f0, aux });
        }
        Ok(Dataset { utts, sample_rate, hop })
    }

    pub fn num_utterances(&self) -> usize {
        self.utts.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    fn eligible(&self, seg_frames: usize) -> Vec<usize> {
        (0..self.utts.len()).filter(|&i| self.utts[i].f0.frames() >= seg_frames).collect()
    }

    /// Crop of `seg_frames` frames starting at `start_frame`: target
    /// samples plus frame-aligned conditioning.
    fn crop(&self, utt: usize, start_frame: usize, seg_frames: usize) -> (Vec<f64>, F0Contour, AuxFeatureFrames) {
        let u = &self.utts[utt];
        let s = start_frame * self.hop;
        let target = u.wav[s..s + seg_frames * self.hop].to_vec();
        let f0 = F0Contour {
            values: u.f0.values[start_frame..start_frame + seg_frames].to_vec(),
            frame_shift: self.hop,
            sample_rate: self.sample_rate,
        };
        let rows = u.aux.mcep.rows();
        let mcep = Mat::from_vec(
            rows,
            seg_frames,
            u.aux.mcep.data()[start_frame * rows..(start_frame + seg_frames) * rows].to_vec(),
        );
        let aux = AuxFeatureFrames {
            mcep,
            coded_ap: u.aux.coded_ap[start_frame..start_frame + seg_frames].to_vec(),
            vuv: u.aux.vuv[start_frame..start_frame + seg_frames].to_vec(),
            frame_shift: self.hop,
        };
        (target, f0, aux)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Crop {
    utt: usize,
    start_frame: usize,
}

/// Batch crops for one iteration, pure in (cfg.seed, iter).
fn sample_crops(ds: &Dataset, cfg: &TrainConfig, iter: usize) -> Result<Vec<Crop>> {
    let seg_frames = cfg.segment_len / ds.hop;
    let eligible = ds.eligible(seg_frames);
    if eligible.is_empty() {
        return Err(Error::Config(format!(
            "no utterance is at least segment_len {} samples long",
            cfg.segment_len
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, iter as u64, SALT_BATCH));
    Ok((0..cfg.batch_size)
        .map(|_| {
            let utt = eligible[rng.gen_range(0..eligible.len())];
            let max_start = ds.utts[utt].f0.frames() - seg_frames;
            Crop { utt, start_frame: rng.gen_range(0..=max_start) }
        })
        .collect())
}

/// Mean loss components of one iteration (adversarial terms stay 0 during
/// warmup).
#[derive(Debug, Clone, Copy, Default)]
pub struct IterStats {
    pub stft: f64,
    pub env: f64,
    pub aux: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total: f64,
}

pub struct Trainer {
    cfg: TrainConfig,
    ds: Dataset,
    pub gen: Generator,
    pub disc: Discriminator,
    opt_g: RAdam,
    opt_d: RAdam,
    tables: Rc<F0AnalysisTables>,
    weights: Rc<LossWeights>,
    start_iter: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, ds: Dataset) -> Result<Self> {
        cfg.validate()?;
        if cfg.segment_len % ds.hop != 0 {
            return Err(Error::Config(format!(
                "segment_len {} is not a multiple of the corpus frame shift {}",
                cfg.segment_len, ds.hop
            )));
        }
        sample_crops(&ds, &cfg, 1)?;
        let gen = Generator::new(cfg.generator.clone(), derive_seed(cfg.seed, 0, SALT_GEN_INIT))?;
        let disc =
            Discriminator::new(cfg.discriminator.clone(), derive_seed(cfg.seed, 0, SALT_DISC_INIT))?;
        let opt_g = RAdam::new(cfg.gen_opt.clone(), &gen.params)?;
        let opt_d = RAdam::new(cfg.disc_opt.clone(), &disc.params)?;
        let tables = Rc::new(build_analysis_tables(
            cfg.f0_floor,
            cfg.f0_ceil,
            ds.sample_rate,
            ENVELOPE_DFT_BINS,
        )?);
        let weights = Rc::new(cfg.weights.clone());
        Ok(Trainer { cfg, ds, gen, disc, opt_g, opt_d, tables, weights, start_iter: 0 })
    }

    /// Rebuilds the exact trainer state stored in `ckpt`; the architecture
    /// in `cfg` must match the checkpoint's.
    pub fn resume(cfg: TrainConfig, ds: Dataset, ckpt: &Path) -> Result<Self> {
        let (meta, arrays) = load_arrays(ckpt)?;
        let stored: TrainConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::Schema(format!("checkpoint config unreadable: {e}")))?;
        if stored.generator != cfg.generator || stored.discriminator != cfg.discriminator {
            return Err(Error::Schema(
                "checkpoint was trained with a different architecture than requested".into(),
            ));
        }
        let iteration = meta["iteration"]
            .as_u64()
            .ok_or_else(|| Error::Schema("checkpoint meta lacks iteration".into()))?;
        let gen_steps = meta["gen_opt_steps"]
            .as_u64()
            .ok_or_else(|| Error::Schema("checkpoint meta lacks gen_opt_steps".into()))?;
        let disc_steps = meta["disc_opt_steps"]
            .as_u64()
            .ok_or_else(|| Error::Schema("checkpoint meta lacks disc_opt_steps".into()))?;
        let mut t = Trainer::new(cfg, ds)?;
        t.gen.params.load_named(&arrays, "gen.")?;
        t.disc.params.load_named(&arrays, "disc.")?;
        t.opt_g.load_named(&arrays, &t.gen.params, "optg.", gen_steps)?;
        t.opt_d.load_named(&arrays, &t.disc.params, "optd.", disc_steps)?;
        t.start_iter = iteration as usize;
        Ok(t)
    }

    pub fn start_iteration(&self) -> usize {
        self.start_iter
    }

    fn apply_lr_schedule(&mut self, iter: usize) {
        if self.cfg.lr_decay_every == 0 {
            return;
        }
        let k = ((iter - 1) / self.cfg.lr_decay_every) as i32;
        let f = self.cfg.lr_decay.powi(k);
        self.opt_g.set_lr(self.cfg.gen_opt.lr * f);
        self.opt_d.set_lr(self.cfg.disc_opt.lr * f);
    }

    /// One generator update plus, past warmup, one discriminator update on
    /// the same crops.
    pub fn train_iteration(&mut self, iter: usize) -> Result<IterStats> {
        let adversarial = iter > self.cfg.warmup_iters;
        let crops = sample_crops(&self.ds, &self.cfg, iter)?;
        let seg_frames = self.cfg.segment_len / self.ds.hop;
        self.apply_lr_schedule(iter);

        let inv_b = 1.0 / self.cfg.batch_size as f64;
        let mut acc: Vec<Option<Mat>> = vec![None; self.gen.params.len()];
        let mut stats = IterStats::default();

        for (el, crop) in crops.iter().enumerate() {
            let (target, f0c, auxc) = self.ds.crop(crop.utt, crop.start_frame, seg_frames);
            let noise_seed = derive_seed(self.cfg.seed, iter as u64, SALT_NOISE ^ el as u64);
            let (z, v, cond_up, f0_up) = self.gen.assemble_inputs(&f0c, &auxc, noise_seed)?;
            let mut g = Graph::new();
            let fwd = self
                .gen
                .forward_on_graph(&mut g, &z, &v, &cond_up, &f0_up, self.ds.sample_rate, true)?;
            let stft_node = g.custom_loss(
                fwd.waveform,
                Rc::new(MultiStftLossOp { target, weights: self.weights.clone() }),
            );
            let stft_val = g.value(stft_node).data()[0];
            let mut loss = stft_node;
            let mut env_val = 0.0;
            if self.cfg.weights.lambda_reg > 0.0 {
                // the envelope loss sums over bins x voiced frames; normalize
                // by the grid size, mirroring the spectral loss normalization,
                // so the default weights keep the two terms comparable
                let voiced = f0c.values.iter().filter(|&&v| v > 0.0).count().max(1);
                let env_norm = 1.0 / (self.tables.bins() * voiced) as f64;
                let env_node = g.custom_loss(
                    fwd.excitation,
                    Rc::new(EnvelopeRegLossOp { f0: f0c, tables: self.tables.clone() }),
                );
                env_val = g.value(env_node).data()[0] * env_norm;
                let scaled = g.scale(env_node, self.cfg.weights.lambda_reg * env_norm);
                loss = g.add(loss, scaled);
            }
            let mut adv_val = 0.0;
            if adversarial {
                // leaf D params: gradient flows through to the waveform
                // without accumulating in the discriminator
                let (scores, _) = self.disc.forward_on_graph(&mut g, fwd.waveform, false);
                let adv_node = g.mean_sq_err_const(scores, 1.0);
                adv_val = g.value(adv_node).data()[0];
                let scaled = g.scale(adv_node, self.cfg.weights.lambda_adv);
                loss = g.add(loss, scaled);
            }
            let total_val = g.value(loss).data()[0];
            if !total_val.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite generator loss at iteration {iter}: stft {stft_val:e}, \
                     envelope {env_val:e}, adversarial {adv_val:e}"
                )));
            }
            let mut grads = g.backward(loss);
            for (k, &node) in fwd.param_nodes.iter().enumerate() {
                if let Some(gm) = grads.take(node) {
                    match &mut acc[k] {
                        Some(a) => {
                            for (av, gv) in a.data_mut().iter_mut().zip(gm.data()) {
                                *av += gv * inv_b;
                            }
                        }
                        None => acc[k] = Some(gm.map(|x| x * inv_b)),
                    }
                }
            }
            stats.stft += stft_val * inv_b;
            stats.env += env_val * inv_b;
            stats.adv_g += adv_val * inv_b;
            stats.total += total_val * inv_b;
        }
        self.opt_g.step(&mut self.gen.params, &acc).map_err(|e| at_iter(e, iter))?;
        if self.gen.params.has_non_finite() {
            return Err(Error::Numerical(format!(
                "generator weights went non-finite after iteration {iter}"
            )));
        }

        if adversarial {
            // fakes come from the just-updated generator, detached; real and
            // fake batches share one set of discriminator parameter nodes
            let mut g = Graph::new();
            let pn = self.disc.make_param_nodes(&mut g, true);
            let mut parts = Vec::with_capacity(crops.len());
            for (el, crop) in crops.iter().enumerate() {
                let (target, f0c, auxc) = self.ds.crop(crop.utt, crop.start_frame, seg_frames);
                let noise_seed = derive_seed(self.cfg.seed, iter as u64, SALT_NOISE ^ el as u64);
                let (fake_wav, _) = self.gen.generator_forward(&f0c, &auxc, noise_seed)?;
                let real = g.leaf(Mat::from_row(&target));
                let fake = g.leaf(Mat::from_row(&fake_wav.samples));
                let score_r = self.disc.forward_with_params(&mut g, &pn, real);
                let score_f = self.disc.forward_with_params(&mut g, &pn, fake);
                let loss_r = g.mean_sq_err_const(score_r, 1.0);
                let loss_f = g.mean_sq_err_const(score_f, 0.0);
                parts.push(g.add(loss_r, loss_f));
            }
            let mut sum = parts[0];
            for &p in &parts[1..] {
                sum = g.add(sum, p);
            }
            let d_loss = g.scale(sum, inv_b);
            let d_val = g.value(d_loss).data()[0];
            if !d_val.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite discriminator loss at iteration {iter}"
                )));
            }
            let mut grads = g.backward(d_loss);
            let d_grads: Vec<Option<Mat>> = pn.iter().map(|&n| grads.take(n)).collect();
            self.opt_d.step(&mut self.disc.params, &d_grads).map_err(|e| at_iter(e, iter))?;
            if self.disc.params.has_non_finite() {
                return Err(Error::Numerical(format!(
                    "discriminator weights went non-finite after iteration {iter}"
                )));
            }
            stats.adv_d = d_val;
        }
        stats.aux = stats.stft + self.cfg.weights.lambda_reg * stats.env;
        Ok(stats)
    }

    pub fn save_checkpoint(&self, dir: &Path, iteration: usize) -> Result<()> {
        let mut arrays: Vec<(String, &Mat)> = Vec::new();
        arrays.extend(self.gen.params.named("gen."));
        arrays.extend(self.disc.params.named("disc."));
        arrays.extend(self.opt_g.named(&self.gen.params, "optg."));
        arrays.extend(self.opt_d.named(&self.disc.params, "optd."));
        let meta = serde_json::json!({
            "iteration": iteration,
            "gen_opt_steps": self.opt_g.step_count(),
            "disc_opt_steps": self.opt_d.step_count(),
            "config": self.cfg,
        });
        save_arrays(dir, meta, &arrays)
    }

    /// Runs from the current iteration to `total_iters`, logging and
    /// checkpointing under `out_dir`.
    pub fn run(&mut self) -> Result<TrainOutcome> {
        fs::create_dir_all(&self.cfg.out_dir)?;
        let losses_path = self.cfg.out_dir.join("losses.log");
        // on resume, drop any lines logged past the checkpoint so the
        // replayed iterations land exactly once
        let mut kept = String::new();
        if self.start_iter > 0 && losses_path.exists() {
            for line in fs::read_to_string(&losses_path)?.lines() {
                if parse_logged_iter(line).is_some_and(|n| n <= self.start_iter) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
        }
        fs::write(&losses_path, &kept)?;
        let mut llog =
            BufWriter::new(fs::OpenOptions::new().append(true).open(&losses_path)?);
        let mut tlog = BufWriter::new(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.cfg.out_dir.join("train.log"))?,
        );
        writeln!(tlog, "config: {}", serde_json::to_string(&self.cfg)?)?;
        let longest_window = self.tables.window(0).len();
        if self.disc.cfg.receptive_field() < 2 * longest_window {
            writeln!(
                tlog,
                "warning: discriminator receptive field {} is below twice the longest \
                 envelope analysis window ({}); fine for smoke models, too small for \
                 full-scale training",
                self.disc.cfg.receptive_field(),
                longest_window
            )?;
        }
        if self.start_iter > 0 {
            writeln!(tlog, "resumed at iteration {}", self.start_iter)?;
        }
        let t0 = Instant::now();
        let total = self.cfg.total_iters;
        for i in self.start_iter + 1..=total {
            let st = self.train_iteration(i)?;
            writeln!(
                llog,
                "iter {i} stft {:.12e} env {:.12e} aux {:.12e} adv_g {:.12e} adv_d {:.12e} total {:.12e}",
                st.stft, st.env, st.aux, st.adv_g, st.adv_d, st.total
            )?;
            if self.cfg.log_every > 0 && i % self.cfg.log_every == 0 {
                writeln!(
                    tlog,
                    "iter {i}/{total} aux {:.6} total {:.6} elapsed {:.1}s",
                    st.aux,
                    st.total,
                    t0.elapsed().as_secs_f64()
                )?;
                tlog.flush()?;
            }
            if self.cfg.checkpoint_every > 0 && i % self.cfg.checkpoint_every == 0 && i != total {
                llog.flush()?;
                self.save_checkpoint(&self.cfg.out_dir.join(format!("ckpt-iter{i:06}")), i)?;
            }
        }
        llog.flush()?;
        let final_dir = self.cfg.out_dir.join("ckpt-final");
        self.save_checkpoint(&final_dir, total)?;
        writeln!(tlog, "done: {total} iterations in {:.1}s", t0.elapsed().as_secs_f64())?;
        tlog.flush()?;
        Ok(TrainOutcome { final_iteration: total, checkpoint_dir: final_dir, losses_log: losses_path })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_iteration: usize,
    pub checkpoint_dir: PathBuf,
    pub losses_log: PathBuf,
}

fn parse_logged_iter(line: &str) -> Option<usize> {
    line.strip_prefix("iter ")?.split_whitespace().next()?.parse().ok()
}

/// Tags numerical failures with the iteration they happened in.
fn at_iter(e: Error, iter: usize) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{m} at iteration {iter}")),
        other => other,
    }
}

/// Loads the dataset and trains to completion. `resume_from` continues an
/// earlier run from its checkpoint directory.
pub fn run_training(cfg: &TrainConfig, resume_from: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = Dataset::load(&cfg.data_dir)?;
    let mut trainer = match resume_from {
        None => Trainer::new(cfg.clone(), ds)?,
        Some(p) => Trainer::resume(cfg.clone(), ds, p)?,
    };
    trainer.run()
}

/// Rebuilds just the generator from a checkpoint, for synthesis and
/// evaluation.
pub fn load_generator(ckpt: &Path) -> Result<(Generator, TrainConfig)> {
    let (meta, arrays) = load_arrays(ckpt)?;
    let cfg: TrainConfig = serde_json::from_value(
        meta.get("config").cloned().unwrap_or(serde_json::Value::Null),
    )
    .map_err(|e| Error::Schema(format!("checkpoint config unreadable: {e}")))?;
    let mut gen = Generator::new(cfg.generator.clone(), 0)?;
    gen.params.load_named(&arrays, "gen.")?;
    Ok((gen, cfg))
}
