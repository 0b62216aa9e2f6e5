//! Rectified adaptive-moment optimizer.
//!
//! Standard first and second moment accumulators; the adaptive step is
//! variance-rectified, falling back to a plain bias-corrected momentum step
//! while the second-moment estimate is still untrustworthy (early steps).
//! All arithmetic is sequential f64, so resumed runs are bit-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::ParamSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-6 }
    }
}

impl OptimizerConfig {
    pub fn with_lr(lr: f64) -> Self {
        OptimizerConfig { lr, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decay rates must be in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

pub struct RAdam {
    pub cfg: OptimizerConfig,
    lr: f64,
    step_count: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl RAdam {
    /// Moment buffers start at zero, shaped like `params`.
    pub fn new(cfg: OptimizerConfig, params: &ParamSet) -> Result<Self> {
        cfg.validate()?;
        let zeros = |_: usize| -> Vec<Mat> {
            (0..params.len())
                .map(|i| {
                    let (r, c) = params.get(i).shape();
                    Mat::zeros(r, c)
                })
                .collect()
        };
        Ok(RAdam { lr: cfg.lr, cfg, step_count: 0, m: zeros(0), v: zeros(1) })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Current learning rate, e.g. after an external decay schedule.
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// One update. `grads` is aligned with the param set; `None` entries are
    /// skipped entirely (no moment decay), matching the convention that a
    /// parameter absent from the backward pass saw no data.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Mat>]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} slots, got {} grads for {} params",
                self.m.len(),
                grads.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let eps = self.cfg.epsilon;
        let lr = self.lr;
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let rho = rho_inf - 2.0 * t * b2.powf(t) / bias2;
        // variance rectifier is real only once rho clears 4
        let rect = if rho > 4.0 {
            Some(
                (((rho - 4.0) * (rho - 2.0) * rho_inf)
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                    .sqrt(),
            )
        } else {
            None
        };
        for i in 0..grads.len() {
            let g = match &grads[i] {
                Some(g) => g,
                None => continue,
            };
            let p = params.get_mut(i);
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "gradient for {} has shape {:?}, param is {:?}",
                    params.name(i),
                    g.shape(),
                    params.get(i).shape()
                )));
            }
            if g.has_non_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for {}",
                    params.name(i)
                )));
            }
            let p = params.get_mut(i);
            let md = self.m[i].data_mut();
            let vd = self.v[i].data_mut();
            let gd = g.data();
            let pd = p.data_mut();
            match rect {
                Some(r) => {
                    let scale = lr * r / bias1;
                    for k in 0..pd.len() {
                        md[k] = b1 * md[k] + (1.0 - b1) * gd[k];
                        vd[k] = b2 * vd[k] + (1.0 - b2) * gd[k] * gd[k];
                        let denom = (vd[k] / bias2).sqrt() + eps;
                        pd[k] -= scale * md[k] / denom;
                    }
                }
                None => {
                    let scale = lr / bias1;
                    for k in 0..pd.len() {
                        md[k] = b1 * md[k] + (1.0 - b1) * gd[k];
                        vd[k] = b2 * vd[k] + (1.0 - b2) * gd[k] * gd[k];
                        pd[k] -= scale * md[k];
                    }
                }
            }
        }
        Ok(())
    }

    /// Moment arrays for the checkpoint store, keyed by param name.
    pub fn named<'a>(&'a self, params: &ParamSet, prefix: &str) -> Vec<(String, &'a Mat)> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for i in 0..self.m.len() {
            out.push((format!("{prefix}m.{}", params.name(i)), &self.m[i]));
            out.push((format!("{prefix}v.{}", params.name(i)), &self.v[i]));
        }
        out
    }

    pub fn load_named(
        &mut self,
        arrays: &BTreeMap<String, Mat>,
        params: &ParamSet,
        prefix: &str,
        step_count: u64,
    ) -> Result<()> {
        for i in 0..self.m.len() {
            for (kind, slot) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("{prefix}{kind}.{}", params.name(i));
                let src = arrays
                    .get(&key)
                    .ok_or_else(|| Error::Schema(format!("checkpoint is missing array {key}")))?;
                if src.shape() != slot.shape() {
                    return Err(Error::Schema(format!(
                        "array {key} has shape {:?}, expected {:?}",
                        src.shape(),
                        slot.shape()
                    )));
                }
                *slot = src.clone();
            }
        }
        self.step_count = step_count;
        Ok(())
    }
}
