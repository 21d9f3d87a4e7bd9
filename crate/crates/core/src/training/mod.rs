//! Two-stage supervised training: the predictor first, then the risk and
//! cost heads by imitation of the ego demonstrations.

mod gradcheck;
mod losses;
mod optim;
mod stage1;
mod stage2;

pub use gradcheck::{gradient_check, gradient_check_subset, relative_error, GradCheckReport, REL_FLOOR, STEP};
pub use losses::{
    log_softmin, loss_consistency, loss_l2, loss_selection, loss_velocity, nearest_index, softmin, total_loss,
    CeDirection, LossBreakdown, LossMask, LossParts, LOSS_TERMS, VARIANCE_FLOOR,
};
pub use optim::{optimizer_registry, AdamW, OptState, Optimizer, Sgd, DEFAULT_OPTIMIZER};
pub use stage1::{predictor_dataset_loss, train_stage1};
pub use stage2::{scene_loss, train_stage2, trajectory_distance, SceneCache};

use crate::error::{Error, Result};
use crate::planner::UNIT_CHANNEL_WEIGHTS;
use crate::riskfield::{DEFAULT_COLLISION_MODE, RISK_MAP_CHANNELS};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask: LossMask,
    pub tv: bool,
    pub count: usize,
    pub optimizer: String,
    pub ce_direction: CeDirection,
    pub col_mode: String,
    pub channel_weights: [f64; RISK_MAP_CHANNELS],
}

impl TrainConfig {
    /// Predictor defaults: one scene per step.
    pub fn stage1() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 50,
            batch_size: 1,
            seed: 0,
            mask: LossMask::default(),
            tv: true,
            count: 400,
            optimizer: "adamw".into(),
            ce_direction: CeDirection::default(),
            col_mode: DEFAULT_COLLISION_MODE.into(),
            channel_weights: UNIT_CHANNEL_WEIGHTS,
        }
    }

    /// Risk-head defaults.
    pub fn stage2() -> Self {
        TrainConfig {
            lr: 3e-3,
            epochs: 250,
            batch_size: 10,
            count: 100,
            ..TrainConfig::stage1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.mask.validate()?;
        optimizer_registry().get(&self.optimizer)?;
        crate::riskfield::collision_registry().get(&self.col_mode)?;
        Ok(())
    }
}

/// Per-epoch values; row 0 is measured before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl LossCurve {
    pub fn new(columns: &[&str]) -> Self {
        LossCurve {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, epoch: usize, values: Vec<f64>) {
        self.rows.push((epoch, values));
    }

    /// Values of one column across epochs.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,{}", self.columns.join(","))?;
        for (epoch, values) in &self.rows {
            write!(out, "{epoch}")?;
            for v in values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Mean of per-element gradients, in element order.
pub(crate) fn mean_into(acc: &mut [f64], grad: &[f64], scale: f64) {
    acc.iter_mut().zip(grad).for_each(|(a, g)| *a += scale * g);
}

pub(crate) fn check_finite(step: usize, loss: f64, grad: &[f64]) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step, loss });
    }
    Ok(())
}
