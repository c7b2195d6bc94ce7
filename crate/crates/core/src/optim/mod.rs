//! Adam and the three-phase training procedure.
//!
//! 1. Pretraining fits the autoencoder on the undistorted graph by
//!    reconstruction alone.
//! 2. Cluster centers are initialized by K-means on the pretrained
//!    embedding, then refined for `init_epochs` with reconstruction plus the
//!    KL clustering loss.
//! 3. The full objective, including the correlation-reduction and
//!    propagation terms selected by the [`Ablation`] variant, is minimized
//!    for `train_epochs`.
//!
//! The final embedding is clustered with K-means.

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{
    init_centers, objective, pretrain, run, train, EpochRecord, ObjectiveInputs, ObjectiveOutput,
    Phase, RunOutput, Trainer,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DistortionConfig;
use crate::losses::{Gates, LossWeights};
use crate::model::ModelConfig;

/// Which optional loss terms are switched on.
///
/// `none` trains reconstruction plus KL only; `P` adds propagation
/// regularization; `D` adds both correlation-reduction terms; `F` and `S`
/// add only the feature-level or sample-level term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "none")]
    None,
    P,
    D,
    #[serde(rename = "P-D")]
    PD,
    F,
    S,
    #[serde(rename = "F-S")]
    FS,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::None,
        Ablation::P,
        Ablation::D,
        Ablation::PD,
        Ablation::F,
        Ablation::S,
        Ablation::FS,
    ];

    pub fn gates(self) -> Gates {
        let (sample, feature, propagation) = match self {
            Ablation::None => (false, false, false),
            Ablation::P => (false, false, true),
            Ablation::D => (true, true, false),
            Ablation::PD => (true, true, true),
            Ablation::F => (false, true, false),
            Ablation::S => (true, false, false),
            Ablation::FS => (true, true, false),
        };
        Gates {
            sample,
            feature,
            propagation,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::P => "P",
            Ablation::D => "D",
            Ablation::PD => "P-D",
            Ablation::F => "F",
            Ablation::S => "S",
            Ablation::FS => "F-S",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown ablation variant {s:?}")))
    }
}

/// Published per-dataset learning rates (and teleport probability).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Dblp,
    Cite,
    Acm,
    Amap,
    Pubmed,
    Corafull,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Dblp,
        Preset::Cite,
        Preset::Acm,
        Preset::Amap,
        Preset::Pubmed,
        Preset::Corafull,
    ];

    pub fn lr(self) -> f64 {
        match self {
            Preset::Amap => 1e-3,
            Preset::Dblp => 1e-4,
            Preset::Acm => 5e-5,
            Preset::Cite | Preset::Pubmed | Preset::Corafull => 1e-5,
        }
    }

    pub fn teleport_alpha(self) -> f64 {
        match self {
            Preset::Pubmed => 0.1,
            _ => 0.2,
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        cfg.lr = self.lr();
        cfg.distortion.teleport_alpha = self.teleport_alpha();
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| format!("{p:?}").to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Contract(format!("unknown preset {s:?}")))
    }
}

/// Every knob of the training procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub pretrain_epochs: usize,
    pub init_epochs: usize,
    pub train_epochs: usize,
    pub weights: LossWeights,
    pub distortion: DistortionConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub ablation: Ablation,
    /// Draw the feature noise once instead of every epoch.
    pub freeze_noise: bool,
    /// L2-normalize embedding rows before the final K-means.
    pub normalize_embedding: bool,
    /// Seeded K-means restarts for the final clustering.
    pub kmeans_restarts: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            lr: 1e-3,
            pretrain_epochs: 30,
            init_epochs: 100,
            train_epochs: 400,
            weights: LossWeights::default(),
            distortion: DistortionConfig::default(),
            model,
            seed: 0,
            ablation: Ablation::PD,
            freeze_noise: false,
            normalize_embedding: false,
            kmeans_restarts: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Contract(format!("learning rate {} is invalid", self.lr)));
        }
        self.weights.validate()?;
        self.distortion.validate()?;
        self.model.validate()
    }
}
