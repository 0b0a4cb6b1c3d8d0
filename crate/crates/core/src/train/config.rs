use serde::{Deserialize, Serialize};

use crate::adaptive::CutMixConfig;
use crate::data::DatasetSpec;
use crate::geometric::GeoConfig;
use crate::intensity::IntensityConfig;
use crate::model::{EmaConfig, SgdConfig};
use crate::{Error, Result};

/// Hyper-parameters of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_u: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub epochs: usize,
    pub ema_alpha: f64,
    pub base_lr: f64,
    pub momentum: f64,
    pub poly_power: f64,
    /// Teacher/student consistency branch on unlabeled data.
    pub use_mt: bool,
    /// Random intensity augmentation of the student view.
    pub use_ar: bool,
    /// Confidence-adaptive label-injecting CutMix of the student view.
    pub use_aa: bool,
    /// Pseudo-labels whose teacher max-probability falls below this are ignored.
    pub pseudo_threshold: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_u: 1.0,
            batch_labeled: 8,
            batch_unlabeled: 8,
            epochs: 40,
            ema_alpha: 0.999,
            base_lr: 0.01,
            momentum: 0.9,
            poly_power: 0.9,
            use_mt: true,
            use_ar: true,
            use_aa: true,
            pseudo_threshold: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_u >= 0.0) || !self.lambda_u.is_finite() {
            return Err(Error::Config(format!("lambda_u {} must be a finite value >= 0", self.lambda_u)));
        }
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.use_mt && self.use_aa && self.batch_labeled != self.batch_unlabeled {
            return Err(Error::Config(format!(
                "label injection pairs samples: batch_labeled {} != batch_unlabeled {}",
                self.batch_labeled, self.batch_unlabeled
            )));
        }
        if !(self.base_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.poly_power >= 0.0) {
            return Err(Error::Config("need base_lr > 0, momentum in [0, 1), poly_power >= 0".into()));
        }
        if let Some(t) = self.pseudo_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("pseudo_threshold {t} outside [0, 1]")));
            }
        }
        self.ema().validate()
    }

    pub fn ema(&self) -> EmaConfig {
        EmaConfig { alpha: self.ema_alpha }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { base_lr: self.base_lr, momentum: self.momentum, poly_power: self.poly_power }
    }

    /// Whether unlabeled data contributes to the update at all.
    pub fn unlabeled_active(&self) -> bool {
        self.use_mt && self.lambda_u > 0.0
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (mt, ar, aa) = match preset {
            Preset::Supervised => (false, false, false),
            Preset::Mt => (true, false, false),
            Preset::MtAr => (true, true, false),
            Preset::MtAa => (true, false, true),
            Preset::Full => (true, true, true),
        };
        self.use_mt = mt;
        self.use_ar = ar;
        self.use_aa = aa;
        if preset == Preset::Supervised {
            self.lambda_u = 0.0;
        }
    }
}

/// Named rows of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Supervised,
    Mt,
    MtAr,
    MtAa,
    Full,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Supervised, Preset::Mt, Preset::MtAr, Preset::MtAa, Preset::Full];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Supervised => "supervised",
            Preset::Mt => "mt",
            Preset::MtAr => "mt_ar",
            Preset::MtAa => "mt_aa",
            Preset::Full => "full",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}` (expected supervised, mt, mt_ar, mt_aa or full)")))
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The complete, self-describing configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub geometric: GeoConfig,
    pub intensity: IntensityConfig,
    pub cutmix: CutMixConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.geometric.validate()?;
        self.intensity.validate()?;
        self.cutmix.validate()
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
