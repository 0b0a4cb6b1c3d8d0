//! Random intensity-based augmentation.
//!
//! A plan is a random number `c ~ U{1..k}` of distinct transforms drawn from
//! the pool without replacement, each with a strength drawn uniformly from
//! its continuous range (integer-uniform for posterize and solarize). Plans
//! only touch pixel values; they never see a label mask.

pub mod kernels;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::raster::Image;
use crate::{Error, Result, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityOp {
    Identity,
    Autocontrast,
    Equalize,
    GaussianBlur,
    Contrast,
    Sharpness,
    Color,
    Brightness,
    Hue,
    Posterize,
    Solarize,
}

/// Domain a strength is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrengthRange {
    None,
    /// Half-open `[lo, hi)` for sampling; `[lo, hi]` accepted on input.
    Continuous(f64, f64),
    /// Closed integer range.
    Integer(i64, i64),
}

impl IntensityOp {
    pub const ALL: [IntensityOp; 11] = [
        IntensityOp::Identity,
        IntensityOp::Autocontrast,
        IntensityOp::Equalize,
        IntensityOp::GaussianBlur,
        IntensityOp::Contrast,
        IntensityOp::Sharpness,
        IntensityOp::Color,
        IntensityOp::Brightness,
        IntensityOp::Hue,
        IntensityOp::Posterize,
        IntensityOp::Solarize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntensityOp::Identity => "identity",
            IntensityOp::Autocontrast => "autocontrast",
            IntensityOp::Equalize => "equalize",
            IntensityOp::GaussianBlur => "gaussian_blur",
            IntensityOp::Contrast => "contrast",
            IntensityOp::Sharpness => "sharpness",
            IntensityOp::Color => "color",
            IntensityOp::Brightness => "brightness",
            IntensityOp::Hue => "hue",
            IntensityOp::Posterize => "posterize",
            IntensityOp::Solarize => "solarize",
        }
    }

    pub fn range(self) -> StrengthRange {
        use kernels::*;
        match self {
            IntensityOp::Identity | IntensityOp::Autocontrast | IntensityOp::Equalize => {
                StrengthRange::None
            }
            IntensityOp::GaussianBlur => StrengthRange::Continuous(BLUR_SIGMA.0, BLUR_SIGMA.1),
            IntensityOp::Contrast
            | IntensityOp::Sharpness
            | IntensityOp::Color
            | IntensityOp::Brightness => {
                StrengthRange::Continuous(ENHANCE_FACTOR.0, ENHANCE_FACTOR.1)
            }
            IntensityOp::Hue => StrengthRange::Continuous(HUE_SHIFT.0, HUE_SHIFT.1),
            IntensityOp::Posterize => StrengthRange::Integer(POSTERIZE_BITS.0, POSTERIZE_BITS.1),
            IntensityOp::Solarize => {
                StrengthRange::Integer(SOLARIZE_THRESHOLD.0, SOLARIZE_THRESHOLD.1)
            }
        }
    }

    fn sample_strength(self, s: &mut RngStream) -> Result<Option<f64>> {
        Ok(match self.range() {
            StrengthRange::None => None,
            StrengthRange::Continuous(lo, hi) => Some(s.uniform(lo, hi)?),
            StrengthRange::Integer(lo, hi) => Some(s.uniform_int(lo, hi)? as f64),
        })
    }

    /// Run the kernel for this op.
    pub fn apply(self, img: &Image, strength: Option<f64>) -> Result<Image> {
        let need = |s: Option<f64>| {
            s.ok_or_else(|| Error::Argument(format!("{} requires a strength", self.name())))
        };
        let integer = |v: f64| -> Result<i64> {
            if v.fract() != 0.0 {
                return Err(Error::Argument(format!("{} strength {v} is not an integer", self.name())));
            }
            Ok(v as i64)
        };
        if matches!(self.range(), StrengthRange::None) && strength.is_some() {
            return Err(Error::Argument(format!("{} takes no strength", self.name())));
        }
        match self {
            IntensityOp::Identity => Ok(img.clone()),
            IntensityOp::Autocontrast => Ok(kernels::autocontrast(img)),
            IntensityOp::Equalize => Ok(kernels::equalize(img)),
            IntensityOp::GaussianBlur => kernels::gaussian_blur(img, need(strength)?),
            IntensityOp::Contrast => kernels::contrast(img, need(strength)?),
            IntensityOp::Sharpness => kernels::sharpness(img, need(strength)?),
            IntensityOp::Color => kernels::color(img, need(strength)?),
            IntensityOp::Brightness => kernels::brightness(img, need(strength)?),
            IntensityOp::Hue => kernels::hue(img, need(strength)?),
            IntensityOp::Posterize => kernels::posterize(img, integer(need(strength)?)?),
            IntensityOp::Solarize => kernels::solarize(img, integer(need(strength)?)?),
        }
    }
}

impl fmt::Display for IntensityOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntensityOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntensityOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown intensity op `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityConfig {
    /// Upper bound on the number of ops per plan.
    pub k: usize,
    pub pool: Vec<IntensityOp>,
    /// Apply sampled ops in random order (`true`) or pool order.
    pub random_order: bool,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            k: 3,
            pool: IntensityOp::ALL.to_vec(),
            random_order: true,
        }
    }
}

impl IntensityConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = self.pool.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.pool.len() {
            return Err(Error::Config("intensity pool has duplicate ops".into()));
        }
        if self.k > self.pool.len() {
            return Err(Error::Config(format!(
                "k = {} exceeds pool size {}",
                self.k,
                self.pool.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub op: IntensityOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

pub type Plan = Vec<PlanStep>;

pub fn sample_plan(s: &mut RngStream, cfg: &IntensityConfig) -> Result<Plan> {
    cfg.validate()?;
    if cfg.k == 0 {
        return Ok(Vec::new());
    }
    let count = s.uniform_int(1, cfg.k as i64)? as usize;
    // partial Fisher-Yates: the first `count` slots are a uniformly random
    // ordered selection without replacement
    let mut idx: Vec<usize> = (0..cfg.pool.len()).collect();
    for i in 0..count {
        let j = i + s.below(idx.len() - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..count].to_vec();
    if !cfg.random_order {
        chosen.sort_unstable();
    }
    chosen
        .into_iter()
        .map(|i| {
            let op = cfg.pool[i];
            Ok(PlanStep {
                op,
                strength: op.sample_strength(s)?,
            })
        })
        .collect()
}

/// Apply the steps in order.
pub fn apply_plan(img: &Image, plan: &[PlanStep]) -> Result<Image> {
    let mut cur = img.clone();
    for step in plan {
        cur = step.op.apply(&cur, step.strength)?;
    }
    Ok(cur)
}
