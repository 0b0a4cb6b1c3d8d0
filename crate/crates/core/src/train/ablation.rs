use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::Result;

use super::{run_experiment, Preset, RunConfig, RunOptions};

/// One configuration of a grid: a preset with optional knob overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub preset: Preset,
    pub k: Option<usize>,
    pub lambda_u: Option<f64>,
}

impl Variant {
    pub fn preset(preset: Preset) -> Self {
        Self { label: preset.name().into(), preset, k: None, lambda_u: None }
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.train.apply_preset(self.preset);
        if let Some(k) = self.k {
            cfg.intensity.k = k;
        }
        if let Some(l) = self.lambda_u {
            cfg.train.lambda_u = l;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub label: String,
    pub seed: u64,
    pub final_miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub mean_miou: Option<f64>,
}

/// Train every variant under every seed on one dataset. Run directories
/// go to `out/<label>/seed-<seed>` when `out` is given.
pub fn run_grid(
    base: &RunConfig,
    data: &Dataset,
    variants: &[Variant],
    seeds: &[u64],
    out: Option<&Path>,
    mut on_run: impl FnMut(&GridRun),
) -> Result<Vec<GridRun>> {
    let mut runs = Vec::new();
    for v in variants {
        for &seed in seeds {
            let mut cfg = v.apply(base);
            cfg.seed = seed;
            let dir = out.map(|o| o.join(&v.label).join(format!("seed-{seed}")));
            let outcome = run_experiment(&cfg, data, RunOptions { out_dir: dir.as_deref(), ..Default::default() })?;
            let run = GridRun { label: v.label.clone(), seed, final_miou: outcome.final_miou() };
            on_run(&run);
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Mean final mIoU per label in first-seen order; runs with an undefined
/// mIoU make the mean undefined.
pub fn summarize(runs: &[GridRun]) -> Vec<VariantSummary> {
    let mut out: Vec<VariantSummary> = Vec::new();
    for label in runs.iter().map(|r| &r.label) {
        if out.iter().any(|s| &s.label == label) {
            continue;
        }
        let mine: Vec<&GridRun> = runs.iter().filter(|r| &r.label == label).collect();
        let vals: Option<Vec<f64>> = mine.iter().map(|r| r.final_miou).collect();
        out.push(VariantSummary {
            label: label.clone(),
            seeds: mine.iter().map(|r| r.seed).collect(),
            mean_miou: vals.map(|v| v.iter().sum::<f64>() / v.len() as f64),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_means_per_label() {
        let runs = vec![
            GridRun { label: "a".into(), seed: 1, final_miou: Some(0.5) },
            GridRun { label: "b".into(), seed: 1, final_miou: None },
            GridRun { label: "a".into(), seed: 2, final_miou: Some(0.7) },
        ];
        let s = summarize(&runs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].seeds, vec![1, 2]);
        assert!((s[0].mean_miou.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(s[1].mean_miou, None);
    }

    #[test]
    fn variant_overrides_apply_after_preset() {
        let v = Variant { label: "full-k1".into(), preset: Preset::Full, k: Some(1), lambda_u: Some(0.0) };
        let c = v.apply(&RunConfig::default());
        assert_eq!(c.intensity.k, 1);
        assert_eq!(c.train.lambda_u, 0.0);
        assert!(c.train.use_aa);
    }
}
