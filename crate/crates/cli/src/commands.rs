use std::path::Path;

use augseg_core::data::{generate_dataset, Dataset, CLASS_NAMES};
use augseg_core::train::{
    evaluate, load_model, run_experiment, run_grid, summarize, EpochRecord, GridRun, Preset, RunConfig, RunOptions,
    Variant,
};
use augseg_core::{Error, Result};
use serde::Serialize;

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let m = generate_dataset(&cfg.dataset, cfg.dataset_seed(), out)?;
    println!(
        "wrote {} train ({} labeled, {} unlabeled) and {} val samples to {}",
        m.train_count(),
        m.labeled.len(),
        m.unlabeled.len(),
        m.val.len(),
        out.display()
    );
    Ok(())
}

fn format_miou(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".into(), |v| format!("{:.4}", v))
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path, resume: bool) -> Result<()> {
    let data = Dataset::load(data)?;
    let mut log = |r: &EpochRecord| {
        eprintln!(
            "epoch {:>3}  loss_x {:.4}  loss_u {:.4}  lr {:.5}  miou {}",
            r.epoch,
            r.loss_x,
            r.loss_u,
            r.lr,
            format_miou(r.miou)
        );
    };
    let opts = RunOptions { out_dir: Some(out), resume, stop_after: None, on_epoch: Some(&mut log) };
    let outcome = run_experiment(cfg, &data, opts)?;
    println!("final miou {}", format_miou(outcome.final_miou()));
    Ok(())
}

#[derive(Serialize)]
struct EvalJson {
    miou: Option<f64>,
    per_class_iou: Vec<Option<f64>>,
    classes: Vec<&'static str>,
}

pub fn eval(checkpoint: &Path, data: &Path) -> Result<()> {
    let (net, params) = load_model(checkpoint)?;
    let data = Dataset::load(data)?;
    let val: Vec<_> = data.manifest.val.iter().map(|&id| (&data.images[id], &data.labels[id])).collect();
    let report = evaluate(&net, &params, &val)?;
    let json = EvalJson { miou: report.miou, per_class_iou: report.per_class_iou, classes: CLASS_NAMES.to_vec() };
    println!("{}", serde_json::to_string(&json).expect("plain json"));
    Ok(())
}

pub struct Grid {
    pub seeds: Vec<u64>,
    pub presets: Vec<Preset>,
    pub sweep_k: Vec<usize>,
    pub sweep_lambda: Vec<f64>,
}

impl Grid {
    pub fn variants(&self) -> Vec<Variant> {
        let presets: &[Preset] = if self.presets.is_empty() && self.sweep_k.is_empty() && self.sweep_lambda.is_empty() {
            &Preset::ALL
        } else {
            &self.presets
        };
        let mut out: Vec<Variant> = presets.iter().map(|&p| Variant::preset(p)).collect();
        for &k in &self.sweep_k {
            out.push(Variant { label: format!("full_k{k}"), preset: Preset::Full, k: Some(k), lambda_u: None });
        }
        for &l in &self.sweep_lambda {
            out.push(Variant { label: format!("full_lambda{l}"), preset: Preset::Full, k: None, lambda_u: Some(l) });
        }
        out
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    runs: &'a [GridRun],
    variants: Vec<augseg_core::train::VariantSummary>,
}

pub fn ablate(cfg: &RunConfig, data: &Path, out: &Path, grid: &Grid) -> Result<()> {
    if grid.seeds.is_empty() {
        return Err(Error::Argument("--seeds must list at least one seed".into()));
    }
    let data = Dataset::load(data)?;
    let variants = grid.variants();
    let runs = run_grid(cfg, &data, &variants, &grid.seeds, Some(out), |r| {
        eprintln!("{} seed {}: miou {}", r.label, r.seed, format_miou(r.final_miou));
    })?;
    let variants = summarize(&runs);
    for v in &variants {
        println!("{:<16} mean miou {}", v.label, format_miou(v.mean_miou));
    }
    let summary = Summary { config: cfg, runs: &runs, variants };
    let path = out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("plain json"))
        .map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_means_every_preset() {
        let g = Grid { seeds: vec![1], presets: vec![], sweep_k: vec![], sweep_lambda: vec![] };
        let labels: Vec<_> = g.variants().into_iter().map(|v| v.label).collect();
        assert_eq!(labels, ["supervised", "mt", "mt_ar", "mt_aa", "full"]);
    }

    #[test]
    fn sweeps_extend_the_full_preset() {
        let g = Grid { seeds: vec![1], presets: vec![Preset::Supervised], sweep_k: vec![0, 2], sweep_lambda: vec![0.0] };
        let v = g.variants();
        assert_eq!(v.len(), 4);
        assert_eq!((v[2].preset, v[2].k), (Preset::Full, Some(2)));
        assert_eq!(v[3].lambda_u, Some(0.0));
        assert_eq!(v[3].label, "full_lambda0");
    }
}
