use std::path::Path;

use augseg_core::adaptive::{LabeledCrop, Provenance, UnlabeledCrop};
use augseg_core::data::netpbm::{write_pgm, write_ppm};
use augseg_core::data::Dataset;
use augseg_core::geometric::{apply_weak, WeakParams};
use augseg_core::intensity::Plan;
use augseg_core::model::NetSpec;
use augseg_core::train::{load_model, strong_view, teacher_targets, RunConfig, TrainState};
use augseg_core::{Error, Image, LabelMask, Result, RngStream};
use serde::Serialize;

const RED: [f32; 3] = [1.0, 0.0, 0.0];
const GREEN: [f32; 3] = [0.0, 1.0, 0.0];
const BLUE: [f32; 3] = [0.0, 0.0, 1.0];

/// Labeled paste red, other unlabeled sample green, own crop blue.
pub fn provenance_image(h: usize, w: usize, prov: Option<&[Provenance]>) -> Result<Image> {
    let mut data = Vec::with_capacity(h * w * 3);
    for j in 0..h * w {
        let c = match prov.map(|p| p[j]) {
            Some(Provenance::Labeled) => RED,
            Some(Provenance::UnlabOther) => GREEN,
            _ => BLUE,
        };
        data.extend_from_slice(&c);
    }
    Image::new(h, w, data)
}

#[derive(Serialize)]
struct PreviewLog<'a> {
    seed: u64,
    unlabeled_ids: &'a [usize],
    labeled_ids: &'a [usize],
    weak_unlabeled: &'a [WeakParams],
    weak_labeled: &'a [WeakParams],
    rho: Vec<f64>,
    mix: Option<&'a augseg_core::adaptive::MixDraws>,
    plans: &'a [Plan],
}

pub fn run(cfg: &RunConfig, data: &Path, out: &Path, count: usize, checkpoint: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::Argument("--count must be positive".into()));
    }
    let data = Dataset::load(data)?;
    let m = &data.manifest;
    if m.unlabeled.len() < count || m.labeled.is_empty() {
        return Err(Error::Argument(format!(
            "--count {count} needs that many unlabeled samples and at least one labeled one ({} unlabeled, {} labeled)",
            m.unlabeled.len(),
            m.labeled.len()
        )));
    }
    let (net, teacher) = match checkpoint {
        Some(p) => load_model(p)?,
        None => {
            let net = NetSpec::new(augseg_core::data::NUM_CLASSES)?;
            (net, TrainState::init(net, cfg, 1).teacher_f32())
        }
    };

    let s = RngStream::new(cfg.seed).child("preview");
    let u_ids = &m.unlabeled[..count];
    let x_ids: Vec<usize> = (0..count).map(|i| m.labeled[i % m.labeled.len()]).collect();

    let base = s.child("weak_x");
    let mut weak_x = Vec::with_capacity(count);
    let mut weak_x_params = Vec::with_capacity(count);
    for (b, &id) in x_ids.iter().enumerate() {
        let (i, l, p) = apply_weak(&data.images[id], &data.labels[id], &mut base.child(b), &cfg.geometric)?;
        weak_x.push((i, l));
        weak_x_params.push(p);
    }
    let base = s.child("weak_u");
    let mut weak_u = Vec::with_capacity(count);
    for (b, &id) in u_ids.iter().enumerate() {
        let img = &data.images[id];
        let blank = LabelMask::ignore(img.height(), img.width());
        let (i, _, p) = apply_weak(img, &blank, &mut base.child(b), &cfg.geometric)?;
        weak_u.push((i, p));
    }

    let targets = teacher_targets(&net, &teacher, &weak_u, cfg.train.pseudo_threshold)?;
    let (pseudo, rho): (Vec<_>, Vec<_>) = targets.into_iter().unzip();
    let unlabeled: Vec<UnlabeledCrop<'_>> = weak_u
        .iter()
        .zip(&pseudo)
        .zip(&rho)
        .map(|(((image, _), pseudo), &rho)| UnlabeledCrop { image, pseudo, rho })
        .collect();
    let labeled: Vec<LabeledCrop<'_>> = weak_x.iter().map(|(image, label)| LabeledCrop { image, label }).collect();
    let strong = strong_view(&unlabeled, &labeled, cfg, &s)?;

    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    for b in 0..count {
        let (h, w) = strong.images[b].dims();
        write_ppm(out.join(format!("sample-{b:03}-weak.ppm")), &weak_u[b].0)?;
        write_ppm(out.join(format!("sample-{b:03}-strong.ppm")), &strong.images[b])?;
        write_pgm(out.join(format!("sample-{b:03}-target.pgm")), h, w, strong.targets[b].data())?;
        let prov = strong.provenance.as_ref().map(|p| p[b].as_slice());
        write_ppm(out.join(format!("sample-{b:03}-provenance.ppm")), &provenance_image(h, w, prov)?)?;
    }
    let weak_u_params: Vec<WeakParams> = weak_u.into_iter().map(|(_, p)| p).collect();
    let log = PreviewLog {
        seed: cfg.seed,
        unlabeled_ids: u_ids,
        labeled_ids: &x_ids,
        weak_unlabeled: &weak_u_params,
        weak_labeled: &weak_x_params,
        rho: rho.iter().map(|r| r.value()).collect(),
        mix: strong.mix.as_ref(),
        plans: &strong.plans,
    };
    let path = out.join("plan.json");
    std::fs::write(&path, serde_json::to_string_pretty(&log).expect("plain json"))
        .map_err(|e| Error::Io { path, source: e })?;
    println!("wrote {count} previews to {}", out.display());
    Ok(())
}
