use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitManifest};
use crate::model::{checkpoint, NamedTensor, NetSpec, OptimState, Params};
use crate::{Error, Image, LabelMask, Result, RngStream};

use super::metrics::{evaluate, EvalReport};
use super::step::{train_step, TrainState};
use super::{RunConfig, TrainConfig};

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_x: f64,
    pub loss_u: f64,
    pub miou: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_rho: Option<f64>,
    pub lr: f64,
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const BEST_CKPT: &str = "best.ckpt";

/// `floor(|U| / B_u)`, or `ceil(|X| / B_x)` without unlabeled data.
pub fn iters_per_epoch(m: &SplitManifest, t: &TrainConfig) -> usize {
    if m.unlabeled.is_empty() {
        m.labeled.len().div_ceil(t.batch_labeled)
    } else {
        m.unlabeled.len() / t.batch_unlabeled
    }
}

/// `len` labeled ids drawn from back-to-back shuffles of `ids`, so every id
/// is used `floor` or `ceil` of `len / |ids|` times.
pub fn labeled_schedule(ids: &[usize], len: usize, s: &RngStream) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(len + ids.len());
    let mut round = 0;
    while out.len() < len {
        let mut pass = ids.to_vec();
        s.child(round).shuffle(&mut pass);
        out.extend(pass);
        round += 1;
    }
    out.truncate(len);
    Ok(out)
}

fn prefixed<'a>(prefix: &str, p: &'a Params<f32>) -> impl Iterator<Item = NamedTensor<f32>> + 'a {
    let prefix = prefix.to_string();
    p.tensors().iter().map(move |t| NamedTensor { name: format!("{prefix}.{}", t.name), ..t.clone() })
}

fn scalar(name: &str, v: f64) -> NamedTensor<f32> {
    NamedTensor { name: name.into(), shape: vec![1], data: vec![v as f32] }
}

/// Serialize the full training state after `epoch` completed epochs.
pub fn state_tensors(state: &TrainState, epoch: usize) -> Vec<NamedTensor<f32>> {
    let teacher = state.teacher_f32();
    let mut out: Vec<_> = prefixed("student", &state.student)
        .chain(prefixed("teacher", &teacher))
        .chain(prefixed("momentum", &state.optim.velocity))
        .collect();
    out.push(scalar("optim.iter", state.optim.iter as f64));
    out.push(scalar("optim.max_iter", state.optim.max_iter as f64));
    out.push(scalar("meta.epoch", epoch as f64));
    out
}

fn take_group(tensors: &[NamedTensor<f32>], prefix: &str) -> Result<Params<f32>> {
    let p = format!("{prefix}.");
    let group: Vec<_> = tensors
        .iter()
        .filter_map(|t| t.name.strip_prefix(&p).map(|n| NamedTensor { name: n.to_string(), ..t.clone() }))
        .collect();
    if group.is_empty() {
        return Err(Error::format("name", format!("checkpoint has no `{prefix}.*` tensors")));
    }
    Params::new(group)
}

fn take_scalar(tensors: &[NamedTensor<f32>], name: &str) -> Result<u64> {
    let t = tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::format("name", format!("checkpoint lacks `{name}`")))?;
    match t.data.as_slice() {
        [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as u64),
        _ => Err(Error::format("values", format!("`{name}` is not a count"))),
    }
}

/// Parameters for inference: the teacher when present, else the student.
pub fn load_model(path: &Path) -> Result<(NetSpec, Params<f32>)> {
    let tensors = checkpoint::load(path)?;
    let params = take_group(&tensors, "teacher").or_else(|_| take_group(&tensors, "student"))?;
    let n = params
        .by_name("head.bias")
        .map(|t| t.numel())
        .ok_or_else(|| Error::format("name", "checkpoint lacks head.bias"))?;
    let net = NetSpec::new(n).map_err(|e| Error::format("dims", e.to_string()))?;
    net.check_params(&params).map_err(|e| Error::format("dims", e.to_string()))?;
    Ok((net, params))
}

/// Restore a training state; returns it with the completed epoch count.
pub fn load_state(path: &Path, net: NetSpec, cfg: &RunConfig) -> Result<(TrainState, usize)> {
    let tensors = checkpoint::load(path)?;
    let student = take_group(&tensors, "student")?;
    let teacher = take_group(&tensors, "teacher")?;
    let velocity = take_group(&tensors, "momentum")?;
    for p in [&student, &teacher, &velocity] {
        net.check_params(p).map_err(|e| Error::format("dims", e.to_string()))?;
    }
    let iter = take_scalar(&tensors, "optim.iter")?;
    let max_iter = take_scalar(&tensors, "optim.max_iter")?;
    let epoch = take_scalar(&tensors, "meta.epoch")? as usize;
    let optim = OptimState { velocity, config: cfg.train.sgd(), iter: 0, max_iter }.with_iter(iter)?;
    Ok((TrainState { net, student, teacher: teacher.cast(), optim }, epoch))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_history(dir: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::new();
    for r in history {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    write(&dir.join(HISTORY_FILE), text)
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::format("history", format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Knobs of [`run_experiment`] that do not affect the results.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Run directory for config, history and checkpoints.
    pub out_dir: Option<&'a Path>,
    /// Continue from `out_dir/final.ckpt`.
    pub resume: bool,
    /// Stop once this many epochs are complete, as if interrupted.
    pub stop_after: Option<usize>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<EpochRecord>,
    pub state: TrainState,
    pub eval: Option<EvalReport>,
}

impl RunOutcome {
    pub fn final_miou(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.miou)
    }
}

fn val_pairs(data: &Dataset) -> Vec<(&Image, &LabelMask)> {
    data.manifest.val.iter().map(|&id| (&data.images[id], &data.labels[id])).collect()
}

/// Evaluate the teacher as stored in checkpoints.
pub fn evaluate_state(state: &TrainState, data: &Dataset) -> Result<EvalReport> {
    evaluate(&state.net, &state.teacher_f32(), &val_pairs(data))
}

/// Train for `cfg.train.epochs` epochs, evaluating the teacher on the
/// validation split after each one.
pub fn run_experiment(cfg: &RunConfig, data: &Dataset, mut opts: RunOptions<'_>) -> Result<RunOutcome> {
    cfg.validate()?;
    let t = &cfg.train;
    let m = &data.manifest;
    let net = NetSpec::new(crate::data::NUM_CLASSES)?;
    let iters = iters_per_epoch(m, t);
    let max_iter = (t.epochs * iters) as u64;

    let (mut state, start, mut history) = match (opts.resume, opts.out_dir) {
        (true, Some(dir)) => {
            let (state, epoch) = load_state(&dir.join(FINAL_CKPT), net, cfg)?;
            if state.optim.max_iter != max_iter {
                return Err(Error::State(format!(
                    "checkpoint schedule has {} iterations, config implies {max_iter}",
                    state.optim.max_iter
                )));
            }
            let mut history = read_history(&dir.join(HISTORY_FILE))?;
            if history.len() < epoch {
                return Err(Error::State(format!("history has {} epochs, checkpoint {epoch}", history.len())));
            }
            history.truncate(epoch);
            (state, epoch, history)
        }
        (true, None) => return Err(Error::Argument("resume needs a run directory".into())),
        (false, _) => (TrainState::init(net, cfg, max_iter), 0, Vec::new()),
    };
    if let Some(dir) = opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join(CONFIG_FILE), cfg.to_json() + "\n")?;
        if start == 0 {
            checkpoint::save(dir.join(FINAL_CKPT), &state_tensors(&state, 0))?;
            write_history(dir, &history)?;
        }
    }
    let mut best = history.iter().filter_map(|r| r.miou).fold(f64::NEG_INFINITY, f64::max);
    let mut eval = None;

    let root = RngStream::new(cfg.seed);
    let (bx, bu) = (t.batch_labeled, t.batch_unlabeled);
    let use_unlabeled = t.unlabeled_active() && !m.unlabeled.is_empty();
    let end = opts.stop_after.map_or(t.epochs, |s| s.min(t.epochs));
    for epoch in start..end {
        let es = root.child("epoch").child(epoch);
        let sched = labeled_schedule(&m.labeled, iters * bx, &es.child("labeled_order"))?;
        let mut uorder = m.unlabeled.clone();
        if use_unlabeled {
            es.child("unlabeled_order").shuffle(&mut uorder);
        }
        let (mut sum_x, mut sum_u, mut sum_rho, mut n_rho, mut lr) = (0.0, 0.0, 0.0, 0usize, 0.0);
        for i in 0..iters {
            let bx_ids = &sched[i * bx..(i + 1) * bx];
            let batch_x: Vec<(&Image, &LabelMask)> = bx_ids.iter().map(|&id| (&data.images[id], &data.labels[id])).collect();
            let batch_u: Vec<&Image> = if use_unlabeled {
                uorder[i * bu..(i + 1) * bu].iter().map(|&id| &data.images[id]).collect()
            } else {
                Vec::new()
            };
            let (metrics, _) = train_step(&mut state, cfg, &batch_x, &batch_u, &es.child("iter").child(i))?;
            sum_x += metrics.loss_x;
            sum_u += metrics.loss_u;
            if let Some(r) = metrics.mean_rho {
                sum_rho += r;
                n_rho += 1;
            }
            lr = metrics.lr;
        }
        let report = evaluate_state(&state, data)?;
        let denom = iters.max(1) as f64;
        let record = EpochRecord {
            epoch,
            loss_x: sum_x / denom,
            loss_u: sum_u / denom,
            miou: report.miou,
            per_class_iou: report.per_class_iou.clone(),
            mean_rho: (n_rho > 0).then(|| sum_rho / n_rho as f64),
            lr,
        };
        if let Some(dir) = opts.out_dir {
            let tensors = state_tensors(&state, epoch + 1);
            checkpoint::save(dir.join(FINAL_CKPT), &tensors)?;
            if record.miou.is_some_and(|v| v > best) {
                checkpoint::save(dir.join(BEST_CKPT), &tensors)?;
            }
        }
        if let Some(v) = record.miou {
            best = best.max(v);
        }
        if let Some(cb) = opts.on_epoch.as_mut() {
            cb(&record);
        }
        history.push(record);
        if let Some(dir) = opts.out_dir {
            write_history(dir, &history)?;
        }
        eval = Some(report);
    }
    Ok(RunOutcome { history, state, eval })
}
