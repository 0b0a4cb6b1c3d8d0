use crate::adaptive::{self, ConfidenceScore, LabeledCrop, MixDraws, Provenance, UnlabeledCrop};
use crate::geometric::{apply_weak, WeakParams};
use crate::intensity::{apply_plan, sample_plan, Plan};
use crate::model::{ema_update, sgd_step, NetSpec, OptimState, Params};
use crate::{argmax_labels, Error, Image, LabelMask, Result, RngStream, IGNORE};

use super::RunConfig;

/// Student (trained, 32-bit) and teacher (EMA, kept in 64-bit) parameters
/// plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: NetSpec,
    pub student: Params<f32>,
    pub teacher: Params<f64>,
    pub optim: OptimState<f32>,
}

impl TrainState {
    /// Fresh student from the run seed; the teacher starts as its copy.
    pub fn init(net: NetSpec, cfg: &RunConfig, max_iter: u64) -> Self {
        let student = net.init::<f32>(&mut RngStream::new(cfg.seed).child("init"));
        let teacher = student.cast();
        let optim = OptimState::new(&student, cfg.train.sgd(), max_iter);
        Self { net, student, teacher, optim }
    }

    pub fn teacher_f32(&self) -> Params<f32> {
        self.teacher.cast()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub loss_x: f64,
    pub loss_u: f64,
    /// `loss_x + lambda_u * loss_u`.
    pub loss: f64,
    pub mean_rho: Option<f64>,
    pub lr: f64,
}

/// Everything random or derived inside one step, enough to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub weak_x: Vec<WeakParams>,
    pub weak_u: Vec<WeakParams>,
    pub pseudo: Vec<LabelMask>,
    pub rho: Vec<ConfidenceScore>,
    pub mix: Option<MixDraws>,
    pub plans: Vec<Plan>,
}

/// Hard teacher targets for weak unlabeled views. Padding and, with a
/// threshold, unconfident pixels become IGNORE; the confidence score only
/// looks at content pixels.
pub fn teacher_targets(
    net: &NetSpec,
    teacher: &Params<f32>,
    weak: &[(Image, WeakParams)],
    threshold: Option<f64>,
) -> Result<Vec<(LabelMask, ConfidenceScore)>> {
    weak.iter()
        .map(|(img, wp)| {
            let p = net.predict(teacher, img)?;
            let content = wp.content_mask();
            let rho = adaptive::confidence_over(&p, Some(&content))?;
            let mut pseudo = argmax_labels(&p);
            for (j, (l, &keep)) in pseudo.data_mut().iter_mut().zip(&content).enumerate() {
                let unsure = threshold.is_some_and(|t| p.at(j).iter().copied().fold(0.0, f64::max) < t);
                if !keep || unsure {
                    *l = IGNORE;
                }
            }
            Ok((pseudo, rho))
        })
        .collect()
}

/// The student's view of an unlabeled batch and its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongView {
    pub images: Vec<Image>,
    pub targets: Vec<LabelMask>,
    /// Per-pixel source of each output when mixing is on.
    pub provenance: Option<Vec<Vec<Provenance>>>,
    pub mix: Option<MixDraws>,
    /// One plan per image when intensity augmentation is on, else empty.
    pub plans: Vec<Plan>,
}

/// Mixing over the batch (if enabled) followed by per-image intensity plans
/// (if enabled).
pub fn strong_view(
    unlabeled: &[UnlabeledCrop<'_>],
    labeled: &[LabeledCrop<'_>],
    cfg: &RunConfig,
    s: &RngStream,
) -> Result<StrongView> {
    let (mut images, targets, provenance, mix) = if cfg.train.use_aa {
        let (mixed, draws) = adaptive::adaptive_cutmix(unlabeled, labeled, &s.child("cutmix"), &cfg.cutmix)?;
        let mut images = Vec::with_capacity(mixed.len());
        let mut targets = Vec::with_capacity(mixed.len());
        let mut prov = Vec::with_capacity(mixed.len());
        for m in mixed {
            images.push(m.image);
            targets.push(m.target);
            prov.push(m.provenance);
        }
        (images, targets, Some(prov), Some(draws))
    } else {
        let images = unlabeled.iter().map(|u| u.image.clone()).collect();
        let targets = unlabeled.iter().map(|u| u.pseudo.clone()).collect();
        (images, targets, None, None)
    };
    let mut plans = Vec::new();
    if cfg.train.use_ar {
        let base = s.child("intensity");
        for (b, img) in images.iter_mut().enumerate() {
            let plan = sample_plan(&mut base.child(b), &cfg.intensity)?;
            *img = apply_plan(img, &plan)?;
            plans.push(plan);
        }
    }
    Ok(StrongView { images, targets, provenance, mix, plans })
}

/// One optimizer step on the student and one EMA update of the teacher.
///
/// The unlabeled branch is skipped entirely when it cannot contribute
/// (`use_mt` off, `lambda_u == 0` or no unlabeled batch).
pub fn train_step(
    state: &mut TrainState,
    cfg: &RunConfig,
    batch_x: &[(&Image, &LabelMask)],
    batch_u: &[&Image],
    s: &RngStream,
) -> Result<(StepMetrics, StepTrace)> {
    let net = state.net;
    let geo = &cfg.geometric;
    let base = s.child("weak_x");
    let mut weak_x = Vec::with_capacity(batch_x.len());
    let mut weak_x_params = Vec::with_capacity(batch_x.len());
    for (b, (img, lbl)) in batch_x.iter().enumerate() {
        let (i, l, p) = apply_weak(img, lbl, &mut base.child(b), geo)?;
        weak_x.push((i, l));
        weak_x_params.push(p);
    }

    let mut trace = StepTrace {
        weak_x: weak_x_params,
        weak_u: Vec::new(),
        pseudo: Vec::new(),
        rho: Vec::new(),
        mix: None,
        plans: Vec::new(),
    };
    let mut grads = Params::zeros_like(&state.student);
    let pairs: Vec<(&Image, &LabelMask)> = weak_x.iter().map(|(i, l)| (i, l)).collect();
    let loss_x = net.batch_ce(&state.student, &pairs, 1.0, &mut grads)?;

    let mut loss_u = 0.0;
    let mut mean_rho = None;
    if cfg.train.unlabeled_active() && !batch_u.is_empty() {
        let base = s.child("weak_u");
        let mut weak_u = Vec::with_capacity(batch_u.len());
        for (b, img) in batch_u.iter().enumerate() {
            let placeholder = LabelMask::ignore(img.height(), img.width());
            let (i, _, p) = apply_weak(img, &placeholder, &mut base.child(b), geo)?;
            weak_u.push((i, p));
        }
        let teacher = state.teacher_f32();
        let targets = teacher_targets(&net, &teacher, &weak_u, cfg.train.pseudo_threshold)?;
        let (pseudo, rho): (Vec<_>, Vec<_>) = targets.into_iter().unzip();
        let unlabeled: Vec<UnlabeledCrop<'_>> = weak_u
            .iter()
            .zip(&pseudo)
            .zip(&rho)
            .map(|(((image, _), pseudo), &rho)| UnlabeledCrop { image, pseudo, rho })
            .collect();
        let labeled: Vec<LabeledCrop<'_>> =
            weak_x.iter().map(|(image, label)| LabeledCrop { image, label }).collect();
        let strong = strong_view(&unlabeled, &labeled, cfg, s)?;
        let pairs: Vec<(&Image, &LabelMask)> = strong.images.iter().zip(&strong.targets).collect();
        loss_u = net.batch_ce(&state.student, &pairs, cfg.train.lambda_u, &mut grads)?;
        mean_rho = Some(rho.iter().map(|r| r.value()).sum::<f64>() / rho.len() as f64);
        trace.weak_u = weak_u.into_iter().map(|(_, p)| p).collect();
        trace.mix = strong.mix;
        trace.plans = strong.plans;
        trace.pseudo = pseudo;
        trace.rho = rho;
    }

    let loss = loss_x + cfg.train.lambda_u * loss_u;
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::NonFinite(format!(
            "step {}: loss_x {loss_x}, loss_u {loss_u}, finite grads: {}",
            state.optim.iter,
            grads.all_finite()
        )));
    }
    let lr = sgd_step(&mut state.student, &grads, &mut state.optim)?;
    ema_update(&mut state.teacher, &state.student, &cfg.train.ema())?;
    Ok((StepMetrics { loss_x, loss_u, loss, mean_rho, lr }, trace))
}
