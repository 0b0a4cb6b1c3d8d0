//! Confidence score and confidence-adaptive label-injecting CutMix.
//!
//! Stage 1 pastes a region of the index-aligned labeled crop into each
//! unlabeled crop with probability `1 - rho` (low confidence, more help).
//! Stage 2 mixes every unlabeled crop with a permuted stage-1 candidate.
//! Images and targets always go through the same masks, and every output
//! pixel records which source it came from.

use serde::{Deserialize, Serialize};

use crate::raster::{Image, LabelMask, ProbMap, RegionMask};
use crate::{Error, Result, RngStream};

/// Mean over pixels of `max(p) * (1 - H(p) / ln N)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceScore(f64);

impl ConfidenceScore {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Argument(format!("confidence {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn pixel_confidence(px: &[f64], log_n: f64) -> f64 {
    let entropy: f64 = px
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let max = px.iter().cloned().fold(0.0, f64::max);
    max * (1.0 - entropy / log_n).clamp(0.0, 1.0)
}

pub fn confidence(p: &ProbMap) -> Result<ConfidenceScore> {
    confidence_over(p, None)
}

/// Confidence restricted to the pixels flagged in `content` (all pixels when
/// `None`). An empty selection scores 0.
pub fn confidence_over(p: &ProbMap, content: Option<&[bool]>) -> Result<ConfidenceScore> {
    let n = p.num_classes();
    if n < 2 {
        return Err(Error::Argument(format!("confidence needs >= 2 classes, got {n}")));
    }
    if let Some(c) = content {
        if c.len() != p.height() * p.width() {
            return Err(Error::Structural("content mask size differs from prob map".into()));
        }
    }
    let log_n = (n as f64).ln();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, px) in p.pixels().enumerate() {
        if content.map_or(true, |c| c[j]) {
            sum += pixel_confidence(px, log_n);
            count += 1;
        }
    }
    let rho = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(ConfidenceScore(rho.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutMixConfig {
    pub area_frac_lo: f64,
    pub area_frac_hi: f64,
    pub aspect_lo: f64,
    pub aspect_hi: f64,
    /// Inject labeled content with probability `rho` instead of `1 - rho`.
    pub inject_on_high_confidence: bool,
}

impl Default for CutMixConfig {
    fn default() -> Self {
        Self {
            area_frac_lo: 0.25,
            area_frac_hi: 0.50,
            aspect_lo: 0.5,
            aspect_hi: 2.0,
            inject_on_high_confidence: false,
        }
    }
}

impl CutMixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.area_frac_lo && self.area_frac_lo <= self.area_frac_hi && self.area_frac_hi < 1.0) {
            return Err(Error::Config(format!(
                "area fraction range [{}, {}] must satisfy 0 < lo <= hi < 1",
                self.area_frac_lo, self.area_frac_hi
            )));
        }
        if !(0.0 < self.aspect_lo && self.aspect_lo <= self.aspect_hi) {
            return Err(Error::Config(format!(
                "aspect range [{}, {}] is invalid",
                self.aspect_lo, self.aspect_hi
            )));
        }
        Ok(())
    }

    /// Stage-1 decision for a uniform draw `r` in `[0, 1)`.
    pub fn injects(&self, r: f64, rho: ConfidenceScore) -> bool {
        if self.inject_on_high_confidence {
            r < rho.value()
        } else {
            r >= rho.value()
        }
    }
}

/// The zero rectangle of a region mask. A zero-sized rectangle is an
/// all-ones mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl MaskRect {
    pub const EMPTY: MaskRect = MaskRect { top: 0, left: 0, height: 0, width: 0 };

    pub fn full(h: usize, w: usize) -> Self {
        MaskRect { top: 0, left: 0, height: h, width: w }
    }

    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }

    pub fn to_mask(&self, h: usize, w: usize) -> RegionMask {
        let data = (0..h * w)
            .map(|j| if self.contains(j / w, j % w) { 0 } else { 1 })
            .collect();
        RegionMask::new(h, w, data).expect("binary by construction")
    }
}

pub fn draw_rect(s: &mut RngStream, h: usize, w: usize, cfg: &CutMixConfig) -> Result<MaskRect> {
    if h < 2 || w < 2 {
        return Err(Error::Argument(format!("region mask needs dims >= 2, got {h}x{w}")));
    }
    cfg.validate()?;
    let area = s.uniform(cfg.area_frac_lo, cfg.area_frac_hi)? * (h * w) as f64;
    let aspect = s.uniform(cfg.aspect_lo.ln(), cfg.aspect_hi.ln())?.exp();
    let rh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
    let rw = ((area / aspect).sqrt().round() as usize).clamp(1, w);
    let top = s.uniform_int(0, (h - rh) as i64)? as usize;
    let left = s.uniform_int(0, (w - rw) as i64)? as usize;
    Ok(MaskRect { top, left, height: rh, width: rw })
}

pub fn make_region_mask(s: &mut RngStream, h: usize, w: usize, cfg: &CutMixConfig) -> Result<RegionMask> {
    Ok(draw_rect(s, h, w, cfg)?.to_mask(h, w))
}

/// Where an output pixel's image value and target came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Provenance {
    /// The output's own unlabeled crop `u_m`.
    UnlabSelf = 0,
    /// The permuted partner's unlabeled crop `u_{pi(m)}`.
    UnlabOther = 1,
    /// The partner's labeled crop `x_{pi(m)}`.
    Labeled = 2,
}

#[derive(Debug, Clone, Copy)]
pub struct UnlabeledCrop<'a> {
    pub image: &'a Image,
    pub pseudo: &'a LabelMask,
    pub rho: ConfidenceScore,
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledCrop<'a> {
    pub image: &'a Image,
    pub label: &'a LabelMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub image: Image,
    pub target: LabelMask,
    pub provenance: Vec<Provenance>,
}

/// Every random choice behind one batch mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixDraws {
    pub triggers: Vec<f64>,
    pub injected: Vec<bool>,
    pub stage1: Vec<MaskRect>,
    pub permutation: Vec<usize>,
    pub stage2: Vec<MaskRect>,
}

pub fn draw_mix(
    s: &RngStream,
    rhos: &[ConfidenceScore],
    h: usize,
    w: usize,
    cfg: &CutMixConfig,
) -> Result<MixDraws> {
    let b = rhos.len();
    let mut trig = s.child("trigger");
    let mut m1 = s.child("stage1");
    let mut m2 = s.child("stage2");
    let triggers: Vec<f64> = (0..b).map(|_| trig.next_f64()).collect();
    let injected = triggers
        .iter()
        .zip(rhos)
        .map(|(&r, &rho)| cfg.injects(r, rho))
        .collect();
    let stage1 = (0..b).map(|_| draw_rect(&mut m1, h, w, cfg)).collect::<Result<_>>()?;
    let permutation = s.child("perm").permutation(b)?;
    let stage2 = (0..b).map(|_| draw_rect(&mut m2, h, w, cfg)).collect::<Result<_>>()?;
    Ok(MixDraws { triggers, injected, stage1, permutation, stage2 })
}

/// Deterministic two-stage composition for given draws.
pub fn compose_mix(
    unlabeled: &[UnlabeledCrop<'_>],
    labeled: &[LabeledCrop<'_>],
    draws: &MixDraws,
) -> Result<Vec<MixedSample>> {
    let b = unlabeled.len();
    if labeled.len() != b
        || draws.injected.len() != b
        || draws.stage1.len() != b
        || draws.stage2.len() != b
        || draws.permutation.len() != b
    {
        return Err(Error::Structural(format!(
            "batch sizes differ: {} unlabeled, {} labeled",
            b,
            labeled.len()
        )));
    }
    if b == 0 {
        return Ok(Vec::new());
    }
    let (h, w) = unlabeled[0].image.dims();
    for u in unlabeled {
        if u.image.dims() != (h, w) || u.pseudo.dims() != (h, w) {
            return Err(Error::Structural("unlabeled crops differ in size".into()));
        }
    }
    for x in labeled {
        if x.image.dims() != (h, w) || x.label.dims() != (h, w) {
            return Err(Error::Structural("labeled crops differ in size".into()));
        }
    }
    let mut out = Vec::with_capacity(b);
    for m in 0..b {
        let n = draws.permutation[m];
        let (u_self, u_other, x_other) = (&unlabeled[m], &unlabeled[n], &labeled[n]);
        let mut data = Vec::with_capacity(h * w * 3);
        let mut target = Vec::with_capacity(h * w);
        let mut prov = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let j = y * w + x;
                let source = if !draws.stage2[m].contains(y, x) {
                    Provenance::UnlabSelf
                } else if draws.injected[n] && draws.stage1[n].contains(y, x) {
                    Provenance::Labeled
                } else {
                    Provenance::UnlabOther
                };
                let (img, lbl) = match source {
                    Provenance::UnlabSelf => (u_self.image, u_self.pseudo),
                    Provenance::UnlabOther => (u_other.image, u_other.pseudo),
                    Provenance::Labeled => (x_other.image, x_other.label),
                };
                data.extend_from_slice(&img.data()[j * 3..j * 3 + 3]);
                target.push(lbl.data()[j]);
                prov.push(source);
            }
        }
        out.push(MixedSample {
            image: Image::new(h, w, data)?,
            target: LabelMask::new(h, w, target)?,
            provenance: prov,
        });
    }
    Ok(out)
}

pub fn adaptive_cutmix(
    unlabeled: &[UnlabeledCrop<'_>],
    labeled: &[LabeledCrop<'_>],
    s: &RngStream,
    cfg: &CutMixConfig,
) -> Result<(Vec<MixedSample>, MixDraws)> {
    if unlabeled.len() != labeled.len() {
        return Err(Error::Structural(format!(
            "batch sizes differ: {} unlabeled, {} labeled",
            unlabeled.len(),
            labeled.len()
        )));
    }
    if unlabeled.is_empty() {
        return Err(Error::Structural("empty batch".into()));
    }
    let (h, w) = unlabeled[0].image.dims();
    let rhos: Vec<ConfidenceScore> = unlabeled.iter().map(|u| u.rho).collect();
    let draws = draw_mix(s, &rhos, h, w, cfg)?;
    Ok((compose_mix(unlabeled, labeled, &draws)?, draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probmap(px: &[f64], n: usize) -> ProbMap {
        ProbMap::new(1, px.len() / n, n, px.to_vec()).unwrap()
    }

    #[test]
    fn confidence_endpoints() {
        for n in 2..6 {
            let u = ProbMap::uniform(3, 4, n).unwrap();
            assert!(confidence(&u).unwrap().value().abs() < 1e-12);
            let labels = LabelMask::new(1, 3, vec![0, 1, (n - 1) as u8]).unwrap();
            let one_hot = ProbMap::one_hot(&labels, n).unwrap();
            assert!((confidence(&one_hot).unwrap().value() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn confidence_binary_case() {
        // by hand: H = -(0.8 ln 0.8 + 0.2 ln 0.2) = 0.500402, H / ln 2 = 0.721928,
        // rho = 0.8 * (1 - 0.721928) = 0.222458
        let rho = confidence(&probmap(&[0.8, 0.2], 2)).unwrap().value();
        assert!((rho - 0.222458).abs() < 1e-5, "{rho}");
    }

    #[test]
    fn confidence_requires_two_classes() {
        let p = probmap(&[1.0], 1);
        assert!(matches!(confidence(&p), Err(Error::Argument(_))));
    }

    #[test]
    fn confidence_is_permutation_invariant() {
        let mut s = RngStream::new(4);
        let mut px = Vec::new();
        for _ in 0..12 {
            let a = s.next_f64();
            let b = s.next_f64() * (1.0 - a);
            px.extend([a, b, 1.0 - a - b]);
        }
        let p = ProbMap::new(3, 4, 3, px.clone()).unwrap();
        let mut order: Vec<usize> = (0..12).collect();
        s.shuffle(&mut order);
        let shuffled: Vec<f64> = order.iter().flat_map(|&j| px[j * 3..j * 3 + 3].to_vec()).collect();
        let q = ProbMap::new(4, 3, 3, shuffled).unwrap();
        let (a, b) = (confidence(&p).unwrap().value(), confidence(&q).unwrap().value());
        assert!((a - b).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn fixed_area_mask_has_expected_zero_count() {
        let cfg = CutMixConfig { area_frac_lo: 0.25, area_frac_hi: 0.25, ..Default::default() };
        for seed in 0..50 {
            let mut s = RngStream::new(seed);
            let mask = make_region_mask(&mut s, 64, 64, &cfg).unwrap();
            let zeros = mask.zero_count() as i64;
            let rect = draw_rect(&mut RngStream::new(seed), 64, 64, &cfg).unwrap();
            let side = rect.height.max(rect.width) as i64;
            assert!((zeros - 1024).abs() <= 2 * side, "zeros {zeros}");
        }
    }

    #[test]
    fn mask_zeros_form_one_rectangle_and_replay() {
        let cfg = CutMixConfig::default();
        for seed in 0..30 {
            let mask = make_region_mask(&mut RngStream::new(seed), 20, 30, &cfg).unwrap();
            let zeros: Vec<(usize, usize)> = (0..600)
                .filter(|&j| !mask.keeps_first(j))
                .map(|j| (j / 30, j % 30))
                .collect();
            let (y0, y1) = (zeros.iter().map(|p| p.0).min().unwrap(), zeros.iter().map(|p| p.0).max().unwrap());
            let (x0, x1) = (zeros.iter().map(|p| p.1).min().unwrap(), zeros.iter().map(|p| p.1).max().unwrap());
            assert_eq!(zeros.len(), (y1 - y0 + 1) * (x1 - x0 + 1));
            let again = make_region_mask(&mut RngStream::new(seed), 20, 30, &cfg).unwrap();
            assert_eq!(mask, again);
        }
        assert!(make_region_mask(&mut RngStream::new(0), 1, 5, &cfg).is_err());
    }

    fn batch(b: usize, h: usize, w: usize, seed: u64) -> (Vec<Image>, Vec<LabelMask>, Vec<Image>, Vec<LabelMask>) {
        let mut s = RngStream::new(seed);
        let mut mk_img = || Image::new(h, w, (0..h * w * 3).map(|_| s.next_f64() as f32).collect()).unwrap();
        let us: Vec<Image> = (0..b).map(|_| mk_img()).collect();
        let xs: Vec<Image> = (0..b).map(|_| mk_img()).collect();
        let pseudo = (0..b).map(|i| LabelMask::filled(h, w, (i % 3) as u8)).collect();
        let gt = (0..b).map(|i| LabelMask::filled(h, w, 3 + (i % 2) as u8)).collect();
        (us, pseudo, xs, gt)
    }

    #[test]
    fn confident_batch_with_keep_all_masks_is_identity() {
        let (us, ps, xs, gs) = batch(3, 4, 5, 1);
        let un: Vec<_> = us.iter().zip(&ps).map(|(i, p)| UnlabeledCrop { image: i, pseudo: p, rho: ConfidenceScore(1.0) }).collect();
        let lb: Vec<_> = xs.iter().zip(&gs).map(|(i, l)| LabeledCrop { image: i, label: l }).collect();
        let cfg = CutMixConfig::default();
        let mut draws = draw_mix(&RngStream::new(2), &[ConfidenceScore(1.0); 3], 4, 5, &cfg).unwrap();
        assert!(draws.injected.iter().all(|&i| !i));
        draws.stage2 = vec![MaskRect::EMPTY; 3];
        let out = compose_mix(&un, &lb, &draws).unwrap();
        for (m, o) in out.iter().enumerate() {
            assert_eq!(o.image, us[m]);
            assert_eq!(o.target, ps[m]);
            assert!(o.provenance.iter().all(|&p| p == Provenance::UnlabSelf));
        }
    }

    #[test]
    fn unconfident_batch_with_paste_all_masks_takes_labeled_partner() {
        let (us, ps, xs, gs) = batch(4, 4, 4, 3);
        let un: Vec<_> = us.iter().zip(&ps).map(|(i, p)| UnlabeledCrop { image: i, pseudo: p, rho: ConfidenceScore(0.0) }).collect();
        let lb: Vec<_> = xs.iter().zip(&gs).map(|(i, l)| LabeledCrop { image: i, label: l }).collect();
        let cfg = CutMixConfig::default();
        let mut draws = draw_mix(&RngStream::new(5), &[ConfidenceScore(0.0); 4], 4, 4, &cfg).unwrap();
        assert!(draws.injected.iter().all(|&i| i));
        draws.stage1 = vec![MaskRect::full(4, 4); 4];
        draws.stage2 = vec![MaskRect::full(4, 4); 4];
        let out = compose_mix(&un, &lb, &draws).unwrap();
        for (m, o) in out.iter().enumerate() {
            let n = draws.permutation[m];
            assert_eq!(o.image, xs[n]);
            assert_eq!(o.target, gs[n]);
        }
    }

    #[test]
    fn batch_size_mismatch_is_structural() {
        let (us, ps, xs, gs) = batch(2, 4, 4, 3);
        let un: Vec<_> = us.iter().zip(&ps).map(|(i, p)| UnlabeledCrop { image: i, pseudo: p, rho: ConfidenceScore(0.5) }).collect();
        let lb = vec![LabeledCrop { image: &xs[0], label: &gs[0] }];
        let r = adaptive_cutmix(&un, &lb, &RngStream::new(0), &CutMixConfig::default());
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn high_confidence_switch_flips_direction() {
        let cfg = CutMixConfig { inject_on_high_confidence: true, ..Default::default() };
        let rho = ConfidenceScore(0.9);
        assert!(cfg.injects(0.5, rho));
        assert!(!CutMixConfig::default().injects(0.5, rho));
    }
}
