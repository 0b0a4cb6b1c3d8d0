use augseg_core::adaptive::*;
use augseg_core::{Image, LabelMask, ProbMap, RngStream};
use proptest::prelude::*;

fn random_batch(s: &mut RngStream, b: usize, h: usize, w: usize) -> Vec<(Image, LabelMask)> {
    (0..b)
        .map(|_| {
            let img = Image::new(h, w, (0..h * w * 3).map(|_| s.next_f64() as f32).collect()).unwrap();
            let lbl = LabelMask::new(h, w, (0..h * w).map(|_| s.below(4) as u8).collect()).unwrap();
            (img, lbl)
        })
        .collect()
}

fn inside(r: &MaskRect, y: usize, x: usize) -> bool {
    y >= r.top && y < r.top + r.height && x >= r.left && x < r.left + r.width
}

/// Replays the two stages from the logged draws and counts pixels whose
/// (image, target) pair differs from the single expected source.
fn violations(
    out: &[MixedSample],
    draws: &MixDraws,
    unl: &[(Image, LabelMask)],
    lab: &[(Image, LabelMask)],
) -> usize {
    let (h, w) = unl[0].0.dims();
    let mut bad = 0;
    for (m, sample) in out.iter().enumerate() {
        let n = draws.permutation[m];
        for y in 0..h {
            for x in 0..w {
                // stage 1: the partner image after optional label injection
                let partner = if draws.injected[n] && inside(&draws.stage1[n], y, x) { &lab[n] } else { &unl[n] };
                // stage 2: paste the partner inside the second rectangle
                let src = if inside(&draws.stage2[m], y, x) { partner } else { &unl[m] };
                if sample.image.pixel(y, x) != src.0.pixel(y, x) || sample.target.get(y, x) != src.1.get(y, x) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

#[test]
fn hundred_random_batches_match_the_replay_oracle() {
    let mut s = RngStream::new(2024);
    let cfg = CutMixConfig::default();
    for t in 0..100 {
        let b = 1 + s.below(6);
        let (h, w) = (4 + 2 * s.below(6), 4 + 2 * s.below(6));
        let unl = random_batch(&mut s, b, h, w);
        let lab = random_batch(&mut s, b, h, w);
        let rhos: Vec<ConfidenceScore> = (0..b).map(|_| ConfidenceScore::new(s.next_f64()).unwrap()).collect();
        let u: Vec<UnlabeledCrop<'_>> =
            unl.iter().zip(&rhos).map(|((image, pseudo), &rho)| UnlabeledCrop { image, pseudo, rho }).collect();
        let l: Vec<LabeledCrop<'_>> = lab.iter().map(|(image, label)| LabeledCrop { image, label }).collect();
        let (out, draws) = adaptive_cutmix(&u, &l, &RngStream::new(t).child("mix"), &cfg).unwrap();
        assert_eq!(violations(&out, &draws, &unl, &lab), 0, "batch {t}");
        let mut sorted = draws.permutation.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..b).collect::<Vec<_>>());
    }
}

#[test]
fn injection_frequency_tracks_one_minus_confidence() {
    let cfg = CutMixConfig::default();
    for (rho, want) in [(0.2, 0.8), (0.8, 0.2)] {
        let score = ConfidenceScore::new(rho).unwrap();
        let mut s = RngStream::new(17).child("trials");
        let n = 10_000;
        let hits = (0..n).filter(|_| cfg.injects(s.next_f64(), score)).count();
        let f = hits as f64 / n as f64;
        assert!((f - want).abs() <= 0.02, "rho {rho}: {f}");
    }
}

proptest! {
    #[test]
    fn rectangles_respect_area_and_aspect_bounds(seed in any::<u64>(), h in 2usize..80, w in 2usize..80) {
        let cfg = CutMixConfig::default();
        let r = draw_rect(&mut RngStream::new(seed), h, w, &cfg).unwrap();
        prop_assert!(r.top + r.height <= h && r.left + r.width <= w);
        prop_assert!(r.height >= 1 && r.width >= 1);
    }

    #[test]
    fn confidence_stays_in_unit_interval(seed in any::<u64>(), n in 2usize..6, px in 1usize..20) {
        let mut s = RngStream::new(seed);
        let mut data = Vec::new();
        for _ in 0..px {
            let raw: Vec<f64> = (0..n).map(|_| s.next_f64() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / sum));
        }
        let p = ProbMap::new(1, px, n, data).unwrap();
        let r = confidence(&p).unwrap().value();
        prop_assert!((0.0..=1.0).contains(&r));
    }
}
