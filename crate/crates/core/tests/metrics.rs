use std::collections::BTreeSet;

use augseg_core::train::ConfusionMatrix;
use augseg_core::{LabelMask, IGNORE};
use proptest::prelude::*;

// Per-class IoU from explicit pixel sets.
fn brute_force(pred: &[u8], truth: &[u8], n: usize) -> Vec<Option<f64>> {
    (0..n as u8)
        .map(|c| {
            let p: BTreeSet<usize> = (0..pred.len()).filter(|&j| truth[j] != IGNORE && pred[j] == c).collect();
            let t: BTreeSet<usize> = (0..truth.len()).filter(|&j| truth[j] == c).collect();
            let union = p.union(&t).count();
            (union > 0).then(|| p.intersection(&t).count() as f64 / union as f64)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn confusion_iou_equals_set_computation(n in 2usize..5, len in 1usize..40, ignore in 0.0f64..0.5, seed in any::<u64>()) {
        let mut s = augseg_core::RngStream::new(seed);
        let pred: Vec<u8> = (0..len).map(|_| s.below(n) as u8).collect();
        let truth: Vec<u8> = (0..len).map(|_| if s.bernoulli(ignore) { IGNORE } else { s.below(n) as u8 }).collect();
        let mut cm = ConfusionMatrix::new(n);
        cm.add(&LabelMask::new(1, len, pred.clone()).unwrap(), &LabelMask::new(1, len, truth.clone()).unwrap()).unwrap();
        let want = brute_force(&pred, &truth, n);
        prop_assert_eq!(cm.per_class_iou(), want.clone());
        let defined: Vec<f64> = want.into_iter().flatten().collect();
        let miou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        prop_assert_eq!(cm.miou(), miou);
        prop_assert_eq!(cm.total() as usize, truth.iter().filter(|&&t| t != IGNORE).count());
    }
}
