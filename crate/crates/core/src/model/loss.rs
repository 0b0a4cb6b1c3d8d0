//! Per-pixel softmax and masked cross-entropy on channel-major logits.

use super::{Real, Tensor};
use crate::raster::{LabelMask, IGNORE};
use crate::{Error, Result};

/// Lower bound applied to probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-8;

/// Softmax over channels at every pixel, returned channel-major.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Vec<T> {
    let p = logits.plane();
    let n = logits.c;
    let mut out = vec![T::zero(); logits.data.len()];
    let mut buf = vec![T::zero(); n];
    for j in 0..p {
        let mut max = T::neg_infinity();
        for c in 0..n {
            buf[c] = logits.data[c * p + j];
            max = max.max(buf[c]);
        }
        let mut sum = T::zero();
        for v in &mut buf {
            *v = (*v - max).exp();
            sum += *v;
        }
        for c in 0..n {
            out[c * p + j] = buf[c] / sum;
        }
    }
    out
}

/// Summed cross-entropy over non-IGNORE pixels, `-ln max(p_target, floor)`,
/// and its gradient with respect to the logits scaled by `weight`.
///
/// Returns `(sum_loss, d(weight * sum_loss) / d logits)`.
pub fn softmax_ce<T: Real>(logits: &Tensor<T>, target: &LabelMask, weight: f64) -> Result<(f64, Tensor<T>)> {
    if (logits.h, logits.w) != target.dims() {
        return Err(Error::Structural(format!(
            "logits {}x{} vs target {:?}",
            logits.h,
            logits.w,
            target.dims()
        )));
    }
    let n = logits.c;
    target.validate(n)?;
    let p = logits.plane();
    let probs = softmax(logits);
    let mut grad = Tensor::zeros(n, logits.h, logits.w);
    let wt = T::from_f64(weight);
    let mut total = 0.0f64;
    for (j, &t) in target.data().iter().enumerate() {
        if t == IGNORE {
            continue;
        }
        let t = t as usize;
        // log-softmax of the target for accuracy at confident pixels
        let mut max = T::neg_infinity();
        for c in 0..n {
            max = max.max(logits.data[c * p + j]);
        }
        let lse: T = (0..n).map(|c| (logits.data[c * p + j] - max).exp()).sum::<T>().ln() + max;
        let log_pt = (logits.data[t * p + j] - lse).as_f64();
        if log_pt.is_nan() || log_pt == f64::INFINITY {
            return Err(Error::NonFinite(format!("logits at pixel {j} are not finite")));
        }
        if log_pt >= PROB_FLOOR.ln() {
            total -= log_pt;
            for c in 0..n {
                let onehot = if c == t { T::one() } else { T::zero() };
                grad.data[c * p + j] = wt * (probs[c * p + j] - onehot);
            }
        } else {
            total -= PROB_FLOOR.ln();
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_n() {
        let logits = Tensor::<f64>::zeros(4, 2, 3);
        let target = LabelMask::new(2, 3, vec![0, 1, 2, 3, IGNORE, 1]).unwrap();
        let (sum, grad) = softmax_ce(&logits, &target, 1.0).unwrap();
        assert!((sum / 5.0 - 4f64.ln()).abs() < 1e-12);
        // ignored pixel (index 4) receives no gradient
        for c in 0..4 {
            assert_eq!(grad.data[c * 6 + 4], 0.0);
        }
    }

    #[test]
    fn confident_correct_logits_hit_floor_bound() {
        let mut logits = Tensor::<f64>::zeros(3, 1, 2);
        logits.data[0] = 40.0; // class 0 at pixel 0
        logits.data[2 + 1] = 40.0; // class 1 at pixel 1
        let target = LabelMask::new(1, 2, vec![0, 1]).unwrap();
        let (sum, _) = softmax_ce(&logits, &target, 1.0).unwrap();
        assert!(sum / 2.0 <= -(1.0 - 2.0 * PROB_FLOOR).ln() + 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut logits = Tensor::<f64>::zeros(3, 2, 2);
        for (i, v) in logits.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 13) as f64 / 5.0 - 1.2;
        }
        let target = LabelMask::new(2, 2, vec![2, 0, IGNORE, 1]).unwrap();
        let w = 1.0 / 3.0;
        let (_, grad) = softmax_ce(&logits, &target, w).unwrap();
        let h = 1e-6;
        for i in 0..logits.data.len() {
            let mut a = logits.clone();
            a.data[i] += h;
            let mut b = logits.clone();
            b.data[i] -= h;
            let fd = (softmax_ce(&a, &target, w).unwrap().0 - softmax_ce(&b, &target, w).unwrap().0) * w / (2.0 * h);
            assert!((fd - grad.data[i]).abs() < 1e-8, "{i}: {fd} vs {}", grad.data[i]);
        }
    }

    #[test]
    fn non_finite_logits_are_reported() {
        let mut logits = Tensor::<f32>::zeros(2, 1, 1);
        logits.data[0] = f32::NAN;
        let target = LabelMask::new(1, 1, vec![1]).unwrap();
        assert!(matches!(softmax_ce(&logits, &target, 1.0), Err(Error::NonFinite(_))));
        logits.data[0] = f32::INFINITY;
        assert!(matches!(softmax_ce(&logits, &target, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn softmax_normalizes() {
        let mut t = Tensor::<f32>::zeros(5, 3, 3);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin() * 4.0;
        }
        let p = softmax(&t);
        for j in 0..9 {
            let s: f32 = (0..5).map(|c| p[c * 9 + j]).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
