use serde::{Deserialize, Serialize};

use crate::model::{NetSpec, Real, Params};
use crate::{argmax_labels, Error, Image, LabelMask, Result, IGNORE};

/// Rows are ground truth, columns predictions; IGNORE ground truth is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::Structural(format!("{} counts for {num_classes} classes", counts.len())));
        }
        Ok(Self { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &LabelMask, truth: &LabelMask) -> Result<()> {
        if pred.dims() != truth.dims() {
            return Err(Error::Structural(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
        }
        truth.validate(self.num_classes)?;
        let n = self.num_classes;
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            if t == IGNORE {
                continue;
            }
            if p as usize >= n {
                return Err(Error::Argument(format!("prediction {p} is not a class below {n}")));
            }
            self.counts[t as usize * n + p as usize] += 1;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)`, undefined when the class never appears.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let tp = self.get(c, c);
        let fn_: u64 = (0..self.num_classes).map(|p| self.get(c, p)).sum::<u64>() - tp;
        let fp: u64 = (0..self.num_classes).map(|t| self.get(t, c)).sum::<u64>() - tp;
        let denom = tp + fp + fn_;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.num_classes).map(|c| self.iou(c)).collect()
    }

    /// Mean over classes with a defined IoU; `None` if there are none.
    pub fn miou(&self) -> Option<f64> {
        let defined: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

impl From<ConfusionMatrix> for EvalReport {
    fn from(confusion: ConfusionMatrix) -> Self {
        Self { miou: confusion.miou(), per_class_iou: confusion.per_class_iou(), confusion }
    }
}

/// Score predictions of `params` against full-size validation samples.
pub fn evaluate<T: Real>(net: &NetSpec, params: &Params<T>, samples: &[(&Image, &LabelMask)]) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(net.num_classes);
    for (img, truth) in samples {
        let pred = argmax_labels(&net.predict(params, img)?);
        cm.add(&pred, truth)?;
    }
    Ok(cm.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion_matrix() {
        let cm = ConfusionMatrix::from_counts(2, vec![3, 1, 2, 4]).unwrap();
        assert_eq!(cm.iou(0), Some(0.5));
        assert_eq!(cm.iou(1), Some(4.0 / 7.0));
        assert!((cm.miou().unwrap() - (0.5 + 4.0 / 7.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_and_empty_cases() {
        let t = LabelMask::new(2, 2, vec![0, 1, 1, IGNORE]).unwrap();
        let mut cm = ConfusionMatrix::new(3);
        cm.add(&LabelMask::new(2, 2, vec![0, 1, 1, 2]).unwrap(), &t).unwrap();
        assert_eq!(cm.total(), 3);
        assert_eq!(cm.miou(), Some(1.0));
        assert_eq!(cm.iou(2), None);
        let mut empty = ConfusionMatrix::new(3);
        empty.add(&LabelMask::filled(2, 2, 0), &LabelMask::ignore(2, 2)).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.miou(), None);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(cm.add(&LabelMask::filled(2, 2, 0), &LabelMask::filled(2, 3, 0)).is_err());
        assert!(cm.add(&LabelMask::filled(2, 2, 5), &LabelMask::filled(2, 2, 0)).is_err());
        assert!(cm.add(&LabelMask::filled(2, 2, 0), &LabelMask::filled(2, 2, 9)).is_err());
    }
}
