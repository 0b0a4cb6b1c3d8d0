//! Pixel containers shared by every stage of the pipeline.
//!
//! All rasters are row-major. Images interleave channels (`H, W, 3`) and
//! probability maps interleave classes (`H, W, N`).

use crate::{Error, Result};

/// Reserved label value: excluded from every loss and from evaluation.
pub const IGNORE: u8 = 255;

/// Quantize a unit-range value to its 8-bit level.
#[inline]
pub fn to_level(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn from_level(level: u8) -> f32 {
    level as f32 / 255.0
}

/// RGB raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Structural(format!(
                "image data length {} != {height}x{width}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Build from values that the caller guarantees are in range, clamping
    /// away floating-point overshoot.
    pub(crate) fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    pub fn from_levels(height: usize, width: usize, levels: &[u8]) -> Result<Self> {
        Self::new(height, width, levels.iter().map(|&l| from_level(l)).collect())
    }

    pub fn to_levels(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_level(v)).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Per-pixel class ids in `0..N` or [`IGNORE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Structural(format!(
                "label data length {} != {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Placeholder used to carry unlabeled samples through paired geometry.
    pub fn ignore(height: usize, width: usize) -> Self {
        Self::filled(height, width, IGNORE)
    }

    /// Check that every value is a class id below `num_classes` or IGNORE.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self
            .data
            .iter()
            .find(|&&v| v != IGNORE && v as usize >= num_classes)
        {
            Some(v) => Err(Error::Argument(format!(
                "label value {v} is neither < {num_classes} nor IGNORE"
            ))),
            None => Ok(()),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != IGNORE).count()
    }
}

/// Per-pixel class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbMap {
    pub const SUM_TOLERANCE: f64 = 1e-5;

    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || num_classes > IGNORE as usize {
            return Err(Error::Structural(format!(
                "num_classes {num_classes} outside 1..=255"
            )));
        }
        if data.len() != height * width * num_classes {
            return Err(Error::Structural(format!(
                "prob data length {} != {height}x{width}x{num_classes}",
                data.len()
            )));
        }
        for (j, px) in data.chunks_exact(num_classes).enumerate() {
            if px.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Argument(format!("negative probability at pixel {j}")));
            }
            let sum: f64 = px.iter().sum();
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(Error::Argument(format!("pixel {j} sums to {sum}")));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn uniform(height: usize, width: usize, num_classes: usize) -> Result<Self> {
        let p = 1.0 / num_classes as f64;
        Self::new(height, width, num_classes, vec![p; height * width * num_classes])
    }

    /// One-hot map of a label mask; IGNORE pixels become uniform.
    pub fn one_hot(labels: &LabelMask, num_classes: usize) -> Result<Self> {
        labels.validate(num_classes)?;
        let mut data = vec![0.0; labels.data.len() * num_classes];
        for (px, &l) in data.chunks_exact_mut(num_classes).zip(&labels.data) {
            if l == IGNORE {
                px.fill(1.0 / num_classes as f64);
            } else {
                px[l as usize] = 1.0;
            }
        }
        Self::new(labels.height, labels.width, num_classes, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Distribution at flattened pixel index `j`.
    #[inline]
    pub fn at(&self, j: usize) -> &[f64] {
        &self.data[j * self.num_classes..(j + 1) * self.num_classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_classes)
    }
}

/// Binary mixing mask: 1 keeps the first operand, 0 takes the second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Structural(format!(
                "mask data length {} != {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Argument("region mask values must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn keeps_first(&self, j: usize) -> bool {
        self.data[j] == 1
    }

    pub fn zero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0).count()
    }
}

/// Harden a probability map into class ids; ties go to the lowest index.
pub fn argmax_labels(p: &ProbMap) -> LabelMask {
    let data = p
        .pixels()
        .map(|px| {
            let mut best = 0;
            for (c, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMask {
        height: p.height,
        width: p.width,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    fn random_probmap(s: &mut RngStream, h: usize, w: usize, n: usize) -> ProbMap {
        let mut data = Vec::with_capacity(h * w * n);
        for _ in 0..h * w {
            let raw: Vec<f64> = (0..n).map(|_| s.next_f64() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / sum));
        }
        ProbMap::new(h, w, n, data).unwrap()
    }

    #[test]
    fn argmax_unique_and_tie() {
        let p = ProbMap::new(1, 1, 3, vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(argmax_labels(&p).data(), &[1]);
        let p = ProbMap::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_labels(&p).data(), &[0]);
    }

    #[test]
    fn argmax_matches_brute_force_scan() {
        let mut s = RngStream::new(21);
        for _ in 0..50 {
            let p = random_probmap(&mut s, 2, 2, 4);
            let got = argmax_labels(&p);
            for j in 0..4 {
                let px = p.at(j);
                let max = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = px.iter().position(|&v| v == max).unwrap();
                assert_eq!(got.data()[j] as usize, first);
                assert_ne!(got.data()[j], IGNORE);
            }
        }
    }

    #[test]
    fn argmax_is_invariant_to_positive_rescaling() {
        let mut s = RngStream::new(22);
        let p = random_probmap(&mut s, 4, 4, 5);
        // rescale each pixel by a positive factor, then renormalize by the
        // same factor: argmax must not move
        let mut scaled = p.data().to_vec();
        for px in scaled.chunks_exact_mut(5) {
            let f = 0.1 + 3.0 * s.next_f64();
            px.iter_mut().for_each(|v| *v *= f);
            let sum: f64 = px.iter().sum();
            px.iter_mut().for_each(|v| *v /= sum);
        }
        let q = ProbMap::new(4, 4, 5, scaled).unwrap();
        assert_eq!(argmax_labels(&p), argmax_labels(&q));
    }

    #[test]
    fn probmap_rejects_bad_inputs() {
        assert!(matches!(
            ProbMap::new(1, 2, 2, vec![0.5; 3]),
            Err(Error::Structural(_))
        ));
        assert!(ProbMap::new(1, 1, 2, vec![0.7, 0.7]).is_err());
        assert!(ProbMap::new(1, 1, 2, vec![1.2, -0.2]).is_err());
        assert!(ProbMap::new(1, 1, 2, vec![0.5 + 5e-6, 0.5]).is_ok());
    }

    #[test]
    fn image_and_mask_validation() {
        assert!(Image::new(1, 1, vec![0.0, 0.5, 1.1]).is_err());
        assert!(Image::new(1, 1, vec![0.0; 2]).is_err());
        let m = LabelMask::new(1, 3, vec![0, 3, IGNORE]).unwrap();
        assert!(m.validate(4).is_ok());
        assert!(m.validate(3).is_err());
        assert!(RegionMask::new(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn level_round_trip_is_exact() {
        let levels: Vec<u8> = (0..=255).flat_map(|l| [l, l, l]).collect();
        let img = Image::from_levels(16, 16, &levels).unwrap();
        assert_eq!(img.to_levels(), levels);
    }
}
