//! Photometric kernels. Each takes an image and a strength and returns a new
//! image of the same size with values in `[0, 1]`.
//!
//! Kernels with 8-bit semantics (autocontrast, equalize, posterize,
//! solarize) operate on the level `round(v * 255)`.

use crate::raster::{from_level, to_level, Image};
use crate::{Error, Result};

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&v) {
        return Err(Error::Argument(format!("{name} strength {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn map_values(img: &Image, f: impl Fn(f32) -> f32) -> Image {
    Image::from_clamped(img.height(), img.width(), img.data().iter().map(|&v| f(v)).collect())
}

/// `f * img + (1 - f) * reference`, elementwise.
fn blend(img: &Image, reference: &[f32], f: f32) -> Image {
    let data = img
        .data()
        .iter()
        .zip(reference)
        .map(|(&a, &r)| f * a + (1.0 - f) * r)
        .collect();
    Image::from_clamped(img.height(), img.width(), data)
}

fn gray(px: &[f32]) -> f32 {
    LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
}

/// Remap each channel through its own 256-entry table.
fn remap_levels(img: &Image, luts: &[Option<[u8; 256]>; 3]) -> Image {
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| match &luts[i % 3] {
            Some(lut) => from_level(lut[to_level(v) as usize]),
            None => v,
        })
        .collect();
    Image::from_clamped(img.height(), img.width(), data)
}

fn channel_histograms(img: &Image) -> [[usize; 256]; 3] {
    let mut hist = [[0usize; 256]; 3];
    for (i, &v) in img.data().iter().enumerate() {
        hist[i % 3][to_level(v) as usize] += 1;
    }
    hist
}

/// Per-channel affine stretch of the occupied level range onto `0..=255`.
/// Channels with a single level are left untouched.
pub fn autocontrast(img: &Image) -> Image {
    let hist = channel_histograms(img);
    let luts = std::array::from_fn(|c| {
        let lo = hist[c].iter().position(|&n| n > 0)?;
        let hi = hist[c].iter().rposition(|&n| n > 0)?;
        if lo == hi {
            return None;
        }
        let scale = 255.0 / (hi - lo) as f64;
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            let s = ((v as f64 - lo as f64) * scale).round().clamp(0.0, 255.0);
            *slot = s as u8;
        }
        Some(lut)
    });
    remap_levels(img, &luts)
}

/// Per-channel histogram equalization:
/// `lut(v) = round((cdf(v) - cdf_min) / (total - cdf_min) * 255)`, where
/// `cdf_min` is the count at the lowest occupied level.
pub fn equalize(img: &Image) -> Image {
    let hist = channel_histograms(img);
    let luts = std::array::from_fn(|c| {
        let total: usize = hist[c].iter().sum();
        let first = hist[c].iter().position(|&n| n > 0)?;
        let cdf_min = hist[c][first];
        if total == cdf_min {
            return None;
        }
        let mut lut = [0u8; 256];
        let mut cdf = 0usize;
        for v in 0..256 {
            cdf += hist[c][v];
            let num = cdf.saturating_sub(cdf_min) as f64;
            lut[v] = (num / (total - cdf_min) as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
        }
        Some(lut)
    });
    remap_levels(img, &luts)
}

pub const BLUR_SIGMA: (f64, f64) = (0.1, 2.0);

/// Separable Gaussian blur, radius `ceil(3 sigma)`, clamp-to-edge.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    check_range("gaussian_blur", sigma, BLUR_SIGMA.0, BLUR_SIGMA.1)?;
    let radius = (3.0 * sigma).ceil() as isize;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= norm);
    let (h, w) = img.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let src = img.data();
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for (k, &wt) in weights.iter().enumerate() {
                    let sx = clamp(x as isize + k as isize - radius, w);
                    acc += wt * src[(y * w + sx) * 3 + c] as f64;
                }
                tmp[(y * w + x) * 3 + c] = acc as f32;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for (k, &wt) in weights.iter().enumerate() {
                    let sy = clamp(y as isize + k as isize - radius, h);
                    acc += wt * tmp[(sy * w + x) * 3 + c] as f64;
                }
                out[(y * w + x) * 3 + c] = acc as f32;
            }
        }
    }
    Ok(Image::from_clamped(h, w, out))
}

pub const ENHANCE_FACTOR: (f64, f64) = (0.05, 0.95);

/// Blend toward the mean luma of the whole image.
pub fn contrast(img: &Image, f: f64) -> Result<Image> {
    check_range("contrast", f, ENHANCE_FACTOR.0, ENHANCE_FACTOR.1)?;
    let n = img.height() * img.width();
    let mean = img.data().chunks_exact(3).map(|px| gray(px) as f64).sum::<f64>() / n.max(1) as f64;
    Ok(map_values(img, |v| f as f32 * v + (1.0 - f as f32) * mean as f32))
}

/// Blend toward the 3x3 smoothing `[[1,1,1],[1,5,1],[1,1,1]] / 13`.
pub fn sharpness(img: &Image, f: f64) -> Result<Image> {
    check_range("sharpness", f, ENHANCE_FACTOR.0, ENHANCE_FACTOR.1)?;
    let (h, w) = img.dims();
    let src = img.data();
    let mut smooth = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f32;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let k = if dy == 0 && dx == 0 { 5.0 } else { 1.0 };
                        acc += k * src[(sy * w + sx) * 3 + c];
                    }
                }
                smooth[(y * w + x) * 3 + c] = acc / 13.0;
            }
        }
    }
    Ok(blend(img, &smooth, f as f32))
}

/// Blend toward the per-pixel luma broadcast to all channels.
pub fn color(img: &Image, f: f64) -> Result<Image> {
    check_range("color", f, ENHANCE_FACTOR.0, ENHANCE_FACTOR.1)?;
    let reference: Vec<f32> = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| {
            let g = gray(px);
            [g, g, g]
        })
        .collect();
    Ok(blend(img, &reference, f as f32))
}

/// Blend toward black: `f * img`.
pub fn brightness(img: &Image, f: f64) -> Result<Image> {
    check_range("brightness", f, ENHANCE_FACTOR.0, ENHANCE_FACTOR.1)?;
    Ok(map_values(img, |v| f as f32 * v))
}

pub const HUE_SHIFT: (f64, f64) = (0.0, 0.5);

fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

pub(crate) fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Rotate hue by `delta` turns.
pub fn hue(img: &Image, delta: f64) -> Result<Image> {
    check_range("hue", delta, HUE_SHIFT.0, HUE_SHIFT.1)?;
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| {
            let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
            hsv_to_rgb([(h + delta as f32).rem_euclid(1.0), s, v])
        })
        .collect();
    Ok(Image::from_clamped(img.height(), img.width(), data))
}

pub const POSTERIZE_BITS: (i64, i64) = (4, 8);

/// Keep the top `bits` bits of every level. Eight bits keeps the image as is.
pub fn posterize(img: &Image, bits: i64) -> Result<Image> {
    check_range("posterize", bits as f64, POSTERIZE_BITS.0 as f64, POSTERIZE_BITS.1 as f64)?;
    if bits == 8 {
        return Ok(img.clone());
    }
    let shift = 8 - bits as u32;
    Ok(map_values(img, |v| from_level((to_level(v) >> shift) << shift)))
}

pub const SOLARIZE_THRESHOLD: (i64, i64) = (1, 255);

/// Invert every pixel whose level is at least `threshold`; other pixels keep
/// their exact value.
pub fn solarize(img: &Image, threshold: i64) -> Result<Image> {
    check_range(
        "solarize",
        threshold as f64,
        SOLARIZE_THRESHOLD.0 as f64,
        SOLARIZE_THRESHOLD.1 as f64,
    )?;
    Ok(map_values(img, |v| {
        let level = to_level(v);
        if level as i64 >= threshold {
            from_level(255 - level)
        } else {
            v
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut s = RngStream::new(seed);
        Image::new(h, w, (0..h * w * 3).map(|_| s.next_f64() as f32).collect()).unwrap()
    }

    fn quantized_image(seed: u64, h: usize, w: usize) -> Image {
        let mut s = RngStream::new(seed);
        let levels: Vec<u8> = (0..h * w * 3).map(|_| s.below(256) as u8).collect();
        Image::from_levels(h, w, &levels).unwrap()
    }

    #[test]
    fn posterize_eight_bits_is_identity() {
        let img = random_image(1, 8, 8);
        assert_eq!(posterize(&img, 8).unwrap(), img);
        let p4 = posterize(&quantized_image(2, 4, 4), 4).unwrap();
        assert!(p4.to_levels().iter().all(|l| l % 16 == 0));
    }

    #[test]
    fn solarize_above_max_is_identity() {
        let mut s = RngStream::new(3);
        let levels: Vec<u8> = (0..48).map(|_| s.below(255) as u8).collect();
        let img = Image::from_levels(4, 4, &levels).unwrap();
        assert_eq!(solarize(&img, 255).unwrap(), img);
        let one = Image::from_levels(1, 1, &[10, 200, 128]).unwrap();
        assert_eq!(solarize(&one, 128).unwrap().to_levels(), vec![10, 55, 127]);
    }

    #[test]
    fn equalize_two_level_channel_matches_cdf_remap() {
        // 16x16 channel: 128 pixels at level 50, 128 at level 200
        let mut levels = Vec::new();
        for i in 0..256 {
            let l = if i % 2 == 0 { 50 } else { 200 };
            levels.extend([l, l, l]);
        }
        let img = Image::from_levels(16, 16, &levels).unwrap();
        let out = equalize(&img).to_levels();
        // brute force: cdf(50) = 128 = cdf_min, cdf(200) = 256
        let map = |l: u8| -> u8 {
            let cdf = levels.iter().step_by(3).filter(|&&v| v <= l).count() as f64;
            ((cdf - 128.0) / (256.0 - 128.0) * 255.0).round() as u8
        };
        assert_eq!(map(50), 0);
        assert_eq!(map(200), 255);
        for (o, i) in out.iter().zip(&levels) {
            assert_eq!(*o, map(*i));
        }
    }

    #[test]
    fn autocontrast_idempotent_and_stretches() {
        let img = random_image(4, 9, 7);
        let scaled = brightness(&img, 0.5).unwrap();
        let once = autocontrast(&scaled);
        let lv = once.to_levels();
        for c in 0..3 {
            let ch: Vec<u8> = lv.iter().skip(c).step_by(3).copied().collect();
            assert_eq!(*ch.iter().min().unwrap(), 0);
            assert_eq!(*ch.iter().max().unwrap(), 255);
        }
        assert_eq!(autocontrast(&once), once);
        let flat = Image::filled(3, 3, [0.3, 0.3, 0.3]).unwrap();
        assert_eq!(autocontrast(&flat), flat);
    }

    #[test]
    fn equalize_idempotent_within_one_level() {
        for seed in 0..5 {
            let img = quantized_image(10 + seed, 12, 12);
            let once = equalize(&img);
            let twice = equalize(&once);
            for (a, b) in once.to_levels().iter().zip(twice.to_levels()) {
                assert!((*a as i32 - b as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn brightness_scales_constant_image() {
        let img = Image::filled(4, 4, [0.6, 0.2, 1.0]).unwrap();
        let out = brightness(&img, 0.5).unwrap();
        for px in out.data().chunks(3) {
            assert!((px[0] - 0.3).abs() < 1e-7 && (px[1] - 0.1).abs() < 1e-7 && (px[2] - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn blends_of_constant_images() {
        let img = Image::filled(5, 5, [0.2, 0.5, 0.8]).unwrap();
        // smoothing, mean luma and blur all leave a flat colour unchanged
        // except where the reference differs per channel
        let s = sharpness(&img, 0.3).unwrap();
        let b = gaussian_blur(&img, 1.7).unwrap();
        for (x, y) in s.data().iter().zip(img.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        for (x, y) in b.data().iter().zip(img.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        let g = gray(&[0.2, 0.5, 0.8]);
        let c = color(&img, 0.25).unwrap();
        assert!((c.data()[0] - (0.25 * 0.2 + 0.75 * g)).abs() < 1e-6);
        let k = contrast(&img, 0.25).unwrap();
        assert!((k.data()[2] - (0.25 * 0.8 + 0.75 * g)).abs() < 1e-6);
    }

    #[test]
    fn hue_round_trip_and_shift() {
        let img = random_image(6, 6, 6);
        let same = hue(&img, 0.0).unwrap();
        for (a, b) in same.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        // pure red shifted by a third of a turn becomes pure green
        let red = Image::filled(1, 1, [1.0, 0.0, 0.0]).unwrap();
        let out = hue(&red, 1.0 / 3.0).unwrap();
        let px = out.pixel(0, 0);
        assert!(px[0].abs() < 1e-5 && (px[1] - 1.0).abs() < 1e-5 && px[2].abs() < 1e-5);
    }

    #[test]
    fn strength_out_of_range_is_rejected() {
        let img = Image::filled(2, 2, [0.5; 3]).unwrap();
        assert!(brightness(&img, 0.99).is_err());
        assert!(hue(&img, 0.6).is_err());
        assert!(posterize(&img, 3).is_err());
        assert!(solarize(&img, 256).is_err());
        assert!(solarize(&img, 0).is_err());
        assert!(gaussian_blur(&img, 2.5).is_err());
    }

    #[test]
    fn blur_preserves_mean_of_interior_impulse() {
        let mut data = vec![0.0f32; 15 * 15 * 3];
        data[(7 * 15 + 7) * 3] = 1.0;
        let img = Image::new(15, 15, data).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        let red: f32 = out.data().iter().step_by(3).sum();
        assert!((red - 1.0).abs() < 1e-5);
        assert!(out.get(7, 7, 0) > out.get(7, 8, 0));
    }
}
