//! Weak geometric augmentation: random scale, horizontal flip and crop,
//! applied jointly to an image and its label mask.
//!
//! Composition order is scale, then flip, then crop. Images resample
//! bilinearly (half-pixel centers), labels by nearest neighbour. Crop
//! padding is `0.0` for images and [`IGNORE`] for labels, placed below and
//! to the right of the source.

use serde::{Deserialize, Serialize};

use crate::raster::{Image, LabelMask, IGNORE};
use crate::{Error, Result, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    pub scale_range: [f64; 2],
    pub flip_prob: f64,
    pub crop_h: usize,
    pub crop_w: usize,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            scale_range: [0.5, 2.0],
            flip_prob: 0.5,
            crop_h: 64,
            crop_w: 64,
        }
    }
}

impl GeoConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("scale_range [{lo}, {hi}] is invalid")));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        if self.crop_h == 0 || self.crop_w == 0 {
            return Err(Error::Config("crop dims must be >= 1".into()));
        }
        Ok(())
    }
}

/// The random draws behind one weak view, kept for logging and for
/// reconstructing which output pixels came from the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakParams {
    pub scale: f64,
    pub scaled_h: usize,
    pub scaled_w: usize,
    pub flipped: bool,
    pub crop_top: usize,
    pub crop_left: usize,
    pub crop_h: usize,
    pub crop_w: usize,
}

impl WeakParams {
    /// Row-major flags marking output pixels that carry source content
    /// rather than crop padding.
    pub fn content_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.crop_h * self.crop_w);
        for i in 0..self.crop_h {
            for j in 0..self.crop_w {
                out.push(self.crop_top + i < self.scaled_h && self.crop_left + j < self.scaled_w);
            }
        }
        out
    }
}

fn check_pair(img: &Image, lbl: &LabelMask) -> Result<()> {
    if img.dims() != lbl.dims() {
        return Err(Error::Structural(format!(
            "image {:?} and label {:?} differ in size",
            img.dims(),
            lbl.dims()
        )));
    }
    Ok(())
}

/// Per-axis sample positions for half-pixel-centred bilinear resampling.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (pos - i0 as f64) as f32)
        })
        .collect()
}

fn nearest_taps(src: usize, dst: usize) -> Vec<usize> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| (((i as f64 + 0.5) * ratio).floor() as usize).min(src - 1))
        .collect()
}

/// Resize both rasters to `out_h x out_w`.
pub fn resize(img: &Image, lbl: &LabelMask, out_h: usize, out_w: usize) -> Result<(Image, LabelMask)> {
    check_pair(img, lbl)?;
    let (h, w) = img.dims();
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::Structural(format!("cannot resize {h}x{w} to {out_h}x{out_w}")));
    }
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let src = img.data();
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for &(y0, y1, wy) in &ty {
        for &(x0, x1, wx) in &tx {
            for c in 0..3 {
                let a = src[(y0 * w + x0) * 3 + c];
                let b = src[(y0 * w + x1) * 3 + c];
                let d = src[(y1 * w + x0) * 3 + c];
                let e = src[(y1 * w + x1) * 3 + c];
                let top = (1.0 - wx) * a + wx * b;
                let bot = (1.0 - wx) * d + wx * e;
                data.push((1.0 - wy) * top + wy * bot);
            }
        }
    }
    let ny = nearest_taps(h, out_h);
    let nx = nearest_taps(w, out_w);
    let mut ldata = Vec::with_capacity(out_h * out_w);
    for &sy in &ny {
        for &sx in &nx {
            ldata.push(lbl.get(sy, sx));
        }
    }
    Ok((Image::from_clamped(out_h, out_w, data), LabelMask::new(out_h, out_w, ldata)?))
}

/// Output dims for scale factor `f`.
pub fn scaled_dims(h: usize, w: usize, f: f64) -> (usize, usize) {
    ((f * h as f64).round() as usize, (f * w as f64).round() as usize)
}

pub fn scale_by(img: &Image, lbl: &LabelMask, f: f64) -> Result<(Image, LabelMask)> {
    let (oh, ow) = scaled_dims(img.height(), img.width(), f);
    resize(img, lbl, oh, ow)
}

pub fn random_scale(
    img: &Image,
    lbl: &LabelMask,
    s: &mut RngStream,
    cfg: &GeoConfig,
) -> Result<(Image, LabelMask)> {
    let f = s.uniform(cfg.scale_range[0], cfg.scale_range[1])?;
    scale_by(img, lbl, f)
}

/// Mirror along the width axis.
pub fn hflip(img: &Image, lbl: &LabelMask) -> (Image, LabelMask) {
    let (h, w) = img.dims();
    let src = img.data();
    let mut data = Vec::with_capacity(src.len());
    let mut ldata = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in (0..w).rev() {
            let i = (y * w + x) * 3;
            data.extend_from_slice(&src[i..i + 3]);
            ldata.push(lbl.get(y, x));
        }
    }
    (
        Image::from_clamped(h, w, data),
        LabelMask::new(h, w, ldata).expect("same dims"),
    )
}

pub fn random_hflip(
    img: &Image,
    lbl: &LabelMask,
    s: &mut RngStream,
    cfg: &GeoConfig,
) -> Result<(Image, LabelMask)> {
    check_pair(img, lbl)?;
    if s.bernoulli(cfg.flip_prob) {
        Ok(hflip(img, lbl))
    } else {
        Ok((img.clone(), lbl.clone()))
    }
}

/// Pad (if needed) and cut a `crop_h x crop_w` window at `(top, left)` of the
/// padded canvas.
pub fn crop_at(
    img: &Image,
    lbl: &LabelMask,
    top: usize,
    left: usize,
    crop_h: usize,
    crop_w: usize,
) -> Result<(Image, LabelMask)> {
    check_pair(img, lbl)?;
    let (h, w) = img.dims();
    let (ph, pw) = (h.max(crop_h), w.max(crop_w));
    if top + crop_h > ph || left + crop_w > pw {
        return Err(Error::Argument(format!(
            "crop {crop_h}x{crop_w} at ({top}, {left}) exceeds canvas {ph}x{pw}"
        )));
    }
    let src = img.data();
    let mut data = vec![0.0f32; crop_h * crop_w * 3];
    let mut ldata = vec![IGNORE; crop_h * crop_w];
    for i in 0..crop_h {
        let sy = top + i;
        if sy >= h {
            break;
        }
        for j in 0..crop_w {
            let sx = left + j;
            if sx >= w {
                break;
            }
            let o = i * crop_w + j;
            data[o * 3..o * 3 + 3].copy_from_slice(&src[(sy * w + sx) * 3..(sy * w + sx) * 3 + 3]);
            ldata[o] = lbl.get(sy, sx);
        }
    }
    Ok((Image::from_clamped(crop_h, crop_w, data), LabelMask::new(crop_h, crop_w, ldata)?))
}

fn draw_origin(s: &mut RngStream, h: usize, w: usize, cfg: &GeoConfig) -> Result<(usize, usize)> {
    let top = s.uniform_int(0, (h.max(cfg.crop_h) - cfg.crop_h) as i64)? as usize;
    let left = s.uniform_int(0, (w.max(cfg.crop_w) - cfg.crop_w) as i64)? as usize;
    Ok((top, left))
}

pub fn random_crop(
    img: &Image,
    lbl: &LabelMask,
    s: &mut RngStream,
    cfg: &GeoConfig,
) -> Result<(Image, LabelMask)> {
    let (top, left) = draw_origin(s, img.height(), img.width(), cfg)?;
    crop_at(img, lbl, top, left, cfg.crop_h, cfg.crop_w)
}

/// Scale, flip, crop. The three steps draw from `s` in that order.
pub fn apply_weak(
    img: &Image,
    lbl: &LabelMask,
    s: &mut RngStream,
    cfg: &GeoConfig,
) -> Result<(Image, LabelMask, WeakParams)> {
    check_pair(img, lbl)?;
    let f = s.uniform(cfg.scale_range[0], cfg.scale_range[1])?;
    let (si, sl) = scale_by(img, lbl, f)?;
    let flipped = s.bernoulli(cfg.flip_prob);
    let (fi, fl) = if flipped { hflip(&si, &sl) } else { (si, sl) };
    let (top, left) = draw_origin(s, fi.height(), fi.width(), cfg)?;
    let (ci, cl) = crop_at(&fi, &fl, top, left, cfg.crop_h, cfg.crop_w)?;
    let params = WeakParams {
        scale: f,
        scaled_h: fi.height(),
        scaled_w: fi.width(),
        flipped,
        crop_top: top,
        crop_left: left,
        crop_h: cfg.crop_h,
        crop_w: cfg.crop_w,
    };
    Ok((ci, cl, params))
}
