//! Random filled shapes and their exact rasterization.

use serde::{Deserialize, Serialize};

use crate::{Result, RngStream};

pub const BACKGROUND: u8 = 0;
pub const CIRCLE: u8 = 1;
pub const RECTANGLE: u8 = 2;
pub const TRIANGLE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Circle { cx: f64, cy: f64, r: f64 },
    Rectangle { cx: f64, cy: f64, half_w: f64, half_h: f64 },
    Triangle { vertices: [[f64; 2]; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub geometry: Geometry,
    pub color: [f32; 3],
}

impl Shape {
    pub fn class(&self) -> u8 {
        match self.geometry {
            Geometry::Circle { .. } => CIRCLE,
            Geometry::Rectangle { .. } => RECTANGLE,
            Geometry::Triangle { .. } => TRIANGLE,
        }
    }

    /// Whether the point `(x, y)` in pixel coordinates lies inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self.geometry {
            Geometry::Circle { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Geometry::Rectangle { cx, cy, half_w, half_h } => (x - cx).abs() <= half_w && (y - cy).abs() <= half_h,
            Geometry::Triangle { vertices: [a, b, c] } => {
                let edge = |p: [f64; 2], q: [f64; 2]| (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
                let (d0, d1, d2) = (edge(a, b), edge(b, c), edge(c, a));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }
}

/// Size ranges of the generated shapes, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    pub circle_radius: [f64; 2],
    pub rect_side: [f64; 2],
    pub triangle_radius: [f64; 2],
    pub max_shapes: usize,
    /// HSV saturation and value ranges of background colours.
    pub background_saturation: [f64; 2],
    pub background_value: [f64; 2],
    /// HSV saturation and value ranges of shape colours.
    pub shape_saturation: [f64; 2],
    pub shape_value: [f64; 2],
    /// Minimum Euclidean RGB distance between a shape and the background.
    pub min_contrast: f64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            circle_radius: [5.0, 11.0],
            rect_side: [8.0, 20.0],
            triangle_radius: [6.0, 13.0],
            max_shapes: 3,
            background_saturation: [0.0, 0.6],
            background_value: [0.0, 0.45],
            shape_saturation: [0.3, 1.0],
            shape_value: [0.6, 1.0],
            min_contrast: 0.3,
        }
    }
}

/// Uniform hue with saturation and value drawn from the given ranges.
pub(crate) fn random_color(s: &mut RngStream, sat: [f64; 2], val: [f64; 2]) -> Result<[f32; 3]> {
    let h = s.next_f64() as f32;
    let sv = s.uniform(sat[0], sat[1])? as f32;
    let v = s.uniform(val[0], val[1])? as f32;
    Ok(crate::intensity::kernels::hsv_to_rgb([h, sv, v]))
}

pub(crate) fn random_background(s: &mut RngStream, cfg: &ShapeConfig) -> Result<[f32; 3]> {
    random_color(s, cfg.background_saturation, cfg.background_value)
}

fn distance(a: [f32; 3], b: [f32; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

/// Draw one shape of a random class whose centre lies inside `size x size`.
pub fn random_shape(s: &mut RngStream, size: usize, background: [f32; 3], cfg: &ShapeConfig) -> Result<Shape> {
    let n = size as f64;
    let class = 1 + s.below(3) as u8;
    let (cx, cy) = (s.uniform(0.15 * n, 0.85 * n)?, s.uniform(0.15 * n, 0.85 * n)?);
    let geometry = match class {
        CIRCLE => Geometry::Circle { cx, cy, r: s.uniform(cfg.circle_radius[0], cfg.circle_radius[1])? },
        RECTANGLE => Geometry::Rectangle {
            cx,
            cy,
            half_w: s.uniform(cfg.rect_side[0], cfg.rect_side[1])? / 2.0,
            half_h: s.uniform(cfg.rect_side[0], cfg.rect_side[1])? / 2.0,
        },
        _ => {
            let r = s.uniform(cfg.triangle_radius[0], cfg.triangle_radius[1])?;
            let theta = s.uniform(0.0, std::f64::consts::TAU)?;
            let v = |k: f64| {
                let a = theta + k * std::f64::consts::TAU / 3.0;
                [cx + r * a.cos(), cy + r * a.sin()]
            };
            Geometry::Triangle { vertices: [v(0.0), v(1.0), v(2.0)] }
        }
    };
    let draw = |s: &mut RngStream| random_color(s, cfg.shape_saturation, cfg.shape_value);
    let mut color = draw(s)?;
    // bounded rejection, then the opposite corner of the colour cube
    for _ in 0..64 {
        if distance(color, background) >= cfg.min_contrast {
            break;
        }
        color = draw(s)?;
    }
    if distance(color, background) < cfg.min_contrast {
        color = background.map(|v| if v < 0.5 { 1.0 } else { 0.0 });
    }
    Ok(Shape { geometry, color })
}

/// Label of every pixel centre; later shapes win.
pub fn rasterize(shapes: &[Shape], h: usize, w: usize) -> Vec<u8> {
    let mut labels = vec![BACKGROUND; h * w];
    for shape in shapes {
        for y in 0..h {
            for x in 0..w {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels[y * w + x] = shape.class();
                }
            }
        }
    }
    labels
}
