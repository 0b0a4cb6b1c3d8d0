//! Reverse-mode differentiation over a recorded sequence of layer ops.
//!
//! Every op appends a node holding its output value plus whatever it needs
//! for the backward pass (im2col buffers for convolutions). `backward`
//! walks the nodes in reverse, accumulating parameter gradients into a
//! caller-provided buffer and returning the gradient of every node that
//! requires one.

use super::{Params, Real};
use crate::{Error, Result};

/// Channel-major activation tensor `(C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![T::zero(); c * h * w] }
    }

    pub fn new(c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::Structural(format!(
                "tensor data length {} != {c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

pub type NodeId = usize;

#[derive(Debug)]
enum Op<T> {
    Input,
    Conv {
        x: NodeId,
        weight: usize,
        bias: usize,
        k: usize,
        stride: usize,
        pad: usize,
        /// im2col of the input; `None` for 1x1 stride-1 unpadded kernels,
        /// whose columns are the input itself.
        cols: Option<Vec<T>>,
    },
    Relu {
        x: NodeId,
    },
    Upsample2x {
        x: NodeId,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape<'p, T> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
}

/// Half-pixel-centred bilinear taps for an exact 2x upsample.
/// Each entry is `(i0, i1, 1 - t, t)`.
fn upsample_taps<T: Real>(src: usize) -> Vec<(usize, usize, T, T)> {
    (0..2 * src)
        .map(|i| {
            let pos = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let t = T::from_f64(pos - i0 as f64);
            (i0, (i0 + 1).min(src - 1), T::one() - t, t)
        })
        .collect()
}

pub(crate) fn conv_out_dim(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// Output columns `ox` whose input column `ox * stride + kx - pad` lies in `0..w`.
fn valid_cols(w: usize, ow: usize, kx: usize, stride: usize, pad: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(kx).div_ceil(stride);
    let hi = if w + pad > kx { (w + pad - kx).div_ceil(stride).min(ow) } else { 0 };
    lo..hi.max(lo)
}

fn im2col<T: Real>(x: &Tensor<T>, k: usize, stride: usize, pad: usize, oh: usize, ow: usize) -> Vec<T> {
    let p = oh * ow;
    let mut cols = vec![T::zero(); x.c * k * k * p];
    for c in 0..x.c {
        let plane = &x.data[c * x.plane()..(c + 1) * x.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                let valid = valid_cols(x.w, ow, kx, stride, pad);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * x.w..][..x.w];
                    let dst = &mut row[oy * ow..][..ow];
                    if stride == 1 {
                        let off = valid.start + kx - pad;
                        dst[valid.clone()].copy_from_slice(&src[off..off + valid.len()]);
                    } else {
                        for ox in valid.clone() {
                            dst[ox] = src[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    dx: &mut Tensor<T>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let p = oh * ow;
    let (h, w) = (dx.h, dx.w);
    for c in 0..dx.c {
        let plane = &mut dx.data[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                let valid = valid_cols(w, ow, kx, stride, pad);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    let src = &row[oy * ow..][..ow];
                    for ox in valid.clone() {
                        dst[ox * stride + kx - pad] += src[ox];
                    }
                }
            }
        }
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p Params<T> {
        self.params
    }

    pub fn input(&mut self, value: Tensor<T>, needs_grad: bool) -> NodeId {
        self.push(Op::Input, value, needs_grad)
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    /// Square-kernel convolution with weight `(O, C, k, k)` and bias `(O)`.
    pub fn conv2d(&mut self, x: NodeId, weight: usize, bias: usize, stride: usize, pad: usize) -> Result<NodeId> {
        let wt = self.params.get(weight);
        let bt = self.params.get(bias);
        let input = &self.nodes[x].value;
        let &[o, c, k, k2] = wt.shape.as_slice() else {
            return Err(Error::Structural(format!("conv weight `{}` must be rank 4", wt.name)));
        };
        if k != k2 || c != input.c || bt.shape != [o] || stride == 0 {
            return Err(Error::Structural(format!(
                "conv `{}` {:?} incompatible with input channels {}",
                wt.name, wt.shape, input.c
            )));
        }
        let (oh, ow) = match (conv_out_dim(input.h, k, stride, pad), conv_out_dim(input.w, k, stride, pad)) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => return Err(Error::Structural("conv output would be empty".into())),
        };
        let p = oh * ow;
        let direct = k == 1 && stride == 1 && pad == 0;
        let cols = if direct { None } else { Some(im2col(input, k, stride, pad, oh, ow)) };
        let mut out = vec![T::zero(); o * p];
        for (oc, row) in out.chunks_exact_mut(p).enumerate() {
            row.fill(bt.data[oc]);
        }
        let b = cols.as_deref().unwrap_or(&input.data);
        T::gemm(o, c * k * k, p, &wt.data, false, b, false, T::one(), &mut out);
        let value = Tensor { c: o, h: oh, w: ow, data: out };
        Ok(self.push(Op::Conv { x, weight, bias, k, stride, pad, cols }, value, true))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let input = &self.nodes[x].value;
        let data = input.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let value = Tensor { c: input.c, h: input.h, w: input.w, data };
        let needs = self.nodes[x].needs_grad;
        self.push(Op::Relu { x }, value, needs)
    }

    /// Bilinear 2x upsample with half-pixel centres.
    pub fn upsample2x(&mut self, x: NodeId) -> NodeId {
        let input = &self.nodes[x].value;
        let (ty, tx) = (upsample_taps::<T>(input.h), upsample_taps::<T>(input.w));
        let (oh, ow) = (2 * input.h, 2 * input.w);
        let mut data = vec![T::zero(); input.c * oh * ow];
        for c in 0..input.c {
            let src = &input.data[c * input.plane()..(c + 1) * input.plane()];
            let dst = &mut data[c * oh * ow..(c + 1) * oh * ow];
            for (&(y0, y1, vy, wy), drow) in ty.iter().zip(dst.chunks_exact_mut(ow)) {
                let (r0, r1) = (&src[y0 * input.w..][..input.w], &src[y1 * input.w..][..input.w]);
                for (&(x0, x1, vx, wx), d) in tx.iter().zip(drow) {
                    let top = vx * r0[x0] + wx * r0[x1];
                    let bot = vx * r1[x0] + wx * r1[x1];
                    *d = vy * top + wy * bot;
                }
            }
        }
        let value = Tensor { c: input.c, h: oh, w: ow, data };
        let needs = self.nodes[x].needs_grad;
        self.push(Op::Upsample2x { x }, value, needs)
    }

    /// Propagate `seed` (the gradient of the scalar objective with respect to
    /// node `out`) back through the tape. Parameter gradients are added into
    /// `param_grads`; the returned vector holds the gradient of every node
    /// that needed one.
    pub fn backward(&self, out: NodeId, seed: Tensor<T>, param_grads: &mut Params<T>) -> Result<Vec<Option<Tensor<T>>>> {
        param_grads.check_layout(self.params)?;
        let v = &self.nodes[out].value;
        if (seed.c, seed.h, seed.w) != (v.c, v.h, v.w) {
            return Err(Error::Structural("seed gradient shape differs from output".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(seed);
        for id in (0..=out).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Relu { x } => {
                    if self.nodes[*x].needs_grad {
                        let xv = &self.nodes[*x].value;
                        let mut d = g.clone();
                        for (dv, &xval) in d.data.iter_mut().zip(&xv.data) {
                            if !(xval > T::zero()) {
                                *dv = T::zero();
                            }
                        }
                        accumulate(&mut grads[*x], d);
                    }
                }
                Op::Upsample2x { x } => {
                    if self.nodes[*x].needs_grad {
                        let xv = &self.nodes[*x].value;
                        let mut d = Tensor::zeros(xv.c, xv.h, xv.w);
                        let (ty, tx) = (upsample_taps::<T>(xv.h), upsample_taps::<T>(xv.w));
                        let (oh, ow) = (g.h, g.w);
                        for c in 0..xv.c {
                            let src = &g.data[c * oh * ow..(c + 1) * oh * ow];
                            let dst = &mut d.data[c * xv.plane()..(c + 1) * xv.plane()];
                            for (oy, &(y0, y1, vy, wy)) in ty.iter().enumerate() {
                                let grow = &src[oy * ow..][..ow];
                                for (&(x0, x1, vx, wx), &gv) in tx.iter().zip(grow) {
                                    let top = vy * gv;
                                    let bot = wy * gv;
                                    dst[y0 * xv.w + x0] += vx * top;
                                    dst[y0 * xv.w + x1] += wx * top;
                                    dst[y1 * xv.w + x0] += vx * bot;
                                    dst[y1 * xv.w + x1] += wx * bot;
                                }
                            }
                        }
                        accumulate(&mut grads[*x], d);
                    }
                }
                Op::Conv { x, weight, bias, k, stride, pad, cols } => {
                    let xv = &self.nodes[*x].value;
                    let (o, p) = (g.c, g.plane());
                    let ckk = xv.c * k * k;
                    let b = cols.as_deref().unwrap_or(&xv.data);
                    T::gemm(o, p, ckk, &g.data, false, b, true, T::one(), &mut param_grads.get_mut(*weight).data);
                    let db = &mut param_grads.get_mut(*bias).data;
                    for (oc, row) in g.data.chunks_exact(p).enumerate() {
                        db[oc] += row.iter().copied().sum::<T>();
                    }
                    if self.nodes[*x].needs_grad {
                        let wt = &self.params.get(*weight).data;
                        let mut dcols = vec![T::zero(); ckk * p];
                        T::gemm(ckk, o, p, wt, true, &g.data, false, T::zero(), &mut dcols);
                        let d = if cols.is_none() {
                            Tensor { c: xv.c, h: xv.h, w: xv.w, data: dcols }
                        } else {
                            let mut d = Tensor::zeros(xv.c, xv.h, xv.w);
                            col2im(&dcols, &mut d, *k, *stride, *pad, g.h, g.w);
                            d
                        };
                        accumulate(&mut grads[*x], d);
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, d: Tensor<T>) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data.iter_mut().zip(d.data) {
                *a += b;
            }
        }
        None => *slot = Some(d),
    }
}
