use super::loss::{softmax, softmax_ce};
use super::tape::{NodeId, Tape, Tensor};
use super::{NamedTensor, Params, Real};
use crate::raster::{Image, LabelMask, ProbMap};
use crate::{Error, Result, RngStream};

/// The fixed segmentation network:
///
/// ```text
/// conv3x3(3->16) + ReLU
/// conv3x3(16->32, stride 2) + ReLU
/// conv3x3(32->32) + ReLU
/// bilinear upsample x2
/// conv1x1(32->N)
/// softmax over N
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetSpec {
    pub num_classes: usize,
}

// (name, out, in, kernel)
const LAYERS: [(&str, usize, usize, usize); 3] = [("conv1", 16, 3, 3), ("conv2", 32, 16, 3), ("conv3", 32, 32, 3)];
const HEAD_IN: usize = 32;

/// Recorded forward pass of one image.
#[derive(Debug)]
pub struct Forward<'p, T> {
    tape: Tape<'p, T>,
    logits: NodeId,
    probs: Vec<T>,
}

impl<'p, T: Real> Forward<'p, T> {
    pub fn tape(&self) -> &Tape<'p, T> {
        &self.tape
    }

    pub fn logits(&self) -> &Tensor<T> {
        self.tape.value(self.logits)
    }

    pub fn prob_map(&self) -> ProbMap {
        let l = self.logits();
        probs_to_map(&self.probs, l.c, l.h, l.w)
    }
}

fn probs_to_map<T: Real>(probs: &[T], n: usize, h: usize, w: usize) -> ProbMap {
    let p = h * w;
    let mut data = Vec::with_capacity(probs.len());
    for j in 0..p {
        let px: Vec<f64> = (0..n).map(|c| probs[c * p + j].as_f64()).collect();
        let sum: f64 = px.iter().sum();
        data.extend(px.iter().map(|v| v / sum));
    }
    ProbMap::new(h, w, n, data).expect("softmax output is a distribution")
}

/// Interleaved HWC image to a channel-major tensor.
pub fn image_tensor<T: Real>(img: &Image) -> Tensor<T> {
    let (h, w) = img.dims();
    let mut data = vec![T::zero(); 3 * h * w];
    for (j, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + j] = T::from_f64(px[c] as f64 - 0.5);
        }
    }
    Tensor { c: 3, h, w, data }
}

impl NetSpec {
    pub fn new(num_classes: usize) -> Result<Self> {
        if !(2..255).contains(&num_classes) {
            return Err(Error::Argument(format!("num_classes {num_classes} outside 2..255")));
        }
        Ok(Self { num_classes })
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, o, i, k) in LAYERS {
            out.push((format!("{name}.weight"), vec![o, i, k, k]));
            out.push((format!("{name}.bias"), vec![o]));
        }
        out.push(("head.weight".into(), vec![self.num_classes, HEAD_IN, 1, 1]));
        out.push(("head.bias".into(), vec![self.num_classes]));
        out
    }

    pub fn zeros<T: Real>(&self) -> Params<T> {
        let tensors = self.layout().into_iter().map(|(n, s)| NamedTensor::zeros(n, s)).collect();
        Params::new(tensors).expect("layout is consistent")
    }

    /// Weights `U[-a, a]` with `a = sqrt(1 / fan_in)`, biases zero.
    pub fn init<T: Real>(&self, s: &mut RngStream) -> Params<T> {
        let mut params = self.zeros::<T>();
        for t in params.tensors_mut() {
            if t.shape.len() == 4 {
                let fan_in = (t.shape[1] * t.shape[2] * t.shape[3]) as f64;
                let a = (1.0 / fan_in).sqrt();
                for v in &mut t.data {
                    *v = T::from_f64(s.uniform(-a, a).expect("a > 0"));
                }
            }
        }
        params
    }

    pub fn check_params<T: Real>(&self, params: &Params<T>) -> Result<()> {
        params.check_layout(&self.zeros::<T>())
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        let (h, w) = img.dims();
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Argument(format!("input {h}x{w} must have even dims >= 2")));
        }
        Ok(())
    }

    /// Forward pass recording everything needed for backpropagation.
    pub fn forward<'p, T: Real>(&self, params: &'p Params<T>, img: &Image) -> Result<Forward<'p, T>> {
        self.check_input(img)?;
        self.check_params(params)?;
        let mut tape = Tape::new(params);
        let x = tape.input(image_tensor(img), false);
        let h = tape.conv2d(x, 0, 1, 1, 1)?;
        let h = tape.relu(h);
        let h = tape.conv2d(h, 2, 3, 2, 1)?;
        let h = tape.relu(h);
        let h = tape.conv2d(h, 4, 5, 1, 1)?;
        let h = tape.relu(h);
        let h = tape.upsample2x(h);
        let logits = tape.conv2d(h, 6, 7, 1, 0)?;
        let probs = softmax(tape.value(logits));
        Ok(Forward { tape, logits, probs })
    }

    pub fn predict<T: Real>(&self, params: &Params<T>, img: &Image) -> Result<ProbMap> {
        Ok(self.forward(params, img)?.prob_map())
    }

    /// Add `weight * d(sum CE over valid pixels) / d params` into `grads`
    /// and return the unweighted loss sum.
    pub fn accumulate_ce<T: Real>(
        &self,
        fwd: &Forward<'_, T>,
        target: &LabelMask,
        weight: f64,
        grads: &mut Params<T>,
    ) -> Result<f64> {
        let (sum, dlogits) = softmax_ce(fwd.logits(), target, weight)?;
        fwd.tape.backward(fwd.logits, dlogits, grads)?;
        Ok(sum)
    }

    /// Mean CE over the valid pixels of `target` and its parameter gradient.
    /// An all-IGNORE target yields zero loss and zero gradient.
    pub fn ce_loss_and_grad<T: Real>(&self, fwd: &Forward<'_, T>, target: &LabelMask) -> Result<(f64, Params<T>)> {
        let mut grads = Params::zeros_like(fwd.tape.params());
        let count = target.valid_count();
        if count == 0 {
            target.validate(self.num_classes)?;
            return Ok((0.0, grads));
        }
        let sum = self.accumulate_ce(fwd, target, 1.0 / count as f64, &mut grads)?;
        Ok((sum / count as f64, grads))
    }

    /// Cross-entropy pooled over every valid pixel of a batch: the mean is
    /// taken over the total valid count, not per image.
    pub fn batch_ce<T: Real>(
        &self,
        params: &Params<T>,
        samples: &[(&Image, &LabelMask)],
        scale: f64,
        grads: &mut Params<T>,
    ) -> Result<f64> {
        let count: usize = samples.iter().map(|(_, t)| t.valid_count()).sum();
        if count == 0 {
            return Ok(0.0);
        }
        let weight = scale / count as f64;
        let mut sum = 0.0;
        for (img, target) in samples {
            if target.valid_count() == 0 {
                continue;
            }
            let fwd = self.forward(params, img)?;
            sum += self.accumulate_ce(&fwd, target, weight, grads)?;
        }
        Ok(sum / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::IGNORE;

    fn rand_image(s: &mut RngStream, h: usize, w: usize) -> Image {
        Image::new(h, w, (0..h * w * 3).map(|_| s.next_f64() as f32).collect()).unwrap()
    }

    fn rand_labels(s: &mut RngStream, h: usize, w: usize, n: usize) -> LabelMask {
        let data = (0..h * w)
            .map(|_| if s.bernoulli(0.15) { IGNORE } else { s.below(n) as u8 })
            .collect();
        LabelMask::new(h, w, data).unwrap()
    }

    #[test]
    fn zero_params_predict_uniform() {
        let net = NetSpec::new(4).unwrap();
        let mut s = RngStream::new(1);
        let img = rand_image(&mut s, 8, 6);
        let p = net.predict(&net.zeros::<f32>(), &img).unwrap();
        assert_eq!((p.height(), p.width()), (8, 6));
        for j in 0..48 {
            assert!(p.at(j).iter().all(|&v| (v - 0.25).abs() < 1e-7));
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let net = NetSpec::new(4).unwrap();
        let params = net.init::<f32>(&mut RngStream::new(9));
        let img = rand_image(&mut RngStream::new(2), 16, 16);
        assert_eq!(net.predict(&params, &img).unwrap(), net.predict(&params, &img).unwrap());
    }

    #[test]
    fn init_is_bounded_and_biases_zero() {
        let net = NetSpec::new(3).unwrap();
        let p = net.init::<f64>(&mut RngStream::new(4));
        for t in p.tensors() {
            if t.shape.len() == 4 {
                let a = (1.0 / (t.shape[1] * t.shape[2] * t.shape[3]) as f64).sqrt();
                assert!(t.data.iter().all(|v| v.abs() <= a));
            } else {
                assert!(t.data.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = NetSpec::new(4).unwrap();
        let p = net.zeros::<f32>();
        assert!(net.predict(&p, &Image::filled(5, 4, [0.0; 3]).unwrap()).is_err());
        assert!(matches!(net.predict(&NetSpec::new(3).unwrap().zeros::<f32>(), &Image::filled(4, 4, [0.0; 3]).unwrap()), Err(Error::Structural(_))));
        assert!(NetSpec::new(1).is_err());
    }

    fn loss_of(net: &NetSpec, p: &Params<f64>, img: &Image, t: &LabelMask) -> f64 {
        net.ce_loss_and_grad(&net.forward(p, img).unwrap(), t).unwrap().0
    }

    #[test]
    fn composed_loss_gradient_matches_finite_differences() {
        let net = NetSpec::new(4).unwrap();
        let mut s = RngStream::new(21);
        let mut params = net.init::<f64>(&mut s);
        for t in params.tensors_mut() {
            if t.shape.len() == 1 {
                for v in &mut t.data {
                    *v = s.uniform(-0.1, 0.1).unwrap();
                }
            }
        }
        let img = rand_image(&mut s, 8, 8);
        let target = rand_labels(&mut s, 8, 8, 4);
        let (_, grads) = net.ce_loss_and_grad(&net.forward(&params, &img).unwrap(), &target).unwrap();
        let h = 1e-6;
        for ti in 0..params.len() {
            let n = params.get(ti).data.len();
            for _ in 0..12 {
                let i = s.below(n);
                let (mut a, mut b) = (params.clone(), params.clone());
                a.get_mut(ti).data[i] += h;
                b.get_mut(ti).data[i] -= h;
                let fd = (loss_of(&net, &a, &img, &target) - loss_of(&net, &b, &img, &target)) / (2.0 * h);
                let an = grads.get(ti).data[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-4, "{}[{i}]: fd {fd} analytic {an}", params.get(ti).name);
            }
        }
    }

    #[test]
    fn ignore_pixels_do_not_affect_loss_or_grads() {
        let net = NetSpec::new(4).unwrap();
        let mut s = RngStream::new(5);
        let params = net.init::<f64>(&mut s);
        let img = rand_image(&mut s, 8, 8);
        let mut target = rand_labels(&mut s, 8, 8, 4);
        target.data_mut()[0] = IGNORE;
        let fwd = net.forward(&params, &img).unwrap();
        let (l0, g0) = net.ce_loss_and_grad(&fwd, &target).unwrap();
        // pixel 0 logits perturbed via a seed that only touches IGNORE pixels
        let (_, d) = softmax_ce(fwd.logits(), &target, 1.0).unwrap();
        for c in 0..4 {
            assert_eq!(d.data[c * 64], 0.0);
        }
        let (l1, g1) = net.ce_loss_and_grad(&net.forward(&params, &img).unwrap(), &target).unwrap();
        assert_eq!(l0, l1);
        assert_eq!(g0, g1);
        let all_ignore = LabelMask::filled(8, 8, IGNORE);
        let (l, g) = net.ce_loss_and_grad(&fwd, &all_ignore).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values().all(|v| v == 0.0));
    }

    #[test]
    fn batch_ce_pools_over_all_valid_pixels() {
        let net = NetSpec::new(4).unwrap();
        let mut s = RngStream::new(8);
        let params = net.init::<f64>(&mut s);
        let imgs: Vec<Image> = (0..2).map(|_| rand_image(&mut s, 8, 8)).collect();
        let mut t0 = rand_labels(&mut s, 8, 8, 4);
        t0.data_mut()[..40].fill(IGNORE);
        let t1 = rand_labels(&mut s, 8, 8, 4);
        let total = (t0.valid_count() + t1.valid_count()) as f64;
        let mut grads = Params::zeros_like(&params);
        let mean = net.batch_ce(&params, &[(&imgs[0], &t0), (&imgs[1], &t1)], 2.0, &mut grads).unwrap();
        let (m0, g0) = net.ce_loss_and_grad(&net.forward(&params, &imgs[0]).unwrap(), &t0).unwrap();
        let (m1, g1) = net.ce_loss_and_grad(&net.forward(&params, &imgs[1]).unwrap(), &t1).unwrap();
        let (w0, w1) = (t0.valid_count() as f64 / total, t1.valid_count() as f64 / total);
        assert!((mean - (w0 * m0 + w1 * m1)).abs() < 1e-12);
        for ((g, a), b) in grads.values().zip(g0.values()).zip(g1.values()) {
            assert!((g - 2.0 * (w0 * a + w1 * b)).abs() < 1e-12);
        }
    }
}
