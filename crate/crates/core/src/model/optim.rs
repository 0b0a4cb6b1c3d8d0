use serde::{Deserialize, Serialize};

use super::{Params, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub poly_power: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { base_lr: 0.01, momentum: 0.9, poly_power: 0.9 }
    }
}

/// SGD with heavy-ball momentum and polynomial learning-rate decay.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub velocity: Params<T>,
    pub config: SgdConfig,
    pub iter: u64,
    pub max_iter: u64,
}

impl<T: Real> OptimState<T> {
    pub fn new(params: &Params<T>, config: SgdConfig, max_iter: u64) -> Self {
        Self { velocity: Params::zeros_like(params), config, iter: 0, max_iter }
    }

    pub fn with_iter(mut self, iter: u64) -> Result<Self> {
        if iter > self.max_iter {
            return Err(Error::State(format!("iter {iter} > max_iter {}", self.max_iter)));
        }
        self.iter = iter;
        Ok(self)
    }

    /// `base_lr * (1 - iter / max_iter) ^ poly_power`.
    pub fn lr_at(&self, iter: u64) -> f64 {
        if self.max_iter == 0 {
            return 0.0;
        }
        let frac = 1.0 - iter as f64 / self.max_iter as f64;
        self.config.base_lr * frac.max(0.0).powf(self.config.poly_power)
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.iter)
    }
}

/// `v <- momentum * v + g; p <- p - lr * v; iter += 1`. Returns the rate used.
pub fn sgd_step<T: Real>(params: &mut Params<T>, grads: &Params<T>, opt: &mut OptimState<T>) -> Result<f64> {
    if opt.iter >= opt.max_iter {
        return Err(Error::State(format!(
            "no optimizer steps left: iter {} of {}",
            opt.iter, opt.max_iter
        )));
    }
    params.check_layout(grads)?;
    params.check_layout(&opt.velocity)?;
    let lr = opt.lr();
    let (lr_t, mu) = (T::from_f64(lr), T::from_f64(opt.config.momentum));
    for ((p, g), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(opt.velocity.tensors_mut())
    {
        for ((pv, &gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
            *vv = mu * *vv + gv;
            *pv -= lr_t * *vv;
        }
    }
    opt.iter += 1;
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NamedTensor;

    fn scalar(v: f64) -> Params<f64> {
        Params::new(vec![NamedTensor { name: "x".into(), shape: vec![1], data: vec![v] }]).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let p = scalar(0.0);
        let opt = OptimState::new(&p, SgdConfig::default(), 100);
        assert_eq!(opt.lr_at(0), 0.01);
        assert_eq!(opt.lr_at(100), 0.0);
        assert!((opt.lr_at(50) - 0.01 * 0.5f64.powf(0.9)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_on_quadratic_match_hand_recursion() {
        // f(x) = 0.5 * a * x^2, g = a * x
        let a = 3.0;
        let mut p = scalar(2.0);
        let mut opt = OptimState::new(&p, SgdConfig::default(), 10);
        for _ in 0..2 {
            let g = scalar(a * p.get(0).data[0]);
            sgd_step(&mut p, &g, &mut opt).unwrap();
        }
        let lr0 = 0.01;
        let lr1 = 0.01 * 0.9f64.powf(0.9);
        let v1 = a * 2.0;
        let x1 = 2.0 - lr0 * v1;
        let v2 = 0.9 * v1 + a * x1;
        let x2 = x1 - lr1 * v2;
        assert!((p.get(0).data[0] - x2).abs() < 1e-15);
        assert_eq!(opt.iter, 2);
    }

    #[test]
    fn stepping_past_the_end_is_a_state_error() {
        let mut p = scalar(1.0);
        let g = scalar(1.0);
        let mut opt = OptimState::new(&p, SgdConfig::default(), 1);
        sgd_step(&mut p, &g, &mut opt).unwrap();
        assert!(matches!(sgd_step(&mut p, &g, &mut opt), Err(Error::State(_))));
        assert!(OptimState::new(&p, SgdConfig::default(), 3).with_iter(4).is_err());
    }
}
