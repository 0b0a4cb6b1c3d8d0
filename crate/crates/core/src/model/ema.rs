use serde::{Deserialize, Serialize};

use super::{Params, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmaConfig {
    pub alpha: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { alpha: 0.999 }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("ema alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, computed in `f64`.
pub fn ema_update<T: Real, S: Real>(teacher: &mut Params<T>, student: &Params<S>, cfg: &EmaConfig) -> Result<()> {
    cfg.validate()?;
    teacher.check_layout(student)?;
    let a = cfg.alpha;
    for (t, s) in teacher.tensors_mut().iter_mut().zip(student.tensors()) {
        for (tv, &sv) in t.data.iter_mut().zip(&s.data) {
            *tv = T::from_f64(a * tv.as_f64() + (1.0 - a) * sv.as_f64());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NamedTensor;

    fn p(vals: &[f64]) -> Params<f64> {
        Params::new(vec![NamedTensor { name: "w".into(), shape: vec![vals.len()], data: vals.to_vec() }]).unwrap()
    }

    #[test]
    fn alpha_endpoints() {
        let s = p(&[1.0, -2.0]);
        let mut t = p(&[0.5, 0.5]);
        ema_update(&mut t, &s, &EmaConfig { alpha: 1.0 }).unwrap();
        assert_eq!(t, p(&[0.5, 0.5]));
        ema_update(&mut t, &s, &EmaConfig { alpha: 0.0 }).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn repeated_updates_follow_geometric_series() {
        let s = p(&[1.0, -3.0, 0.25]);
        let t0 = p(&[-1.0, 2.0, 0.0]);
        let mut t = t0.clone();
        let cfg = EmaConfig::default();
        for _ in 0..200 {
            ema_update(&mut t, &s, &cfg).unwrap();
        }
        let at = 0.999f64.powi(200);
        for i in 0..3 {
            let want = at * t0.get(0).data[i] + (1.0 - at) * s.get(0).data[i];
            assert!((t.get(0).data[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_mismatch_is_structural() {
        let mut t = p(&[1.0]);
        assert!(matches!(ema_update(&mut t, &p(&[1.0, 2.0]), &EmaConfig::default()), Err(Error::Structural(_))));
    }
}
