use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> NamedTensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named parameter tensors of one network copy (student or teacher).
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    tensors: Vec<NamedTensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn new(tensors: Vec<NamedTensor<T>>) -> Result<Self> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Structural(format!(
                    "tensor `{}` has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
        }
        Ok(Self { tensors })
    }

    pub fn zeros_like<U: Real>(other: &Params<U>) -> Self {
        Self {
            tensors: other
                .tensors
                .iter()
                .map(|t| NamedTensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn tensors(&self) -> &[NamedTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [NamedTensor<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<NamedTensor<T>> {
        self.tensors
    }

    pub fn get(&self, i: usize) -> &NamedTensor<T> {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut NamedTensor<T> {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&NamedTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Same names and shapes in the same order.
    pub fn check_layout<U: Real>(&self, other: &Params<U>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Structural(format!(
                "parameter sets differ in size: {} vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Structural(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Params<T>, scale: T) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.fill(T::zero());
        }
    }
}
