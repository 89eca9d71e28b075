use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Schema(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Named tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    tensors: IndexMap<String, Tensor>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Schema(format!("duplicate tensor name {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count over all tensors.
    pub fn value_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape.clone())))
                .collect(),
        }
    }

    /// Same names in the same order with the same shapes.
    pub fn check_schema(&self, other: &Parameters) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Schema(format!(
                "{} tensors vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for ((a, ta), (b, tb)) in self.tensors.iter().zip(&other.tensors) {
            if a != b || ta.shape != tb.shape {
                return Err(Error::Schema(format!("{a}{:?} vs {b}{:?}", ta.shape, tb.shape)));
            }
        }
        Ok(())
    }

    /// Subset of tensors whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> Parameters {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, t)| (k.clone(), t.clone()))
                .collect(),
        }
    }

    /// Removes tensors whose names start with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.tensors.retain(|k, _| !k.starts_with(prefix));
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Parameters) -> Result<()> {
        self.check_schema(other)?;
        for (a, b) in self.tensors.values_mut().zip(other.tensors.values()) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Exponential moving average toward `other`:
    /// `self = decay * self + (1 - decay) * other`.
    pub fn ema_update(&mut self, other: &Parameters, decay: f64) -> Result<()> {
        self.check_schema(other)?;
        let keep = 1.0 - decay;
        for (a, b) in self.tensors.values_mut().zip(other.tensors.values()) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x = decay * *x + keep * y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    /// Bit-level equality, distinguishing -0.0 from 0.0 and comparing NaNs.
    pub fn bit_eq(&self, other: &Parameters) -> bool {
        self.check_schema(other).is_ok()
            && self
                .tensors
                .values()
                .zip(other.tensors.values())
                .all(|(a, b)| a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Parameters {
        let mut p = Parameters::new();
        p.insert("w", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn ema_scalar() {
        let mut teacher = scalar(1.0);
        teacher.ema_update(&scalar(0.0), 0.999).unwrap();
        assert_eq!(teacher.get("w").unwrap().values()[0], 0.999);
    }

    #[test]
    fn ema_with_unit_decay_is_fixed_point() {
        let mut teacher = scalar(0.25);
        for v in [1.0, -3.0, 8.0] {
            teacher.ema_update(&scalar(v), 1.0).unwrap();
        }
        assert_eq!(teacher.get("w").unwrap().values()[0], 0.25);
    }

    #[test]
    fn schema_mismatch_detected() {
        let mut a = scalar(1.0);
        let mut b = Parameters::new();
        b.insert("w", Tensor::zeros(vec![2])).unwrap();
        assert!(a.ema_update(&b, 0.5).is_err());
        assert!(a.insert("w", Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn clone_is_deep() {
        let original = scalar(2.0);
        let mut copy = original.clone();
        copy.get_mut("w").unwrap().values_mut()[0] = 5.0;
        assert_eq!(original.get("w").unwrap().values()[0], 2.0);
    }
}
