use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names and shapes of the tensors packed into a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub model: String,
    pub in_channels: usize,
    pub max_disparity: usize,
    pub tensors: Vec<TensorSpec>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.tensors.iter().map(TensorSpec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset range of the named tensor.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut off = 0;
        for t in &self.tensors {
            if t.name == name {
                return Some(off..off + t.len());
            }
            off += t.len();
        }
        None
    }
}

/// Flat parameter vector `Θ` with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layout: Layout,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "{} parameter values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.layout.range(name).map(move |r| &mut self.values[r])
    }

    /// True when every value is bit-identical to `other`'s.
    pub fn bit_eq(&self, other: &ModelParams) -> bool {
        self.layout == other.layout
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Gradient with respect to [`ModelParams`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamGrad {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "{} gradient values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let name = layout
                .tensors
                .iter()
                .scan(0, |off, t| {
                    let r = *off..*off + t.len();
                    *off += t.len();
                    Some((t.name.clone(), r))
                })
                .find(|(_, r)| r.contains(&i))
                .map(|(n, _)| n)
                .unwrap_or_default();
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout: layout.clone(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &ParamGrad) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Dimension("gradient layouts differ".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn dot(&self, direction: &[f64]) -> f64 {
        self.values.iter().zip(direction).map(|(a, b)| a * b).sum()
    }
}

/// `Θ' = Θ - lr · grad`.
pub fn sgd_step(params: &ModelParams, grad: &ParamGrad, lr: f64) -> Result<ModelParams> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if params.layout != grad.layout {
        return Err(Error::Dimension("parameter and gradient layouts differ".into()));
    }
    let values: Vec<f64> = params
        .values
        .iter()
        .zip(&grad.values)
        .map(|(t, g)| t - lr * g)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter update".into()));
    }
    ModelParams::new(params.layout.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layout() -> Layout {
        Layout {
            model: "scalar".into(),
            in_channels: 1,
            max_disparity: 0,
            tensors: vec![TensorSpec::new("theta", &[1])],
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let p = ModelParams::new(scalar_layout(), vec![1.25]).unwrap();
        let g = ParamGrad::zeros(&scalar_layout());
        assert!(sgd_step(&p, &g, 0.1).unwrap().bit_eq(&p));
    }

    #[test]
    fn arithmetic_step() {
        let p = ModelParams::new(scalar_layout(), vec![1.0]).unwrap();
        let g = ParamGrad::new(scalar_layout(), vec![2.0]).unwrap();
        assert_eq!(sgd_step(&p, &g, 0.5).unwrap().values(), &[0.0]);
        assert!(sgd_step(&p, &g, 0.0).is_err());
        assert!(sgd_step(&p, &g, -1.0).is_err());
    }

    #[test]
    fn quadratic_descent_matches_recursion() {
        // f = θ²/2, grad = θ, θ_{k+1} = 0.9 θ_k
        let mut p = ModelParams::new(scalar_layout(), vec![1.0]).unwrap();
        for _ in 0..10 {
            let g = ParamGrad::new(scalar_layout(), p.values().to_vec()).unwrap();
            p = sgd_step(&p, &g, 0.1).unwrap();
        }
        assert!((p.values()[0] - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((p.values()[0] - 0.3487).abs() < 1e-4);
    }

    #[test]
    fn non_finite_update_rejected() {
        let p = ModelParams::new(scalar_layout(), vec![1.0]).unwrap();
        let g = ParamGrad::new(scalar_layout(), vec![f64::MAX]).unwrap();
        assert!(matches!(sgd_step(&p, &g, 1e10), Err(Error::NonFinite(_))));
        assert!(ParamGrad::new(scalar_layout(), vec![f64::NAN]).is_err());
    }
}
