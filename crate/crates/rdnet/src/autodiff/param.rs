//! Named trainable parameters and the Adam optimizer step.

use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::TrainError;

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered parameter collection with unique names.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn push(&mut self, name: &str, tensor: Tensor<T>) {
        assert!(
            self.get(name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
            trainable: true,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Σθ² over every trainable parameter, accumulated in f64.
    pub fn sum_squares(&self) -> f64 {
        let mut acc = 0.0;
        for p in &self.params {
            if p.trainable {
                for &v in p.tensor.data() {
                    let x = v.to_f64();
                    acc += x * x;
                }
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coupled ℓ2 coefficient: 2·λ·θ is added to each gradient.
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
            t: 0,
        }
    }
}

/// One Adam update with bias correction. `grads` must align with `params`
/// order. Returns an error on any non-finite gradient.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    hp: &AdamHyper,
) -> Result<(), TrainError> {
    assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
    for (p, g) in params.iter().zip(grads) {
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient(p.name.clone()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    let bc1 = T::from_f64(1.0 / (1.0 - hp.beta1.powi(t)));
    let bc2 = T::from_f64(1.0 / (1.0 - hp.beta2.powi(t)));
    let lr = T::from_f64(hp.lr);
    let eps = T::from_f64(hp.epsilon);
    let two_lambda = T::from_f64(2.0 * hp.weight_decay);
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let theta = p.tensor.data_mut();
        let g = grads[i].data();
        for j in 0..theta.len() {
            let grad = g[j] + two_lambda * theta[j];
            m[j] = b1 * m[j] + one_m_b1 * grad;
            v[j] = b2 * v[j] + one_m_b2 * grad * grad;
            let m_hat = m[j] * bc1;
            let v_hat = v[j] * bc2;
            theta[j] = theta[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
