use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 0.001;

/// Adam moments and hyperparameters, one moment pair per parameter in visit order.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Zeroed moments matching the given parameter sizes.
    pub fn for_sizes(lr: f64, sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(lr);
        for n in sizes {
            s.m.push(vec![F::ZERO; n]);
            s.v.push(vec![F::ZERO; n]);
        }
        s
    }
}

impl<F: Scalar> Default for AdamState<F> {
    fn default() -> Self {
        Self::new(DEFAULT_LR)
    }
}

/// One bias-corrected Adam update over every parameter's gradient buffer.
pub fn adam_step<F: Scalar>(params: &mut [&mut Tensor<F>], state: &mut AdamState<F>) -> Result<()> {
    if state.m.is_empty() && !params.is_empty() {
        *state = AdamState {
            m: params.iter().map(|p| vec![F::ZERO; p.len()]).collect(),
            v: params.iter().map(|p| vec![F::ZERO; p.len()]).collect(),
            ..state.clone()
        };
    }
    if state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam state holds {} entries for {} parameters",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if state.m[i].len() != p.len() || state.v[i].len() != p.len() {
            return Err(Error::Shape(format!("adam moment {i} does not match parameter {:?}", p.shape())));
        }
        if p.grad().is_none() {
            return Err(Error::Shape(format!("parameter {i} {:?} has no gradient", p.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (F::from_f64(state.beta1), F::from_f64(state.beta2));
    let (one_b1, one_b2) = (F::from_f64(1.0 - state.beta1), F::from_f64(1.0 - state.beta2));
    let (inv_bc1, inv_bc2) = (F::from_f64(1.0 / bc1), F::from_f64(1.0 / bc2));
    let (lr, eps) = (F::from_f64(state.lr), F::from_f64(state.eps));
    for (i, p) in params.iter_mut().enumerate() {
        let (data, grad) = p.data_and_grad_mut();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..data.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + one_b1 * g;
            v[j] = b2 * v[j] + one_b2 * g * g;
            let m_hat = m[j] * inv_bc1;
            let v_hat = v[j] * inv_bc2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
