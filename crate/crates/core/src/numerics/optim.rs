use serde::{Deserialize, Serialize};

use super::tensor::{dim_err, Scalar, Tensor, TensorError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// A named parameter tensor. Frozen parameters are never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub frozen: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            value,
            frozen: false,
        }
    }
}

/// Moment accumulators, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. `grads[i]` may be `None` for parameters
/// that received no gradient; frozen parameters are skipped regardless.
pub fn adam_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<(), TensorError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(dim_err(
            "adam_step",
            format!(
                "{} params, {} grads, {} / {} moments",
                params.len(),
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    for (i, p) in params.iter().enumerate() {
        let shape = p.value.shape();
        if state.m[i].shape() != shape || state.v[i].shape() != shape {
            return Err(dim_err("adam_step", format!("moment shape mismatch for {}", p.name)));
        }
        if let Some(g) = &grads[i] {
            if g.shape() != shape {
                return Err(dim_err(
                    "adam_step",
                    format!("gradient {:?} for {} {:?}", g.shape(), p.name, shape),
                ));
            }
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::from_f64(ADAM_BETA1), T::from_f64(ADAM_BETA2));
    let c1 = T::from_f64(1.0 - ADAM_BETA1.powi(t));
    let c2 = T::from_f64(1.0 - ADAM_BETA2.powi(t));
    let (lr, eps) = (T::from_f64(lr), T::from_f64(ADAM_EPS));

    for (i, p) in params.iter_mut().enumerate() {
        let Some(g) = &grads[i] else { continue };
        if p.frozen {
            continue;
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (j, (w, &g)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (T::ONE - b1) * g;
            v[j] = b2 * v[j] + (T::ONE - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Cosine annealing without restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(lr_max: f64, total_epochs: usize) -> Self {
        Self {
            lr_max,
            lr_min: 0.0,
            total_epochs,
        }
    }
}

pub fn cosine_lr(epoch: usize, sched: &LrSchedule) -> Result<f64, TensorError> {
    if epoch > sched.total_epochs || sched.total_epochs == 0 {
        return Err(TensorError::EpochOutOfRange {
            epoch,
            total: sched.total_epochs,
        });
    }
    let frac = epoch as f64 / sched.total_epochs as f64;
    let lr = sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos());
    Ok(lr.clamp(sched.lr_min, sched.lr_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![Param::new("w", Tensor::scalar(0.0f64))];
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Some(Tensor::scalar(1.0))], &mut st, 1e-3).unwrap();
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((params[0].value.item() - expect).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut params = vec![Param::new("w", Tensor::from_vec(vec![0.3f32, -2.0]))];
        let before = params.clone();
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Some(Tensor::zeros([2]))], &mut st, 0.1).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn frozen_untouched() {
        let mut params = vec![Param::new("w", Tensor::scalar(1.0f32))];
        params[0].frozen = true;
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Some(Tensor::scalar(5.0))], &mut st, 0.1).unwrap();
        assert_eq!(params[0].value.item(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![Param::new("w", Tensor::zeros([3]))];
        let mut st = AdamState::<f32>::new(&params);
        assert!(adam_step(&mut params, &[Some(Tensor::zeros([2]))], &mut st, 0.1).is_err());
        assert!(adam_step(&mut params, &[], &mut st, 0.1).is_err());
    }

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::new(1e-4, 200);
        assert_eq!(cosine_lr(0, &s).unwrap(), 1e-4);
        assert!(cosine_lr(200, &s).unwrap().abs() < 1e-20);
        assert!((cosine_lr(100, &s).unwrap() - 5e-5).abs() < 1e-18);
        assert!(cosine_lr(201, &s).is_err());
    }
}
