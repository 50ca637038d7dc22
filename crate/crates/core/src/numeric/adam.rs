//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Optimizer hyperparameters and per-parameter moment buffers.
///
/// Buffers are kept in the same order as the parameter list they were built
/// for; `adam_step` enforces matching shapes on every call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, shapes: &[Vec<usize>]) -> Self {
        let buffers: Vec<Vec<f64>> =
            shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            first_moment: buffers.clone(),
            second_moment: buffers,
        }
    }
}

/// One Adam update: moments decay toward the gradient, bias-corrected
/// estimates drive the parameter step, and `state.step` increments.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.first_moment.len()
        || params.len() != state.second_moment.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "adam_step: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if grads[i].len() != p.numel() || state.first_moment[i].len() != p.numel() {
            return Err(Error::ShapeMismatch(format!(
                "adam_step: parameter {i} has {} elements, gradient {}",
                p.numel(),
                grads[i].len()
            )));
        }
    }

    state.step += 1;
    let correction1 = 1.0 - state.beta1.powi(state.step as i32);
    let correction2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2) = (state.beta1, state.beta2);

    for (i, param) in params.iter_mut().enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let g = grads[i];
        for (j, pv) in param.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            *pv -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        param.check_finite("adam_step")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation of the Adam formulas for a single scalar step.
    fn adam_reference(p0: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64, steps: u64) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p
    }

    #[test]
    fn first_step_moves_by_about_learning_rate() {
        let mut param = Tensor::scalar(0.0);
        let grads: [&[f64]; 1] = [&[1.0]];
        let mut state = AdamState::new(0.0003, &[vec![1]]);
        adam_step(&mut [&mut param], &grads, &mut state).unwrap();
        let got = param.data()[0];
        let expect = adam_reference(0.0, 1.0, 0.0003, 0.9, 0.999, 1e-8, 1);
        assert!((got - expect).abs() < 1e-15, "got {got}, expect {expect}");
        // bias correction makes the first step approximately -lr
        assert!((got + 0.0003).abs() < 1e-8);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn multi_step_matches_reference() {
        let mut param = Tensor::scalar(0.5);
        let grads: [&[f64]; 1] = [&[-0.25]];
        let mut state = AdamState::new(0.01, &[vec![1]]);
        for _ in 0..7 {
            adam_step(&mut [&mut param], &grads, &mut state).unwrap();
        }
        let expect = adam_reference(0.5, -0.25, 0.01, 0.9, 0.999, 1e-8, 7);
        assert!((param.data()[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut param = Tensor::new(vec![2], vec![0.7, -0.3]).unwrap();
        let grads: [&[f64]; 1] = [&[0.0, 0.0]];
        let mut state = AdamState::new(0.001, &[vec![2]]);
        adam_step(&mut [&mut param], &grads, &mut state).unwrap();
        assert_eq!(param.data(), &[0.7, -0.3]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut param = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
            let g = [0.4, -0.1, 0.05];
            let grads: [&[f64]; 1] = [&g];
            let mut state = AdamState::new(0.002, &[vec![3]]);
            for _ in 0..5 {
                adam_step(&mut [&mut param], &grads, &mut state).unwrap();
            }
            (param.data().to_vec(), state.first_moment[0].clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut param = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let grads: [&[f64]; 1] = [&[1.0]];
        let mut state = AdamState::new(0.001, &[vec![2]]);
        assert!(adam_step(&mut [&mut param], &grads, &mut state).is_err());
    }
}
