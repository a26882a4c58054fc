use serde::{Deserialize, Serialize};

use super::scheduler::PlateauState;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments per parameter buffer, plus learning rate and scheduler state.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step: u64,
    pub learning_rate: f64,
    pub scheduler: PlateauState,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(shapes: &[usize], learning_rate: f64, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            learning_rate,
            scheduler: PlateauState::default(),
        }
    }

    pub fn cast<U: Real>(&self) -> OptimizerState<U> {
        let conv = |v: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            v.iter().map(|b| b.iter().map(|&x| U::of(x.f64())).collect()).collect()
        };
        OptimizerState {
            config: self.config,
            first_moment: conv(&self.first_moment),
            second_moment: conv(&self.second_moment),
            step: self.step,
            learning_rate: self.learning_rate,
            scheduler: self.scheduler.clone(),
        }
    }
}

/// One bias-corrected Adam update. Elementwise, so no reduction order is
/// involved; gradients must already be reduced over the batch.
pub fn adam_step<T: Real>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut OptimizerState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameter buffers, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[i].len() {
            return Err(Error::Shape(format!("adam: buffer {i} length mismatch")));
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter buffer {i} is not finite at element {bad}"
            )));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = T::of(c.beta1);
    let b2 = T::of(c.beta2);
    let one = T::one();
    let bc1 = one - T::of(c.beta1.powi(t));
    let bc2 = one - T::of(c.beta2.powi(t));
    let lr = T::of(state.learning_rate);
    let eps = T::of(c.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_first_step() {
        let mut p = vec![0.5f64, -2.0];
        let mut s = OptimizerState::new(&[2], 1e-4, AdamConfig::default());
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut s).unwrap();
        assert_eq!(p, [0.5, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        for g in [3.0f64, -0.02, 1e-9] {
            let mut p = vec![1.0f64];
            let mut s = OptimizerState::new(&[1], 1e-3, AdamConfig::default());
            adam_step(&mut [&mut p[..]], &[&[g][..]], &mut s).unwrap();
            let want = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((p[0] - want).abs() < 1e-15, "{} vs {want}", p[0]);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = vec![1.0f32];
        let mut s = OptimizerState::new(&[1], 1e-3, AdamConfig::default());
        let err = adam_step(&mut [&mut p[..]], &[&[f32::NAN][..]], &mut s);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(s.step, 0);
    }
}
