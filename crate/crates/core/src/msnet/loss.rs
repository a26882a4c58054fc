//! Training loss: weighted sum of the mean squared error and the mean squared
//! difference of the spatial gradients.
//!
//! Gradients are fourth-order central differences in the interior, second
//! order central one cell from the boundary and second-order one-sided on the
//! boundary itself, in grid-index units.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub l2: f64,
    pub gradient: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l2: 0.98, gradient: 0.02 }
    }
}

#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub total: f64,
    pub l2: f64,
    pub gradient: f64,
    /// Derivative of `total` with respect to the prediction.
    pub grad: Tensor<T>,
}

const INTERIOR: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const CENTRAL: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
const FORWARD: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];
const BACKWARD: [(isize, f64); 3] = [(0, 1.5), (-1, -2.0), (-2, 0.5)];

/// Stencil `(offset, coefficient)` for index `i` of a line of length `n >= 5`.
fn stencil(i: usize, n: usize) -> &'static [(isize, f64)] {
    if i == 0 {
        &FORWARD
    } else if i == n - 1 {
        &BACKWARD
    } else if i == 1 || i == n - 2 {
        &CENTRAL
    } else {
        &INTERIOR
    }
}

fn check_side(h: usize, w: usize) -> Result<()> {
    if h < 5 || w < 5 {
        return Err(Error::Shape(format!("spatial gradient needs at least 5x5 cells, got {h}x{w}")));
    }
    Ok(())
}

/// `(d/dx, d/dy)` of one `h x w` row-major plane; x runs along rows.
pub fn spatial_gradient<T: Real>(plane: &[T], h: usize, w: usize) -> Result<(Vec<T>, Vec<T>)> {
    check_side(h, w)?;
    let mut gx = vec![T::zero(); h * w];
    let mut gy = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut sx = T::zero();
            for &(o, c) in stencil(x, w) {
                sx += T::of(c) * plane[y * w + (x as isize + o) as usize];
            }
            let mut sy = T::zero();
            for &(o, c) in stencil(y, h) {
                sy += T::of(c) * plane[(y as isize + o) as usize * w + x];
            }
            gx[y * w + x] = sx;
            gy[y * w + x] = sy;
        }
    }
    Ok((gx, gy))
}

/// Adds `Gx^T ax + Gy^T ay` into `out`.
fn spatial_gradient_adjoint<T: Real>(ax: &[T], ay: &[T], h: usize, w: usize, out: &mut [T]) {
    for y in 0..h {
        for x in 0..w {
            let (vx, vy) = (ax[y * w + x], ay[y * w + x]);
            for &(o, c) in stencil(x, w) {
                out[y * w + (x as isize + o) as usize] += T::of(c) * vx;
            }
            for &(o, c) in stencil(y, h) {
                out[(y as isize + o) as usize * w + x] += T::of(c) * vy;
            }
        }
    }
}

/// Loss averaged over the batch; `pred` and `target` are `(b, 1, h, w)`.
pub fn loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, weights: LossWeights) -> Result<LossValue<T>> {
    if pred.shape != target.shape || pred.shape[1] != 1 {
        return Err(Error::Shape(format!(
            "loss needs matching single-channel tensors, got {:?} and {:?}",
            pred.shape, target.shape
        )));
    }
    let [b, _, h, w] = pred.shape;
    check_side(h, w)?;
    let m = (h * w) as f64;
    let mut grad = Tensor::zeros(pred.shape);
    let (mut l2_sum, mut gd_sum) = (0.0f64, 0.0f64);
    let l2_scale = T::of(2.0 * weights.l2 / (m * b as f64));
    let gd_scale = T::of(2.0 * weights.gradient / (m * b as f64));
    for ib in 0..b {
        let diff: Vec<T> = pred.plane(ib, 0).iter().zip(target.plane(ib, 0)).map(|(&p, &t)| p - t).collect();
        let (gx, gy) = spatial_gradient(&diff, h, w)?;
        let mut sq = T::zero();
        for &d in &diff {
            sq += d * d;
        }
        let mut gsq = T::zero();
        for (&a, &c) in gx.iter().zip(&gy) {
            gsq += a * a + c * c;
        }
        l2_sum += sq.f64() / m;
        gd_sum += gsq.f64() / m;
        let gplane = grad.plane_mut(ib, 0);
        spatial_gradient_adjoint(&gx, &gy, h, w, gplane);
        for (g, &d) in gplane.iter_mut().zip(&diff) {
            *g = *g * gd_scale + d * l2_scale;
        }
    }
    let (l2, gradient) = (l2_sum / b as f64, gd_sum / b as f64);
    Ok(LossValue {
        total: weights.l2 * l2 + weights.gradient * gradient,
        l2,
        gradient,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_ramp_and_quadratic() {
        let (h, w) = (6, 7);
        let ramp: Vec<f64> = (0..h * w).map(|i| 3.0 * (i % w) as f64 - 2.0 * (i / w) as f64).collect();
        let (gx, gy) = spatial_gradient(&ramp, h, w).unwrap();
        assert!(gx.iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert!(gy.iter().all(|v| (v + 2.0).abs() < 1e-12));
        // Every stencil is exact for quadratics.
        let quad: Vec<f64> = (0..h * w).map(|i| ((i % w) as f64).powi(2)).collect();
        let (gx, _) = spatial_gradient(&quad, h, w).unwrap();
        for (i, v) in gx.iter().enumerate() {
            assert!((v - 2.0 * (i % w) as f64).abs() < 1e-12);
        }
        assert!(spatial_gradient(&[0.0; 16], 4, 4).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let (h, w) = (6, 5);
        let u: Vec<f64> = (0..h * w).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.3).collect();
        let ax: Vec<f64> = (0..h * w).map(|i| ((i * 5 % 11) as f64 - 5.0) * 0.2).collect();
        let ay: Vec<f64> = (0..h * w).map(|i| ((i * 3 % 7) as f64 - 2.0) * 0.1).collect();
        let (gx, gy) = spatial_gradient(&u, h, w).unwrap();
        let lhs: f64 = gx.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>() + gy.iter().zip(&ay).map(|(a, b)| a * b).sum::<f64>();
        let mut back = vec![0.0; h * w];
        spatial_gradient_adjoint(&ax, &ay, h, w, &mut back);
        let rhs: f64 = back.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn loss_parts() {
        let t = Tensor::<f64>::zeros([2, 1, 5, 5]);
        let p = Tensor::from_fn([2, 1, 5, 5], |_| 0.5);
        let v = loss(&p, &t, LossWeights::default()).unwrap();
        assert!((v.l2 - 0.25).abs() < 1e-15);
        assert!(v.gradient.abs() < 1e-15);
        assert!((v.total - 0.98 * 0.25).abs() < 1e-15);
        assert!(loss(&p, &Tensor::zeros([1, 1, 5, 5]), LossWeights::default()).is_err());
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let t = Tensor::<f64>::from_fn([2, 1, 6, 6], |[b, _, y, x]| ((b * 31 + y * 6 + x) as f64 * 0.71).sin());
        let p = Tensor::<f64>::from_fn([2, 1, 6, 6], |[b, _, y, x]| ((b * 17 + y * 5 + x) as f64 * 0.43).cos());
        let wts = LossWeights { l2: 0.6, gradient: 0.4 };
        let v = loss(&p, &t, wts).unwrap();
        let h = 1e-6;
        for i in [0, 7, 14, 35, 50, 71] {
            let mut up = p.clone();
            up.data[i] += h;
            let mut dn = p.clone();
            dn.data[i] -= h;
            let fd = (loss(&up, &t, wts).unwrap().total - loss(&dn, &t, wts).unwrap().total) / (2.0 * h);
            assert!((fd - v.grad.data[i]).abs() < 1e-8, "index {i}: {fd} vs {}", v.grad.data[i]);
        }
    }
}
