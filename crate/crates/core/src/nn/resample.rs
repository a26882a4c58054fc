//! Bilinear resampling with aligned corners: output index `j` samples input
//! coordinate `j (in - 1) / (out - 1)`.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Real>(src: usize, dst: usize) -> Vec<Tap<T>> {
    (0..dst)
        .map(|j| {
            let pos = if dst == 1 {
                0.0
            } else {
                j as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            Tap {
                lo,
                hi,
                frac: T::of(pos - lo as f64),
            }
        })
        .collect()
}

pub fn bilinear_resample<T: Real>(input: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let (th, tw) = target;
    if th < 2 || tw < 2 {
        return Err(Error::InvalidInput(format!(
            "resample target {th}x{tw} is degenerate (need >= 2 per side)"
        )));
    }
    let [b, c, h, w] = input.shape;
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput("resample source must be at least 2x2".into()));
    }
    if (h, w) == (th, tw) {
        return Ok(input.clone());
    }
    let ty: Vec<Tap<T>> = taps(h, th);
    let tx: Vec<Tap<T>> = taps(w, tw);
    let mut out = Tensor::zeros([b, c, th, tw]);
    for ib in 0..b {
        for ic in 0..c {
            let src = input.plane(ib, ic);
            let dst = out.plane_mut(ib, ic);
            for (oy, ry) in ty.iter().enumerate() {
                let r0 = &src[ry.lo * w..(ry.lo + 1) * w];
                let r1 = &src[ry.hi * w..(ry.hi + 1) * w];
                for (ox, rx) in tx.iter().enumerate() {
                    let top = r0[rx.lo] + rx.frac * (r0[rx.hi] - r0[rx.lo]);
                    let bot = r1[rx.lo] + rx.frac * (r1[rx.hi] - r1[rx.lo]);
                    dst[oy * tw + ox] = top + ry.frac * (bot - top);
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_resample`]: scatters output gradients back onto the
/// source grid, in output row-major order.
pub fn bilinear_resample_backward<T: Real>(grad_out: &Tensor<T>, source: (usize, usize)) -> Result<Tensor<T>> {
    let (h, w) = source;
    let [b, c, th, tw] = grad_out.shape;
    if (h, w) == (th, tw) {
        return Ok(grad_out.clone());
    }
    if h < 2 || w < 2 || th < 2 || tw < 2 {
        return Err(Error::InvalidInput("degenerate resample size".into()));
    }
    let ty: Vec<Tap<T>> = taps(h, th);
    let tx: Vec<Tap<T>> = taps(w, tw);
    let one = T::one();
    let mut out = Tensor::zeros([b, c, h, w]);
    for ib in 0..b {
        for ic in 0..c {
            let g = grad_out.plane(ib, ic);
            let dst = out.plane_mut(ib, ic);
            for (oy, ry) in ty.iter().enumerate() {
                for (ox, rx) in tx.iter().enumerate() {
                    let v = g[oy * tw + ox];
                    let top = v * (one - ry.frac);
                    let bot = v * ry.frac;
                    dst[ry.lo * w + rx.lo] += top * (one - rx.frac);
                    dst[ry.lo * w + rx.hi] += top * rx.frac;
                    dst[ry.hi * w + rx.lo] += bot * (one - rx.frac);
                    dst[ry.hi * w + rx.hi] += bot * rx.frac;
                }
            }
        }
    }
    Ok(out)
}
