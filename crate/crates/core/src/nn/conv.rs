//! Same-size 2D cross-correlation with replication padding.
//!
//! Canonical forward order for one output pixel: input channel, then kernel
//! row, then kernel column, accumulated sequentially from zero; the bias is
//! added last. In shuffled mode the term order is permuted once per output
//! row, so every pixel of that row accumulates its products in the same
//! random order.
//!
//! Gradient reductions over the batch and image rows follow the same rule:
//! row partials are computed in a fixed lane-blocked order and then summed
//! sequentially (fixed) or in a permuted order (shuffled).

use serde::{Deserialize, Serialize};

use super::policy::Reducer;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            _ => Err(format!("unknown activation `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    /// `(out_ch, in_ch, k, k)`.
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, activation: Activation) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel}")));
        }
        Ok(Self {
            weights: Tensor::zeros([out_ch, in_ch, kernel, kernel]),
            bias: vec![T::zero(); out_ch],
            activation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape[0]
    }
    pub fn in_channels(&self) -> usize {
        self.weights.shape[1]
    }
    pub fn kernel(&self) -> usize {
        self.weights.shape[2]
    }
    pub fn parameter_count(&self) -> usize {
        self.weights.data.len() + self.bias.len()
    }

    pub fn cast<U: Real>(&self) -> ConvLayer<U> {
        ConvLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::of(b.f64())).collect(),
            activation: self.activation,
        }
    }
}

/// Values saved by the forward pass for the reverse pass.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    /// Replication-padded input, `(b, in_ch, h + 2p, w + 2p)`.
    pub padded: Tensor<T>,
    /// Post-activation output.
    pub output: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// Pads every plane by `p` cells, repeating the edge values.
pub fn replication_pad<T: Real>(input: &Tensor<T>, p: usize) -> Tensor<T> {
    let [b, c, h, w] = input.shape;
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = Tensor::zeros([b, c, ph, pw]);
    for ib in 0..b {
        for ic in 0..c {
            let src = input.plane(ib, ic);
            let dst = out.plane_mut(ib, ic);
            for y in 0..ph {
                let sy = y.saturating_sub(p).min(h - 1);
                let row = &src[sy * w..(sy + 1) * w];
                let drow = &mut dst[y * pw..(y + 1) * pw];
                drow[..p].fill(row[0]);
                drow[p..p + w].copy_from_slice(row);
                drow[p + w..].fill(row[w - 1]);
            }
        }
    }
    out
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    reducer: &mut Reducer,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let [b, c, h, w] = input.shape;
    let (co, ci, k) = (layer.out_channels(), layer.in_channels(), layer.kernel());
    if c != ci {
        return Err(Error::Shape(format!(
            "convolution expects {ci} input channels, got {c}"
        )));
    }
    let p = (k - 1) / 2;
    let padded = replication_pad(input, p);
    let pw = w + 2 * p;
    let terms = ci * k * k;
    let mut out = Tensor::zeros([b, co, h, w]);
    let mut order = Vec::with_capacity(terms);
    let shuffled = reducer.is_shuffled();
    if !shuffled {
        reducer.fill_order(&mut order, terms);
    }
    let mut acc = vec![T::zero(); w];
    for ib in 0..b {
        for o in 0..co {
            let wk = &layer.weights.data[o * terms..(o + 1) * terms];
            let bias = layer.bias[o];
            for y in 0..h {
                if shuffled {
                    reducer.fill_order(&mut order, terms);
                }
                acc.fill(T::zero());
                for &t in &order {
                    let (ic, r) = (t / (k * k), t % (k * k));
                    let (ky, kx) = (r / k, r % k);
                    let wv = wk[t];
                    let plane = padded.plane(ib, ic);
                    let row = &plane[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += wv * v;
                    }
                }
                let dst = &mut out.plane_mut(ib, o)[y * w..(y + 1) * w];
                match layer.activation {
                    Activation::Linear => {
                        for (d, &a) in dst.iter_mut().zip(&acc) {
                            *d = a + bias;
                        }
                    }
                    Activation::Relu => {
                        for (d, &a) in dst.iter_mut().zip(&acc) {
                            let v = a + bias;
                            *d = if v > T::zero() { v } else { T::zero() };
                        }
                    }
                }
            }
        }
    }
    Ok((
        out.clone(),
        ConvCache {
            padded,
            output: out,
        },
    ))
}

/// Dot product with eight interleaved accumulators combined pairwise.
#[inline]
fn blocked_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    for (l, (&x, &y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        acc[l] += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

#[inline]
fn blocked_sum<T: Real>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    for x in &mut ca {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    for (l, &x) in ca.remainder().iter().enumerate() {
        acc[l] += x;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
    layer: &ConvLayer<T>,
    reducer: &mut Reducer,
) -> Result<ConvGrads<T>> {
    if grad_out.shape != cache.output.shape {
        return Err(Error::Shape(format!(
            "gradient shape {:?} does not match forward output {:?}",
            grad_out.shape, cache.output.shape
        )));
    }
    let [b, co, h, w] = grad_out.shape;
    let (ci, k) = (layer.in_channels(), layer.kernel());
    let p = (k - 1) / 2;
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let kk = k * k;

    // Gradient with respect to the pre-activation.
    let gact = match layer.activation {
        Activation::Linear => grad_out.clone(),
        Activation::Relu => Tensor {
            shape: grad_out.shape,
            data: grad_out
                .data
                .iter()
                .zip(&cache.output.data)
                .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
                .collect(),
        },
    };

    let mut order = Vec::new();
    let mut partials = vec![T::zero(); b * h];

    // Bias: rows of every image, then across rows.
    let mut grad_bias = vec![T::zero(); co];
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        for ib in 0..b {
            let plane = gact.plane(ib, o);
            for y in 0..h {
                partials[ib * h + y] = blocked_sum(&plane[y * w..(y + 1) * w]);
            }
        }
        *gb = reducer.sum(&partials, &mut order);
    }

    // Weights: one permutation of the row partials per (out, in) channel pair.
    let mut grad_weights = Tensor::zeros(layer.weights.shape);
    let shuffled = reducer.is_shuffled();
    if !shuffled {
        reducer.fill_order(&mut order, b * h);
    }
    for o in 0..co {
        for i in 0..ci {
            if shuffled {
                reducer.fill_order(&mut order, b * h);
            }
            for ky in 0..k {
                for kx in 0..k {
                    for ib in 0..b {
                        let g = gact.plane(ib, o);
                        let xp = cache.padded.plane(ib, i);
                        for y in 0..h {
                            let row = &xp[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            partials[ib * h + y] = blocked_dot(&g[y * w..(y + 1) * w], row);
                        }
                    }
                    let mut acc = T::zero();
                    for &r in &order {
                        acc += partials[r];
                    }
                    grad_weights.data[((o * ci + i) * k + ky) * k + kx] = acc;
                }
            }
        }
    }

    // Input: scatter into the padded plane, term by term, then fold the
    // padding back onto the edge cells.
    let mut grad_input = Tensor::zeros([b, ci, h, w]);
    let terms = co * kk;
    if !shuffled {
        reducer.fill_order(&mut order, terms);
    }
    let mut gpad = vec![T::zero(); ph * pw];
    for ib in 0..b {
        for i in 0..ci {
            if shuffled {
                reducer.fill_order(&mut order, terms);
            }
            gpad.fill(T::zero());
            for &t in &order {
                let (o, r) = (t / kk, t % kk);
                let (ky, kx) = (r / k, r % k);
                let wv = layer.weights.data[(o * ci + i) * kk + r];
                let g = gact.plane(ib, o);
                for y in 0..h {
                    let dst = &mut gpad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                    for (d, &gv) in dst.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                        *d += wv * gv;
                    }
                }
            }
            let dst = grad_input.plane_mut(ib, i);
            for y in 0..h {
                dst[y * w..(y + 1) * w].copy_from_slice(&gpad[(y + p) * pw + p..(y + p) * pw + p + w]);
            }
            if p > 0 {
                for py in 0..ph {
                    let inside_row = py >= p && py < p + h;
                    let sy = py.saturating_sub(p).min(h - 1);
                    for px in 0..pw {
                        if inside_row && px >= p && px < p + w {
                            continue;
                        }
                        let sx = px.saturating_sub(p).min(w - 1);
                        dst[sy * w + sx] += gpad[py * pw + px];
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::policy::SummationPolicy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn random_layer(ci: usize, co: usize, k: usize, act: Activation, rng: &mut ChaCha8Rng) -> ConvLayer<f64> {
        let mut l = ConvLayer::zeros(ci, co, k, act).unwrap();
        l.weights = random_tensor(l.weights.shape, rng);
        l.bias = (0..co).map(|_| rng.random_range(-0.5..0.5)).collect();
        l
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor([2, 1, 5, 6], &mut rng);
        let mut l = ConvLayer::zeros(1, 1, 1, Activation::Linear).unwrap();
        l.weights.data[0] = 1.0;
        let (y, _) = conv2d_forward(&x, &l, &mut Reducer::fixed()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn averaging_kernel_keeps_constants() {
        let x = Tensor::from_fn([1, 1, 7, 7], |_| 0.37f64);
        let mut l = ConvLayer::zeros(1, 1, 3, Activation::Linear).unwrap();
        l.weights.data.fill(1.0 / 9.0);
        let (y, _) = conv2d_forward(&x, &l, &mut Reducer::fixed()).unwrap();
        assert_eq!(y.shape, x.shape);
        for v in &y.data {
            assert!((v - 0.37).abs() <= 8.0 * f64::EPSILON, "{v}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let l = ConvLayer::<f32>::zeros(3, 1, 3, Activation::Linear).unwrap();
        assert!(conv2d_forward(&x, &l, &mut Reducer::fixed()).is_err());
        assert!(ConvLayer::<f32>::zeros(3, 1, 4, Activation::Linear).is_err());
    }

    #[test]
    fn zero_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor([2, 3, 6, 6], &mut rng);
        let l = random_layer(3, 4, 3, Activation::Linear, &mut rng);
        let (y, cache) = conv2d_forward(&x, &l, &mut Reducer::fixed()).unwrap();
        let g = conv2d_backward(&Tensor::zeros(y.shape), &cache, &l, &mut Reducer::fixed()).unwrap();
        assert!(g.input.data.iter().chain(&g.weights.data).chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn relu_passes_positive_gradient() {
        let x = Tensor::from_fn([1, 1, 3, 3], |_| 1.0f64);
        let mut l = ConvLayer::zeros(1, 1, 1, Activation::Relu).unwrap();
        l.weights.data[0] = 2.0;
        let (y, cache) = conv2d_forward(&x, &l, &mut Reducer::fixed()).unwrap();
        let gout = Tensor::from_fn(y.shape, |[_, _, yy, xx]| (yy * 3 + xx) as f64);
        let g = conv2d_backward(&gout, &cache, &l, &mut Reducer::fixed()).unwrap();
        for (gi, go) in g.input.data.iter().zip(&gout.data) {
            assert_eq!(*gi, 2.0 * go);
        }
    }

    #[test]
    fn fixed_order_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor([2, 3, 9, 9], &mut rng);
        let l = random_layer(3, 2, 5, Activation::Relu, &mut rng);
        let (a, _) = conv2d_forward(&x, &l, &mut SummationPolicy::fixed().reducer()).unwrap();
        let (b, _) = conv2d_forward(&x, &l, &mut SummationPolicy::fixed().reducer()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shuffled_order_changes_the_last_bits_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f32>::from_fn([1, 8, 16, 16], |_| rng.random_range(-1.0f32..1.0));
        let mut l = ConvLayer::<f32>::zeros(8, 4, 5, Activation::Linear).unwrap();
        l.weights = Tensor::from_fn(l.weights.shape, |_| rng.random_range(-1.0f32..1.0));
        let (fixed, _) = conv2d_forward(&x, &l, &mut Reducer::fixed()).unwrap();
        let (shuf, _) = conv2d_forward(&x, &l, &mut SummationPolicy::shuffled().reducer()).unwrap();
        let diff = fixed.max_abs_diff(&shuf);
        let len = 8.0 * 25.0;
        assert!(diff > 0.0);
        assert!(diff < 100.0 * f32::EPSILON * len);
    }
}
