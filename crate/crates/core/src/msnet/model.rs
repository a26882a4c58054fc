//! Forward and reverse passes of the three-scale network.
//!
//! The input `(b, frames, n, n)` is bilinearly resampled to `n/4` and `n/2`.
//! The quarter stack predicts from the quarter-size frames; its output is
//! upsampled to `n/2` and appended as an extra channel to the half-size
//! frames for the half stack; the same coupling links half and full scale.
//! The full-scale output is the prediction.

use rand::Rng;

use super::arch::{MultiScaleConfig, Scale};
use crate::error::{Error, Result};
use crate::nn::{
    bilinear_resample, bilinear_resample_backward, conv2d_backward, conv2d_forward, he_init, ConvCache, ConvLayer,
    Reducer, Tensor,
};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleNet<T> {
    pub config: MultiScaleConfig,
    /// Quarter, half and full stacks.
    pub stacks: [Vec<ConvLayer<T>>; 3],
}

/// Network output plus the per-scale intermediate predictions.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub output: Tensor<T>,
    /// Quarter, half and full scale outputs; the last equals `output`.
    pub featured: [Tensor<T>; 3],
}

/// Everything the reverse pass needs.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub prediction: Prediction<T>,
    caches: [Vec<ConvCache<T>>; 3],
    sides: [usize; 3],
}

impl<T: Real> MultiScaleNet<T> {
    pub fn zeros(config: MultiScaleConfig) -> Result<Self> {
        config.validate()?;
        let build = |i: usize| -> Result<Vec<ConvLayer<T>>> {
            config.scales[i]
                .convs
                .iter()
                .map(|c| ConvLayer::zeros(c.in_ch, c.out_ch, c.kernel, c.activation))
                .collect()
        };
        let stacks = [build(0)?, build(1)?, build(2)?];
        Ok(Self { config, stacks })
    }

    /// He-normal weights and zero biases, layers drawn in parameter order.
    pub fn initialized<R: Rng + ?Sized>(config: MultiScaleConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        for layer in net.stacks.iter_mut().flatten() {
            he_init(layer, rng);
        }
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.stacks.iter().flatten().map(ConvLayer::parameter_count).sum()
    }

    /// Parameter blobs in canonical order: per scale, per conv, weights then bias.
    pub fn parameters(&self) -> Vec<&[T]> {
        self.stacks
            .iter()
            .flatten()
            .flat_map(|l| [l.weights.data.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        self.stacks
            .iter_mut()
            .flatten()
            .flat_map(|l| [l.weights.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Names matching [`Self::parameters`], e.g. `half.conv2.weight`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (scale, stack) in Scale::ALL.iter().zip(&self.stacks) {
            for i in 0..stack.len() {
                names.push(format!("{}.conv{i}.weight", scale.name()));
                names.push(format!("{}.conv{i}.bias", scale.name()));
            }
        }
        names
    }

    pub fn parameter_lengths(&self) -> Vec<usize> {
        self.parameters().iter().map(|p| p.len()).collect()
    }

    pub fn cast<U: Real>(&self) -> MultiScaleNet<U> {
        MultiScaleNet {
            config: self.config.clone(),
            stacks: [0, 1, 2].map(|i| self.stacks[i].iter().map(ConvLayer::cast).collect()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let [_, c, h, w] = input.shape;
        if c != self.config.input_frames {
            return Err(Error::Shape(format!(
                "network expects {} input frames, got {c}",
                self.config.input_frames
            )));
        }
        if h != w || h % 4 != 0 || h < 8 {
            return Err(Error::Shape(format!(
                "input must be square with a side divisible by 4 and at least 8, got {h}x{w}"
            )));
        }
        Ok(h)
    }

    pub fn forward(&self, input: &Tensor<T>, reducer: &mut Reducer) -> Result<Prediction<T>> {
        Ok(self.forward_trace(input, reducer)?.prediction)
    }

    pub fn forward_trace(&self, input: &Tensor<T>, reducer: &mut Reducer) -> Result<ForwardTrace<T>> {
        let n = self.check_input(input)?;
        let sides = Scale::ALL.map(|s| s.side(n));
        let mut caches: [Vec<ConvCache<T>>; 3] = Default::default();
        let mut featured: Vec<Tensor<T>> = Vec::with_capacity(3);
        for (si, stack) in self.stacks.iter().enumerate() {
            let side = sides[si];
            let frames = if side == n {
                input.clone()
            } else {
                bilinear_resample(input, (side, side))?
            };
            let mut x = match featured.last() {
                None => frames,
                Some(coarse) => {
                    let up = bilinear_resample(coarse, (side, side))?;
                    Tensor::concat_channels(&[&frames, &up])?
                }
            };
            for layer in stack {
                let (y, cache) = conv2d_forward(&x, layer, reducer)?;
                caches[si].push(cache);
                x = y;
            }
            featured.push(x);
        }
        let featured: [Tensor<T>; 3] = featured.try_into().expect("three scales");
        Ok(ForwardTrace {
            prediction: Prediction {
                output: featured[2].clone(),
                featured,
            },
            caches,
            sides,
        })
    }

    /// Gradients of a scalar loss with respect to every parameter blob, in
    /// [`Self::parameters`] order, given its gradient at the output.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_output: &Tensor<T>, reducer: &mut Reducer) -> Result<Vec<Vec<T>>> {
        if grad_output.shape != trace.prediction.output.shape {
            return Err(Error::Shape("output gradient does not match the prediction".into()));
        }
        let mut per_scale: [Vec<Vec<T>>; 3] = Default::default();
        let frames = self.config.input_frames;
        let mut g = grad_output.clone();
        for si in (0..3).rev() {
            let stack = &self.stacks[si];
            let mut blobs = Vec::with_capacity(2 * stack.len());
            for (layer, cache) in stack.iter().zip(&trace.caches[si]).rev() {
                let grads = conv2d_backward(&g, cache, layer, reducer)?;
                blobs.push(grads.bias);
                blobs.push(grads.weights.data);
                g = grads.input;
            }
            blobs.reverse();
            per_scale[si] = blobs;
            if si > 0 {
                // Channel `frames` carries the upsampled coarser prediction.
                let g_up = g.channel_range(frames, 1);
                let coarse = trace.sides[si - 1];
                g = bilinear_resample_backward(&g_up, (coarse, coarse))?;
            }
        }
        Ok(per_scale.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msnet::arch::{ConvSpec, ScaleSpec};
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> MultiScaleConfig {
        let s = |input| ScaleSpec {
            convs: vec![
                ConvSpec::new(3, input, 3, Activation::Relu),
                ConvSpec::new(3, 3, 1, Activation::Linear),
            ],
        };
        MultiScaleConfig {
            input_frames: 4,
            scales: [s(4), s(5), s(5)],
        }
    }

    #[test]
    fn shapes_and_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MultiScaleNet::<f64>::initialized(MultiScaleConfig::paper(), &mut rng).unwrap();
        assert_eq!(net.parameter_count(), 422_419);
        assert_eq!(net.parameter_names().len(), 34);
        assert_eq!(net.parameter_names()[0], "quarter.conv0.weight");
        assert_eq!(net.parameter_names()[33], "full.conv5.bias");
        let small = MultiScaleNet::<f32>::initialized(tiny(), &mut rng).unwrap();
        let x = Tensor::from_fn([2, 4, 16, 16], |[b, c, y, x]| ((b + c + y * x) as f32 * 0.1).sin());
        let p = small.forward(&x, &mut Reducer::fixed()).unwrap();
        assert_eq!(p.output.shape, [2, 1, 16, 16]);
        assert_eq!(p.featured[0].shape, [2, 1, 4, 4]);
        assert_eq!(p.featured[1].shape, [2, 1, 8, 8]);
        assert!(small.forward(&Tensor::zeros([1, 4, 10, 10]), &mut Reducer::fixed()).is_err());
        assert!(small.forward(&Tensor::zeros([1, 3, 16, 16]), &mut Reducer::fixed()).is_err());
    }

    #[test]
    fn gradient_blobs_match_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MultiScaleNet::<f64>::initialized(tiny(), &mut rng).unwrap();
        let x = Tensor::from_fn([1, 4, 8, 8], |[_, c, y, x]| ((c * 7 + y * 3 + x) as f64 * 0.37).cos());
        let mut r = Reducer::fixed();
        let trace = net.forward_trace(&x, &mut r).unwrap();
        let g = Tensor::from_fn(trace.prediction.output.shape, |_| 1.0);
        let grads = net.backward(&trace, &g, &mut r).unwrap();
        let lens: Vec<usize> = grads.iter().map(Vec::len).collect();
        assert_eq!(lens, net.parameter_lengths());
    }

    #[test]
    fn cast_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MultiScaleNet::<f64>::initialized(tiny(), &mut rng).unwrap();
        let narrow: MultiScaleNet<f32> = net.cast();
        assert_eq!(narrow.cast::<f32>(), narrow);
        assert_eq!(narrow.parameter_count(), net.parameter_count());
    }
}
