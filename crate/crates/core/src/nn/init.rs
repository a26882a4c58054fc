use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::conv::ConvLayer;
use crate::real::Real;

/// He-normal weights, `N(0, sqrt(2 / fan_in))` with `fan_in = in_ch k^2`;
/// biases zero. Draws are made in `f64` so both precisions see the same stream.
pub fn he_init<T: Real, R: Rng + ?Sized>(layer: &mut ConvLayer<T>, rng: &mut R) {
    let k = layer.kernel();
    let fan_in = layer.in_channels() * k * k;
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    for w in layer.weights.data.iter_mut() {
        *w = T::of(normal.sample(rng));
    }
    layer.bias.fill(T::zero());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_and_zero_bias() {
        let mut a = ConvLayer::<f32>::zeros(4, 8, 3, Activation::Relu).unwrap();
        let mut b = a.clone();
        a.bias.fill(1.0);
        he_init(&mut a, &mut ChaCha8Rng::seed_from_u64(9));
        he_init(&mut b, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empirical_std() {
        let mut l = ConvLayer::<f64>::zeros(16, 512, 7, Activation::Relu).unwrap();
        he_init(&mut l, &mut ChaCha8Rng::seed_from_u64(10));
        let n = l.weights.data.len() as f64;
        assert!(n >= 1e5);
        let mean = l.weights.data.iter().sum::<f64>() / n;
        let std = (l.weights.data.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = (2.0 / (16.0 * 49.0f64)).sqrt();
        assert!((std / want - 1.0).abs() < 0.05, "{std} vs {want}");
    }
}
