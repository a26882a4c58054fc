use crate::error::{Error, Result};
use crate::real::Real;

/// Dense `(batch, channels, height, width)` buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [b, c, h, w] = shape;
        let mut data = Vec::with_capacity(b * c * h * w);
        for ib in 0..b {
            for ic in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([ib, ic, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, c, y, x)]
    }

    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let len = self.plane_len();
        let start = (b * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (b * self.shape[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// Stacks tensors of equal batch and spatial size along channels.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let [b, _, h, w] = first.shape;
        if parts.iter().any(|t| t.shape[0] != b || t.shape[2] != h || t.shape[3] != w) {
            return Err(Error::Shape("concatenated tensors disagree on batch or size".into()));
        }
        let c: usize = parts.iter().map(|t| t.shape[1]).sum();
        let mut out = Tensor::zeros([b, c, h, w]);
        for ib in 0..b {
            let mut oc = 0;
            for t in parts {
                for ic in 0..t.shape[1] {
                    out.plane_mut(ib, oc).copy_from_slice(t.plane(ib, ic));
                    oc += 1;
                }
            }
        }
        Ok(out)
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn channel_range(&self, start: usize, count: usize) -> Self {
        let [b, _, h, w] = self.shape;
        let mut out = Tensor::zeros([b, count, h, w]);
        for ib in 0..b {
            for c in 0..count {
                out.plane_mut(ib, c).copy_from_slice(self.plane(ib, start + c));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}
