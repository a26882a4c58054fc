//! Binary training checkpoint.
//!
//! Little-endian layout:
//!
//! | field | encoding |
//! |-------|----------|
//! | magic | `MSCK` |
//! | version | `u32` (1) |
//! | precision | `u8` tag (4 or 8) and 3 zero bytes |
//! | run id, epochs completed | `u32` each |
//! | architecture hash | 32 bytes |
//! | architecture text | `u32` length + UTF-8 |
//! | entropy reference | `u32` length + UTF-8 |
//! | training loss, validation loss | `f64` each |
//! | learning rate, beta1, beta2, eps | `f64` each |
//! | Adam step | `u64` |
//! | scheduler | `u8` has-best, `f64` best, `u32` stale epochs |
//! | data stream | 56-byte ChaCha8 position |
//! | ordering stream | `u8` present, then 56 bytes if present |
//! | blob count | `u32` |
//! | blobs | `u16` name length, name, `u64` count, values in the tagged precision |
//!
//! Blobs are the network parameters (`quarter.conv0.weight`, ...) followed by
//! the Adam moments (`adam.m.<name>`, `adam.v.<name>`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::msnet::{MultiScaleConfig, MultiScaleNet};
use crate::nn::{AdamConfig, OptimizerState, PlateauState, RngState};
use crate::real::{Precision, Real};

pub const MAGIC: &[u8; 4] = b"MSCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub run_id: u32,
    /// Number of completed epochs.
    pub epoch: u32,
    /// Entropy log line identifying the ordering stream, or `fixed`.
    pub entropy_ref: String,
    pub train_loss: f64,
    pub val_loss: f64,
    pub net: MultiScaleNet<T>,
    pub optimizer: OptimizerState<T>,
    pub data_rng: RngState,
    pub order_rng: Option<RngState>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_blob<T: Real>(out: &mut Vec<u8>, name: &str, values: &[T]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        v.write_le(out);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::format(self.path, "invalid UTF-8"))
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn encode(&self) -> Vec<u8> {
        let cfg = &self.net.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::PRECISION.tag());
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&self.run_id.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&cfg.hash());
        put_str(&mut out, &cfg.render());
        put_str(&mut out, &self.entropy_ref);
        let opt = &self.optimizer;
        for v in [
            self.train_loss,
            self.val_loss,
            opt.learning_rate,
            opt.config.beta1,
            opt.config.beta2,
            opt.config.eps,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&opt.step.to_le_bytes());
        out.push(opt.scheduler.best.is_some() as u8);
        out.extend_from_slice(&opt.scheduler.best.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&(opt.scheduler.stale_epochs as u32).to_le_bytes());
        self.data_rng.write_le(&mut out);
        match &self.order_rng {
            Some(s) => {
                out.push(1);
                s.write_le(&mut out);
            }
            None => out.push(0),
        }
        let names = self.net.parameter_names();
        out.extend_from_slice(&((3 * names.len()) as u32).to_le_bytes());
        for (name, p) in names.iter().zip(self.net.parameters()) {
            put_blob(&mut out, name, p);
        }
        for (name, m) in names.iter().zip(&opt.first_moment) {
            put_blob(&mut out, &format!("adam.m.{name}"), m);
        }
        for (name, v) in names.iter().zip(&opt.second_moment) {
            put_blob(&mut out, &format!("adam.v.{name}"), v);
        }
        out
    }

    /// Decodes a checkpoint. A checkpoint stored in the other precision is
    /// rejected unless `convert` is set, in which case values are rounded or
    /// widened on load.
    pub fn decode(bytes: &[u8], path: &Path, convert: bool) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, "bad magic bytes"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let precision = Precision::from_tag(r.u8()?).ok_or_else(|| Error::format(path, "unknown precision tag"))?;
        r.take(3)?;
        if precision != T::PRECISION && !convert {
            return Err(Error::Config(format!(
                "{} holds a {} checkpoint; loading it as {} needs explicit conversion",
                path.display(),
                precision,
                T::PRECISION
            )));
        }
        let run_id = r.u32()?;
        let epoch = r.u32()?;
        let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let len = r.u32()? as usize;
        let config = MultiScaleConfig::parse(&r.string(len)?)?;
        if config.hash() != hash {
            return Err(Error::ArchitectureMismatch(format!(
                "{}: architecture text does not match its hash",
                path.display()
            )));
        }
        let len = r.u32()? as usize;
        let entropy_ref = r.string(len)?;
        let train_loss = r.f64()?;
        let val_loss = r.f64()?;
        let learning_rate = r.f64()?;
        let adam = AdamConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let step = r.u64()?;
        let has_best = r.u8()? != 0;
        let best = r.f64()?;
        let stale_epochs = r.u32()? as usize;
        let data_rng = RngState::read_le(r.take(RngState::BYTES)?);
        let order_rng = match r.u8()? {
            0 => None,
            _ => Some(RngState::read_le(r.take(RngState::BYTES)?)),
        };

        let mut net = MultiScaleNet::<T>::zeros(config)?;
        let names = net.parameter_names();
        let lengths = net.parameter_lengths();
        let count = r.u32()? as usize;
        if count != 3 * names.len() {
            return Err(Error::format(path, format!("expected {} blobs, found {count}", 3 * names.len())));
        }
        let width = precision.tag() as usize;
        let mut read_blob = |expect: &str, len: usize| -> Result<Vec<T>> {
            let nlen = r.u16()? as usize;
            let name = r.string(nlen)?;
            if name != expect {
                return Err(Error::format(path, format!("expected blob `{expect}`, found `{name}`")));
            }
            if r.u64()? as usize != len {
                return Err(Error::ArchitectureMismatch(format!("blob `{name}` has the wrong length")));
            }
            let raw = r.take(len * width)?;
            Ok(match precision {
                Precision::Single => raw.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
                Precision::Double => raw.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
            })
        };
        let mut params = Vec::with_capacity(names.len());
        for (name, &len) in names.iter().zip(&lengths) {
            params.push(read_blob(name, len)?);
        }
        let mut first = Vec::with_capacity(names.len());
        for (name, &len) in names.iter().zip(&lengths) {
            first.push(read_blob(&format!("adam.m.{name}"), len)?);
        }
        let mut second = Vec::with_capacity(names.len());
        for (name, &len) in names.iter().zip(&lengths) {
            second.push(read_blob(&format!("adam.v.{name}"), len)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after the last blob"));
        }
        for (dst, src) in net.parameters_mut().into_iter().zip(&params) {
            dst.copy_from_slice(src);
        }
        Ok(Self {
            run_id,
            epoch,
            entropy_ref,
            train_loss,
            val_loss,
            net,
            optimizer: OptimizerState {
                config: adam,
                first_moment: first,
                second_moment: second,
                step,
                learning_rate,
                scheduler: PlateauState {
                    best: has_best.then_some(best),
                    stale_epochs,
                },
            },
            data_rng,
            order_rng,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, convert: bool) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path, convert)
    }
}

/// Precision tag of a checkpoint file without decoding the rest.
pub fn stored_precision(path: &Path) -> Result<Precision> {
    use std::io::Read;
    let mut head = [0u8; 9];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(|e| Error::io(path, e))?;
    if &head[..4] != MAGIC {
        return Err(Error::format(path, "bad magic bytes"));
    }
    Precision::from_tag(head[8]).ok_or_else(|| Error::format(path, "unknown precision tag"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msnet::arch::{ConvSpec, ScaleSpec};
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint<f64> {
        let s = |i| ScaleSpec {
            convs: vec![ConvSpec::new(3, i, 2, Activation::Relu), ConvSpec::new(1, 2, 1, Activation::Linear)],
        };
        let cfg = MultiScaleConfig { input_frames: 4, scales: [s(4), s(5), s(5)] };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MultiScaleNet::initialized(cfg, &mut rng).unwrap();
        let mut optimizer = OptimizerState::new(&net.parameter_lengths(), 1e-4, AdamConfig::default());
        optimizer.step = 7;
        optimizer.first_moment[0][0] = 0.25;
        optimizer.scheduler.best = Some(0.5);
        optimizer.scheduler.stale_epochs = 3;
        Checkpoint {
            run_id: 2,
            epoch: 20,
            entropy_ref: "fixed".into(),
            train_loss: 0.125,
            val_loss: 0.25,
            net,
            optimizer,
            data_rng: RngState::capture(&rng),
            order_rng: None,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let ck = sample();
        let bytes = ck.encode();
        let back = Checkpoint::<f64>::decode(&bytes, Path::new("m"), false).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn precision_conversion_needs_flag() {
        let bytes = sample().encode();
        assert!(Checkpoint::<f32>::decode(&bytes, Path::new("m"), false).is_err());
        let narrow = Checkpoint::<f32>::decode(&bytes, Path::new("m"), true).unwrap();
        assert_eq!(narrow.net, sample().net.cast::<f32>());
        assert_eq!(narrow.optimizer.step, 7);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(Checkpoint::<f64>::decode(&bytes[..bytes.len() - 3], Path::new("m"), false).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::decode(&bad, Path::new("m"), false).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::<f64>::decode(&extra, Path::new("m"), false).is_err());
    }
}
