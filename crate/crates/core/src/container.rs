//! Binary frame container.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `LBMF` |
//! | 4 | version (`u32`, currently 1) |
//! | 4 | grid size `N` (`u32`) |
//! | 4 | frame count (`u32`) |
//! | 1 | precision tag: 4 = single, 8 = double |
//! | 3 | reserved, zero |
//! | 32 | domain length, sound speed, ambient density, relaxation time (`f64` each) |
//! | 8 | timestep jump, total timesteps (`u32` each) |
//!
//! followed by `frame count` records of a `u32` frame index and `N * N`
//! row-major values in the tagged precision.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lbm::{Field2D, SimConfig};
use crate::real::{Precision, Real};

pub const MAGIC: &[u8; 4] = b"LBMF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 32 + 8;

/// Decoded container, values widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFile {
    pub config: SimConfig,
    pub precision: Precision,
    pub frames: Vec<Field2D<f64>>,
}

pub fn encode<T: Real>(config: &SimConfig, frames: &[Field2D<T>]) -> Result<Vec<u8>> {
    let n = frames.first().map(|f| f.n).unwrap_or(config.grid_size);
    if frames.iter().any(|f| f.n != n) {
        return Err(Error::Shape("frames of a container must share the grid size".into()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * (4 + n * n * T::BYTES));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.push(T::PRECISION.tag());
    out.extend_from_slice(&[0, 0, 0]);
    for v in [
        config.domain_length,
        config.sound_speed,
        config.ambient_density,
        config.relaxation_time,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(config.timestep_jump as u32).to_le_bytes());
    out.extend_from_slice(&(config.total_timesteps as u32).to_le_bytes());
    for f in frames {
        out.extend_from_slice(&(f.frame_index as u32).to_le_bytes());
        for &v in &f.values {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<FrameFile> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let count = u32_at(12) as usize;
    let precision = Precision::from_tag(bytes[16]).ok_or_else(|| bad("unknown precision tag"))?;
    let config = SimConfig {
        grid_size: n,
        domain_length: f64_at(20),
        sound_speed: f64_at(28),
        ambient_density: f64_at(36),
        relaxation_time: f64_at(44),
        timestep_jump: u32_at(52) as usize,
        total_timesteps: u32_at(56) as usize,
    };
    let width = precision.tag() as usize;
    let record = 4 + n * n * width;
    if bytes.len() != HEADER_LEN + count * record {
        return Err(bad("payload length does not match header"));
    }
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let base = HEADER_LEN + k * record;
        let frame_index = u32_at(base) as usize;
        let payload = &bytes[base + 4..base + record];
        let values: Vec<f64> = match precision {
            Precision::Single => payload.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
            Precision::Double => payload.chunks_exact(8).map(f64::read_le).collect(),
        };
        frames.push(Field2D {
            n,
            values,
            frame_index,
        });
    }
    Ok(FrameFile {
        config,
        precision,
        frames,
    })
}

pub fn write<T: Real>(path: &Path, config: &SimConfig, frames: &[Field2D<T>]) -> Result<()> {
    let bytes = encode(config, frames)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<FrameFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Writes one frame as CSV, one grid row per line.
pub fn write_frame_csv<T: Real>(path: &Path, frame: &Field2D<T>) -> Result<()> {
    let mut out = Vec::new();
    for row in frame.values.chunks(frame.n) {
        let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.f64())).collect();
        writeln!(out, "{}", line.join(",")).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames<T: Real>(n: usize, count: usize) -> Vec<Field2D<T>> {
        (0..count)
            .map(|k| Field2D {
                n,
                values: (0..n * n).map(|i| T::of((i as f64 - 7.5) * 1e-4 * (k + 1) as f64)).collect(),
                frame_index: k,
            })
            .collect()
    }

    #[test]
    fn header_layout() {
        let cfg = SimConfig::desk();
        let bytes = encode(&cfg, &frames::<f64>(8, 2)).unwrap();
        assert_eq!(&bytes[..4], b"LBMF");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes[16], 8);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * (4 + 64 * 8));
    }

    #[test]
    fn single_precision_roundtrip_widens() {
        let cfg = SimConfig { grid_size: 8, ..SimConfig::desk() };
        let fr = frames::<f32>(8, 3);
        let decoded = decode(&encode(&cfg, &fr).unwrap(), Path::new("mem")).unwrap();
        assert_eq!(decoded.precision, Precision::Single);
        assert_eq!(decoded.config, cfg);
        for (a, b) in fr.iter().zip(&decoded.frames) {
            assert_eq!(a.cast::<f64>(), *b);
        }
    }

    #[test]
    fn rejects_corruption() {
        let cfg = SimConfig::desk();
        let mut bytes = encode(&cfg, &frames::<f64>(8, 1)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes, Path::new("x")).is_err());
    }
}
