//! Architecture description and its text form.
//!
//! ```text
//! # comment
//! version 1
//! input_frames 4
//! scale quarter
//! conv 3 4 48 relu        # kernel in_ch out_ch activation
//! ...
//! scale half
//! ...
//! scale full
//! ...
//! ```
//!
//! The quarter scale reads the downsampled input frames; the half and full
//! scales read their input frames plus one channel holding the upsampled
//! prediction of the coarser scale. Every scale ends in a linear conv with one
//! output channel.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    Quarter,
    Half,
    Full,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Quarter, Scale::Half, Scale::Full];

    pub fn name(self) -> &'static str {
        match self {
            Scale::Quarter => "quarter",
            Scale::Half => "half",
            Scale::Full => "full",
        }
    }

    /// Grid side at this scale for a full-resolution side `n`.
    pub fn side(self, n: usize) -> usize {
        match self {
            Scale::Quarter => n / 4,
            Scale::Half => n / 2,
            Scale::Full => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub const fn new(kernel: usize, in_ch: usize, out_ch: usize, activation: Activation) -> Self {
        Self {
            kernel,
            in_ch,
            out_ch,
            activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel * self.kernel * self.in_ch * self.out_ch + self.out_ch
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub convs: Vec<ConvSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiScaleConfig {
    pub input_frames: usize,
    /// Quarter, half and full scale, in that order.
    pub scales: [ScaleSpec; 3],
}

fn stack(spec: &[(usize, usize)], input: usize) -> ScaleSpec {
    // `spec` lists (kernel, out_ch); the last entry is the linear output conv.
    let mut convs = Vec::with_capacity(spec.len());
    let mut in_ch = input;
    for (i, &(k, out)) in spec.iter().enumerate() {
        let act = if i + 1 == spec.len() {
            Activation::Linear
        } else {
            Activation::Relu
        };
        convs.push(ConvSpec::new(k, in_ch, out, act));
        in_ch = out;
    }
    ScaleSpec { convs }
}

impl MultiScaleConfig {
    /// 17 convolutions (5 + 6 + 6) with 422,419 trainable parameters.
    pub fn paper() -> Self {
        Self {
            input_frames: 4,
            scales: [
                stack(&[(3, 48), (3, 64), (3, 64), (3, 48), (3, 1)], 4),
                stack(&[(5, 32), (3, 64), (3, 96), (3, 64), (3, 32), (5, 1)], 5),
                stack(&[(7, 8), (5, 48), (5, 64), (5, 48), (5, 8), (7, 1)], 5),
            ],
        }
    }

    /// Same 17-conv layout with narrow layers, sized for single-core runs.
    pub fn desk() -> Self {
        Self {
            input_frames: 4,
            scales: [
                stack(&[(3, 8), (3, 16), (3, 16), (3, 8), (3, 1)], 4),
                stack(&[(5, 8), (3, 16), (3, 16), (3, 16), (3, 8), (5, 1)], 5),
                stack(&[(5, 8), (3, 8), (3, 8), (3, 8), (3, 8), (5, 1)], 5),
            ],
        }
    }

    pub fn conv_count(&self) -> usize {
        self.scales.iter().map(|s| s.convs.len()).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.scales
            .iter()
            .flat_map(|s| &s.convs)
            .map(ConvSpec::parameter_count)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0 {
            return Err(Error::Config("input_frames must be positive".into()));
        }
        for (scale, spec) in Scale::ALL.iter().zip(&self.scales) {
            let name = scale.name();
            let first_in = match scale {
                Scale::Quarter => self.input_frames,
                _ => self.input_frames + 1,
            };
            let convs = &spec.convs;
            let last = convs
                .last()
                .ok_or_else(|| Error::Config(format!("scale {name} has no convolutions")))?;
            if convs[0].in_ch != first_in {
                return Err(Error::Config(format!(
                    "scale {name}: first conv must read {first_in} channels, reads {}",
                    convs[0].in_ch
                )));
            }
            for w in convs.windows(2) {
                if w[0].out_ch != w[1].in_ch {
                    return Err(Error::Config(format!(
                        "scale {name}: channel chain broken ({} -> {})",
                        w[0].out_ch, w[1].in_ch
                    )));
                }
            }
            if let Some(c) = convs.iter().find(|c| c.kernel % 2 == 0 || c.out_ch == 0) {
                return Err(Error::Config(format!("scale {name}: invalid conv {c:?}")));
            }
            if last.out_ch != 1 || last.activation != Activation::Linear {
                return Err(Error::Config(format!(
                    "scale {name}: last conv must be linear with one output channel"
                )));
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version 1").unwrap();
        writeln!(out, "input_frames {}", self.input_frames).unwrap();
        for (scale, spec) in Scale::ALL.iter().zip(&self.scales) {
            writeln!(out, "scale {}", scale.name()).unwrap();
            for c in &spec.convs {
                writeln!(out, "conv {} {} {} {}", c.kernel, c.in_ch, c.out_ch, c.activation.name()).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Config(format!("architecture line {line}: {msg}"));
        let mut input_frames = None;
        let mut scales: [Option<ScaleSpec>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        let mut version_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "version" => {
                    if tok.get(1) != Some(&"1") {
                        return Err(bad(lineno, "unsupported version"));
                    }
                    version_seen = true;
                }
                "input_frames" => {
                    input_frames = Some(
                        tok.get(1)
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad(lineno, "bad input_frames"))?,
                    );
                }
                "scale" => {
                    let idx = Scale::ALL
                        .iter()
                        .position(|s| Some(&s.name()) == tok.get(1))
                        .ok_or_else(|| bad(lineno, "unknown scale"))?;
                    if scales[idx].is_some() {
                        return Err(bad(lineno, "scale defined twice"));
                    }
                    scales[idx] = Some(ScaleSpec { convs: Vec::new() });
                    current = Some(idx);
                }
                "conv" => {
                    let idx = current.ok_or_else(|| bad(lineno, "conv outside a scale"))?;
                    if tok.len() != 5 {
                        return Err(bad(lineno, "expected `conv kernel in out activation`"));
                    }
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(lineno, "bad integer"));
                    let activation = tok[4].parse().map_err(|e: String| bad(lineno, &e))?;
                    scales[idx].as_mut().unwrap().convs.push(ConvSpec::new(
                        num(tok[1])?,
                        num(tok[2])?,
                        num(tok[3])?,
                        activation,
                    ));
                }
                other => return Err(bad(lineno, &format!("unknown directive `{other}`"))),
            }
        }
        if !version_seen {
            return Err(Error::Config("architecture file lacks `version 1`".into()));
        }
        let [q, h, f] = scales;
        let missing = || Error::Config("architecture must define quarter, half and full scales".into());
        let cfg = Self {
            input_frames: input_frames.unwrap_or(4),
            scales: [q.ok_or_else(missing)?, h.ok_or_else(missing)?, f.ok_or_else(missing)?],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.render().as_bytes()).into()
    }

    /// Multi-line table of the per-conv parameter counts.
    pub fn parameter_report(&self) -> String {
        let mut out = String::new();
        for (scale, spec) in Scale::ALL.iter().zip(&self.scales) {
            for (i, c) in spec.convs.iter().enumerate() {
                writeln!(
                    out,
                    "{:>7} conv{i}  k={} {:>3} -> {:<3} {:<6} {:>8}",
                    scale.name(),
                    c.kernel,
                    c.in_ch,
                    c.out_ch,
                    c.activation.name(),
                    c.parameter_count()
                )
                .unwrap();
            }
        }
        writeln!(out, "convolutions: {}  parameters: {}", self.conv_count(), self.parameter_count()).unwrap();
        out
    }
}
