use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Canonical sequential order, bit-reproducible.
    Fixed,
    /// Accumulation order permuted from an entropy stream.
    Shuffled,
}

impl FromStr for OrderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(OrderMode::Fixed),
            "shuffled" => Ok(OrderMode::Shuffled),
            _ => Err(format!("unknown policy `{s}` (expected fixed|shuffled)")),
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::Fixed => "fixed",
            OrderMode::Shuffled => "shuffled",
        })
    }
}

/// 256-bit seed of the ordering stream; written to the entropy log so a run
/// can be replayed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntropySeed(pub [u8; 32]);

impl EntropySeed {
    /// Fresh seed from the operating system, unrelated to any experiment seed.
    pub fn from_os() -> Self {
        Self(rand::random())
    }
}

impl fmt::Debug for EntropySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntropySeed({})", hex::encode(self.0))
    }
}

impl fmt::Display for EntropySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for EntropySeed {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bytes = hex::decode(s.trim()).map_err(|e| e.to_string())?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "entropy seed must be 32 bytes".to_string())?;
        Ok(Self(arr))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SummationPolicy {
    pub mode: OrderMode,
    /// Seed of the ordering stream; only used in shuffled mode.
    pub entropy: Option<EntropySeed>,
}

impl SummationPolicy {
    pub fn fixed() -> Self {
        Self {
            mode: OrderMode::Fixed,
            entropy: None,
        }
    }

    /// Shuffled order with a fresh OS seed.
    pub fn shuffled() -> Self {
        Self::replay(EntropySeed::from_os())
    }

    /// Shuffled order reproducing a recorded stream.
    pub fn replay(seed: EntropySeed) -> Self {
        Self {
            mode: OrderMode::Shuffled,
            entropy: Some(seed),
        }
    }

    /// Resolves a mode into a policy, drawing OS entropy when shuffled.
    pub fn for_mode(mode: OrderMode) -> Self {
        match mode {
            OrderMode::Fixed => Self::fixed(),
            OrderMode::Shuffled => Self::shuffled(),
        }
    }

    pub fn reducer(&self) -> Reducer {
        match (self.mode, self.entropy) {
            (OrderMode::Fixed, _) => Reducer::fixed(),
            (OrderMode::Shuffled, seed) => {
                let seed = seed.unwrap_or_else(EntropySeed::from_os);
                Reducer {
                    rng: Some(ChaCha8Rng::from_seed(seed.0)),
                }
            }
        }
    }
}

/// Stateful source of accumulation orders.
#[derive(Clone, Debug)]
pub struct Reducer {
    rng: Option<ChaCha8Rng>,
}

impl Reducer {
    pub fn fixed() -> Self {
        Self { rng: None }
    }

    pub fn is_shuffled(&self) -> bool {
        self.rng.is_some()
    }

    /// Fills `order` with `0..len`, permuted when shuffled.
    pub fn fill_order(&mut self, order: &mut Vec<usize>, len: usize) {
        order.clear();
        order.extend(0..len);
        if let Some(rng) = &mut self.rng {
            order.shuffle(rng);
        }
    }

    /// Sum of `values`, sequential in slice order or in a permuted order.
    pub fn sum<T: Real>(&mut self, values: &[T], order: &mut Vec<usize>) -> T {
        match &mut self.rng {
            None => crate::real::sum_in_order(values),
            Some(_) => {
                self.fill_order(order, values.len());
                let mut acc = T::zero();
                for &i in order.iter() {
                    acc += values[i];
                }
                acc
            }
        }
    }
}

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub const BYTES: usize = 32 + 8 + 16;

    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.seed);
        out.extend_from_slice(&self.stream.to_le_bytes());
        out.extend_from_slice(&self.word_pos.to_le_bytes());
    }

    pub fn read_le(bytes: &[u8]) -> Self {
        Self {
            seed: bytes[..32].try_into().unwrap(),
            stream: u64::from_le_bytes(bytes[32..40].try_into().unwrap()),
            word_pos: u128::from_le_bytes(bytes[40..56].try_into().unwrap()),
        }
    }
}

impl Reducer {
    /// Current ordering-stream position; `None` in fixed mode.
    pub fn rng_state(&self) -> Option<RngState> {
        self.rng.as_ref().map(RngState::capture)
    }

    pub fn from_rng_state(state: Option<RngState>) -> Self {
        Self {
            rng: state.map(|s| s.restore()),
        }
    }
}
