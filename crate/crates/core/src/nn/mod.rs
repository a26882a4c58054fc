//! Precision-generic building blocks with hand-written reverse passes.
//!
//! Every reduction whose order could change the rounded result goes through a
//! [`Reducer`], which either keeps a canonical order or permutes it from an
//! entropy stream that is independent of the experiment seed.

pub mod adam;
pub mod conv;
pub mod init;
pub mod policy;
pub mod resample;
pub mod scheduler;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use conv::{conv2d_backward, conv2d_forward, Activation, ConvCache, ConvGrads, ConvLayer};
pub use init::he_init;
pub use policy::{EntropySeed, OrderMode, Reducer, RngState, SummationPolicy};
pub use resample::{bilinear_resample, bilinear_resample_backward};
pub use scheduler::{plateau_scheduler, PlateauConfig, PlateauState};
pub use tensor::Tensor;
