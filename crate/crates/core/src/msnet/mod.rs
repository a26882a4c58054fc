//! Three-scale (quarter, half, full) convolutional predictor of the next
//! frame, and its training loss.

pub mod arch;
pub mod loss;
pub mod model;

pub use arch::{ConvSpec, MultiScaleConfig, Scale, ScaleSpec};
pub use loss::{loss, spatial_gradient, LossValue, LossWeights};
pub use model::{ForwardTrace, MultiScaleNet, Prediction};
