//! Direct intrinsic image decomposition: a two-scale convolutional
//! regression network predicting log-albedo and log-shading from an RGB
//! image, with its losses, data synthesis, augmentation, metrics and a
//! momentum-SGD trainer, all implemented from scratch.

pub mod data;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod inference;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod params;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::Rng;
pub use tensor::{Axis, Shape, Tensor};
