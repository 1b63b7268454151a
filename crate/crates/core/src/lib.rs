//! Brick-structured convolutional networks for offline handwritten character
//! recognition, trained with α-balanced focal cross-entropy over auxiliary
//! and main heads, and evaluated with a weighted five-crop ensemble.

pub mod commands;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::{Rng, Stream};
pub use tensor::{Param, Tensor};
