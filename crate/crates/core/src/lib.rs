//! Neural video codec: each group of frames is represented by a small
//! coordinate network that predicts patch volumes. Network weights are held as
//! scaled integer latents, trained with an entropy penalty, and shipped as
//! arithmetic-coded residuals against the previous group's latents.

pub mod codec;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod quant;
pub mod synth;
pub mod tensor;
pub mod video_io;

pub use error::{Error, Result};
