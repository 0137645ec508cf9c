//! Trains and evaluates convolutional predictors of intra-frame encoding
//! cost (bits per pixel) and distortion from original luma frames and a
//! quantisation parameter.

pub mod autodiff;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod networks;
