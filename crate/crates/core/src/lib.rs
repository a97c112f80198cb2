//! Miniature error-bounded lossy compressor together with a model that
//! predicts its compression time stage by stage, with confidence intervals.
//!
//! The fitting and statistics layers are generic over [`Real`] (`f32`/`f64`);
//! the aliases below pin them to `f64`, which is what the codec and the model
//! file use.

// `!(x > y)` is used on purpose so NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod codec;
pub mod data_io;
pub mod error;
pub mod estimator;
pub mod num;
pub mod time_model;
pub mod tools;
pub mod uncertainty;

pub use codec::{CompressionConfig, Lossless, Predictor};
pub use data_io::ScalarField;
pub use error::{Error, ErrorClass, Result};
pub use num::Real;

pub type LinearModel = time_model::LinearSurrogate<f64>;
pub type CurveModel = time_model::CurveSurrogate<f64>;
pub type ThroughputModel = time_model::PiecewiseThroughput<f64>;
pub type Normal = uncertainty::NormalFit<f64>;
pub type Gamma = uncertainty::GammaFit<f64>;
