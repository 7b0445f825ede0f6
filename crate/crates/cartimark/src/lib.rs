//! Files, artifacts, the reader-study service and the command line for
//! cartimark. Numerical work lives in `cartimark-core`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fsutil;
pub mod fusion_model;
pub mod imageio;
pub mod models;
pub mod plot;
pub mod report;
pub mod resolver;
pub mod saliency_io;
pub mod service;
pub mod store;

pub use error::{AppError, ErrorBody, Result};
