//! Allocation-only core of the cartimark toolkit.
//!
//! Everything here is a pure function of its inputs: patient-level dataset
//! splits, the dual-view phantom renderer, the single-view transfer-learning
//! classifier with its tiny deterministic backbone, the SMO-trained linear
//! SVM used for late fusion, gradient saliency, confusion-matrix diagnostics
//! and the blinded reader-session state machine. File formats, PNG codecs,
//! the HTTP service and the CLI live in the `cartimark` crate.
#![no_std]

extern crate alloc;

pub mod backbone;
pub mod classifier;
pub mod diagnostics;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod image;
pub mod manifest;
pub mod overlay;
pub mod phantom;
pub mod saliency;
pub mod session;
pub mod split;
pub mod svm;
pub mod table2;
pub mod tensor;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{Label, Subset, View};
