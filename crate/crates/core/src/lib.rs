//! Two-tier coarse-to-fine lesion detection on CT-like volumes.
//!
//! The cascade runs in two stages:
//!
//! 1. [`tier1`] segments the spine, splits each axial slice into watershed
//!    sub-segments, merges over-segmented regions, stacks dense 2D detections
//!    into 3D candidates and scores them with a committee of linear
//!    hinge-loss classifiers. It is tuned for sensitivity, not precision.
//! 2. [`views`] draws N = scales x translations x rotations random axial
//!    patches around every candidate, [`cnn`] classifies each patch, and
//!    [`eval`] averages the per-view probabilities into one candidate score.
//!
//! [`eval`] also provides FROC / ROC-AUC computation, patient-level folds
//! and training-set balancing. [`experiment`] wires everything into a
//! reproducible cross-validated experiment on synthetic phantoms from
//! [`volume`].
//!
//! Data-parallel loops go through [`par`]; disabling the default `parallel`
//! feature gives a purely sequential build with identical outputs.

pub mod cnn;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod par;
pub mod seed;
pub mod tier1;
pub mod views;
pub mod volume;

pub use error::{Error, Result};
