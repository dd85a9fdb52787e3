//! View-based semantic segmentation of 3D triangle meshes.
//!
//! A shape is decomposed into range-scan views, each view is classified by a
//! small intrinsic-convolution network, per-view predictions are averaged back
//! onto the mesh and a dense conditional random field refines the result.

pub mod aggregate;
pub mod crf;
pub mod decompose;
pub mod error;
pub mod exec;
pub mod geom;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod prob;
pub mod synth;
pub mod viewnet;

pub use error::{Error, Result};
