//! Hybrid deep features (HDF) for scene image classification.
//!
//! The pipeline slices each image into 20 parts with five cropping
//! techniques, runs the parts and the whole image through two pool5
//! backbones (object-centric and scene-centric), averages the pooled
//! descriptors, fuses the four resulting 512-D vectors and classifies them
//! with one-vs-rest L2-regularized logistic regression.

pub mod cache;
pub mod classifier;
pub mod engine;
pub mod features;
pub mod harness;
pub mod image;
pub mod slicer;
pub mod synth;
pub mod tensor;

pub use tensor::Tensor;
