//! Representational geodesics.
//!
//! A differentiable image representation `f` maps pixels to a response vector.
//! Given two endpoint images, this crate synthesizes a sequence of frames whose
//! successive *responses* trace a path of minimal squared length — a discrete
//! geodesic of the representation — and, among all such sequences, one that is
//! also as short as possible in pixel space. Comparing these synthesized paths
//! against naive pixel-domain interpolation reveals which image changes a
//! representation treats as small.
//!
//! The crate is organized as:
//!
//! - [`tensor`]: dense row-major `f64` tensors with shape checking;
//! - [`layers`]: differentiable primitives (convolution, halfwave rectification,
//!   max and L2 pooling, Fourier magnitude) with hand-derived pullbacks;
//! - [`stack`]: serializable layer stacks, the [`stack::Representation`] trait
//!   and shipped presets;
//! - [`transforms`]: parametric image deformations (translation, rotation,
//!   dilation) used to build ground-truth comparison paths;
//! - [`geodesic`]: path energies, the two-phase conditional minimization and
//!   its diagnostics;
//! - [`metrics`]: deviation profiles, temporal slices, receptive-field
//!   estimates and path comparison scores;
//! - [`images`]: seeded procedural test images;
//! - [`io`]: PNG and raw-tensor persistence plus CSV diagnostics.
//!
//! All randomness is drawn from explicitly seeded generators and all float
//! reductions run in a fixed order, so every artifact the crate writes is
//! bitwise reproducible. The `parallel` feature (on by default) distributes
//! per-frame work across threads without changing any result.

pub mod geodesic;
pub mod images;
pub mod io;
pub mod layers;
pub mod metrics;
pub(crate) mod par;
pub mod stack;
pub mod tensor;
pub mod transforms;

pub use tensor::Tensor;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("file format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
