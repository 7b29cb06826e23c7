//! Air-writing numeral recognition core.
//!
//! Everything in this crate is pure computation over in-memory buffers: colour
//! marker segmentation, the velocity-driven pen-up/pen-down state machine,
//! glyph rasterization, the synthetic gesture generator, a small CNN engine
//! with exact backpropagation, and the evaluation bookkeeping. File formats,
//! the command line and the streaming service live in the `airwrite` crate.
//!
//! The crate is `no_std` and only needs `alloc`. The default `std` feature
//! turns on runtime SIMD dispatch in the matrix kernels.

#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod idx;
pub mod image;
pub mod model;
pub mod motion;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod vision;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

/// Side length of every glyph fed to the classifier.
pub const GLYPH_SIDE: usize = 56;
