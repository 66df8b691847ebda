//! Non-neural document detection pipeline: quadrilateral geometry, detection
//! grid decoding, augmentation, rectification, OCR fidelity scoring and a
//! cross-validation harness.
//!
//! Geometry and decoding are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations. Pixel work is done in `f64`.

pub mod augment;
pub mod dataset_io;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ocr_metric;
pub mod raster;
pub mod rectify;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point2d = geometry::Point2<f64>;
pub type Point2f = geometry::Point2<f32>;
pub type QuadF64 = geometry::Quad<f64>;
pub type QuadF32 = geometry::Quad<f32>;
pub type HomographyF64 = geometry::Homography<f64>;
pub type HomographyF32 = geometry::Homography<f32>;
pub type GridF64 = detect::DetectionGrid<f64>;
pub type GridF32 = detect::DetectionGrid<f32>;
pub type DetectionF64 = detect::Detection<f64>;
pub type DetectionF32 = detect::Detection<f32>;
