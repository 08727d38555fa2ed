//! Face-based multi-view specular highlight detection.
//!
//! The pipeline reduces every view to CIELAB lightness, seeds a per-view
//! specular mask, backprojects every mesh face into every view with a
//! z-buffer, labels faces by mask majority, and finally drops candidate faces
//! whose brightness does not change enough between views. A threshold-sweep
//! IoU metric and a synthetic scene generator with exact groundtruth make the
//! whole chain testable without external data.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

// Negated comparisons deliberately treat NaN as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colorspace;
pub mod detect_multi;
pub mod detect_single;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metric;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use colorspace::{Gray8Image, RgbImage};
pub use detect_single::{SingleViewConfig, SingleViewMethod, SpecularMask};
pub use error::{Error, Result};
pub use metric::{ThresholdComparison, ThresholdRange};
pub use scalar::Real;

pub type LuminanceImage = colorspace::LuminanceImage<f64>;
pub type TriangleMesh = geometry::TriangleMesh<f64>;
pub type CameraView = geometry::CameraView<f64>;
pub type Mat4 = geometry::Mat4<f64>;
pub type FaceProjectionTable = geometry::FaceProjectionTable<f64>;
pub type FaceLabeling = detect_multi::FaceLabeling<f64>;
pub type AggregationConfig = detect_multi::AggregationConfig<f64>;
pub type SpecularVerdict = detect_multi::SpecularVerdict<f64>;
pub type EvalReport = metric::EvalReport<f64>;

pub type LuminanceImageF32 = colorspace::LuminanceImage<f32>;
pub type TriangleMeshF32 = geometry::TriangleMesh<f32>;
pub type CameraViewF32 = geometry::CameraView<f32>;
