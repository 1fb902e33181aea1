//! Continuous occupancy mapping from 2D range scans.
//!
//! Each lidar beam adds a radial hit-likelihood kernel to a first-order
//! Ising field; the occupancy log-odds at any point is twice the summed
//! statistic. The crate also carries a log-odds grid baseline, a polygonal
//! simulator with ROC scoring, pseudo-likelihood hyperparameter training and
//! a CARMEN log reader.
//!
//! Geometry, kernels and maps are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the common instantiations.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod gridmap;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
pub use field::{
    AddReport, FieldConfig, MaxRangePolicy, OccupancyField, RasterMap, Scan, ScanBeam,
    SNAPSHOT_MAGIC,
};
pub use gridmap::{GridLookup, GridMap};
pub use model::{
    hit_lambda, hit_lambda_with, lambda_to_prob, transform_measurement, BehindSensorSign,
    Hyperparameters, LambdaValue, Measurement, Point2, Pose2,
};
pub use scalar::Scalar;

pub type Point = Point2<f64>;
pub type Pose = Pose2<f64>;
pub type Beam = Measurement<f64>;
pub type Theta = Hyperparameters<f64>;
pub type Field = OccupancyField<f64>;
pub type Grid = GridMap<f64>;
pub type Raster = RasterMap<f64>;

pub type Point32 = Point2<f32>;
pub type Theta32 = Hyperparameters<f32>;
pub type Field32 = OccupancyField<f32>;
pub type Grid32 = GridMap<f32>;
