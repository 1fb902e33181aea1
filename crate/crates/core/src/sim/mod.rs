//! Ground-truth simulation and ROC scoring.

mod benchmark;
mod env;
mod roc;

pub use benchmark::{
    build_benchmark_env, evaluation_points, simulate_trajectory, BENCHMARK_POSES, THIN_WALL,
};
pub use env::{
    label_points, read_trajectory, write_trajectory, Environment, Occupancy, Polygon, RayHit,
    ScanConfig, ENV_HEADER, GEOM_EPS, TRAJECTORY_HEADER,
};
pub use roc::{roc, RocResult, TARGET_TPR};
