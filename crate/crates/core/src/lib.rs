//! Post-processing for sparse point-cloud maps such as those produced by
//! feature-based visual SLAM: outlier removal, moving-least-squares
//! upsampling, per-axis scale alignment and error evaluation against ground
//! truth, occupancy octree conversion, and a parameter-sweep harness over
//! synthetic scenes.

pub mod align;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mls;
pub mod octree;
pub mod outlier;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod spatial;
pub mod sweep;
pub mod synth;
pub mod upsample;

pub use error::{Error, Result};
pub use geometry::{
    bounding_box, centroid, Aabb, EulerAngles, Point3, PointCloud, Pose, Quaternion, Trajectory,
};
pub use spatial::{KdTree, Neighbor};
