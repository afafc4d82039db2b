//! Adaptive-truncation TSDF reconstruction from LiDAR scans, MRF-based mesh
//! texturing and semantic labeling.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`, which
//! is what the pipeline uses.

pub mod camera;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mesher;
pub mod mrf;
pub mod scalar;
pub mod semantic;
pub mod synthbench;
pub mod texturing;
pub mod visibility;
pub mod volume;

pub use camera::{CameraFrame, Image8, ImageBuffer, ImageF, Intrinsics, PinholeCamera};
pub use error::{FormatError, GeometryError, MeshError, MrfError, SemanticError, SynthError, TextureError, VolumeError};
pub use geometry::{Aabb, Mat3, RigidPose, Vec3};
pub use scalar::Real;
pub use mrf::{solve, MrfProblem, Solution, SolverConfig};
pub use mesher::{build_adjacency, extract_mesh, FaceAdjacency, TriangleMesh};
pub use visibility::{compute_visibility, Bvh, VisibilityConfig, VisibilityTable};
pub use volume::{BlockStatistics, Footprint, IntegrationConfig, PlaneEstimate, TruncationConfig, TsdfVolume};

pub type Vec3d = Vec3<f64>;
pub type Vec3f = Vec3<f32>;
pub type Mat3d = Mat3<f64>;
pub type Pose = RigidPose<f64>;
pub type Camera = PinholeCamera<f64>;
pub type Frame = CameraFrame<f64>;
pub type Volume = TsdfVolume<f64>;
pub type VolumeF32 = TsdfVolume<f32>;
pub type Mesh = TriangleMesh<f64>;
