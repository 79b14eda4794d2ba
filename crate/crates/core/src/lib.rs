//! Bas-relief generation from point clouds with normals.
//!
//! A cloud is aligned to the view axis, reduced to its visible points and
//! sampled into a sparse control set. Control heights come from a
//! prefactored sparse least-squares system whose right-hand side encodes
//! compressed normals; per-frame parameter changes only touch that
//! right-hand side. Control compression ratios are spread to every visible
//! point with multilevel B-splines, detail is added back from curvature and
//! vertex normals are refreshed over a fixed Delaunay triangulation.

pub mod base;
pub mod cloud;
pub mod compression;
pub mod curvature;
pub mod detail;
pub mod error;
pub mod io;
pub mod jet;
pub mod mapping;
pub mod mba;
pub mod mesh;
pub mod sampling;
pub mod session;
pub mod solver;
pub mod spatial;
pub mod synth;
pub mod target;
pub mod viewprep;

pub use base::BaseSurface;
pub use cloud::{estimate_density, Aabb, PointCloud, SamplingDensity};
pub use compression::{
    boundary_weight, compress_normals, curvature_weight, CompressedNormals, ReliefParams,
};
pub use curvature::{mean_curvature_field, normalize_curvature, CurvatureField, MlsConfig};
pub use detail::enhance_details;
pub use error::{ReliefError, Result};
pub use io::{load_cloud, load_mesh, save_cloud, save_mesh, CloudFormat, MeshFormat};
pub use mapping::{build_reference, map_heights, ReferenceRelief};
pub use mba::RatioField;
pub use mesh::{triangulate_xy, ReliefMesh};
pub use sampling::{sample_controls, ControlSet};
pub use session::{
    prepare_session, solve_for_height, FrameResult, PrepareTimings, Session, SessionConfig,
    StageTimings,
};
pub use solver::{assemble_system, height_span, solve_heights, HeightSolution, LinearSystem};
pub use target::{TargetOutcome, TargetProgress, TargetRequest};
pub use viewprep::{
    align_view, detect_boundary, detect_visible, BoundaryInfo, ViewFrame, VisibleSet,
};

pub use nalgebra::{Point3, Vector3};
