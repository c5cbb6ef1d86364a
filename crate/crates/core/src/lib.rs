//! Core engine of a trans-rectal ultrasound biopsy trainer.
//!
//! * [`volume`]: voxel volumes, trilinear reslicing, sector masks and a
//!   seeded synthetic phantom.
//! * [`probe`]: pivot-constrained probe kinematics, image planes and the
//!   needle guide.
//! * [`anatomy`]: gland meshes, segment/mesh intersection and the 12-zone
//!   grid.
//! * [`biopsy`]: needle firing and protocol scoring.
//! * [`exercises`]: exercise grading and recommendations.
//!
//! Everything geometric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common double-precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anatomy;
pub mod biopsy;
pub mod exercises;
pub mod geom;
pub mod probe;
pub mod scalar;
pub mod volume;

pub use scalar::Real;

pub type Vec3d = geom::Vec3<f64>;
pub type Vec3f = geom::Vec3<f32>;
pub type Quatd = geom::Quat<f64>;
pub type Segmentd = geom::Segment<f64>;

pub type Volume = volume::UsVolume<f64>;
pub type Volume32 = volume::UsVolume<f32>;
pub type Plane = volume::SlicePlane<f64>;
pub type Slice = volume::SliceImage<f64>;
pub type Phantom = volume::PhantomSpec<f64>;

pub type Mesh = anatomy::TriMesh<f64>;
pub type Mesh32 = anatomy::TriMesh<f32>;
pub type Prostate = anatomy::ProstateModel<f64>;
pub type Grid = anatomy::ZoneGrid<f64>;

pub type Probe = probe::ProbeSpec<f64>;
pub type Pose = probe::ProbePose<f64>;
pub type Device = probe::DevicePose<f64>;
pub type Guide = probe::GuideLine<f64>;

pub type Needle = biopsy::NeedleSpec<f64>;
pub type Sample = biopsy::BiopsySample<f64>;
pub type Protocol = biopsy::ProtocolResult<f64>;
pub type TargetSpec = biopsy::Target<f64>;
