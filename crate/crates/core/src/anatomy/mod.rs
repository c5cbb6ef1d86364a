//! Prostate geometry: triangle meshes, bounding boxes, the 12-zone
//! decomposition and the predicates used to evaluate needle cores.

mod mesh;
mod obj;
mod zones;

use thiserror::Error;

pub use mesh::{generate_ellipsoid_mesh, mesh_aabb, Aabb, InsideSpan, TriMesh};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use zones::{build_zone_grid, Axis, AxisAssignment, AxisRole, CcLevel, Ml, Side, ZoneGrid, ZoneId};

use crate::geom::Vec3;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AnatomyError {
    #[error("mesh has no vertices or triangles")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index}, mesh has {count}")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("mesh is not a closed orientable manifold: {0}")]
    NotClosed(String),
    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(&'static str),
    #[error("degenerate bounding box: min must be < max on every axis")]
    DegenerateBox,
    #[error("zone axis assignment uses world axis {0:?} twice")]
    DuplicateAxis(Axis),
    #[error("OBJ line {line}: {msg}")]
    Obj { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AnatomyError> = std::result::Result<T, E>;

/// The gland as seen by the scorer: surface mesh, its bounding box, and the
/// zone grid laid over that box.
#[derive(Debug, Clone)]
pub struct ProstateModel<T> {
    pub mesh: TriMesh<T>,
    pub grid: ZoneGrid<T>,
}

impl<T: Real> ProstateModel<T> {
    pub fn new(mesh: TriMesh<T>, axes: AxisAssignment) -> Result<Self> {
        mesh.check_closed()?;
        let bbox = mesh_aabb(&mesh)?;
        let grid = build_zone_grid(bbox, axes)?;
        Ok(Self { mesh, grid })
    }

    /// Ellipsoid gland of the given semi-axes.
    pub fn ellipsoid(center: Vec3<T>, semi_axes: Vec3<T>, subdivisions: u32, axes: AxisAssignment) -> Result<Self> {
        Self::new(generate_ellipsoid_mesh(center, semi_axes, subdivisions)?, axes)
    }

    pub fn aabb(&self) -> &Aabb<T> {
        &self.grid.bbox
    }
}
