//! Volumetric ultrasound data: trilinear sampling, oblique reslicing and
//! fan-shaped sector masking.
//!
//! World coordinates are millimetres. Voxel `(i, j, k)` has its centre at
//! `origin + (i·sx, j·sy, k·sz)` and is stored at `i + nx·(j + ny·k)`.

mod io;
mod phantom;

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Vec3;
use crate::scalar::{lit, to_intensity, tol, Real};

pub use io::{load_volume, read_volume, save_volume, write_pgm, write_volume};
pub use phantom::{generate_phantom, generate_phantom_labeled, PhantomSpec, RectalWall, Tissue};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume dimensions must all be >= 2, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("voxel spacing must be finite and > 0, got {0:?}")]
    InvalidSpacing([f64; 3]),
    #[error("volume origin must be finite")]
    InvalidOrigin,
    #[error("expected {expected} voxels, got {found}")]
    VoxelCount { expected: usize, found: usize },
    #[error("not a USVOL1 file")]
    BadMagic,
    #[error("malformed USVOL header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: header declares {expected} voxels, file holds {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} unexpected bytes after voxel payload")]
    TrailingData(usize),
    #[error("degenerate slice plane: {0}")]
    DegeneratePlane(&'static str),
    #[error("invalid sector mask: {0}")]
    InvalidSector(&'static str),
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("phantom geometry exceeds the volume: {0}")]
    PhantomOutOfBounds(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

/// An 8-bit intensity grid with physical spacing. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct UsVolume<T> {
    dims: [usize; 3],
    spacing: Vec3<T>,
    origin: Vec3<T>,
    voxels: Vec<u8>,
}

impl<T: Real> UsVolume<T> {
    pub fn new(dims: [usize; 3], spacing: Vec3<T>, origin: Vec3<T>, voxels: Vec<u8>) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(VolumeError::InvalidDims(dims));
        }
        let sp = [spacing.x, spacing.y, spacing.z];
        if sp.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(VolumeError::InvalidSpacing(spacing.to_f64()));
        }
        if !origin.is_finite() {
            return Err(VolumeError::InvalidOrigin);
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(VolumeError::InvalidDims(dims))?;
        if voxels.len() != expected {
            return Err(VolumeError::VoxelCount {
                expected,
                found: voxels.len(),
            });
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            voxels,
        })
    }

    /// A volume filled with a constant value.
    pub fn filled(dims: [usize; 3], spacing: Vec3<T>, origin: Vec3<T>, value: u8) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3<T> {
        self.spacing
    }

    pub fn origin(&self) -> Vec3<T> {
        self.origin
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn voxel(&self, i: usize, j: usize, k: usize) -> u8 {
        self.voxels[self.index(i, j, k)]
    }

    /// World position of a voxel centre.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        let idx = Vec3::new(
            T::from_usize(i).unwrap(),
            T::from_usize(j).unwrap(),
            T::from_usize(k).unwrap(),
        );
        self.origin + idx.component_mul(self.spacing)
    }

    /// Upper corner of the voxel-centre hull.
    pub fn hull_max(&self) -> Vec3<T> {
        self.voxel_center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn voxel_volume_mm3(&self) -> T {
        self.spacing.x * self.spacing.y * self.spacing.z
    }

    /// Trilinear blend of the 8 voxel centres around `p`.
    ///
    /// Points outside the voxel-centre hull return 0. A slack of
    /// `sqrt(eps)` voxels absorbs rounding on the hull faces.
    #[inline]
    pub fn sample_trilinear(&self, p: Vec3<T>) -> T {
        Sampler::new(self).sample(p)
    }

    /// Resamples the volume on `plane`, one trilinear sample per pixel
    /// centre, rounded half-up to 8 bits. The mask is all-true.
    ///
    /// Each pixel equals `sample_trilinear(plane.pixel_center(i, j))`
    /// bit for bit; the per-row and per-column terms are only hoisted.
    pub fn extract_slice(&self, plane: &SlicePlane<T>) -> Result<SliceImage<T>> {
        plane.validate()?;
        let (w, h) = (plane.px_w, plane.px_h);
        let sampler = Sampler::new(self);
        let cols: Vec<Vec3<T>> = (0..w)
            .map(|i| plane.center + plane.u_axis * plane.offset_u(i))
            .collect();
        let mut pixels = vec![0u8; w * h];
        pixels.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
            let dv = plane.v_axis * plane.offset_v(j);
            for (px, &c) in row.iter_mut().zip(&cols) {
                *px = to_intensity(sampler.sample(c + dv));
            }
        });
        Ok(SliceImage {
            px_w: w,
            px_h: h,
            mm_per_px_u: plane.mm_per_px_u(),
            mm_per_px_v: plane.mm_per_px_v(),
            pixels,
            mask: vec![true; w * h],
        })
    }
}

/// Per-volume constants of the trilinear kernel.
struct Sampler<'a, T> {
    voxels: &'a [u8],
    dims: [usize; 3],
    origin: Vec3<T>,
    inv_spacing: Vec3<T>,
    hi: [T; 3],
    slack: T,
}

impl<'a, T: Real> Sampler<'a, T> {
    #[inline]
    fn new(vol: &'a UsVolume<T>) -> Self {
        Self {
            voxels: &vol.voxels,
            dims: vol.dims,
            origin: vol.origin,
            inv_spacing: Vec3::new(
                T::one() / vol.spacing.x,
                T::one() / vol.spacing.y,
                T::one() / vol.spacing.z,
            ),
            hi: vol.dims.map(|n| T::from_usize(n - 1).unwrap()),
            slack: T::epsilon().sqrt(),
        }
    }

    #[inline(always)]
    fn sample(&self, p: Vec3<T>) -> T {
        let c = (p - self.origin).component_mul(self.inv_spacing);
        let mut base = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let hi = self.hi[a];
            let ca = c[a];
            // NaN fails both comparisons and falls through to padding.
            if !(ca >= -self.slack && ca <= hi + self.slack) {
                return T::zero();
            }
            let ca = ca.max(T::zero()).min(hi);
            // truncation is floor here since ca >= 0
            let mut i0 = ca.to_usize().unwrap_or(0);
            if i0 > self.dims[a] - 2 {
                i0 = self.dims[a] - 2;
            }
            base[a] = i0;
            frac[a] = ca - T::from_usize(i0).unwrap();
        }
        let [fx, fy, fz] = frac;
        let [i, j, k] = base;
        let nx = self.dims[0];
        let nxy = nx * self.dims[1];
        let i000 = i + nx * j + nxy * k;
        let cell = &self.voxels[i000..i000 + nxy + nx + 2];
        let v = |off: usize| T::from_u8(cell[off]).unwrap();
        let one = T::one();
        let c00 = v(0) * (one - fx) + v(1) * fx;
        let c10 = v(nx) * (one - fx) + v(nx + 1) * fx;
        let c01 = v(nxy) * (one - fx) + v(nxy + 1) * fx;
        let c11 = v(nxy + nx) * (one - fx) + v(nxy + nx + 1) * fx;
        let c0 = c00 * (one - fy) + c10 * fy;
        let c1 = c01 * (one - fy) + c11 * fy;
        c0 * (one - fz) + c1 * fz
    }
}

/// An oriented rectangle in world space sampled on a pixel grid.
///
/// Rows advance along `v_axis`, columns along `u_axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePlane<T> {
    pub center: Vec3<T>,
    pub u_axis: Vec3<T>,
    pub v_axis: Vec3<T>,
    pub width_mm: T,
    pub height_mm: T,
    pub px_w: usize,
    pub px_h: usize,
}

impl<T: Real> SlicePlane<T> {
    pub fn new(
        center: Vec3<T>,
        u_axis: Vec3<T>,
        v_axis: Vec3<T>,
        width_mm: T,
        height_mm: T,
        px_w: usize,
        px_h: usize,
    ) -> Result<Self> {
        let plane = Self {
            center,
            u_axis,
            v_axis,
            width_mm,
            height_mm,
            px_w,
            px_h,
        };
        plane.validate()?;
        Ok(plane)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = tol::<T>(1e-9);
        if (self.u_axis.norm() - T::one()).abs() > eps || (self.v_axis.norm() - T::one()).abs() > eps {
            return Err(VolumeError::DegeneratePlane("axes must be unit length"));
        }
        if self.u_axis.dot(self.v_axis).abs() > eps {
            return Err(VolumeError::DegeneratePlane("axes must be orthogonal"));
        }
        if !(self.width_mm > T::zero() && self.height_mm > T::zero()) {
            return Err(VolumeError::DegeneratePlane("extent must be positive"));
        }
        if self.px_w < 2 || self.px_h < 2 {
            return Err(VolumeError::DegeneratePlane("resolution must be at least 2x2"));
        }
        if !self.center.is_finite() {
            return Err(VolumeError::DegeneratePlane("centre must be finite"));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vec3<T> {
        self.u_axis.cross(self.v_axis)
    }

    pub fn mm_per_px_u(&self) -> T {
        self.width_mm / T::from_usize(self.px_w).unwrap()
    }

    pub fn mm_per_px_v(&self) -> T {
        self.height_mm / T::from_usize(self.px_h).unwrap()
    }

    /// World position of the centre of pixel `(i, j)`.
    #[inline]
    pub fn pixel_center(&self, i: usize, j: usize) -> Vec3<T> {
        self.center + self.u_axis * self.offset_u(i) + self.v_axis * self.offset_v(j)
    }

    #[inline]
    fn offset_u(&self, i: usize) -> T {
        let half = lit::<T>(0.5);
        (T::from_usize(i).unwrap() + half - T::from_usize(self.px_w).unwrap() / lit(2.0)) * self.mm_per_px_u()
    }

    #[inline]
    fn offset_v(&self, j: usize) -> T {
        let half = lit::<T>(0.5);
        (T::from_usize(j).unwrap() + half - T::from_usize(self.px_h).unwrap() / lit(2.0)) * self.mm_per_px_v()
    }

    /// Signed distance of `p` from the plane.
    pub fn signed_distance(&self, p: Vec3<T>) -> T {
        (p - self.center).dot(self.normal())
    }
}

/// A resampled 2D frame. `pixels[j·px_w + i]`, row `j` along the plane's v axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage<T> {
    pub px_w: usize,
    pub px_h: usize,
    pub mm_per_px_u: T,
    pub mm_per_px_v: T,
    pub pixels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl<T: Real> SliceImage<T> {
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> u8 {
        self.pixels[j * self.px_w + i]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Zeroes everything outside an annular fan.
    ///
    /// The fan opens from `apex_px` (pixel coordinates, pixel `(i, j)`
    /// centred at `(i + 0.5, j + 0.5)`) towards increasing `j`, spanning
    /// `fov_deg` symmetrically, between radii `r_min_mm` and `r_max_mm`.
    pub fn apply_sector_mask(mut self, fov_deg: T, r_min_mm: T, r_max_mm: T, apex_px: (T, T)) -> Result<Self> {
        if !(fov_deg > T::zero() && fov_deg <= lit(360.0)) {
            return Err(VolumeError::InvalidSector("field of view must be in (0, 360] degrees"));
        }
        if !(r_min_mm >= T::zero() && r_min_mm < r_max_mm) {
            return Err(VolumeError::InvalidSector("radii must satisfy 0 <= r_min < r_max"));
        }
        if !(apex_px.0.is_finite() && apex_px.1.is_finite()) {
            return Err(VolumeError::InvalidSector("apex must be finite"));
        }
        let half_fov = fov_deg.to_radians() / lit(2.0);
        let half = lit::<T>(0.5);
        let (w, mmu, mmv) = (self.px_w, self.mm_per_px_u, self.mm_per_px_v);
        self.pixels
            .par_chunks_mut(w)
            .zip(self.mask.par_chunks_mut(w))
            .enumerate()
            .for_each(|(j, (row, mrow))| {
                let dy = (T::from_usize(j).unwrap() + half - apex_px.1) * mmv;
                for i in 0..w {
                    let dx = (T::from_usize(i).unwrap() + half - apex_px.0) * mmu;
                    let r = dx.hypot(dy);
                    let inside = r >= r_min_mm && r <= r_max_mm && dx.atan2(dy).abs() <= half_fov;
                    if !inside {
                        row[i] = 0;
                        mrow[i] = false;
                    }
                }
            });
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3]) -> UsVolume<f64> {
        let n = dims.iter().product();
        let vox = (0..n).map(|i| ((i * 37 + 11) % 256) as u8).collect();
        UsVolume::new(dims, Vec3::new(0.5, 0.75, 1.0), Vec3::new(-3.0, 2.0, 1.0), vox).unwrap()
    }

    /// Explicit 8-corner weighted sum, written independently of the
    /// nested-lerp form used by `sample_trilinear`.
    fn corner_oracle(vol: &UsVolume<f64>, p: Vec3<f64>) -> f64 {
        let [nx, ny, nz] = vol.dims();
        let s = vol.spacing();
        let o = vol.origin();
        let c = [(p.x - o.x) / s.x, (p.y - o.y) / s.y, (p.z - o.z) / s.z];
        let n = [nx, ny, nz];
        let mut base = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..3 {
            let b = (c[a].floor() as usize).min(n[a] - 2);
            base[a] = b;
            f[a] = c[a] - b as f64;
        }
        let mut sum = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let wx = if dx == 1 { f[0] } else { 1.0 - f[0] };
                    let wy = if dy == 1 { f[1] } else { 1.0 - f[1] };
                    let wz = if dz == 1 { f[2] } else { 1.0 - f[2] };
                    let v = vol.voxel(base[0] + dx, base[1] + dy, base[2] + dz) as f64;
                    sum += wx * wy * wz * v;
                }
            }
        }
        sum
    }

    #[test]
    fn rejects_invalid_construction() {
        let o = Vec3::zero();
        let s = Vec3::new(1.0, 1.0, 1.0_f64);
        assert!(matches!(
            UsVolume::filled([1, 4, 4], s, o, 0),
            Err(VolumeError::InvalidDims(_))
        ));
        assert!(matches!(
            UsVolume::filled([4, 4, 4], Vec3::new(1.0, 0.0, 1.0), o, 0),
            Err(VolumeError::InvalidSpacing(_))
        ));
        assert!(matches!(
            UsVolume::new([2, 2, 2], s, o, vec![0; 7]),
            Err(VolumeError::VoxelCount { expected: 8, found: 7 })
        ));
    }

    #[test]
    fn sample_at_voxel_center_is_exact() {
        let mut vox = vec![0u8; 4 * 4 * 4];
        vox[1 + 4 * (2 + 4 * 3)] = 137;
        let vol = UsVolume::new([4, 4, 4], Vec3::new(0.5, 0.75, 1.0), Vec3::new(-3.0, 2.0, 1.0), vox).unwrap();
        assert_eq!(vol.sample_trilinear(vol.voxel_center(1, 2, 3)), 137.0);
        // last voxel along every axis takes the upper-cell branch
        let mut vox = vec![0u8; 8];
        vox[7] = 200;
        let vol = UsVolume::new([2, 2, 2], Vec3::new(1.0, 1.0, 1.0), Vec3::zero(), vox).unwrap();
        assert_eq!(vol.sample_trilinear(Vec3::new(1.0, 1.0, 1.0)), 200.0);
    }

    #[test]
    fn sample_between_x_neighbours_is_midpoint() {
        let mut vox = vec![0u8; 8];
        vox[1] = 100;
        let vol = UsVolume::<f64>::new([2, 2, 2], Vec3::new(2.0, 2.0, 2.0), Vec3::zero(), vox).unwrap();
        assert_eq!(vol.sample_trilinear(Vec3::new(1.0, 0.0, 0.0)), 50.0);
    }

    #[test]
    fn trilinear_matches_corner_oracle() {
        use rand::{Rng, SeedableRng};
        let vol = ramp([9, 7, 6]);
        let hi = vol.hull_max();
        let lo = vol.origin();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            );
            worst = worst.max((vol.sample_trilinear(p) - corner_oracle(&vol, p)).abs());
        }
        assert!(worst <= 1e-9, "max diff {worst}");
    }

    #[test]
    fn axis_aligned_slice_reproduces_slab() {
        let vol = ramp([12, 10, 5]);
        let k = 3;
        let s = vol.spacing();
        let center = (vol.voxel_center(0, 0, k) + vol.voxel_center(11, 9, k)) * 0.5;
        let plane = SlicePlane::new(center, Vec3::unit_x(), Vec3::unit_y(), 12.0 * s.x, 10.0 * s.y, 12, 10).unwrap();
        let img = vol.extract_slice(&plane).unwrap();
        for j in 0..10 {
            for i in 0..12 {
                assert_eq!(img.pixel(i, j), vol.voxel(i, j, k), "pixel ({i},{j})");
            }
        }
        assert!(img.mask.iter().all(|m| *m));
    }

    #[test]
    fn half_turn_in_plane_rotates_image() {
        let vol = ramp([16, 16, 16]);
        let c = Vec3::new(0.7, 7.1, 8.3);
        let u = Vec3::new(1.0, 2.0, 0.5).normalized().unwrap();
        let v = u.cross(Vec3::new(0.3, -0.2, 1.0)).normalized().unwrap();
        let a = SlicePlane::new(c, u, v, 9.0, 7.0, 31, 23).unwrap();
        let b = SlicePlane::new(c, -u, -v, 9.0, 7.0, 31, 23).unwrap();
        let ia = vol.extract_slice(&a).unwrap();
        let ib = vol.extract_slice(&b).unwrap();
        for j in 0..23 {
            for i in 0..31 {
                assert_eq!(ib.pixel(i, j), ia.pixel(30 - i, 22 - j));
            }
        }
    }

    #[test]
    fn degenerate_planes_rejected() {
        let c = Vec3::zero();
        let x = Vec3::unit_x();
        assert!(SlicePlane::new(c, x, x, 1.0_f64, 1.0, 4, 4).is_err());
        assert!(SlicePlane::new(c, x * 2.0, Vec3::unit_y(), 1.0_f64, 1.0, 4, 4).is_err());
        assert!(SlicePlane::new(c, x, Vec3::unit_y(), 1.0_f64, 1.0, 1, 4).is_err());
        let mut p = SlicePlane::new(c, x, Vec3::unit_y(), 1.0_f64, 1.0, 4, 4).unwrap();
        p.v_axis = Vec3::new(0.1, 1.0, 0.0);
        let vol = ramp([4, 4, 4]);
        assert!(matches!(vol.extract_slice(&p), Err(VolumeError::DegeneratePlane(_))));
    }

    fn test_image(w: usize, h: usize) -> SliceImage<f64> {
        SliceImage {
            px_w: w,
            px_h: h,
            mm_per_px_u: 0.5,
            mm_per_px_v: 0.25,
            pixels: (0..w * h).map(|i| (i % 251) as u8 + 1).collect(),
            mask: vec![true; w * h],
        }
    }

    #[test]
    fn full_circle_mask_is_identity() {
        let img = test_image(40, 30);
        let diag = (20.0f64 * 20.0 + 7.5 * 7.5).sqrt();
        let out = img
            .clone()
            .apply_sector_mask(360.0, 0.0, diag + 1.0, (0.0, 0.0))
            .unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn sector_parameters_validated() {
        let img = test_image(8, 8);
        assert!(img.clone().apply_sector_mask(0.0, 0.0, 5.0, (4.0, 0.0)).is_err());
        assert!(img.clone().apply_sector_mask(361.0, 0.0, 5.0, (4.0, 0.0)).is_err());
        assert!(img.clone().apply_sector_mask(90.0, 5.0, 5.0, (4.0, 0.0)).is_err());
        assert!(img.clone().apply_sector_mask(90.0, -1.0, 5.0, (4.0, 0.0)).is_err());
        assert!(img.apply_sector_mask(90.0, 0.0, 5.0, (4.0, 0.0)).is_ok());
    }

    #[test]
    fn sector_matches_per_pixel_geometry() {
        let (w, h) = (64usize, 48usize);
        let img = test_image(w, h);
        let apex = (w as f64 / 2.0, 0.0);
        let (fov, rmin, rmax) = (140.0_f64, 1.5, 10.0);
        let out = img.clone().apply_sector_mask(fov, rmin, rmax, apex).unwrap();
        let mut expected = 0usize;
        for j in 0..h {
            for i in 0..w {
                // angle from the +v (row) direction, in degrees
                let x = (i as f64 + 0.5 - apex.0) * 0.5;
                let y = (j as f64 + 0.5 - apex.1) * 0.25;
                let r = (x * x + y * y).sqrt();
                let ang = x.atan2(y).to_degrees().abs();
                let inside = r >= rmin && r <= rmax && ang <= fov / 2.0;
                expected += inside as usize;
                assert_eq!(out.mask[j * w + i], inside);
                let want = if inside { img.pixel(i, j) } else { 0 };
                assert_eq!(out.pixel(i, j), want);
            }
        }
        assert!(expected > 0 && expected < w * h);
        assert_eq!(out.masked_count(), expected);
    }

    proptest! {
        #[test]
        fn interpolation_stays_within_corner_range(
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, fz in 0.0f64..1.0,
            i in 0usize..8, j in 0usize..6, k in 0usize..5,
        ) {
            let vol = ramp([9, 7, 6]);
            let p = vol.voxel_center(i, j, k) + Vec3::new(fx, fy, fz).component_mul(vol.spacing());
            let corners: Vec<u8> = (0..8)
                .map(|c| vol.voxel(i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2)))
                .collect();
            let lo = *corners.iter().min().unwrap() as f64;
            let hi = *corners.iter().max().unwrap() as f64;
            let v = vol.sample_trilinear(p);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }

        #[test]
        fn outside_hull_pads_with_zero(
            axis in 0usize..3, below in any::<bool>(), margin in 1e-6f64..50.0,
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let vol = UsVolume::filled([5, 6, 7], Vec3::new(0.5, 0.75, 1.0), Vec3::new(-3.0, 2.0, 1.0), 255).unwrap();
            let lo = vol.origin();
            let hi = vol.hull_max();
            let mut p = [lo.x + a * (hi.x - lo.x), lo.y + b * (hi.y - lo.y), lo.z + a * (hi.z - lo.z)];
            p[axis] = if below { [lo.x, lo.y, lo.z][axis] - margin } else { [hi.x, hi.y, hi.z][axis] + margin };
            prop_assert_eq!(vol.sample_trilinear(Vec3::from(p)), 0.0);
        }
    }
}
