//! Procedural trans-rectal phantoms: a hypoechoic prostate ellipsoid, an
//! anechoic bladder, a bright rectal-wall arc and multiplicative speckle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Result, UsVolume, VolumeError};
use crate::geom::Vec3;
use crate::scalar::{lit, to_intensity, Real};

/// Ground-truth tissue label of a phantom voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    RectalWall = 1,
    Prostate = 2,
    Bladder = 3,
}

/// Bright arc of the anterior rectal wall, a cylindrical shell around an
/// axis parallel to world z, opening towards +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectalWall<T> {
    /// (x, y) of the cylinder axis.
    pub axis_xy: [T; 2],
    pub inner_radius_mm: T,
    pub thickness_mm: T,
    pub half_angle_deg: T,
    pub z_min_mm: T,
    pub z_max_mm: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec<T> {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: Vec3<T>,
    pub origin: Vec3<T>,
    pub prostate_center: Vec3<T>,
    /// Semi-axes along world x, y, z.
    pub prostate_semi_axes: Vec3<T>,
    pub bladder_center: Vec3<T>,
    pub bladder_radius_mm: T,
    pub rectal_wall: RectalWall<T>,
    /// Half-width of the uniform speckle factor around 1.
    pub speckle_contrast: T,
    pub interior_mean: T,
    pub exterior_mean: T,
    pub bladder_mean: T,
    pub wall_mean: T,
}

impl<T: Real> Default for PhantomSpec<T> {
    /// 128³ voxels at 0.8 mm. The probe pivot sits at the world origin
    /// looking along +z; the gland lies anterior (+x) of the rectum.
    fn default() -> Self {
        let v = Vec3::from_f64;
        Self {
            seed: 2011,
            dims: [128, 128, 128],
            spacing: v([0.8, 0.8, 0.8]),
            origin: v([-25.6, -50.8, 0.0]),
            prostate_center: v([18.0, 0.0, 55.0]),
            prostate_semi_axes: v([12.0, 20.0, 16.0]),
            bladder_center: v([22.0, 0.0, 86.0]),
            bladder_radius_mm: lit(12.0),
            rectal_wall: RectalWall {
                axis_xy: [T::zero(), T::zero()],
                inner_radius_mm: lit(3.5),
                thickness_mm: lit(2.0),
                half_angle_deg: lit(70.0),
                z_min_mm: lit(5.0),
                z_max_mm: lit(95.0),
            },
            speckle_contrast: lit(0.35),
            interior_mean: lit(70.0),
            exterior_mean: lit(115.0),
            bladder_mean: lit(6.0),
            wall_mean: lit(215.0),
        }
    }
}

impl<T: Real> PhantomSpec<T> {
    /// Same anatomy on a different voxel grid, centred on the same hull.
    pub fn with_grid(mut self, dims: [usize; 3], spacing: Vec3<T>) -> Self {
        let two = lit::<T>(2.0);
        let old_mid = self.origin + self.grid_extent() / two;
        self.dims = dims;
        self.spacing = spacing;
        self.origin = old_mid - self.grid_extent() / two;
        self
    }

    fn grid_extent(&self) -> Vec3<T> {
        let n = |a: usize| T::from_usize(self.dims[a] - 1).unwrap();
        Vec3::new(n(0), n(1), n(2)).component_mul(self.spacing)
    }

    /// `(x/a)² + (y/b)² + (z/c)²` relative to the prostate centre.
    pub fn prostate_level(&self, p: Vec3<T>) -> T {
        let q = (p - self.prostate_center).component_div(self.prostate_semi_axes);
        q.norm_squared()
    }

    pub fn tissue_at(&self, p: Vec3<T>) -> Tissue {
        if p.distance(self.bladder_center) <= self.bladder_radius_mm {
            return Tissue::Bladder;
        }
        if self.prostate_level(p) <= T::one() {
            return Tissue::Prostate;
        }
        let w = &self.rectal_wall;
        if p.z >= w.z_min_mm && p.z <= w.z_max_mm {
            let dx = p.x - w.axis_xy[0];
            let dy = p.y - w.axis_xy[1];
            let r = dx.hypot(dy);
            if r >= w.inner_radius_mm
                && r <= w.inner_radius_mm + w.thickness_mm
                && dy.atan2(dx).abs() <= w.half_angle_deg.to_radians()
            {
                return Tissue::RectalWall;
            }
        }
        Tissue::Background
    }

    fn mean_of(&self, t: Tissue) -> T {
        match t {
            Tissue::Background => self.exterior_mean,
            Tissue::RectalWall => self.wall_mean,
            Tissue::Prostate => self.interior_mean,
            Tissue::Bladder => self.bladder_mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 2) {
            return Err(VolumeError::InvalidDims(self.dims));
        }
        let sp = self.spacing;
        if [sp.x, sp.y, sp.z].iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(VolumeError::InvalidSpacing(sp.to_f64()));
        }
        if !self.origin.is_finite() {
            return Err(VolumeError::InvalidOrigin);
        }
        let bad = |m: &str| Err(VolumeError::InvalidPhantom(m.to_owned()));
        let sa = self.prostate_semi_axes;
        if !(sa.x > T::zero() && sa.y > T::zero() && sa.z > T::zero()) {
            return bad("prostate semi-axes must be > 0");
        }
        if !(self.bladder_radius_mm > T::zero()) {
            return bad("bladder radius must be > 0");
        }
        let w = &self.rectal_wall;
        if !(w.inner_radius_mm >= T::zero() && w.thickness_mm > T::zero() && w.z_min_mm < w.z_max_mm) {
            return bad("rectal wall needs inner radius >= 0, thickness > 0, z_min < z_max");
        }
        if !(self.speckle_contrast >= T::zero() && self.speckle_contrast <= T::one()) {
            return bad("speckle contrast must lie in [0, 1]");
        }
        let levels = [
            self.interior_mean,
            self.exterior_mean,
            self.bladder_mean,
            self.wall_mean,
        ];
        if levels.iter().any(|l| !(*l >= T::zero() && *l <= lit(255.0))) {
            return bad("mean intensities must lie in [0, 255]");
        }
        if !(self.interior_mean < self.exterior_mean) {
            return bad("prostate must be hypoechoic (interior mean < exterior mean)");
        }

        let lo = self.origin;
        let hi = self.origin + self.grid_extent();
        let fits = |name: &str, a: Vec3<T>, b: Vec3<T>| -> Result<()> {
            let ok = a.x >= lo.x && a.y >= lo.y && a.z >= lo.z && b.x <= hi.x && b.y <= hi.y && b.z <= hi.z;
            if ok {
                Ok(())
            } else {
                Err(VolumeError::PhantomOutOfBounds(format!(
                    "{name} spans {:?}..{:?}, volume hull is {:?}..{:?}",
                    a.to_f64(),
                    b.to_f64(),
                    lo.to_f64(),
                    hi.to_f64()
                )))
            }
        };
        fits("prostate", self.prostate_center - sa, self.prostate_center + sa)?;
        let r = Vec3::new(self.bladder_radius_mm, self.bladder_radius_mm, self.bladder_radius_mm);
        fits("bladder", self.bladder_center - r, self.bladder_center + r)?;
        let outer = w.inner_radius_mm + w.thickness_mm;
        fits(
            "rectal wall",
            Vec3::new(w.axis_xy[0] - outer, w.axis_xy[1] - outer, w.z_min_mm),
            Vec3::new(w.axis_xy[0] + outer, w.axis_xy[1] + outer, w.z_max_mm),
        )
    }
}

/// Generates the phantom volume. Deterministic for a fixed spec.
pub fn generate_phantom<T: Real>(spec: &PhantomSpec<T>) -> Result<UsVolume<T>> {
    generate_phantom_labeled(spec).map(|(v, _)| v)
}

/// Generates the phantom together with its per-voxel tissue labels.
///
/// Each z-slab draws its speckle from its own ChaCha stream keyed by the
/// seed, so the output is independent of thread scheduling.
pub fn generate_phantom_labeled<T: Real>(spec: &PhantomSpec<T>) -> Result<(UsVolume<T>, Vec<Tissue>)> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let slab = nx * ny;
    let mut voxels = vec![0u8; slab * nz];
    let mut labels = vec![Tissue::Background; slab * nz];
    let contrast = spec.speckle_contrast;
    let one = T::one();
    let two = lit::<T>(2.0);
    voxels
        .par_chunks_mut(slab)
        .zip(labels.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(k, (vs, ls))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let z = spec.origin.z + T::from_usize(k).unwrap() * spec.spacing.z;
            for j in 0..ny {
                let y = spec.origin.y + T::from_usize(j).unwrap() * spec.spacing.y;
                for i in 0..nx {
                    let x = spec.origin.x + T::from_usize(i).unwrap() * spec.spacing.x;
                    let tissue = spec.tissue_at(Vec3::new(x, y, z));
                    let u: f64 = rng.random();
                    let factor = one + contrast * (two * lit::<T>(u) - one);
                    let idx = i + nx * j;
                    ls[idx] = tissue;
                    vs[idx] = to_intensity(spec.mean_of(tissue) * factor);
                }
            }
        });
    let vol = UsVolume::new(spec.dims, spec.spacing, spec.origin, voxels)?;
    Ok((vol, labels))
}
