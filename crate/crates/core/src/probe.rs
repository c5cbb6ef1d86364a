//! Pivot-constrained probe kinematics.
//!
//! The probe is a rigid rod through a fixed pivot (the anal sphincter).
//! Its configuration is `(depth, pitch, yaw, roll)`: the local frame has the
//! probe axis along +z and the lateral image direction along +x, and
//!
//! ```text
//! R = Ry(pitch) · Rx(−yaw) · Rz(roll)
//! ```
//!
//! so positive pitch tilts the axis towards world +x and positive yaw
//! towards world +y. The end-fire sagittal image plane is the local x–z
//! plane; the needle guide lies in that plane, tilted towards local +x.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Mat3, Quat, Vec3};
use crate::scalar::{lit, tol, Real};
use crate::volume::SlicePlane;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("device orientation is not a unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("invalid probe spec: {0}")]
    InvalidSpec(&'static str),
    #[error("pose outside probe limits: {0}")]
    PoseOutOfRange(&'static str),
}

/// Raw 6-DOF input from the pose source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePose<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

impl<T: Real> DevicePose<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Result<Self, ProbeError> {
        let pose = Self { position, orientation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let n = self.orientation.norm();
        if !((n - T::one()).abs() <= tol::<T>(1e-9)) || !self.position.is_finite() {
            return Err(ProbeError::NonUnitQuaternion(n.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(())
    }
}

/// Probe geometry and motion limits. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec<T> {
    pub pivot: Vec3<T>,
    pub d_max_mm: T,
    pub tip_offset_mm: T,
    pub guide_angle_deg: T,
    pub guide_offset_mm: T,
    pub pitch_limit_deg: T,
    pub yaw_limit_deg: T,
}

impl<T: Real> Default for ProbeSpec<T> {
    fn default() -> Self {
        Self {
            pivot: Vec3::zero(),
            d_max_mm: lit(60.0),
            tip_offset_mm: lit(20.0),
            guide_angle_deg: lit(5.0),
            guide_offset_mm: T::zero(),
            pitch_limit_deg: lit(30.0),
            yaw_limit_deg: lit(30.0),
        }
    }
}

impl<T: Real> ProbeSpec<T> {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if !(self.d_max_mm > T::zero()) {
            return Err(ProbeError::InvalidSpec("d_max must be > 0"));
        }
        if !(self.guide_angle_deg.abs() < lit(90.0)) {
            return Err(ProbeError::InvalidSpec("|guide angle| must be < 90 degrees"));
        }
        if !(self.pitch_limit_deg > T::zero() && self.yaw_limit_deg > T::zero()) {
            return Err(ProbeError::InvalidSpec("pitch/yaw limits must be positive"));
        }
        if !(self.pitch_limit_deg < lit(180.0) && self.yaw_limit_deg < lit(90.0)) {
            return Err(ProbeError::InvalidSpec(
                "pitch limit must be < 180 and yaw limit < 90 degrees",
            ));
        }
        if !(self.pivot.is_finite() && self.tip_offset_mm.is_finite() && self.guide_offset_mm.is_finite()) {
            return Err(ProbeError::InvalidSpec("non-finite geometry"));
        }
        Ok(())
    }

    fn pitch_limit(&self) -> T {
        self.pitch_limit_deg.to_radians()
    }

    fn yaw_limit(&self) -> T {
        self.yaw_limit_deg.to_radians()
    }
}

/// Constrained probe configuration. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose<T> {
    pub depth_mm: T,
    pub pitch: T,
    pub yaw: T,
    pub roll: T,
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a - two_pi * ((a + T::PI()) / two_pi).floor();
    // r is in [−π, π) here
    if r <= -T::PI() {
        r = r + two_pi;
    }
    r
}

impl<T: Real> ProbePose<T> {
    pub fn identity() -> Self {
        Self {
            depth_mm: T::zero(),
            pitch: T::zero(),
            yaw: T::zero(),
            roll: T::zero(),
        }
    }

    /// Validated pose; roll is wrapped into (−π, π].
    pub fn new(spec: &ProbeSpec<T>, depth_mm: T, pitch: T, yaw: T, roll: T) -> Result<Self, ProbeError> {
        let slack = tol::<T>(1e-12);
        if !(depth_mm >= T::zero() && depth_mm <= spec.d_max_mm) {
            return Err(ProbeError::PoseOutOfRange("depth outside [0, d_max]"));
        }
        if !(pitch.abs() <= spec.pitch_limit() + slack) {
            return Err(ProbeError::PoseOutOfRange("pitch beyond limit"));
        }
        if !(yaw.abs() <= spec.yaw_limit() + slack) {
            return Err(ProbeError::PoseOutOfRange("yaw beyond limit"));
        }
        if !roll.is_finite() {
            return Err(ProbeError::PoseOutOfRange("roll not finite"));
        }
        Ok(Self {
            depth_mm,
            pitch,
            yaw,
            roll: normalize_angle(roll),
        })
    }

    /// Same as [`ProbePose::new`] with angles in degrees.
    pub fn from_degrees(spec: &ProbeSpec<T>, depth_mm: T, pitch: T, yaw: T, roll: T) -> Result<Self, ProbeError> {
        Self::new(spec, depth_mm, pitch.to_radians(), yaw.to_radians(), roll.to_radians())
    }

    pub fn rotation(&self) -> Mat3<T> {
        Mat3::rot_y(self.pitch) * Mat3::rot_x(-self.yaw) * Mat3::rot_z(self.roll)
    }

    /// A device pose that [`constrain_pose`] maps back onto `self`.
    pub fn to_device_pose(&self, spec: &ProbeSpec<T>) -> DevicePose<T> {
        let r = self.rotation();
        DevicePose {
            position: spec.pivot + r.column(2) * self.depth_mm,
            orientation: Quat::from_mat3(&r),
        }
    }
}

/// Projects a raw device pose onto the pivot constraint.
///
/// The device axis (its local +z) gives the probe direction; the part of
/// the device displacement along that axis gives the depth; lateral
/// offsets are discarded. Out-of-range values are clamped.
pub fn constrain_pose<T: Real>(spec: &ProbeSpec<T>, dev: &DevicePose<T>) -> ProbePose<T> {
    let rd = dev.orientation.normalized().to_mat3();
    let axis = rd.column(2);
    let yaw_raw = axis.y.max(-T::one()).min(T::one()).asin();
    let pitch_raw = axis.x.atan2(axis.z);
    let swing = Mat3::rot_y(pitch_raw) * Mat3::rot_x(-yaw_raw);
    let twist = swing.transpose() * rd;
    let roll = normalize_angle(twist.rows[1][0].atan2(twist.rows[0][0]));

    let clamp = |v: T, lim: T| v.max(-lim).min(lim);
    let depth = (dev.position - spec.pivot).dot(axis);
    ProbePose {
        depth_mm: if depth.is_nan() {
            T::zero()
        } else {
            depth.max(T::zero()).min(spec.d_max_mm)
        },
        pitch: clamp(pitch_raw, spec.pitch_limit()),
        yaw: clamp(yaw_raw, spec.yaw_limit()),
        roll,
    }
}

/// Probe-to-world rigid transform: `world = rotation · local + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeFrame<T> {
    pub rotation: Mat3<T>,
    /// The pivot.
    pub translation: Vec3<T>,
    pub tip: Vec3<T>,
}

impl<T: Real> ProbeFrame<T> {
    pub fn to_world(&self, local: Vec3<T>) -> Vec3<T> {
        self.rotation * local + self.translation
    }

    /// Probe axis, local +z.
    pub fn axis(&self) -> Vec3<T> {
        self.rotation.column(2)
    }

    /// In-plane lateral direction, local +x.
    pub fn lateral(&self) -> Vec3<T> {
        self.rotation.column(0)
    }

    /// Image plane normal, local +y.
    pub fn normal(&self) -> Vec3<T> {
        self.rotation.column(1)
    }
}

pub fn probe_frame<T: Real>(spec: &ProbeSpec<T>, pose: &ProbePose<T>) -> ProbeFrame<T> {
    let rotation = pose.rotation();
    let tip = spec.pivot + rotation * Vec3::new(T::zero(), T::zero(), spec.tip_offset_mm + pose.depth_mm);
    ProbeFrame {
        rotation,
        translation: spec.pivot,
        tip,
    }
}

/// Sagittal image plane: contains the probe axis, starts at the tip and
/// extends `extent.1` mm forward; `u` is the lateral direction, `v` the axis.
pub fn image_plane_of<T: Real>(
    spec: &ProbeSpec<T>,
    pose: &ProbePose<T>,
    extent_mm: (T, T),
    resolution: (usize, usize),
) -> SlicePlane<T> {
    let f = probe_frame(spec, pose);
    plane_through_axis(&f, f.lateral(), extent_mm, resolution)
}

/// Assistance view: the plane through the probe axis orthogonal to the
/// sagittal image plane.
pub fn coronal_plane_of<T: Real>(
    spec: &ProbeSpec<T>,
    pose: &ProbePose<T>,
    extent_mm: (T, T),
    resolution: (usize, usize),
) -> SlicePlane<T> {
    let f = probe_frame(spec, pose);
    plane_through_axis(&f, f.normal(), extent_mm, resolution)
}

fn plane_through_axis<T: Real>(
    f: &ProbeFrame<T>,
    u: Vec3<T>,
    (width_mm, height_mm): (T, T),
    (px_w, px_h): (usize, usize),
) -> SlicePlane<T> {
    SlicePlane {
        center: f.tip + f.axis() * (height_mm / lit(2.0)),
        u_axis: u,
        v_axis: f.axis(),
        width_mm,
        height_mm,
        px_w,
        px_h,
    }
}

/// Needle path defined by the mechanical guide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuideLine<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> GuideLine<T> {
    pub fn at(&self, s: T) -> Vec3<T> {
        self.origin + self.direction * s
    }
}

pub fn guide_line_of<T: Real>(spec: &ProbeSpec<T>, pose: &ProbePose<T>) -> GuideLine<T> {
    let f = probe_frame(spec, pose);
    let (s, c) = spec.guide_angle_deg.to_radians().sin_cos();
    GuideLine {
        origin: f.tip + f.axis() * spec.guide_offset_mm,
        direction: f.axis() * c + f.lateral() * s,
    }
}

/// Finds pitch and yaw (for the given depth and roll) that put `target` on
/// the guide line, ahead of the guide origin. Gauss–Newton on the
/// perpendicular miss vector; `None` when no in-limit solution converges.
pub fn aim_guide_at<T: Real>(spec: &ProbeSpec<T>, target: Vec3<T>, depth_mm: T, roll: T) -> Option<ProbePose<T>> {
    let dir0 = (target - spec.pivot).normalized()?;
    let mut pose = ProbePose {
        depth_mm,
        pitch: dir0.x.atan2(dir0.z),
        yaw: dir0.y.max(-T::one()).min(T::one()).asin(),
        roll: normalize_angle(roll),
    };
    let miss = |p: &ProbePose<T>| {
        let g = guide_line_of(spec, p);
        let d = target - g.origin;
        d - g.direction * d.dot(g.direction)
    };
    let h = T::epsilon().sqrt();
    let done = tol::<T>(1e-10);
    for _ in 0..50 {
        let r = miss(&pose);
        if r.norm() <= done {
            break;
        }
        let jp = (miss(&ProbePose {
            pitch: pose.pitch + h,
            ..pose
        }) - r)
            / h;
        let jy = (miss(&ProbePose {
            yaw: pose.yaw + h,
            ..pose
        }) - r)
            / h;
        // normal equations for the 3x2 least-squares step
        let (a, b, c) = (jp.dot(jp), jp.dot(jy), jy.dot(jy));
        let (g0, g1) = (jp.dot(r), jy.dot(r));
        let det = a * c - b * b;
        if !(det.abs() > T::zero()) {
            return None;
        }
        pose.pitch = pose.pitch - (c * g0 - b * g1) / det;
        pose.yaw = pose.yaw - (a * g1 - b * g0) / det;
    }
    let g = guide_line_of(spec, &pose);
    let ok = miss(&pose).norm() <= tol::<T>(1e-6)
        && (target - g.origin).dot(g.direction) > T::zero()
        && pose.pitch.abs() <= spec.pitch_limit()
        && pose.yaw.abs() <= spec.yaw_limit();
    ok.then_some(pose)
}
