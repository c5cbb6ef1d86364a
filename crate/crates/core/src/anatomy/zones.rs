//! The 12-zone decomposition of the gland's bounding box: thirds along the
//! cranio-caudal axis, halves left/right and halves medial/lateral.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Aabb, AnatomyError, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A world axis playing an anatomical role. Anatomical index 0 sits at the
/// low-coordinate end unless `reversed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRole {
    pub axis: Axis,
    #[serde(default)]
    pub reversed: bool,
}

impl AxisRole {
    pub const fn new(axis: Axis) -> Self {
        Self { axis, reversed: false }
    }

    pub const fn reversed(axis: Axis) -> Self {
        Self { axis, reversed: true }
    }
}

/// Which world axis carries each anatomical split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisAssignment {
    pub cranio_caudal: AxisRole,
    pub side: AxisRole,
    pub medial_lateral: AxisRole,
}

impl Default for AxisAssignment {
    /// Base/mid/apex along z, right/left along y, medial/lateral along x,
    /// all increasing with the coordinate.
    fn default() -> Self {
        Self {
            cranio_caudal: AxisRole::new(Axis::Z),
            side: AxisRole::new(Axis::Y),
            medial_lateral: AxisRole::new(Axis::X),
        }
    }
}

impl AxisAssignment {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = (self.cranio_caudal.axis, self.side.axis, self.medial_lateral.axis);
        if a == b || a == c {
            return Err(AnatomyError::DuplicateAxis(a));
        }
        if b == c {
            return Err(AnatomyError::DuplicateAxis(b));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CcLevel {
    Base,
    Mid,
    Apex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ml {
    Medial,
    Lateral,
}

/// Zone number `cc·4 + side·2 + ml` with base=0/mid=1/apex=2,
/// right=0/left=1, medial=0/lateral=1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ZoneId(u8);

impl TryFrom<u8> for ZoneId {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ZoneId::new(v).ok_or_else(|| format!("zone id {v} outside 0..=11"))
    }
}

impl From<ZoneId> for u8 {
    fn from(z: ZoneId) -> u8 {
        z.0
    }
}

impl ZoneId {
    pub const COUNT: usize = 12;

    pub fn new(v: u8) -> Option<Self> {
        (v < 12).then_some(Self(v))
    }

    pub fn all() -> impl Iterator<Item = ZoneId> {
        (0..12).map(ZoneId)
    }

    pub fn from_parts(cc: CcLevel, side: Side, ml: Ml) -> Self {
        Self::from_indices(cc as usize, side as usize, ml as usize)
    }

    fn from_indices(cc: usize, side: usize, ml: usize) -> Self {
        debug_assert!(cc < 3 && side < 2 && ml < 2);
        Self((cc * 4 + side * 2 + ml) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn indices(self) -> [usize; 3] {
        let v = self.0 as usize;
        [v / 4, (v / 2) % 2, v % 2]
    }

    pub fn parts(self) -> (CcLevel, Side, Ml) {
        let [cc, side, ml] = self.indices();
        (
            [CcLevel::Base, CcLevel::Mid, CcLevel::Apex][cc],
            [Side::Right, Side::Left][side],
            [Ml::Medial, Ml::Lateral][ml],
        )
    }

    /// The conventional 12-core sequence: right side before left, base to
    /// apex, medial before lateral.
    pub fn default_protocol_order() -> Vec<ZoneId> {
        let mut order = Vec::with_capacity(12);
        for side in [Side::Right, Side::Left] {
            for cc in [CcLevel::Base, CcLevel::Mid, CcLevel::Apex] {
                for ml in [Ml::Medial, Ml::Lateral] {
                    order.push(ZoneId::from_parts(cc, side, ml));
                }
            }
        }
        order
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (cc, side, ml) = self.parts();
        let side = match side {
            Side::Right => "right",
            Side::Left => "left",
        };
        let cc = match cc {
            CcLevel::Base => "base",
            CcLevel::Mid => "mid",
            CcLevel::Apex => "apex",
        };
        let ml = match ml {
            Ml::Medial => "medial",
            Ml::Lateral => "lateral",
        };
        write!(f, "{side} {cc} {ml}")
    }
}

const SPLITS: [usize; 3] = [3, 2, 2];

/// Zone grid over a box. Cells are half-open `[lo, hi)` per axis in
/// coordinate order, except that the box's max face is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneGrid<T> {
    pub bbox: Aabb<T>,
    pub axes: AxisAssignment,
}

pub fn build_zone_grid<T: Real>(bbox: Aabb<T>, axes: AxisAssignment) -> Result<ZoneGrid<T>> {
    Aabb::new(bbox.min, bbox.max)?;
    axes.validate()?;
    Ok(ZoneGrid { bbox, axes })
}

impl<T: Real> ZoneGrid<T> {
    fn roles(&self) -> [AxisRole; 3] {
        [self.axes.cranio_caudal, self.axes.side, self.axes.medial_lateral]
    }

    /// `k`-th of `n` equal boundaries along world axis `a`.
    fn boundary(&self, a: usize, k: usize, n: usize) -> T {
        let (lo, hi) = (self.bbox.min[a], self.bbox.max[a]);
        if k == n {
            return hi;
        }
        lo + (hi - lo) * T::from_usize(k).unwrap() / T::from_usize(n).unwrap()
    }

    /// Split boundaries along each anatomical role, in coordinate order
    /// (cc: 4 values, side and ml: 3 values).
    pub fn boundaries(&self) -> [Vec<T>; 3] {
        let roles = self.roles();
        std::array::from_fn(|r| {
            let a = roles[r].axis.index();
            (0..=SPLITS[r]).map(|k| self.boundary(a, k, SPLITS[r])).collect()
        })
    }

    pub fn zone_of_point(&self, p: Vec3<T>) -> Option<ZoneId> {
        if !self.bbox.contains(p) {
            return None;
        }
        let roles = self.roles();
        let mut idx = [0usize; 3];
        for r in 0..3 {
            let a = roles[r].axis.index();
            let n = SPLITS[r];
            let c = (1..n).filter(|&k| p[a] >= self.boundary(a, k, n)).count();
            idx[r] = if roles[r].reversed { n - 1 - c } else { c };
        }
        Some(ZoneId::from_indices(idx[0], idx[1], idx[2]))
    }

    /// Closed bounds of a zone's cell.
    pub fn cell_bounds(&self, zone: ZoneId) -> Aabb<T> {
        let roles = self.roles();
        let idx = zone.indices();
        let mut lo = self.bbox.min;
        let mut hi = self.bbox.max;
        for r in 0..3 {
            let a = roles[r].axis.index();
            let n = SPLITS[r];
            let c = if roles[r].reversed { n - 1 - idx[r] } else { idx[r] };
            let (l, h) = (self.boundary(a, c, n), self.boundary(a, c + 1, n));
            match a {
                0 => (lo.x, hi.x) = (l, h),
                1 => (lo.y, hi.y) = (l, h),
                _ => (lo.z, hi.z) = (l, h),
            }
        }
        Aabb { min: lo, max: hi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_grid() -> ZoneGrid<f64> {
        let b = Aabb::new(Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        build_zone_grid(b, AxisAssignment::default()).unwrap()
    }

    #[test]
    fn encoding_round_trips() {
        for z in ZoneId::all() {
            let (cc, side, ml) = z.parts();
            assert_eq!(ZoneId::from_parts(cc, side, ml), z);
        }
        assert_eq!(ZoneId::from_parts(CcLevel::Mid, Side::Right, Ml::Lateral).index(), 5);
        assert!(ZoneId::new(12).is_none());
        assert!(serde_json::from_str::<ZoneId>("12").is_err());
        assert_eq!(serde_json::from_str::<ZoneId>("7").unwrap().index(), 7);
        assert_eq!(ZoneId::new(11).unwrap().to_string(), "left apex lateral");
    }

    #[test]
    fn default_order_is_a_permutation() {
        let mut order: Vec<u8> = ZoneId::default_protocol_order().into_iter().map(u8::from).collect();
        assert_eq!(&order[..4], &[0, 1, 4, 5]);
        order.sort();
        assert_eq!(order, (0..12).collect::<Vec<u8>>());
    }

    #[test]
    fn corners_follow_boundary_rule() {
        let g = unit_grid();
        assert_eq!(g.zone_of_point(Vec3::zero()), ZoneId::new(0));
        assert_eq!(g.zone_of_point(Vec3::new(1.0, 1.0, 1.0)), ZoneId::new(11));
        assert_eq!(g.zone_of_point(Vec3::new(1.0, 1.0, 1.0 + 1e-12)), None);
        // boundary plane belongs to the higher cell
        assert_eq!(g.zone_of_point(Vec3::new(0.0, 0.5, 0.0)).unwrap().index(), 2);
        assert_eq!(g.zone_of_point(Vec3::new(0.0, 0.0, 1.0 / 3.0)).unwrap().index(), 4);
    }

    #[test]
    fn unit_box_boundaries() {
        let g = unit_grid();
        let [cc, side, ml] = g.boundaries();
        assert_eq!(cc, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(side, vec![0.0, 0.5, 1.0]);
        assert_eq!(ml, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn cells_tile_the_box() {
        let b = Aabb::new(Vec3::new(-3.0, 2.0, 10.0), Vec3::new(7.0, 9.5, 41.0)).unwrap();
        let g = build_zone_grid(b, AxisAssignment::default()).unwrap();
        let total: f64 = ZoneId::all().map(|z| g.cell_bounds(z).volume()).sum();
        assert!((total - b.volume()).abs() <= 1e-12 * b.volume());
    }

    #[test]
    fn zone_five_bounds() {
        // zone 5 = cc 1 (mid), side 0 (right), ml 1 (lateral)
        let g = unit_grid();
        let c = g.cell_bounds(ZoneId::new(5).unwrap());
        assert_eq!((c.min.z, c.max.z), (1.0 / 3.0, 2.0 / 3.0));
        assert_eq!((c.min.y, c.max.y), (0.0, 0.5));
        assert_eq!((c.min.x, c.max.x), (0.5, 1.0));
    }

    #[test]
    fn reversed_role_flips_index() {
        let b = Aabb::new(Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let axes = AxisAssignment {
            cranio_caudal: AxisRole::reversed(Axis::Z),
            ..AxisAssignment::default()
        };
        let g = build_zone_grid(b, axes).unwrap();
        assert_eq!(
            g.zone_of_point(Vec3::new(0.1, 0.1, 0.9)).unwrap().parts().0,
            CcLevel::Base
        );
        assert_eq!(
            g.zone_of_point(Vec3::new(0.1, 0.1, 0.1)).unwrap().parts().0,
            CcLevel::Apex
        );
        let z = ZoneId::from_parts(CcLevel::Base, Side::Right, Ml::Medial);
        assert_eq!(g.cell_bounds(z).min.z, 2.0 / 3.0);
    }

    #[test]
    fn duplicate_axes_and_flat_boxes_rejected() {
        let b = Aabb::new(Vec3::zero(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let axes = AxisAssignment {
            side: AxisRole::new(Axis::Z),
            ..AxisAssignment::default()
        };
        assert!(matches!(
            build_zone_grid(b, axes),
            Err(AnatomyError::DuplicateAxis(Axis::Z))
        ));
        let flat = Aabb {
            min: Vec3::zero(),
            max: Vec3::new(1.0, 0.0, 1.0),
        };
        assert!(matches!(
            build_zone_grid(flat, AxisAssignment::default()),
            Err(AnatomyError::DegenerateBox)
        ));
    }

    /// Scans all 12 cells with explicit interval tests computed from the box.
    fn brute_force_zone(b: &Aabb<f64>, p: Vec3<f64>) -> Option<u8> {
        let mut found = None;
        for cc in 0..3 {
            for side in 0..2 {
                for ml in 0..2 {
                    let within = |a: usize, k: usize, n: usize| {
                        let (lo, hi) = (b.min[a], b.max[a]);
                        let l = lo + (hi - lo) * k as f64 / n as f64;
                        let h = if k + 1 == n {
                            hi
                        } else {
                            lo + (hi - lo) * (k + 1) as f64 / n as f64
                        };
                        p[a] >= l && (p[a] < h || (k + 1 == n && p[a] <= h))
                    };
                    if within(2, cc, 3) && within(1, side, 2) && within(0, ml, 2) {
                        assert!(found.is_none(), "point in two cells");
                        found = Some((cc * 4 + side * 2 + ml) as u8);
                    }
                }
            }
        }
        found
    }

    #[test]
    fn classification_matches_brute_force() {
        let b = Aabb::new(Vec3::new(6.0, -20.0, 39.0), Vec3::new(30.0, 20.0, 71.0)).unwrap();
        let g = build_zone_grid(b, AxisAssignment::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let [cc, side, ml] = g.boundaries();
        for n in 0..20_000 {
            let mut p = Vec3::new(
                rng.random_range(0.0..36.0),
                rng.random_range(-25.0..25.0),
                rng.random_range(35.0..75.0),
            );
            // land some points exactly on split planes
            if n % 7 == 0 {
                p.z = cc[n % 4];
            }
            if n % 11 == 0 {
                p.y = side[n % 3];
            }
            if n % 13 == 0 {
                p.x = ml[n % 3];
            }
            assert_eq!(g.zone_of_point(p).map(u8::from), brute_force_zone(&b, p), "{p:?}");
        }
    }
}
