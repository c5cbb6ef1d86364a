use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{AnatomyError, Result};
use crate::geom::{Segment, Vec3};
use crate::scalar::{lit, tol, Real};

/// Axis-aligned box, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(AnatomyError::DegenerateBox);
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) / lit(2.0)
    }

    pub fn volume(&self) -> T {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn translated(&self, by: Vec3<T>) -> Self {
        Self {
            min: self.min + by,
            max: self.max + by,
        }
    }

    /// Parameter range `[t0, t1] ⊆ [0, 1]` of the part of `seg` inside the
    /// box (slab method), or `None` when they do not meet.
    pub fn clip_segment(&self, seg: &Segment<T>) -> Option<(T, T)> {
        let d = seg.p1 - seg.p0;
        let (mut t0, mut t1) = (T::zero(), T::one());
        for a in 0..3 {
            let (o, dir, lo, hi) = (seg.p0[a], d[a], self.min[a], self.max[a]);
            if dir == T::zero() {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo - o) / dir, (hi - o) / dir);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Indexed triangle mesh in world millimetres. Triangles are wound
/// counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh<T> {
    vertices: Vec<Vec3<T>>,
    triangles: Vec<[u32; 3]>,
}

/// Portion of a segment lying inside a closed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct InsideSpan<T> {
    pub length_mm: T,
    /// Maximal interior sub-intervals as segment parameters in `[0, 1]`.
    pub intervals: Vec<(T, T)>,
}

impl<T: Real> InsideSpan<T> {
    /// Entry and exit points of every interior sub-interval.
    pub fn endpoints(&self, seg: &Segment<T>) -> Vec<(Vec3<T>, Vec3<T>)> {
        self.intervals.iter().map(|&(a, b)| (seg.at(a), seg.at(b))).collect()
    }
}

/// Fixed ray direction for parity tests, deliberately off every axis and
/// diagonal.
const PARITY_RAY: [f64; 3] = [0.5773502691896258, 0.6123724356957946, 0.5400617248673217];

#[derive(Clone, Copy, PartialEq)]
enum Crossing<T> {
    None,
    /// Line crosses the triangle interior at parameter `t`.
    At(T),
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh, checking index ranges. Closedness is checked
    /// separately by [`TriMesh::check_closed`].
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(AnatomyError::EmptyMesh);
        }
        for (ti, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= vertices.len() {
                    return Err(AnatomyError::IndexOutOfRange {
                        triangle: ti,
                        index: idx as usize,
                        count: vertices.len(),
                    });
                }
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn translated(&self, by: Vec3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| *v + by).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Every directed edge appears exactly once and its reverse exactly
    /// once: each undirected edge borders two consistently wound triangles.
    pub fn check_closed(&self) -> Result<()> {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 3);
        for tri in &self.triangles {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(AnatomyError::NotClosed(format!("triangle {tri:?} repeats a vertex")));
            }
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &n) in &directed {
            if n != 1 {
                return Err(AnatomyError::NotClosed(format!(
                    "edge {a}->{b} used {n} times in one direction"
                )));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(AnatomyError::NotClosed(format!(
                    "edge {a}-{b} has no opposite half-edge"
                )));
            }
        }
        Ok(())
    }

    /// Enclosed volume by the divergence theorem.
    pub fn signed_volume(&self) -> T {
        let six = lit::<T>(6.0);
        (0..self.triangles.len()).fold(T::zero(), |acc, i| {
            let [a, b, c] = self.triangle(i);
            acc + a.dot(b.cross(c)) / six
        })
    }

    /// Crossing of the line `p + t·d` with triangle `i`.
    ///
    /// Edge sides are triple products relative to `p`. The shared edge of
    /// two adjacent triangles is traversed in opposite directions, so its
    /// side value is exactly negated between them. With `symbolic`, an
    /// exact zero is resolved by the lexicographic order of the edge's
    /// endpoints, which credits exactly one of the two triangles; without
    /// it, zeros count on both sides (every touching triangle reports).
    #[inline]
    fn crossing(&self, i: usize, p: Vec3<T>, d: Vec3<T>, symbolic: bool) -> Crossing<T> {
        let [a, b, c] = self.triangle(i);
        let (ar, br, cr) = (a - p, b - p, c - p);
        let sides = [
            (d.dot(ar.cross(br)), a, b),
            (d.dot(br.cross(cr)), b, c),
            (d.dot(cr.cross(ar)), c, a),
        ];
        let hit = if symbolic {
            let sign = |(s, u, v): (T, Vec3<T>, Vec3<T>)| if s == T::zero() { u.lex_less(v) } else { s > T::zero() };
            let s0 = sign(sides[0]);
            sign(sides[1]) == s0 && sign(sides[2]) == s0
        } else {
            let z = T::zero();
            let all_pos = sides.iter().all(|s| s.0 >= z);
            let all_neg = sides.iter().all(|s| s.0 <= z);
            (all_pos || all_neg) && sides.iter().any(|s| s.0 != z)
        };
        if !hit {
            return Crossing::None;
        }
        let denom = d.dot((b - a).cross(c - a));
        if denom == T::zero() {
            return Crossing::None;
        }
        Crossing::At(ar.dot(br.cross(cr)) / denom)
    }

    /// Ray-crossing parity test along a fixed oblique direction.
    pub fn point_in_mesh(&self, p: Vec3<T>) -> bool {
        let d = Vec3::from_f64(PARITY_RAY);
        let mut inside = false;
        for i in 0..self.triangles.len() {
            if let Crossing::At(t) = self.crossing(i, p, d, true) {
                if t > T::zero() {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Length of `seg` inside the mesh.
    ///
    /// Crossing parameters (inclusive of edge and vertex touches) are sorted
    /// and merged within 1e-9; each piece between consecutive crossings is
    /// classified by a parity test at its midpoint, so spurious breakpoints
    /// are harmless.
    pub fn inside_length(&self, seg: &Segment<T>) -> InsideSpan<T> {
        let len = seg.length();
        let empty = InsideSpan {
            length_mm: T::zero(),
            intervals: Vec::new(),
        };
        if !(len > T::zero()) {
            return empty;
        }
        let bbox = match mesh_aabb(self) {
            Ok(b) => b,
            Err(_) => return empty,
        };
        if bbox.clip_segment(seg).is_none() {
            return empty;
        }
        let d = seg.p1 - seg.p0;
        let mut ts: Vec<T> = (0..self.triangles.len())
            .filter_map(|i| match self.crossing(i, seg.p0, d, false) {
                Crossing::At(t) if t > T::zero() && t < T::one() => Some(t),
                _ => None,
            })
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let merge = tol::<T>(1e-9);
        ts.dedup_by(|b, a| (*b - *a).abs() <= merge);

        let mut breaks = Vec::with_capacity(ts.len() + 2);
        breaks.push(T::zero());
        breaks.extend(ts);
        breaks.push(T::one());

        let mut intervals: Vec<(T, T)> = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) || !self.point_in_mesh(seg.at((a + b) / lit(2.0))) {
                continue;
            }
            match intervals.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => intervals.push((a, b)),
            }
        }
        let frac = intervals.iter().fold(T::zero(), |acc, (a, b)| acc + (*b - *a));
        InsideSpan {
            length_mm: frac * len,
            intervals,
        }
    }
}

/// Tight componentwise bounds of the mesh vertices.
pub fn mesh_aabb<T: Real>(mesh: &TriMesh<T>) -> Result<Aabb<T>> {
    let first = *mesh.vertices.first().ok_or(AnatomyError::EmptyMesh)?;
    let (min, max) = mesh
        .vertices
        .iter()
        .fold((first, first), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Aabb::new(min, max)
}

/// Icosphere with `subdivisions` rounds of 4:1 midpoint refinement
/// (20·4ⁿ triangles), projected to the unit sphere and scaled to the
/// semi-axes.
pub fn generate_ellipsoid_mesh<T: Real>(center: Vec3<T>, semi_axes: Vec3<T>, subdivisions: u32) -> Result<TriMesh<T>> {
    if !(semi_axes.x > T::zero() && semi_axes.y > T::zero() && semi_axes.z > T::zero()) {
        return Err(AnatomyError::InvalidEllipsoid("semi-axes must be > 0"));
    }
    if !(semi_axes.is_finite() && center.is_finite()) {
        return Err(AnatomyError::InvalidEllipsoid("non-finite geometry"));
    }
    if subdivisions == 0 {
        return Err(AnatomyError::InvalidEllipsoid("subdivisions must be >= 1"));
    }
    if subdivisions > 8 {
        return Err(AnatomyError::InvalidEllipsoid("subdivisions above 8 are not supported"));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut unit: Vec<Vec3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from(*v).normalized().unwrap())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = ((verts[a as usize] + verts[b as usize]) * 0.5).normalized().unwrap();
                verts.push(m);
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut unit);
            let bc = midpoint(b, c, &mut unit);
            let ca = midpoint(c, a, &mut unit);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let vertices = unit
        .into_iter()
        .map(|u| center + Vec3::from_f64(u.into()).component_mul(semi_axes))
        .collect();
    TriMesh::new(vertices, tris)
}
