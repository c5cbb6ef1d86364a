//! Minimal Wavefront OBJ: `v x y z` and triangular `f i j k` (1-based).
//! Normals, texture coordinates, groups and materials are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AnatomyError, Result, TriMesh};
use crate::geom::Vec3;
use crate::scalar::Real;

pub fn parse_obj<T: Real, R: Read>(r: R) -> Result<TriMesh<T>> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let err = |msg: String| AnatomyError::Obj { line: lineno, msg };
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => {}
            Some(t) if t.starts_with('#') => {}
            Some("v") => {
                let mut c = [T::zero(); 3];
                for slot in &mut c {
                    let s = tok.next().ok_or_else(|| err("vertex needs 3 coordinates".into()))?;
                    *slot = s.parse().map_err(|_| err(format!("bad coordinate {s:?}")))?;
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tok.collect();
                if refs.len() != 3 {
                    return Err(err(format!(
                        "only triangles are supported, face has {} vertices",
                        refs.len()
                    )));
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(refs) {
                    let head = r.split('/').next().unwrap_or(r);
                    let i: i64 = head.parse().map_err(|_| err(format!("bad vertex index {r:?}")))?;
                    if i < 1 {
                        return Err(err(format!("vertex index {i} must be >= 1")));
                    }
                    *slot = u32::try_from(i - 1).map_err(|_| err(format!("vertex index {i} too large")))?;
                }
                triangles.push(tri);
            }
            Some("vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib") => {}
            Some(other) => return Err(err(format!("unsupported statement {other:?}"))),
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>> {
    parse_obj(File::open(path)?)
}

pub fn write_obj<T: Real, W: Write>(mesh: &TriMesh<T>, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for [a, b, c] in mesh.triangles() {
        writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_obj<T: Real>(mesh: &TriMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    write_obj(mesh, File::create(path)?)
}
