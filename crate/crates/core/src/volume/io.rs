//! USVOL1 volume files and binary PGM slice export.
//!
//! A USVOL1 file is one ASCII header line
//! `USVOL1 nx ny nz sx sy sz ox oy oz\n` followed by `nx·ny·nz` raw bytes,
//! x fastest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, SliceImage, UsVolume, VolumeError};
use crate::geom::Vec3;
use crate::scalar::Real;

const MAGIC: &str = "USVOL1";
const MAX_HEADER: u64 = 1024;

pub fn write_volume<T: Real, W: Write>(vol: &UsVolume<T>, mut w: W) -> Result<()> {
    let [nx, ny, nz] = vol.dims();
    let s = vol.spacing();
    let o = vol.origin();
    writeln!(
        w,
        "{MAGIC} {nx} {ny} {nz} {} {} {} {} {} {}",
        s.x, s.y, s.z, o.x, o.y, o.z
    )?;
    w.write_all(vol.voxels())?;
    w.flush()?;
    Ok(())
}

pub fn save_volume<T: Real>(vol: &UsVolume<T>, path: impl AsRef<Path>) -> Result<()> {
    write_volume(vol, BufWriter::new(File::create(path)?))
}

pub fn read_volume<T: Real, R: Read>(r: R) -> Result<UsVolume<T>> {
    let mut r = BufReader::new(r);
    let mut header = Vec::new();
    (&mut r).take(MAX_HEADER).read_until(b'\n', &mut header)?;
    if !header.starts_with(MAGIC.as_bytes()) {
        return Err(VolumeError::BadMagic);
    }
    if header.last() != Some(&b'\n') {
        return Err(VolumeError::MalformedHeader("header line not terminated".into()));
    }
    let line = std::str::from_utf8(&header)
        .map_err(|_| VolumeError::MalformedHeader("header is not ASCII".into()))?
        .trim_end();
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    if tokens.len() != 10 || tokens[0] != MAGIC {
        return Err(VolumeError::MalformedHeader(format!(
            "expected 10 fields, found {}",
            tokens.len()
        )));
    }
    let mut dims = [0usize; 3];
    for (d, tok) in dims.iter_mut().zip(&tokens[1..4]) {
        *d = tok
            .parse()
            .map_err(|_| VolumeError::MalformedHeader(format!("bad dimension {tok:?}")))?;
    }
    let mut reals = [T::zero(); 6];
    for (v, tok) in reals.iter_mut().zip(&tokens[4..10]) {
        *v = tok
            .parse()
            .map_err(|_| VolumeError::MalformedHeader(format!("bad decimal {tok:?}")))?;
    }
    let spacing = Vec3::new(reals[0], reals[1], reals[2]);
    let origin = Vec3::new(reals[3], reals[4], reals[5]);
    if dims.iter().any(|&n| n < 2) {
        return Err(VolumeError::InvalidDims(dims));
    }
    if [spacing.x, spacing.y, spacing.z]
        .iter()
        .any(|s| !(s.is_finite() && *s > T::zero()))
    {
        return Err(VolumeError::InvalidSpacing(spacing.to_f64()));
    }
    let expected = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or(VolumeError::InvalidDims(dims))?;

    let mut voxels = Vec::with_capacity(expected.min(1 << 28));
    (&mut r).take(expected as u64).read_to_end(&mut voxels)?;
    if voxels.len() < expected {
        return Err(VolumeError::TruncatedPayload {
            expected,
            found: voxels.len(),
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(VolumeError::TrailingData(rest.len()));
    }
    UsVolume::new(dims, spacing, origin, voxels)
}

pub fn load_volume<T: Real>(path: impl AsRef<Path>) -> Result<UsVolume<T>> {
    read_volume(File::open(path)?)
}

/// Writes a binary PGM (P5, maxval 255). Row `px_h − 1` comes first so the
/// fan apex at `j = 0` shows at the bottom of a viewer.
pub fn write_pgm<T: Real, W: Write>(img: &SliceImage<T>, mut w: W) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.px_w, img.px_h)?;
    for row in img.pixels.chunks(img.px_w).rev() {
        w.write_all(row)?;
    }
    w.flush()?;
    Ok(())
}
