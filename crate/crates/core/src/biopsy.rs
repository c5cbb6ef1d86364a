//! Needle firing along the guide and scoring of cores and protocols.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{ProstateModel, ZoneId};
use crate::geom::{Segment, Vec3};
use crate::probe::{GuideLine, ProbePose};
use crate::scalar::{lit, tol, Real};

#[derive(Debug, Error, PartialEq)]
pub enum BiopsyError {
    #[error("invalid needle: {0}")]
    InvalidNeedle(&'static str),
    #[error("insertion must be a finite value >= 0, got {0}")]
    NegativeInsertion(f64),
    #[error("canonical order must be a permutation of the 12 zones")]
    InvalidCanonicalOrder,
    #[error("target {0:?} must have a positive radius")]
    InvalidTarget(String),
}

/// Spring-loaded biopsy gun geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleSpec<T> {
    pub throw_mm: T,
    pub notch_mm: T,
    /// Distance from the needle tip back to the distal end of the notch.
    pub notch_offset_mm: T,
}

impl<T: Real> Default for NeedleSpec<T> {
    fn default() -> Self {
        Self {
            throw_mm: lit(22.0),
            notch_mm: lit(17.0),
            notch_offset_mm: lit(3.0),
        }
    }
}

impl<T: Real> NeedleSpec<T> {
    pub fn validate(&self) -> Result<(), BiopsyError> {
        if !(self.notch_mm > T::zero()) {
            return Err(BiopsyError::InvalidNeedle("notch length must be > 0"));
        }
        if !(self.notch_offset_mm >= T::zero()) {
            return Err(BiopsyError::InvalidNeedle("notch offset must be >= 0"));
        }
        if !(self.notch_offset_mm + self.notch_mm <= self.throw_mm + tol::<T>(1e-9)) {
            return Err(BiopsyError::InvalidNeedle("notch must fit within the throw"));
        }
        Ok(())
    }
}

/// Suspicious region to be sampled, e.g. from prior MRI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target<T> {
    pub id: String,
    pub center: Vec3<T>,
    pub radius_mm: T,
}

/// Geometric outcome of one fire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleCore<T> {
    pub segment: Segment<T>,
    pub inside_mm: T,
    pub zones: BTreeSet<ZoneId>,
    pub out_of_gland: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiopsySample<T> {
    pub order_index: usize,
    pub fire_pose: ProbePose<T>,
    pub insertion_mm: T,
    pub segment: Segment<T>,
    pub inside_mm: T,
    pub zones: BTreeSet<ZoneId>,
    pub out_of_gland: bool,
    pub timestamp_ms: u64,
}

impl<T: Real> BiopsySample<T> {
    pub fn new(
        order_index: usize,
        fire_pose: ProbePose<T>,
        insertion_mm: T,
        core: NeedleCore<T>,
        timestamp_ms: u64,
    ) -> Self {
        Self {
            order_index,
            fire_pose,
            insertion_mm,
            segment: core.segment,
            inside_mm: core.inside_mm,
            zones: core.zones,
            out_of_gland: core.out_of_gland,
            timestamp_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetHit<T> {
    pub target_id: String,
    pub hit: bool,
    /// `None` when there are no samples.
    pub min_distance_mm: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult<T> {
    pub samples: Vec<BiopsySample<T>>,
    pub coverage: T,
    pub zone_hit_map: [bool; 12],
    pub out_of_gland_count: usize,
    pub order_score: T,
    pub target_hits: Vec<TargetHit<T>>,
    pub total_inside_mm: T,
}

/// Notch segment of a needle fired from `insertion_mm` along the guide.
pub fn notch_segment<T: Real>(needle: &NeedleSpec<T>, guide: &GuideLine<T>, insertion_mm: T) -> Segment<T> {
    let tip = guide.at(insertion_mm + needle.throw_mm);
    let dir = guide.direction;
    Segment::new(
        tip - dir * (needle.notch_offset_mm + needle.notch_mm),
        tip - dir * needle.notch_offset_mm,
    )
}

/// Scores an arbitrary core segment against the gland. Each interior
/// sub-interval credits the zone containing its midpoint.
pub fn score_segment<T: Real>(segment: Segment<T>, prostate: &ProstateModel<T>) -> NeedleCore<T> {
    let span = prostate.mesh.inside_length(&segment);
    let zones = span
        .intervals
        .iter()
        .filter_map(|&(a, b)| prostate.grid.zone_of_point(segment.at((a + b) / lit(2.0))))
        .collect();
    let out_of_gland = span.intervals.is_empty();
    NeedleCore {
        segment,
        inside_mm: if out_of_gland { T::zero() } else { span.length_mm },
        zones,
        out_of_gland,
    }
}

pub fn fire_biopsy<T: Real>(
    needle: &NeedleSpec<T>,
    guide: &GuideLine<T>,
    insertion_mm: T,
    prostate: &ProstateModel<T>,
) -> Result<NeedleCore<T>, BiopsyError> {
    if !(insertion_mm >= T::zero() && insertion_mm.is_finite()) {
        return Err(BiopsyError::NegativeInsertion(
            insertion_mm.to_f64().unwrap_or(f64::NAN),
        ));
    }
    needle.validate()?;
    Ok(score_segment(notch_segment(needle, guide, insertion_mm), prostate))
}

pub fn segment_point_distance<T: Real>(seg: &Segment<T>, p: Vec3<T>) -> T {
    seg.distance_to_point(p)
}

fn canonical_ranks(order: &[ZoneId]) -> Result<[usize; 12], BiopsyError> {
    if order.len() != ZoneId::COUNT {
        return Err(BiopsyError::InvalidCanonicalOrder);
    }
    let mut rank = [usize::MAX; 12];
    for (r, z) in order.iter().enumerate() {
        if rank[z.index()] != usize::MAX {
            return Err(BiopsyError::InvalidCanonicalOrder);
        }
        rank[z.index()] = r;
    }
    Ok(rank)
}

/// Fraction of concordant pairs between the order zones were first hit and
/// the canonical order. Zones first hit by the same sample are taken in
/// canonical order.
fn order_agreement<T: Real>(samples: &[BiopsySample<T>], rank: &[usize; 12]) -> T {
    let mut seen = [false; 12];
    let mut seq = Vec::new();
    for s in samples {
        let mut fresh: Vec<usize> = s
            .zones
            .iter()
            .filter(|z| !seen[z.index()])
            .map(|z| rank[z.index()])
            .collect();
        fresh.sort_unstable();
        for z in &s.zones {
            seen[z.index()] = true;
        }
        seq.extend(fresh);
    }
    let n = seq.len();
    if n < 2 {
        return T::one();
    }
    let mut concordant = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if seq[i] < seq[j] {
                concordant += 1;
            }
        }
    }
    T::from_usize(concordant).unwrap() / T::from_usize(n * (n - 1) / 2).unwrap()
}

pub fn evaluate_protocol<T: Real>(
    samples: &[BiopsySample<T>],
    canonical_order: &[ZoneId],
    targets: &[Target<T>],
) -> Result<ProtocolResult<T>, BiopsyError> {
    let rank = canonical_ranks(canonical_order)?;
    if let Some(t) = targets.iter().find(|t| !(t.radius_mm > T::zero())) {
        return Err(BiopsyError::InvalidTarget(t.id.clone()));
    }
    let mut zone_hit_map = [false; 12];
    for z in samples.iter().flat_map(|s| &s.zones) {
        zone_hit_map[z.index()] = true;
    }
    let hits = zone_hit_map.iter().filter(|&&h| h).count();
    let target_hits = targets
        .iter()
        .map(|t| {
            let min_distance_mm = samples
                .iter()
                .map(|s| segment_point_distance(&s.segment, t.center))
                .fold(None, |m: Option<T>, d| Some(m.map_or(d, |m| m.min(d))));
            TargetHit {
                target_id: t.id.clone(),
                hit: min_distance_mm.is_some_and(|d| d <= t.radius_mm),
                min_distance_mm,
            }
        })
        .collect();
    Ok(ProtocolResult {
        coverage: T::from_usize(hits).unwrap() / lit(12.0),
        zone_hit_map,
        out_of_gland_count: samples.iter().filter(|s| s.out_of_gland).count(),
        order_score: order_agreement(samples, &rank),
        target_hits,
        total_inside_mm: samples.iter().fold(T::zero(), |acc, s| acc + s.inside_mm),
        samples: samples.to_vec(),
    })
}
