//! Exercise families, grading and weakness-driven recommendation.
//!
//! Every threshold lives in the catalog with the defaults below:
//!
//! | parameter                       | default |
//! |---------------------------------|---------|
//! | PSA density "high" cutoff       | 0.15    |
//! | PSA density "low" cutoff        | 0.10    |
//! | PSA "low" cutoff (ng/mL)        | 4.0     |
//! | caliper full-miss relative error| 0.25    |
//! | localization falloff τ (mm)     | 10      |
//! | simulation weights              | 0.6 / 0.2 / 0.1 / 0.1 |
//! | recommendation window           | 5       |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::ZoneId;
use crate::biopsy::ProtocolResult;
use crate::geom::Vec3;
use crate::scalar::{lit, Real};

#[derive(Debug, Error, PartialEq)]
pub enum ExerciseError {
    #[error("invalid field `{field}`: {msg}")]
    InvalidField { field: &'static str, msg: String },
    #[error("expected 3 calipers, got {0}")]
    MissingCaliper(usize),
    #[error("simulation weights must sum to 1, got {0}")]
    WeightSum(f64),
    #[error("attempt kind {found:?} does not match exercise kind {expected:?}")]
    KindMismatch {
        expected: ExerciseKind,
        found: ExerciseKind,
    },
    #[error("guided simulation attempt needs a finished session result")]
    MissingResult,
    #[error("catalog: {0}")]
    Catalog(String),
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ExerciseError {
    ExerciseError::InvalidField { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseKind {
    Questionnaire,
    VolumeEstimate,
    StructureLocalization,
    GuidedSimulation,
}

// ---- questionnaire -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub age: f64,
    /// ng/mL
    pub psa: f64,
    pub prostate_volume_cc: f64,
    pub dre_abnormal: bool,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        if !(self.psa >= 0.0 && self.psa.is_finite()) {
            return Err(invalid("psa", format!("must be >= 0, got {}", self.psa)));
        }
        if !(self.prostate_volume_cc > 0.0 && self.prostate_volume_cc.is_finite()) {
            return Err(invalid(
                "prostate_volume_cc",
                format!("must be > 0, got {}", self.prostate_volume_cc),
            ));
        }
        if !(18.0..=120.0).contains(&self.age) {
            return Err(invalid("age", format!("must be within 18..=120, got {}", self.age)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskBand {
    Low,
    Intermediate,
    High,
}

/// Instructional rule table, not a calibrated model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskRules {
    pub high_density: f64,
    pub low_density: f64,
    pub low_psa: f64,
}

impl Default for RiskRules {
    fn default() -> Self {
        Self {
            high_density: 0.15,
            low_density: 0.10,
            low_psa: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub psa_density: f64,
    pub risk_band: RiskBand,
    pub rationale: String,
}

/// Slack on the cutoffs so that values like 0.45/3 land on the band their
/// decimal arithmetic says.
const CUTOFF_SLACK: f64 = 1e-12;

pub fn risk_score(p: &PatientRecord, rules: &RiskRules) -> Result<RiskAssessment, ExerciseError> {
    p.validate()?;
    let d = p.psa / p.prostate_volume_cc;
    let (risk_band, rationale) = if d >= rules.high_density - CUTOFF_SLACK {
        (RiskBand::High, format!("PSA density {d:.3} >= {}", rules.high_density))
    } else if p.dre_abnormal {
        (RiskBand::High, "abnormal digital rectal examination".to_string())
    } else if p.psa < rules.low_psa - CUTOFF_SLACK && d < rules.low_density - CUTOFF_SLACK {
        (
            RiskBand::Low,
            format!(
                "PSA {} < {} and density {d:.3} < {} with normal DRE",
                p.psa, rules.low_psa, rules.low_density
            ),
        )
    } else {
        (
            RiskBand::Intermediate,
            format!("PSA density {d:.3} between the low and high rules"),
        )
    };
    Ok(RiskAssessment {
        psa_density: d,
        risk_band,
        rationale,
    })
}

/// Full credit for the right band, half for a neighbouring one.
pub fn grade_questionnaire(answer: RiskBand, truth: RiskBand) -> f64 {
    match (answer as i32 - truth as i32).abs() {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    }
}

// ---- volume estimation ---------------------------------------------------

/// Prolate ellipsoid volume in cc from three diameters in mm.
pub fn ellipsoid_volume<T: Real>(length_mm: T, width_mm: T, height_mm: T) -> Result<T, ExerciseError> {
    for (field, v) in [
        ("length_mm", length_mm),
        ("width_mm", width_mm),
        ("height_mm", height_mm),
    ] {
        if !(v > T::zero() && v.is_finite()) {
            return Err(invalid(field, "must be > 0"));
        }
    }
    Ok(T::PI() / lit(6.0) * length_mm * width_mm * height_mm / lit(1000.0))
}

/// A caliper drawn on a slice, in pixel coordinates of that slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caliper<T> {
    pub start_px: [T; 2],
    pub end_px: [T; 2],
    pub mm_per_px_u: T,
    pub mm_per_px_v: T,
}

impl<T: Real> Caliper<T> {
    pub fn length_mm(&self) -> Result<T, ExerciseError> {
        if !(self.mm_per_px_u > T::zero() && self.mm_per_px_v > T::zero()) {
            return Err(invalid("calipers", "pixel spacing must be > 0"));
        }
        let du = (self.end_px[0] - self.start_px[0]) * self.mm_per_px_u;
        let dv = (self.end_px[1] - self.start_px[1]) * self.mm_per_px_v;
        let l = du.hypot(dv);
        if !l.is_finite() {
            return Err(invalid("calipers", "non-finite endpoint"));
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrade<T> {
    pub measured_mm: [T; 3],
    pub relative_errors: [T; 3],
    pub estimated_volume_cc: T,
    pub true_volume_cc: T,
    pub score: T,
}

pub fn grade_volume_estimate<T: Real>(
    true_dims_mm: [T; 3],
    calipers: &[Caliper<T>],
    tolerance: T,
) -> Result<VolumeGrade<T>, ExerciseError> {
    if calipers.len() != 3 {
        return Err(ExerciseError::MissingCaliper(calipers.len()));
    }
    if !(tolerance > T::zero()) {
        return Err(invalid("tolerance", "must be > 0"));
    }
    let true_volume_cc = ellipsoid_volume(true_dims_mm[0], true_dims_mm[1], true_dims_mm[2])?;
    let mut measured_mm = [T::zero(); 3];
    let mut relative_errors = [T::zero(); 3];
    let mut total = T::zero();
    for a in 0..3 {
        measured_mm[a] = calipers[a].length_mm()?;
        relative_errors[a] = (measured_mm[a] - true_dims_mm[a]) / true_dims_mm[a];
        total = total + (T::one() - relative_errors[a].abs() / tolerance).max(T::zero());
    }
    let estimated_volume_cc = if measured_mm.iter().all(|&m| m > T::zero()) {
        ellipsoid_volume(measured_mm[0], measured_mm[1], measured_mm[2])?
    } else {
        T::zero()
    };
    Ok(VolumeGrade {
        measured_mm,
        relative_errors,
        estimated_volume_cc,
        true_volume_cc,
        score: total / lit(3.0),
    })
}

// ---- structure localization ----------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region<T> {
    Sphere { center: Vec3<T>, radius_mm: T },
    Box { min: Vec3<T>, max: Vec3<T> },
}

impl<T: Real> Region<T> {
    /// Distance from `p` to the region, zero inside.
    pub fn distance(&self, p: Vec3<T>) -> T {
        match *self {
            Region::Sphere { center, radius_mm } => (p.distance(center) - radius_mm).max(T::zero()),
            Region::Box { min, max } => {
                let d = (min - p).max(p - max).max(Vec3::zero());
                d.norm()
            }
        }
    }
}

pub fn grade_localization<T: Real>(region: &Region<T>, point: Vec3<T>, tau_mm: T) -> T {
    let d = region.distance(point);
    if d <= T::zero() {
        T::one()
    } else {
        (T::one() - d / tau_mm).max(T::zero())
    }
}

// ---- guided simulation ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationWeights {
    pub coverage: f64,
    pub order: f64,
    pub in_gland: f64,
    pub targets: f64,
}

impl Default for SimulationWeights {
    fn default() -> Self {
        Self {
            coverage: 0.6,
            order: 0.2,
            in_gland: 0.1,
            targets: 0.1,
        }
    }
}

impl SimulationWeights {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        let w = [self.coverage, self.order, self.in_gland, self.targets];
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("weights", "must be >= 0"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ExerciseError::WeightSum(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrade<T> {
    pub coverage: T,
    pub order_score: T,
    pub in_gland_fraction: T,
    /// `None` when the scenario has no targets; its weight is then spread
    /// over the other terms.
    pub target_fraction: Option<T>,
    pub score: T,
}

pub fn grade_simulation<T: Real>(
    result: &ProtocolResult<T>,
    weights: &SimulationWeights,
) -> Result<SimulationGrade<T>, ExerciseError> {
    weights.validate()?;
    let n = result.samples.len();
    let in_gland_fraction = if n == 0 {
        T::one()
    } else {
        T::one() - T::from_usize(result.out_of_gland_count).unwrap() / T::from_usize(n).unwrap()
    };
    let target_fraction = (!result.target_hits.is_empty()).then(|| {
        let hit = result.target_hits.iter().filter(|h| h.hit).count();
        T::from_usize(hit).unwrap() / T::from_usize(result.target_hits.len()).unwrap()
    });
    let w = |x: f64| lit::<T>(x);
    let mut num = w(weights.coverage) * result.coverage
        + w(weights.order) * result.order_score
        + w(weights.in_gland) * in_gland_fraction;
    let mut mass = w(weights.coverage) + w(weights.order) + w(weights.in_gland);
    if let Some(tf) = target_fraction {
        num = num + w(weights.targets) * tf;
        mass = mass + w(weights.targets);
    }
    let score = if mass > T::zero() { num / mass } else { T::zero() };
    Ok(SimulationGrade {
        coverage: result.coverage,
        order_score: result.order_score,
        in_gland_fraction,
        target_fraction,
        score,
    })
}

// ---- catalog -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssistView {
    Coronal,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub assistance: Vec<AssistView>,
    pub patient_position: Option<String>,
    /// Zones the exercise concentrates on; drives recommendations.
    pub focus_zones: Vec<ZoneId>,
}

fn default_caliper_tolerance() -> f64 {
    0.25
}

fn default_tau() -> f64 {
    10.0
}

/// Kind-specific grading parameters, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExerciseParams {
    Questionnaire {
        patient: PatientRecord,
        #[serde(default)]
        rules: RiskRules,
    },
    VolumeEstimate {
        true_dims_mm: [f64; 3],
        #[serde(default = "default_caliper_tolerance")]
        tolerance: f64,
    },
    StructureLocalization {
        structure: String,
        region: Region<f64>,
        #[serde(default = "default_tau")]
        tau_mm: f64,
    },
    GuidedSimulation {
        #[serde(default)]
        weights: SimulationWeights,
    },
}

impl ExerciseParams {
    pub fn kind(&self) -> ExerciseKind {
        match self {
            ExerciseParams::Questionnaire { .. } => ExerciseKind::Questionnaire,
            ExerciseParams::VolumeEstimate { .. } => ExerciseKind::VolumeEstimate,
            ExerciseParams::StructureLocalization { .. } => ExerciseKind::StructureLocalization,
            ExerciseParams::GuidedSimulation { .. } => ExerciseKind::GuidedSimulation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseDef {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub scenario_ref: Option<String>,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(flatten)]
    pub params: ExerciseParams,
}

impl ExerciseDef {
    pub fn kind(&self) -> ExerciseKind {
        self.params.kind()
    }

    pub fn validate(&self) -> Result<(), ExerciseError> {
        match &self.params {
            ExerciseParams::Questionnaire { patient, .. } => patient.validate(),
            ExerciseParams::VolumeEstimate {
                true_dims_mm,
                tolerance,
            } => {
                ellipsoid_volume(true_dims_mm[0], true_dims_mm[1], true_dims_mm[2])?;
                if !(*tolerance > 0.0) {
                    return Err(invalid("tolerance", "must be > 0"));
                }
                Ok(())
            }
            ExerciseParams::StructureLocalization { tau_mm, .. } => {
                if !(*tau_mm > 0.0) {
                    return Err(invalid("tau_mm", "must be > 0"));
                }
                Ok(())
            }
            ExerciseParams::GuidedSimulation { weights } => weights.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendConfig {
    pub window: usize,
    pub zone_hit_threshold: f64,
    pub volume_threshold: f64,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        Self {
            window: 5,
            zone_hit_threshold: 0.5,
            volume_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub exercises: Vec<ExerciseDef>,
    #[serde(default)]
    pub beginner_sequence: Vec<String>,
    #[serde(default)]
    pub recommend: RecommendConfig,
}

impl Catalog {
    pub fn from_json(s: &str) -> Result<Self, ExerciseError> {
        let c: Catalog = serde_json::from_str(s).map_err(|e| ExerciseError::Catalog(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ExerciseError> {
        let mut ids = BTreeSet::new();
        for e in &self.exercises {
            if !ids.insert(e.id.as_str()) {
                return Err(ExerciseError::Catalog(format!("duplicate exercise id {:?}", e.id)));
            }
            e.validate()?;
        }
        if let Some(missing) = self.beginner_sequence.iter().find(|id| !ids.contains(id.as_str())) {
            return Err(ExerciseError::Catalog(format!(
                "beginner sequence names unknown exercise {missing:?}"
            )));
        }
        if self.recommend.window == 0 {
            return Err(ExerciseError::Catalog("recommendation window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ExerciseDef> {
        self.exercises.iter().find(|e| e.id == id)
    }
}

// ---- attempts ------------------------------------------------------------

/// What the trainee submitted, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttemptInput {
    Questionnaire {
        answer: RiskBand,
        /// Overrides the exercise's case, e.g. for free practice.
        #[serde(default)]
        patient: Option<PatientRecord>,
    },
    VolumeEstimate {
        calipers: Vec<Caliper<f64>>,
    },
    StructureLocalization {
        point: Vec3<f64>,
    },
    GuidedSimulation {
        session_id: String,
    },
}

impl AttemptInput {
    pub fn kind(&self) -> ExerciseKind {
        match self {
            AttemptInput::Questionnaire { .. } => ExerciseKind::Questionnaire,
            AttemptInput::VolumeEstimate { .. } => ExerciseKind::VolumeEstimate,
            AttemptInput::StructureLocalization { .. } => ExerciseKind::StructureLocalization,
            AttemptInput::GuidedSimulation { .. } => ExerciseKind::GuidedSimulation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttemptDetail {
    Questionnaire {
        answer: RiskBand,
        assessment: RiskAssessment,
    },
    VolumeEstimate(VolumeGrade<f64>),
    StructureLocalization {
        distance_mm: f64,
    },
    GuidedSimulation {
        grade: SimulationGrade<f64>,
        zone_hit_map: [bool; 12],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graded {
    pub score: f64,
    pub detail: AttemptDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt_id: String,
    pub user_id: String,
    pub exercise_id: String,
    pub timestamp_ms: u64,
    pub kind: ExerciseKind,
    pub inputs: AttemptInput,
    pub score: f64,
    pub detail: AttemptDetail,
}

/// Grades one attempt. Guided simulations are graded from the finished
/// session's protocol result.
pub fn grade_attempt(
    def: &ExerciseDef,
    input: &AttemptInput,
    session_result: Option<&ProtocolResult<f64>>,
) -> Result<Graded, ExerciseError> {
    if def.kind() != input.kind() {
        return Err(ExerciseError::KindMismatch {
            expected: def.kind(),
            found: input.kind(),
        });
    }
    let graded = match (&def.params, input) {
        (ExerciseParams::Questionnaire { patient, rules }, AttemptInput::Questionnaire { answer, patient: own }) => {
            let assessment = risk_score(own.as_ref().unwrap_or(patient), rules)?;
            Graded {
                score: grade_questionnaire(*answer, assessment.risk_band),
                detail: AttemptDetail::Questionnaire {
                    answer: *answer,
                    assessment,
                },
            }
        }
        (
            ExerciseParams::VolumeEstimate {
                true_dims_mm,
                tolerance,
            },
            AttemptInput::VolumeEstimate { calipers },
        ) => {
            let g = grade_volume_estimate(*true_dims_mm, calipers, *tolerance)?;
            Graded {
                score: g.score,
                detail: AttemptDetail::VolumeEstimate(g),
            }
        }
        (
            ExerciseParams::StructureLocalization { region, tau_mm, .. },
            AttemptInput::StructureLocalization { point },
        ) => {
            if !point.is_finite() {
                return Err(invalid("point", "must be finite"));
            }
            Graded {
                score: grade_localization(region, *point, *tau_mm),
                detail: AttemptDetail::StructureLocalization {
                    distance_mm: region.distance(*point),
                },
            }
        }
        (ExerciseParams::GuidedSimulation { weights }, AttemptInput::GuidedSimulation { .. }) => {
            let result = session_result.ok_or(ExerciseError::MissingResult)?;
            let grade = grade_simulation(result, weights)?;
            Graded {
                score: grade.score,
                detail: AttemptDetail::GuidedSimulation {
                    zone_hit_map: result.zone_hit_map,
                    grade,
                },
            }
        }
        _ => unreachable!("kinds checked above"),
    };
    Ok(graded)
}

// ---- recommendation ------------------------------------------------------

/// Exercises to do next, weakest first.
///
/// * No history: the catalog's beginner sequence.
/// * Zones hit in fewer than `zone_hit_threshold` of the last `window`
///   guided simulations: simulations focusing on any of those zones
///   (priority = mean hit rate over their focus zones) and every
///   localization exercise (priority = mean hit rate over all zones).
/// * Mean of the last `window` volume estimates below `volume_threshold`:
///   every volume exercise (priority = that mean).
///
/// Sorted by priority, then id.
pub fn recommend_exercises(history: &[Attempt], catalog: &Catalog) -> Vec<String> {
    if history.is_empty() {
        return catalog.beginner_sequence.clone();
    }
    let cfg = &catalog.recommend;
    let mut sorted: Vec<&Attempt> = history.iter().collect();
    sorted.sort_by(|a, b| (a.timestamp_ms, &a.attempt_id).cmp(&(b.timestamp_ms, &b.attempt_id)));
    let recent = |kind: ExerciseKind| -> Vec<&Attempt> {
        let all: Vec<&Attempt> = sorted.iter().copied().filter(|a| a.kind == kind).collect();
        all[all.len().saturating_sub(cfg.window)..].to_vec()
    };

    let mut picks: BTreeMap<&str, f64> = BTreeMap::new();

    let sims = recent(ExerciseKind::GuidedSimulation);
    let maps: Vec<[bool; 12]> = sims
        .iter()
        .filter_map(|a| match &a.detail {
            AttemptDetail::GuidedSimulation { zone_hit_map, .. } => Some(*zone_hit_map),
            _ => None,
        })
        .collect();
    if !maps.is_empty() {
        let rate: Vec<f64> = (0..12)
            .map(|z| maps.iter().filter(|m| m[z]).count() as f64 / maps.len() as f64)
            .collect();
        let weak: BTreeSet<usize> = (0..12).filter(|&z| rate[z] < cfg.zone_hit_threshold).collect();
        if !weak.is_empty() {
            let overall = rate.iter().sum::<f64>() / 12.0;
            for e in &catalog.exercises {
                match e.kind() {
                    ExerciseKind::GuidedSimulation => {
                        let focus: Vec<usize> = e.constraints.focus_zones.iter().map(|z| z.index()).collect();
                        if focus.iter().any(|z| weak.contains(z)) {
                            let p = focus.iter().map(|&z| rate[z]).sum::<f64>() / focus.len() as f64;
                            picks.insert(&e.id, p);
                        }
                    }
                    ExerciseKind::StructureLocalization => {
                        picks.insert(&e.id, overall);
                    }
                    _ => {}
                }
            }
        }
    }

    let vols: Vec<f64> = recent(ExerciseKind::VolumeEstimate).iter().map(|a| a.score).collect();
    if !vols.is_empty() {
        let mean = vols.iter().sum::<f64>() / vols.len() as f64;
        if mean < cfg.volume_threshold {
            for e in catalog
                .exercises
                .iter()
                .filter(|e| e.kind() == ExerciseKind::VolumeEstimate)
            {
                picks.insert(&e.id, mean);
            }
        }
    }

    let mut out: Vec<(f64, &str)> = picks.into_iter().map(|(id, p)| (p, id)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    out.into_iter().map(|(_, id)| id.to_string()).collect()
}
