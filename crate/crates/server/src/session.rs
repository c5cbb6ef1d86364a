//! Per-session state machine: created → streaming → ended.

use std::sync::Arc;

use biopsym_core::biopsy::{evaluate_protocol, fire_biopsy, BiopsySample};
use biopsym_core::exercises::{grade_simulation, AssistView, ExerciseDef, ExerciseParams, SimulationGrade};
use biopsym_core::probe::{constrain_pose, coronal_plane_of, guide_line_of, image_plane_of, ProbePose};
use biopsym_core::volume::SlicePlane;
use biopsym_core::{Pose, Protocol, Sample, Volume};
use biopsym_store::{AssistanceUsage, SessionRecord};

use crate::scenario::Scenario;
use crate::wire::{ClientMsg, Frame, PoseInput, ServerMsg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Created,
    Streaming,
    Ended,
}

/// One reply to the client.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Frame(Vec<u8>),
    Msg(ServerMsg),
}

/// Result of a session, ready to persist.
#[derive(Debug, Clone, PartialEq)]
pub struct Finished {
    pub record: SessionRecord,
    pub grade: Option<SimulationGrade<f64>>,
}

#[derive(Debug)]
pub struct SessionMachine {
    pub session_id: String,
    pub user_id: String,
    pub scenario: Arc<Scenario>,
    pub exercise: Option<ExerciseDef>,
    pub started_at_ms: u64,
    state: State,
    pose: Pose,
    samples: Vec<Sample>,
    coronal_on: bool,
    used: AssistanceUsage,
}

impl SessionMachine {
    pub fn new(
        session_id: String,
        user_id: String,
        scenario: Arc<Scenario>,
        exercise: Option<ExerciseDef>,
        started_at_ms: u64,
    ) -> Self {
        Self {
            session_id,
            user_id,
            scenario,
            exercise,
            started_at_ms,
            state: State::Created,
            pose: ProbePose::identity(),
            samples: Vec::new(),
            coronal_on: false,
            used: AssistanceUsage::default(),
        }
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    fn allowed(&self, view: AssistView) -> bool {
        let allowed = &self.scenario.def.assistance;
        let ex = self.exercise.as_ref().map(|e| &e.constraints.assistance);
        allowed.contains(&view) && ex.is_none_or(|a| a.is_empty() || a.contains(&view))
    }

    /// Handles a raw text message. Malformed input is reported, never fatal.
    pub fn handle_text(&mut self, text: &str, now_ms: u64) -> (Vec<Outgoing>, Option<Finished>) {
        if self.state == State::Ended {
            return (
                vec![Outgoing::Msg(ServerMsg::error("session_ended", "session has ended"))],
                None,
            );
        }
        match serde_json::from_str::<ClientMsg>(text) {
            Ok(msg) => self.handle(msg, now_ms),
            Err(e) => (
                vec![Outgoing::Msg(ServerMsg::error("bad_message", e.to_string()))],
                None,
            ),
        }
    }

    /// Handles one client message. `now_ms` is wall-clock time, used only
    /// when a fire carries no client timestamp and for the end time.
    pub fn handle(&mut self, msg: ClientMsg, now_ms: u64) -> (Vec<Outgoing>, Option<Finished>) {
        let err = |code: &str, text: String| (vec![Outgoing::Msg(ServerMsg::error(code, text))], None);
        if self.state == State::Ended {
            return err("session_ended", "session has ended".into());
        }
        self.state = State::Streaming;
        let spec = &self.scenario.def.probe;
        match msg {
            ClientMsg::Pose { pose } => {
                let pose = match pose {
                    PoseInput::Device(d) => match d.validate() {
                        Ok(()) => constrain_pose(spec, &d),
                        Err(e) => return err("bad_pose", e.to_string()),
                    },
                    PoseInput::Probe(p) => match ProbePose::new(spec, p.depth_mm, p.pitch, p.yaw, p.roll) {
                        Ok(p) => p,
                        Err(e) => return err("bad_pose", e.to_string()),
                    },
                };
                self.pose = pose;
                let volume = match self.scenario.volume() {
                    Ok(v) => v,
                    Err(e) => return err("volume_unavailable", e),
                };
                let mut out = Vec::with_capacity(2);
                match self.render(&volume, false) {
                    Ok(f) => out.push(Outgoing::Frame(f)),
                    Err(e) => return err("render_failed", e),
                }
                if self.coronal_on {
                    match self.render(&volume, true) {
                        Ok(f) => out.push(Outgoing::Frame(f)),
                        Err(e) => return err("render_failed", e),
                    }
                }
                (out, None)
            }
            ClientMsg::Fire { insertion_mm, t_ms } => {
                let def = &self.scenario.def;
                let insertion = insertion_mm.unwrap_or(def.default_insertion_mm);
                let guide = guide_line_of(spec, &self.pose);
                match fire_biopsy(&def.needle, &guide, insertion, &self.scenario.prostate) {
                    Ok(core) => {
                        let t = t_ms.unwrap_or_else(|| now_ms.saturating_sub(self.started_at_ms));
                        let sample = BiopsySample::new(self.samples.len(), self.pose, insertion, core, t);
                        self.samples.push(sample.clone());
                        (vec![Outgoing::Msg(ServerMsg::Sample { sample })], None)
                    }
                    Err(e) => err("bad_fire", e.to_string()),
                }
            }
            ClientMsg::Assist { view, on } => {
                if on && !self.allowed(view) {
                    return err(
                        "assist_not_allowed",
                        format!("{view:?} view is not available in this exercise"),
                    );
                }
                match view {
                    AssistView::Coronal => {
                        self.coronal_on = on;
                        self.used.coronal |= on;
                    }
                    AssistView::ThreeD => self.used.three_d |= on,
                }
                (vec![Outgoing::Msg(ServerMsg::Assist { view, on })], None)
            }
            ClientMsg::End {} => match self.finish(now_ms) {
                Ok(f) => {
                    let msg = ServerMsg::Result {
                        result: f.record.result.clone(),
                        score: f.record.score,
                    };
                    (vec![Outgoing::Msg(msg)], Some(f))
                }
                Err(e) => err("scoring_failed", e),
            },
        }
    }

    fn render(&self, volume: &Volume, coronal: bool) -> Result<Vec<u8>, String> {
        let c = self.scenario.def.slice;
        let extent = c.px as f64 * c.mm_per_px;
        let spec = &self.scenario.def.probe;
        let plane: SlicePlane<f64> = if coronal {
            coronal_plane_of(spec, &self.pose, (extent, extent), (c.px, c.px))
        } else {
            image_plane_of(spec, &self.pose, (extent, extent), (c.px, c.px))
        };
        let img = volume
            .extract_slice(&plane)
            .and_then(|s| s.apply_sector_mask(c.fov_deg, c.r_min_mm, c.r_max_mm, (c.px as f64 / 2.0, 0.0)))
            .map_err(|e| e.to_string())?;
        Ok(Frame {
            width: img.px_w as u32,
            height: img.px_h as u32,
            mm_per_px: c.mm_per_px as f32,
            pixels: img.pixels,
        }
        .encode())
    }

    fn finish(&mut self, now_ms: u64) -> Result<Finished, String> {
        let def = &self.scenario.def;
        let result: Protocol =
            evaluate_protocol(&self.samples, &def.canonical_order, &def.targets).map_err(|e| e.to_string())?;
        let grade = match self.exercise.as_ref().map(|e| &e.params) {
            Some(ExerciseParams::GuidedSimulation { weights }) => {
                Some(grade_simulation(&result, weights).map_err(|e| e.to_string())?)
            }
            _ => None,
        };
        self.state = State::Ended;
        Ok(Finished {
            record: SessionRecord {
                session_id: self.session_id.clone(),
                user_id: self.user_id.clone(),
                scenario_ref: def.id.clone(),
                exercise_id: self.exercise.as_ref().map(|e| e.id.clone()),
                started_at_ms: self.started_at_ms,
                ended_at_ms: Some(now_ms.max(self.started_at_ms)),
                samples: self.samples.clone(),
                result,
                score: grade.as_ref().map(|g| g.score),
                assistance: self.used,
            },
            grade,
        })
    }
}
