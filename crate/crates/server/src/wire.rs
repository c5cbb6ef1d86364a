//! Stream protocol. Text messages are JSON with a `type` field; slices
//! travel as binary frames:
//!
//! ```text
//! u32 LE width | u32 LE height | f32 LE mm_per_px | width·height u8 pixels
//! ```
//!
//! Pixel rows run along the probe axis starting at the tip (row 0).
//! When the coronal assistance view is on, each pose yields the sagittal
//! frame followed by the coronal frame.

use biopsym_core::exercises::AssistView;
use biopsym_core::probe::{DevicePose, ProbePose};
use biopsym_core::{Protocol, Sample};
use serde::{Deserialize, Serialize};

/// Either a raw 6-DOF device pose or an already constrained probe pose
/// (angles in radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseInput {
    Device(DevicePose<f64>),
    Probe(ProbePose<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Pose {
        #[serde(flatten)]
        pose: PoseInput,
    },
    Fire {
        /// Needle advance along the guide before the throw.
        #[serde(default)]
        insertion_mm: Option<f64>,
        /// Client clock, ms since session start; makes replays exact.
        #[serde(default)]
        t_ms: Option<u64>,
    },
    Assist {
        view: AssistView,
        on: bool,
    },
    End {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Sample {
        sample: Sample,
    },
    Assist {
        view: AssistView,
        on: bool,
    },
    Result {
        result: Protocol,
        /// Exercise grade when the session belongs to an exercise.
        #[serde(default)]
        score: Option<f64>,
    },
    Error {
        code: String,
        text: String,
    },
}

impl ServerMsg {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMsg::Error {
            code: code.into(),
            text: text.into(),
        }
    }
}

/// A decoded binary frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub mm_per_px: f32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub const HEADER: usize = 12;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER + self.pixels.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.mm_per_px.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Frame> {
        let word = |i: usize| <[u8; 4]>::try_from(bytes.get(i..i + 4)?).ok();
        let width = u32::from_le_bytes(word(0)?);
        let height = u32::from_le_bytes(word(4)?);
        let mm_per_px = f32::from_le_bytes(word(8)?);
        let pixels = bytes[Self::HEADER..].to_vec();
        (pixels.len() as u64 == width as u64 * height as u64).then_some(Frame {
            width,
            height,
            mm_per_px,
            pixels,
        })
    }
}
