//! Network service for the biopsy trainer: scenarios, the live pose/slice
//! stream, exercise grading and trainee history over REST.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod http;
pub mod scenario;
pub mod script;
pub mod session;
pub mod wire;

pub use http::{router, AppState};
