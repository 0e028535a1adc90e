//! Live operation of a hearth run: one executive loop behind an HTTP API
//! with a line-delimited event stream.

pub mod api;
pub mod runner;

pub use api::router;
pub use runner::{spawn, Control, ControlMode, Handle};
