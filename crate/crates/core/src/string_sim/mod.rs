//! Strings of identical components: assembly, guarded integration, and checking a
//! length-uniform norm bound against a simulated trajectory.

mod bound;
mod component;
mod integrate;

pub use bound::{check_estimate, QnRule, SlackLocation, SlackReport, StringBound, DEFAULT_CHECK_TOLERANCE};
pub use component::{BoxRegion, ComponentDynamics, FnComponent};
pub use integrate::{
    assemble_string, integrate, ExitReason, StringConfig, StringField, Trajectory, MAX_HALVINGS,
};

pub(crate) use integrate::{GuardedRk4, StepFailure};
