//! Simulation core for a robot dance teacher that guides a partner through
//! force-limited impedance control, scores the partner's velocity error on
//! practice-tightening colour zones, and adapts its damping and force gains
//! from the cumulative performance score.
//!
//! Module map:
//!
//! - [`figures`]: dance figure database and the per-student motion generator.
//! - [`dynamics`]: control law, coupled robot/human simulation, stop test and
//!   the pole-map stability analysis.
//! - [`scoring`]: velocity error, score zones, cumulative performance score,
//!   face colour and final accuracy.
//! - [`teaching`]: learning gain and damping/force-gain adaptation.
//! - [`learner`]: simulated student (internal-model learner and intent policies).
//! - [`session`]: session orchestration, presets, persistence, offline scoring.
//! - [`service`]: transport-agnostic engine behind the live training service.

// Axis loops index several parallel arrays; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod axes;
pub mod dynamics;
pub mod error;
pub mod figures;
pub mod learner;
pub mod scoring;
pub mod service;
pub mod session;
pub mod teaching;

pub use axes::{Vec7, DOF};
pub use dynamics::{
    characteristic_polynomial, control_accel, human_force, poles, stability_map, stop_test,
    CoupledState, ForceInterval, HumanParams, IntentPolicy, PlanarAxis, RobotParams, Simulator,
    StabilityGrid, StopTestConfig, StopTrace,
};
pub use error::{Error, Result};
pub use figures::{
    builtin_figure, builtin_figures, desired_velocity, figure_duration, load_figure, DanceFigure,
    FigureKind, ProfileSample, StudentScaling, Tempo,
};
pub use learner::{simulate_error_sequence, InternalModel, LearnerParams};
pub use scoring::{CpsState, ScoreParams, ZoneConfig, ZoneId};
pub use session::{run_session, Mode, SessionConfig, SessionRecord};
pub use teaching::{FeedbackEvent, PtParams, PtState};
