//! Transport-agnostic engine behind the live training service.
//!
//! A [`LiveSession`] owns the [`Trainer`] and turns client messages into
//! server messages. Every client message is logged with the simulation step
//! at which it took effect, so [`replay`] reproduces a live session exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::axes::Vec7;
use crate::dynamics::{HumanParams, IntentInput, IntentPolicy};
use crate::error::{invalid, Result};
use crate::figures::FigureKind;
use crate::scoring::ZoneId;
use crate::session::{FigureSummary, Mode, SessionConfig, SessionRecord, Trainer};

/// Pointer samples older than this leave the partner standing still.
pub const STALE_AFTER: f64 = 0.2;
/// Cutoff of the first-order filter on pointer velocity.
pub const POINTER_CUTOFF_HZ: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        name: String,
    },
    Start {
        figure_kind: FigureKind,
    },
    /// Pointer position in floor coordinates (m), see [`FloorMapping`].
    Pointer {
        t_client: f64,
        x: f64,
        y: f64,
    },
    Stop,
    SetMode {
        pt: bool,
    },
}

impl ClientMessage {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let msg: ClientMessage =
            serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        if let ClientMessage::Pointer { t_client, x, y } = msg {
            if !(t_client.is_finite() && x.is_finite() && y.is_finite()) {
                return Err("pointer fields must be finite".into());
            }
        }
        Ok(msg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    /// Desired pose (x, y, phi) of the motion generator.
    pub guide: [f64; 3],
    pub pose: [f64; 3],
    pub velocity: [f64; 3],
    pub force: [f64; 3],
    pub beat: Option<u32>,
    pub figure_kind: Option<FigureKind>,
    pub cps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Reply to `hello`.
    Config {
        dt: f64,
        tempo: f64,
        figures: Vec<FigureKind>,
        mode: Mode,
        mapping: FloorMapping,
    },
    State(StateSnapshot),
    FigureResult {
        figure_kind: FigureKind,
        bar_color: ZoneId,
        mean_e: f64,
        cps: f64,
        face_color: ZoneId,
        kd: [f64; 3],
        kf: [f64; 3],
        practice_n: u32,
    },
    SessionSummary {
        accuracy: Option<f64>,
        final_cps: f64,
        figures: Vec<FigureSummary>,
    },
    Error {
        text: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }

    /// Whether the message may be dropped under back-pressure.
    pub fn is_droppable(&self) -> bool {
        matches!(self, ServerMessage::State(_))
    }
}

/// Screen-to-floor mapping used by the companion UI: `px_per_m` pixels per
/// metre, floor origin at `origin` (pixels), screen y pointing down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorMapping {
    pub px_per_m: f64,
    pub origin: [f64; 2],
}

impl Default for FloorMapping {
    fn default() -> Self {
        Self {
            px_per_m: 200.0,
            origin: [400.0, 300.0],
        }
    }
}

impl FloorMapping {
    pub fn to_floor(&self, px: [f64; 2]) -> [f64; 2] {
        [
            (px[0] - self.origin[0]) / self.px_per_m,
            (self.origin[1] - px[1]) / self.px_per_m,
        ]
    }

    pub fn to_screen(&self, m: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + m[0] * self.px_per_m,
            self.origin[1] - m[1] * self.px_per_m,
        ]
    }
}

/// Partner intent from a live pointer. x and y follow the pointer; rotation
/// and the upper body follow the guide.
#[derive(Clone, Debug, Default)]
pub struct PointerIntent {
    latest: Option<PointerSample>,
    raw_velocity: [f64; 2],
    filtered: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PointerSample {
    t_client: f64,
    received: f64,
    pos: [f64; 2],
}

impl PointerIntent {
    /// Record a pointer sample received at simulation time `now`.
    pub fn push(&mut self, t_client: f64, pos: [f64; 2], now: f64) {
        if let Some(prev) = self.latest {
            let dt = t_client - prev.t_client;
            if dt > 0.0 {
                self.raw_velocity = [(pos[0] - prev.pos[0]) / dt, (pos[1] - prev.pos[1]) / dt];
            }
        }
        self.latest = Some(PointerSample {
            t_client,
            received: now,
            pos,
        });
    }

    pub fn is_stale(&self, now: f64) -> bool {
        self.latest.is_none_or(|s| now - s.received > STALE_AFTER)
    }

    /// Advance the velocity filter by `dt` and return the planar intent
    /// (position, velocity), or `None` while frozen.
    pub fn pointer_to_intent(&mut self, now: f64, dt: f64) -> Option<([f64; 2], [f64; 2])> {
        if self.is_stale(now) {
            self.filtered = [0.0; 2];
            return None;
        }
        let alpha = 1.0 - (-2.0 * PI * POINTER_CUTOFF_HZ * dt).exp();
        for k in 0..2 {
            self.filtered[k] += alpha * (self.raw_velocity[k] - self.filtered[k]);
        }
        self.latest.map(|s| (s.pos, self.filtered))
    }
}

impl IntentPolicy for PointerIntent {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        let mut v: Vec7 = *input.desired_velocity;
        let mut x: Vec7 = std::array::from_fn(|k| input.state.x_h[k] + v[k] * input.dt);
        match self.pointer_to_intent(input.t, input.dt) {
            Some((pos, vel)) => {
                x[..2].copy_from_slice(&pos);
                v[..2].copy_from_slice(&vel);
            }
            None => {
                x[..2].copy_from_slice(&input.state.x_h[..2]);
                v[..2].copy_from_slice(&[0.0; 2]);
            }
        }
        (x, v)
    }
}

/// A client message and the simulation step at which it was applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub step: u64,
    pub message: ClientMessage,
}

/// Default live configuration: a soft partner hand.
pub fn live_config(mode: Mode) -> SessionConfig {
    SessionConfig {
        human: HumanParams {
            mass: 70.0,
            stiffness: 300.0,
            damping: 60.0,
        },
        mode,
        ..Default::default()
    }
}

pub struct LiveSession {
    trainer: Trainer,
    pointer: PointerIntent,
    selected: Option<FigureKind>,
    events: Vec<LoggedEvent>,
    stopped: bool,
}

impl LiveSession {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        Ok(Self {
            trainer: Trainer::new(cfg)?,
            pointer: PointerIntent::default(),
            selected: None,
            events: Vec::new(),
            stopped: false,
        })
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn config_message(&self) -> ServerMessage {
        let cfg = self.trainer.config();
        ServerMessage::Config {
            dt: cfg.dt,
            tempo: cfg.tempo.bpm(),
            figures: FigureKind::ALL.to_vec(),
            mode: cfg.mode,
            mapping: FloorMapping::default(),
        }
    }

    /// Apply a client message at the current step.
    pub fn handle(&mut self, message: ClientMessage) -> Vec<ServerMessage> {
        if self.stopped {
            return vec![ServerMessage::Error {
                text: "session already stopped".into(),
            }];
        }
        self.events.push(LoggedEvent {
            step: self.trainer.steps(),
            message: message.clone(),
        });
        match message {
            ClientMessage::Hello { .. } => vec![self.config_message()],
            ClientMessage::Start { figure_kind } => {
                self.selected = Some(figure_kind);
                if self.trainer.active_kind().is_none() {
                    if let Err(e) = self.trainer.begin_figure(figure_kind) {
                        return vec![ServerMessage::Error {
                            text: e.to_string(),
                        }];
                    }
                }
                Vec::new()
            }
            ClientMessage::Pointer { t_client, x, y } => {
                let now = self.trainer.state().t;
                self.pointer.push(t_client, [x, y], now);
                Vec::new()
            }
            ClientMessage::SetMode { pt } => {
                self.trainer
                    .set_mode(if pt { Mode::Pt } else { Mode::Constant });
                Vec::new()
            }
            ClientMessage::Stop => {
                self.stopped = true;
                Vec::new()
            }
        }
    }

    /// Run `steps` simulation steps. Returns the figure results produced.
    pub fn advance(&mut self, steps: u64) -> Result<Vec<ServerMessage>> {
        let mut out = Vec::new();
        for _ in 0..steps {
            if self.stopped || self.trainer.active_kind().is_none() {
                break;
            }
            if let Some(done) = self.trainer.step(&mut self.pointer)? {
                let pt = self.trainer.pt();
                out.push(ServerMessage::FigureResult {
                    figure_kind: done.summary.kind,
                    bar_color: done.summary.bar_zone,
                    mean_e: done.summary.mean_e,
                    cps: done.summary.cps_after,
                    face_color: done.trace.face_color,
                    kd: [pt.kd_current[0], pt.kd_current[1], pt.kd_current[2]],
                    kf: [pt.kf_current[0], pt.kf_current[1], pt.kf_current[2]],
                    practice_n: done.summary.practice_n,
                });
                if let Some(kind) = self.selected {
                    self.trainer.begin_figure(kind)?;
                }
            }
        }
        Ok(out)
    }

    pub fn is_running(&self) -> bool {
        !self.stopped && self.trainer.active_kind().is_some()
    }

    pub fn snapshot(&self) -> ServerMessage {
        let s = self.trainer.state();
        let g = self.trainer.guide_position();
        ServerMessage::State(StateSnapshot {
            t: s.t,
            guide: [g[0], g[1], g[2]],
            pose: [s.x_c[0], s.x_c[1], s.x_c[2]],
            velocity: [s.xdot_c[0], s.xdot_c[1], s.xdot_c[2]],
            force: [s.f_i[0], s.f_i[1], s.f_i[2]],
            beat: self.trainer.beat_index(),
            figure_kind: self.trainer.active_kind(),
            cps: self.trainer.cps().cps,
        })
    }

    /// Close the session. The log always ends with a stop at the final step
    /// so that a replay runs for exactly as long as the live session did.
    pub fn finish(mut self) -> (ServerMessage, SessionRecord, Vec<LoggedEvent>) {
        if !self.stopped {
            self.events.push(LoggedEvent {
                step: self.trainer.steps(),
                message: ClientMessage::Stop,
            });
        }
        let record = self.trainer.finish();
        let summary = ServerMessage::SessionSummary {
            accuracy: record.summary.accuracy,
            final_cps: record.summary.final_cps,
            figures: record.figures.clone(),
        };
        (summary, record, self.events)
    }
}

/// Re-run a logged live session offline through the same engine.
pub fn replay(cfg: &SessionConfig, events: &[LoggedEvent]) -> Result<SessionRecord> {
    if events.windows(2).any(|w| w[1].step < w[0].step) {
        return Err(invalid("event log steps must be non-decreasing"));
    }
    let mut session = LiveSession::new(cfg.clone())?;
    for event in events {
        let gap = event.step.saturating_sub(session.trainer.steps());
        session.advance(gap)?;
        if session.trainer.steps() != event.step {
            return Err(invalid(format!(
                "event at step {} cannot be reached (engine idle at step {})",
                event.step,
                session.trainer.steps()
            )));
        }
        session.handle(event.message.clone());
    }
    Ok(session.finish().1)
}
