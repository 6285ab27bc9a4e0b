//! Contact-space interaction dynamics of the robot/partner couple.
//!
//! The robot runs a stiffness-free admittance law driven by a desired velocity
//! and a bounded desired interaction force:
//!
//! ```text
//! M_d (Ẍ_c − Ẍ_d) + K_d (Ẋ_c − Ẋ_d) = K_f F_d − F_i
//! ```
//!
//! The partner is a spring-damper (`K_h`, `D_h`) attached between the contact
//! point and the partner's intended position. `F_i` is the force the robot
//! applies to the partner, positive when the robot leads along `+axis`; when
//! the partner stops, `F_i` grows until it balances the guidance force and the
//! robot stalls.
//!
//! All gains are diagonal, so every axis is an independent scalar system.

mod stability;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use stability::{
    characteristic_polynomial, classify_poles, evaluate, poles, stability_map, PlanarAxis,
    StabilityGrid, STABILITY_MARGIN,
};

use crate::axes::{self, Vec7, DOF, PLANAR, ZERO};
use crate::error::{invalid, Error, Result};
use crate::figures::{desired_acceleration, desired_velocity, DanceFigure, StudentScaling, Tempo};
use crate::learner::FrozenIntent;

/// Largest integration step accepted by [`Simulator::step`].
pub const MAX_DT: f64 = 0.01;

/// Default simulation step (1 kHz).
pub const DEFAULT_DT: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ForceInterval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// Bound whose sign matches the desired motion direction; zero at rest.
    pub fn resolve(&self, desired_velocity: f64) -> f64 {
        if desired_velocity > 0.0 {
            self.upper
        } else if desired_velocity < 0.0 {
            self.lower
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Desired inertia, set equal to the robot inertia (kg, kg·m²).
    pub inertia: Vec7,
    /// Damping gains `K_d`.
    pub damping: Vec7,
    /// Force gains `K_f` in `[0, 1]`.
    pub force_gain: Vec7,
    /// Desired interaction force interval per axis.
    pub desired_force: [ForceInterval; DOF],
    /// Configuration-dependent dynamics term (zero for the planar base).
    pub nonlinear: Vec7,
    /// First-order actuator time constant `T_a` (s).
    pub actuator_lag: f64,
    /// Force feedback delay (s).
    pub loop_delay: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            inertia: [100.0, 100.0, 40.0, 20.0, 20.0, 20.0, 20.0],
            damping: [130.0, 130.0, 100.0, 100.0, 100.0, 100.0, 100.0],
            force_gain: [1.0; DOF],
            desired_force: [
                ForceInterval::new(-60.0, 32.0),
                ForceInterval::new(-34.0, 34.0),
                ForceInterval::new(-10.0, 10.0),
                ForceInterval::new(0.0, 0.0),
                ForceInterval::new(0.0, 0.0),
                ForceInterval::new(0.0, 0.0),
                ForceInterval::new(0.0, 0.0),
            ],
            nonlinear: ZERO,
            actuator_lag: 0.0,
            loop_delay: 0.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        for k in 0..DOF {
            if !(self.inertia[k] > 0.0) {
                return Err(invalid(format!("inertia[{k}] must be positive")));
            }
            if !(self.damping[k] > 0.0) {
                return Err(invalid(format!("damping[{k}] must be positive")));
            }
            if !(0.0..=1.0).contains(&self.force_gain[k]) {
                return Err(invalid(format!("force_gain[{k}] must lie in [0, 1]")));
            }
            let f = self.desired_force[k];
            if !(f.lower <= 0.0 && 0.0 <= f.upper) {
                return Err(invalid(format!("desired_force[{k}] must bracket zero")));
            }
        }
        if !axes::is_finite(&self.nonlinear) {
            return Err(invalid("nonlinear term must be finite"));
        }
        if !(self.actuator_lag >= 0.0) || !(self.loop_delay >= 0.0) {
            return Err(invalid("actuator lag and loop delay must be non-negative"));
        }
        Ok(())
    }

    /// Direction-resolved desired force for each axis.
    pub fn effective_desired_force(&self, xdot_d: &Vec7) -> Vec7 {
        std::array::from_fn(|k| self.desired_force[k].resolve(xdot_d[k]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        Self {
            mass: 70.0,
            stiffness: 2000.0,
            damping: 800.0,
        }
    }
}

impl HumanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.stiffness >= 0.0) || !(self.damping >= 0.0) {
            return Err(invalid(
                "human mass must be positive, stiffness and damping non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub t: f64,
    pub x_c: Vec7,
    pub xdot_c: Vec7,
    pub x_h: Vec7,
    pub xdot_h: Vec7,
    pub f_i: Vec7,
}

impl CoupledState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && [&self.x_c, &self.xdot_c, &self.x_h, &self.xdot_h, &self.f_i]
                .into_iter()
                .all(axes::is_finite)
    }
}

/// Commanded contact-space acceleration of the admittance law, using the
/// interaction force stored in `state.f_i`.
pub fn control_accel(
    state: &CoupledState,
    xdot_d: &Vec7,
    xddot_d: &Vec7,
    robot: &RobotParams,
) -> Vec7 {
    accel_with_force(&state.xdot_c, &state.f_i, xdot_d, xddot_d, robot)
}

fn accel_with_force(
    xdot_c: &Vec7,
    f_i: &Vec7,
    xdot_d: &Vec7,
    xddot_d: &Vec7,
    robot: &RobotParams,
) -> Vec7 {
    let f_d = robot.effective_desired_force(xdot_d);
    std::array::from_fn(|k| {
        let drive =
            robot.damping[k] * (xdot_d[k] - xdot_c[k]) + robot.force_gain[k] * f_d[k] - f_i[k];
        xddot_d[k] + drive / robot.inertia[k]
    })
}

/// Spring-damper force between the contact point and the partner's intent.
/// Only the planar axes (x, y, φ) are in contact.
pub fn human_force(state: &CoupledState, human: &HumanParams) -> Vec7 {
    let mut f = ZERO;
    for k in 0..PLANAR {
        f[k] = human.stiffness * (state.x_c[k] - state.x_h[k])
            + human.damping * (state.xdot_c[k] - state.xdot_h[k]);
    }
    f
}

/// What an intent policy sees when asked to advance the partner by one step.
#[derive(Clone, Copy, Debug)]
pub struct IntentInput<'a> {
    /// Time at the end of the step being taken.
    pub t: f64,
    pub dt: f64,
    pub desired_velocity: &'a Vec7,
    pub state: &'a CoupledState,
}

/// Source of the partner's intended motion.
pub trait IntentPolicy {
    /// Returns the new intent position and velocity.
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7);
}

impl<P: IntentPolicy + ?Sized> IntentPolicy for &mut P {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        (**self).advance(input)
    }
}

impl<P: IntentPolicy + ?Sized> IntentPolicy for Box<P> {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        (**self).advance(input)
    }
}

/// Fixed-step integrator for the coupled system. Owns the actuator-lag and
/// feedback-delay memory that [`CoupledState`] alone does not carry.
#[derive(Clone, Debug)]
pub struct Simulator {
    state: CoupledState,
    dt: f64,
    steps: u64,
    lag_accel: Vec7,
    delayed_force: VecDeque<Vec7>,
}

impl Simulator {
    pub fn new(initial: CoupledState, robot: &RobotParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::OutOfRange {
                what: "dt",
                value: dt,
            });
        }
        robot.validate()?;
        let delay_steps = (robot.loop_delay / dt).round() as usize;
        let delayed_force = std::iter::repeat_n(initial.f_i, delay_steps).collect();
        Ok(Self {
            state: initial,
            dt,
            steps: 0,
            lag_accel: ZERO,
            delayed_force,
        })
    }

    pub fn state(&self) -> &CoupledState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Advance one step: update the partner's intent, measure the interaction
    /// force, compute the (lagged, delayed) admittance acceleration and
    /// integrate with semi-implicit Euler.
    pub fn step(
        &mut self,
        xdot_d: &Vec7,
        xddot_d: &Vec7,
        robot: &RobotParams,
        human: &HumanParams,
        policy: &mut dyn IntentPolicy,
    ) -> Result<&CoupledState> {
        let dt = self.dt;
        let t_next = (self.steps + 1) as f64 * dt;

        let (x_h, xdot_h) = policy.advance(&IntentInput {
            t: t_next,
            dt,
            desired_velocity: xdot_d,
            state: &self.state,
        });
        self.state.x_h = x_h;
        self.state.xdot_h = xdot_h;
        self.state.f_i = human_force(&self.state, human);

        let measured = if self.delayed_force.is_empty() {
            self.state.f_i
        } else {
            self.delayed_force.push_back(self.state.f_i);
            self.delayed_force.pop_front().unwrap_or(ZERO)
        };

        let commanded = accel_with_force(&self.state.xdot_c, &measured, xdot_d, xddot_d, robot);
        let accel = if robot.actuator_lag > 0.0 {
            let alpha = 1.0 - (-dt / robot.actuator_lag).exp();
            for k in 0..DOF {
                self.lag_accel[k] += alpha * (commanded[k] - self.lag_accel[k]);
            }
            self.lag_accel
        } else {
            commanded
        };

        for k in 0..DOF {
            self.state.xdot_c[k] += accel[k] * dt;
            self.state.x_c[k] += self.state.xdot_c[k] * dt;
        }
        self.steps += 1;
        self.state.t = t_next;

        if !self.state.is_finite() {
            return Err(Error::SimulationFault {
                t: self.state.t,
                msg: format!(
                    "non-finite state (velocity {:?}, force {:?})",
                    self.state.xdot_c, self.state.f_i
                ),
            });
        }
        Ok(&self.state)
    }
}

/// Desired velocity/acceleration of a figure repeated back to back.
#[derive(Clone, Debug)]
pub struct FigureLoop<'a> {
    figure: &'a DanceFigure,
    tempo: Tempo,
    scaling: StudentScaling,
    dt: f64,
    steps_per_figure: u64,
}

impl<'a> FigureLoop<'a> {
    pub fn new(figure: &'a DanceFigure, tempo: Tempo, scaling: StudentScaling, dt: f64) -> Self {
        let steps_per_figure = (figure.duration(tempo) / dt).round().max(1.0) as u64;
        Self {
            figure,
            tempo,
            scaling,
            dt,
            steps_per_figure,
        }
    }

    pub fn steps_per_figure(&self) -> u64 {
        self.steps_per_figure
    }

    /// Desired velocity and acceleration at global step index `step`.
    pub fn at(&self, step: u64) -> (Vec7, Vec7) {
        let local = (step % self.steps_per_figure) as f64 * self.dt;
        let local = local.min(self.figure.duration(self.tempo));
        let v = desired_velocity(self.figure, local, self.tempo, &self.scaling)
            .expect("local time in range");
        let a = desired_acceleration(self.figure, local, self.tempo, &self.scaling)
            .expect("local time in range");
        (v, a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopTestConfig {
    /// Partner freeze interval `[t0, t1]` in seconds.
    pub freeze: (f64, f64),
    /// Total simulated time.
    pub duration: f64,
    pub dt: f64,
    /// Record every n-th step.
    pub record_every: u32,
}

impl Default for StopTestConfig {
    fn default() -> Self {
        Self {
            freeze: (2.0, 6.0),
            duration: 10.0,
            dt: DEFAULT_DT,
            record_every: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopSample {
    pub t: f64,
    pub desired: [f64; PLANAR],
    pub velocity: [f64; PLANAR],
    pub force: [f64; PLANAR],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StopTrace {
    pub samples: Vec<StopSample>,
}

pub const STOP_TRACE_HEADER: &str = "t,vxd,vx,fix,vyd,vy,fiy,vphid,vphi,fiphi";

impl StopTrace {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{STOP_TRACE_HEADER}")?;
        for s in &self.samples {
            write!(w, "{}", s.t)?;
            for k in 0..PLANAR {
                write!(w, ",{},{},{}", s.desired[k], s.velocity[k], s.force[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Run the repeated `figure` with a partner who follows the guidance except
/// inside the freeze window, where the partner stands still.
pub fn stop_test(
    robot: &RobotParams,
    human: &HumanParams,
    figure: &DanceFigure,
    tempo: Tempo,
    cfg: &StopTestConfig,
) -> Result<StopTrace> {
    let (t0, t1) = cfg.freeze;
    if !(0.0 <= t0 && t0 <= t1 && t1 <= cfg.duration) {
        return Err(invalid(format!(
            "freeze window [{t0}, {t1}] outside [0, {}]",
            cfg.duration
        )));
    }
    human.validate()?;
    let mut sim = Simulator::new(CoupledState::default(), robot, cfg.dt)?;
    let lp = FigureLoop::new(figure, tempo, StudentScaling::identity(), cfg.dt);
    let mut policy = FrozenIntent::new(t0, t1);
    let total = (cfg.duration / cfg.dt).round() as u64;
    let every = u64::from(cfg.record_every.max(1));

    let mut trace = StopTrace::default();
    let record = |trace: &mut StopTrace, s: &CoupledState, vd: &Vec7| {
        trace.samples.push(StopSample {
            t: s.t,
            desired: axes::planar(vd),
            velocity: axes::planar(&s.xdot_c),
            force: axes::planar(&s.f_i),
        });
    };
    record(&mut trace, sim.state(), &lp.at(0).0);
    for i in 0..total {
        let (vd, ad) = lp.at(i);
        sim.step(&vd, &ad, robot, human, &mut policy)?;
        if (i + 1) % every == 0 {
            record(&mut trace, sim.state(), &lp.at(i + 1).0);
        }
    }
    Ok(trace)
}
