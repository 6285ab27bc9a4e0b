//! Simulated student: an error-correcting internal-model learner and the
//! intent policies that drive the partner side of the coupled simulation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, DOF, PLANAR, ZERO};
use crate::dynamics::{IntentInput, IntentPolicy};
use crate::error::{invalid, Result};
use crate::figures::{interpolate, DanceFigure, FigureKind, ProfileSample};
use crate::scoring::ZoneConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerParams {
    /// Fraction of the last error corrected per practice.
    pub learning_gain: f64,
    /// Initial error level in zone units.
    pub baseline_error: f64,
    /// Half-width of the uniform perturbation, in zone units.
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            learning_gain: 0.1,
            baseline_error: 8.0,
            noise_amp: 0.4,
            seed: 1,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_gain", self.learning_gain),
            ("baseline_error", self.baseline_error),
            ("noise_amp", self.noise_amp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!(
                    "{name} must be finite and non-negative (got {v})"
                )));
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, amp: f64) -> f64 {
    amp * (2.0 * rng.random::<f64>() - 1.0)
}

/// Intended velocity profile per figure kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InternalModel {
    pub profiles: BTreeMap<FigureKind, Vec<ProfileSample>>,
}

impl InternalModel {
    pub fn intent(&self, kind: FigureKind) -> Option<&[ProfileSample]> {
        self.profiles.get(&kind).map(Vec::as_slice)
    }

    /// Apply one correction step to the profile of `kind`.
    pub fn update(
        &self,
        kind: FigureKind,
        desired: &[ProfileSample],
        executed: &[ProfileSample],
        g: f64,
    ) -> Result<InternalModel> {
        let current = self
            .intent(kind)
            .ok_or_else(|| invalid(format!("no intent profile for {kind}")))?;
        let mut next = self.clone();
        next.profiles
            .insert(kind, update_internal_model(current, desired, executed, g)?);
        Ok(next)
    }
}

/// `intent + g (desired - executed)` node by node.
pub fn update_internal_model(
    intent: &[ProfileSample],
    desired: &[ProfileSample],
    executed: &[ProfileSample],
    g: f64,
) -> Result<Vec<ProfileSample>> {
    let same_grid = |a: &[ProfileSample]| {
        a.len() == intent.len() && a.iter().zip(intent).all(|(p, q)| p.phase == q.phase)
    };
    if !same_grid(desired) || !same_grid(executed) {
        return Err(invalid(
            "intent, desired and executed profiles must share one phase grid",
        ));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(invalid(format!(
            "learning gain must be non-negative (got {g})"
        )));
    }
    Ok(intent
        .iter()
        .zip(desired.iter().zip(executed))
        .map(|(i, (d, e))| ProfileSample {
            phase: i.phase,
            velocity: std::array::from_fn(|k| i.velocity[k] + g * (d.velocity[k] - e.velocity[k])),
        })
        .collect())
}

/// Error traces without dynamics: practice `p` emits `m` samples of
/// `max(0, baseline (1-g)^p + noise)`.
pub fn simulate_error_sequence(
    learner: &LearnerParams,
    practices: usize,
    samples: usize,
) -> Result<Vec<Vec<f64>>> {
    learner.validate()?;
    if practices == 0 || samples == 0 {
        return Err(invalid("need at least one practice and one sample"));
    }
    let mut rng = learner.rng();
    let decay = 1.0 - learner.learning_gain.min(1.0);
    let mut level = learner.baseline_error;
    Ok((0..practices)
        .map(|_| {
            let trace = (0..samples)
                .map(|_| (level + uniform(&mut rng, learner.noise_amp)).max(0.0))
                .collect();
            level *= decay;
            trace
        })
        .collect())
}

/// Starting intent for a figure: the desired profile plus a smooth seeded
/// distortion on x, y and phi whose mean weighted error is `baseline_error`.
pub fn initial_intent(
    figure: &DanceFigure,
    learner: &LearnerParams,
    zones: &ZoneConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<ProfileSample> {
    let coeffs: [[f64; 2]; PLANAR] =
        std::array::from_fn(|_| [uniform(rng, 1.0), uniform(rng, 1.0)]);
    let shape = |phase: f64| -> [f64; PLANAR] {
        std::array::from_fn(|a| {
            coeffs[a][0] * (PI * phase).sin() + coeffs[a][1] * (2.0 * PI * phase).sin()
        })
    };
    let offsets: Vec<ProfileSample> = figure
        .profile()
        .iter()
        .map(|s| {
            let d = shape(s.phase);
            let mut velocity = ZERO;
            velocity[..PLANAR].copy_from_slice(&d);
            ProfileSample {
                phase: s.phase,
                velocity,
            }
        })
        .collect();

    const GRID: usize = 400;
    let mean = (0..GRID)
        .map(|i| {
            let v = interpolate(&offsets, (i as f64 + 0.5) / GRID as f64);
            (0..DOF).map(|k| zones.weights[k] * v[k].abs()).sum::<f64>()
        })
        .sum::<f64>()
        / GRID as f64;
    let target = learner.baseline_error / zones.error_scale;
    let gain = if mean > 0.0 { target / mean } else { 0.0 };

    figure
        .profile()
        .iter()
        .zip(&offsets)
        .map(|(d, o)| ProfileSample {
            phase: d.phase,
            velocity: std::array::from_fn(|k| d.velocity[k] + gain * o.velocity[k]),
        })
        .collect()
}

/// Per-practice execution noise added to the intent profile nodes.
pub fn perturb(profile: &[ProfileSample], amp: f64, rng: &mut ChaCha8Rng) -> Vec<ProfileSample> {
    profile
        .iter()
        .map(|s| {
            let mut velocity = s.velocity;
            for v in velocity.iter_mut().take(PLANAR) {
                *v += uniform(rng, amp);
            }
            ProfileSample {
                phase: s.phase,
                velocity,
            }
        })
        .collect()
}

fn integrate(prev: &Vec7, v: &Vec7, dt: f64) -> Vec7 {
    std::array::from_fn(|k| prev[k] + v[k] * dt)
}

/// Partner that moves exactly as guided.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompliantIntent;

impl IntentPolicy for CompliantIntent {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        let v = *input.desired_velocity;
        (integrate(&input.state.x_h, &v, input.dt), v)
    }
}

/// Compliant partner that stands still during `[t0, t1)`.
#[derive(Clone, Copy, Debug)]
pub struct FrozenIntent {
    t0: f64,
    t1: f64,
}

impl FrozenIntent {
    pub fn new(t0: f64, t1: f64) -> Self {
        Self { t0, t1 }
    }

    pub fn is_frozen(&self, t: f64) -> bool {
        t > self.t0 && t <= self.t1
    }
}

impl IntentPolicy for FrozenIntent {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        if self.is_frozen(input.t) {
            (input.state.x_h, ZERO)
        } else {
            CompliantIntent.advance(input)
        }
    }
}

/// Partner executing its own intent profile for the current figure.
#[derive(Clone, Debug)]
pub struct LearnerIntent {
    profile: Vec<ProfileSample>,
    start: f64,
    duration: f64,
}

impl LearnerIntent {
    pub fn new(profile: Vec<ProfileSample>, start: f64, duration: f64) -> Result<Self> {
        if profile.is_empty() || !(duration > 0.0) {
            return Err(invalid(
                "learner intent needs a profile and a positive duration",
            ));
        }
        Ok(Self {
            profile,
            start,
            duration,
        })
    }

    pub fn begin_figure(&mut self, profile: Vec<ProfileSample>, start: f64) {
        self.profile = profile;
        self.start = start;
    }
}

impl IntentPolicy for LearnerIntent {
    fn advance(&mut self, input: &IntentInput<'_>) -> (Vec7, Vec7) {
        let phase = ((input.t - self.start) / self.duration).clamp(0.0, 1.0);
        let mut v = interpolate(&self.profile, phase);
        v[PLANAR..].copy_from_slice(&input.desired_velocity[PLANAR..]);
        (integrate(&input.state.x_h, &v, input.dt), v)
    }
}

/// Which partner behaviour to build with [`intent_policy`].
#[derive(Clone, Debug)]
pub enum IntentKind {
    Compliant,
    Frozen {
        t0: f64,
        t1: f64,
    },
    Learner {
        profile: Vec<ProfileSample>,
        start: f64,
        duration: f64,
    },
}

pub fn intent_policy(kind: IntentKind) -> Result<Box<dyn IntentPolicy + Send>> {
    Ok(match kind {
        IntentKind::Compliant => Box::new(CompliantIntent),
        IntentKind::Frozen { t0, t1 } => {
            if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
                return Err(invalid(format!("invalid freeze window [{t0}, {t1}]")));
            }
            Box::new(FrozenIntent::new(t0, t1))
        }
        IntentKind::Learner {
            profile,
            start,
            duration,
        } => Box::new(LearnerIntent::new(profile, start, duration)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CoupledState, FigureLoop, HumanParams, RobotParams, Simulator};
    use crate::figures::{builtin_figure, StudentScaling, Tempo};

    fn grid(values: &[f64]) -> Vec<ProfileSample> {
        let n = values.len() - 1;
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut velocity = ZERO;
                velocity[0] = *v;
                ProfileSample {
                    phase: i as f64 / n as f64,
                    velocity,
                }
            })
            .collect()
    }

    #[test]
    fn zero_gain_leaves_model_unchanged() {
        let intent = grid(&[0.0, 0.1, 0.3]);
        let out = update_internal_model(
            &intent,
            &grid(&[0.0, 0.2, 0.2]),
            &grid(&[0.5, 0.5, 0.5]),
            0.0,
        )
        .unwrap();
        assert_eq!(out, intent);
    }

    #[test]
    fn unit_gain_with_faithful_execution_lands_on_desired() {
        let intent = grid(&[0.0, 0.1, 0.3]);
        let desired = grid(&[0.0, 0.2, 0.2]);
        let out = update_internal_model(&intent, &desired, &intent, 1.0).unwrap();
        for (o, d) in out.iter().zip(&desired) {
            assert!((o.velocity[0] - d.velocity[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_updates_decay_geometrically() {
        let desired = grid(&[0.0, 0.25, 0.5, 0.25, 0.0]);
        let mut intent = grid(&[0.1, 0.0, 0.2, 0.4, -0.1]);
        let e0: Vec<f64> = intent
            .iter()
            .zip(&desired)
            .map(|(i, d)| (d.velocity[0] - i.velocity[0]).abs())
            .collect();
        let g = 0.3;
        for n in 1..=12 {
            let executed = intent.clone();
            intent = update_internal_model(&intent, &desired, &executed, g).unwrap();
            for ((i, d), e) in intent.iter().zip(&desired).zip(&e0) {
                let expect = (1.0f64 - g).powi(n) * e;
                assert!(((d.velocity[0] - i.velocity[0]).abs() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = grid(&[0.0, 0.1, 0.3]);
        let b = grid(&[0.0, 0.1, 0.2, 0.3]);
        assert!(update_internal_model(&a, &b, &a, 0.5).is_err());
        let mut shifted = a.clone();
        shifted[1].phase = 0.4;
        assert!(update_internal_model(&a, &a, &shifted, 0.5).is_err());
    }

    #[test]
    fn model_update_by_kind() {
        let mut model = InternalModel::default();
        let p = grid(&[0.0, 0.1]);
        assert!(model.update(FigureKind::Cclf, &p, &p, 0.5).is_err());
        model.profiles.insert(FigureKind::Cclf, p.clone());
        let next = model
            .update(FigureKind::Cclf, &grid(&[0.2, 0.1]), &p, 0.5)
            .unwrap();
        assert_eq!(next.intent(FigureKind::Cclf).unwrap()[0].velocity[0], 0.1);
    }

    #[test]
    fn error_sequence_without_learning_is_flat() {
        let l = LearnerParams {
            learning_gain: 0.0,
            baseline_error: 6.0,
            noise_amp: 0.0,
            seed: 3,
        };
        let traces = simulate_error_sequence(&l, 5, 7).unwrap();
        assert_eq!(traces.len(), 5);
        assert!(traces.iter().flatten().all(|e| *e == 6.0));
    }

    #[test]
    fn error_sequence_decays_with_gain() {
        let l = LearnerParams {
            learning_gain: 0.02,
            baseline_error: 10.0,
            noise_amp: 0.0,
            seed: 3,
        };
        let traces = simulate_error_sequence(&l, 101, 1).unwrap();
        assert!((traces[100][0] - 10.0 * 0.98f64.powi(100)).abs() < 1e-12);
        assert!((traces[100][0] - 1.326).abs() < 1e-3);
        assert!(traces.windows(2).all(|w| w[1][0] <= w[0][0]));
    }

    #[test]
    fn error_sequence_is_deterministic_and_non_negative() {
        let l = LearnerParams {
            learning_gain: 0.05,
            baseline_error: 0.5,
            noise_amp: 1.0,
            seed: 42,
        };
        let a = simulate_error_sequence(&l, 20, 50).unwrap();
        assert_eq!(a, simulate_error_sequence(&l, 20, 50).unwrap());
        assert!(a.iter().flatten().all(|e| *e >= 0.0));
        let other = LearnerParams {
            seed: 43,
            ..l.clone()
        };
        assert_ne!(a, simulate_error_sequence(&other, 20, 50).unwrap());
        assert!(simulate_error_sequence(&l, 0, 5).is_err());
    }

    #[test]
    fn initial_intent_hits_the_baseline_error() {
        let fig = builtin_figure(FigureKind::Ccrb);
        let zones = ZoneConfig::default();
        let l = LearnerParams {
            baseline_error: 7.0,
            ..Default::default()
        };
        let intent = initial_intent(&fig, &l, &zones, &mut l.rng());
        assert_eq!(intent.len(), fig.profile().len());
        let n = 2000;
        let mean = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                let d = fig.velocity_at_phase(p);
                let v = interpolate(&intent, p);
                zones.scored_error(&d, &v)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 7.0).abs() < 0.05, "{mean}");
    }

    fn run_figure(
        policy: &mut dyn IntentPolicy,
        human: &HumanParams,
        robot: &RobotParams,
    ) -> (f64, f64) {
        let fig = builtin_figure(FigureKind::Cclf);
        let dt = 0.001;
        let lp = FigureLoop::new(&fig, Tempo::SLOW_WALTZ, StudentScaling::identity(), dt);
        let mut sim = Simulator::new(CoupledState::default(), robot, dt).unwrap();
        let (mut err2, mut ref2) = (0.0, 0.0);
        for i in 0..lp.steps_per_figure() {
            let (vd, ad) = lp.at(i);
            sim.step(&vd, &ad, robot, human, policy).unwrap();
            let (vd_next, _) = lp.at(i + 1);
            for k in 0..PLANAR {
                err2 += (sim.state().xdot_c[k] - vd_next[k]).powi(2);
                ref2 += vd_next[k].powi(2);
            }
        }
        (err2.sqrt(), ref2.sqrt())
    }

    #[test]
    fn compliant_partner_is_tracked_closely() {
        // no guidance force and no coupling stiffness leave pure tracking
        let robot = RobotParams {
            force_gain: [0.0; DOF],
            ..RobotParams::default()
        };
        let human = HumanParams {
            stiffness: 0.0,
            damping: 0.0,
            ..HumanParams::default()
        };
        let (err, reference) = run_figure(&mut CompliantIntent, &human, &robot);
        assert!(err / reference < 0.02, "relative RMS {}", err / reference);
    }

    #[test]
    fn frozen_window_holds_position() {
        let mut p = FrozenIntent::new(1.0, 2.0);
        let mut state = CoupledState::default();
        state.x_h[0] = 0.7;
        let vd = [0.3; DOF];
        let inside = p.advance(&IntentInput {
            t: 1.5,
            dt: 0.001,
            desired_velocity: &vd,
            state: &state,
        });
        assert_eq!(inside, (state.x_h, ZERO));
        let outside = p.advance(&IntentInput {
            t: 2.5,
            dt: 0.001,
            desired_velocity: &vd,
            state: &state,
        });
        assert_eq!(outside.1, vd);
        assert!(intent_policy(IntentKind::Frozen { t0: 2.0, t1: 1.0 }).is_err());
    }

    #[test]
    fn learner_error_falls_over_practices() {
        let fig = builtin_figure(FigureKind::Cclf);
        let tempo = Tempo::SLOW_WALTZ;
        let robot = RobotParams::default();
        let human = HumanParams::default();
        let zones = ZoneConfig::default();
        let l = LearnerParams {
            learning_gain: 0.3,
            baseline_error: 8.0,
            noise_amp: 0.0,
            seed: 5,
        };
        let dt = 0.001;
        let lp = FigureLoop::new(&fig, tempo, StudentScaling::identity(), dt);
        let steps = lp.steps_per_figure();
        let mut intent = initial_intent(&fig, &l, &zones, &mut l.rng());
        let mut sim = Simulator::new(CoupledState::default(), &robot, dt).unwrap();
        let mut policy = LearnerIntent::new(intent.clone(), 0.0, fig.duration(tempo)).unwrap();

        let mut means = Vec::new();
        for practice in 0..10u64 {
            let start = sim.state().t;
            policy.begin_figure(intent.clone(), start);
            let node_steps: Vec<u64> = fig
                .profile()
                .iter()
                .map(|s| (s.phase * steps as f64).round() as u64)
                .collect();
            let mut executed = vec![ZERO; node_steps.len()];
            let mut errors = Vec::new();
            for i in 0..steps {
                let global = practice * steps + i;
                for (slot, node) in executed.iter_mut().zip(&node_steps) {
                    if *node == i {
                        *slot = sim.state().xdot_c;
                    }
                }
                let (vd, ad) = lp.at(global);
                sim.step(&vd, &ad, &robot, &human, &mut policy).unwrap();
                if (i + 1) % 10 == 0 {
                    let (vd_next, _) = lp.at(global + 1);
                    let local = ((i + 1) as f64 * dt).min(fig.duration(tempo));
                    let vd_now = if i + 1 == steps {
                        crate::figures::desired_velocity(
                            &fig,
                            local,
                            tempo,
                            &StudentScaling::identity(),
                        )
                        .unwrap()
                    } else {
                        vd_next
                    };
                    errors.push(zones.scored_error(&vd_now, &sim.state().xdot_c));
                }
            }
            if let Some(last) = executed.last_mut() {
                *last = sim.state().xdot_c;
            }
            let executed: Vec<ProfileSample> = fig
                .profile()
                .iter()
                .zip(executed)
                .map(|(s, velocity)| ProfileSample {
                    phase: s.phase,
                    velocity,
                })
                .collect();
            intent =
                update_internal_model(&intent, fig.profile(), &executed, l.learning_gain).unwrap();
            means.push(errors.iter().sum::<f64>() / errors.len() as f64);
        }
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    }
}
