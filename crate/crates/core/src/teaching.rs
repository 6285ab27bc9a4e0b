//! Progressive teaching: turns the CPS history into a learning gain and
//! adapts the robot's damping and force gains once per figure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, DOF};
use crate::dynamics::RobotParams;
use crate::error::{invalid, Error, Result};
use crate::figures::FigureKind;
use crate::scoring::{face_color, CpsState, ScoreParams, ZoneId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PtParams {
    pub alpha_d: f64,
    pub alpha_f: f64,
    pub kd_min: Vec7,
    pub kd_max: Vec7,
    pub gamma_star_min: f64,
    pub gamma_star_max: f64,
    pub cps_m: f64,
}

impl Default for PtParams {
    fn default() -> Self {
        Self {
            alpha_d: 4.0,
            alpha_f: 50.0,
            kd_min: [80.0, 80.0, 50.0, 50.0, 50.0, 50.0, 50.0],
            kd_max: [130.0, 130.0, 100.0, 100.0, 100.0, 100.0, 100.0],
            gamma_star_min: -1.0,
            gamma_star_max: 1.0,
            cps_m: 50.0,
        }
    }
}

impl PtParams {
    pub fn validate(&self) -> Result<()> {
        if (0..DOF).any(|k| !(self.kd_min[k] < self.kd_max[k])) {
            return Err(invalid("kd_min must be below kd_max on every axis"));
        }
        if !(self.alpha_d > 0.0 && self.alpha_f > 0.0 && self.cps_m > 0.0) {
            return Err(invalid("alpha_d, alpha_f and cps_m must be positive"));
        }
        if !(self.gamma_star_min < self.gamma_star_max) {
            return Err(invalid("gamma_star_min must be below gamma_star_max"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtState {
    pub gamma_star: f64,
    pub gamma: f64,
    pub kd_current: Vec7,
    pub kf_current: Vec7,
    /// Completed practices per figure kind.
    pub practice_counts: BTreeMap<FigureKind, u32>,
    pub pt_mode: bool,
}

impl PtState {
    /// Fresh student with maximal guidance.
    pub fn novice(params: &PtParams, pt_mode: bool) -> Self {
        Self {
            gamma_star: params.gamma_star_min,
            gamma: 0.0,
            kd_current: params.kd_max,
            kf_current: [1.0; DOF],
            practice_counts: BTreeMap::new(),
            pt_mode,
        }
    }

    pub fn practice_count(&self, kind: FigureKind) -> u32 {
        self.practice_counts.get(&kind).copied().unwrap_or(0)
    }

    /// Copy the current gains into the controller parameters.
    pub fn apply(&self, robot: &mut RobotParams) {
        robot.damping = self.kd_current;
        robot.force_gain = self.kf_current;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    BarColor,
    FaceColor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub kind: FeedbackKind,
    pub color: ZoneId,
    pub figure_id: String,
    pub practice_n: u32,
}

/// Normalised time-average of the clamped CPS history and its [0, 1] image.
pub fn learning_gain(cps: &CpsState, params: &PtParams) -> Result<(f64, f64)> {
    if cps.n_s == 0 {
        return Err(Error::UndefinedInput(
            "learning gain before any scored sample",
        ));
    }
    let gamma_star = cps.sum_cps / (params.cps_m * cps.n_s as f64);
    let gamma = ((gamma_star - params.gamma_star_min)
        / (params.gamma_star_max - params.gamma_star_min))
        .clamp(0.0, 1.0);
    Ok((gamma_star, gamma))
}

pub fn adapt_damping(gamma: f64, params: &PtParams) -> Vec7 {
    std::array::from_fn(|k| {
        let (lo, hi) = (params.kd_min[k], params.kd_max[k]);
        (lo + (hi - lo) * (1.0 - gamma / params.alpha_d)).clamp(lo, hi)
    })
}

pub fn adapt_force_gain(gamma: f64, params: &PtParams) -> Vec7 {
    [(1.0 - gamma / params.alpha_f).clamp(0.0, 1.0); DOF]
}

/// End-of-figure update. `result` is the figure's mean error and bar zone.
pub fn pt_tick(
    pt: &PtState,
    cps: &CpsState,
    kind: FigureKind,
    figure_id: &str,
    result: (f64, ZoneId),
    params: &PtParams,
    score: &ScoreParams,
) -> (PtState, Vec<FeedbackEvent>) {
    let mut next = pt.clone();
    let practice_n = pt.practice_count(kind);
    *next.practice_counts.entry(kind).or_insert(0) += 1;

    if pt.pt_mode {
        if let Ok((gamma_star, gamma)) = learning_gain(cps, params) {
            next.gamma_star = gamma_star;
            next.gamma = gamma;
            next.kd_current = adapt_damping(gamma, params);
            next.kf_current = adapt_force_gain(gamma, params);
        }
    }

    let event = |kind, color| FeedbackEvent {
        kind,
        color,
        figure_id: figure_id.to_string(),
        practice_n,
    };
    let events = vec![
        event(FeedbackKind::BarColor, result.1),
        event(FeedbackKind::FaceColor, face_color(cps.cps, score)),
    ];
    (next, events)
}

pub fn reset_for_student(
    params: &PtParams,
    initial_kd: Vec7,
    initial_kf: Vec7,
    pt_mode: bool,
) -> Result<PtState> {
    params.validate()?;
    for k in 0..DOF {
        if !(params.kd_min[k]..=params.kd_max[k]).contains(&initial_kd[k]) {
            return Err(Error::OutOfRange {
                what: "initial damping",
                value: initial_kd[k],
            });
        }
        if !(0.0..=1.0).contains(&initial_kf[k]) {
            return Err(Error::OutOfRange {
                what: "initial force gain",
                value: initial_kf[k],
            });
        }
    }
    Ok(PtState {
        kd_current: initial_kd,
        kf_current: initial_kf,
        ..PtState::novice(params, pt_mode)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::cps_update;
    use proptest::prelude::*;

    fn history(values: &[f64]) -> CpsState {
        CpsState {
            cps: *values.last().unwrap_or(&0.0),
            n_s: values.len() as u64,
            sum_cps: values.iter().sum(),
            n_total: values.len() as u64,
            ..Default::default()
        }
    }

    #[test]
    fn learning_gain_examples() {
        let p = PtParams::default();
        assert_eq!(
            learning_gain(&history(&[50.0; 10]), &p).unwrap(),
            (1.0, 1.0)
        );
        assert_eq!(
            learning_gain(&history(&[-50.0; 10]), &p).unwrap(),
            (-1.0, 0.0)
        );
        assert_eq!(
            learning_gain(&history(&[25.0; 10]), &p).unwrap(),
            (0.5, 0.75)
        );
        assert!(matches!(
            learning_gain(&CpsState::default(), &p),
            Err(Error::UndefinedInput(_))
        ));
    }

    #[test]
    fn damping_examples() {
        let p = PtParams::default();
        assert_eq!(adapt_damping(0.0, &p)[0], 130.0);
        assert_eq!(adapt_damping(1.0, &p)[0], 117.5);
        assert_eq!(adapt_damping(0.75, &p)[1], 120.625);
        assert_eq!(adapt_damping(0.0, &p)[2], 100.0);
    }

    #[test]
    fn force_gain_examples() {
        let p = PtParams::default();
        assert_eq!(adapt_force_gain(0.0, &p)[0], 1.0);
        assert!((adapt_force_gain(1.0, &p)[0] - 0.98).abs() < 1e-15);
        assert!((adapt_force_gain(0.5, &p)[1] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn constant_mode_keeps_gains() {
        let p = PtParams::default();
        let s = ScoreParams::default();
        let mut pt = PtState::novice(&p, false);
        for i in 0..20 {
            let (next, _) = pt_tick(
                &pt,
                &history(&[40.0; 50]),
                FigureKind::Cclf,
                "f",
                (1.0, ZoneId::Blue),
                &p,
                &s,
            );
            assert_eq!(next.kd_current, p.kd_max);
            assert_eq!(next.kf_current, [1.0; DOF]);
            assert_eq!(next.practice_count(FigureKind::Cclf), i + 1);
            pt = next;
        }
    }

    #[test]
    fn improving_history_lowers_damping() {
        let p = PtParams::default();
        let s = ScoreParams::default();
        let mut pt = PtState::novice(&p, true);
        let mut last = pt.kd_current[0];
        let mut values = Vec::new();
        for level in [-20.0, -5.0, 10.0, 30.0, 50.0] {
            values.extend(std::iter::repeat_n(level, 40));
            let (next, _) = pt_tick(
                &pt,
                &history(&values),
                FigureKind::Ccrf,
                "f",
                (1.0, ZoneId::Green),
                &p,
                &s,
            );
            assert!(next.kd_current[0] <= last);
            last = next.kd_current[0];
            pt = next;
        }
        assert!(last < 130.0);
    }

    #[test]
    fn grey_figure_feedback_follows_cps_oracle() {
        let p = PtParams::default();
        let s = ScoreParams::default();
        let mut cps = CpsState::default();
        for _ in 0..400 {
            cps = cps_update(&cps, ZoneId::Grey, &s);
        }
        assert_eq!(cps.cps, -50.0);
        let (next, events) = pt_tick(
            &PtState::novice(&p, true),
            &cps,
            FigureKind::Cclf,
            "cclf",
            (20.0, ZoneId::Grey),
            &p,
            &s,
        );
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].kind, FeedbackKind::BarColor);
        assert_eq!(events[0].color, ZoneId::Grey);
        assert_eq!(events[1].kind, FeedbackKind::FaceColor);
        assert_eq!(events[1].color, ZoneId::Grey);
        assert_eq!(events[1].practice_n, 0);
        // oracle: time-average of the clamped history, mapped onto [0, 1]
        let mut c: f64 = 0.0;
        let mut sum = 0.0;
        for _ in 0..400 {
            c = (c - 1.0).max(-50.0);
            sum += c;
        }
        let gamma = (sum / (50.0 * 400.0) + 1.0) / 2.0;
        assert!((next.gamma - gamma).abs() < 1e-12);
        assert!((next.kd_current[0] - (80.0 + 50.0 * (1.0 - gamma / 4.0))).abs() < 1e-9);
        assert!(next.kd_current[0] < 130.0);
    }

    #[test]
    fn reset_examples() {
        let p = PtParams::default();
        let a = reset_for_student(&p, p.kd_max, [1.0; DOF], true).unwrap();
        assert_eq!(a.kd_current[0], 130.0);
        assert_eq!(a.kf_current[0], 1.0);
        assert_eq!(
            a,
            reset_for_student(&p, p.kd_max, [1.0; DOF], true).unwrap()
        );
        let mut low = p.kd_max;
        low[0] = 70.0;
        assert!(reset_for_student(&p, low, [1.0; DOF], true).is_err());
        assert!(reset_for_student(&p, p.kd_max, [1.5; DOF], true).is_err());
    }

    proptest! {
        #[test]
        fn gains_stay_in_range(gamma in -10.0f64..10.0) {
            let p = PtParams::default();
            let kd = adapt_damping(gamma, &p);
            let kf = adapt_force_gain(gamma, &p);
            for k in 0..DOF {
                prop_assert!(p.kd_min[k] <= kd[k] && kd[k] <= p.kd_max[k]);
                prop_assert!((0.0..=1.0).contains(&kf[k]));
            }
        }

        #[test]
        fn better_history_never_earns_more_guidance(
            base in proptest::collection::vec(-50.0f64..50.0, 1..200),
            lift in proptest::collection::vec(0.0f64..20.0, 200),
        ) {
            let p = PtParams::default();
            let better: Vec<f64> = base.iter().zip(&lift).map(|(b, l)| (b + l).min(50.0)).collect();
            let (gs_a, g_a) = learning_gain(&history(&base), &p).unwrap();
            let (gs_b, g_b) = learning_gain(&history(&better), &p).unwrap();
            prop_assert!(gs_b >= gs_a - 1e-12);
            prop_assert!(adapt_damping(g_b, &p)[0] <= adapt_damping(g_a, &p)[0] + 1e-12);
            prop_assert!(adapt_force_gain(g_b, &p)[0] <= adapt_force_gain(g_a, &p)[0] + 1e-12);
        }
    }
}
