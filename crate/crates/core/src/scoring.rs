//! Progressive scoring: weighted velocity error, colour zones that tighten
//! with practice, the clamped cumulative performance score (CPS), the CPS face
//! colour, and final accuracy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, DOF};
use crate::error::{invalid, Error, Result};

/// Colour zone, ordered from lowest to highest error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneId {
    Blue = 1,
    Green = 2,
    Yellow = 3,
    Orange = 4,
    Grey = 5,
}

impl ZoneId {
    pub const ALL: [ZoneId; 5] = [
        ZoneId::Blue,
        ZoneId::Green,
        ZoneId::Yellow,
        ZoneId::Orange,
        ZoneId::Grey,
    ];

    /// Zero-based index into five-element tables.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ZoneId::Blue => "blue",
            ZoneId::Green => "green",
            ZoneId::Yellow => "yellow",
            ZoneId::Orange => "orange",
            ZoneId::Grey => "grey",
        }
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZoneId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ZoneId::ALL
            .into_iter()
            .find(|z| z.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown zone `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Per-axis error weights; non-negative and summing to one.
    pub weights: Vec7,
    /// Scoring period τ (s).
    pub sample_period: f64,
    /// Multiplier from velocity error (m/s, rad/s) to zone units. The zone
    /// constants are calibrated for errors in cm/s, hence 100.
    pub error_scale: f64,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        Self {
            c1: 7.0,
            c2: 0.07,
            c3: 14.0,
            weights: [third, third, third, 0.0, 0.0, 0.0, 0.0],
            sample_period: 0.01,
            error_scale: 100.0,
        }
    }
}

impl ZoneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 > 0.0) {
            return Err(invalid("zone curve parameters must be positive"));
        }
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(invalid("zone weights must lie in [0, 1]"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("zone weights must sum to 1 (got {sum})")));
        }
        if !(self.sample_period > 0.0) || !(self.error_scale > 0.0) {
            return Err(invalid("sample period and error scale must be positive"));
        }
        Ok(())
    }

    /// Weighted error in zone units (scaled by `error_scale`).
    pub fn scored_error(&self, vd: &Vec7, v: &Vec7) -> f64 {
        self.error_scale * weighted_error(vd, v, self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreParams {
    pub alpha_z: f64,
    pub cps_m: f64,
    /// Zone value `f(E)` per zone, Blue first.
    pub zone_values: [f64; 5],
    /// Ascending CPS cut points between Grey|Orange|Yellow|Green|Blue faces.
    pub face_thresholds: [f64; 4],
    /// Accuracy weight per zone, Blue first; Blue carries the maximum.
    pub mu: [f64; 5],
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            alpha_z: 0.4,
            cps_m: 50.0,
            zone_values: [1.5, 0.0, -1.0, -2.0, -2.5],
            face_thresholds: [-30.0, -10.0, 10.0, 30.0],
            mu: [3.0, 2.0, 1.0, 0.5, 0.0],
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cps_m > 0.0) || !(self.alpha_z > 0.0) {
            return Err(invalid("alpha_z and cps_m must be positive"));
        }
        if !self.zone_values.windows(2).all(|w| w[0] > w[1]) {
            return Err(invalid("zone values must be strictly decreasing"));
        }
        if !self.face_thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("face thresholds must be ascending"));
        }
        if !self.mu.windows(2).all(|w| w[0] >= w[1]) || !(self.mu[0] > 0.0) {
            return Err(invalid(
                "accuracy weights must be non-increasing with a positive maximum",
            ));
        }
        Ok(())
    }
}

/// Running cumulative score and zone tallies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CpsState {
    pub cps: f64,
    pub n_s: u64,
    /// Sum of the clamped CPS after every sample.
    pub sum_cps: f64,
    pub zone_counts: [u64; 5],
    pub n_total: u64,
}

pub fn axis_error(vd: f64, v: f64) -> f64 {
    (vd - v).abs()
}

pub fn weighted_error(vd: &Vec7, v: &Vec7, cfg: &ZoneConfig) -> f64 {
    (0..DOF)
        .map(|n| axis_error(vd[n], v[n]) * cfg.weights[n])
        .sum()
}

/// Width of zone `x` (1 = Blue .. 4 = Orange) after `n` practices.
pub fn zone_width(x: u8, n: u32, cfg: &ZoneConfig) -> Result<f64> {
    if !(1..=4).contains(&x) {
        return Err(Error::OutOfRange {
            what: "zone index",
            value: f64::from(x),
        });
    }
    Ok(width_unchecked(f64::from(x), f64::from(n), cfg))
}

fn width_unchecked(x: f64, n: f64, cfg: &ZoneConfig) -> f64 {
    cfg.c3 * (1.0 / (cfg.c2 * n + 1.0) + 1.0) * (1.0 / (x + cfg.c1))
}

/// Upper error limits of Blue, Green, Yellow and Orange after `n` practices.
/// Grey covers everything above the last one.
pub fn zone_boundaries(n: u32, cfg: &ZoneConfig) -> [f64; 4] {
    let mut acc = 0.0;
    std::array::from_fn(|i| {
        acc += width_unchecked(i as f64 + 1.0, f64::from(n), cfg);
        acc
    })
}

/// Errors exactly on a cut point take the better zone.
pub fn classify(e: f64, n: u32, cfg: &ZoneConfig) -> ZoneId {
    let b = zone_boundaries(n, cfg);
    match b.iter().position(|limit| e <= *limit) {
        Some(0) => ZoneId::Blue,
        Some(1) => ZoneId::Green,
        Some(2) => ZoneId::Yellow,
        Some(3) => ZoneId::Orange,
        _ => ZoneId::Grey,
    }
}

pub fn zone_value(z: ZoneId, params: &ScoreParams) -> f64 {
    params.zone_values[z.index()]
}

pub fn cps_update(state: &CpsState, z: ZoneId, params: &ScoreParams) -> CpsState {
    let mut next = state.clone();
    next.cps =
        (state.cps + params.alpha_z * zone_value(z, params)).clamp(-params.cps_m, params.cps_m);
    next.n_s += 1;
    next.sum_cps += next.cps;
    next.zone_counts[z.index()] += 1;
    next.n_total += 1;
    next
}

/// Face colour for a CPS value. Yellow owns the closed centre band
/// `[-10, 10]`; Green/Blue are open below, Orange/Grey open above.
pub fn face_color(cps: f64, params: &ScoreParams) -> ZoneId {
    let [grey_orange, orange_yellow, yellow_green, green_blue] = params.face_thresholds;
    if cps > green_blue {
        ZoneId::Blue
    } else if cps > yellow_green {
        ZoneId::Green
    } else if cps >= orange_yellow {
        ZoneId::Yellow
    } else if cps >= grey_orange {
        ZoneId::Orange
    } else {
        ZoneId::Grey
    }
}

pub fn accuracy(state: &CpsState, params: &ScoreParams) -> Result<f64> {
    if state.n_total == 0 {
        return Err(Error::UndefinedInput("accuracy of an empty session"));
    }
    let mu_h = params.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weighted: f64 = state
        .zone_counts
        .iter()
        .zip(params.mu)
        .map(|(n, mu)| *n as f64 * mu)
        .sum();
    Ok(weighted / (state.n_total as f64 * mu_h))
}

/// Mean error over one performed figure and its zone (the on-line bar).
pub fn figure_score(samples: &[f64], n: u32, cfg: &ZoneConfig) -> Result<(f64, ZoneId)> {
    if samples.is_empty() {
        return Err(Error::UndefinedInput(
            "figure score of an empty sample sequence",
        ));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok((mean, classify(mean, n, cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ZoneConfig {
        ZoneConfig::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn axis_error_examples() {
        assert_eq!(axis_error(0.3, 0.3), 0.0);
        assert!(close(axis_error(0.3, 0.1), 0.2, 1e-15));
        assert!(close(axis_error(-0.2, 0.1), 0.3, 1e-15));
    }

    #[test]
    fn weighted_error_examples() {
        let vd = [0.2, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(weighted_error(&vd, &vd, &cfg()), 0.0);
        assert!(close(
            weighted_error(&vd, &[0.0; 7], &cfg()),
            0.5 / 3.0,
            1e-12
        ));
        let upper = [0.0, 0.0, 0.0, 1.0, -2.0, 3.0, 4.0];
        assert_eq!(weighted_error(&upper, &[0.0; 7], &cfg()), 0.0);
    }

    #[test]
    fn zone_width_examples() {
        let c = cfg();
        assert!(close(zone_width(1, 0, &c).unwrap(), 3.5, 1e-12));
        assert!(close(zone_width(4, 0, &c).unwrap(), 28.0 / 11.0, 1e-12));
        // The practice factor tends to one: half the fresh width.
        assert!(close(zone_width(1, u32::MAX, &c).unwrap(), 1.75, 1e-7));
        assert!(zone_width(0, 0, &c).is_err());
        assert!(zone_width(5, 0, &c).is_err());
    }

    #[test]
    fn boundary_tables() {
        let b0 = zone_boundaries(0, &cfg());
        for (a, e) in b0
            .iter()
            .zip([3.5, 6.611_111_111, 9.411_111_111, 11.956_565_657])
        {
            assert!(close(*a, e, 1e-8), "{b0:?}");
        }
        // factor 1/(0.07·100 + 1) + 1 = 1.125
        let b100 = zone_boundaries(100, &cfg());
        for (a, e) in b100.iter().zip([1.96875, 3.71875, 5.29375, 6.725_568_182]) {
            assert!(close(*a, e, 1e-8), "{b100:?}");
        }
    }

    #[test]
    fn classification_examples() {
        let c = cfg();
        assert_eq!(classify(2.0, 0, &c), ZoneId::Blue);
        assert_eq!(classify(7.0, 0, &c), ZoneId::Yellow);
        assert_eq!(classify(7.0, 100, &c), ZoneId::Grey);
        assert_eq!(
            classify(3.5, 0, &c),
            ZoneId::Blue,
            "ties take the inner zone"
        );
        assert_eq!(classify(50.0, 0, &c), ZoneId::Grey);
        for n in [0, 1, 10, 1000, u32::MAX] {
            assert_eq!(classify(0.0, n, &c), ZoneId::Blue);
        }
    }

    #[test]
    fn zone_values_follow_table() {
        let p = ScoreParams::default();
        let v: Vec<f64> = ZoneId::ALL.iter().map(|z| zone_value(*z, &p)).collect();
        assert_eq!(v, vec![1.5, 0.0, -1.0, -2.0, -2.5]);
    }

    #[test]
    fn cps_examples() {
        let p = ScoreParams::default();
        let mut s = CpsState::default();
        for _ in 0..10 {
            s = cps_update(&s, ZoneId::Blue, &p);
        }
        assert!(close(s.cps, 6.0, 1e-12));

        let mut s = CpsState::default();
        for i in 0..84 {
            s = cps_update(&s, ZoneId::Blue, &p);
            if i < 83 {
                assert!(s.cps < 50.0);
            }
        }
        assert_eq!(s.cps, 50.0);

        let mut s = CpsState::default();
        for i in 0..20 {
            s = cps_update(
                &s,
                if i % 2 == 0 {
                    ZoneId::Blue
                } else {
                    ZoneId::Green
                },
                &p,
            );
        }
        // (1.5 + 0) * 0.4 / 2 = 0.3 per sample, 0.6 per pair
        assert!(close(s.cps, 0.3 * 20.0, 1e-12));
        assert_eq!(s.zone_counts, [10, 10, 0, 0, 0]);
        assert_eq!(s.n_s, 20);
    }

    #[test]
    fn face_colour_bands() {
        let p = ScoreParams::default();
        assert_eq!(face_color(35.0, &p), ZoneId::Blue);
        assert_eq!(face_color(50.0, &p), ZoneId::Blue);
        assert_eq!(face_color(30.0, &p), ZoneId::Green);
        assert_eq!(face_color(10.0, &p), ZoneId::Yellow);
        assert_eq!(face_color(0.0, &p), ZoneId::Yellow);
        assert_eq!(face_color(-10.0, &p), ZoneId::Yellow);
        assert_eq!(face_color(-20.0, &p), ZoneId::Orange);
        assert_eq!(face_color(-30.0, &p), ZoneId::Orange);
        assert_eq!(face_color(-30.5, &p), ZoneId::Grey);
        assert_eq!(face_color(-50.0, &p), ZoneId::Grey);
    }

    #[test]
    fn accuracy_examples() {
        let p = ScoreParams::default();
        let tally = |counts: [u64; 5]| CpsState {
            zone_counts: counts,
            n_total: counts.iter().sum(),
            ..Default::default()
        };
        assert_eq!(accuracy(&tally([7, 0, 0, 0, 0]), &p).unwrap(), 1.0);
        assert_eq!(accuracy(&tally([0, 0, 0, 0, 7]), &p).unwrap(), 0.0);
        assert!(close(
            accuracy(&tally([5, 5, 0, 0, 0]), &p).unwrap(),
            25.0 / 30.0,
            1e-12
        ));
        assert!(matches!(
            accuracy(&CpsState::default(), &p),
            Err(Error::UndefinedInput(_))
        ));
    }

    #[test]
    fn figure_score_examples() {
        let c = cfg();
        assert_eq!(figure_score(&[0.0; 5], 0, &c).unwrap(), (0.0, ZoneId::Blue));
        assert_eq!(
            figure_score(&[1.0, 3.0, 5.0], 0, &c).unwrap(),
            (3.0, ZoneId::Blue)
        );
        assert_eq!(
            figure_score(&[1.0, 3.0, 5.0], 100, &c).unwrap(),
            (3.0, ZoneId::Green)
        );
        assert!(figure_score(&[], 0, &c).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.weights[0] = 0.5;
        assert!(c.validate().is_err());
        let mut p = ScoreParams::default();
        assert!(p.validate().is_ok());
        p.zone_values[1] = 2.0;
        assert!(p.validate().is_err());
    }

    fn zone_strategy() -> impl Strategy<Value = ZoneId> {
        (0usize..5).prop_map(|i| ZoneId::ALL[i])
    }

    proptest! {
        #[test]
        fn widths_shrink_with_practice_and_index(x in 1u8..=3, n in 0u32..10_000) {
            let c = cfg();
            prop_assert!(zone_width(x, n + 1, &c).unwrap() < zone_width(x, n, &c).unwrap());
            prop_assert!(zone_width(x + 1, n, &c).unwrap() < zone_width(x, n, &c).unwrap());
        }

        #[test]
        fn classification_is_monotone_in_error(a in 0.0f64..30.0, b in 0.0f64..30.0, n in 0u32..500) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify(lo, n, &cfg()) <= classify(hi, n, &cfg()));
        }

        #[test]
        fn practice_never_improves_the_zone(e in 0.0f64..30.0, n1 in 0u32..500, dn in 0u32..500) {
            prop_assert!(classify(e, n1 + dn, &cfg()) >= classify(e, n1, &cfg()));
        }

        #[test]
        fn cps_is_bounded_and_path_summed(zones in proptest::collection::vec(zone_strategy(), 0..2000)) {
            let p = ScoreParams::default();
            let mut s = CpsState::default();
            let mut unclamped = 0.0;
            let mut ever_clamped = false;
            for z in &zones {
                s = cps_update(&s, *z, &p);
                unclamped += p.alpha_z * zone_value(*z, &p);
                ever_clamped |= unclamped.abs() > p.cps_m;
                prop_assert!(s.cps.abs() <= p.cps_m);
            }
            if !ever_clamped {
                prop_assert!((s.cps - unclamped).abs() < 1e-9);
            }
            prop_assert_eq!(s.n_total, s.zone_counts.iter().sum::<u64>());
        }

        #[test]
        fn accuracy_stays_in_unit_interval(counts in proptest::array::uniform5(0u64..1000)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let s = CpsState { zone_counts: counts, n_total: counts.iter().sum(), ..Default::default() };
            let acc = accuracy(&s, &ScoreParams::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
        }

        #[test]
        fn zero_weight_axes_do_not_matter(v in proptest::array::uniform7(-1.0f64..1.0), q in proptest::array::uniform4(-5.0f64..5.0)) {
            let c = cfg();
            let mut w = v;
            w[3..].copy_from_slice(&q);
            let vd = [0.1, -0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
            prop_assert_eq!(weighted_error(&vd, &v, &c), weighted_error(&vd, &w, &c));
        }
    }
}
