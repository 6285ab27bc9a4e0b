//! Dance figure database and the motion generator that adapts a stored
//! desired-velocity profile to a student.
//!
//! A figure is a timed velocity profile over normalised phase `[0, 1]`,
//! linearly interpolated between samples. Its real duration follows from the
//! beat count and the tempo, so the same profile can be danced faster or
//! slower.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, DOF, ZERO};
use crate::error::{invalid, Error, Result};

/// The six built-in Waltz figures: walking forward/backward and the four
/// close changes (left/right, forward/backward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FigureKind {
    #[serde(rename = "FWD")]
    Fwd,
    #[serde(rename = "BWD")]
    Bwd,
    #[serde(rename = "CCLF")]
    Cclf,
    #[serde(rename = "CCLB")]
    Cclb,
    #[serde(rename = "CCRF")]
    Ccrf,
    #[serde(rename = "CCRB")]
    Ccrb,
}

impl FigureKind {
    pub const ALL: [FigureKind; 6] = [
        FigureKind::Fwd,
        FigureKind::Bwd,
        FigureKind::Cclf,
        FigureKind::Cclb,
        FigureKind::Ccrf,
        FigureKind::Ccrb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::Fwd => "FWD",
            FigureKind::Bwd => "BWD",
            FigureKind::Cclf => "CCLF",
            FigureKind::Cclb => "CCLB",
            FigureKind::Ccrf => "CCRF",
            FigureKind::Ccrb => "CCRB",
        }
    }

    /// Dense index in `0..6`, matching [`FigureKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_close_change(self) -> bool {
        !matches!(self, FigureKind::Fwd | FigureKind::Bwd)
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown figure kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub phase: f64,
    pub velocity: Vec7,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DanceFigure {
    pub id: String,
    pub kind: FigureKind,
    beats: u32,
    profile: Vec<ProfileSample>,
}

impl DanceFigure {
    pub fn new(
        id: impl Into<String>,
        kind: FigureKind,
        beats: u32,
        profile: Vec<ProfileSample>,
    ) -> Result<Self> {
        if beats == 0 {
            return Err(invalid("a figure needs at least one beat"));
        }
        validate_profile(&profile)?;
        Ok(Self {
            id: id.into(),
            kind,
            beats,
            profile,
        })
    }

    pub fn beats(&self) -> u32 {
        self.beats
    }

    pub fn profile(&self) -> &[ProfileSample] {
        &self.profile
    }

    pub fn duration(&self, tempo: Tempo) -> f64 {
        figure_duration(self, tempo)
    }

    /// Raw (unscaled) profile velocity at `phase`, linearly interpolated.
    pub fn velocity_at_phase(&self, phase: f64) -> Vec7 {
        interpolate(&self.profile, phase)
    }

    /// Derivative of the interpolated profile with respect to phase.
    pub fn slope_at_phase(&self, phase: f64) -> Vec7 {
        let (i, _) = locate(&self.profile, phase);
        let a = &self.profile[i];
        let b = &self.profile[i + 1];
        let dp = b.phase - a.phase;
        std::array::from_fn(|k| (b.velocity[k] - a.velocity[k]) / dp)
    }

    /// Net displacement over one figure at `tempo`, trapezoid rule on the
    /// profile samples (exact for the piecewise-linear profile).
    pub fn displacement(&self, tempo: Tempo) -> Vec7 {
        let duration = self.duration(tempo);
        let mut out = ZERO;
        for w in self.profile.windows(2) {
            let dt = (w[1].phase - w[0].phase) * duration;
            for k in 0..DOF {
                out[k] += 0.5 * (w[0].velocity[k] + w[1].velocity[k]) * dt;
            }
        }
        out
    }

    /// Serialise in the text table format understood by [`load_figure`].
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.id == self.kind.as_str() {
            writeln!(w, "# kind={} beats={}", self.kind, self.beats)?;
        } else {
            writeln!(
                w,
                "# kind={} beats={} id={}",
                self.kind, self.beats, self.id
            )?;
        }
        writeln!(w, "{FIGURE_HEADER}")?;
        for s in &self.profile {
            write!(w, "{}", s.phase)?;
            for v in s.velocity {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub const FIGURE_HEADER: &str = "phase,vx,vy,vphi,vq1,vq2,vq3,vq4";

fn validate_profile(profile: &[ProfileSample]) -> Result<()> {
    if profile.len() < 2 {
        return Err(invalid("a profile needs at least two samples"));
    }
    if profile[0].phase != 0.0 {
        return Err(invalid("profile must start at phase 0"));
    }
    if profile[profile.len() - 1].phase != 1.0 {
        return Err(invalid("profile must end at phase 1"));
    }
    for (i, w) in profile.windows(2).enumerate() {
        if !(w[1].phase > w[0].phase) {
            return Err(invalid(format!(
                "phases must be strictly increasing (sample {} has {} after {})",
                i + 1,
                w[1].phase,
                w[0].phase
            )));
        }
    }
    if profile.iter().any(|s| !crate::axes::is_finite(&s.velocity)) {
        return Err(invalid("profile velocities must be finite"));
    }
    Ok(())
}

/// Index of the segment containing `phase` and the fractional position in it.
fn locate(profile: &[ProfileSample], phase: f64) -> (usize, f64) {
    let phase = phase.clamp(0.0, 1.0);
    let last = profile.len() - 2;
    let i = match profile.binary_search_by(|s| s.phase.total_cmp(&phase)) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    };
    let a = profile[i].phase;
    let b = profile[i + 1].phase;
    (i, (phase - a) / (b - a))
}

pub(crate) fn interpolate(profile: &[ProfileSample], phase: f64) -> Vec7 {
    let (i, f) = locate(profile, phase);
    let a = &profile[i].velocity;
    let b = &profile[i + 1].velocity;
    std::array::from_fn(|k| a[k] + f * (b[k] - a[k]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tempo {
    bpm: f64,
}

impl Tempo {
    pub const SLOW_WALTZ: Tempo = Tempo { bpm: 90.0 };

    pub fn new(bpm: f64) -> Result<Self> {
        if bpm.is_finite() && bpm > 0.0 {
            Ok(Self { bpm })
        } else {
            Err(Error::OutOfRange {
                what: "tempo (bpm)",
                value: bpm,
            })
        }
    }

    pub fn bpm(self) -> f64 {
        self.bpm
    }

    pub fn beat_period(self) -> f64 {
        60.0 / self.bpm
    }
}

impl Default for Tempo {
    fn default() -> Self {
        Tempo::SLOW_WALTZ
    }
}

impl TryFrom<f64> for Tempo {
    type Error = Error;
    fn try_from(bpm: f64) -> Result<Self> {
        Tempo::new(bpm)
    }
}

impl From<Tempo> for f64 {
    fn from(t: Tempo) -> f64 {
        t.bpm
    }
}

/// Per-student adaptation of the stored trajectories: axis scale factors and
/// binary stop flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentScaling {
    k_s: Vec7,
    mu_s: [bool; DOF],
}

impl StudentScaling {
    pub fn new(k_s: Vec7, mu_s: [bool; DOF]) -> Result<Self> {
        if k_s.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(invalid("scale factors must be finite and non-negative"));
        }
        Ok(Self { k_s, mu_s })
    }

    pub fn identity() -> Self {
        Self {
            k_s: [1.0; DOF],
            mu_s: [true; DOF],
        }
    }

    pub fn scale(&self) -> &Vec7 {
        &self.k_s
    }

    pub fn enabled(&self) -> &[bool; DOF] {
        &self.mu_s
    }

    fn factor(&self, axis: usize) -> f64 {
        if self.mu_s[axis] {
            self.k_s[axis]
        } else {
            0.0
        }
    }
}

impl Default for StudentScaling {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn figure_duration(figure: &DanceFigure, tempo: Tempo) -> f64 {
    f64::from(figure.beats) * 60.0 / tempo.bpm
}

fn check_time(figure: &DanceFigure, t: f64, tempo: Tempo) -> Result<f64> {
    let duration = figure_duration(figure, tempo);
    if !(0.0..=duration).contains(&t) {
        return Err(Error::OutOfRange {
            what: "figure time",
            value: t,
        });
    }
    Ok(t / duration)
}

/// Desired velocity of the motion generator at time `t` into the figure.
pub fn desired_velocity(
    figure: &DanceFigure,
    t: f64,
    tempo: Tempo,
    scaling: &StudentScaling,
) -> Result<Vec7> {
    let phase = check_time(figure, t, tempo)?;
    let raw = figure.velocity_at_phase(phase);
    Ok(std::array::from_fn(|k| scaling.factor(k) * raw[k]))
}

/// Time derivative of [`desired_velocity`] (piecewise constant).
pub fn desired_acceleration(
    figure: &DanceFigure,
    t: f64,
    tempo: Tempo,
    scaling: &StudentScaling,
) -> Result<Vec7> {
    let phase = check_time(figure, t, tempo)?;
    let duration = figure_duration(figure, tempo);
    let slope = figure.slope_at_phase(phase);
    Ok(std::array::from_fn(|k| {
        scaling.factor(k) * slope[k] / duration
    }))
}

/// Parse a figure from the comma-separated table format.
pub fn load_figure<R: Read>(source: R) -> Result<DanceFigure> {
    let reader = BufReader::new(source);
    let mut kind = None;
    let mut beats = None;
    let mut id = None;
    let mut saw_header = false;
    let mut profile = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(meta) = text.strip_prefix('#') {
            for pair in meta.split_whitespace() {
                let Some((key, value)) = pair.split_once('=') else {
                    continue;
                };
                match key {
                    "kind" => {
                        kind = Some(
                            value
                                .parse::<FigureKind>()
                                .map_err(|e| parse_err(lineno, e))?,
                        )
                    }
                    "beats" => {
                        beats = Some(value.parse::<u32>().map_err(|e| parse_err(lineno, e))?)
                    }
                    "id" => id = Some(value.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = text.split(',').map(str::trim).collect();
            if cols.join(",") != FIGURE_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header `{FIGURE_HEADER}`"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != DOF + 1 {
            return Err(parse_err(
                lineno,
                format!(
                    "expected {} columns (phase + {DOF} velocities), found {}",
                    DOF + 1,
                    fields.len()
                ),
            ));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(lineno, e))?;
        profile.push(ProfileSample {
            phase: nums[0],
            velocity: std::array::from_fn(|k| nums[k + 1]),
        });
    }

    let kind = kind.ok_or_else(|| parse_err(1, "missing `# kind=` metadata"))?;
    let beats = beats.ok_or_else(|| parse_err(1, "missing `beats=` metadata"))?;
    if !saw_header {
        return Err(parse_err(1, "missing header row"));
    }
    let id = id.unwrap_or_else(|| kind.as_str().to_string());
    DanceFigure::new(id, kind, beats, profile)
}

fn parse_err(line: usize, msg: impl fmt::Display) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

// Built-in synthetic profiles, calibrated at the default 90 bpm.
const STEP_LENGTH: f64 = 0.45;
const TURN: f64 = std::f64::consts::PI / 16.0;
const RAMP: f64 = 0.2;
const WALK_BEATS: u32 = 3;
const CLOSE_CHANGE_BEATS: u32 = 6;
const SAMPLES_PER_BEAT: usize = 10;

/// Raised-cosine ramp up, plateau, raised-cosine ramp down on `u ∈ [0, 1]`.
fn ramp_plateau(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        0.0
    } else if u < RAMP {
        0.5 * (1.0 - (std::f64::consts::PI * u / RAMP).cos())
    } else if u > 1.0 - RAMP {
        0.5 * (1.0 - (std::f64::consts::PI * (1.0 - u) / RAMP).cos())
    } else {
        1.0
    }
}

/// Peak speed of a ramp-plateau segment covering `distance` in `seconds`.
fn segment_peak(distance: f64, seconds: f64) -> f64 {
    distance / (seconds * (1.0 - RAMP))
}

fn sampled(beats: u32, f: impl Fn(f64) -> Vec7) -> Vec<ProfileSample> {
    let n = beats as usize * SAMPLES_PER_BEAT;
    (0..=n)
        .map(|i| {
            let phase = if i == n { 1.0 } else { i as f64 / n as f64 };
            ProfileSample {
                phase,
                velocity: f(phase),
            }
        })
        .collect()
}

pub fn builtin_figure(kind: FigureKind) -> DanceFigure {
    let tempo = Tempo::SLOW_WALTZ;
    let profile = match kind {
        FigureKind::Fwd | FigureKind::Bwd => {
            let sign = if kind == FigureKind::Fwd { 1.0 } else { -1.0 };
            let seconds = f64::from(WALK_BEATS) * tempo.beat_period();
            let peak = segment_peak(STEP_LENGTH, seconds);
            sampled(WALK_BEATS, |p| {
                let mut v = ZERO;
                v[0] = sign * peak * ramp_plateau(p);
                v
            })
        }
        _ => {
            let forward = matches!(kind, FigureKind::Cclf | FigureKind::Ccrf);
            let left = matches!(kind, FigureKind::Cclf | FigureKind::Cclb);
            let sx = if forward { 1.0 } else { -1.0 };
            let sy = if left { 1.0 } else { -1.0 };
            let seconds = f64::from(CLOSE_CHANGE_BEATS) * tempo.beat_period();
            let half = segment_peak(STEP_LENGTH, seconds / 2.0);
            let turn = segment_peak(TURN, seconds);
            sampled(CLOSE_CHANGE_BEATS, |p| {
                let mut v = ZERO;
                v[0] = sx * half * ramp_plateau(2.0 * p);
                v[1] = sy * half * ramp_plateau(2.0 * p - 1.0);
                v[2] = sy * turn * ramp_plateau(p);
                v
            })
        }
    };
    let beats = if kind.is_close_change() {
        CLOSE_CHANGE_BEATS
    } else {
        WALK_BEATS
    };
    DanceFigure::new(kind.as_str(), kind, beats, profile).expect("built-in profiles are valid")
}

pub fn builtin_figures() -> Vec<DanceFigure> {
    FigureKind::ALL.into_iter().map(builtin_figure).collect()
}
