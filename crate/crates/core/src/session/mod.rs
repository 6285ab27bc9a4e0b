//! Training sessions: figure sequencing, coupled simulation, per-sample
//! scoring and the end-of-figure teaching update, plus the on-disk archive.

mod presets;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, ZERO};
use crate::dynamics::{
    CoupledState, HumanParams, IntentPolicy, RobotParams, Simulator, DEFAULT_DT,
};
use crate::error::{invalid, Error, Result};
use crate::figures::{
    builtin_figure, desired_acceleration, desired_velocity, DanceFigure, FigureKind, ProfileSample,
    StudentScaling, Tempo,
};
use crate::learner::{initial_intent, perturb, InternalModel, LearnerIntent, LearnerParams};
use crate::scoring::{
    classify, cps_update, face_color, figure_score, CpsState, ScoreParams, ZoneConfig, ZoneId,
};
use crate::teaching::{pt_tick, reset_for_student, FeedbackEvent, PtParams, PtState};

pub use presets::{
    cohort_learner, fig5_levels, fig5_runs, run_cohort, run_fig5, run_stability_map, run_stoptest,
    score_offline, total_variation, CohortLearner, CohortReport, Fig5Run, ScoreReport,
    ScoredSample, StopMetrics, FIG5_GAINS, FIG5_MID, FIG5_NOISE, FIG5_PRACTICES, FIG5_SAMPLES,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pt,
    Constant,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pt => "pt",
            Mode::Constant => "constant",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pt" => Ok(Mode::Pt),
            "constant" => Ok(Mode::Constant),
            other => Err(invalid(format!(
                "unknown mode `{other}` (expected pt or constant)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub schema_version: u32,
    pub robot: RobotParams,
    pub human: HumanParams,
    pub learner: LearnerParams,
    pub zones: ZoneConfig,
    pub score: ScoreParams,
    pub pt: PtParams,
    pub tempo: Tempo,
    pub figure_sequence: Vec<FigureKind>,
    /// Total number of figures performed.
    pub practices: u32,
    pub mode: Mode,
    pub dt: f64,
    pub scoring_hz: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            robot: RobotParams::default(),
            human: HumanParams::default(),
            learner: LearnerParams::default(),
            zones: ZoneConfig::default(),
            score: ScoreParams::default(),
            pt: PtParams::default(),
            tempo: Tempo::SLOW_WALTZ,
            figure_sequence: vec![
                FigureKind::Cclf,
                FigureKind::Ccrf,
                FigureKind::Cclb,
                FigureKind::Ccrb,
            ],
            practices: 20,
            mode: Mode::Pt,
            dt: DEFAULT_DT,
            scoring_hz: 100.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.robot.validate()?;
        self.human.validate()?;
        self.learner.validate()?;
        self.zones.validate()?;
        self.score.validate()?;
        self.pt.validate()?;
        if self.figure_sequence.is_empty() {
            return Err(invalid("figure_sequence is empty"));
        }
        if self.practices == 0 {
            return Err(invalid("practices must be at least 1"));
        }
        if (self.pt.cps_m - self.score.cps_m).abs() > 0.0 {
            return Err(invalid("pt.cps_m and score.cps_m must agree"));
        }
        self.scoring_stride().map(|_| ())
    }

    /// Simulation steps per scoring sample.
    pub fn scoring_stride(&self) -> Result<u64> {
        if !(self.dt > 0.0 && self.dt <= crate::dynamics::MAX_DT) {
            return Err(Error::OutOfRange {
                what: "dt",
                value: self.dt,
            });
        }
        if !(self.scoring_hz > 0.0 && self.scoring_hz <= 1.0 / self.dt + 1e-9) {
            return Err(Error::OutOfRange {
                what: "scoring_hz",
                value: self.scoring_hz,
            });
        }
        let ratio = 1.0 / (self.scoring_hz * self.dt);
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(invalid(format!(
                "scoring period must be a whole number of steps (1/(scoring_hz*dt) = {ratio})"
            )));
        }
        Ok(ratio.round() as u64)
    }

    /// Load a TOML (`.toml`) or JSON (anything else) config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: SessionConfig = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("toml") => toml::from_str(&text)?,
            _ => serde_json::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub t: f64,
    pub figure: usize,
    pub kind: FigureKind,
    pub practice_n: u32,
    #[serde(rename = "E")]
    pub e: f64,
    pub zone: ZoneId,
    pub cps: f64,
    pub face: ZoneId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureSummary {
    pub figure: usize,
    pub kind: FigureKind,
    pub practice_n: u32,
    pub mean_e: f64,
    pub bar_zone: ZoneId,
    pub cps_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtTraceRow {
    pub figure_index: usize,
    pub kind: FigureKind,
    pub practice_n: u32,
    pub gamma_star: f64,
    pub gamma: f64,
    pub kd_x: f64,
    pub kd_y: f64,
    pub kd_phi: f64,
    pub kf_x: f64,
    pub kf_y: f64,
    pub kf_phi: f64,
    pub bar_color: ZoneId,
    pub face_color: ZoneId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub accuracy: Option<f64>,
    pub final_cps: f64,
    pub zone_counts: [u64; 5],
    pub n_total: u64,
    pub figures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub config: SessionConfig,
    pub samples: Vec<SampleRow>,
    pub figures: Vec<FigureSummary>,
    pub pt_trace: Vec<PtTraceRow>,
    pub summary: SessionSummary,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const SAMPLES_HEADER: [&str; 8] = [
    "t",
    "figure",
    "kind",
    "practice_n",
    "E",
    "zone",
    "cps",
    "face",
];
pub const FIGURES_HEADER: [&str; 6] = [
    "figure",
    "kind",
    "practice_n",
    "mean_E",
    "bar_zone",
    "cps_after",
];
pub const PT_TRACE_HEADER: [&str; 13] = [
    "figure_index",
    "kind",
    "practice_n",
    "gamma_star",
    "gamma",
    "kd_x",
    "kd_y",
    "kd_phi",
    "kf_x",
    "kf_y",
    "kf_phi",
    "bar_color",
    "face_color",
];

impl SessionRecord {
    /// Write `config.json`, `samples.csv`, `figures.csv`, `pt_trace.csv` and
    /// `summary.json` into `dir`.
    pub fn write_archive(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(&self.config)? + "\n",
        )?;
        write_rows(&dir.join("samples.csv"), &self.samples, &SAMPLES_HEADER)?;
        write_rows(&dir.join("figures.csv"), &self.figures, &FIGURES_HEADER)?;
        write_rows(&dir.join("pt_trace.csv"), &self.pt_trace, &PT_TRACE_HEADER)?;
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&self.summary)? + "\n",
        )?;
        Ok(())
    }

    /// CPS after each figure.
    pub fn cps_trajectory(&self) -> Vec<f64> {
        self.figures.iter().map(|f| f.cps_after).collect()
    }
}

/// What a completed figure produced.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureOutcome {
    pub summary: FigureSummary,
    pub trace: PtTraceRow,
    pub events: Vec<FeedbackEvent>,
    /// Coupled velocity sampled on the figure's profile grid.
    pub executed: Vec<ProfileSample>,
}

#[derive(Clone, Debug)]
struct ActiveFigure {
    figure: DanceFigure,
    index: usize,
    practice_n: u32,
    step: u64,
    steps: u64,
    node_steps: Vec<u64>,
    executed: Vec<Vec7>,
    errors: Vec<f64>,
}

/// Step-driven session engine shared by offline sessions and the live
/// service. One figure is active at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: SessionConfig,
    robot: RobotParams,
    sim: Simulator,
    cps: CpsState,
    pt: PtState,
    stride: u64,
    guide: Vec7,
    active: Option<ActiveFigure>,
    samples: Vec<SampleRow>,
    figures: Vec<FigureSummary>,
    pt_trace: Vec<PtTraceRow>,
}

impl Trainer {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let stride = cfg.scoring_stride()?;
        let pt = reset_for_student(
            &cfg.pt,
            cfg.robot.damping,
            cfg.robot.force_gain,
            cfg.mode == Mode::Pt,
        )?;
        let mut robot = cfg.robot.clone();
        pt.apply(&mut robot);
        let sim = Simulator::new(CoupledState::default(), &robot, cfg.dt)?;
        Ok(Self {
            cfg,
            robot,
            sim,
            cps: CpsState::default(),
            pt,
            stride,
            guide: ZERO,
            active: None,
            samples: Vec::new(),
            figures: Vec::new(),
            pt_trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CoupledState {
        self.sim.state()
    }

    pub fn steps(&self) -> u64 {
        self.sim.steps()
    }

    pub fn cps(&self) -> &CpsState {
        &self.cps
    }

    pub fn pt(&self) -> &PtState {
        &self.pt
    }

    pub fn robot(&self) -> &RobotParams {
        &self.robot
    }

    /// Integrated desired pose of the motion generator.
    pub fn guide_position(&self) -> &Vec7 {
        &self.guide
    }

    pub fn figures_completed(&self) -> usize {
        self.figures.len()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.pt.pt_mode = mode == Mode::Pt;
        self.cfg.mode = mode;
    }

    pub fn active_kind(&self) -> Option<FigureKind> {
        self.active.as_ref().map(|a| a.figure.kind)
    }

    /// Beat index within the active figure.
    pub fn beat_index(&self) -> Option<u32> {
        self.active.as_ref().map(|a| {
            let t = a.step as f64 * self.cfg.dt;
            ((t / self.cfg.tempo.beat_period()) as u32).min(a.figure.beats().saturating_sub(1))
        })
    }

    pub fn begin_figure(&mut self, kind: FigureKind) -> Result<()> {
        if self.active.is_some() {
            return Err(invalid("a figure is already in progress"));
        }
        let figure = builtin_figure(kind);
        let steps = (figure.duration(self.cfg.tempo) / self.cfg.dt)
            .round()
            .max(1.0) as u64;
        let node_steps: Vec<u64> = figure
            .profile()
            .iter()
            .map(|s| (s.phase * steps as f64).round() as u64)
            .collect();
        let mut executed = vec![ZERO; node_steps.len()];
        for (slot, node) in executed.iter_mut().zip(&node_steps) {
            if *node == 0 {
                *slot = self.sim.state().xdot_c;
            }
        }
        self.active = Some(ActiveFigure {
            figure,
            index: self.figures.len(),
            practice_n: self.pt.practice_count(kind),
            step: 0,
            steps,
            node_steps,
            executed,
            errors: Vec::new(),
        });
        Ok(())
    }

    /// Desired velocity and acceleration for the next step of the active figure.
    pub fn desired(&self) -> Option<(Vec7, Vec7)> {
        self.active
            .as_ref()
            .map(|a| self.desired_at(&a.figure, a.step))
    }

    fn desired_at(&self, figure: &DanceFigure, step: u64) -> (Vec7, Vec7) {
        let t = (step as f64 * self.cfg.dt).min(figure.duration(self.cfg.tempo));
        let s = StudentScaling::identity();
        let v = desired_velocity(figure, t, self.cfg.tempo, &s)
            .expect("figure time clamped into range");
        let a = desired_acceleration(figure, t, self.cfg.tempo, &s)
            .expect("figure time clamped into range");
        (v, a)
    }

    /// Advance one simulation step. Returns the outcome when the active
    /// figure completes. Without an active figure nothing happens.
    pub fn step(&mut self, policy: &mut dyn IntentPolicy) -> Result<Option<FigureOutcome>> {
        let Some(active) = self.active.as_ref() else {
            return Ok(None);
        };
        let (vd, ad) = self.desired_at(&active.figure, active.step);
        self.sim
            .step(&vd, &ad, &self.robot, &self.cfg.human, policy)?;
        for k in 0..vd.len() {
            self.guide[k] += vd[k] * self.cfg.dt;
        }

        let state = self.sim.state().clone();
        let active = self.active.as_mut().expect("checked above");
        active.step += 1;
        let local = active.step;
        for (slot, node) in active.executed.iter_mut().zip(&active.node_steps) {
            if *node == local {
                *slot = state.xdot_c;
            }
        }
        let (figure, practice_n, index, steps) = (
            active.figure.clone(),
            active.practice_n,
            active.index,
            active.steps,
        );

        if local.is_multiple_of(self.stride) {
            let (vd_now, _) = self.desired_at(&figure, local);
            let e = self.cfg.zones.scored_error(&vd_now, &state.xdot_c);
            let zone = classify(e, practice_n, &self.cfg.zones);
            self.cps = cps_update(&self.cps, zone, &self.cfg.score);
            self.samples.push(SampleRow {
                t: state.t,
                figure: index,
                kind: figure.kind,
                practice_n,
                e,
                zone,
                cps: self.cps.cps,
                face: face_color(self.cps.cps, &self.cfg.score),
            });
            if let Some(a) = self.active.as_mut() {
                a.errors.push(e);
            }
        }

        if local < steps {
            return Ok(None);
        }
        let done = self.active.take().expect("checked above");
        Ok(Some(self.finish_figure(done)?))
    }

    fn finish_figure(&mut self, done: ActiveFigure) -> Result<FigureOutcome> {
        let kind = done.figure.kind;
        let result = figure_score(&done.errors, done.practice_n, &self.cfg.zones)?;
        let (pt, events) = pt_tick(
            &self.pt,
            &self.cps,
            kind,
            &done.figure.id,
            result,
            &self.cfg.pt,
            &self.cfg.score,
        );
        self.pt = pt;
        self.pt.apply(&mut self.robot);

        let summary = FigureSummary {
            figure: done.index,
            kind,
            practice_n: done.practice_n,
            mean_e: result.0,
            bar_zone: result.1,
            cps_after: self.cps.cps,
        };
        let trace = PtTraceRow {
            figure_index: done.index,
            kind,
            practice_n: done.practice_n,
            gamma_star: self.pt.gamma_star,
            gamma: self.pt.gamma,
            kd_x: self.pt.kd_current[0],
            kd_y: self.pt.kd_current[1],
            kd_phi: self.pt.kd_current[2],
            kf_x: self.pt.kf_current[0],
            kf_y: self.pt.kf_current[1],
            kf_phi: self.pt.kf_current[2],
            bar_color: result.1,
            face_color: face_color(self.cps.cps, &self.cfg.score),
        };
        self.figures.push(summary.clone());
        self.pt_trace.push(trace.clone());
        let executed = done
            .figure
            .profile()
            .iter()
            .zip(done.executed)
            .map(|(s, velocity)| ProfileSample {
                phase: s.phase,
                velocity,
            })
            .collect();
        Ok(FigureOutcome {
            summary,
            trace,
            events,
            executed,
        })
    }

    /// Drop any unfinished figure and close the session.
    pub fn finish(self) -> SessionRecord {
        let accuracy = crate::scoring::accuracy(&self.cps, &self.cfg.score).ok();
        SessionRecord {
            summary: SessionSummary {
                accuracy,
                final_cps: self.cps.cps,
                zone_counts: self.cps.zone_counts,
                n_total: self.cps.n_total,
                figures: self.figures.len(),
            },
            config: self.cfg,
            samples: self.samples,
            figures: self.figures,
            pt_trace: self.pt_trace,
        }
    }
}

/// Run a complete offline session with the simulated learner.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionRecord> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let learner = &cfg.learner;
    let mut rng = learner.rng();

    let mut model = InternalModel::default();
    let mut figures = BTreeMap::new();
    for kind in &cfg.figure_sequence {
        if !figures.contains_key(kind) {
            let fig = builtin_figure(*kind);
            model
                .profiles
                .insert(*kind, initial_intent(&fig, learner, &cfg.zones, &mut rng));
            figures.insert(*kind, fig);
        }
    }
    let noise = learner.noise_amp / cfg.zones.error_scale;
    for p in 0..cfg.practices as usize {
        let kind = cfg.figure_sequence[p % cfg.figure_sequence.len()];
        let figure = &figures[&kind];
        let intent = model
            .intent(kind)
            .expect("every sequenced kind has a profile");
        let mut policy = LearnerIntent::new(
            perturb(intent, noise, &mut rng),
            trainer.state().t,
            figure.duration(cfg.tempo),
        )?;
        trainer.begin_figure(kind)?;
        let outcome = loop {
            if let Some(outcome) = trainer.step(&mut policy)? {
                break outcome;
            }
        };
        model = model.update(
            kind,
            figure.profile(),
            &outcome.executed,
            learner.learning_gain,
        )?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{accuracy, zone_value};

    fn short(mode: Mode) -> SessionConfig {
        SessionConfig {
            practices: 4,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.scoring_stride().unwrap(), 10);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SessionConfig>(&json).unwrap(), cfg);
        let toml_text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<SessionConfig>(&toml_text).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_bad_values() {
        let bad = [
            SessionConfig {
                schema_version: 2,
                ..Default::default()
            },
            SessionConfig {
                practices: 0,
                ..Default::default()
            },
            SessionConfig {
                figure_sequence: vec![],
                ..Default::default()
            },
            SessionConfig {
                scoring_hz: 2000.0,
                ..Default::default()
            },
            SessionConfig {
                scoring_hz: 300.0,
                ..Default::default()
            },
            SessionConfig {
                dt: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn partial_config_files_take_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(
            &path,
            "schema_version = 1\npractices = 3\nmode = \"constant\"\n[learner]\nseed = 9\n",
        )
        .unwrap();
        let cfg = SessionConfig::from_path(&path).unwrap();
        assert_eq!(cfg.practices, 3);
        assert_eq!(cfg.mode, Mode::Constant);
        assert_eq!(cfg.learner.seed, 9);
        assert_eq!(
            cfg.learner.learning_gain,
            LearnerParams::default().learning_gain
        );
        let json = dir.path().join("cfg.json");
        fs::write(&json, r#"{"schema_version": 1, "tempo": 120.0}"#).unwrap();
        assert_eq!(SessionConfig::from_path(&json).unwrap().tempo.bpm(), 120.0);
        fs::write(&json, r#"{"schema_version": 1, "tempo": -1.0}"#).unwrap();
        assert!(SessionConfig::from_path(&json).is_err());
    }

    #[test]
    fn counts_are_conserved() {
        let rec = run_session(&short(Mode::Pt)).unwrap();
        assert_eq!(rec.figures.len(), 4);
        assert_eq!(rec.pt_trace.len(), 4);
        // 4 s figures scored at 100 Hz
        assert_eq!(rec.samples.len(), 1600);
        assert_eq!(rec.summary.n_total, rec.samples.len() as u64);
        for f in &rec.figures {
            assert_eq!(
                rec.samples.iter().filter(|s| s.figure == f.figure).count(),
                400
            );
        }
    }

    #[test]
    fn final_values_recompute_from_the_log() {
        let cfg = short(Mode::Pt);
        let rec = run_session(&cfg).unwrap();
        let mut cps = CpsState::default();
        for s in &rec.samples {
            assert_eq!(classify(s.e, s.practice_n, &cfg.zones), s.zone);
            cps = cps_update(&cps, s.zone, &cfg.score);
            assert_eq!(cps.cps, s.cps);
        }
        assert_eq!(
            rec.summary.accuracy,
            Some(accuracy(&cps, &cfg.score).unwrap())
        );
        assert_eq!(rec.summary.final_cps, cps.cps);
        let unclamped: f64 = rec
            .samples
            .iter()
            .map(|s| cfg.score.alpha_z * zone_value(s.zone, &cfg.score))
            .sum();
        assert!(
            cps.cps.abs() <= 50.0 && (unclamped.abs() > 50.0 || (unclamped - cps.cps).abs() < 1e-9)
        );
    }

    #[test]
    fn practice_counts_are_per_kind() {
        let cfg = SessionConfig {
            practices: 9,
            ..Default::default()
        };
        let rec = run_session(&cfg).unwrap();
        let ns: Vec<u32> = rec.figures.iter().map(|f| f.practice_n).collect();
        assert_eq!(ns, vec![0, 0, 0, 0, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn modes_agree_until_the_first_tick() {
        let pt = run_session(&short(Mode::Pt)).unwrap();
        let constant = run_session(&short(Mode::Constant)).unwrap();
        let first: Vec<_> = pt.samples.iter().filter(|s| s.figure == 0).collect();
        let first_c: Vec<_> = constant.samples.iter().filter(|s| s.figure == 0).collect();
        assert_eq!(first, first_c);
        assert_ne!(pt.pt_trace[0].kd_x, constant.pt_trace[0].kd_x);
        assert_ne!(pt.samples, constant.samples);
    }

    #[test]
    fn constant_mode_has_constant_gain_columns() {
        let rec = run_session(&SessionConfig {
            practices: 8,
            mode: Mode::Constant,
            ..Default::default()
        })
        .unwrap();
        for row in &rec.pt_trace {
            assert_eq!((row.kd_x, row.kd_y, row.kd_phi), (130.0, 130.0, 100.0));
            assert_eq!((row.kf_x, row.kf_y, row.kf_phi), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn compliant_learner_saturates_the_score() {
        let cfg = SessionConfig {
            learner: LearnerParams {
                learning_gain: 0.0,
                baseline_error: 0.0,
                noise_amp: 0.0,
                seed: 0,
            },
            ..SessionConfig::default()
        };
        let rec = run_session(&cfg).unwrap();
        assert!(
            rec.samples.iter().all(|s| s.zone == ZoneId::Blue),
            "every sample Blue"
        );
        // oracle: clamped path sum of +0.6 per Blue sample
        let mut oracle = 0.0f64;
        for _ in 0..rec.samples.len() {
            oracle = (oracle + 0.4 * 1.5).min(50.0);
        }
        assert_eq!(oracle, 50.0);
        assert_eq!(rec.summary.final_cps, oracle);
        assert_eq!(rec.summary.accuracy, Some(1.0));
    }

    #[test]
    fn sessions_replay_exactly() {
        let cfg = short(Mode::Pt);
        let a = run_session(&cfg).unwrap();
        let b = run_session(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn archive_has_documented_headers() {
        let rec = run_session(&short(Mode::Constant)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.write_archive(dir.path()).unwrap();
        let first_line = |name: &str| {
            fs::read_to_string(dir.path().join(name))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string()
        };
        assert_eq!(
            first_line("samples.csv"),
            "t,figure,kind,practice_n,E,zone,cps,face"
        );
        assert_eq!(
            first_line("figures.csv"),
            "figure,kind,practice_n,mean_E,bar_zone,cps_after"
        );
        assert_eq!(
            first_line("pt_trace.csv"),
            "figure_index,kind,practice_n,gamma_star,gamma,kd_x,kd_y,kd_phi,kf_x,kf_y,kf_phi,bar_color,face_color"
        );
        let lines = fs::read_to_string(dir.path().join("samples.csv"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(lines, rec.samples.len() + 1);
        let cfg: SessionConfig =
            serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap())
                .unwrap();
        assert_eq!(cfg, rec.config);
    }

    #[test]
    fn idle_trainer_does_not_advance() {
        let mut t = Trainer::new(SessionConfig::default()).unwrap();
        assert!(t
            .step(&mut crate::learner::CompliantIntent)
            .unwrap()
            .is_none());
        assert_eq!(t.steps(), 0);
        t.begin_figure(FigureKind::Fwd).unwrap();
        assert!(t.begin_figure(FigureKind::Fwd).is_err());
        assert_eq!(t.beat_index(), Some(0));
    }
}
