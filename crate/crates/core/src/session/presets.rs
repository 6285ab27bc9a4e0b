//! Canned experiments: CPS-vs-practice tables for fixed error levels, the
//! partner stop test, the pole-map sweep, paired PT/constant cohorts and
//! offline scoring of recorded trajectories.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::axes::{Vec7, DOF};
use crate::dynamics::{
    stability_map, stop_test, HumanParams, PlanarAxis, RobotParams, StabilityGrid, StopTestConfig,
    StopTrace,
};
use crate::error::{invalid, Error, Result};
use crate::figures::{
    builtin_figure, desired_velocity, DanceFigure, FigureKind, StudentScaling, Tempo,
};
use crate::learner::{simulate_error_sequence, LearnerParams};
use crate::scoring::{
    accuracy, classify, cps_update, face_color, figure_score, zone_boundaries, CpsState,
    ScoreParams, ZoneConfig, ZoneId,
};

use super::{run_session, Mode, SessionConfig};

pub const FIG5_PRACTICES: usize = 200;
pub const FIG5_SAMPLES: usize = 400;
/// Uniform noise half-width as a fraction of each run's error level.
pub const FIG5_NOISE: f64 = 0.3;
pub const FIG5_GAINS: [f64; 2] = [0.003, 0.005];
/// Index of the fixed level that the positive-gain runs start from.
pub const FIG5_MID: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Run {
    pub label: String,
    pub learner: LearnerParams,
    /// Mean error per practice.
    pub mean_error: Vec<f64>,
    /// CPS after each practice.
    pub cps: Vec<f64>,
}

impl Fig5Run {
    pub fn peak(&self) -> (usize, f64) {
        self.cps
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, c)| {
                if c > best.1 {
                    (i, c)
                } else {
                    best
                }
            })
    }

    pub fn final_cps(&self) -> f64 {
        *self.cps.last().unwrap_or(&0.0)
    }
}

/// Six error levels spread evenly from the middle of the fresh Blue zone to
/// half a zone into Grey.
pub fn fig5_levels(zones: &ZoneConfig) -> [f64; 6] {
    let b = zone_boundaries(0, zones);
    let lo = b[0] / 2.0;
    let hi = b[3] + (b[3] - b[2]) / 2.0;
    std::array::from_fn(|i| lo + (hi - lo) * i as f64 / 5.0)
}

fn score_error_run(
    label: String,
    learner: LearnerParams,
    zones: &ZoneConfig,
    score: &ScoreParams,
) -> Result<Fig5Run> {
    let traces = simulate_error_sequence(&learner, FIG5_PRACTICES, FIG5_SAMPLES)?;
    let mut state = CpsState::default();
    let mut cps = Vec::with_capacity(traces.len());
    let mut mean_error = Vec::with_capacity(traces.len());
    for (p, trace) in traces.iter().enumerate() {
        for e in trace {
            state = cps_update(&state, classify(*e, p as u32, zones), score);
        }
        cps.push(state.cps);
        mean_error.push(trace.iter().sum::<f64>() / trace.len() as f64);
    }
    Ok(Fig5Run {
        label,
        learner,
        mean_error,
        cps,
    })
}

/// Zero-gain runs at each level, then positive-gain runs from the mid level
/// sharing its seed.
pub fn fig5_runs() -> Result<Vec<Fig5Run>> {
    let zones = ZoneConfig::default();
    let score = ScoreParams::default();
    let levels = fig5_levels(&zones);
    let mut runs = Vec::new();
    for (i, level) in levels.iter().enumerate() {
        let learner = LearnerParams {
            learning_gain: 0.0,
            baseline_error: *level,
            noise_amp: FIG5_NOISE * level,
            seed: 500 + i as u64,
        };
        runs.push(score_error_run(
            format!("fixed_{}", i + 1),
            learner,
            &zones,
            &score,
        )?);
    }
    for g in FIG5_GAINS {
        let learner = LearnerParams {
            learning_gain: g,
            ..runs[FIG5_MID].learner.clone()
        };
        runs.push(score_error_run(
            format!("gain_{g}"),
            learner,
            &zones,
            &score,
        )?);
    }
    Ok(runs)
}

#[derive(Serialize)]
struct Fig5Row<'a> {
    run: &'a str,
    learning_gain: f64,
    baseline_error: f64,
    practice: usize,
    mean_error: f64,
    cps: f64,
}

/// Write `fig5.csv` (long format) and `manifest.json` into `out_dir`.
pub fn run_fig5(out_dir: &Path) -> Result<Vec<Fig5Run>> {
    let runs = fig5_runs()?;
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("fig5.csv"))?;
    for run in &runs {
        for (p, (cps, e)) in run.cps.iter().zip(&run.mean_error).enumerate() {
            w.serialize(Fig5Row {
                run: &run.label,
                learning_gain: run.learner.learning_gain,
                baseline_error: run.learner.baseline_error,
                practice: p,
                mean_error: *e,
                cps: *cps,
            })?;
        }
    }
    w.flush()?;
    let manifest = serde_json::json!({
        "practices": FIG5_PRACTICES,
        "samples_per_practice": FIG5_SAMPLES,
        "noise_fraction": FIG5_NOISE,
        "zones": ZoneConfig::default(),
        "score": ScoreParams::default(),
        "runs": runs.iter().map(|r| serde_json::json!({
            "label": r.label,
            "learner": r.learner,
            "peak_practice": r.peak().0,
            "peak_cps": r.peak().1,
            "final_cps": r.final_cps(),
        })).collect::<Vec<_>>(),
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(runs)
}

/// Summary numbers of a stop-test trace, all on the x axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopMetrics {
    /// First time after freeze onset at which the robot moves at no more
    /// than 5% of a plateau desired velocity.
    pub stall_time: Option<f64>,
    /// Worst relative gap between the measured force and the stall force
    /// `K_f F_d + K_d v_d` over settled plateau samples of the freeze.
    pub force_error: f64,
    pub mean_force: f64,
    pub expected_force: f64,
    /// Time after release from which the velocity error stays within 5% of
    /// the plateau speed.
    pub reconverge_time: Option<f64>,
}

/// Settling allowance after a plateau starts before the force is compared.
const SETTLE: f64 = 0.5;

pub fn stop_metrics(
    trace: &StopTrace,
    robot: &RobotParams,
    freeze: (f64, f64),
) -> Result<StopMetrics> {
    let (t0, t1) = freeze;
    let peak = trace
        .samples
        .iter()
        .map(|s| s.desired[0].abs())
        .fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::UndefinedInput(
            "stop metrics of a trace without x motion",
        ));
    }
    let on_plateau = |vd: f64| vd.abs() >= peak * (1.0 - 1e-9);

    let stall_time = trace
        .samples
        .iter()
        .find(|s| {
            s.t > t0
                && s.t <= t1
                && on_plateau(s.desired[0])
                && s.velocity[0].abs() <= 0.05 * s.desired[0].abs()
        })
        .map(|s| s.t);

    let mut plateau_start = f64::NAN;
    let mut worst: f64 = 0.0;
    let (mut sum, mut expected_sum, mut count) = (0.0, 0.0, 0usize);
    for s in &trace.samples {
        if !on_plateau(s.desired[0]) {
            plateau_start = f64::NAN;
            continue;
        }
        if plateau_start.is_nan() {
            plateau_start = s.t;
        }
        if s.t > t0 + 1.0 && s.t <= t1 && s.t - plateau_start >= SETTLE {
            let vd = s.desired[0];
            let expected =
                robot.force_gain[0] * robot.desired_force[0].resolve(vd) + robot.damping[0] * vd;
            worst = worst.max((s.force[0] - expected).abs() / expected.abs());
            sum += s.force[0];
            expected_sum += expected;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedInput(
            "freeze window holds no settled plateau samples",
        ));
    }

    let tolerance = 0.05 * peak;
    let mut reconverge_time = None;
    for s in trace.samples.iter().filter(|s| s.t >= t1) {
        let ok = (s.velocity[0] - s.desired[0]).abs() <= tolerance;
        match (ok, reconverge_time) {
            (true, None) => reconverge_time = Some(s.t),
            (false, _) => reconverge_time = None,
            _ => {}
        }
    }

    Ok(StopMetrics {
        stall_time,
        force_error: worst,
        mean_force: sum / count as f64,
        expected_force: expected_sum / count as f64,
        reconverge_time,
    })
}

/// Forward walk on repeat with the default robot and partner, partner frozen
/// over `[2 s, 6 s]`. Writes the trace CSV to `out_file`.
pub fn run_stoptest(out_file: &Path) -> Result<(StopTrace, StopMetrics)> {
    let robot = RobotParams::default();
    let cfg = StopTestConfig::default();
    let trace = stop_test(
        &robot,
        &HumanParams::default(),
        &builtin_figure(FigureKind::Fwd),
        Tempo::SLOW_WALTZ,
        &cfg,
    )?;
    let metrics = stop_metrics(&trace, &robot, cfg.freeze)?;
    if let Some(dir) = out_file.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    trace.write_csv(std::io::BufWriter::new(fs::File::create(out_file)?))?;
    Ok((trace, metrics))
}

/// Pole-map sweep of the x axis with the default robot and a loop delay of
/// `delay` seconds.
pub fn run_stability_map(
    out_file: &Path,
    kh: (f64, f64, usize),
    dh: (f64, f64, usize),
    delay: f64,
) -> Result<StabilityGrid> {
    if !(delay.is_finite() && delay >= 0.0) {
        return Err(Error::OutOfRange {
            what: "loop delay",
            value: delay,
        });
    }
    let robot = RobotParams {
        loop_delay: delay,
        ..RobotParams::default()
    };
    let grid = stability_map(
        &robot,
        &HumanParams::default(),
        PlanarAxis::X,
        (kh.0, kh.1),
        (dh.0, dh.1),
        (kh.2, dh.2),
    )?;
    if let Some(dir) = out_file.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    grid.write_csv(std::io::BufWriter::new(fs::File::create(out_file)?))?;
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortLearner {
    pub learner: usize,
    pub params: LearnerParams,
    pub final_cps_pt: f64,
    pub final_cps_constant: f64,
    pub tv_pt: f64,
    pub tv_constant: f64,
    /// CPS after each figure.
    pub cps_pt: Vec<f64>,
    pub cps_constant: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub learners: Vec<CohortLearner>,
}

pub fn total_variation(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Learner `i` of a cohort: seed `1000 + i`, gain cycling through `gains`,
/// initial error cycling through three levels.
pub fn cohort_learner(i: usize, gains: &[f64], base: &LearnerParams) -> LearnerParams {
    const LEVELS: [f64; 3] = [7.0, 9.0, 11.0];
    LearnerParams {
        learning_gain: gains[i % gains.len()],
        baseline_error: LEVELS[i % LEVELS.len()],
        seed: 1000 + i as u64,
        ..base.clone()
    }
}

#[derive(Serialize)]
struct CohortSummaryRow {
    learner: usize,
    seed: u64,
    learning_gain: f64,
    baseline_error: f64,
    final_cps_pt: f64,
    final_cps_constant: f64,
    tv_pt: f64,
    tv_constant: f64,
}

#[derive(Serialize)]
struct CohortTrajectoryRow {
    learner: usize,
    arm: Mode,
    figure: usize,
    cps_after: f64,
}

/// Paired PT/constant sessions per learner, run in parallel. When `out_dir`
/// is given, writes `cohort_summary.csv` and `cohort_trajectories.csv`.
pub fn run_cohort(
    n_learners: usize,
    gains: &[f64],
    base: &SessionConfig,
    out_dir: Option<&Path>,
) -> Result<CohortReport> {
    if n_learners < 2 {
        return Err(invalid("a cohort needs at least two learners"));
    }
    if gains.is_empty() {
        return Err(invalid("a cohort needs at least one learning gain"));
    }
    let results: Vec<Result<CohortLearner>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_learners)
            .map(|i| {
                scope.spawn(move || -> Result<CohortLearner> {
                    let params = cohort_learner(i, gains, &base.learner);
                    let arm = |mode| {
                        run_session(&SessionConfig {
                            learner: params.clone(),
                            mode,
                            ..base.clone()
                        })
                    };
                    let pt = arm(Mode::Pt)?.cps_trajectory();
                    let constant = arm(Mode::Constant)?.cps_trajectory();
                    Ok(CohortLearner {
                        learner: i,
                        params,
                        final_cps_pt: *pt.last().unwrap_or(&0.0),
                        final_cps_constant: *constant.last().unwrap_or(&0.0),
                        tv_pt: total_variation(&pt),
                        tv_constant: total_variation(&constant),
                        cps_pt: pt,
                        cps_constant: constant,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cohort worker panicked"))
            .collect()
    });
    let learners = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = CohortReport { learners };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("cohort_summary.csv"))?;
        for l in &report.learners {
            w.serialize(CohortSummaryRow {
                learner: l.learner,
                seed: l.params.seed,
                learning_gain: l.params.learning_gain,
                baseline_error: l.params.baseline_error,
                final_cps_pt: l.final_cps_pt,
                final_cps_constant: l.final_cps_constant,
                tv_pt: l.tv_pt,
                tv_constant: l.tv_constant,
            })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("cohort_trajectories.csv"))?;
        for l in &report.learners {
            for (arm, cps) in [(Mode::Pt, &l.cps_pt), (Mode::Constant, &l.cps_constant)] {
                for (figure, c) in cps.iter().enumerate() {
                    w.serialize(CohortTrajectoryRow {
                        learner: l.learner,
                        arm,
                        figure,
                        cps_after: *c,
                    })?;
                }
            }
        }
        w.flush()?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub t: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub zone: ZoneId,
    pub cps: f64,
    pub face: ZoneId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub figure: FigureKind,
    pub practice_n: u32,
    pub samples: Vec<ScoredSample>,
    pub zone_counts: [u64; 5],
    pub accuracy: f64,
    pub mean_error: f64,
    pub bar_zone: ZoneId,
    pub final_cps: f64,
}

pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "vx", "vy", "vphi", "vq1", "vq2", "vq3", "vq4"];

/// Score a recorded velocity trace (`t,vx,vy,vphi,vq1..vq4`) against
/// `figure` as the partner's `n`-th practice of it. Every row is one sample.
pub fn score_offline<R: Read>(
    trajectory: R,
    figure: &DanceFigure,
    n: u32,
    tempo: Tempo,
    zones: &ZoneConfig,
    score: &ScoreParams,
) -> Result<ScoreReport> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(trajectory);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", TRAJECTORY_HEADER.join(",")),
        });
    }
    let mut rows: Vec<(f64, Vec7)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("`{f}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != 1 + DOF {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} columns, found {}", 1 + DOF, values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        rows.push((values[0], std::array::from_fn(|k| values[k + 1])));
    }

    let duration = figure.duration(tempo);
    let last = rows
        .last()
        .map(|r| r.0)
        .ok_or_else(|| Error::LengthMismatch("trajectory has no rows".into()))?;
    if (last - duration).abs() > 0.05 * duration || rows[0].0 < 0.0 {
        return Err(Error::LengthMismatch(format!(
            "trajectory spans to t = {last} s but the figure lasts {duration} s"
        )));
    }

    let scaling = StudentScaling::identity();
    let mut state = CpsState::default();
    let mut samples = Vec::with_capacity(rows.len());
    for (t, v) in &rows {
        let vd = desired_velocity(figure, t.min(duration), tempo, &scaling)?;
        let e = zones.scored_error(&vd, v);
        let zone = classify(e, n, zones);
        state = cps_update(&state, zone, score);
        samples.push(ScoredSample {
            t: *t,
            e,
            zone,
            cps: state.cps,
            face: face_color(state.cps, score),
        });
    }
    let errors: Vec<f64> = samples.iter().map(|s| s.e).collect();
    let (mean_error, bar_zone) = figure_score(&errors, n, zones)?;
    Ok(ScoreReport {
        figure: figure.kind,
        practice_n: n,
        zone_counts: state.zone_counts,
        accuracy: accuracy(&state, score)?,
        mean_error,
        bar_zone,
        final_cps: state.cps,
        samples,
    })
}
