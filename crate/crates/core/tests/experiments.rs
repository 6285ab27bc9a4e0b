use dancept_core::session::{run_cohort, total_variation};
use dancept_core::{run_session, Mode, SessionConfig};

#[test]
fn cohort_is_deterministic_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let base = SessionConfig {
        practices: 8,
        ..Default::default()
    };
    let report = run_cohort(3, &[0.05, 0.2], &base, Some(dir.path())).unwrap();
    assert_eq!(report.learners.len(), 3);
    for l in &report.learners {
        assert_eq!(l.cps_pt.len(), 8);
        assert_eq!(l.tv_pt, total_variation(&l.cps_pt));
        assert_eq!(l.tv_constant, total_variation(&l.cps_constant));
        assert_eq!(l.params.seed, 1000 + l.learner as u64);
    }
    let again = run_cohort(3, &[0.05, 0.2], &base, None).unwrap();
    assert_eq!(report, again);
    let summary = std::fs::read_to_string(dir.path().join("cohort_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(dir.path().join("cohort_trajectories.csv").exists());
}

#[test]
fn cohort_rejects_degenerate_requests() {
    let base = SessionConfig::default();
    assert!(run_cohort(1, &[0.1], &base, None).is_err());
    assert!(run_cohort(4, &[], &base, None).is_err());
}

#[test]
fn default_session_learns() {
    let record = run_session(&SessionConfig {
        mode: Mode::Pt,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(record.figures.len(), 20);
    let first = record.figures[..4].iter().map(|f| f.mean_e).sum::<f64>();
    let last = record.figures[16..].iter().map(|f| f.mean_e).sum::<f64>();
    assert!(last < first, "{first} {last}");
}

#[test]
fn shipped_default_config_matches_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(
        SessionConfig::from_path(&path).unwrap(),
        SessionConfig::default()
    );
}
