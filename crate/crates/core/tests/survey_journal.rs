use std::fs::OpenOptions;

use kamtori::survey::*;
use kamtori::TrigSeries;

fn small_config() -> SurveyConfig {
    let mut c = SurveyConfig::new(TrigSeries::three_wave([1.0; 3], [0.0; 3]), vec![0.01, 0.04], 60, 17);
    c.steps = 4000;
    c.stride = 10;
    c
}

#[test]
fn journal_resume_matches_uninterrupted_run() {
    let c = small_config();
    let reference = run_survey(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.bin");
    // Interrupt after part of the work.
    assert!(run_survey_with(&c, Some(&path), Some(50)).unwrap().is_none());
    let resumed = run_survey_with(&c, Some(&path), None).unwrap().unwrap();
    assert_eq!(resumed, reference);
}

#[test]
fn truncated_tail_is_discarded_and_recomputed() {
    let c = small_config();
    let reference = run_survey(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.bin");
    run_survey_with(&c, Some(&path), Some(70)).unwrap();
    let len = std::fs::metadata(&path).unwrap().len();
    // Cut a record in half, as an abort mid-write would.
    OpenOptions::new().write(true).open(&path).unwrap().set_len(len - 7).unwrap();
    let resumed = run_survey_with(&c, Some(&path), None).unwrap().unwrap();
    assert_eq!(resumed, reference);
    // Everything is journaled now; a rerun does no new work and agrees.
    let again = run_survey_with(&c, Some(&path), Some(0)).unwrap().unwrap();
    assert_eq!(again, reference);
}

#[test]
fn journal_of_another_config_is_rejected() {
    let c = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.bin");
    run_survey_with(&c, Some(&path), Some(5)).unwrap();
    let mut other = c.clone();
    other.seed += 1;
    assert!(run_survey_with(&other, Some(&path), None).is_err());
}

#[test]
fn worker_count_does_not_change_the_hash() {
    let mut c = small_config();
    let h = c.hash();
    c.workers = 4;
    assert_eq!(c.hash(), h);
    c.steps += 1;
    assert_ne!(c.hash(), h);
}

#[test]
fn counts_add_up() {
    let r = run_survey(&small_config()).unwrap();
    for row in &r.rows {
        assert_eq!(row.counts.iter().sum::<usize>(), row.samples);
        assert!((row.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
