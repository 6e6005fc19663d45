//! Desk-scale acceptance gate: runs every pinned criterion sequentially,
//! prints one scoreboard line per criterion, and fails if any row is not a
//! pass. At full scale nothing may skip — the sample floors are sized so the
//! pinned path counts always clear them.

use bdsde::{run_acceptance, CriterionStatus};

#[test]
fn acceptance_suite_passes_at_desk_scale() {
    let reports = run_acceptance(1.0);
    assert_eq!(reports.len(), 9, "every criterion must report");
    let mut failures = Vec::new();
    for report in &reports {
        println!("{}", report.line());
        if !matches!(report.status, CriterionStatus::Pass) {
            failures.push(report.name);
        }
    }
    assert!(
        failures.is_empty(),
        "acceptance criteria not passing: {failures:?} — scoreboard above"
    );
}
