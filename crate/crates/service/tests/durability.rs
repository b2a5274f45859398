use shelflife_service::faults::{run_broken_store_campaign, run_crash_campaign};

#[test]
fn five_hundred_crashes_lose_nothing() {
    let report = run_crash_campaign(500, 2024).unwrap();
    assert_eq!(report.crashes, 500);
    assert!(report.acknowledged > 500, "{report:?}");
    assert!(report.passed(), "{report:?}");
}

#[test]
fn campaign_is_reproducible() {
    assert_eq!(run_crash_campaign(50, 5).unwrap(), run_crash_campaign(50, 5).unwrap());
}

#[test]
fn harness_detects_a_store_that_acknowledges_torn_writes() {
    let report = run_broken_store_campaign(200, 2024).unwrap();
    assert!(!report.passed(), "{report:?}");
}
