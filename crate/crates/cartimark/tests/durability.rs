mod support;

use std::fs;

use cartimark::store::{FaultPoint, SessionStore};
use cartimark_core::session::{CaseResponse, ReaderSession};
use cartimark_core::Label;

fn response(pid: &str) -> CaseResponse {
    CaseResponse { patient_id: pid.into(), diagnosis: Label::Defect, responded_at: "t".into(), elapsed_ms: 1 }
}

fn session(ids: &[String]) -> ReaderSession {
    ReaderSession::new("s1".into(), "r".into(), "reader".into(), "x:test".into(), 0, ids, "t0".into()).unwrap()
}

#[tokio::test]
async fn fifty_crashes_lose_no_acknowledged_response() {
    for seed in 0..50 {
        let root = tempfile::tempdir().unwrap();
        if let Err(e) = support::crash_trial(root.path(), seed).await {
            panic!("trial {seed}: {e}");
        }
    }
}

#[test]
fn torn_tail_is_truncated_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
    let store = SessionStore::open(dir.path()).unwrap();
    let s = store.create(session(&ids)).unwrap();
    let order = s.case_order.clone();
    store.submit("s1", response(&order[0])).unwrap();
    store.inject_fault(FaultPoint::TornAppend, 0);
    assert!(store.submit("s1", response(&order[1])).is_err());
    assert_eq!(store.get("s1").unwrap_err().code(), "storage_failure");
    drop(store);

    let log = dir.path().join("sessions/s1/events.jsonl");
    let torn = fs::read(&log).unwrap();
    assert_ne!(torn.last(), Some(&b'\n'));
    let store = SessionStore::open(dir.path()).unwrap();
    assert_eq!(store.get("s1").unwrap().responses.len(), 1);
    let clean = fs::read(&log).unwrap();
    assert_eq!(clean.last(), Some(&b'\n'));
    assert!(clean.len() < torn.len());
    store.submit("s1", response(&order[1])).unwrap();
    drop(store);
    assert_eq!(SessionStore::open(dir.path()).unwrap().get("s1").unwrap().responses.len(), 2);
}

#[test]
fn corruption_before_the_tail_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..4).map(|i| format!("p{i}")).collect();
    let store = SessionStore::open(dir.path()).unwrap();
    let s = store.create(session(&ids)).unwrap();
    for pid in &s.case_order[..2] {
        store.submit("s1", response(pid)).unwrap();
    }
    drop(store);
    let log = dir.path().join("sessions/s1/events.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "{garbage";
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    assert_eq!(SessionStore::open(dir.path()).err().unwrap().code(), "parse_error");
}

#[test]
fn index_snapshot_tracks_progress() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
    let store = SessionStore::open(dir.path()).unwrap();
    let s = store.create(session(&ids)).unwrap();
    for pid in &s.case_order {
        store.submit("s1", response(pid)).unwrap();
    }
    let index: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("sessions/index.json")).unwrap()).unwrap();
    assert_eq!(index[0]["answered"], 3);
    assert_eq!(index[0]["status"], "complete");
    assert_eq!(store.list(), ["s1"]);
}
