//! Durable reader-session storage.
//!
//! Each session owns `sessions/<id>/events.jsonl`, an append-only log whose
//! first line creates the session and whose later lines each record one
//! response. Every append is fsynced before the caller sees an
//! acknowledgment. `sessions/index.json` is a snapshot for listing only; the
//! logs are authoritative and are replayed on open. A torn final line (a
//! crash mid-append) is discarded and truncated away on replay.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use cartimark_core::session::{Acknowledgment, CaseResponse, ReaderSession, SessionStatus};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::fsutil::write_json;

const EVENTS: &str = "events.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created { session: ReaderSession },
    Response { response: CaseResponse },
}

/// Points at which a simulated crash can be injected into a submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Before anything reaches the log.
    BeforeAppend,
    /// Half of the line is written, then the process dies.
    TornAppend,
    /// The line is durable but the acknowledgment is never sent.
    AfterAppend,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexEntry {
    pub session_id: String,
    pub reader_id: String,
    pub reader_role: String,
    pub dataset_ref: String,
    pub status: SessionStatus,
    pub answered: usize,
    pub total: usize,
}

pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<ReaderSession>>>>,
    /// Armed fault: fires on the n-th subsequent append.
    fault: Mutex<Option<(FaultPoint, usize)>>,
    crashed: AtomicBool,
}

fn storage(e: impl std::fmt::Display) -> AppError {
    AppError::Storage(e.to_string())
}

fn sync_dir(dir: &Path) {
    // Directory fsync is best effort: not every platform supports it.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

/// Replays one log, truncating a torn tail in place.
fn replay(path: &Path) -> Result<ReaderSession> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    let mut session: Option<ReaderSession> = None;
    let mut good = 0usize;
    let mut offset = 0usize;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|b| *b == b'\n') else {
            break; // unterminated tail: torn write
        };
        let line = &bytes[offset..offset + nl];
        let event: Event = match serde_json::from_slice(line) {
            Ok(e) => e,
            Err(_) if offset + nl + 1 == bytes.len() => break, // garbled last line
            Err(e) => return Err(AppError::parse(path, format!("corrupt event at byte {offset}: {e}"))),
        };
        match (event, session.as_mut()) {
            (Event::Created { session: s }, None) => session = Some(s),
            (Event::Response { response }, Some(s)) => {
                s.submit(response).map_err(|e| AppError::parse(path, format!("invalid replayed response: {e}")))?;
            }
            _ => return Err(AppError::parse(path, "events out of sequence")),
        }
        offset += nl + 1;
        good = offset;
    }
    if good < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(AppError::io(path))?;
        f.set_len(good as u64).map_err(AppError::io(path))?;
        f.sync_all().map_err(AppError::io(path))?;
    }
    session.ok_or_else(|| AppError::parse(path, "log has no creation event"))
}

impl SessionStore {
    /// Opens (or creates) a store rooted at `dir`, replaying every log.
    pub fn open(dir: &Path) -> Result<Self> {
        let sessions_dir = dir.join("sessions");
        fs::create_dir_all(&sessions_dir).map_err(AppError::io(&sessions_dir))?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(&sessions_dir).map_err(AppError::io(&sessions_dir))? {
            let entry = entry.map_err(AppError::io(&sessions_dir))?;
            let log = entry.path().join(EVENTS);
            if log.is_file() {
                let s = replay(&log)?;
                sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        let store = SessionStore {
            dir: sessions_dir,
            sessions: Mutex::new(sessions),
            fault: Mutex::new(None),
            crashed: AtomicBool::new(false),
        };
        store.write_index()?;
        Ok(store)
    }

    fn alive(&self) -> Result<()> {
        if self.crashed.load(Ordering::SeqCst) {
            return Err(storage("store has crashed and must be reopened"));
        }
        Ok(())
    }

    /// Arms a simulated crash at `point` on the `nth` append from now
    /// (0 = the next one). After it fires every call fails until the store
    /// is reopened, as if the process had died.
    pub fn inject_fault(&self, point: FaultPoint, nth: usize) {
        *self.fault.lock().unwrap() = Some((point, nth));
    }

    fn take_fault(&self) -> Option<FaultPoint> {
        let mut guard = self.fault.lock().unwrap();
        match guard.as_mut() {
            Some((p, 0)) => {
                let p = *p;
                *guard = None;
                Some(p)
            }
            Some((_, n)) => {
                *n -= 1;
                None
            }
            None => None,
        }
    }

    fn crash(&self, what: &str) -> AppError {
        self.crashed.store(true, Ordering::SeqCst);
        storage(format!("injected crash {what}"))
    }

    fn log_path(&self, session_id: &str) -> PathBuf {
        self.dir.join(session_id).join(EVENTS)
    }

    fn append(&self, session_id: &str, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event).map_err(storage)?;
        line.push(b'\n');
        let fault = self.take_fault();
        if fault == Some(FaultPoint::BeforeAppend) {
            return Err(self.crash("before append"));
        }
        let path = self.log_path(session_id);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(AppError::io(&path))?;
        if fault == Some(FaultPoint::TornAppend) {
            f.write_all(&line[..line.len() / 2]).map_err(AppError::io(&path))?;
            let _ = f.sync_all();
            return Err(self.crash("mid append"));
        }
        f.write_all(&line).map_err(AppError::io(&path))?;
        f.sync_data().map_err(AppError::io(&path))?;
        if fault == Some(FaultPoint::AfterAppend) {
            return Err(self.crash("after append, before acknowledgment"));
        }
        Ok(())
    }

    fn write_index(&self) -> Result<()> {
        let sessions = self.sessions.lock().unwrap();
        let entries: Vec<IndexEntry> = sessions
            .values()
            .map(|s| {
                let s = s.lock().unwrap();
                IndexEntry {
                    session_id: s.session_id.clone(),
                    reader_id: s.reader_id.clone(),
                    reader_role: s.reader_role.clone(),
                    dataset_ref: s.dataset_ref.clone(),
                    status: s.status,
                    answered: s.responses.len(),
                    total: s.total(),
                }
            })
            .collect();
        write_json(&self.dir.join("index.json"), &entries)
    }

    pub fn create(&self, session: ReaderSession) -> Result<ReaderSession> {
        self.alive()?;
        let dir = self.dir.join(&session.session_id);
        fs::create_dir_all(&dir).map_err(AppError::io(&dir))?;
        let path = self.log_path(&session.session_id);
        let mut line = serde_json::to_vec(&Event::Created { session: session.clone() }).map_err(storage)?;
        line.push(b'\n');
        let mut f = File::create(&path).map_err(AppError::io(&path))?;
        f.write_all(&line).map_err(AppError::io(&path))?;
        f.sync_all().map_err(AppError::io(&path))?;
        sync_dir(&dir);
        sync_dir(&self.dir);
        self.sessions.lock().unwrap().insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
        self.write_index()?;
        Ok(session)
    }

    fn handle(&self, session_id: &str) -> Result<Arc<Mutex<ReaderSession>>> {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| AppError::UnknownSession(session_id.into()))
    }

    pub fn get(&self, session_id: &str) -> Result<ReaderSession> {
        self.alive()?;
        Ok(self.handle(session_id)?.lock().unwrap().clone())
    }

    /// Validates, durably appends, then applies. Submissions to one session
    /// are serialised by its lock; exact replays are acknowledged without
    /// storing anything.
    pub fn submit(&self, session_id: &str, response: CaseResponse) -> Result<Acknowledgment> {
        self.alive()?;
        let handle = self.handle(session_id)?;
        let mut session = handle.lock().unwrap();
        if let Some(ack) = session.check_submission(&response.patient_id, response.diagnosis)? {
            return Ok(ack);
        }
        self.append(session_id, &Event::Response { response: response.clone() })?;
        let ack = session.apply(response);
        drop(session);
        self.write_index()?;
        Ok(ack)
    }

    pub fn list(&self) -> Vec<String> {
        self.sessions.lock().unwrap().keys().cloned().collect()
    }
}
