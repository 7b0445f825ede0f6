//! Blinded reader sessions: a seeded case order, a cursor and an
//! append-only list of responses. Nothing here ever holds a ground-truth
//! label; unblinding happens only in the report path of the service.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResponse {
    pub patient_id: String,
    pub diagnosis: Label,
    pub responded_at: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// 1-based position of the case being shown (or answered).
    pub current: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub progress: Progress,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderSession {
    pub session_id: String,
    pub reader_id: String,
    pub reader_role: String,
    pub dataset_ref: String,
    pub seed: u64,
    pub case_order: Vec<String>,
    pub cursor: usize,
    pub responses: Vec<CaseResponse>,
    pub created: String,
    pub completed: Option<String>,
    pub status: SessionStatus,
}

/// Outcome of a submission: a fresh append, or a replay of an earlier
/// identical submission (nothing stored).
#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    Appended(Acknowledgment),
    Duplicate(Acknowledgment),
}

impl Submission {
    pub fn ack(&self) -> Acknowledgment {
        match self {
            Submission::Appended(a) | Submission::Duplicate(a) => *a,
        }
    }
}

/// Seeded permutation of the canonical (sorted) patient list.
pub fn case_order(patient_ids: &[String], seed: u64) -> Vec<String> {
    let mut ids = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

impl ReaderSession {
    pub fn new(
        session_id: String,
        reader_id: String,
        reader_role: String,
        dataset_ref: String,
        seed: u64,
        patient_ids: &[String],
        created: String,
    ) -> Result<Self> {
        if patient_ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(ReaderSession {
            session_id,
            reader_id,
            reader_role,
            dataset_ref,
            seed,
            case_order: case_order(patient_ids, seed),
            cursor: 0,
            responses: Vec::new(),
            created,
            completed: None,
            status: SessionStatus::Active,
        })
    }

    pub fn total(&self) -> usize {
        self.case_order.len()
    }

    pub fn current_case(&self) -> Result<&str> {
        match self.status {
            SessionStatus::Complete => Err(Error::SessionComplete),
            SessionStatus::Active => Ok(&self.case_order[self.cursor]),
        }
    }

    pub fn progress(&self) -> Progress {
        Progress { current: (self.cursor + 1).min(self.total()), total: self.total() }
    }

    fn ack_for(&self, answered: usize) -> Acknowledgment {
        Acknowledgment {
            progress: Progress { current: answered, total: self.total() },
            status: if answered == self.total() { SessionStatus::Complete } else { SessionStatus::Active },
        }
    }

    /// Checks a submission without mutating. `Ok(None)` means the response
    /// should be appended; `Ok(Some(ack))` is an idempotent replay.
    pub fn check_submission(&self, patient_id: &str, diagnosis: Label) -> Result<Option<Acknowledgment>> {
        if let Some(k) = self.responses.iter().position(|r| r.patient_id == patient_id) {
            return if self.responses[k].diagnosis == diagnosis {
                Ok(Some(self.ack_for(k + 1)))
            } else {
                Err(Error::DuplicateConflict(String::from(patient_id)))
            };
        }
        let expected = self.current_case()?;
        if expected != patient_id {
            return Err(Error::OutOfOrder { expected: String::from(expected), got: String::from(patient_id) });
        }
        Ok(None)
    }

    /// Appends a response already validated by [`check_submission`].
    ///
    /// [`check_submission`]: ReaderSession::check_submission
    pub fn apply(&mut self, response: CaseResponse) -> Acknowledgment {
        self.responses.push(response);
        self.cursor = self.responses.len();
        if self.cursor == self.total() {
            self.status = SessionStatus::Complete;
            self.completed = self.responses.last().map(|r| r.responded_at.clone());
        }
        self.ack_for(self.cursor)
    }

    pub fn submit(&mut self, response: CaseResponse) -> Result<Submission> {
        match self.check_submission(&response.patient_id, response.diagnosis)? {
            Some(ack) => Ok(Submission::Duplicate(ack)),
            None => Ok(Submission::Appended(self.apply(response))),
        }
    }

    /// `(patient_id, diagnosis)` pairs in answer order.
    pub fn answers(&self) -> impl Iterator<Item = (&str, Label)> {
        self.responses.iter().map(|r| (r.patient_id.as_str(), r.diagnosis))
    }
}
