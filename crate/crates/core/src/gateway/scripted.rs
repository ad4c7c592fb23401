//! Offline replay and recording of provider traffic.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionRequest, GatewayError, Provider};
use crate::dataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub response: String,
}

/// Replays a transcript strictly in order.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ScriptedProvider { entries, cursor: Mutex::new(0) }
    }

    pub fn load(path: &Path) -> crate::error::Result<Self> {
        Ok(Self::new(dataset::read_jsonl(path)?))
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.consumed()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self.entries.get(index).ok_or(GatewayError::TranscriptExhausted { index })?;
        let actual = req.fingerprint();
        if entry.fingerprint != actual {
            return Err(GatewayError::FingerprintMismatch { index, expected: entry.fingerprint.clone(), actual });
        }
        *cursor += 1;
        Ok(Completion::text(entry.response.clone()))
    }
}

/// Passes requests through to another provider and keeps a transcript that
/// [`ScriptedProvider`] can replay.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<Vec<TranscriptEntry>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider { inner, recorded: Mutex::new(Vec::new()) }
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.recorded.lock().unwrap().clone()
    }

    pub fn handle(self: &std::sync::Arc<Self>) -> SharedRecorder<P> {
        SharedRecorder(self.clone())
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        // Hold the lock across the call so transcript order equals call order.
        let mut rec = self.recorded.lock().unwrap();
        let c = self.inner.complete(req)?;
        rec.push(TranscriptEntry { fingerprint: req.fingerprint(), response: c.text.clone() });
        Ok(c)
    }
}

/// Lets a caller keep access to the transcript after handing the recorder to
/// a [`super::Gateway`].
pub struct SharedRecorder<P>(std::sync::Arc<RecordingProvider<P>>);

impl<P: Provider> Provider for SharedRecorder<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.0.complete(req)
    }
}
