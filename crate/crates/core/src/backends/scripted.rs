use std::sync::Mutex;

use super::{BackendError, CompletionBackend, CompletionRequest};

/// Replays a fixed transcript, one response per call, and records every
/// prompt it receives. Entries may be errors to simulate flaky backends.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: Vec<Result<String, BackendError>>,
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    next: usize,
    prompts: Vec<String>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::with_results(responses.into_iter().map(|r| Ok(r.into())))
    }

    pub fn with_results(responses: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        Self { responses: responses.into_iter().collect(), state: Mutex::default() }
    }

    pub fn calls(&self) -> usize {
        self.lock().next
    }

    pub fn prompts(&self) -> Vec<String> {
        self.lock().prompts.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let mut state = self.lock();
        state.prompts.push(request.prompt.clone());
        let index = state.next;
        state.next += 1;
        match self.responses.get(index) {
            Some(r) => r.clone(),
            None => Err(BackendError::ScriptExhausted { calls: index }),
        }
    }

    fn identity(&self) -> String {
        format!("scripted/{}", self.responses.len())
    }

    fn request_count(&self) -> u64 {
        self.calls() as u64
    }
}
