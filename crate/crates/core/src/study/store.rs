use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::Vote;
use crate::error::{Error, Result};

#[derive(Default)]
struct State {
    votes: Vec<Vote>,
    cast: HashSet<(String, String)>,
}

/// Append-only vote log. Writers queue on one mutex (the append point);
/// readers only take the state lock long enough to copy or look up.
pub struct VoteStore {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    state: RwLock<State>,
}

impl VoteStore {
    pub fn in_memory() -> Self {
        VoteStore {
            path: None,
            writer: Mutex::new(None),
            state: RwLock::new(State::default()),
        }
    }

    /// Replay an existing JSONL log (if any) and append to it from now on.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut state = State::default();
        if path.exists() {
            let content = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let vote: Vote = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if !state.cast.insert((vote.task_id.clone(), vote.annotator.clone())) {
                    return Err(Error::DuplicateVote {
                        task_id: vote.task_id,
                        annotator: vote.annotator,
                    });
                }
                state.votes.push(vote);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(VoteStore {
            path: Some(path),
            writer: Mutex::new(Some(file)),
            state: RwLock::new(state),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn has_voted(&self, task_id: &str, annotator: &str) -> bool {
        let state = self.state.read().expect("vote state lock");
        state.cast.contains(&(task_id.to_string(), annotator.to_string()))
    }

    /// Persist a vote, refusing a second one for the same (task, annotator).
    pub fn append(&self, vote: Vote) -> Result<Vote> {
        let mut writer = self.writer.lock().expect("vote writer lock");
        if self.has_voted(&vote.task_id, &vote.annotator) {
            return Err(Error::DuplicateVote {
                task_id: vote.task_id,
                annotator: vote.annotator,
            });
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&vote)?;
            line.push('\n');
            let path = self.path.as_deref().expect("file-backed store has a path");
            file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        let mut state = self.state.write().expect("vote state lock");
        state.cast.insert((vote.task_id.clone(), vote.annotator.clone()));
        state.votes.push(vote.clone());
        Ok(vote)
    }

    /// Votes in the order they were recorded.
    pub fn snapshot(&self) -> Vec<Vote> {
        self.state.read().expect("vote state lock").votes.clone()
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("vote state lock").votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
