//! The job table. One task owns it; everything else talks to it by message.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};
use tlcontrol::wire::{GenerateRequest, GenerationResult};

/// Objective values kept in a progress snapshot.
pub const TRACE_TAIL: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Error,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Error | JobStatus::Cancelled)
    }

    fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done | JobStatus::Error | JobStatus::Cancelled)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    /// Completed share of the job in [0, 1].
    pub fraction: f64,
    pub sample: usize,
    pub iteration: usize,
    pub objective_tail: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSnapshot {
    pub id: String,
    pub status: JobStatus,
    pub request: GenerateRequest,
    pub progress: JobProgress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<GenerationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub enum Update {
    Status(JobStatus),
    Progress { sample: usize, iteration: usize, objective: f64, fraction: f64 },
    Done(Box<GenerationResult>),
    Failed(String),
}

enum Command {
    Insert { request: GenerateRequest, reply: oneshot::Sender<(String, Arc<AtomicBool>)> },
    Get { id: String, reply: oneshot::Sender<Option<JobSnapshot>> },
    Cancel { id: String, reply: oneshot::Sender<Option<JobSnapshot>> },
    Update { id: String, update: Update },
}

/// Cloneable handle to the job table task.
#[derive(Clone)]
pub struct JobTable {
    tx: mpsc::UnboundedSender<Command>,
}

struct Entry {
    snapshot: JobSnapshot,
    cancel: Arc<AtomicBool>,
}

impl JobTable {
    /// Spawns the owning task on the current runtime.
    pub fn spawn() -> JobTable {
        let (tx, mut rx) = mpsc::unbounded_channel::<Command>();
        tokio::spawn(async move {
            let mut jobs: HashMap<String, Entry> = HashMap::new();
            let mut next = 0u64;
            while let Some(cmd) = rx.recv().await {
                match cmd {
                    Command::Insert { request, reply } => {
                        next += 1;
                        let id = format!("job-{next}");
                        let cancel = Arc::new(AtomicBool::new(false));
                        let snapshot = JobSnapshot {
                            id: id.clone(),
                            status: JobStatus::Pending,
                            request,
                            progress: JobProgress::default(),
                            result: None,
                            error: None,
                        };
                        jobs.insert(id.clone(), Entry { snapshot, cancel: cancel.clone() });
                        let _ = reply.send((id, cancel));
                    }
                    Command::Get { id, reply } => {
                        let _ = reply.send(jobs.get(&id).map(|e| e.snapshot.clone()));
                    }
                    Command::Cancel { id, reply } => {
                        let snap = jobs.get(&id).map(|e| {
                            if !e.snapshot.status.is_terminal() {
                                e.cancel.store(true, Ordering::SeqCst);
                            }
                            e.snapshot.clone()
                        });
                        let _ = reply.send(snap);
                    }
                    Command::Update { id, update } => {
                        if let Some(e) = jobs.get_mut(&id) {
                            apply(&mut e.snapshot, update);
                        }
                    }
                }
            }
        });
        JobTable { tx }
    }

    pub async fn insert(&self, request: GenerateRequest) -> (String, Arc<AtomicBool>) {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Insert { request, reply });
        rx.await.expect("job table task stopped")
    }

    pub async fn get(&self, id: &str) -> Option<JobSnapshot> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Get { id: id.into(), reply });
        rx.await.expect("job table task stopped")
    }

    /// Flags the job for cancellation; the worker stops at its next check.
    pub async fn cancel(&self, id: &str) -> Option<JobSnapshot> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Cancel { id: id.into(), reply });
        rx.await.expect("job table task stopped")
    }

    /// Usable from blocking worker threads.
    pub fn update(&self, id: &str, update: Update) {
        self.send(Command::Update { id: id.into(), update });
    }

    fn send(&self, cmd: Command) {
        // the task lives as long as any handle, so a send only fails at shutdown
        let _ = self.tx.send(cmd);
    }
}

fn apply(s: &mut JobSnapshot, update: Update) {
    match update {
        Update::Status(next) => {
            if s.status.can_become(next) {
                s.status = next;
            }
        }
        Update::Progress { sample, iteration, objective, fraction } => {
            if s.status != JobStatus::Running {
                return;
            }
            let p = &mut s.progress;
            if sample != p.sample {
                p.objective_tail.clear();
            }
            p.sample = sample;
            p.iteration = iteration;
            p.fraction = p.fraction.max(fraction.clamp(0.0, 1.0));
            p.objective_tail.push(objective);
            if p.objective_tail.len() > TRACE_TAIL {
                p.objective_tail.remove(0);
            }
        }
        Update::Done(result) => {
            if s.status.can_become(JobStatus::Done) {
                s.status = JobStatus::Done;
                s.progress.fraction = 1.0;
                s.result = Some(*result);
            }
        }
        Update::Failed(msg) => {
            if s.status.can_become(JobStatus::Error) {
                s.status = JobStatus::Error;
                s.error = Some(msg);
            }
        }
    }
}
