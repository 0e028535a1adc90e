//! The single task that owns the executive. Everything else talks to it
//! through a channel and reads the snapshots it publishes.

use std::sync::{Arc, RwLock};
use std::time::Duration;

use hearth_core::cues::Cue;
use hearth_core::executive::{ExecError, Executive, Mode, RunStateView};
use hearth_core::planner::Task;
use hearth_core::sim::SimEvent;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Run,
    Pause,
    Step,
}

/// Body of `POST /control`. `ticks` bounds a run (then pauses) or sizes a
/// step (default 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub mode: ControlMode,
    #[serde(default)]
    pub ticks: Option<u64>,
}

enum Request {
    Command(String, oneshot::Sender<Result<Task, ExecError>>),
    Cue(Cue, oneshot::Sender<Result<SimEvent, ExecError>>),
    Control(Control, oneshot::Sender<RunStateView>),
}

/// What readers see without touching the executive.
pub struct Shared {
    state: RwLock<RunStateView>,
    lines: RwLock<Vec<String>>,
    published: watch::Sender<usize>,
}

impl Shared {
    pub fn state(&self) -> RunStateView {
        self.state.read().expect("state lock").clone()
    }

    /// Log lines from `from` on, without trailing newlines.
    pub fn lines_from(&self, from: usize) -> Vec<String> {
        let lines = self.lines.read().expect("log lock");
        lines.get(from..).map(<[String]>::to_vec).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.lines.read().expect("log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.published.subscribe()
    }
}

/// Cheap, cloneable access to a running loop.
#[derive(Clone)]
pub struct Handle {
    tx: mpsc::Sender<Request>,
    shared: Arc<Shared>,
}

/// The loop task stopped, so the request was not served.
#[derive(Debug)]
pub struct Stopped;

impl Handle {
    pub fn shared(&self) -> &Shared {
        &self.shared
    }

    pub async fn command(&self, text: String) -> Result<Result<Task, ExecError>, Stopped> {
        self.ask(|tx| Request::Command(text, tx)).await
    }

    pub async fn cue(&self, cue: Cue) -> Result<Result<SimEvent, ExecError>, Stopped> {
        self.ask(|tx| Request::Cue(cue, tx)).await
    }

    pub async fn control(&self, control: Control) -> Result<RunStateView, Stopped> {
        self.ask(|tx| Request::Control(control, tx)).await
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, Stopped> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).await.map_err(|_| Stopped)?;
        rx.await.map_err(|_| Stopped)
    }
}

/// Spawns the loop on the current runtime. `rate` is ticks per wall second;
/// 0 runs as fast as possible.
pub fn spawn(executive: Executive, rate: f64) -> Handle {
    let (tx, rx) = mpsc::channel(64);
    let (published, _) = watch::channel(0);
    let shared = Arc::new(Shared {
        state: RwLock::new(executive.state()),
        lines: RwLock::new(Vec::new()),
        published,
    });
    let runner = Runner {
        exec: executive,
        shared: shared.clone(),
        budget: None,
    };
    runner.publish();
    tokio::spawn(runner.run(rx, rate));
    Handle { tx, shared }
}

struct Runner {
    exec: Executive,
    shared: Arc<Shared>,
    /// Ticks left before a bounded run pauses itself.
    budget: Option<u64>,
}

impl Runner {
    async fn run(mut self, mut rx: mpsc::Receiver<Request>, rate: f64) {
        let mut interval = (rate > 0.0).then(|| {
            let mut i = tokio::time::interval(Duration::from_secs_f64(1.0 / rate));
            i.set_missed_tick_behavior(MissedTickBehavior::Delay);
            i
        });
        loop {
            let running = self.exec.mode() == Mode::Running;
            tokio::select! {
                biased;
                request = rx.recv() => match request {
                    Some(r) => self.handle(r),
                    None => break,
                },
                _ = pace(interval.as_mut()), if running => {
                    self.exec.tick();
                    if let Some(left) = self.budget.as_mut() {
                        *left -= 1;
                        if *left == 0 {
                            self.budget = None;
                            self.exec.set_mode(Mode::Paused);
                        }
                    }
                    self.publish();
                }
            }
        }
        tracing::debug!("executive loop stopped");
    }

    fn handle(&mut self, request: Request) {
        match request {
            Request::Command(text, reply) => {
                let result = self.exec.issue_command(&text).cloned();
                self.publish();
                let _ = reply.send(result);
            }
            Request::Cue(cue, reply) => {
                let result = self.exec.inject_cue(cue);
                self.publish();
                let _ = reply.send(result);
            }
            Request::Control(control, reply) => {
                self.control(control);
                self.publish();
                let _ = reply.send(self.exec.state());
            }
        }
    }

    fn control(&mut self, control: Control) {
        match control.mode {
            ControlMode::Run => {
                self.budget = control.ticks.filter(|&n| n > 0);
                self.exec.set_mode(Mode::Running);
            }
            ControlMode::Pause => {
                self.budget = None;
                self.exec.set_mode(Mode::Paused);
            }
            ControlMode::Step => {
                self.budget = None;
                self.exec.set_mode(Mode::Paused);
                for _ in 0..control.ticks.unwrap_or(1) {
                    if self.exec.mode() == Mode::Finished {
                        break;
                    }
                    self.exec.tick();
                }
            }
        }
    }

    fn publish(&self) {
        let log = self.exec.log();
        let len = {
            let mut lines = self.shared.lines.write().expect("log lock");
            let start = lines.len();
            lines.extend(log[start..].iter().map(SimEvent::to_line));
            lines.len()
        };
        *self.shared.state.write().expect("state lock") = self.exec.state();
        self.shared.published.send_replace(len);
    }
}

async fn pace(interval: Option<&mut tokio::time::Interval>) {
    match interval {
        Some(i) => {
            i.tick().await;
        }
        None => tokio::task::yield_now().await,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_body_shapes() {
        let c: Control = serde_json::from_str(r#"{"mode":"step","ticks":3}"#).unwrap();
        assert_eq!(c, Control { mode: ControlMode::Step, ticks: Some(3) });
        let c: Control = serde_json::from_str(r#"{"mode":"pause"}"#).unwrap();
        assert_eq!(c.ticks, None);
        assert!(serde_json::from_str::<Control>(r#"{"mode":"Run"}"#).is_err());
    }
}
