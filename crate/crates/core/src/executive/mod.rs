//! The online loop: simulate a tick, fold perception and cues into the
//! scene graph, replan when the task is affected, and record everything
//! as an append-only event log.

use std::collections::BTreeSet;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{self, Cue, CueConfig, CueError, InterpretContext, InterpreterClient};
use crate::geometry::{self, GeometricObservation, GeometryConfig, RoomModel, SurfaceModel};
use crate::planner::{is_relevant, parse_command, Action, Plan, PlanError, Planner, PlannerConfig, Task, TaskStatus};
use crate::scene_graph::{
    GraphDelta, GraphError, GraphSnapshot, NodeId, Pose, Relation, SceneGraph, SemanticAssertion, Source, Tick,
};
use crate::sim::{self, metrics, Outcome, RunReport, Scenario, SimConfig, SimError, SimEvent, StepContext, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutiveConfig {
    /// A task still active at this tick fails.
    pub ticks_max: Tick,
    pub planner: PlannerConfig,
    pub cues: CueConfig,
    pub geometry: GeometryConfig,
    pub sim: SimConfig,
}

impl Default for ExecutiveConfig {
    fn default() -> Self {
        Self {
            ticks_max: 20_000,
            planner: PlannerConfig::default(),
            cues: CueConfig::default(),
            geometry: GeometryConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Paused,
    Running,
    /// The task ended. Nothing more happens.
    Finished,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("task {0} is still active")]
    Busy(u64),
    #[error("the run has finished")]
    Finished,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Cue(#[from] CueError),
}

/// Externally visible state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStateView {
    pub tick: Tick,
    pub mode: Mode,
    pub robot_pose: Point2<f64>,
    pub holding: Option<String>,
    pub task: Option<Task>,
    pub plan: Option<Plan>,
    pub graph: GraphSnapshot,
    pub log_len: usize,
}

pub struct Executive {
    world: World,
    graph: SceneGraph,
    planner: Planner,
    config: ExecutiveConfig,
    client: Option<Box<dyn InterpreterClient>>,
    surfaces: Vec<SurfaceModel>,
    rooms: Vec<RoomModel>,
    task: Option<Task>,
    plan: Option<Plan>,
    asked: BTreeSet<NodeId>,
    holding: bool,
    next_task: u64,
    mode: Mode,
    log: Vec<SimEvent>,
}

/// Outcome of an action, as far as the task is concerned.
enum Verdict {
    Done,
    Failed(String),
}

impl Executive {
    /// Starts paused. A scenario command, if any, is issued at tick 0.
    pub fn new(setup: sim::Setup, config: ExecutiveConfig) -> Result<Self, ExecError> {
        let find = |label: &str| setup.graph.find_nodes(label).into_iter().next();
        let surfaces = setup
            .world
            .furniture
            .iter()
            .filter_map(|f| {
                Some(SurfaceModel {
                    furniture: find(&f.label)?,
                    footprint: f.footprint,
                    top_height: f.top_height,
                })
            })
            .collect();
        let rooms = setup
            .world
            .rooms
            .iter()
            .filter_map(|r| {
                Some(RoomModel {
                    room: find(&r.name)?,
                    polygon: r.polygon.clone(),
                })
            })
            .collect();
        let mut exec = Self {
            world: setup.world,
            graph: setup.graph,
            planner: Planner::new(setup.priors, config.planner.clone()),
            config,
            client: None,
            surfaces,
            rooms,
            task: None,
            plan: None,
            asked: BTreeSet::new(),
            holding: false,
            next_task: 1,
            mode: Mode::Paused,
            log: Vec::new(),
        };
        if let Some(command) = setup.command {
            exec.issue_command(&command)?;
        }
        Ok(exec)
    }

    /// Routes text cues through `client` (with grammar fallback).
    pub fn with_client(mut self, client: Box<dyn InterpreterClient>) -> Self {
        self.client = Some(client);
        self
    }

    pub fn log(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn graph(&self) -> &SceneGraph {
        &self.graph
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn task(&self) -> Option<&Task> {
        self.task.as_ref()
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tick_count(&self) -> Tick {
        self.world.tick
    }

    /// Paused and running toggle freely; a finished run stays finished.
    pub fn set_mode(&mut self, mode: Mode) {
        if self.mode != Mode::Finished {
            self.mode = mode;
        }
    }

    pub fn state(&self) -> RunStateView {
        RunStateView {
            tick: self.world.tick,
            mode: self.mode,
            robot_pose: self.world.robot.position,
            holding: self.world.held_object().map(|o| o.label.clone()),
            task: self.task.clone(),
            plan: self.plan.clone(),
            graph: self.graph.snapshot(),
            log_len: self.log.len(),
        }
    }

    fn active_task(&self) -> Option<&Task> {
        self.task.as_ref().filter(|t| t.is_active())
    }

    pub fn issue_command(&mut self, text: &str) -> Result<&Task, ExecError> {
        if self.mode == Mode::Finished {
            return Err(ExecError::Finished);
        }
        if let Some(t) = self.active_task() {
            return Err(ExecError::Busy(t.id));
        }
        let now = self.world.tick;
        let task = parse_command(text, self.next_task, now)?;
        self.next_task += 1;
        self.asked.clear();
        self.holding = false;
        self.log.push(SimEvent::TaskIssued { tick: now, task: task.clone() });
        self.task = Some(task);
        match self.planner.plan(self.task.as_ref().expect("just set"), &self.graph, now, &self.asked) {
            Ok(plan) => {
                self.log.push(SimEvent::PlanCreated { tick: now, plan: plan.clone() });
                self.plan = Some(plan);
            }
            Err(e) => self.finish(now, Verdict::Failed(e.to_string())),
        }
        Ok(self.task.as_ref().expect("just set"))
    }

    /// Queues a live cue; it is delivered on the next simulated tick.
    pub fn inject_cue(&mut self, cue: Cue) -> Result<SimEvent, ExecError> {
        if self.mode == Mode::Finished {
            return Err(ExecError::Finished);
        }
        Ok(self.world.inject_cue(cue)?)
    }

    fn finish(&mut self, tick: Tick, verdict: Verdict) {
        let Some(task) = self.task.as_mut().filter(|t| t.is_active()) else {
            return;
        };
        let id = task.id;
        match verdict {
            Verdict::Done => {
                task.status = TaskStatus::Succeeded;
                self.log.push(SimEvent::TaskSucceeded { tick, task: id });
            }
            Verdict::Failed(reason) => {
                task.status = TaskStatus::Failed;
                tracing::info!(task = id, %reason, "task failed");
                self.log.push(SimEvent::TaskFailed { tick, task: id, reason });
            }
        }
        self.mode = Mode::Finished;
    }

    fn apply(&mut self, a: &SemanticAssertion, tick: Tick, delta: &mut GraphDelta) -> Option<GraphDelta> {
        match self.graph.apply_assertion(a) {
            Ok(d) => {
                delta.merge(d.clone());
                Some(d)
            }
            Err(e) => {
                tracing::debug!(assertion = %a, error = %e, "assertion rejected");
                self.log.push(SimEvent::AssertionRejected {
                    tick,
                    assertion: a.clone(),
                    reason: e.to_string(),
                });
                None
            }
        }
    }

    /// Association then relation extraction. Returns whether the task
    /// object's believed location changed.
    fn perceive(&mut self, obs: &GeometricObservation, tick: Tick, delta: &mut GraphDelta) -> bool {
        let mut local = GraphDelta::empty(tick);
        for d in &obs.detections {
            match geometry::associate_detection(d, &mut self.graph, tick, &self.config.geometry) {
                Ok((_, dd)) => local.merge(dd),
                Err(e) => tracing::debug!(label = %d.label, error = %e, "detection not associated"),
            }
        }
        let assertions = geometry::extract_relations(obs, &self.graph, &self.surfaces, &self.rooms, &self.config.geometry);
        for a in &assertions {
            if let Some(d) = self.apply(a, tick, delta) {
                local.merge(d);
            }
        }
        let relevant = self.active_task().is_some_and(|t| is_relevant(&local, t));
        delta.merge(local);
        relevant
    }

    fn interpret_cue(&mut self, cue: &Cue, tick: Tick, delta: &mut GraphDelta) -> bool {
        if let Cue::GeometricObservation(obs) = cue {
            return self.perceive(obs, tick, delta);
        }
        let task = self.active_task().cloned();
        let ctx = InterpretContext {
            graph: &self.graph,
            task: task.as_ref(),
            now: tick,
            config: &self.config.cues,
        };
        let mut decision = match &self.client {
            Some(client) => cues::interpret_with_client(client.as_ref(), cue, &ctx),
            None => cues::interpret(cue, &ctx),
        };
        if let Cue::Written { seen_at, .. } = cue {
            for a in &mut decision.assertions {
                a.object_hint.get_or_insert(*seen_at);
            }
        }
        self.log.push(SimEvent::CueInterpreted {
            tick,
            decision: decision.clone(),
        });
        if !decision.update_graph {
            return false;
        }
        let mut local = GraphDelta::empty(tick);
        for a in &decision.assertions {
            if let Some(d) = self.apply(a, tick, delta) {
                local.merge(d);
            }
        }
        decision.replan || task.as_ref().is_some_and(|t| is_relevant(&local, t))
    }

    fn robot_point(&self, z: f64) -> Point3<f64> {
        Point3::new(self.world.robot.position.x, self.world.robot.position.y, z)
    }

    /// Bookkeeping for a finished action; `Some` ends the task.
    fn completed(&mut self, action: &Action, outcome: Outcome, reason: Option<String>, tick: Tick, delta: &mut GraphDelta) -> Option<Verdict> {
        if outcome == Outcome::Preempted {
            return None;
        }
        let is_current = self.plan.as_ref().and_then(Plan::current) == Some(action);
        if outcome == Outcome::Failed {
            return match action {
                Action::QueryHuman { .. } => {
                    if is_current {
                        self.plan.as_mut().expect("current plan").cursor += 1;
                    }
                    None
                }
                _ => Some(Verdict::Failed(format!(
                    "{} failed: {}",
                    serde_json::to_string(action).expect("actions serialize"),
                    reason.unwrap_or_default()
                ))),
            };
        }
        if is_current {
            self.plan.as_mut().expect("current plan").cursor += 1;
        }
        let object = self.task.as_ref()?.object_label.clone();
        let hint = self.robot_point(0.5);
        let held = |landmark: String, tick| {
            let mut a = SemanticAssertion::new(object.clone(), Relation::HeldBy, landmark, 1.0, Source::Geometric, tick);
            a.subject_hint = Some(hint);
            a
        };
        match action {
            Action::Pick { .. } => {
                self.holding = true;
                let a = held(crate::sim::ROBOT.to_string(), tick);
                self.apply(&a, tick, delta);
                None
            }
            Action::Handover { human } => {
                self.holding = false;
                if let Some(label) = self.graph.node(*human).map(|n| n.normalized_label.clone()) {
                    self.apply(&held(label, tick), tick, delta);
                }
                Some(Verdict::Done)
            }
            Action::Place { target } => {
                self.holding = false;
                if let Some(label) = self.graph.node(*target).map(|n| n.normalized_label.clone()) {
                    let mut a = SemanticAssertion::new(object, Relation::On, label, 1.0, Source::Geometric, tick);
                    a.subject_hint = Some(hint);
                    self.apply(&a, tick, delta);
                }
                Some(Verdict::Done)
            }
            _ => None,
        }
    }

    /// The plan has run out of places to look and would deliver nothing.
    fn futile(&self) -> Option<String> {
        let task = self.active_task()?;
        let plan = self.plan.as_ref()?;
        if plan.is_exhausted() {
            return Some("plan finished without delivering".into());
        }
        let searching = !plan.actions.iter().any(|a| matches!(a, Action::Pick { .. }));
        let delivering = plan.cursor + 2 >= plan.actions.len();
        (searching && delivering && !self.holding).then(|| format!("searched every candidate without finding the {}", task.object_label))
    }

    /// Simulates one tick. Returns the events it appended.
    pub fn tick(&mut self) -> &[SimEvent] {
        let start = self.log.len();
        if self.mode == Mode::Finished {
            return &self.log[start..];
        }
        let action = self.active_task().and(self.plan.as_ref()).and_then(Plan::current).cloned();
        let task_object = self.active_task().map(|t| t.object_label.clone());
        let ctx = StepContext {
            task_object: task_object.as_deref(),
        };
        let t = self.world.tick;
        let events = self.world.step(action.as_ref(), &self.graph, &ctx, &self.config.sim);

        let mut delta = GraphDelta::empty(t);
        let mut replan = false;
        let mut verdict = None;
        for event in events {
            self.log.push(event.clone());
            match event {
                SimEvent::CueDelivered { cue, .. } => replan |= self.interpret_cue(&cue, t, &mut delta),
                SimEvent::Detected { observation, .. } => replan |= self.perceive(&observation, t, &mut delta),
                SimEvent::QueryAsked { human, .. } => {
                    self.asked.insert(human);
                }
                SimEvent::ActionCompleted {
                    action, outcome, reason, ..
                } => {
                    if let Some(v) = self.completed(&action, outcome, reason, t, &mut delta) {
                        verdict.get_or_insert(v);
                    }
                }
                _ => {}
            }
        }

        replan &= verdict.is_none() && self.active_task().is_some();
        if replan {
            if let Some(robot) = self.graph.robot().map(|r| r.id) {
                let pose = Pose::at(self.world.robot.position.x, self.world.robot.position.y, 0.0);
                if let Ok(d) = self.graph.set_pose(robot, pose, t) {
                    delta.merge(d);
                }
            }
        }
        self.graph.refresh_delta(&mut delta);
        if !delta.is_empty() {
            self.log.push(SimEvent::GraphDelta { tick: t, delta });
        }

        if replan {
            let task = self.task.clone().expect("active task");
            let old = self.plan.clone().expect("active plan");
            match self.planner.replan(&task, &self.graph, &old, t, &self.asked) {
                Ok(plan) => {
                    tracing::debug!(revision = plan.revision, "plan revised");
                    self.log.push(SimEvent::PlanRevised { tick: t, plan: plan.clone() });
                    self.plan = Some(plan);
                }
                Err(e) => verdict = Some(Verdict::Failed(e.to_string())),
            }
        }
        if verdict.is_none() {
            if let Some(reason) = self.futile() {
                verdict = Some(Verdict::Failed(reason));
            } else if self.active_task().is_some() && self.world.tick >= self.config.ticks_max {
                verdict = Some(Verdict::Failed(format!("tick limit {} reached", self.config.ticks_max)));
            }
        }
        if let Some(v) = verdict {
            self.finish(t, v);
        }
        &self.log[start..]
    }

    /// Ticks until the task ends (or, with no task, until the tick limit).
    pub fn run_to_end(&mut self) {
        self.set_mode(Mode::Running);
        while self.mode != Mode::Finished && self.world.tick < self.config.ticks_max {
            self.tick();
        }
    }

    pub fn report(&self) -> Result<RunReport, SimError> {
        metrics(&self.log)
    }

    /// The log as line-delimited JSON.
    pub fn log_jsonl(&self) -> String {
        to_jsonl(&self.log)
    }
}

pub fn to_jsonl(events: &[SimEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Rebuilds the final belief graph from the initial one and a log.
pub fn replay(initial: SceneGraph, events: &[SimEvent]) -> Result<SceneGraph, GraphError> {
    let mut graph = initial;
    for e in events {
        if let SimEvent::GraphDelta { delta, .. } = e {
            graph.apply_delta(delta)?;
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub ticks_max: Option<Tick>,
    pub no_cues: bool,
}

pub struct HeadlessRun {
    pub report: RunReport,
    pub executive: Executive,
}

/// Loads, runs to completion and summarizes.
pub fn run_headless(scenario: &Scenario, options: &RunOptions) -> Result<HeadlessRun, SimError> {
    let mut scenario = scenario.clone();
    if options.no_cues {
        scenario = scenario.without_cues();
    }
    if let Some(seed) = options.seed {
        scenario.seed = seed;
    }
    if scenario.command.is_none() {
        return Err(SimError::Invalid("a headless run needs a command".into()));
    }
    let mut config = ExecutiveConfig::default();
    if let Some(limit) = options.ticks_max {
        config.ticks_max = limit;
    }
    let setup = scenario.build()?;
    let mut executive = Executive::new(setup, config).map_err(|e| SimError::Invalid(e.to_string()))?;
    executive.run_to_end();
    let report = executive.report()?;
    Ok(HeadlessRun { report, executive })
}
