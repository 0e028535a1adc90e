use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::world::{Furniture, Holder, Human, Object, PendingCue, Room, World};
use super::SimError;
use crate::cues::Cue;
use crate::geometry::{containment_test, Footprint};
use crate::normalize_label;
use crate::planner::{parse_command, PriorTable};
use crate::scene_graph::{NodeId, Pose, Relation, SceneGraph, SemanticAssertion, Source};

/// Label of the human who issues commands and receives deliveries.
pub const OPERATOR: &str = "operator";
pub const ROBOT: &str = "robot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub name: String,
    pub polygon: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureSpec {
    pub label: String,
    pub room: String,
    pub footprint: Footprint,
    pub top_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub label: String,
    /// Furniture label, or room name for objects on the floor.
    pub support: String,
    /// Horizontal position; defaults to the centre of the supporting furniture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSpec {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Tick(u64),
    /// Fires right after the robot asks this human.
    OnQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureScript {
    pub trigger: Trigger,
    pub cue: Cue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    pub id: String,
    pub pose: Point2<f64>,
    #[serde(default)]
    pub knowledge: Vec<KnowledgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture_script: Option<GestureScript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub pose: Point2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCue {
    pub tick: u64,
    pub cue: Cue,
}

/// A scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub furniture: Vec<FurnitureSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub humans: Vec<HumanSpec>,
    pub robot: RobotSpec,
    /// Merged over the household defaults, label by label.
    #[serde(default)]
    pub priors: PriorTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default)]
    pub cue_script: Vec<ScriptedCue>,
    /// Canonical label → aliases.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub seed: u64,
}

/// Everything a run starts from.
#[derive(Debug, Clone)]
pub struct Setup {
    pub world: World,
    /// The robot's initial beliefs: the map, the people and itself.
    pub graph: SceneGraph,
    pub priors: PriorTable,
    pub command: Option<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| SimError::Schema {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Drops the cue script and every gesture script.
    pub fn without_cues(mut self) -> Self {
        self.cue_script.clear();
        for h in &mut self.humans {
            h.gesture_script = None;
        }
        self
    }

    fn room_named(&self, name: &str) -> Option<&RoomSpec> {
        let name = normalize_label(name);
        self.rooms.iter().find(|r| normalize_label(&r.name) == name)
    }

    fn furniture_labelled(&self, label: &str) -> Option<&FurnitureSpec> {
        let label = normalize_label(label);
        self.furniture.iter().find(|f| normalize_label(&f.label) == label)
    }

    /// Referential and geometric checks.
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::Invalid(msg));
        let dangling = |kind: &'static str, label: &str, referenced_by: String| {
            Err(SimError::DanglingLabel {
                kind,
                label: label.to_string(),
                referenced_by,
            })
        };
        if self.rooms.is_empty() {
            return invalid("scenario needs at least one room".into());
        }
        let mut names = BTreeSet::new();
        for r in &self.rooms {
            let name = normalize_label(&r.name);
            if name.is_empty() || !names.insert(name) {
                return invalid(format!("room name `{}` is empty or repeated", r.name));
            }
            containment_test(&Point2::origin(), &r.polygon).map_err(|e| SimError::Invalid(format!("room `{}`: {e}", r.name)))?;
        }
        let mut labels = BTreeSet::new();
        for f in &self.furniture {
            let label = normalize_label(&f.label);
            if label.is_empty() || !labels.insert(label.clone()) || names.contains(&label) {
                return invalid(format!("furniture label `{}` is empty or repeated", f.label));
            }
            if !(f.footprint.area() > 0.0) || !(f.top_height >= 0.0) {
                return invalid(format!("furniture `{}` needs positive area and top height >= 0", f.label));
            }
            let Some(room) = self.room_named(&f.room) else {
                return dangling("room", &f.room, format!("furniture `{}`", f.label));
            };
            if !containment_test(&f.footprint.center(), &room.polygon)? {
                return invalid(format!("furniture `{}` is not inside room `{}`", f.label, f.room));
            }
        }
        for o in &self.objects {
            if normalize_label(&o.label).is_empty() {
                return invalid("object with empty label".into());
            }
            if let Some(f) = self.furniture_labelled(&o.support) {
                if let Some(p) = o.position {
                    if !f.footprint.contains(p.x, p.y) {
                        return invalid(format!("object `{}` is not over `{}`", o.label, f.label));
                    }
                }
            } else if let Some(room) = self.room_named(&o.support) {
                match o.position {
                    Some(p) if containment_test(&p, &room.polygon)? => {}
                    _ => return invalid(format!("object `{}` on the floor of `{}` needs a position inside it", o.label, room.name)),
                }
            } else {
                return dangling("support", &o.support, format!("object `{}`", o.label));
            }
        }
        let object_labels: BTreeSet<String> = self.objects.iter().map(|o| normalize_label(&o.label)).collect();
        let mut ids = BTreeSet::new();
        for h in &self.humans {
            let id = normalize_label(&h.id);
            if id.is_empty() || !ids.insert(id) {
                return invalid(format!("human id `{}` is empty or repeated", h.id));
            }
            for k in &h.knowledge {
                if !object_labels.contains(&normalize_label(&k.subject)) {
                    return dangling("object", &k.subject, format!("knowledge of `{}`", h.id));
                }
                if self.furniture_labelled(&k.object).is_none() && self.room_named(&k.object).is_none() {
                    return dangling("place", &k.object, format!("knowledge of `{}`", h.id));
                }
            }
            if let Some(script) = &h.gesture_script {
                if !matches!(script.cue, Cue::Gesture { .. }) {
                    return invalid(format!("gesture script of `{}` holds a {} cue", h.id, script.cue.kind()));
                }
                script.cue.validate()?;
            }
        }
        for s in &self.cue_script {
            s.cue.validate()?;
        }
        if !self.rooms.iter().any(|r| containment_test(&self.robot.pose, &r.polygon).unwrap_or(false)) {
            return invalid("robot starts outside every room".into());
        }
        if let Some(command) = &self.command {
            parse_command(command, 0, 0).map_err(|e| SimError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Validates and builds the world and the robot's initial beliefs.
    pub fn build(&self) -> Result<Setup, SimError> {
        self.validate()?;

        let mut humans: Vec<HumanSpec> = self.humans.clone();
        if !humans.iter().any(|h| normalize_label(&h.id) == OPERATOR) {
            humans.push(HumanSpec {
                id: OPERATOR.into(),
                pose: self.robot.pose,
                knowledge: Vec::new(),
                gesture_script: None,
            });
        }

        let mut graph = SceneGraph::default();
        for (canonical, aliases) in &self.synonyms {
            for alias in aliases {
                graph.add_synonym(alias, canonical);
            }
        }
        let mut room_ids: BTreeMap<String, NodeId> = BTreeMap::new();
        for r in &self.rooms {
            let n = r.polygon.len() as f64;
            let cx = r.polygon.iter().map(|p| p.x).sum::<f64>() / n;
            let cy = r.polygon.iter().map(|p| p.y).sum::<f64>() / n;
            room_ids.insert(normalize_label(&r.name), graph.add_room(&r.name, Pose::at(cx, cy, 0.0), 0));
        }
        for f in &self.furniture {
            let c = f.footprint.center();
            let room = room_ids[&normalize_label(&f.room)];
            graph.add_furniture(&f.label, Pose::at(c.x, c.y, f.top_height), room, 0)?;
        }
        for h in &humans {
            graph.add_human(&h.id, Pose::at(h.pose.x, h.pose.y, 0.0), 0);
        }
        graph.add_robot(ROBOT, Pose::at(self.robot.pose.x, self.robot.pose.y, 0.0), 0);

        let world = World {
            rooms: self
                .rooms
                .iter()
                .map(|r| Room {
                    name: normalize_label(&r.name),
                    polygon: r.polygon.clone(),
                })
                .collect(),
            furniture: self
                .furniture
                .iter()
                .map(|f| Furniture {
                    label: normalize_label(&f.label),
                    room: normalize_label(&f.room),
                    footprint: f.footprint,
                    top_height: f.top_height,
                })
                .collect(),
            objects: self.objects.iter().map(|o| self.place_object(o)).collect(),
            humans: humans
                .iter()
                .map(|h| Human {
                    id: normalize_label(&h.id),
                    position: h.pose,
                    knowledge: h
                        .knowledge
                        .iter()
                        .map(|k| {
                            SemanticAssertion::from_source(
                                normalize_label(&k.subject),
                                k.relation,
                                normalize_label(&k.object),
                                Source::Verbal,
                                0,
                            )
                        })
                        .collect(),
                    on_query: h
                        .gesture_script
                        .as_ref()
                        .filter(|s| s.trigger == Trigger::OnQuery)
                        .map(|s| s.cue.clone()),
                })
                .collect(),
            robot: super::world::Robot {
                position: self.robot.pose,
                holding: None,
            },
            tick: 0,
            seed: self.seed,
            pending: Vec::new(),
            next_seq: 0,
            in_progress: None,
        };
        let mut world = world;
        for s in &self.cue_script {
            world.schedule(s.tick, s.cue.clone());
        }
        for h in &self.humans {
            if let Some(GestureScript {
                trigger: Trigger::Tick(tick),
                cue,
            }) = &h.gesture_script
            {
                world.schedule(*tick, cue.clone());
            }
        }

        Ok(Setup {
            world,
            graph,
            priors: PriorTable::household_defaults().merged_with(self.priors.clone()),
            command: self.command.clone(),
        })
    }

    fn place_object(&self, o: &ObjectSpec) -> Object {
        let label = normalize_label(&o.label);
        match self.furniture_labelled(&o.support) {
            Some(f) => {
                let xy = o.position.unwrap_or_else(|| f.footprint.center());
                Object {
                    label,
                    position: Point3::new(xy.x, xy.y, f.top_height + World::OBJECT_HALF_EXTENT),
                    holder: Holder::Support(normalize_label(&f.label)),
                }
            }
            None => {
                let xy = o.position.expect("validated floor position");
                Object {
                    label,
                    position: Point3::new(xy.x, xy.y, World::OBJECT_HALF_EXTENT),
                    holder: Holder::Support(normalize_label(&o.support)),
                }
            }
        }
    }
}

impl PendingCue {
    pub(super) fn new(due: u64, seq: u64, mut cue: Cue) -> Self {
        cue.set_tick(due);
        Self { due, seq, cue }
    }
}

/// Unit vector from `from` toward `to`; handy when writing gesture cues.
pub fn pointing(from: Point3<f64>, to: Point3<f64>) -> Vector3<f64> {
    (to - from).normalize()
}
