//! Driving-context data model and its canonical JSON form.
//!
//! Array layouts: ego history rows are `[x, y, heading, speed, yaw_rate]`,
//! agent history rows `[x, y, heading, speed, length, width]`, and demo /
//! agent future rows `[x, y, heading, speed]`. Units are metres, radians
//! and seconds.

mod gen;

pub use gen::{generate_scenarios, generator_registry, ScenarioGenerator, ScenarioKind};

use crate::error::{Error, Result};
use crate::geometry::{ego_circles, Polygon, Polyline, Pose, Vec2, VehicleDims};
use crate::kinematics::{states_from_positions, MotionState, TrajectorySample};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;
pub const HISTORY_STEPS: usize = 15;
pub const FUTURE_STEPS: usize = 30;
pub const DEFAULT_DT: f64 = 0.1;

/// Ego footprint used throughout the pipeline.
pub const EGO_DIMS: VehicleDims = VehicleDims {
    length: 4.8,
    width: 1.8,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub history: usize,
    pub future: usize,
}

impl Default for Horizon {
    fn default() -> Self {
        Self {
            history: HISTORY_STEPS,
            future: FUTURE_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl From<[f64; 5]> for EgoState {
    fn from(a: [f64; 5]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            heading: a[2],
            speed: a[3],
            yaw_rate: a[4],
        }
    }
}

impl From<EgoState> for [f64; 5] {
    fn from(s: EgoState) -> Self {
        [s.x, s.y, s.heading, s.speed, s.yaw_rate]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

impl From<[f64; 6]> for AgentState {
    fn from(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            heading: a[2],
            speed: a[3],
            length: a[4],
            width: a[5],
        }
    }
}

impl From<AgentState> for [f64; 6] {
    fn from(s: AgentState) -> Self {
        [s.x, s.y, s.heading, s.speed, s.length, s.width]
    }
}

impl AgentState {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct TrajPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl From<[f64; 4]> for TrajPoint {
    fn from(a: [f64; 4]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            heading: a[2],
            speed: a[3],
        }
    }
}

impl From<TrajPoint> for [f64; 4] {
    fn from(p: TrajPoint) -> Self {
        [p.x, p.y, p.heading, p.speed]
    }
}

impl TrajPoint {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: u64,
    pub history: Vec<AgentState>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub future: Vec<TrajPoint>,
}

impl AgentTrack {
    pub fn current(&self) -> &AgentState {
        self.history.last().expect("validated history is nonempty")
    }

    /// Oriented footprint at future step `t`.
    pub fn footprint_at(&self, t: usize) -> Option<Polygon> {
        let p = self.future.get(t)?;
        let cur = self.current();
        Some(Polygon::rectangle(p.pos(), p.heading, cur.length, cur.width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub line: [Vec2; 2],
    pub state: LightState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapContext {
    pub lanes: Vec<Polyline>,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
    #[serde(default)]
    pub lights: Vec<TrafficLight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub dt: f64,
    pub ego_history: Vec<EgoState>,
    pub agents: Vec<AgentTrack>,
    pub map: MapContext,
    pub demo: Vec<TrajPoint>,
}

impl Scenario {
    pub fn ego(&self) -> &EgoState {
        self.ego_history.last().expect("validated history is nonempty")
    }

    /// Current ego motion, with acceleration from the last two history speeds.
    pub fn ego_motion(&self) -> MotionState {
        let cur = self.ego();
        let accel = match self.ego_history.len() {
            n if n >= 2 => (cur.speed - self.ego_history[n - 2].speed) / self.dt,
            _ => 0.0,
        };
        MotionState {
            pos: Vec2::new(cur.x, cur.y),
            heading: cur.heading,
            speed: cur.speed,
            accel,
        }
    }

    pub fn horizon(&self) -> usize {
        self.demo.len()
    }

    /// The demo as a trajectory sample departing from the current ego state.
    pub fn demo_sample(&self) -> TrajectorySample {
        let positions: Vec<Vec2> = self.demo.iter().map(TrajPoint::pos).collect();
        let states = states_from_positions(&self.ego_motion(), &positions, self.dt);
        TrajectorySample {
            target_speed: self.demo.last().map_or(0.0, |p| p.speed),
            lateral_offset: 0.0,
            states,
        }
    }

    /// Agent futures, as `[agent][t] -> [x, y]`.
    pub fn agent_truths(&self) -> Vec<Vec<Vec2>> {
        self.agents
            .iter()
            .map(|a| a.future.iter().map(TrajPoint::pos).collect())
            .collect()
    }

    /// Smallest clearance between the ego footprint at `pose` and every
    /// static obstacle and agent footprint at future step `t`. Negative on
    /// overlap; `+inf` in an empty scene.
    pub fn clearance(&self, pose: Pose, t: usize) -> f64 {
        let circles = ego_circles(pose, EGO_DIMS.length, EGO_DIMS.width);
        let agents: Vec<Polygon> = self.agents.iter().filter_map(|a| a.footprint_at(t)).collect();
        circles
            .circles
            .iter()
            .flat_map(|c| {
                self.map
                    .obstacles
                    .iter()
                    .chain(agents.iter())
                    .map(move |poly| poly.signed_distance(c.center) - c.radius)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, horizon: Horizon) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::invariant(
                "schema",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invariant("dt", format!("must be > 0, found {}", self.dt)));
        }
        check_len("ego_history", self.ego_history.len(), horizon.history)?;
        check_len("demo", self.demo.len(), horizon.future)?;
        for (i, s) in self.ego_history.iter().enumerate() {
            check_finite(&format!("ego_history[{i}]"), &<[f64; 5]>::from(*s))?;
            check_heading(&format!("ego_history[{i}]"), s.heading)?;
        }
        for (i, p) in self.demo.iter().enumerate() {
            check_finite(&format!("demo[{i}]"), &<[f64; 4]>::from(*p))?;
            check_heading(&format!("demo[{i}]"), p.heading)?;
        }
        for (k, agent) in self.agents.iter().enumerate() {
            let field = format!("agents[{k}]");
            check_len(&format!("{field}.history"), agent.history.len(), horizon.history)?;
            if !agent.future.is_empty() {
                check_len(&format!("{field}.future"), agent.future.len(), horizon.future)?;
            }
            for (i, s) in agent.history.iter().enumerate() {
                let f = format!("{field}.history[{i}]");
                check_finite(&f, &<[f64; 6]>::from(*s))?;
                check_heading(&f, s.heading)?;
                if !(s.length > 0.0 && s.width > 0.0) {
                    return Err(Error::invariant(f, "length and width must be > 0"));
                }
            }
            for (i, p) in agent.future.iter().enumerate() {
                let f = format!("{field}.future[{i}]");
                check_finite(&f, &<[f64; 4]>::from(*p))?;
                check_heading(&f, p.heading)?;
            }
        }
        if self.map.lanes.is_empty() {
            return Err(Error::invariant("map.lanes", "at least one reference lane is required"));
        }
        for (i, lane) in self.map.lanes.iter().enumerate() {
            if lane.0.len() < 2 {
                return Err(Error::invariant(format!("map.lanes[{i}]"), "needs at least 2 points"));
            }
        }
        for (i, poly) in self.map.obstacles.iter().enumerate() {
            if poly.0.len() < 3 {
                return Err(Error::invariant(
                    format!("map.obstacles[{i}]"),
                    "needs at least 3 vertices",
                ));
            }
            if !poly.is_convex_ccw() {
                return Err(Error::invariant(
                    format!("map.obstacles[{i}]"),
                    "must be convex with counter-clockwise winding",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        scenario.validate(Horizon::default())?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }
}

fn check_len(field: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::invariant(
            field,
            format!("expected length {expected}, found {found}"),
        ));
    }
    Ok(())
}

fn check_finite(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invariant(field, "contains a non-finite value"))
    }
}

fn check_heading(field: &str, heading: f64) -> Result<()> {
    if heading > -PI && heading <= PI {
        Ok(())
    } else {
        Err(Error::invariant(field, format!("heading {heading} outside (-pi, pi]")))
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text, &path.display().to_string())
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json()).map_err(|e| Error::io(path, e))
}
