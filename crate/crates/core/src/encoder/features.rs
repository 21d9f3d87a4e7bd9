//! Fixed-length scene description consumed by every risk head.
//!
//! All quantities are expressed in the frame of the reference lane nearest
//! to the ego vehicle, so the vector is invariant to rigid motions of the
//! whole scene and to the order of agents. Distances are encoded as
//! proximities `exp(-d / 20 m)`, which are zero when nothing is present.

use crate::geometry::{wrap_angle, LaneFrame, Vec2};
use crate::scenario::{LightState, Scenario};

pub const FEATURE_DIM: usize = 32;

/// Slot layout of [`SceneFeatures`].
pub mod slot {
    pub const EGO_SPEED: usize = 0;
    pub const EGO_ACCEL: usize = 1;
    pub const EGO_YAW_RATE: usize = 2;
    pub const LANE_OFFSET: usize = 3;
    pub const HEADING_ERROR: usize = 4;
    pub const CURVATURE: usize = 5;
    pub const CURVATURE_15: usize = 6;
    pub const CURVATURE_30: usize = 7;
    pub const LANE_LEFT: usize = 8;
    pub const LANE_RIGHT: usize = 9;
    pub const OBSTACLE_AHEAD: usize = 10;
    pub const OBSTACLE_PROXIMITY: usize = 11;
    pub const OBSTACLE_LATERAL: usize = 12;
    pub const OBSTACLE_NEAREST: usize = 13;
    pub const LIGHT_RED: usize = 14;
    pub const LIGHT_YELLOW: usize = 15;
    pub const LIGHT_GREEN: usize = 16;
    pub const STOP_PROXIMITY: usize = 17;
    pub const STOP_DECEL: usize = 18;
    pub const AGENT_COUNT: usize = 19;
    pub const AGENTS_NEAR: usize = 20;
    pub const AGENT_MEAN_PROXIMITY: usize = 21;
    pub const AGENT_MAX_PROXIMITY: usize = 22;
    pub const AGENT_MEAN_SPEED: usize = 23;
    pub const LEAD_PRESENT: usize = 24;
    pub const LEAD_PROXIMITY: usize = 25;
    pub const LEAD_REL_SPEED: usize = 26;
    pub const CUT_IN_PRESENT: usize = 27;
    pub const CUT_IN_PROXIMITY: usize = 28;
    pub const CUT_IN_LAT_SPEED: usize = 29;
    pub const CUT_IN_REL_SPEED: usize = 30;
    pub const AGENTS_BEHIND: usize = 31;
}

const PROXIMITY_SCALE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures(pub [f64; FEATURE_DIM]);

impl SceneFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn proximity(d: f64) -> f64 {
    (-d.max(0.0) / PROXIMITY_SCALE).exp()
}

/// Frame of the lane nearest to `p`.
pub(crate) fn nearest_lane_frame(scenario: &Scenario, p: Vec2) -> Option<LaneFrame> {
    scenario
        .map
        .lanes
        .iter()
        .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
        .and_then(LaneFrame::new)
}

pub fn extract_features(scenario: &Scenario) -> SceneFeatures {
    use slot::*;
    let mut f = [0.0; FEATURE_DIM];
    let motion = scenario.ego_motion();
    let ego = scenario.ego();
    f[EGO_SPEED] = ego.speed / 10.0;
    f[EGO_ACCEL] = motion.accel;
    f[EGO_YAW_RATE] = ego.yaw_rate;

    let Some(frame) = nearest_lane_frame(scenario, motion.pos) else {
        return SceneFeatures(f);
    };
    let (s0, d0) = frame.project(motion.pos);
    f[LANE_OFFSET] = d0;
    f[HEADING_ERROR] = wrap_angle(ego.heading - frame.heading_at(s0));
    f[CURVATURE] = 10.0 * frame.curvature_at(s0, 5.0);
    f[CURVATURE_15] = 10.0 * frame.curvature_at(s0 + 15.0, 5.0);
    f[CURVATURE_30] = 10.0 * frame.curvature_at(s0 + 30.0, 5.0);

    for lane in &scenario.map.lanes {
        let Some(other) = LaneFrame::new(lane) else { continue };
        let (_, d) = frame.project(other.point_at(other.project(motion.pos).0, 0.0));
        let rel = d - d0;
        if (rel - 3.0).abs() < 1.0 || (rel > 2.0 && rel < 4.5) {
            f[LANE_LEFT] = 1.0;
        }
        if (rel + 3.0).abs() < 1.0 || (rel < -2.0 && rel > -4.5) {
            f[LANE_RIGHT] = 1.0;
        }
    }

    // static obstacles
    let mut nearest_obstacle = f64::INFINITY;
    let mut ahead: Option<(f64, f64)> = None;
    for poly in &scenario.map.obstacles {
        let n = poly.0.len() as f64;
        let centroid = poly.0.iter().fold(Vec2::ZERO, |acc, &p| acc + p) * (1.0 / n);
        nearest_obstacle = nearest_obstacle.min(poly.signed_distance(motion.pos).max(0.0));
        let (s, d) = frame.project(centroid);
        let (ds, dd) = (s - s0, d - d0);
        if ds > 0.0 && dd.abs() < 2.5 && ahead.map_or(true, |(best, _)| ds < best) {
            ahead = Some((ds, dd));
        }
    }
    if nearest_obstacle.is_finite() {
        f[OBSTACLE_NEAREST] = proximity(nearest_obstacle);
    }
    if let Some((ds, dd)) = ahead {
        f[OBSTACLE_AHEAD] = 1.0;
        f[OBSTACLE_PROXIMITY] = proximity(ds);
        f[OBSTACLE_LATERAL] = dd / 3.0;
    }

    // nearest stop line ahead
    let mut light: Option<(f64, LightState)> = None;
    for l in &scenario.map.lights {
        let mid = (l.line[0] + l.line[1]) * 0.5;
        let ds = frame.project(mid).0 - s0;
        if ds > 0.0 && light.map_or(true, |(best, _)| ds < best) {
            light = Some((ds, l.state));
        }
    }
    if let Some((ds, state)) = light {
        let k = match state {
            LightState::Red => LIGHT_RED,
            LightState::Yellow => LIGHT_YELLOW,
            LightState::Green => LIGHT_GREEN,
        };
        f[k] = 1.0;
        f[STOP_PROXIMITY] = proximity(ds);
        if state != LightState::Green {
            f[STOP_DECEL] = (ego.speed * ego.speed / (2.0 * ds.max(1.0))).min(10.0) / 5.0;
        }
    }

    // agents
    let n = scenario.agents.len();
    if n > 0 {
        let mut near = 0usize;
        let mut behind = 0usize;
        let (mut prox_sum, mut prox_max, mut speed_sum) = (0.0, 0.0f64, 0.0);
        let mut lead: Option<(f64, f64)> = None;
        let mut cut_in: Option<(f64, f64, f64)> = None;
        for agent in &scenario.agents {
            let cur = agent.current();
            let dist = cur.pos().dist(motion.pos);
            let p = proximity(dist);
            prox_sum += p;
            prox_max = prox_max.max(p);
            speed_sum += cur.speed;
            if dist < 30.0 {
                near += 1;
            }
            let (s, d) = frame.project(cur.pos());
            let (ds, dd) = (s - s0, d - d0);
            if ds < 0.0 {
                behind += 1;
            }
            let h = &agent.history;
            let prev_d = if h.len() >= 2 {
                frame.project(h[h.len() - 2].pos()).1
            } else {
                d
            };
            let lat_speed = (d - prev_d) / scenario.dt;
            let toward = -dd.signum() * lat_speed;
            if ds > 0.0 && dd.abs() < 1.8 && lead.map_or(true, |(best, _)| ds < best) {
                lead = Some((ds, cur.speed - ego.speed));
            } else if ds > 0.0 && ds < 40.0 && toward > 0.3 && cut_in.map_or(true, |(best, _, _)| ds < best) {
                cut_in = Some((ds, toward, cur.speed - ego.speed));
            }
        }
        let nf = n as f64;
        f[AGENT_COUNT] = nf / 5.0;
        f[AGENTS_NEAR] = near as f64 / 5.0;
        f[AGENT_MEAN_PROXIMITY] = prox_sum / nf;
        f[AGENT_MAX_PROXIMITY] = prox_max;
        f[AGENT_MEAN_SPEED] = speed_sum / nf / 10.0;
        f[AGENTS_BEHIND] = behind as f64 / 5.0;
        if let Some((ds, rel_v)) = lead {
            f[LEAD_PRESENT] = 1.0;
            f[LEAD_PROXIMITY] = proximity(ds);
            f[LEAD_REL_SPEED] = rel_v / 10.0;
        }
        if let Some((ds, lat, rel_v)) = cut_in {
            f[CUT_IN_PRESENT] = 1.0;
            f[CUT_IN_PROXIMITY] = proximity(ds);
            f[CUT_IN_LAT_SPEED] = lat;
            f[CUT_IN_REL_SPEED] = rel_v / 10.0;
        }
    }
    SceneFeatures(f)
}

#[cfg(test)]
mod tests {
    use super::slot::*;
    use super::*;
    use crate::scenario::{generate_scenarios, ScenarioKind};

    #[test]
    fn no_agents_zero_density() {
        let mut s = generate_scenarios(ScenarioKind::Straight, 1, 2).unwrap().remove(0);
        s.agents.clear();
        let f = extract_features(&s);
        for k in AGENT_COUNT..=AGENTS_BEHIND {
            assert_eq!(f.0[k], 0.0, "slot {k}");
        }
    }

    #[test]
    fn agent_order_does_not_matter() {
        for s in generate_scenarios(ScenarioKind::Straight, 6, 11).unwrap() {
            let mut r = s.clone();
            r.agents.reverse();
            assert_eq!(extract_features(&s), extract_features(&r));
        }
    }

    #[test]
    fn finite_for_all_kinds() {
        for kind in ScenarioKind::ALL {
            for s in generate_scenarios(kind, 5, 1).unwrap() {
                assert!(extract_features(&s).0.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn red_light_and_obstacle_flags() {
        let s = generate_scenarios(ScenarioKind::RedLight, 1, 0).unwrap().remove(0);
        let f = extract_features(&s);
        assert_eq!(f.0[LIGHT_RED] + f.0[LIGHT_YELLOW], 1.0);
        assert!(f.0[STOP_PROXIMITY] > 0.0);
        let s = generate_scenarios(ScenarioKind::BlockedLane, 1, 0).unwrap().remove(0);
        let f = extract_features(&s);
        assert_eq!(f.0[OBSTACLE_AHEAD], 1.0);
        assert!(f.0[LANE_LEFT] + f.0[LANE_RIGHT] >= 1.0);
    }
}
