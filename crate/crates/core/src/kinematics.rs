//! Polynomial profiles, Frenet rollouts and finite-difference state derivation.
//!
//! Stored speed, acceleration, heading and yaw rate of every trajectory are
//! derived from consecutive positions, so a trajectory is kinematically
//! consistent by construction.

use crate::geometry::{wrap_angle, LaneFrame, Pose, Vec2};
use serde::{Deserialize, Serialize};

/// Position displacement below which the previous heading is kept.
const STILL_EPS: f64 = 1e-6;

/// `x(t) = c0 + c1 t + ... + c5 t^5` matching position, velocity and
/// acceleration at both ends.
#[derive(Debug, Clone, Copy)]
pub struct QuinticPolynomial {
    c: [f64; 6],
}

impl QuinticPolynomial {
    pub fn new(x0: f64, v0: f64, a0: f64, x1: f64, v1: f64, a1: f64, horizon: f64) -> Self {
        let t = horizon;
        let (t2, t3) = (t * t, t * t * t);
        let a = x1 - (x0 + v0 * t + 0.5 * a0 * t2);
        let b = v1 - (v0 + a0 * t);
        let c = a1 - a0;
        Self {
            c: [
                x0,
                v0,
                0.5 * a0,
                (20.0 * a - 8.0 * b * t + c * t2) / (2.0 * t3),
                (-30.0 * a + 14.0 * b * t - 2.0 * c * t2) / (2.0 * t3 * t),
                (12.0 * a - 6.0 * b * t + c * t2) / (2.0 * t3 * t2),
            ],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &k| acc * t + k)
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let c = &self.c;
        c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])))
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let c = &self.c;
        2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]))
    }
}

/// Quartic matching start position/velocity/acceleration and end
/// velocity/acceleration (free end position).
#[derive(Debug, Clone, Copy)]
pub struct QuarticPolynomial {
    c: [f64; 5],
}

impl QuarticPolynomial {
    pub fn new(x0: f64, v0: f64, a0: f64, v1: f64, a1: f64, horizon: f64) -> Self {
        let t = horizon;
        let b = v1 - v0 - a0 * t;
        let c = a1 - a0;
        Self {
            c: [
                x0,
                v0,
                0.5 * a0,
                (3.0 * b - c * t) / (3.0 * t * t),
                (c * t - 2.0 * b) / (4.0 * t * t * t),
            ],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &k| acc * t + k)
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let c = &self.c;
        c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]))
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let c = &self.c;
        2.0 * c[2] + t * (6.0 * c[3] + t * 12.0 * c[4])
    }
}

/// One planned state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub yaw_rate: f64,
}

impl PlanState {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }
}

/// One lattice candidate (or a demo scored through the same pipeline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub states: Vec<PlanState>,
    pub target_speed: f64,
    pub lateral_offset: f64,
}

impl TrajectorySample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = Pose> + '_ {
        self.states.iter().map(PlanState::pose)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.states.iter().map(PlanState::pos)
    }

    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.speed)
    }

    /// Largest deviation between stored and finite-difference speed and
    /// acceleration, given the state the trajectory departs from.
    pub fn kinematic_residual(&self, start: &MotionState, dt: f64) -> f64 {
        let mut prev_pos = start.pos;
        let mut prev_speed = start.speed;
        let mut worst: f64 = 0.0;
        for s in &self.states {
            let v = s.pos().dist(prev_pos) / dt;
            let a = (s.speed - prev_speed) / dt;
            worst = worst.max((v - s.speed).abs()).max((a - s.accel).abs());
            prev_pos = s.pos();
            prev_speed = s.speed;
        }
        worst
    }
}

/// The state a trajectory departs from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub pos: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
}

/// Derives heading, speed, acceleration and yaw rate from positions.
pub fn states_from_positions(start: &MotionState, positions: &[Vec2], dt: f64) -> Vec<PlanState> {
    let mut prev = (start.pos, start.heading, start.speed);
    positions
        .iter()
        .map(|&p| {
            let delta = p - prev.0;
            let dist = delta.norm();
            let heading = if dist > STILL_EPS { delta.angle() } else { prev.1 };
            let speed = dist / dt;
            let state = PlanState {
                x: p.x,
                y: p.y,
                heading,
                speed,
                accel: (speed - prev.2) / dt,
                yaw_rate: wrap_angle(heading - prev.1) / dt,
            };
            prev = (p, heading, speed);
            state
        })
        .collect()
}

/// Frenet-frame initial conditions of a motion state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetStart {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

pub fn frenet_start(frame: &LaneFrame, state: &MotionState) -> FrenetStart {
    let (s, d) = frame.project(state.pos);
    let rel = wrap_angle(state.heading - frame.heading_at(s));
    let (sin, cos) = rel.sin_cos();
    FrenetStart {
        s,
        s_dot: state.speed * cos,
        s_ddot: state.accel * cos,
        d,
        d_dot: state.speed * sin,
        d_ddot: state.accel * sin,
    }
}

/// Quartic longitudinal / quintic lateral rollout, returning `steps`
/// positions at `dt, 2 dt, ...`. Arc length never decreases.
pub fn frenet_rollout(
    frame: &LaneFrame,
    start: &FrenetStart,
    target_speed: f64,
    target_offset: f64,
    steps: usize,
    dt: f64,
) -> Vec<Vec2> {
    let horizon = steps as f64 * dt;
    let lon = QuarticPolynomial::new(start.s, start.s_dot, start.s_ddot, target_speed, 0.0, horizon);
    let lat = QuinticPolynomial::new(start.d, start.d_dot, start.d_ddot, target_offset, 0.0, 0.0, horizon);
    let mut s_prev = start.s;
    (1..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let s = lon.eval(t).max(s_prev);
            s_prev = s;
            frame.point_at(s, lat.eval(t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline;

    #[test]
    fn quintic_meets_boundary_conditions() {
        let q = QuinticPolynomial::new(1.0, 2.0, 0.5, -3.0, 0.25, -1.0, 3.0);
        assert!((q.eval(0.0) - 1.0).abs() < 1e-12);
        assert!((q.velocity(0.0) - 2.0).abs() < 1e-12);
        assert!((q.acceleration(0.0) - 0.5).abs() < 1e-12);
        assert!((q.eval(3.0) + 3.0).abs() < 1e-10);
        assert!((q.velocity(3.0) - 0.25).abs() < 1e-10);
        assert!((q.acceleration(3.0) + 1.0).abs() < 1e-10);
    }

    #[test]
    fn quartic_meets_boundary_conditions() {
        let q = QuarticPolynomial::new(5.0, 10.0, -0.4, 7.0, 0.0, 3.0);
        assert!((q.eval(0.0) - 5.0).abs() < 1e-12);
        assert!((q.velocity(0.0) - 10.0).abs() < 1e-12);
        assert!((q.acceleration(0.0) + 0.4).abs() < 1e-12);
        assert!((q.velocity(3.0) - 7.0).abs() < 1e-10);
        assert!(q.acceleration(3.0).abs() < 1e-10);
    }

    #[test]
    fn derived_states_are_consistent() {
        let frame = LaneFrame::new(&Polyline(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)])).unwrap();
        let start = MotionState {
            pos: Vec2::new(2.0, 0.3),
            heading: 0.05,
            speed: 8.0,
            accel: 0.5,
        };
        let fs = frenet_start(&frame, &start);
        let pts = frenet_rollout(&frame, &fs, 10.0, 1.5, 30, 0.1);
        let states = states_from_positions(&start, &pts, 0.1);
        let traj = TrajectorySample {
            states,
            target_speed: 10.0,
            lateral_offset: 1.5,
        };
        assert!(traj.kinematic_residual(&start, 0.1) < 1e-9);
        let last = traj.states.last().unwrap();
        assert!((last.y - 1.5).abs() < 1e-9);
        assert!((last.speed - 10.0).abs() < 0.1);
    }
}
