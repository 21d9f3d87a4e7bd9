//! Raw context distances measured on a multi-circle ego footprint.

mod polygon;
mod polyline;
mod vec2;

pub use polygon::Polygon;
pub use polyline::{LaneFrame, Polyline, PolylineIndex};
pub use vec2::{point_segment_distance, wrap_angle, Vec2};

use crate::error::{Error, Result};
use crate::kinematics::TrajectorySample;
use crate::scenario::{LightState, MapContext, TrafficLight};
use std::io::Write;

/// Value used for a channel that does not apply (no obstacle, no red light).
pub const SENTINEL: f64 = 1e4;

/// Channel order of [`DistanceMatrix`].
pub const CHANNELS: [&str; 3] = ["ref", "sdf", "tl"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub pos: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            pos: Vec2::new(x, y),
            heading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleDims {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// Circles covering the ego rectangle at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoCircles {
    pub heading: f64,
    pub circles: Vec<Circle>,
}

impl EgoCircles {
    /// True when every corner of the `dims` rectangle at `pose` lies in some circle.
    pub fn covers(&self, pose: Pose, dims: VehicleDims) -> bool {
        let rect = Polygon::rectangle(pose.pos, pose.heading, dims.length, dims.width);
        rect.vertices()
            .iter()
            .all(|&corner| self.circles.iter().any(|c| c.center.dist(corner) <= c.radius + 1e-9))
    }
}

/// `max(1, ceil(length / width))` circles of radius `width / 2 * sqrt(2)`,
/// centered on equal slices of the heading axis.
pub fn ego_circles(pose: Pose, length: f64, width: f64) -> EgoCircles {
    let n = ((length / width).ceil() as usize).max(1);
    let radius = width / 2.0 * std::f64::consts::SQRT_2;
    let axis = Vec2::from_angle(pose.heading);
    let slice = length / n as f64;
    let circles = (0..n)
        .map(|k| {
            let along = -length / 2.0 + slice * (k as f64 + 0.5);
            Circle {
                center: pose.pos + axis * along,
                radius,
            }
        })
        .collect();
    EgoCircles {
        heading: pose.heading,
        circles,
    }
}

/// Distance from the footprint to the nearest reference lane, minus radius.
pub fn distance_to_reference(circles: &EgoCircles, lanes: &[Polyline]) -> Result<f64> {
    if lanes.is_empty() {
        return Err(Error::NoReference);
    }
    Ok(circles
        .circles
        .iter()
        .flat_map(|c| lanes.iter().map(move |l| l.distance(c.center) - c.radius))
        .fold(f64::INFINITY, f64::min))
}

/// Signed distance to the nearest static obstacle, minus radius.
pub fn sdf_static(circles: &EgoCircles, obstacles: &[Polygon]) -> f64 {
    if obstacles.is_empty() {
        return SENTINEL;
    }
    circles
        .circles
        .iter()
        .flat_map(|c| obstacles.iter().map(move |o| o.signed_distance(c.center) - c.radius))
        .fold(f64::INFINITY, f64::min)
}

/// Longitudinal distance to the nearest red or yellow stop line ahead along
/// the travel direction, minus radius. Negative once the line is crossed.
pub fn distance_to_traffic_light(circles: &EgoCircles, lights: &[TrafficLight]) -> f64 {
    let dir = Vec2::from_angle(circles.heading);
    let mut best = SENTINEL;
    for light in lights {
        if light.state == LightState::Green {
            continue;
        }
        let [a, b] = light.line;
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let m = ab.perp();
        let denom = dir.dot(m);
        if len_sq == 0.0 || denom.abs() < 1e-9 {
            continue;
        }
        for c in &circles.circles {
            let along = (a - c.center).dot(m) / denom;
            let hit = c.center + dir * along;
            let u = (hit - a).dot(ab) / len_sq;
            if (0.0..=1.0).contains(&u) {
                best = best.min(along - c.radius);
            }
        }
    }
    best
}

/// Per-sample, per-step distances with channels `(ref, sdf, tl)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub samples: usize,
    pub steps: usize,
    pub data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(samples: usize, steps: usize) -> Self {
        Self {
            samples,
            steps,
            data: vec![0.0; samples * steps * 3],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, t: usize, c: usize) -> usize {
        (i * self.steps + t) * 3 + c
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, c: usize) -> f64 {
        self.data[self.index(i, t, c)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.steps * 3;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample,t,d_ref,d_sdf,d_tl")?;
        for i in 0..self.samples {
            for t in 0..self.steps {
                writeln!(
                    out,
                    "{i},{t},{},{},{}",
                    self.get(i, t, 0),
                    self.get(i, t, 1),
                    self.get(i, t, 2)
                )?;
            }
        }
        Ok(())
    }
}

/// Distances at a single pose.
pub fn measure_pose(pose: Pose, map: &MapContext, dims: VehicleDims) -> Result<[f64; 3]> {
    let circles = ego_circles(pose, dims.length, dims.width);
    Ok([
        distance_to_reference(&circles, &map.lanes)?,
        sdf_static(&circles, &map.obstacles),
        distance_to_traffic_light(&circles, &map.lights),
    ])
}

fn indexed_reference(circles: &EgoCircles, lanes: &[PolylineIndex]) -> f64 {
    circles
        .circles
        .iter()
        .flat_map(|c| lanes.iter().map(move |l| l.distance(c.center) - c.radius))
        .fold(f64::INFINITY, f64::min)
}

/// Measures every pose of every trajectory against the map.
pub fn measure(trajectories: &[TrajectorySample], map: &MapContext, dims: VehicleDims) -> Result<DistanceMatrix> {
    if map.lanes.is_empty() {
        return Err(Error::NoReference);
    }
    let lanes: Vec<PolylineIndex> = map.lanes.iter().map(PolylineIndex::new).collect();
    let steps = trajectories.first().map_or(0, |t| t.len());
    let mut out = DistanceMatrix::zeros(trajectories.len(), steps);
    for (i, traj) in trajectories.iter().enumerate() {
        if traj.len() != steps {
            return Err(Error::Length {
                left: traj.len(),
                right: steps,
            });
        }
        for (t, pose) in traj.poses().enumerate() {
            let circles = ego_circles(pose, dims.length, dims.width);
            let d = [
                indexed_reference(&circles, &lanes),
                sdf_static(&circles, &map.obstacles),
                distance_to_traffic_light(&circles, &map.lights),
            ];
            let k = out.index(i, t, 0);
            out.data[k..k + 3].copy_from_slice(&d);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_at(x: f64, y: f64, r: f64, heading: f64) -> EgoCircles {
        EgoCircles {
            heading,
            circles: vec![Circle {
                center: Vec2::new(x, y),
                radius: r,
            }],
        }
    }

    fn lane(a: (f64, f64), b: (f64, f64)) -> Polyline {
        Polyline(vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)])
    }

    #[test]
    fn square_footprint_is_one_circle() {
        let c = ego_circles(Pose::new(1.0, 2.0, 0.3), 2.0, 2.0);
        assert_eq!(c.circles.len(), 1);
        assert!(c.circles[0].center.dist(Vec2::new(1.0, 2.0)) < 1e-12);
    }

    #[test]
    fn car_footprint_needs_three_circles() {
        let pose = Pose::new(0.0, 0.0, 0.7);
        let dims = VehicleDims {
            length: 4.8,
            width: 1.8,
        };
        let c = ego_circles(pose, dims.length, dims.width);
        assert_eq!(c.circles.len(), 3);
        assert!(c.covers(pose, dims));
    }

    #[test]
    fn circles_rotate_rigidly() {
        let a = ego_circles(Pose::new(0.0, 0.0, 0.0), 4.8, 1.8);
        let b = ego_circles(Pose::new(0.0, 0.0, 1.1), 4.8, 1.8);
        for (ca, cb) in a.circles.iter().zip(&b.circles) {
            assert!(ca.center.rotated(1.1).dist(cb.center) < 1e-12);
        }
    }

    #[test]
    fn reference_distance_examples() {
        let lanes = [lane((0.0, 0.0), (10.0, 0.0))];
        let d = distance_to_reference(&circle_at(1.0, 2.0, 1.0, 0.0), &lanes).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let d = distance_to_reference(&circle_at(5.0, 0.0, 1.3, 0.0), &lanes).unwrap();
        assert!((d + 1.3).abs() < 1e-12);
        let two = [lane((0.0, 5.0), (10.0, 5.0)), lane((0.0, 0.0), (10.0, 0.0))];
        let d = distance_to_reference(&circle_at(1.0, 2.0, 1.0, 0.0), &two).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(matches!(
            distance_to_reference(&circle_at(0.0, 0.0, 1.0, 0.0), &[]),
            Err(Error::NoReference)
        ));
    }

    #[test]
    fn sdf_examples() {
        let bx = Polygon::rectangle(Vec2::ZERO, 0.0, 4.0, 4.0);
        let d = sdf_static(&circle_at(5.0, 0.0, 0.5, 0.0), std::slice::from_ref(&bx));
        assert!((d - 2.5).abs() < 1e-12);
        let d = sdf_static(&circle_at(1.0, 0.0, 0.5, 0.0), std::slice::from_ref(&bx));
        assert!((d + 1.5).abs() < 1e-12);
        assert_eq!(sdf_static(&circle_at(1.0, 0.0, 0.5, 0.0), &[]), SENTINEL);
        // boundary value is -radius
        let d = sdf_static(&circle_at(2.0, 0.5, 0.5, 0.0), std::slice::from_ref(&bx));
        assert!((d + 0.5).abs() < 1e-12);
    }

    fn light(x: f64, state: LightState) -> TrafficLight {
        TrafficLight {
            line: [Vec2::new(x, -5.0), Vec2::new(x, 5.0)],
            state,
        }
    }

    #[test]
    fn traffic_light_examples() {
        let c = circle_at(0.0, 0.0, 1.0, 0.0);
        assert!((distance_to_traffic_light(&c, &[light(10.0, LightState::Red)]) - 9.0).abs() < 1e-12);
        assert_eq!(
            distance_to_traffic_light(&c, &[light(10.0, LightState::Green)]),
            SENTINEL
        );
        assert_eq!(distance_to_traffic_light(&c, &[]), SENTINEL);
        let past = circle_at(11.0, 0.0, 1.0, 0.0);
        assert!((distance_to_traffic_light(&past, &[light(10.0, LightState::Red)]) + 2.0).abs() < 1e-12);
        // a stop line on another road does not apply
        let side = TrafficLight {
            line: [Vec2::new(10.0, 20.0), Vec2::new(10.0, 30.0)],
            state: LightState::Yellow,
        };
        assert_eq!(distance_to_traffic_light(&c, &[side]), SENTINEL);
    }
}
