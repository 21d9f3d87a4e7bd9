//! Evaluation of planned against demonstrated trajectories.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::kinematics::TrajectorySample;
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Collision horizons in seconds.
pub const COLLISION_HORIZONS: [f64; 3] = [1.0, 2.0, 3.0];
pub const REPORT_COLUMNS: [&str; 7] = ["ade", "fde_lat", "fde_lon", "col_1s", "col_2s", "col_3s", "jerk"];

fn same_length(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Length { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::Empty("trajectory"));
    }
    Ok(())
}

/// Mean Euclidean distance between corresponding points.
pub fn ade(plan: &[Vec2], demo: &[Vec2]) -> Result<f64> {
    same_length(plan.len(), demo.len())?;
    Ok(plan.iter().zip(demo).map(|(a, b)| a.dist(*b)).sum::<f64>() / plan.len() as f64)
}

/// Absolute final displacement in the frame of the demo's final heading,
/// as `(lateral, longitudinal)`.
pub fn fde_lat_lon(plan: &[Vec2], demo: &[Vec2], demo_heading: f64) -> Result<(f64, f64)> {
    same_length(plan.len(), demo.len())?;
    let delta = plan[plan.len() - 1] - demo[demo.len() - 1];
    let along = Vec2::from_angle(demo_heading);
    Ok((delta.cross(along).abs(), delta.dot(along).abs()))
}

/// Mean absolute second difference of speed over `dt^2`.
pub fn jerk(speeds: &[f64], dt: f64) -> Result<f64> {
    if speeds.len() < 4 {
        return Err(Error::Length {
            left: speeds.len(),
            right: 4,
        });
    }
    let n = speeds.len() - 2;
    Ok(speeds.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum::<f64>() / (n as f64 * dt * dt))
}

/// True when the ego footprint along `plan` overlaps a static obstacle or
/// an agent's recorded future at some step ending no later than `horizon` s.
pub fn collides(plan: &TrajectorySample, scenario: &Scenario, horizon: f64) -> bool {
    plan.poses()
        .enumerate()
        .take_while(|(t, _)| (*t + 1) as f64 * scenario.dt <= horizon + 1e-9)
        .any(|(t, pose)| scenario.clearance(pose, t) < 0.0)
}

/// Fraction of scenes whose plan collides within `horizon` s.
pub fn collision_rate(plans: &[TrajectorySample], scenarios: &[Scenario], horizon: f64) -> Result<f64> {
    if plans.len() != scenarios.len() {
        return Err(Error::Length {
            left: plans.len(),
            right: scenarios.len(),
        });
    }
    if plans.is_empty() {
        return Ok(0.0);
    }
    let hits = plans
        .iter()
        .zip(scenarios)
        .filter(|(p, s)| collides(p, s, horizon))
        .count();
    Ok(hits as f64 / plans.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub ade: f64,
    pub fde_lat: f64,
    pub fde_lon: f64,
    pub col_1s: f64,
    pub col_2s: f64,
    pub col_3s: f64,
    pub jerk: f64,
}

impl MetricRow {
    pub fn values(&self) -> [f64; 7] {
        [
            self.ade,
            self.fde_lat,
            self.fde_lon,
            self.col_1s,
            self.col_2s,
            self.col_3s,
            self.jerk,
        ]
    }

    /// All metrics of one planned scene.
    pub fn evaluate(plan: &TrajectorySample, scenario: &Scenario) -> Result<Self> {
        let planned: Vec<Vec2> = plan.positions().collect();
        let demo: Vec<Vec2> = scenario.demo.iter().map(|p| p.pos()).collect();
        let heading = scenario.demo.last().ok_or(Error::Empty("demo"))?.heading;
        let (fde_lat, fde_lon) = fde_lat_lon(&planned, &demo, heading)?;
        let speeds: Vec<f64> = plan.speeds().collect();
        let col = COLLISION_HORIZONS.map(|h| if collides(plan, scenario, h) { 1.0 } else { 0.0 });
        Ok(MetricRow {
            ade: ade(&planned, &demo)?,
            fde_lat,
            fde_lon,
            col_1s: col[0],
            col_2s: col[1],
            col_3s: col[2],
            jerk: jerk(&speeds, scenario.dt)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    #[serde(flatten)]
    pub metrics: MetricRow,
}

/// Per-scene rows and their means for one sampling count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub rows: Vec<ScenarioRow>,
    pub aggregate: MetricRow,
}

impl EvalReport {
    pub fn new(count: usize, rows: Vec<ScenarioRow>) -> Self {
        let mut mean = [0.0; 7];
        for r in &rows {
            mean.iter_mut().zip(r.metrics.values()).for_each(|(m, v)| *m += v);
        }
        if !rows.is_empty() {
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        }
        let [ade, fde_lat, fde_lon, col_1s, col_2s, col_3s, jerk] = mean;
        EvalReport {
            count,
            rows,
            aggregate: MetricRow {
                ade,
                fde_lat,
                fde_lon,
                col_1s,
                col_2s,
                col_3s,
                jerk,
            },
        }
    }

    /// One line per scene followed by a `mean` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "scenario,{}", REPORT_COLUMNS.join(","))?;
        let line = |out: &mut W, name: &str, m: &MetricRow| -> std::io::Result<()> {
            write!(out, "{name}")?;
            for v in m.values() {
                write!(out, ",{v}")?;
            }
            writeln!(out)
        };
        for r in &self.rows {
            line(&mut out, &r.scenario, &r.metrics)?;
        }
        line(&mut out, "mean", &self.aggregate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, dx: f64, dy: f64) -> Vec<Vec2> {
        (0..n).map(|t| Vec2::new(t as f64 + dx, dy)).collect()
    }

    #[test]
    fn ade_examples() {
        assert_eq!(ade(&line(5, 0.0, 0.0), &line(5, 0.0, 0.0)).unwrap(), 0.0);
        assert!((ade(&line(5, 1.0, 0.0), &line(5, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
        let a = [Vec2::new(3.0, 4.0), Vec2::ZERO];
        assert_eq!(ade(&a, &[Vec2::ZERO, Vec2::ZERO]).unwrap(), 2.5);
        assert!(ade(&a, &[Vec2::ZERO]).is_err());
    }

    #[test]
    fn fde_frames() {
        let demo = line(3, 0.0, 0.0);
        let (lat, lon) = fde_lat_lon(&line(3, 1.5, 0.0), &demo, 0.0).unwrap();
        assert!(lat.abs() < 1e-12 && (lon - 1.5).abs() < 1e-12);
        let (lat, lon) = fde_lat_lon(&line(3, 0.0, 0.5), &demo, 0.0).unwrap();
        assert!((lat - 0.5).abs() < 1e-12 && lon.abs() < 1e-12);
        let (lat, lon) = fde_lat_lon(&line(3, 0.0, 0.5), &demo, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(lat.abs() < 1e-12 && (lon - 0.5).abs() < 1e-12);
    }

    #[test]
    fn jerk_examples() {
        assert_eq!(jerk(&[0.0, 0.0, 1.0, 1.0], 1.0).unwrap(), 1.0);
        let v: Vec<f64> = (0..10).map(|t| 2.0 + 0.5 * t as f64).collect();
        assert!(jerk(&v, 0.1).unwrap() < 1e-9);
        assert!(jerk(&[1.0, 2.0, 3.0], 0.1).is_err());
    }

    #[test]
    fn empty_rate() {
        assert_eq!(collision_rate(&[], &[], 3.0).unwrap(), 0.0);
    }
}
