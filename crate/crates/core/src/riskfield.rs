//! Exponential risk mapping of map distances and predicted occupancy.

use crate::encoder::{RiskParams, RISK_CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::{ego_circles, measure, DistanceMatrix, EgoCircles, VehicleDims};
use crate::kinematics::TrajectorySample;
use crate::predictor::{mvn_density, SeqMvnPrediction};
use crate::registry::Registry;
use crate::scenario::Scenario;
use std::io::Write;

/// Upper bound on `lambda * d`; risk saturates rather than overflowing.
pub const EXPONENT_CAP: f64 = 50.0;
pub const RISK_MAP_CHANNELS: usize = 4;

/// `beta * exp(min(lambda * d, cap))`.
#[inline]
pub fn risk_value(beta: f64, lambda: f64, d: f64) -> f64 {
    beta * (lambda * d).min(EXPONENT_CAP).exp()
}

/// Partial derivatives of [`risk_value`] with respect to `(beta, lambda)`.
#[inline]
pub fn risk_value_grad(beta: f64, lambda: f64, d: f64) -> (f64, f64) {
    let z = lambda * d;
    if z >= EXPONENT_CAP {
        (EXPONENT_CAP.exp(), 0.0)
    } else {
        let e = z.exp();
        (e, beta * d * e)
    }
}

fn check_params(params: &RiskParams, steps: usize) -> Result<()> {
    if params.steps != 1 && params.steps != steps {
        return Err(Error::Length {
            left: params.steps,
            right: steps,
        });
    }
    if params.beta.len() != RISK_CHANNELS * params.steps || params.lambda.len() != RISK_CHANNELS * params.steps {
        return Err(Error::Shape {
            head: "beta".into(),
            detail: format!("expected {} entries", RISK_CHANNELS * params.steps),
        });
    }
    Ok(())
}

/// Elementwise static-channel risk, `[sample][t][channel]`.
pub fn map_risk(d: &DistanceMatrix, params: &RiskParams) -> Result<Vec<f64>> {
    check_params(params, d.steps)?;
    let mut out = vec![0.0; d.data.len()];
    for i in 0..d.samples {
        for t in 0..d.steps {
            for c in 0..RISK_CHANNELS {
                let k = d.index(i, t, c);
                out[k] = risk_value(params.beta_at(c, t), params.lambda_at(c, t), d.data[k]);
            }
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of [`map_risk`]: accumulates `upstream`
/// (same layout as the output) into `grad.beta` and `grad.lambda`.
pub fn map_risk_vjp(d: &DistanceMatrix, params: &RiskParams, upstream: &[f64], grad: &mut RiskParams) -> Result<()> {
    check_params(params, d.steps)?;
    if upstream.len() != d.data.len() {
        return Err(Error::Length {
            left: upstream.len(),
            right: d.data.len(),
        });
    }
    for i in 0..d.samples {
        for t in 0..d.steps {
            for c in 0..RISK_CHANNELS {
                let k = d.index(i, t, c);
                if upstream[k] == 0.0 {
                    continue;
                }
                let slot = params.slot(c, t);
                let (gb, gl) = risk_value_grad(params.beta[slot], params.lambda[slot], d.data[k]);
                grad.beta[slot] += upstream[k] * gb;
                grad.lambda[slot] += upstream[k] * gl;
            }
        }
    }
    Ok(())
}

/// Turns predicted occupancy at one step into a collision score in `[0, 1]`.
pub trait CollisionModel: Send + Sync {
    fn risk(&self, footprint: &EgoCircles, prediction: &SeqMvnPrediction, t: usize) -> f64;
}

/// Density times circle area, summed over agents, modals and circles.
pub struct Integrated;

/// Mean raw density over circle centres.
pub struct Density;

/// Worst single agent, worst single circle.
pub struct Max;

fn modal_mixture(prediction: &SeqMvnPrediction, agent: usize, t: usize, p: crate::geometry::Vec2) -> f64 {
    (0..prediction.modals)
        .map(|m| prediction.cls(agent, m) * mvn_density(p, prediction.tuple(agent, m, t)))
        .sum()
}

impl CollisionModel for Integrated {
    fn risk(&self, footprint: &EgoCircles, prediction: &SeqMvnPrediction, t: usize) -> f64 {
        let mut total = 0.0;
        for a in 0..prediction.agents {
            for c in &footprint.circles {
                total += modal_mixture(prediction, a, t, c.center) * c.area();
            }
        }
        total.clamp(0.0, 1.0)
    }
}

impl CollisionModel for Density {
    fn risk(&self, footprint: &EgoCircles, prediction: &SeqMvnPrediction, t: usize) -> f64 {
        if footprint.circles.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for a in 0..prediction.agents {
            for c in &footprint.circles {
                total += modal_mixture(prediction, a, t, c.center);
            }
        }
        (total / footprint.circles.len() as f64).clamp(0.0, 1.0)
    }
}

impl CollisionModel for Max {
    fn risk(&self, footprint: &EgoCircles, prediction: &SeqMvnPrediction, t: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..prediction.agents {
            for c in &footprint.circles {
                worst = worst.max(modal_mixture(prediction, a, t, c.center) * c.area());
            }
        }
        worst.clamp(0.0, 1.0)
    }
}

pub const DEFAULT_COLLISION_MODE: &str = "integrated";

pub fn collision_registry() -> Registry<dyn CollisionModel> {
    let mut r: Registry<dyn CollisionModel> = Registry::new("col_mode");
    r.register("integrated", Box::new(Integrated))
        .register("density", Box::new(Density))
        .register("max", Box::new(Max));
    r
}

/// Collision score of one footprint with the default model.
pub fn collision_risk(footprint: &EgoCircles, t: usize, prediction: &SeqMvnPrediction) -> Result<f64> {
    if t >= prediction.steps && prediction.agents > 0 {
        return Err(Error::Index(format!("t {t} outside horizon {}", prediction.steps)));
    }
    Ok(Integrated.risk(footprint, prediction, t))
}

/// Four-channel risk on every trajectory point: `(ref, sdf, tl, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMapValues {
    pub samples: usize,
    pub steps: usize,
    pub data: Vec<f64>,
}

impl RiskMapValues {
    #[inline]
    pub fn index(&self, i: usize, t: usize, c: usize) -> usize {
        (i * self.steps + t) * RISK_MAP_CHANNELS + c
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, c: usize) -> f64 {
        self.data[self.index(i, t, c)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.steps * RISK_MAP_CHANNELS;
        &self.data[i * w..(i + 1) * w]
    }

    /// Columns `sample,t,x,y,r_ref,r_sdf,r_tl,r_col`.
    pub fn write_csv<W: Write>(&self, trajectories: &[TrajectorySample], mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample,t,x,y,r_ref,r_sdf,r_tl,r_col")?;
        for (i, traj) in trajectories.iter().enumerate().take(self.samples) {
            for (t, s) in traj.states.iter().enumerate().take(self.steps) {
                write!(out, "{i},{t},{},{}", s.x, s.y)?;
                for c in 0..RISK_MAP_CHANNELS {
                    write!(out, ",{}", self.get(i, t, c))?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Per-step collision scores `[sample][t]`; independent of learned parameters.
pub fn collision_channel(
    trajectories: &[TrajectorySample],
    prediction: &SeqMvnPrediction,
    dims: VehicleDims,
    model: &dyn CollisionModel,
) -> Vec<f64> {
    let steps = trajectories.first().map_or(0, |t| t.len());
    let mut out = vec![0.0; trajectories.len() * steps];
    if prediction.agents == 0 {
        return out;
    }
    for (i, traj) in trajectories.iter().enumerate() {
        for (t, pose) in traj.poses().enumerate().take(prediction.steps) {
            let circles = ego_circles(pose, dims.length, dims.width);
            out[i * steps + t] = model.risk(&circles, prediction, t);
        }
    }
    out
}

/// Assembles static distances and collision scores into a [`RiskMapValues`].
pub fn assemble(d: &DistanceMatrix, static_risk: &[f64], col: &[f64]) -> RiskMapValues {
    let mut data = Vec::with_capacity(d.samples * d.steps * RISK_MAP_CHANNELS);
    for i in 0..d.samples {
        for t in 0..d.steps {
            let k = d.index(i, t, 0);
            data.extend_from_slice(&static_risk[k..k + RISK_CHANNELS]);
            data.push(col[i * d.steps + t]);
        }
    }
    RiskMapValues {
        samples: d.samples,
        steps: d.steps,
        data,
    }
}

/// Full risk map of a trajectory set in a scene.
pub fn build_riskmap(
    trajectories: &[TrajectorySample],
    scenario: &Scenario,
    prediction: &SeqMvnPrediction,
    params: &RiskParams,
    dims: VehicleDims,
    model: &dyn CollisionModel,
) -> Result<RiskMapValues> {
    let d = measure(trajectories, &scenario.map, dims)?;
    let static_risk = map_risk(&d, params)?;
    let col = collision_channel(trajectories, prediction, dims, model);
    Ok(assemble(&d, &static_risk, &col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Circle, Vec2};
    use crate::predictor::MvnTuple;

    fn one_agent(mean: Vec2) -> SeqMvnPrediction {
        SeqMvnPrediction {
            agents: 1,
            modals: 1,
            steps: 1,
            tuples: vec![MvnTuple::from([mean.x, mean.y, 1.0, 1.0, 0.0])],
            cls: vec![1.0],
        }
    }

    fn single_circle(center: Vec2, radius: f64) -> EgoCircles {
        EgoCircles {
            heading: 0.0,
            circles: vec![Circle { center, radius }],
        }
    }

    #[test]
    fn risk_value_examples() {
        assert_eq!(risk_value(2.5, -3.0, 0.0), 2.5);
        assert_eq!(risk_value(2.5, 0.0, 17.0), 2.5);
        assert!((risk_value(1.0, -1.0, 2.0) - 0.135335).abs() < 1e-6);
        assert_eq!(risk_value(1.0, 1.0, 1e4), EXPONENT_CAP.exp());
    }

    #[test]
    fn collision_examples() {
        let fp = single_circle(Vec2::ZERO, 1.0);
        assert!((collision_risk(&fp, 0, &one_agent(Vec2::ZERO)).unwrap() - 0.5).abs() < 1e-12);
        assert!(collision_risk(&fp, 0, &one_agent(Vec2::new(10.0, 0.0))).unwrap() < 1e-8);
        assert_eq!(collision_risk(&fp, 0, &SeqMvnPrediction::empty(3, 30)).unwrap(), 0.0);
    }

    #[test]
    fn registry_modes() {
        let r = collision_registry();
        assert_eq!(r.names().collect::<Vec<_>>(), ["integrated", "density", "max"]);
        let fp = single_circle(Vec2::ZERO, 1.0);
        let p = one_agent(Vec2::ZERO);
        let d = r.get("density").unwrap().risk(&fp, &p, 0);
        assert!((d - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!(r.get("bogus").is_err());
    }

    #[test]
    fn grad_matches_differences() {
        let h = 1e-6;
        for &(b, l, d) in &[(1.3, -0.7, 2.0), (0.4, 0.2, -1.5), (2.0, -2.0, 0.3)] {
            let (gb, gl) = risk_value_grad(b, l, d);
            let nb = (risk_value(b + h, l, d) - risk_value(b - h, l, d)) / (2.0 * h);
            let nl = (risk_value(b, l + h, d) - risk_value(b, l - h, d)) / (2.0 * h);
            assert!((gb - nb).abs() < 1e-7 && (gl - nl).abs() < 1e-7);
        }
    }
}
