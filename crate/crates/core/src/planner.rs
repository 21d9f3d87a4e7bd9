//! Lattice sampling, cost evaluation and minimum-cost selection.

pub use crate::kinematics::{PlanState, TrajectorySample};

use crate::encoder::{extract_features, forward_heads, RiskHeads, RiskParams};
use crate::error::{Error, Result};
use crate::geometry::{LaneFrame, Polyline, VehicleDims};
use crate::kinematics::{frenet_rollout, frenet_start, states_from_positions, MotionState};
use crate::predictor::{predict, PredictorModel, SeqMvnPrediction};
use crate::riskfield::{build_riskmap, collision_registry, RiskMapValues, DEFAULT_COLLISION_MODE, RISK_MAP_CHANNELS};
use crate::scenario::{Scenario, EGO_DIMS};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const V_MAX: f64 = 15.0;
pub const LATERAL_RANGE: f64 = 3.0;
/// Farthest the ego may be from every lane before planning is refused.
pub const OFF_MAP_DISTANCE: f64 = 50.0;
pub const DEFAULT_COUNT: usize = 400;

/// `n` evenly spaced values over `[lo, hi]`; the midpoint when `n == 1`.
pub fn lattice_axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Integer square root of `count`, or an error when it is not a perfect square.
pub fn lattice_side(count: usize) -> Result<usize> {
    let n = (count as f64).sqrt().round() as usize;
    if count == 0 || n * n != count {
        return Err(Error::NonSquareCount(count));
    }
    Ok(n)
}

/// Target speed by lateral offset grid, speed-major, rolled out in the
/// Frenet frame of the lane nearest to the ego.
pub fn sample_lattice(
    ego: &MotionState,
    lanes: &[Polyline],
    count: usize,
    steps: usize,
    dt: f64,
) -> Result<Vec<TrajectorySample>> {
    let n = lattice_side(count)?;
    let (lane, dist) = lanes
        .iter()
        .map(|l| (l, l.distance(ego.pos)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::NoReference)?;
    if dist > OFF_MAP_DISTANCE {
        return Err(Error::OffMap(dist));
    }
    let frame = LaneFrame::new(lane).ok_or_else(|| Error::invariant("map.lanes", "degenerate lane"))?;
    let start = frenet_start(&frame, ego);
    let speeds = lattice_axis(n, 0.0, V_MAX);
    let offsets = lattice_axis(n, -LATERAL_RANGE, LATERAL_RANGE);
    let mut out = Vec::with_capacity(count);
    for &v in &speeds {
        for &d in &offsets {
            let positions = frenet_rollout(&frame, &start, v, d, steps, dt);
            out.push(TrajectorySample {
                states: states_from_positions(ego, &positions, dt),
                target_speed: v,
                lateral_offset: d,
            });
        }
    }
    Ok(out)
}

/// Mean squared acceleration and mean squared yaw rate.
pub fn smoothness_cost(traj: &TrajectorySample) -> (f64, f64) {
    if traj.is_empty() {
        return (0.0, 0.0);
    }
    let n = traj.len() as f64;
    let a = traj.states.iter().map(|s| s.accel * s.accel).sum::<f64>() / n;
    let s = traj.states.iter().map(|s| s.yaw_rate * s.yaw_rate).sum::<f64>() / n;
    (a, s)
}

/// Mean squared gap between target and trajectory speed.
pub fn velocity_term(traj: &TrajectorySample, v_bar: &[f64]) -> Result<f64> {
    if v_bar.len() != traj.len() {
        return Err(Error::Length {
            left: v_bar.len(),
            right: traj.len(),
        });
    }
    if traj.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = traj.speeds().zip(v_bar).map(|(v, vb)| (vb - v) * (vb - v)).sum();
    Ok(sum / traj.len() as f64)
}

/// Per-trajectory cost terms. `total` is the sum of every other field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub risk_ref: f64,
    pub risk_sdf: f64,
    pub risk_tl: f64,
    pub risk_col: f64,
    pub c_smooth: [f64; 2],
    pub d_v: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn parts_sum(&self) -> f64 {
        self.risk_ref + self.risk_sdf + self.risk_tl + self.risk_col + self.c_smooth[0] + self.c_smooth[1] + self.d_v
    }
}

/// Fixed multipliers on the four risk channels. All ones reduces the
/// concatenated cost vector by plain summation.
pub const UNIT_CHANNEL_WEIGHTS: [f64; RISK_MAP_CHANNELS] = [1.0; RISK_MAP_CHANNELS];

pub fn trajectory_cost(traj: &TrajectorySample, row: &[f64], params: &RiskParams) -> Result<CostBreakdown> {
    trajectory_cost_weighted(traj, row, params, &UNIT_CHANNEL_WEIGHTS)
}

/// Cost of one trajectory from its risk-map row (`[t][channel]`).
pub fn trajectory_cost_weighted(
    traj: &TrajectorySample,
    row: &[f64],
    params: &RiskParams,
    weights: &[f64; RISK_MAP_CHANNELS],
) -> Result<CostBreakdown> {
    if row.len() != traj.len() * RISK_MAP_CHANNELS {
        return Err(Error::Length {
            left: row.len(),
            right: traj.len() * RISK_MAP_CHANNELS,
        });
    }
    let mut risk = [0.0; RISK_MAP_CHANNELS];
    for point in row.chunks_exact(RISK_MAP_CHANNELS) {
        for c in 0..RISK_MAP_CHANNELS {
            risk[c] += weights[c] * point[c];
        }
    }
    let (a, s) = smoothness_cost(traj);
    let c_smooth = [a * params.w_smooth[0], s * params.w_smooth[1]];
    let d_v = velocity_term(traj, &params.v_bar)? * params.w_d;
    let mut cost = CostBreakdown {
        risk_ref: risk[0],
        risk_sdf: risk[1],
        risk_tl: risk[2],
        risk_col: risk[3],
        c_smooth,
        d_v,
        total: 0.0,
    };
    cost.total = cost.parts_sum();
    Ok(cost)
}

/// Index of the smallest total; ties go to the lowest index.
pub fn select(costs: &[CostBreakdown]) -> Result<usize> {
    if costs.is_empty() {
        return Err(Error::Empty("costs"));
    }
    let mut best = 0;
    for (i, c) in costs.iter().enumerate().skip(1) {
        if c.total < costs[best].total {
            best = i;
        }
    }
    Ok(best)
}

/// Frozen predictor and trained risk heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub predictor: PredictorModel,
    pub heads: RiskHeads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub count: usize,
    pub col_mode: String,
    pub channel_weights: [f64; RISK_MAP_CHANNELS],
    pub dims: VehicleDims,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            count: DEFAULT_COUNT,
            col_mode: DEFAULT_COLLISION_MODE.to_string(),
            channel_weights: UNIT_CHANNEL_WEIGHTS,
            dims: EGO_DIMS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub selected: usize,
    pub trajectories: Vec<TrajectorySample>,
    pub costs: Vec<CostBreakdown>,
    pub riskmap: RiskMapValues,
    pub params: RiskParams,
    pub prediction: SeqMvnPrediction,
    pub wall_ms: f64,
}

impl PlanOutput {
    pub fn trajectory(&self) -> &TrajectorySample {
        &self.trajectories[self.selected]
    }
}

/// Predict, sample, map risk, score and select.
pub fn plan(scenario: &Scenario, models: &Models, config: &PlanConfig) -> Result<PlanOutput> {
    let started = Instant::now();
    let registry = collision_registry();
    let col = registry.get(&config.col_mode)?;
    let steps = scenario.horizon();
    let prediction = predict(scenario, &models.predictor);
    let params = forward_heads(&extract_features(scenario), &models.heads, models.heads.tv)?;
    let trajectories = sample_lattice(
        &scenario.ego_motion(),
        &scenario.map.lanes,
        config.count,
        steps,
        scenario.dt,
    )?;
    let riskmap = build_riskmap(&trajectories, scenario, &prediction, &params, config.dims, col)?;
    let costs = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| trajectory_cost_weighted(t, riskmap.row(i), &params, &config.channel_weights))
        .collect::<Result<Vec<_>>>()?;
    let selected = select(&costs)?;
    Ok(PlanOutput {
        selected,
        trajectories,
        costs,
        riskmap,
        params,
        prediction,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
