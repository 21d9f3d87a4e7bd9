use super::{
    check_finite, loss_consistency, loss_l2, loss_selection, loss_velocity, mean_into, optimizer_registry, total_loss,
    CeDirection, LossBreakdown, LossCurve, LossMask, LossParts, OptState, TrainConfig, LOSS_TERMS,
};
use crate::encoder::RISK_CHANNELS;
use crate::encoder::{
    backward_heads_cached, extract_features, forward_heads_cached, RiskHeads, RiskParams, SceneFeatures,
};
use crate::error::{Error, Result};
use crate::geometry::{measure, DistanceMatrix, VehicleDims};
use crate::kinematics::TrajectorySample;
use crate::planner::{sample_lattice, smoothness_cost};
use crate::predictor::{predict, PredictorModel, SeqMvnPrediction};
use crate::riskfield::{
    collision_channel, collision_registry, risk_value, risk_value_grad, CollisionModel, RISK_MAP_CHANNELS,
};
use crate::scenario::{Scenario, EGO_DIMS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// L2 norm of the stacked position differences.
pub fn trajectory_distance(a: &TrajectorySample, b: &TrajectorySample) -> f64 {
    a.positions()
        .zip(b.positions())
        .map(|(p, q)| (p - q).norm_sq())
        .sum::<f64>()
        .sqrt()
}

/// Everything about one training scene that does not depend on the heads.
/// Candidate `n` (the last row) is the demo.
#[derive(Debug, Clone)]
pub struct SceneCache {
    pub features: SceneFeatures,
    pub distances: DistanceMatrix,
    /// Weighted collision risk summed over time, per candidate.
    pub col_sum: Vec<f64>,
    pub smooth: Vec<(f64, f64)>,
    pub speeds: Vec<Vec<f64>>,
    pub demo_distance: Vec<f64>,
    pub channel_weights: [f64; RISK_MAP_CHANNELS],
}

impl SceneCache {
    /// Lattice of `config.count` candidates scored against the frozen prediction.
    pub fn new(scenario: &Scenario, predictor: &PredictorModel, config: &TrainConfig) -> Result<Self> {
        let prediction = predict(scenario, predictor);
        let lattice = sample_lattice(
            &scenario.ego_motion(),
            &scenario.map.lanes,
            config.count,
            scenario.horizon(),
            scenario.dt,
        )?;
        let registry = collision_registry();
        let col = registry.get(&config.col_mode)?;
        Self::from_candidates(scenario, &prediction, lattice, EGO_DIMS, col, config.channel_weights)
    }

    pub fn from_candidates(
        scenario: &Scenario,
        prediction: &SeqMvnPrediction,
        mut candidates: Vec<TrajectorySample>,
        dims: VehicleDims,
        col: &dyn CollisionModel,
        channel_weights: [f64; RISK_MAP_CHANNELS],
    ) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::Length {
                left: candidates.len(),
                right: 2,
            });
        }
        let demo = scenario.demo_sample();
        let demo_distance = candidates.iter().map(|c| trajectory_distance(c, &demo)).collect();
        candidates.push(demo);
        let distances = measure(&candidates, &scenario.map, dims)?;
        let steps = distances.steps;
        let col_raw = collision_channel(&candidates, prediction, dims, col);
        let col_sum = (0..candidates.len())
            .map(|i| channel_weights[3] * col_raw[i * steps..(i + 1) * steps].iter().sum::<f64>())
            .collect();
        Ok(SceneCache {
            features: extract_features(scenario),
            distances,
            col_sum,
            smooth: candidates.iter().map(smoothness_cost).collect(),
            speeds: candidates.iter().map(|c| c.speeds().collect()).collect(),
            demo_distance,
            channel_weights,
        })
    }

    pub fn candidates(&self) -> usize {
        self.demo_distance.len()
    }

    /// Costs of every candidate, demo last.
    pub fn costs(&self, params: &RiskParams) -> Vec<f64> {
        (0..=self.candidates()).map(|i| self.cost(i, params)).collect()
    }

    fn cost(&self, i: usize, params: &RiskParams) -> f64 {
        let d = &self.distances;
        let mut total = self.col_sum[i];
        for t in 0..d.steps {
            for c in 0..RISK_CHANNELS {
                let slot = params.slot(c, t);
                total += self.channel_weights[c] * risk_value(params.beta[slot], params.lambda[slot], d.get(i, t, c));
            }
        }
        let (a, s) = self.smooth[i];
        total += a * params.w_smooth[0] + s * params.w_smooth[1];
        total + params.w_d * mean_sq_gap(&params.v_bar, &self.speeds[i])
    }

    /// Accumulates `g * dC_i / dparams` into `grad`.
    fn cost_vjp(&self, i: usize, g: f64, params: &RiskParams, grad: &mut RiskParams) {
        if g == 0.0 {
            return;
        }
        let d = &self.distances;
        for t in 0..d.steps {
            for c in 0..RISK_CHANNELS {
                let slot = params.slot(c, t);
                let (gb, gl) = risk_value_grad(params.beta[slot], params.lambda[slot], d.get(i, t, c));
                grad.beta[slot] += g * self.channel_weights[c] * gb;
                grad.lambda[slot] += g * self.channel_weights[c] * gl;
            }
        }
        let (a, s) = self.smooth[i];
        grad.w_smooth[0] += g * a;
        grad.w_smooth[1] += g * s;
        let speeds = &self.speeds[i];
        grad.w_d += g * mean_sq_gap(&params.v_bar, speeds);
        let k = 2.0 * g * params.w_d / speeds.len() as f64;
        for (gv, (vb, v)) in grad.v_bar.iter_mut().zip(params.v_bar.iter().zip(speeds)) {
            *gv += k * (vb - v);
        }
    }
}

fn mean_sq_gap(v_bar: &[f64], v: &[f64]) -> f64 {
    v_bar.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / v.len() as f64
}

/// Loss terms of one scene and the gradient of the masked total with
/// respect to the flat head parameters.
pub fn scene_loss(
    cache: &SceneCache,
    heads: &RiskHeads,
    mask: LossMask,
    direction: CeDirection,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (params, caches) = forward_heads_cached(&cache.features, heads, heads.tv)?;
    let n = cache.candidates();
    let costs = cache.costs(&params);
    let (lattice, demo_cost) = (&costs[..n], costs[n]);
    let mut g_cost = vec![0.0; n + 1];
    let mut upstream = params.zeros_like();

    let (l_sel, g_sel) = loss_selection(lattice, &cache.demo_distance, direction)?;
    let (l_l2, nearest) = loss_l2(lattice, &cache.demo_distance, demo_cost)?;
    let (l_con, g_con) = loss_consistency(lattice)?;
    let demo_speeds = &cache.speeds[n];
    let (l_v, g_v) = loss_velocity(&params.v_bar, demo_speeds)?;

    if mask.demo_cost {
        g_cost[n] += 1.0;
    }
    if mask.l_sel {
        mean_into(&mut g_cost[..n], &g_sel, 1.0);
    }
    if mask.l_l2 {
        g_cost[nearest] += 1.0;
        g_cost[n] -= 1.0;
    }
    if mask.l_con {
        mean_into(&mut g_cost[..n], &g_con, 1.0);
    }
    if mask.l_v {
        mean_into(&mut upstream.v_bar, &g_v, 1.0);
    }
    for (i, &g) in g_cost.iter().enumerate() {
        cache.cost_vjp(i, g, &params, &mut upstream);
    }
    let breakdown = total_loss(
        LossParts {
            demo_cost,
            l_sel,
            l_l2,
            l_con,
            l_v,
        },
        mask,
    );
    Ok((breakdown, backward_heads_cached(heads, &caches, &upstream).flat()))
}

fn mean_breakdown(caches: &[SceneCache], heads: &RiskHeads, config: &TrainConfig) -> Result<Vec<f64>> {
    let mut acc = [0.0; 6];
    for c in caches {
        let (b, _) = scene_loss(c, heads, config.mask, config.ce_direction)?;
        let row = [b.demo_cost, b.l_sel, b.l_l2, b.l_con, b.l_v, b.total];
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v / caches.len() as f64);
    }
    Ok(acc.to_vec())
}

/// Fits the risk heads by imitation with the predictor frozen. Returns the
/// trained heads and a per-epoch curve of mean loss terms.
pub fn train_stage2(
    scenarios: &[Scenario],
    predictor: &PredictorModel,
    config: &TrainConfig,
) -> Result<(RiskHeads, LossCurve)> {
    config.validate()?;
    let horizon = scenarios.first().ok_or(Error::Empty("scenarios"))?.horizon();
    let caches = scenarios
        .iter()
        .map(|s| SceneCache::new(s, predictor, config))
        .collect::<Result<Vec<_>>>()?;
    let mut heads = RiskHeads::new(config.tv, horizon, config.seed);
    let mut columns: Vec<&str> = LOSS_TERMS.to_vec();
    columns.push("total");
    let mut curve = LossCurve::new(&columns);
    curve.push(0, mean_breakdown(&caches, &heads, config)?);
    let optimizer = optimizer_registry();
    let optimizer = optimizer.get(&config.optimizer)?;
    let mut params = heads.params();
    let mut state = OptState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0002);
    let mut order: Vec<usize> = (0..caches.len()).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; params.len()];
            let mut loss = 0.0;
            for &i in batch {
                let (b, g) = scene_loss(&caches[i], &heads, config.mask, config.ce_direction)?;
                loss += scale * b.total;
                mean_into(&mut grad, &g, scale);
            }
            check_finite(step, loss, &grad)?;
            optimizer.step(&mut params, &grad, &mut state, config.lr);
            heads.set_params(&params);
            step += 1;
        }
        let row = mean_breakdown(&caches, &heads, config)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step, loss: row[5] });
        }
        curve.push(epoch, row);
    }
    Ok((heads, curve))
}
