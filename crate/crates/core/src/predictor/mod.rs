//! Sequential multi-modal Gaussian prediction of surrounding agents.
//!
//! Each agent gets `M` modals; each modal is a sequence of bivariate
//! normals over the horizon with a modal probability shared by all steps.
//! The trunk is a constant-velocity rollout corrected by a small MLP.

mod mvn;

pub use mvn::{
    decode_regularize, mvn_density, mvn_log_density, mvn_log_density_grad, reparameterize, reparameterize_vjp, MvnTuple,
};

use crate::encoder::{nearest_lane_frame, MlpCache, MlpHead, OutputTransform};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::scenario::{AgentTrack, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MODALS: usize = 3;
pub const AGENT_FEATURE_DIM: usize = 10;
const HIDDEN: usize = 32;
/// Per-point log-likelihood floor.
pub const LOG_FLOOR: f64 = -50.0;

/// Tuples `[agent][modal][t]` and modal probabilities `[agent][modal]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqMvnPrediction {
    pub agents: usize,
    pub modals: usize,
    pub steps: usize,
    pub tuples: Vec<MvnTuple>,
    pub cls: Vec<f64>,
}

impl SeqMvnPrediction {
    pub fn empty(modals: usize, steps: usize) -> Self {
        SeqMvnPrediction {
            agents: 0,
            modals,
            steps,
            tuples: Vec::new(),
            cls: Vec::new(),
        }
    }

    #[inline]
    pub fn tuple(&self, agent: usize, modal: usize, t: usize) -> &MvnTuple {
        &self.tuples[(agent * self.modals + modal) * self.steps + t]
    }

    #[inline]
    pub fn cls(&self, agent: usize, modal: usize) -> f64 {
        self.cls[agent * self.modals + modal]
    }

    pub fn modal_means(&self, agent: usize, modal: usize) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.steps).map(move |t| self.tuple(agent, modal, t).mean())
    }

    /// Shape consistency, component validity and per-agent normalization.
    pub fn check(&self) -> Result<()> {
        if self.tuples.len() != self.agents * self.modals * self.steps || self.cls.len() != self.agents * self.modals {
            return Err(Error::invariant(
                "prediction",
                "tuple or cls count does not match shape",
            ));
        }
        if let Some(i) = self.tuples.iter().position(|t| !t.is_valid()) {
            return Err(Error::invariant(
                format!("prediction.tuples[{i}]"),
                "sigma <= 0 or |rho| >= 1",
            ));
        }
        for a in 0..self.agents {
            let row = &self.cls[a * self.modals..(a + 1) * self.modals];
            if row.iter().any(|&c| c < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invariant(format!("prediction.cls[{a}]"), "not a distribution"));
            }
        }
        Ok(())
    }

    fn check_index(&self, agent: usize, modal: usize, t: usize) -> Result<()> {
        if agent >= self.agents || modal >= self.modals || t >= self.steps {
            return Err(Error::Index(format!(
                "(agent {agent}, modal {modal}, t {t}) outside {}x{}x{}",
                self.agents, self.modals, self.steps
            )));
        }
        Ok(())
    }
}

/// Modal-weighted likelihood of one point.
pub fn weighted_likelihood(
    point: Vec2,
    prediction: &SeqMvnPrediction,
    agent: usize,
    modal: usize,
    t: usize,
) -> Result<f64> {
    prediction.check_index(agent, modal, t)?;
    Ok(prediction.cls(agent, modal) * mvn_density(point, prediction.tuple(agent, modal, t)))
}

/// One sampled trajectory `mu_t + L_t * noise_t`.
pub fn sample_reparameterized(
    prediction: &SeqMvnPrediction,
    agent: usize,
    modal: usize,
    noise: &[[f64; 2]],
) -> Result<Vec<Vec2>> {
    prediction.check_index(agent, modal, 0)?;
    if noise.len() != prediction.steps {
        return Err(Error::Length {
            left: noise.len(),
            right: prediction.steps,
        });
    }
    Ok(noise
        .iter()
        .enumerate()
        .map(|(t, &n)| reparameterize(prediction.tuple(agent, modal, t), n))
        .collect())
}

/// Gradient of the prediction loss with respect to tuple entries
/// `(mu_x, mu_y, sigma_x, sigma_y, rho)` and modal probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrad {
    pub tuples: Vec<[f64; 5]>,
    pub cls: Vec<f64>,
}

/// Index of the modal whose mean sequence is nearest to `truth` in L2;
/// ties go to the lowest index.
pub fn nearest_modal(prediction: &SeqMvnPrediction, agent: usize, truth: &[Vec2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for m in 0..prediction.modals {
        let d: f64 = prediction
            .modal_means(agent, m)
            .zip(truth)
            .map(|(mu, &y)| (mu - y).norm_sq())
            .sum();
        if d < best.1 {
            best = (m, d);
        }
    }
    best.0
}

/// Mean over agents of `sum_m -sum_t log(cls_m N(y_t)) - log cls_{m*}`,
/// with each log term floored at [`LOG_FLOOR`].
pub fn prediction_loss(prediction: &SeqMvnPrediction, truth: &[Vec<Vec2>]) -> Result<(f64, PredictionGrad)> {
    if truth.len() != prediction.agents {
        return Err(Error::Length {
            left: truth.len(),
            right: prediction.agents,
        });
    }
    let mut grad = PredictionGrad {
        tuples: vec![[0.0; 5]; prediction.tuples.len()],
        cls: vec![0.0; prediction.cls.len()],
    };
    if prediction.agents == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / prediction.agents as f64;
    let mut total = 0.0;
    for (a, y) in truth.iter().enumerate() {
        if y.len() != prediction.steps {
            return Err(Error::Length {
                left: y.len(),
                right: prediction.steps,
            });
        }
        for m in 0..prediction.modals {
            let c = prediction.cls(a, m);
            let log_c = c.ln();
            for (t, &p) in y.iter().enumerate() {
                let tuple = prediction.tuple(a, m, t);
                let ll = log_c + mvn_log_density(p, tuple);
                if ll > LOG_FLOOR {
                    total -= ll;
                    let k = (a * prediction.modals + m) * prediction.steps + t;
                    let g = mvn_log_density_grad(p, tuple);
                    for i in 0..5 {
                        grad.tuples[k][i] -= scale * g[i];
                    }
                    grad.cls[a * prediction.modals + m] -= scale / c;
                } else {
                    total -= LOG_FLOOR;
                }
            }
        }
        let best = nearest_modal(prediction, a, y);
        let c = prediction.cls(a, best);
        let log_c = c.ln();
        if log_c > LOG_FLOOR {
            total -= log_c;
            grad.cls[a * prediction.modals + best] -= scale / c;
        } else {
            total -= LOG_FLOOR;
        }
    }
    Ok((total * scale, grad))
}

/// Learned correction on top of a constant-velocity rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub modals: usize,
    pub horizon: usize,
    pub mlp: MlpHead,
}

/// Per-agent forward state kept for backpropagation.
pub(crate) struct AgentPass {
    features: Vec<f64>,
    cache: MlpCache,
    heading: f64,
}

impl PredictorModel {
    /// Random hidden layers; the output layer starts at zero, so a fresh
    /// model predicts the constant-velocity rollout with unit sigma, zero
    /// correlation and uniform modal probabilities.
    pub fn new(modals: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = modals * horizon * 5 + modals;
        PredictorModel {
            modals,
            horizon,
            mlp: MlpHead::new(
                &[AGENT_FEATURE_DIM, HIDDEN, HIDDEN, out],
                OutputTransform::Identity,
                &[0.0],
                &mut rng,
            ),
        }
    }

    pub fn zeros(modals: usize, horizon: usize) -> Self {
        let out = modals * horizon * 5 + modals;
        PredictorModel {
            modals,
            horizon,
            mlp: MlpHead::zeros(&[AGENT_FEATURE_DIM, HIDDEN, HIDDEN, out], OutputTransform::Identity),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.mlp.check("predictor")?;
        let out = self.modals * self.horizon * 5 + self.modals;
        if self.mlp.input_dim() != AGENT_FEATURE_DIM || self.mlp.output_dim() != out {
            return Err(Error::Shape {
                head: "predictor".into(),
                detail: format!(
                    "expected {AGENT_FEATURE_DIM} -> {out}, found {} -> {}",
                    self.mlp.input_dim(),
                    self.mlp.output_dim()
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn forward(&self, scenario: &Scenario) -> (SeqMvnPrediction, Vec<AgentPass>) {
        let (m_count, steps) = (self.modals, self.horizon);
        let mut pred = SeqMvnPrediction {
            agents: scenario.agents.len(),
            modals: m_count,
            steps,
            tuples: Vec::with_capacity(scenario.agents.len() * m_count * steps),
            cls: Vec::with_capacity(scenario.agents.len() * m_count),
        };
        let mut passes = Vec::with_capacity(scenario.agents.len());
        for agent in &scenario.agents {
            let features = agent_features(scenario, agent);
            let cache = self.mlp.forward_cached(&features);
            let out = &cache.output;
            let cur = agent.current();
            let heading = cur.heading;
            let (sin, cos) = heading.sin_cos();
            for m in 0..m_count {
                for t in 0..steps {
                    let r = &out[(m * steps + t) * 5..(m * steps + t) * 5 + 5];
                    let along = cur.speed * (t + 1) as f64 * scenario.dt + r[0];
                    let lateral = r[1];
                    pred.tuples.push(decode_regularize([
                        cur.x + cos * along - sin * lateral,
                        cur.y + sin * along + cos * lateral,
                        r[2],
                        r[3],
                        r[4],
                    ]));
                }
            }
            let logits = &out[m_count * steps * 5..];
            pred.cls.extend(softmax(logits));
            passes.push(AgentPass {
                features,
                cache,
                heading,
            });
        }
        (pred, passes)
    }

    /// Gradient of a loss with respect to the flat MLP parameters, given
    /// its gradient with respect to the decoded prediction.
    pub(crate) fn backward(&self, pred: &SeqMvnPrediction, passes: &[AgentPass], grad: &PredictionGrad) -> Vec<f64> {
        let (m_count, steps) = (self.modals, self.horizon);
        let mut total = vec![0.0; self.mlp.param_count()];
        let mut upstream = vec![0.0; self.mlp.output_dim()];
        for (a, pass) in passes.iter().enumerate() {
            let (sin, cos) = pass.heading.sin_cos();
            for m in 0..m_count {
                for t in 0..steps {
                    let k = (a * m_count + m) * steps + t;
                    let g = grad.tuples[k];
                    let tup = &pred.tuples[k];
                    let o = (m * steps + t) * 5;
                    upstream[o] = g[0] * cos + g[1] * sin;
                    upstream[o + 1] = -g[0] * sin + g[1] * cos;
                    upstream[o + 2] = g[2] * tup.sigma_x;
                    upstream[o + 3] = g[3] * tup.sigma_y;
                    upstream[o + 4] = g[4] * (1.0 - tup.rho * tup.rho);
                }
            }
            let cls = &pred.cls[a * m_count..(a + 1) * m_count];
            let gc = &grad.cls[a * m_count..(a + 1) * m_count];
            let mean: f64 = cls.iter().zip(gc).map(|(c, g)| c * g).sum();
            for m in 0..m_count {
                upstream[m_count * steps * 5 + m] = cls[m] * (gc[m] - mean);
            }
            let (g, _) = self.mlp.backward(&pass.cache, &upstream);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
            let _ = &pass.features;
        }
        total
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Agent-frame kinematic summary fed to the predictor MLP.
pub fn agent_features(scenario: &Scenario, agent: &AgentTrack) -> Vec<f64> {
    let h = &agent.history;
    let cur = agent.current();
    let dt = scenario.dt;
    let (accel, yaw_rate) = match h.len() {
        n if n >= 2 => (
            (cur.speed - h[n - 2].speed) / dt,
            wrap_angle(cur.heading - h[n - 2].heading) / dt,
        ),
        _ => (0.0, 0.0),
    };
    let mut f = vec![0.0; AGENT_FEATURE_DIM];
    f[0] = cur.speed / 10.0;
    f[1] = accel;
    f[2] = yaw_rate;
    f[3] = cur.speed * yaw_rate / 10.0;
    if let Some(frame) = nearest_lane_frame(scenario, cur.pos()) {
        let (s, d) = frame.project(cur.pos());
        let rel = wrap_angle(cur.heading - frame.heading_at(s));
        f[4] = cur.speed * rel.sin();
        f[5] = d;
        f[6] = 10.0 * frame.curvature_at(s, 5.0);
        f[7] = 10.0 * frame.curvature_at(s + 1.5 * cur.speed, 5.0);
    }
    f[8] = cur.length / 5.0;
    f[9] = wrap_angle(cur.heading - h[0].heading);
    f
}

/// Runs the predictor on every agent of the scene.
pub fn predict(scenario: &Scenario, model: &PredictorModel) -> SeqMvnPrediction {
    if scenario.agents.is_empty() {
        return SeqMvnPrediction::empty(model.modals, model.horizon);
    }
    model.forward(scenario).0
}

/// Stage-1 loss on one scene and its gradient with respect to the model
/// parameters. Agents without a recorded future are skipped.
pub fn scenario_loss_and_grad(scenario: &Scenario, model: &PredictorModel) -> Result<(f64, Vec<f64>)> {
    let (pred, passes) = model.forward(scenario);
    let truth = scenario.agent_truths();
    if truth.iter().any(|t| t.len() != model.horizon) {
        return Err(Error::invariant(
            "agents.future",
            "stage-1 training needs agent futures",
        ));
    }
    let (loss, grad) = prediction_loss(&pred, &truth)?;
    Ok((loss, model.backward(&pred, &passes, &grad)))
}
