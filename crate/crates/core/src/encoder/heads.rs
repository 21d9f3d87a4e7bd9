use super::features::{SceneFeatures, FEATURE_DIM};
use super::mlp::{MlpCache, MlpHead, OutputTransform};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Static risk channels: reference lane, static obstacles, traffic light.
pub const RISK_CHANNELS: usize = 3;
pub const HIDDEN: usize = 32;
pub const HEAD_NAMES: [&str; 5] = ["beta", "lambda", "w_smooth", "w_d", "v_bar"];

/// Initial lambda per channel: risk grows away from lanes and decays away
/// from obstacles and stop lines.
const LAMBDA_INIT: [f64; RISK_CHANNELS] = [0.5, -1.0, -1.0];

/// Learned risk and cost parameters for one scene.
///
/// `beta` and `lambda` are `[channel][t]` with `steps` columns: the planning
/// horizon when time-varying, else 1 (broadcast over the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub steps: usize,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub w_smooth: [f64; 2],
    pub w_d: f64,
    pub v_bar: Vec<f64>,
}

impl RiskParams {
    /// Constant parameters, mostly for tests.
    pub fn constant(beta: [f64; 3], lambda: [f64; 3], w_smooth: [f64; 2], w_d: f64, v_bar: Vec<f64>) -> Self {
        RiskParams {
            steps: 1,
            beta: beta.to_vec(),
            lambda: lambda.to_vec(),
            w_smooth,
            w_d,
            v_bar,
        }
    }

    #[inline]
    pub fn slot(&self, channel: usize, t: usize) -> usize {
        channel * self.steps + if self.steps == 1 { 0 } else { t }
    }

    #[inline]
    pub fn beta_at(&self, channel: usize, t: usize) -> f64 {
        self.beta[self.slot(channel, t)]
    }

    #[inline]
    pub fn lambda_at(&self, channel: usize, t: usize) -> f64 {
        self.lambda[self.slot(channel, t)]
    }

    /// Same shape, all zeros: used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        RiskParams {
            steps: self.steps,
            beta: vec![0.0; self.beta.len()],
            lambda: vec![0.0; self.lambda.len()],
            w_smooth: [0.0; 2],
            w_d: 0.0,
            v_bar: vec![0.0; self.v_bar.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta
            .iter()
            .chain(&self.lambda)
            .chain(&self.w_smooth)
            .chain(std::iter::once(&self.w_d))
            .chain(&self.v_bar)
            .all(|v| v.is_finite())
    }
}

/// The five heads mapping scene features to [`RiskParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskHeads {
    pub tv: bool,
    pub horizon: usize,
    pub beta: MlpHead,
    pub lambda: MlpHead,
    pub w_smooth: MlpHead,
    pub w_d: MlpHead,
    pub v_bar: MlpHead,
}

/// Flat parameter gradients, one vector per head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub w_smooth: Vec<f64>,
    pub w_d: Vec<f64>,
    pub v_bar: Vec<f64>,
}

impl HeadGrads {
    pub fn flat(&self) -> Vec<f64> {
        [&self.beta, &self.lambda, &self.w_smooth, &self.w_d, &self.v_bar]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

impl RiskHeads {
    /// Two tanh hidden layers of width 32 per head; output layers start at
    /// zero with fixed biases.
    pub fn new(tv: bool, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tp = if tv { horizon } else { 1 };
        let sizes = |out: usize| [FEATURE_DIM, HIDDEN, HIDDEN, out];
        let lambda_bias: Vec<f64> = LAMBDA_INIT
            .iter()
            .flat_map(|&l| std::iter::repeat(l).take(tp))
            .collect();
        RiskHeads {
            tv,
            horizon,
            beta: MlpHead::new(&sizes(RISK_CHANNELS * tp), OutputTransform::Exp, &[0.0], &mut rng),
            lambda: MlpHead::new(
                &sizes(RISK_CHANNELS * tp),
                OutputTransform::Identity,
                &lambda_bias,
                &mut rng,
            ),
            w_smooth: MlpHead::new(&sizes(2), OutputTransform::Softplus, &[0.0], &mut rng),
            w_d: MlpHead::new(&sizes(1), OutputTransform::Softplus, &[0.0], &mut rng),
            v_bar: MlpHead::new(&sizes(horizon), OutputTransform::Softplus, &[0.0], &mut rng),
        }
    }

    /// Every parameter zero.
    pub fn zeros(tv: bool, horizon: usize) -> Self {
        let tp = if tv { horizon } else { 1 };
        let sizes = |out: usize| [FEATURE_DIM, HIDDEN, HIDDEN, out];
        RiskHeads {
            tv,
            horizon,
            beta: MlpHead::zeros(&sizes(RISK_CHANNELS * tp), OutputTransform::Exp),
            lambda: MlpHead::zeros(&sizes(RISK_CHANNELS * tp), OutputTransform::Identity),
            w_smooth: MlpHead::zeros(&sizes(2), OutputTransform::Softplus),
            w_d: MlpHead::zeros(&sizes(1), OutputTransform::Softplus),
            v_bar: MlpHead::zeros(&sizes(horizon), OutputTransform::Softplus),
        }
    }

    pub fn heads(&self) -> [(&'static str, &MlpHead); 5] {
        [
            ("beta", &self.beta),
            ("lambda", &self.lambda),
            ("w_smooth", &self.w_smooth),
            ("w_d", &self.w_d),
            ("v_bar", &self.v_bar),
        ]
    }

    fn heads_mut(&mut self) -> [&mut MlpHead; 5] {
        [
            &mut self.beta,
            &mut self.lambda,
            &mut self.w_smooth,
            &mut self.w_d,
            &mut self.v_bar,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.heads().iter().map(|(_, h)| h.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.heads().iter().flat_map(|(_, h)| h.params()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for h in self.heads_mut() {
            let n = h.param_count();
            h.set_params(&flat[k..k + n]);
            k += n;
        }
    }

    /// Verifies every head against the configured architecture.
    pub fn check(&self, tv: bool) -> Result<()> {
        let tp = if tv { self.horizon } else { 1 };
        let expected = [RISK_CHANNELS * tp, RISK_CHANNELS * tp, 2, 1, self.horizon];
        let transforms = [
            OutputTransform::Exp,
            OutputTransform::Identity,
            OutputTransform::Softplus,
            OutputTransform::Softplus,
            OutputTransform::Softplus,
        ];
        for (((name, head), out), transform) in self.heads().into_iter().zip(expected).zip(transforms) {
            head.check(name)?;
            if head.input_dim() != FEATURE_DIM || head.output_dim() != out {
                return Err(Error::Shape {
                    head: name.to_string(),
                    detail: format!(
                        "expected {FEATURE_DIM} -> {out}, found {} -> {}",
                        head.input_dim(),
                        head.output_dim()
                    ),
                });
            }
            if head.transform != transform {
                return Err(Error::Shape {
                    head: name.to_string(),
                    detail: format!("expected {transform:?} output, found {:?}", head.transform),
                });
            }
        }
        Ok(())
    }
}

/// Per-head caches from [`forward_heads_cached`].
pub struct HeadCaches([MlpCache; 5]);

pub(crate) fn forward_heads_cached(
    features: &SceneFeatures,
    heads: &RiskHeads,
    tv: bool,
) -> Result<(RiskParams, HeadCaches)> {
    heads.check(tv)?;
    let x = features.as_slice();
    let caches = heads.heads().map(|(_, h)| h.forward_cached(x));
    let [beta, lambda, w_s, w_d, v_bar] = &caches;
    let params = RiskParams {
        steps: if tv { heads.horizon } else { 1 },
        beta: beta.output.clone(),
        lambda: lambda.output.clone(),
        w_smooth: [w_s.output[0], w_s.output[1]],
        w_d: w_d.output[0],
        v_bar: v_bar.output.clone(),
    };
    Ok((params, HeadCaches(caches)))
}

pub fn forward_heads(features: &SceneFeatures, heads: &RiskHeads, tv: bool) -> Result<RiskParams> {
    forward_heads_cached(features, heads, tv).map(|(p, _)| p)
}

pub(crate) fn backward_heads_cached(heads: &RiskHeads, caches: &HeadCaches, upstream: &RiskParams) -> HeadGrads {
    let [c_beta, c_lambda, c_ws, c_wd, c_vbar] = &caches.0;
    HeadGrads {
        beta: heads.beta.backward(c_beta, &upstream.beta).0,
        lambda: heads.lambda.backward(c_lambda, &upstream.lambda).0,
        w_smooth: heads.w_smooth.backward(c_ws, &upstream.w_smooth).0,
        w_d: heads.w_d.backward(c_wd, &[upstream.w_d]).0,
        v_bar: heads.v_bar.backward(c_vbar, &upstream.v_bar).0,
    }
}

/// Gradient of a scalar loss with respect to every head parameter, given
/// the loss gradient with respect to the head outputs.
pub fn backward_heads(features: &SceneFeatures, heads: &RiskHeads, upstream: &RiskParams) -> Result<HeadGrads> {
    let (params, caches) = forward_heads_cached(features, heads, heads.tv)?;
    if upstream.beta.len() != params.beta.len()
        || upstream.lambda.len() != params.lambda.len()
        || upstream.v_bar.len() != params.v_bar.len()
    {
        return Err(Error::Shape {
            head: "upstream".into(),
            detail: format!(
                "gradient shapes beta {} / lambda {} / v_bar {} do not match outputs {} / {} / {}",
                upstream.beta.len(),
                upstream.lambda.len(),
                upstream.v_bar.len(),
                params.beta.len(),
                params.lambda.len(),
                params.v_bar.len()
            ),
        });
    }
    Ok(backward_heads_cached(heads, &caches, upstream))
}
