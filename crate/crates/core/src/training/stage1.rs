use super::{check_finite, mean_into, optimizer_registry, LossCurve, OptState, TrainConfig};
use crate::error::{Error, Result};
use crate::predictor::{scenario_loss_and_grad, PredictorModel, DEFAULT_MODALS};
use crate::scenario::Scenario;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean prediction loss over the scenes that contain agents.
pub fn predictor_dataset_loss(scenarios: &[Scenario], model: &PredictorModel) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in scenarios.iter().filter(|s| !s.agents.is_empty()) {
        sum += scenario_loss_and_grad(s, model)?.0;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Fits the predictor on every agent future in `scenarios`.
pub fn train_stage1(scenarios: &[Scenario], config: &TrainConfig) -> Result<(PredictorModel, LossCurve)> {
    config.validate()?;
    let horizon = scenarios.first().ok_or(Error::Empty("scenarios"))?.horizon();
    let usable: Vec<&Scenario> = scenarios.iter().filter(|s| !s.agents.is_empty()).collect();
    let mut model = PredictorModel::new(DEFAULT_MODALS, horizon, config.seed);
    let mut curve = LossCurve::new(&["l_pre"]);
    curve.push(0, vec![predictor_dataset_loss(scenarios, &model)?]);
    if usable.is_empty() || config.epochs == 0 {
        return Ok((model, curve));
    }
    let optimizer = optimizer_registry();
    let optimizer = optimizer.get(&config.optimizer)?;
    let mut params = model.mlp.params();
    let mut state = OptState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; params.len()];
            let mut loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (l, g) = scenario_loss_and_grad(usable[i], &model)?;
                loss += scale * l;
                mean_into(&mut grad, &g, scale);
            }
            check_finite(step, loss, &grad)?;
            optimizer.step(&mut params, &grad, &mut state, config.lr);
            model.mlp.set_params(&params);
            step += 1;
        }
        let loss = predictor_dataset_loss(scenarios, &model)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        curve.push(epoch, vec![loss]);
    }
    Ok((model, curve))
}
