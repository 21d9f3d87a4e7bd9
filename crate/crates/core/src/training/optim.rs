//! First-order optimizers selectable by name.

use crate::registry::Registry;

/// Per-parameter optimizer memory.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptState {
    pub fn new(n: usize) -> Self {
        OptState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

pub trait Optimizer: Send + Sync {
    /// Applies one update in place. `lr == 0` leaves `params` unchanged.
    fn step(&self, params: &mut [f64], grad: &[f64], state: &mut OptState, lr: f64);
}

pub struct Sgd;

impl Optimizer for Sgd {
    fn step(&self, params: &mut [f64], grad: &[f64], state: &mut OptState, lr: f64) {
        state.step += 1;
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl Optimizer for AdamW {
    fn step(&self, params: &mut [f64], grad: &[f64], state: &mut OptState, lr: f64) {
        state.step += 1;
        let c1 = 1.0 - self.beta1.powi(state.step as i32);
        let c2 = 1.0 - self.beta2.powi(state.step as i32);
        for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            state.m[i] = self.beta1 * state.m[i] + (1.0 - self.beta1) * g;
            state.v[i] = self.beta2 * state.v[i] + (1.0 - self.beta2) * g * g;
            let update = (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + self.eps);
            *p -= lr * (update + self.weight_decay * *p);
        }
    }
}

pub const DEFAULT_OPTIMIZER: &str = "adamw";

pub fn optimizer_registry() -> Registry<dyn Optimizer> {
    let mut r: Registry<dyn Optimizer> = Registry::new("optimizer");
    r.register("adamw", Box::new(AdamW::default()))
        .register(
            "adam",
            Box::new(AdamW {
                weight_decay: 0.0,
                ..AdamW::default()
            }),
        )
        .register("sgd", Box::new(Sgd));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let reg = optimizer_registry();
        for name in ["adamw", "adam", "sgd"] {
            let mut p = vec![1.0, -2.0, 3.0];
            let mut st = OptState::new(3);
            reg.get(name).unwrap().step(&mut p, &[0.5, 0.5, -1.0], &mut st, 0.0);
            assert_eq!(p, vec![1.0, -2.0, 3.0]);
        }
    }

    #[test]
    fn first_adam_step_is_signed_rate() {
        let mut p = vec![0.0, 0.0];
        let mut st = OptState::new(2);
        AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        }
        .step(&mut p, &[3.0, -0.2], &mut st, 0.1);
        assert!((p[0] + 0.1).abs() < 1e-8 && (p[1] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![5.0];
        let mut st = OptState::new(1);
        let opt = AdamW::default();
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g, &mut st, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 0.05);
    }
}
