//! Stage-2 imitation losses and their gradients with respect to costs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Population-variance floor of the consistency term.
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// Floor on target log-probabilities when the cost distribution is the target.
pub const LOG_FLOOR: f64 = -50.0;

/// `sum_t (v_bar_t - v_t)^2` and its gradient with respect to `v_bar`.
pub fn loss_velocity(v_bar: &[f64], demo: &[f64]) -> Result<(f64, Vec<f64>)> {
    if v_bar.len() != demo.len() {
        return Err(Error::Length {
            left: v_bar.len(),
            right: demo.len(),
        });
    }
    let grad: Vec<f64> = v_bar.iter().zip(demo).map(|(a, b)| 2.0 * (a - b)).collect();
    let loss = v_bar.iter().zip(demo).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((loss, grad))
}

/// Max-shifted `exp(-x) / sum exp(-x)`.
pub fn softmin(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = values.iter().map(|&v| (lo - v).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `log softmin(values)`, exact for finite inputs.
pub fn log_softmin(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let lse = values.iter().map(|&v| (lo - v).exp()).sum::<f64>().ln() - lo;
    values.iter().map(|&v| -v - lse).collect()
}

/// Which softmin distribution plays the target in the selection loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeDirection {
    /// `-sum q log p`: distances are the target, costs the prediction.
    #[default]
    DistanceTarget,
    /// `-sum p log q`.
    CostTarget,
}

/// Cross entropy between the cost distribution `p = softmin(costs)` and the
/// distance distribution `q = softmin(distances)`, with its gradient with
/// respect to the costs.
pub fn loss_selection(costs: &[f64], distances: &[f64], direction: CeDirection) -> Result<(f64, Vec<f64>)> {
    if costs.len() != distances.len() {
        return Err(Error::Length {
            left: costs.len(),
            right: distances.len(),
        });
    }
    if costs.is_empty() {
        return Err(Error::Empty("costs"));
    }
    let p = softmin(costs);
    let q = softmin(distances);
    match direction {
        CeDirection::DistanceTarget => {
            let log_p = log_softmin(costs);
            let loss = -q.iter().zip(&log_p).map(|(q, lp)| q * lp).sum::<f64>();
            let grad = q.iter().zip(&p).map(|(q, p)| q - p).collect();
            Ok((loss, grad))
        }
        CeDirection::CostTarget => {
            let log_q: Vec<f64> = log_softmin(distances).into_iter().map(|l| l.max(LOG_FLOOR)).collect();
            let loss = -p.iter().zip(&log_q).map(|(p, lq)| p * lq).sum::<f64>();
            let mean: f64 = p.iter().zip(&log_q).map(|(p, lq)| p * lq).sum();
            let grad = p.iter().zip(&log_q).map(|(p, lq)| p * (lq - mean)).collect();
            Ok((loss, grad))
        }
    }
}

/// Index of the smallest distance; ties go to the lowest index.
pub fn nearest_index(distances: &[f64]) -> Result<usize> {
    if distances.is_empty() {
        return Err(Error::Empty("distances"));
    }
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Cost of the candidate nearest to the demo minus the demo's own cost.
/// Returns the value and the nearest index; the gradient is `+1` on that
/// candidate and `-1` on the demo cost.
pub fn loss_l2(costs: &[f64], distances: &[f64], demo_cost: f64) -> Result<(f64, usize)> {
    if costs.len() != distances.len() {
        return Err(Error::Length {
            left: costs.len(),
            right: distances.len(),
        });
    }
    let k = nearest_index(distances)?;
    Ok((costs[k] - demo_cost, k))
}

/// `1 / max(Var(costs), floor)` with population variance, and its gradient.
pub fn loss_consistency(costs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if costs.len() < 2 {
        return Err(Error::Length {
            left: costs.len(),
            right: 2,
        });
    }
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    if var <= VARIANCE_FLOOR {
        return Ok((1.0 / VARIANCE_FLOOR, vec![0.0; costs.len()]));
    }
    let scale = -2.0 / (var * var * n);
    Ok((1.0 / var, costs.iter().map(|c| scale * (c - mean)).collect()))
}

/// The five imitation terms.
pub const LOSS_TERMS: [&str; 5] = ["demo_cost", "l_sel", "l_l2", "l_con", "l_v"];

/// Which terms enter the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossMask {
    pub demo_cost: bool,
    pub l_sel: bool,
    pub l_l2: bool,
    pub l_con: bool,
    pub l_v: bool,
}

impl Default for LossMask {
    fn default() -> Self {
        LossMask {
            demo_cost: true,
            l_sel: true,
            l_l2: true,
            l_con: true,
            l_v: true,
        }
    }
}

impl LossMask {
    pub fn as_array(&self) -> [bool; 5] {
        [self.demo_cost, self.l_sel, self.l_l2, self.l_con, self.l_v]
    }

    fn slot(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "demo_cost" => &mut self.demo_cost,
            "l_sel" => &mut self.l_sel,
            "l_l2" => &mut self.l_l2,
            "l_con" => &mut self.l_con,
            "l_v" => &mut self.l_v,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|&b| b) {
            Ok(())
        } else {
            Err(Error::Config("loss mask disables every term".into()))
        }
    }
}

/// Comma-separated edits of the all-on mask: `-name` removes a term,
/// `+name` or `name` keeps it. `all` is the default mask.
impl FromStr for LossMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mask = LossMask::default();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty() && *t != "all") {
            let (on, name) = match item.strip_prefix('-') {
                Some(rest) => (false, rest),
                None => (true, item.strip_prefix('+').unwrap_or(item)),
            };
            *mask.slot(name).ok_or_else(|| {
                Error::Config(format!("unknown loss term `{name}` (known: {})", LOSS_TERMS.join(", ")))
            })? = on;
        }
        mask.validate()?;
        Ok(mask)
    }
}

impl fmt::Display for LossMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let off: Vec<String> = LOSS_TERMS
            .iter()
            .zip(self.as_array())
            .filter(|(_, on)| !on)
            .map(|(n, _)| format!("-{n}"))
            .collect();
        if off.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&off.join(","))
        }
    }
}

/// Raw values of the five terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub demo_cost: f64,
    pub l_sel: f64,
    pub l_l2: f64,
    pub l_con: f64,
    pub l_v: f64,
}

impl LossParts {
    pub fn as_array(&self) -> [f64; 5] {
        [self.demo_cost, self.l_sel, self.l_l2, self.l_con, self.l_v]
    }
}

/// Named terms plus the masked total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub demo_cost: f64,
    pub l_sel: f64,
    pub l_l2: f64,
    pub l_con: f64,
    pub l_v: f64,
    pub total: f64,
    pub mask: LossMask,
}

pub fn total_loss(parts: LossParts, mask: LossMask) -> LossBreakdown {
    let total = parts
        .as_array()
        .iter()
        .zip(mask.as_array())
        .filter(|(_, on)| *on)
        .map(|(v, _)| v)
        .sum();
    LossBreakdown {
        demo_cost: parts.demo_cost,
        l_sel: parts.l_sel,
        l_l2: parts.l_l2,
        l_con: parts.l_con,
        l_v: parts.l_v,
        total,
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmin_examples() {
        assert_eq!(softmin(&[4.0, 4.0]), vec![0.5, 0.5]);
        let p = softmin(&[0.0, 3f64.ln()]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn selection_closed_form() {
        let (l, _) = loss_selection(&[0.0, 10.0], &[0.0, 1e3], CeDirection::DistanceTarget).unwrap();
        assert!((l - (1.0 + (-10f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn selection_equal_distributions_give_entropy() {
        let v = [0.3, 1.1, 2.0];
        let q = softmin(&v);
        let h: f64 = -q.iter().map(|q| q * q.ln()).sum::<f64>();
        let (l, g) = loss_selection(&v, &v, CeDirection::DistanceTarget).unwrap();
        assert!((l - h).abs() < 1e-12);
        assert!(g.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(loss_consistency(&[0.0, 2.0]).unwrap().0, 1.0);
        assert_eq!(loss_consistency(&[3.0, 3.0, 3.0]).unwrap().0, 1e8);
        assert!(loss_consistency(&[1.0]).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(loss_l2(&[5.0, 3.0], &[0.4, 0.1], 1.0).unwrap(), (2.0, 1));
        assert_eq!(loss_l2(&[1.0, 3.0], &[0.0, 0.1], 1.0).unwrap(), (0.0, 0));
    }

    #[test]
    fn velocity_examples() {
        let (l, g) = loss_velocity(&[11.0; 30], &[10.0; 30]).unwrap();
        assert_eq!(l, 30.0);
        assert!(g.iter().all(|&g| g == 2.0));
    }

    #[test]
    fn mask_parsing() {
        let m: LossMask = "-demo_cost".parse().unwrap();
        assert!(!m.demo_cost && m.l_sel && m.l_v);
        assert_eq!(m.to_string(), "-demo_cost");
        assert_eq!("all".parse::<LossMask>().unwrap(), LossMask::default());
        assert!("-nope".parse::<LossMask>().is_err());
        assert!("-demo_cost,-l_sel,-l_l2,-l_con,-l_v".parse::<LossMask>().is_err());
    }

    #[test]
    fn total_sums_enabled_terms() {
        let parts = LossParts {
            demo_cost: 1.0,
            l_sel: 1.0,
            l_l2: 1.0,
            l_con: 1.0,
            l_v: 1.0,
        };
        assert_eq!(total_loss(parts, LossMask::default()).total, 5.0);
        assert_eq!(total_loss(parts, "-l_v".parse().unwrap()).total, 4.0);
    }
}
