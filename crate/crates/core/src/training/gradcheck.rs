//! Central-difference verification of analytic gradients.

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error per unit of loss magnitude.
/// Central differences cannot resolve entries much below
/// `f64::EPSILON * |loss| / STEP`, so the floor scales with the loss and
/// the check is invariant to rescaling it.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` on every
/// coordinate of `params`. The relative-error floor is
/// `REL_FLOOR * max(1, |loss(params)|)`.
pub fn gradient_check<F>(loss: F, params: &[f64], analytic: &[f64], tolerance: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    let indices: Vec<usize> = (0..params.len()).collect();
    gradient_check_subset(loss, params, analytic, &indices, tolerance)
}

/// As [`gradient_check`], restricted to `indices`.
pub fn gradient_check_subset<F>(
    loss: F,
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    let floor = REL_FLOOR * loss(&x).abs().max(1.0);
    let mut worst = (0.0, None);
    for &i in indices {
        let orig = x[i];
        x[i] = orig + STEP;
        let up = loss(&x);
        x[i] = orig - STEP;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = relative_error(analytic[i], numeric, floor);
        if err > worst.0 || err.is_nan() {
            worst = (err, Some(i));
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: indices.len(),
        tolerance,
        passed: worst.0 < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_is_exact() {
        let w = [0.5, -2.0, 3.0];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let r = gradient_check(f, &[1.0, 2.0, 3.0], &w, 1e-10);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let f = |x: &[f64]| x[0] * x[0] + x[1].sin();
        let p = [0.7, 0.2];
        let good = [1.4, 0.2f64.cos()];
        assert!(gradient_check(f, &p, &good, 1e-6).passed);
        let bad = [1.4, 1.1 * 0.2f64.cos()];
        let r = gradient_check(f, &p, &bad, 1e-4);
        assert!(!r.passed);
        assert_eq!(r.worst_index, Some(1));
    }

    #[test]
    fn verdict_survives_rescaled_loss() {
        let p = [0.3, -1.2, 2.0];
        let f = |x: &[f64]| x[0].exp() + x[1] * x[2];
        let g = [0.3f64.exp(), 2.0, -1.2];
        for k in [1e-3, 1.0, 1e4] {
            let scaled: Vec<f64> = g.iter().map(|v| v * k).collect();
            let r = gradient_check(|x| k * f(x), &p, &scaled, 1e-6);
            assert!(r.passed, "{k}: {r:?}");
            let mut bad = scaled.clone();
            bad[0] *= 1.001;
            assert!(!gradient_check(|x| k * f(x), &p, &bad, 1e-4).passed);
        }
    }
}
