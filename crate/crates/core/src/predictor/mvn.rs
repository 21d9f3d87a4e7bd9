//! Bivariate normal components of the sequential mixture.

use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One predicted position distribution `(mu_x, mu_y, sigma_x, sigma_y, rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct MvnTuple {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl From<[f64; 5]> for MvnTuple {
    fn from(a: [f64; 5]) -> Self {
        MvnTuple {
            mu_x: a[0],
            mu_y: a[1],
            sigma_x: a[2],
            sigma_y: a[3],
            rho: a[4],
        }
    }
}

impl From<MvnTuple> for [f64; 5] {
    fn from(t: MvnTuple) -> Self {
        [t.mu_x, t.mu_y, t.sigma_x, t.sigma_y, t.rho]
    }
}

impl MvnTuple {
    pub fn mean(&self) -> Vec2 {
        Vec2::new(self.mu_x, self.mu_y)
    }

    pub fn is_valid(&self) -> bool {
        self.sigma_x > 0.0 && self.sigma_y > 0.0 && self.rho.abs() < 1.0
    }

    /// Lower Cholesky factor of the covariance, `[[l00, 0], [l10, l11]]`.
    pub fn cholesky(&self) -> [f64; 3] {
        [
            self.sigma_x,
            self.rho * self.sigma_y,
            self.sigma_y * (1.0 - self.rho * self.rho).sqrt(),
        ]
    }
}

/// `sigma = exp(raw)`, `rho = tanh(raw)`; means pass through.
pub fn decode_regularize(raw: [f64; 5]) -> MvnTuple {
    MvnTuple {
        mu_x: raw[0],
        mu_y: raw[1],
        sigma_x: raw[2].exp(),
        sigma_y: raw[3].exp(),
        rho: raw[4].tanh(),
    }
}

/// Log of the bivariate normal density at `p`.
pub fn mvn_log_density(p: Vec2, t: &MvnTuple) -> f64 {
    let zx = (p.x - t.mu_x) / t.sigma_x;
    let zy = (p.y - t.mu_y) / t.sigma_y;
    let q = 1.0 - t.rho * t.rho;
    let quad = zx * zx - 2.0 * t.rho * zx * zy + zy * zy;
    -(2.0 * PI).ln() - t.sigma_x.ln() - t.sigma_y.ln() - 0.5 * q.ln() - quad / (2.0 * q)
}

pub fn mvn_density(p: Vec2, t: &MvnTuple) -> f64 {
    mvn_log_density(p, t).exp()
}

/// Gradient of [`mvn_log_density`] with respect to `(mu_x, mu_y, sigma_x, sigma_y, rho)`.
pub fn mvn_log_density_grad(p: Vec2, t: &MvnTuple) -> [f64; 5] {
    let zx = (p.x - t.mu_x) / t.sigma_x;
    let zy = (p.y - t.mu_y) / t.sigma_y;
    let r = t.rho;
    let q = 1.0 - r * r;
    let quad = zx * zx - 2.0 * r * zx * zy + zy * zy;
    [
        (zx - r * zy) / (q * t.sigma_x),
        (zy - r * zx) / (q * t.sigma_y),
        -1.0 / t.sigma_x + (zx * zx - r * zx * zy) / (q * t.sigma_x),
        -1.0 / t.sigma_y + (zy * zy - r * zx * zy) / (q * t.sigma_y),
        r / q + zx * zy / q - r * quad / (q * q),
    ]
}

/// `mu + L * noise` for one component.
pub fn reparameterize(t: &MvnTuple, noise: [f64; 2]) -> Vec2 {
    let [l00, l10, l11] = t.cholesky();
    Vec2::new(t.mu_x + l00 * noise[0], t.mu_y + l10 * noise[0] + l11 * noise[1])
}

/// Vector-Jacobian product of [`reparameterize`] with respect to
/// `(mu_x, mu_y, sigma_x, sigma_y, rho)` for fixed noise.
pub fn reparameterize_vjp(t: &MvnTuple, noise: [f64; 2], upstream: Vec2) -> [f64; 5] {
    let s = (1.0 - t.rho * t.rho).sqrt();
    let dy_dsy = t.rho * noise[0] + s * noise[1];
    let dy_drho = t.sigma_y * (noise[0] - t.rho / s * noise[1]);
    [
        upstream.x,
        upstream.y,
        upstream.x * noise[0],
        upstream.y * dy_dsy,
        upstream.y * dy_drho,
    ]
}
