use super::vec2::{point_segment_distance, Vec2};
use serde::{Deserialize, Serialize};

/// Convex polygon with counter-clockwise winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<Vec2>);

impl Polygon {
    pub fn vertices(&self) -> &[Vec2] {
        &self.0
    }

    /// Oriented rectangle centered at `center`.
    pub fn rectangle(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        let ux = Vec2::from_angle(heading) * (length / 2.0);
        let uy = Vec2::from_angle(heading).perp() * (width / 2.0);
        Polygon(vec![
            center - ux - uy,
            center + ux - uy,
            center + ux + uy,
            center - ux + uy,
        ])
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.0;
        (0..v.len()).map(|i| v[i].cross(v[(i + 1) % v.len()])).sum::<f64>() / 2.0
    }

    pub fn is_convex_ccw(&self) -> bool {
        let v = &self.0;
        let n = v.len();
        n >= 3
            && self.signed_area() > 0.0
            && (0..n).all(|i| {
                let a = v[i];
                let b = v[(i + 1) % n];
                let c = v[(i + 2) % n];
                (b - a).cross(c - b) >= -1e-12
            })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let v = &self.0;
        let n = v.len();
        (0..n).all(|i| (v[(i + 1) % n] - v[i]).cross(p - v[i]) >= 0.0)
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let v = &self.0;
        let n = v.len();
        let dist = (0..n)
            .map(|i| point_segment_distance(p, v[i], v[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        if self.contains(p) {
            -dist
        } else {
            dist
        }
    }

    pub fn translated(&self, by: Vec2) -> Polygon {
        Polygon(self.0.iter().map(|&p| p + by).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Polygon {
        Polygon::rectangle(Vec2::ZERO, 0.0, 2.0, 2.0)
    }

    #[test]
    fn rectangle_is_ccw_convex() {
        assert!(unit_box().is_convex_ccw());
        assert!((unit_box().signed_area() - 4.0).abs() < 1e-12);
        let mut cw = unit_box();
        cw.0.reverse();
        assert!(!cw.is_convex_ccw());
    }

    #[test]
    fn signed_distance_sign_convention() {
        let b = unit_box();
        assert!((b.signed_distance(Vec2::new(4.0, 0.0)) - 3.0).abs() < 1e-12);
        assert!((b.signed_distance(Vec2::new(0.0, 0.0)) + 1.0).abs() < 1e-12);
        assert!(b.signed_distance(Vec2::new(1.0, 0.3)).abs() < 1e-12);
        assert!((b.signed_distance(Vec2::new(4.0, 5.0)) - 5.0).abs() < 1e-12);
    }
}
