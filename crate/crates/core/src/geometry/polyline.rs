use super::vec2::{point_segment_distance, wrap_angle, Vec2};
use serde::{Deserialize, Serialize};

/// An ordered list of 2-D points (a reference lane centerline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline(pub Vec<Vec2>);

impl Polyline {
    pub fn points(&self) -> &[Vec2] {
        &self.0
    }

    /// Unsigned distance from `p` to the polyline.
    pub fn distance(&self, p: Vec2) -> f64 {
        match self.0.len() {
            0 => f64::INFINITY,
            1 => p.dist(self.0[0]),
            _ => self
                .0
                .windows(2)
                .map(|w| point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn length(&self) -> f64 {
        self.0.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

const CHUNK: usize = 8;

/// Bounding-box accelerated distance queries against one polyline.
#[derive(Debug, Clone)]
pub struct PolylineIndex {
    /// Segment start, direction and inverse squared length.
    segs: Vec<(Vec2, Vec2, f64)>,
    /// Box corners and segment range of every chunk.
    chunks: Vec<(Vec2, Vec2, usize, usize)>,
    single: Option<Vec2>,
}

impl PolylineIndex {
    pub fn new(line: &Polyline) -> Self {
        let segs: Vec<(Vec2, Vec2, f64)> = line
            .0
            .windows(2)
            .map(|w| {
                let ab = w[1] - w[0];
                let len_sq = ab.norm_sq();
                (w[0], ab, if len_sq > 0.0 { 1.0 / len_sq } else { 0.0 })
            })
            .collect();
        let chunks = (0..segs.len())
            .step_by(CHUNK)
            .map(|start| {
                let end = (start + CHUNK).min(segs.len());
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &(a, ab, _) in &segs[start..end] {
                    for q in [a, a + ab] {
                        lo = Vec2::new(lo.x.min(q.x), lo.y.min(q.y));
                        hi = Vec2::new(hi.x.max(q.x), hi.y.max(q.y));
                    }
                }
                (lo, hi, start, end)
            })
            .collect();
        PolylineIndex {
            segs,
            chunks,
            single: (line.0.len() == 1).then(|| line.0[0]),
        }
    }

    fn chunk_bound_sq(&self, k: usize, p: Vec2) -> f64 {
        let (lo, hi, _, _) = self.chunks[k];
        let dx = (lo.x - p.x).max(p.x - hi.x).max(0.0);
        let dy = (lo.y - p.y).max(p.y - hi.y).max(0.0);
        dx * dx + dy * dy
    }

    fn chunk_min_sq(&self, k: usize, p: Vec2, mut best: f64) -> f64 {
        let (_, _, start, end) = self.chunks[k];
        for &(a, ab, inv) in &self.segs[start..end] {
            let t = ((p - a).dot(ab) * inv).clamp(0.0, 1.0);
            best = best.min((a + ab * t - p).norm_sq());
        }
        best
    }

    /// Same value as [`Polyline::distance`].
    pub fn distance(&self, p: Vec2) -> f64 {
        if let Some(q) = self.single {
            return p.dist(q);
        }
        if self.chunks.is_empty() {
            return f64::INFINITY;
        }
        let first = (0..self.chunks.len())
            .min_by(|&i, &j| self.chunk_bound_sq(i, p).total_cmp(&self.chunk_bound_sq(j, p)))
            .unwrap_or(0);
        let mut best = self.chunk_min_sq(first, p, f64::INFINITY);
        for k in 0..self.chunks.len() {
            if k != first && self.chunk_bound_sq(k, p) < best {
                best = self.chunk_min_sq(k, p, best);
            }
        }
        best.sqrt()
    }
}

/// Curvilinear (Frenet) frame along a polyline.
///
/// Arc length `s` runs along the polyline and extends linearly past both
/// ends; the lateral offset `d` is positive to the left. Normals are
/// blended between vertices so that `point_at` is continuous in `s`.
#[derive(Debug, Clone)]
pub struct LaneFrame {
    pts: Vec<Vec2>,
    cum: Vec<f64>,
    tangents: Vec<Vec2>,
    vertex_normals: Vec<Vec2>,
}

impl LaneFrame {
    /// Builds a frame; consecutive duplicate points are dropped. Returns
    /// `None` when fewer than two distinct points remain.
    pub fn new(line: &Polyline) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(line.0.len());
        for &p in &line.0 {
            if pts.last().map_or(true, |q: &Vec2| q.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let tangents: Vec<Vec2> = pts.windows(2).map(|w| (w[1] - w[0]).normalized()).collect();
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(0.0);
        for w in pts.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].dist(w[1]));
        }
        let n_seg = tangents.len();
        let vertex_normals = (0..pts.len())
            .map(|i| {
                if i == 0 {
                    tangents[0].perp()
                } else if i == n_seg {
                    tangents[n_seg - 1].perp()
                } else {
                    (tangents[i - 1].perp() + tangents[i].perp()).normalized()
                }
            })
            .collect();
        Some(Self {
            pts,
            cum,
            tangents,
            vertex_normals,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let n_seg = self.tangents.len();
        match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(n_seg - 1),
        }
    }

    /// Point on the centerline at arc length `s`.
    pub fn center_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        self.pts[i] + self.tangents[i] * (s - self.cum[i])
    }

    /// Unit left normal at arc length `s`.
    pub fn normal_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        let len = self.cum[i + 1] - self.cum[i];
        let f = (s - self.cum[i]) / len;
        if !(0.0..=1.0).contains(&f) {
            return self.tangents[i].perp();
        }
        (self.vertex_normals[i] * (1.0 - f) + self.vertex_normals[i + 1] * f).normalized()
    }

    /// Heading of the centerline tangent at `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangents[self.segment_at(s)].angle()
    }

    /// Signed curvature averaged over `[s - half, s + half]`.
    pub fn curvature_at(&self, s: f64, half: f64) -> f64 {
        wrap_angle(self.heading_at(s + half) - self.heading_at(s - half)) / (2.0 * half)
    }

    pub fn point_at(&self, s: f64, d: f64) -> Vec2 {
        self.center_at(s) + self.normal_at(s) * d
    }

    /// Frenet coordinates `(s, d)` of `p`, consistent with `point_at`.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let n_seg = self.tangents.len();
        let (mut best, mut best_dist) = (0, f64::INFINITY);
        for i in 0..n_seg {
            let dist = point_segment_distance(p, self.pts[i], self.pts[i + 1]);
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        let len = self.cum[best + 1] - self.cum[best];
        let mut t = (p - self.pts[best]).dot(self.tangents[best]);
        if best > 0 {
            t = t.max(0.0);
        }
        if best + 1 < n_seg {
            t = t.min(len);
        }
        let mut s = self.cum[best] + t;

        // Blended normals are not exactly perpendicular to the segment, so
        // refine s until p - center(s) is parallel to normal(s).
        let residual = |s: f64| self.normal_at(s).cross(p - self.center_at(s));
        for _ in 0..12 {
            let g = residual(s);
            if g.abs() < 1e-13 {
                break;
            }
            let h = 1e-6;
            let dg = (residual(s + h) - residual(s - h)) / (2.0 * h);
            if dg.abs() < 1e-9 {
                break;
            }
            s -= g / dg;
        }
        let d = (p - self.center_at(s)).dot(self.normal_at(s));
        (s, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(radius: f64, n: usize) -> Polyline {
        Polyline(
            (0..n)
                .map(|k| {
                    let th = k as f64 * 0.05;
                    Vec2::new(radius * th.sin(), radius * (1.0 - th.cos()))
                })
                .collect(),
        )
    }

    #[test]
    fn straight_frame_is_cartesian() {
        let f = LaneFrame::new(&Polyline(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)])).unwrap();
        assert_eq!(f.point_at(3.0, 1.5), Vec2::new(3.0, 1.5));
        assert_eq!(f.point_at(-2.0, 0.0), Vec2::new(-2.0, 0.0));
        assert_eq!(f.point_at(12.0, -1.0), Vec2::new(12.0, -1.0));
        let (s, d) = f.project(Vec2::new(4.0, -2.0));
        assert!((s - 4.0).abs() < 1e-12 && (d + 2.0).abs() < 1e-12);
    }

    #[test]
    fn project_inverts_point_at_on_arc() {
        let f = LaneFrame::new(&arc(40.0, 60)).unwrap();
        for &(s, d) in &[(5.0, 0.0), (37.3, 2.5), (80.0, -3.0), (-4.0, 1.0), (125.0, 0.7)] {
            let p = f.point_at(s, d);
            let (s2, d2) = f.project(p);
            assert!(f.point_at(s2, d2).dist(p) < 1e-9, "({s},{d}) -> ({s2},{d2})");
            assert!((d2 - d).abs() < 1e-6);
        }
    }

    #[test]
    fn index_matches_brute_force() {
        let line = arc(40.0, 60);
        let idx = PolylineIndex::new(&line);
        for k in 0..200 {
            let p = Vec2::new(-20.0 + 0.7 * k as f64, 30.0 * (k as f64 * 0.37).sin());
            assert!((idx.distance(p) - line.distance(p)).abs() < 1e-12);
        }
        let dot = Polyline(vec![Vec2::new(1.0, 1.0)]);
        assert_eq!(PolylineIndex::new(&dot).distance(Vec2::new(4.0, 5.0)), 5.0);
    }

    #[test]
    fn curvature_of_arc() {
        let f = LaneFrame::new(&arc(40.0, 60)).unwrap();
        assert!((f.curvature_at(40.0, 5.0) - 1.0 / 40.0).abs() < 1e-3);
    }

    #[test]
    fn duplicate_points_dropped() {
        let l = Polyline(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)]);
        assert!(LaneFrame::new(&l).is_none());
    }
}
