use deltaflow_core::Vec2;

/// Rigid planar transform: rotate by `heading`, then translate by `position`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading,
        }
    }

    /// Maps a body-frame point into the world frame.
    pub fn apply(&self, body: Vec2) -> Vec2 {
        self.position + body.rotate(self.heading)
    }

    pub fn inverse(&self) -> Pose {
        Pose {
            position: (-self.position).rotate(-self.heading),
            heading: -self.heading,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.apply(other.position),
            heading: self.heading + other.heading,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.heading.is_finite()
    }
}

/// Whether segments `a0-a1` and `b0-b1` cross, returning the parameter along
/// `a` at the crossing.
pub fn segment_crossing(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<f64> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let d = b0 - a0;
    let t = d.cross(s) / denom;
    let u = d.cross(r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Points spaced evenly by arc length around a closed polygon.
pub fn perimeter_points(vertices: &[Vec2], count: usize) -> Vec<Vec2> {
    let edges: Vec<(Vec2, Vec2)> = vertices
        .iter()
        .zip(vertices.iter().cycle().skip(1))
        .map(|(&a, &b)| (a, b))
        .collect();
    let total: f64 = edges.iter().map(|(a, b)| a.distance(*b)).sum();
    let spacing = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut edge = 0;
    let mut edge_start = 0.0;
    for k in 0..count {
        let s = (k as f64 + 0.5) * spacing;
        while edge + 1 < edges.len() && s > edge_start + edges[edge].0.distance(edges[edge].1) {
            edge_start += edges[edge].0.distance(edges[edge].1);
            edge += 1;
        }
        let (a, b) = edges[edge];
        let len = a.distance(b);
        let f = ((s - edge_start) / len).clamp(0.0, 1.0);
        out.push(a + (b - a) * f);
    }
    out
}

/// Whether `p` lies inside the convex polygon (counter-clockwise vertices).
pub fn inside_convex(vertices: &[Vec2], p: Vec2) -> bool {
    vertices
        .iter()
        .zip(vertices.iter().cycle().skip(1))
        .all(|(&a, &b)| (b - a).cross(p - a) >= 0.0)
}
