use serde::{Deserialize, Serialize};

pub type Momentum3 = [f64; 3];

/// Event (t, x) in Minkowski space with signature (−,+,+,+).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: [f64; 3],
}

impl SpacetimePoint {
    pub const ORIGIN: Self = Self { t: 0.0, x: [0.0; 3] };

    pub fn new(t: f64, x: [f64; 3]) -> Self {
        Self { t, x }
    }

    pub fn shifted(self, a: f64) -> Self {
        Self { t: self.t + a, ..self }
    }

    /// (Δt, |Δx|, unit vector of Δx) from `other` to `self`.
    pub fn separation(&self, other: &Self) -> (f64, f64, [f64; 3]) {
        let d = sub(self.x, other.x);
        let r = norm(d);
        let dir = if r > 0.0 { [d[0] / r, d[1] / r, d[2] / r] } else { [0.0, 0.0, 1.0] };
        (self.t - other.t, r, dir)
    }
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: [f64; 3], c: f64) -> [f64; 3] {
    [a[0] * c, a[1] * c, a[2] * c]
}

pub fn omega(p: f64, m: f64) -> f64 {
    (p * p + m * m).sqrt()
}
