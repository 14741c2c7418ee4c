use serde::{Deserialize, Serialize};

use super::convex_hull_2d;

/// Rotated rectangle; `angle` is the direction of the `width` side in
/// radians, normalised to `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect2D {
    pub center: [f64; 2],
    pub angle: f64,
    pub width: f64,
    pub height: f64,
}

impl OrientedRect2D {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angle.sin_cos();
        ([c, s], [-s, c])
    }

    /// Local coordinates of `p` along the width and height axes.
    pub fn local(&self, p: [f64; 2]) -> [f64; 2] {
        let (u, v) = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        [d[0] * u[0] + d[1] * u[1], d[0] * v[0] + d[1] * v[1]]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let l = self.local(p);
        l[0].abs() <= self.width / 2.0 + 1e-9 && l[1].abs() <= self.height / 2.0 + 1e-9
    }

    /// Same rectangle with both sides grown by `factor` (1.1 = 10 % larger).
    pub fn scaled(&self, factor: f64) -> Self {
        Self { width: self.width * factor, height: self.height * factor, ..*self }
    }

    /// Shortest side over longest side, in `(0, 1]`.
    pub fn aspect_ratio(&self) -> f64 {
        if self.width <= 0.0 {
            return 1.0;
        }
        self.height / self.width
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        let c = self.center;
        let at = |a: f64, b: f64| [c[0] + u[0] * a + v[0] * b, c[1] + u[1] * a + v[1] * b];
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }
}

/// Minimum-area enclosing rectangle of a 2D point set (rotating calipers
/// over the convex hull edges). Returns `None` for empty input.
pub fn min_area_rect(points: &[[f64; 2]]) -> Option<OrientedRect2D> {
    let hull = convex_hull_2d(points);
    if hull.is_empty() {
        return None;
    }
    if hull.len() == 1 {
        return Some(OrientedRect2D { center: hull[0], angle: 0.0, width: 0.0, height: 0.0 });
    }
    let mut best: Option<(f64, OrientedRect2D)> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let theta = (b[1] - a[1]).atan2(b[0] - a[0]);
        let (s, c) = theta.sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let u = p[0] * c + p[1] * s;
            let v = -p[0] * s + p[1] * c;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let (eu, ev) = (u1 - u0, v1 - v0);
        let area = eu * ev;
        let (uc, vc) = ((u0 + u1) / 2.0, (v0 + v1) / 2.0);
        let center = [uc * c - vc * s, uc * s + vc * c];
        let (angle, width, height) = if eu >= ev { (theta, eu, ev) } else { (theta + std::f64::consts::FRAC_PI_2, ev, eu) };
        let rect = OrientedRect2D { center, angle: normalize_angle(angle), width, height };
        let better = match &best {
            None => true,
            Some((ba, br)) => {
                let tol = 1e-9 * ba.max(1.0);
                area < ba - tol || (area <= ba + tol && rect.angle < br.angle - 1e-12)
            }
        };
        if better {
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| r)
}

fn normalize_angle(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut a = a.rem_euclid(pi);
    if a >= pi - 1e-12 {
        a = 0.0;
    }
    a
}

/// Minimum-area rectangle around pixels treated as unit squares
/// `[x, x+1] × [y, y+1]`.
pub fn min_area_rect_pixels(pixels: &[(u32, u32)]) -> Option<OrientedRect2D> {
    let mut corners = Vec::with_capacity(pixels.len() * 4);
    for &(x, y) in pixels {
        let (x, y) = (x as f64, y as f64);
        corners.extend_from_slice(&[[x, y], [x + 1.0, y], [x, y + 1.0], [x + 1.0, y + 1.0]]);
    }
    min_area_rect(&corners)
}
