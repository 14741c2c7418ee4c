//! Geometric primitives: plane fitting, eigen-features, shrinking-ball radii,
//! oriented rectangles, convex hulls and nearest-neighbour search.

mod ball;
mod hull;
mod kdtree;
mod rect;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::Vec3;

pub use ball::{shrinking_ball_radius, shrinking_ball_trace, surface_samples, ShrinkingBall};
pub use hull::{convex_hull_2d, convex_hull_volume};
pub use kdtree::KdTree;
pub use rect::{min_area_rect, min_area_rect_pixels, OrientedRect2D};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("empty input")]
    Empty,
}

/// Plane `n·x = offset` with the RMS distance of the points it was fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    pub rms: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Angle between the plane normal and `n` in degrees, ignoring orientation.
    pub fn normal_deviation_deg(&self, n: &Vec3) -> f64 {
        self.normal.dot(n).abs().min(1.0).acos().to_degrees()
    }
}

/// Shape descriptors from the covariance spectrum λ1 ≥ λ2 ≥ λ3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenFeatures {
    pub linearity: f64,
    pub planarity: f64,
    pub sphericity: f64,
}

fn weighted_covariance(points: &[(Vec3, f64)]) -> Option<(Vec3, Matrix3<f64>)> {
    let total: f64 = points.iter().map(|(_, w)| *w).sum();
    if !(total > 0.0) {
        return None;
    }
    let mean = points.iter().fold(Vec3::zeros(), |acc, (p, w)| acc + p * *w) / total;
    let mut cov = Matrix3::zeros();
    for (p, w) in points {
        let d = p - mean;
        cov += d * d.transpose() * *w;
    }
    Some((mean, cov / total))
}

/// Eigenvalues in descending order with matching eigenvectors.
fn sorted_eigen(cov: Matrix3<f64>) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.map(|i| eig.eigenvalues[i].max(0.0));
    let vecs = idx.map(|i| eig.eigenvectors.column(i).into_owned());
    (vals, vecs)
}

/// Least-squares plane through weighted points.
///
/// The normal is oriented so that `n·ẑ ≥ 0`; for vertical planes it points
/// towards +x (then +y).
pub fn fit_plane(points: &[(Vec3, f64)]) -> Result<Plane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::Degenerate("fewer than 3 points"));
    }
    let (mean, cov) = weighted_covariance(points).ok_or(GeometryError::Degenerate("zero total weight"))?;
    let (vals, vecs) = sorted_eigen(cov);
    if vals[0] <= 0.0 || vals[1] <= 1e-12 * vals[0] {
        return Err(GeometryError::Degenerate("collinear points"));
    }
    let normal = orient_normal(vecs[2].normalize());
    let offset = normal.dot(&mean);
    let total: f64 = points.iter().map(|(_, w)| *w).sum();
    let sq: f64 = points.iter().map(|(p, w)| w * (normal.dot(p) - offset).powi(2)).sum();
    Ok(Plane { normal, offset, rms: (sq / total).sqrt() })
}

pub(crate) fn orient_normal(n: Vec3) -> Vec3 {
    const EPS: f64 = 1e-12;
    let flip = if n.z.abs() > EPS {
        n.z < 0.0
    } else if n.x.abs() > EPS {
        n.x < 0.0
    } else {
        n.y < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// Euclidean distance from `p` to the closed triangle `abc`.
pub fn point_triangle_distance(p: &Vec3, [a, b, c]: [Vec3; 3]) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    (p - (a + ab * v + ac * w)).norm()
}

/// Linearity, planarity and sphericity of a point set.
pub fn eigen_features(points: &[Vec3]) -> Result<EigenFeatures, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::Degenerate("fewer than 3 points"));
    }
    let weighted: Vec<_> = points.iter().map(|p| (*p, 1.0)).collect();
    let (_, cov) = weighted_covariance(&weighted).ok_or(GeometryError::Empty)?;
    let (l, _) = sorted_eigen(cov);
    if l[0] <= 0.0 {
        // all points coincide: treat as isotropic
        return Ok(EigenFeatures { linearity: 0.0, planarity: 0.0, sphericity: 1.0 });
    }
    Ok(EigenFeatures {
        linearity: (l[0] - l[1]) / l[0],
        planarity: (l[1] - l[2]) / l[0],
        sphericity: l[2] / l[0],
    })
}
