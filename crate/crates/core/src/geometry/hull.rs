use std::collections::HashSet;

use crate::Vec3;

/// Convex hull of 2D points, counter-clockwise, without collinear vertices
/// (monotone chain).
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Volume of the 3D convex hull (incremental construction). Flat or
/// degenerate point sets have volume 0.
pub fn convex_hull_volume(points: &[Vec3]) -> f64 {
    if points.len() < 4 {
        return 0.0;
    }
    let (lo, hi) = points.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let scale = (hi - lo).norm();
    if scale == 0.0 {
        return 0.0;
    }
    let eps = 1e-10 * scale;

    // initial tetrahedron from extreme points
    let a = 0;
    let Some(b) = farthest(points, |p| (p - points[a]).norm()) else { return 0.0 };
    if (points[b] - points[a]).norm() <= eps {
        return 0.0;
    }
    let ab = points[b] - points[a];
    let Some(c) = farthest(points, |p| ab.cross(&(p - points[a])).norm() / ab.norm()) else { return 0.0 };
    let n = ab.cross(&(points[c] - points[a]));
    if n.norm() / ab.norm() <= eps {
        return 0.0;
    }
    let Some(d) = farthest(points, |p| (n.dot(&(p - points[a])) / n.norm()).abs()) else { return 0.0 };
    if (n.dot(&(points[d] - points[a])) / n.norm()).abs() <= eps {
        return 0.0;
    }

    let interior = (points[a] + points[b] + points[c] + points[d]) / 4.0;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for f in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        faces.push(orient(points, f, &interior));
    }

    for (i, p) in points.iter().enumerate() {
        if [a, b, c, d].contains(&i) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| plane_distance(points, f, p) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, v)| **v) {
            for k in 0..3 {
                edges.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let mut next: Vec<[usize; 3]> = faces.iter().zip(&visible).filter(|(_, v)| !**v).map(|(f, _)| *f).collect();
        let mut horizon: Vec<(usize, usize)> =
            edges.iter().filter(|(u, v)| !edges.contains(&(*v, *u))).copied().collect();
        horizon.sort_unstable();
        for (u, v) in horizon {
            next.push([u, v, i]);
        }
        faces = next;
    }

    let origin = interior;
    faces
        .iter()
        .map(|f| {
            let (p0, p1, p2) = (points[f[0]] - origin, points[f[1]] - origin, points[f[2]] - origin);
            p0.dot(&p1.cross(&p2)) / 6.0
        })
        .sum::<f64>()
        .abs()
}

fn farthest(points: &[Vec3], metric: impl Fn(&Vec3) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let m = metric(p);
        if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}

fn plane_distance(points: &[Vec3], f: &[usize; 3], p: &Vec3) -> f64 {
    let n = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
    let len = n.norm();
    if len == 0.0 {
        return 0.0;
    }
    n.dot(&(p - points[f[0]])) / len
}

/// Orders the face so its normal points away from `interior`.
fn orient(points: &[Vec3], f: [usize; 3], interior: &Vec3) -> [usize; 3] {
    if plane_distance(points, &f, interior) > 0.0 {
        [f[0], f[2], f[1]]
    } else {
        f
    }
}
