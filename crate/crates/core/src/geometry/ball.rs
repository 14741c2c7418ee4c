use super::{GeometryError, KdTree};
use crate::mesh::TexturedMesh;
use crate::Vec3;

const MAX_ITERATIONS: usize = 30;
const TOLERANCE: f64 = 1e-4;
const DENOMINATOR_EPS: f64 = 1e-9;
const COINCIDENT: f64 = 1e-9;

/// Face centroids followed by vertices: the sample set for ball queries.
pub fn surface_samples(mesh: &TexturedMesh) -> Vec<Vec3> {
    let mut s: Vec<Vec3> = (0..mesh.face_count()).map(|f| mesh.face_centroid(f)).collect();
    s.extend_from_slice(mesh.vertices());
    s
}

/// Interior ball radius at `seed`.
///
/// `normal` is the unit outward surface normal at the seed; the ball centre
/// is `seed − r·normal`, i.e. the ball lies on the inner side of the surface.
/// Each step takes the sample nearest to the current centre and, if it lies
/// strictly inside the ball, shrinks the radius to
/// `‖q1−q2‖² / (2 n·(q1−q2))`.
pub fn shrinking_ball_radius(seed: &Vec3, normal: &Vec3, samples: &KdTree, r_init: f64) -> Result<f64, GeometryError> {
    shrinking_ball_trace(seed, normal, samples, r_init).map(|t| *t.last().unwrap())
}

/// Same iteration, returning every accepted radius starting with `r_init`.
pub fn shrinking_ball_trace(
    seed: &Vec3,
    normal: &Vec3,
    samples: &KdTree,
    r_init: f64,
) -> Result<Vec<f64>, GeometryError> {
    if !(r_init > 0.0) {
        return Err(GeometryError::Degenerate("r_init must be positive"));
    }
    let coincident = |i: usize| (samples.points()[i] - seed).norm() < COINCIDENT;
    if samples.nearest_filtered(seed, coincident).is_none() {
        return Err(GeometryError::Empty);
    }
    let mut r = r_init;
    let mut trace = vec![r];
    for _ in 0..MAX_ITERATIONS {
        let center = seed - normal * r;
        // only samples strictly inside the ball can shrink it
        let inside = (r * (1.0 - 1e-12)).powi(2);
        let Some((qi, _)) = samples.nearest_below(&center, inside, coincident) else {
            break;
        };
        let diff = seed - samples.points()[qi];
        let denom = 2.0 * normal.dot(&diff);
        if denom <= DENOMINATOR_EPS {
            break;
        }
        let r_new = diff.norm_squared() / denom;
        if !(r_new < r) {
            break;
        }
        let delta = r - r_new;
        r = r_new;
        trace.push(r);
        if delta < TOLERANCE {
            break;
        }
    }
    let last = trace.last_mut().unwrap();
    *last = last.clamp(f64::MIN_POSITIVE, r_init);
    Ok(trace)
}

/// Per-face ball radii for a mesh, seeded at face centroids with `r_init`
/// half the bounding-box diagonal.
#[derive(Debug, Clone)]
pub struct ShrinkingBall {
    pub radii: Vec<f64>,
    pub r_init: f64,
}

impl ShrinkingBall {
    pub fn compute(mesh: &TexturedMesh) -> Result<Self, GeometryError> {
        use rayon::prelude::*;
        let (lo, hi) = mesh.bounding_box();
        let r_init = ((hi - lo).norm() * 0.5).max(1e-6);
        let tree = KdTree::new(surface_samples(mesh));
        let radii = (0..mesh.face_count())
            .into_par_iter()
            .map(|f| shrinking_ball_radius(&mesh.face_centroid(f), &mesh.face_normal(f), &tree, r_init))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { radii, r_init })
    }
}
