use crate::Vec3;

/// Static 3D kd-tree over a point list. Queries break distance ties by the
/// lowest point index so results do not depend on tree layout.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
    /// Bounds of the subtree rooted here.
    lo: Vec3,
    hi: Vec3,
}

impl Node {
    fn box_distance2(&self, q: &Vec3) -> f64 {
        (0..3).map(|k| (self.lo[k] - q[k]).max(q[k] - self.hi[k]).max(0.0).powi(2)).sum()
    }
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self { points, nodes: Vec::new(), root: None };
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        let pts = &self.points;
        let (mut bmin, mut bmax) = (pts[idx[0]], pts[idx[0]]);
        for &i in idx.iter() {
            bmin = bmin.inf(&pts[i]);
            bmax = bmax.sup(&pts[i]);
        }
        idx.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let point = idx[mid];
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes.push(Node { point, axis, left, right, lo: bmin, hi: bmax });
        Some(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Nearest point to `q` among those not rejected by `skip`; returns
    /// `(index, squared distance)`.
    pub fn nearest_filtered(&self, q: &Vec3, skip: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        self.nearest_below(q, f64::INFINITY, skip)
    }

    /// Like [`Self::nearest_filtered`] but only considers points whose
    /// squared distance is strictly below `limit2`.
    pub fn nearest_below(&self, q: &Vec3, limit2: f64, skip: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        if let Some(r) = self.root {
            self.search(r, q, limit2, &skip, &mut best);
        }
        best
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.nearest_filtered(q, |_| false)
    }

    fn search(&self, node: usize, q: &Vec3, limit2: f64, skip: &impl Fn(usize) -> bool, best: &mut Option<(usize, f64)>) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        if !skip(n.point) {
            let d = (p - q).norm_squared();
            let better = match *best {
                None => d < limit2,
                Some((bi, bd)) => d < bd || (d == bd && n.point < bi),
            };
            if better {
                *best = Some((n.point, d));
            }
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        for c in [near, far].into_iter().flatten() {
            let d = self.nodes[c].box_distance2(q);
            // `<=` keeps equal-distance candidates reachable for the index tie-break
            let open = match *best {
                None => d < limit2,
                Some((_, bd)) => d <= bd,
            };
            if open {
                self.search(c, q, limit2, skip, best);
            }
        }
    }

    /// All points within `radius` of `q`, sorted by index.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            let p = &self.points[n.point];
            if (p - q).norm_squared() <= r2 {
                out.push(n.point);
            }
            let diff = q[n.axis] - p[n.axis];
            if let Some(l) = n.left {
                if diff <= radius {
                    stack.push(l);
                }
            }
            if let Some(r) = n.right {
                if diff >= -radius {
                    stack.push(r);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
