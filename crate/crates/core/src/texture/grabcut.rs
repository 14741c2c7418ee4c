use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Region, TextureCanvas, TextureError};
use crate::energy::{solve_binary_labeling, BinaryLabelingProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrabCutParams {
    pub iterations: usize,
    pub components: usize,
    pub gamma: f64,
    /// Growth of the coarse region's oriented box; texels inside the grown
    /// box are unknown.
    pub dilation: f64,
    /// Extra growth beyond `dilation` whose texels are fixed background.
    pub band: f64,
    pub seed: u64,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self { iterations: 5, components: 5, gamma: 50.0, dilation: 1.1, band: 0.2, seed: 0 }
    }
}

const COV_FLOOR: f64 = 0.25;

/// Full-covariance RGB mixture.
struct Gmm3 {
    weights: Vec<f64>,
    means: Vec<Vector3<f64>>,
    inv: Vec<Matrix3<f64>>,
    log_norm: Vec<f64>,
}

impl Gmm3 {
    fn fit(samples: &[Vector3<f64>], assignment: &[usize], k: usize) -> Self {
        let mut count = vec![0usize; k];
        let mut sum = vec![Vector3::zeros(); k];
        for (s, &a) in samples.iter().zip(assignment) {
            count[a] += 1;
            sum[a] += s;
        }
        let means: Vec<Vector3<f64>> = (0..k).map(|c| if count[c] > 0 { sum[c] / count[c] as f64 } else { Vector3::zeros() }).collect();
        let mut cov = vec![Matrix3::zeros(); k];
        for (s, &a) in samples.iter().zip(assignment) {
            let d = s - means[a];
            cov[a] += d * d.transpose();
        }
        let n = samples.len() as f64;
        let mut out = Gmm3 { weights: vec![], means: vec![], inv: vec![], log_norm: vec![] };
        for c in 0..k {
            if count[c] == 0 {
                continue;
            }
            let m = cov[c] / count[c] as f64 + Matrix3::identity() * COV_FLOOR;
            let det = m.determinant();
            out.weights.push(count[c] as f64 / n);
            out.means.push(means[c]);
            out.inv.push(m.try_inverse().unwrap_or_else(|| Matrix3::identity() / COV_FLOOR));
            out.log_norm.push(-0.5 * det.max(1e-300).ln() - 1.5 * (2.0 * std::f64::consts::PI).ln());
        }
        out
    }

    fn component_log(&self, c: usize, x: &Vector3<f64>) -> f64 {
        let d = x - self.means[c];
        self.weights[c].ln() + self.log_norm[c] - 0.5 * (d.transpose() * self.inv[c] * d)[0]
    }

    fn best_component(&self, x: &Vector3<f64>) -> usize {
        (0..self.weights.len()).max_by(|&a, &b| self.component_log(a, x).total_cmp(&self.component_log(b, x))).unwrap_or(0)
    }

    /// −log p(x).
    fn cost(&self, x: &Vector3<f64>) -> f64 {
        let logs: Vec<f64> = (0..self.weights.len()).map(|c| self.component_log(c, x)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        -(m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln())
    }
}

/// Seeded k-means assignment used to initialise a mixture.
fn kmeans(samples: &[Vector3<f64>], k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(samples.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![samples[rng.random_range(0..samples.len())]];
    while centers.len() < k {
        let d: Vec<f64> = samples.iter().map(|s| centers.iter().map(|c| (s - c).norm_squared()).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = samples.len() - 1;
        for (i, v) in d.iter().enumerate() {
            r -= v;
            if r <= 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(samples[pick]);
    }
    let mut assign = vec![0; samples.len()];
    for _ in 0..10 {
        for (a, s) in assign.iter_mut().zip(samples) {
            *a = (0..centers.len()).min_by(|&i, &j| (s - centers[i]).norm_squared().total_cmp(&(s - centers[j]).norm_squared())).unwrap();
        }
        let mut sum = vec![Vector3::zeros(); centers.len()];
        let mut cnt = vec![0usize; centers.len()];
        for (&a, s) in assign.iter().zip(samples) {
            sum[a] += s;
            cnt[a] += 1;
        }
        for c in 0..centers.len() {
            if cnt[c] > 0 {
                centers[c] = sum[c] / cnt[c] as f64;
            }
        }
    }
    assign
}

fn fit_model(samples: &[Vector3<f64>], previous: Option<&Gmm3>, k: usize, seed: u64) -> Gmm3 {
    let assign = match previous {
        Some(g) => samples.iter().map(|s| g.best_component(s)).collect(),
        None => kmeans(samples, k, seed),
    };
    let k = assign.iter().max().map_or(1, |m| m + 1);
    Gmm3::fit(samples, &assign, k)
}

/// GrabCut refinement of a coarse region.
///
/// Texels inside the coarse region's minimum-area oriented box grown by
/// `dilation` start as foreground and are relabelled by iterated mixture
/// re-estimation and 8-connected graph cuts; a band of `band` beyond it
/// supplies fixed background. Returns the foreground texels, sorted
/// row-major; a window with no background texels returns the coarse region.
pub fn fine_segment(canvas: &TextureCanvas, coarse: &Region, params: &GrabCutParams) -> Result<Vec<(u32, u32)>, TextureError> {
    if params.components == 0 || !(params.gamma >= 0.0) || !(params.dilation >= 1.0) || !(params.band > 0.0) {
        return Err(TextureError::InvalidParams("grabcut parameters"));
    }
    let obb = coarse.obb.scaled(params.dilation);
    let window = coarse.obb.scaled(params.dilation + params.band);
    let corners = window.corners();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in corners {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let x0 = lo[0].floor().max(0.0) as u32;
    let y0 = lo[1].floor().max(0.0) as u32;
    let x1 = (hi[0].ceil().max(0.0) as u32).min(canvas.width());
    let y1 = (hi[1].ceil().max(0.0) as u32).min(canvas.height());

    let rgb = |x: u32, y: u32| {
        let c = canvas.color(x, y);
        Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)
    };
    // unknown texels get node ids; fixed background is kept apart
    let mut node: HashMap<(u32, u32), usize> = HashMap::new();
    let mut unknown = Vec::new();
    let mut background = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            if !canvas.is_covered(x, y) || !window.contains(p) {
                continue;
            }
            if obb.contains(p) {
                node.insert((x, y), unknown.len());
                unknown.push((x, y));
            } else {
                background.push((x, y));
            }
        }
    }
    let in_window = |x: u32, y: u32| {
        canvas.is_covered(x, y) && window.contains([x as f64 + 0.5, y as f64 + 0.5])
    };

    let mut fg: Vec<bool> = unknown.iter().map(|&(x, y)| coarse.contains(x, y)).collect();
    let bg_fixed: Vec<Vector3<f64>> = background.iter().map(|&(x, y)| rgb(x, y)).collect();
    if bg_fixed.is_empty() {
        return Ok(coarse.texels.clone());
    }

    // 8-neighbour pairs inside the window with their colour differences
    let mut pairs: Vec<((u32, u32), (u32, u32), f64)> = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            if !in_window(x, y) {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= x1 as i64 || ny >= y1 as i64 {
                    continue;
                }
                let (nx, ny) = (nx as u32, ny as u32);
                if in_window(nx, ny) {
                    pairs.push(((x, y), (nx, ny), (rgb(x, y) - rgb(nx, ny)).norm_squared()));
                }
            }
        }
    }
    let mean_d = if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64 };
    let beta = if mean_d > 0.0 { 1.0 / mean_d } else { 0.0 };
    let weight = |a: (u32, u32), b: (u32, u32), d2: f64| {
        let dist = if a.0 != b.0 && a.1 != b.1 { std::f64::consts::SQRT_2 } else { 1.0 };
        params.gamma * (-beta * d2).exp() / dist
    };

    let mut edges = Vec::new();
    let mut to_bg = vec![0.0; unknown.len()];
    for &(a, b, d2) in &pairs {
        match (node.get(&a), node.get(&b)) {
            (Some(&i), Some(&j)) => edges.push((i, j, weight(a, b, d2))),
            (Some(&i), None) => to_bg[i] += weight(a, b, d2),
            (None, Some(&j)) => to_bg[j] += weight(a, b, d2),
            (None, None) => {}
        }
    }

    let colors: Vec<Vector3<f64>> = unknown.iter().map(|&(x, y)| rgb(x, y)).collect();
    let (mut fg_model, mut bg_model): (Option<Gmm3>, Option<Gmm3>) = (None, None);
    for it in 0..params.iterations.max(1) {
        let f_samples: Vec<Vector3<f64>> = colors.iter().zip(&fg).filter(|(_, &f)| f).map(|(c, _)| *c).collect();
        let mut b_samples = bg_fixed.clone();
        b_samples.extend(colors.iter().zip(&fg).filter(|(_, &f)| !f).map(|(c, _)| *c));
        if f_samples.is_empty() {
            break;
        }
        if b_samples.is_empty() {
            return Ok(unknown);
        }
        let fm = fit_model(&f_samples, fg_model.as_ref(), params.components, params.seed.wrapping_add(it as u64));
        let bm = fit_model(&b_samples, bg_model.as_ref(), params.components, params.seed.wrapping_add(1000 + it as u64));
        // label 1 = foreground
        let costs: Vec<[f64; 2]> = colors.iter().enumerate().map(|(i, c)| [bm.cost(c), fm.cost(c) + to_bg[i]]).collect();
        let labels = solve_binary_labeling(&BinaryLabelingProblem::new(costs, edges.clone(), 1.0))?.labels;
        fg_model = Some(fm);
        bg_model = Some(bm);
        if labels == fg {
            break;
        }
        fg = labels;
    }
    let mut out: Vec<(u32, u32)> = unknown.iter().zip(&fg).filter(|(_, &f)| f).map(|(p, _)| *p).collect();
    out.sort_unstable_by_key(|&(x, y)| (y, x));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texture::{compute_superpixels, local_expand, SuperpixelParams};
    use image::{Rgb, RgbImage};

    fn disc(radius: f64, cx: f64, cy: f64, size: u32) -> RgbImage {
        // 4×4 supersampled anti-aliasing
        RgbImage::from_fn(size, size, |x, y| {
            let mut hit = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0;
                    if (px - cx).hypot(py - cy) <= radius {
                        hit += 1;
                    }
                }
            }
            let v = (30.0 + (220.0 * hit as f64 / 16.0)) as u8;
            Rgb([v, v, (v as f64 * 0.9) as u8])
        })
    }

    #[test]
    fn exact_coarse_rectangle_is_kept() {
        let img = RgbImage::from_fn(50, 40, |x, y| if (10..30).contains(&x) && (8..20).contains(&y) { Rgb([240, 240, 240]) } else { Rgb([20, 40, 20]) });
        let c = TextureCanvas::from_image(img);
        let sp = compute_superpixels(&c, &SuperpixelParams { region_size: 4, ..Default::default() }).unwrap();
        let r = local_expand(&c, &sp, (15, 12), &Default::default()).unwrap();
        assert_eq!(r.count(), 240);
        let fine = fine_segment(&c, &r, &Default::default()).unwrap();
        assert_eq!(fine, r.texels);
    }

    fn check_disc(cx: f64, cy: f64, rad: f64, size: u32) -> (usize, usize) {
        let c = TextureCanvas::from_image(disc(rad, cx, cy, size));
        let sp = compute_superpixels(&c, &Default::default()).unwrap();
        let coarse = local_expand(&c, &sp, (cx as u32, cy as u32), &Default::default()).unwrap();
        let fine = fine_segment(&c, &coarse, &Default::default()).unwrap();
        // every disagreement with the true disc lies within 2 texels of its rim
        let set: std::collections::HashSet<(u32, u32)> = fine.iter().copied().collect();
        for y in 0..size {
            for x in 0..size {
                let d = (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) - rad;
                if (d <= 0.0) != set.contains(&(x, y)) {
                    assert!(d.abs() <= 2.0, "r={rad}: ({x},{y}) off by {d}");
                }
            }
        }
        // never leaves the dilated box
        let w = coarse.obb.scaled(1.1);
        assert!(fine.iter().all(|&(x, y)| w.contains([x as f64 + 0.5, y as f64 + 0.5])));
        let again = Region::new(&c, &sp, fine.clone(), 0).unwrap();
        let fine2 = fine_segment(&c, &again, &Default::default()).unwrap();
        let set2: std::collections::HashSet<(u32, u32)> = fine2.iter().copied().collect();
        let diff = set.symmetric_difference(&set2).count();
        (diff, c.covered_count())
    }

    #[test]
    fn disc_boundary_and_idempotence() {
        for (cx, cy, rad, size) in [(40.3, 39.6, 22.0, 80), (50.0, 50.0, 30.0, 100), (31.7, 28.2, 15.5, 64), (60.2, 55.9, 35.0, 120)] {
            // relabelled texels as a share of the canvas
            let (diff, n) = check_disc(cx, cy, rad, size);
            assert!(diff as f64 <= 0.005 * n as f64, "r={rad}: {diff} of {n} changed");
        }
    }
}
