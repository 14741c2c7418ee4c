use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TextureCanvas, TextureError};
use crate::color::{fit_gmm_1d, rgb_to_lab, GaussianMixture1D, LabColor, DEFAULT_COMPONENTS};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperpixelParams {
    /// Grid step S in texels.
    pub region_size: u32,
    pub compactness: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SuperpixelParams {
    fn default() -> Self {
        Self { region_size: 10, compactness: 10.0, iterations: 10, seed: 0 }
    }
}

/// Per-superpixel colour statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Superpixel {
    pub count: usize,
    pub rgb: [GaussianMixture1D; 3],
    pub mean_lab: LabColor,
    pub mean_rgb: [f64; 3],
}

/// SLIC partition of a canvas's covered texels. Ids are dense and ordered
/// by first texel in row-major order; every superpixel is 4-connected.
#[derive(Debug, Clone)]
pub struct Superpixels {
    pub width: u32,
    pub height: u32,
    labels: Vec<u32>,
    pub adjacency: Vec<Vec<usize>>,
    pub stats: Vec<Superpixel>,
    pub texels: Vec<Vec<(u32, u32)>>,
}

impl Superpixels {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn label(&self, x: u32, y: u32) -> Option<usize> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let l = self.labels[(y * self.width + x) as usize];
        (l != NONE).then_some(l as usize)
    }
}

struct Center {
    x: f64,
    y: f64,
    lab: [f64; 3],
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

pub fn compute_superpixels(canvas: &TextureCanvas, params: &SuperpixelParams) -> Result<Superpixels, TextureError> {
    if params.region_size < 2 {
        return Err(TextureError::RegionSize);
    }
    if !(params.compactness > 0.0) || params.iterations == 0 {
        return Err(TextureError::InvalidParams("compactness and iterations must be positive"));
    }
    let (w, h) = (canvas.width(), canvas.height());
    let n = (w * h) as usize;
    let idx = |x: u32, y: u32| (y * w + x) as usize;
    let covered: Vec<bool> = (0..n).map(|i| canvas.is_covered(i as u32 % w, i as u32 / w)).collect();
    if !covered.iter().any(|&c| c) {
        return Err(TextureError::EmptyCanvas);
    }
    let lab: Vec<[f64; 3]> = canvas.image.pixels().map(|p| rgb_to_lab(p.0).to_array()).collect();

    // gradient with uncovered neighbours replaced by the texel itself
    let at = |x: i64, y: i64, c: usize| -> &[f64; 3] {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 || !covered[idx(x as u32, y as u32)] {
            &lab[c]
        } else {
            &lab[idx(x as u32, y as u32)]
        }
    };
    let gradient = |x: u32, y: u32| {
        let c = idx(x, y);
        let (xi, yi) = (x as i64, y as i64);
        dist2(at(xi + 1, yi, c), at(xi - 1, yi, c)) + dist2(at(xi, yi + 1, c), at(xi, yi - 1, c))
    };

    let s = params.region_size;
    let mut centers = Vec::new();
    let mut gy = s / 2;
    while gy < h.max(1) {
        let mut gx = s / 2;
        while gx < w.max(1) {
            let (cx, cy) = (gx.min(w - 1), gy.min(h - 1));
            let seed = if covered[idx(cx, cy)] {
                Some((cx, cy))
            } else {
                // nearest covered texel in the grid cell
                let (x0, y0) = (cx.saturating_sub(s / 2), cy.saturating_sub(s / 2));
                let mut best: Option<(u32, u32, i64)> = None;
                for y in y0..(y0 + s).min(h) {
                    for x in x0..(x0 + s).min(w) {
                        if covered[idx(x, y)] {
                            let d = (x as i64 - cx as i64).pow(2) + (y as i64 - cy as i64).pow(2);
                            if best.is_none_or(|b| d < b.2) {
                                best = Some((x, y, d));
                            }
                        }
                    }
                }
                best.map(|b| (b.0, b.1))
            };
            if let Some((mut x, mut y)) = seed {
                let mut g = gradient(x, y);
                let (ox, oy) = (x, y);
                for ny in oy.saturating_sub(1)..=(oy + 1).min(h - 1) {
                    for nx in ox.saturating_sub(1)..=(ox + 1).min(w - 1) {
                        if covered[idx(nx, ny)] {
                            let gn = gradient(nx, ny);
                            if gn < g {
                                (g, x, y) = (gn, nx, ny);
                            }
                        }
                    }
                }
                centers.push(Center { x: x as f64, y: y as f64, lab: lab[idx(x, y)] });
            }
            gx += s;
        }
        gy += s;
    }
    if centers.is_empty() {
        let first = covered.iter().position(|&c| c).unwrap();
        centers.push(Center { x: (first as u32 % w) as f64, y: (first as u32 / w) as f64, lab: lab[first] });
    }

    let m2 = params.compactness * params.compactness;
    let s2 = (s * s) as f64;
    let mut assign = vec![NONE; n];
    for _ in 0..params.iterations {
        let mut best = vec![f64::INFINITY; n];
        assign.fill(NONE);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x - s as f64).floor().max(0.0) as u32;
            let y0 = (c.y - s as f64).floor().max(0.0) as u32;
            let x1 = ((c.x + s as f64).ceil() as u32).min(w - 1);
            let y1 = ((c.y + s as f64).ceil() as u32).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = idx(x, y);
                    if !covered[i] {
                        continue;
                    }
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dist2(&lab[i], &c.lab) + ds / s2 * m2;
                    if d < best[i] {
                        best[i] = d;
                        assign[i] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &a) in assign.iter().enumerate() {
            if a != NONE {
                let e = &mut acc[a as usize];
                e[0] += (i as u32 % w) as f64;
                e[1] += (i as u32 / w) as f64;
                for k in 0..3 {
                    e[2 + k] += lab[i][k];
                }
                e[5] += 1.0;
            }
        }
        for (c, e) in centers.iter_mut().zip(&acc) {
            if e[5] > 0.0 {
                c.x = e[0] / e[5];
                c.y = e[1] / e[5];
                c.lab = [e[2] / e[5], e[3] / e[5], e[4] / e[5]];
            }
        }
    }

    let labels = enforce_connectivity(w, h, &covered, &assign, &lab, ((s * s) / 4).max(1) as usize);
    let count = labels.iter().filter(|&&l| l != NONE).map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut texels = vec![Vec::new(); count];
    let mut adj = vec![BTreeSet::new(); count];
    for y in 0..h {
        for x in 0..w {
            let l = labels[idx(x, y)];
            if l == NONE {
                continue;
            }
            texels[l as usize].push((x, y));
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let m = labels[idx(nx, ny)];
                    if m != NONE && m != l {
                        adj[l as usize].insert(m as usize);
                        adj[m as usize].insert(l as usize);
                    }
                }
            }
        }
    }
    let stats = texels
        .par_iter()
        .enumerate()
        .map(|(k, px)| {
            let colors: Vec<[u8; 3]> = px.iter().map(|&(x, y)| canvas.color(x, y)).collect();
            superpixel_stats(&colors, params.seed.wrapping_add(k as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Superpixels {
        width: w,
        height: h,
        labels,
        adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        stats,
        texels,
    })
}

pub(super) fn channel_mixtures(colors: &[[u8; 3]], seed: u64) -> Result<[GaussianMixture1D; 3], TextureError> {
    let fit = |k: usize| {
        let v: Vec<f64> = colors.iter().map(|c| c[k] as f64).collect();
        fit_gmm_1d(&v, DEFAULT_COMPONENTS, seed)
    };
    Ok([fit(0)?, fit(1)?, fit(2)?])
}

fn superpixel_stats(colors: &[[u8; 3]], seed: u64) -> Result<Superpixel, TextureError> {
    let n = colors.len() as f64;
    let mut lab = [0.0; 3];
    let mut rgb = [0.0; 3];
    for &c in colors {
        let l = rgb_to_lab(c).to_array();
        for k in 0..3 {
            lab[k] += l[k] / n;
            rgb[k] += c[k] as f64 / n;
        }
    }
    Ok(Superpixel {
        count: colors.len(),
        rgb: channel_mixtures(colors, seed)?,
        mean_lab: LabColor::new(lab[0], lab[1], lab[2]),
        mean_rgb: rgb,
    })
}

/// Splits every label into 4-connected components and folds components
/// smaller than `min_size` into the adjacent component of nearest mean
/// colour. Returns dense labels ordered by first texel.
fn enforce_connectivity(w: u32, h: u32, covered: &[bool], assign: &[u32], lab: &[[f64; 3]], min_size: usize) -> Vec<u32> {
    let n = (w * h) as usize;
    let mut comp = vec![NONE; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if !covered[start] || comp[start] != NONE {
            continue;
        }
        let id = members.len() as u32;
        let mut list = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            list.push(i);
            let (x, y) = (i as u32 % w, i as u32 / w);
            let mut push = |j: usize| {
                if covered[j] && comp[j] == NONE && assign[j] == assign[i] {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w as usize);
            }
            if y + 1 < h {
                push(i + w as usize);
            }
        }
        members.push(list);
    }

    let k = members.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    let mut size: Vec<usize> = members.iter().map(|m| m.len()).collect();
    let mut sum: Vec<[f64; 3]> = members
        .iter()
        .map(|m| m.iter().fold([0.0; 3], |mut s, &i| {
            for c in 0..3 {
                s[c] += lab[i][c];
            }
            s
        }))
        .collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for i in 0..n {
        if comp[i] == NONE {
            continue;
        }
        let (x, y) = (i as u32 % w, i as u32 / w);
        for j in [(x + 1 < w).then_some(i + 1), (y + 1 < h).then_some(i + w as usize)].into_iter().flatten() {
            if comp[j] != NONE && comp[j] != comp[i] {
                adj[comp[i] as usize].insert(comp[j] as usize);
                adj[comp[j] as usize].insert(comp[i] as usize);
            }
        }
    }
    // isolated islands are kept whatever their size
    loop {
        let mut changed = false;
        for c in 0..k {
            if find(&mut parent, c) != c || size[c] >= min_size {
                continue;
            }
            let mean = |s: &[f64; 3], n: usize| [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64];
            let me = mean(&sum[c], size[c]);
            let neigh: BTreeSet<usize> = adj[c].iter().map(|&a| find(&mut parent, a)).filter(|&a| a != c).collect();
            let Some(&target) = neigh
                .iter()
                .min_by(|&&a, &&b| dist2(&me, &mean(&sum[a], size[a])).total_cmp(&dist2(&me, &mean(&sum[b], size[b]))))
            else {
                continue;
            };
            parent[c] = target;
            size[target] += size[c];
            for q in 0..3 {
                sum[target][q] += sum[c][q];
            }
            let moved = std::mem::take(&mut adj[c]);
            adj[target].extend(moved);
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let mut dense = vec![NONE; k];
    let mut next = 0u32;
    let mut out = vec![NONE; n];
    for i in 0..n {
        if comp[i] == NONE {
            continue;
        }
        let r = find(&mut parent, comp[i] as usize);
        if dense[r] == NONE {
            dense[r] = next;
            next += 1;
        }
        out[i] = dense[r];
    }
    out
}
