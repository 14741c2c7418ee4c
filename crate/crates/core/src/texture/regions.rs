use std::collections::BTreeSet;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::slic::channel_mixtures;
use super::{Superpixels, TextureCanvas, TextureError};
use crate::color::{wasserstein_gmm_1d, GaussianMixture1D};
use crate::geometry::{min_area_rect_pixels, OrientedRect2D};

/// A texel set on a canvas with the statistics used for matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Sorted row-major.
    pub texels: Vec<(u32, u32)>,
    /// `[x0, y0, x1, y1)`.
    pub aabb: [u32; 4],
    pub obb: OrientedRect2D,
    pub interior: [GaussianMixture1D; 3],
    /// Mixtures of the covered non-region texels of the superpixels that
    /// contain or touch the region; `None` when there are none.
    pub exterior: Option<[GaussianMixture1D; 3]>,
}

impl Region {
    pub fn new(canvas: &TextureCanvas, sp: &Superpixels, mut texels: Vec<(u32, u32)>, seed: u64) -> Result<Self, TextureError> {
        texels.sort_unstable_by_key(|&(x, y)| (y, x));
        texels.dedup();
        if texels.is_empty() {
            return Err(TextureError::EmptyRegion);
        }
        if let Some(&(x, y)) = texels.iter().find(|&&(x, y)| !canvas.is_covered(x, y)) {
            return Err(TextureError::Uncovered(x, y));
        }
        let mut aabb = [u32::MAX, u32::MAX, 0, 0];
        for &(x, y) in &texels {
            aabb[0] = aabb[0].min(x);
            aabb[1] = aabb[1].min(y);
            aabb[2] = aabb[2].max(x + 1);
            aabb[3] = aabb[3].max(y + 1);
        }
        let obb = min_area_rect_pixels(&texels).expect("non-empty");
        let colors: Vec<[u8; 3]> = texels.iter().map(|&(x, y)| canvas.color(x, y)).collect();
        let interior = channel_mixtures(&colors, seed)?;

        let inside: BTreeSet<(u32, u32)> = texels.iter().copied().collect();
        let mut touched: BTreeSet<usize> = texels.iter().filter_map(|&(x, y)| sp.label(x, y)).collect();
        let direct: Vec<usize> = touched.iter().copied().collect();
        for s in direct {
            touched.extend(sp.adjacency[s].iter().copied());
        }
        let outside: Vec<[u8; 3]> = touched
            .iter()
            .flat_map(|&s| sp.texels[s].iter())
            .filter(|p| !inside.contains(p))
            .map(|&(x, y)| canvas.color(x, y))
            .collect();
        let exterior = if outside.is_empty() { None } else { Some(channel_mixtures(&outside, seed)?) };
        Ok(Self { texels, aabb, obb, interior, exterior })
    }

    pub fn count(&self) -> usize {
        self.texels.len()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.texels.binary_search_by_key(&(y, x), |&(a, b)| (b, a)).is_ok()
    }

    /// Occupancy of the oriented box.
    pub fn fill(&self) -> f64 {
        let a = self.obb.area();
        if a > 0.0 { self.texels.len() as f64 / a } else { 0.0 }
    }

    /// Channel-averaged interior/exterior mixture distance.
    pub fn contrast(&self) -> f64 {
        self.exterior.as_ref().map_or(0.0, |e| mixture_distance(&self.interior, e))
    }
}

pub(super) fn mixture_distance(a: &[GaussianMixture1D; 3], b: &[GaussianMixture1D; 3]) -> f64 {
    (0..3).map(|k| wasserstein_gmm_1d(&a[k], &b[k])).sum::<f64>() / 3.0
}

/// Shape, occupancy and context differences between two regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatureVector {
    pub shape: f64,
    pub fill: f64,
    pub context: f64,
}

impl RegionFeatureVector {
    pub fn norm(&self) -> f64 {
        (self.shape.powi(2) + self.fill.powi(2) + self.context.powi(2)).sqrt()
    }
}

pub fn region_feature_vector(template: &Region, candidate: &Region) -> RegionFeatureVector {
    RegionFeatureVector {
        shape: (template.obb.aspect_ratio() - candidate.obb.aspect_ratio()).abs(),
        fill: (template.fill() - candidate.fill()).abs(),
        context: (template.contrast() - candidate.contrast()).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchRegionParams {
    /// Seed superpixels must be within this mixture distance of the template.
    pub eps_seed: f64,
    pub eps_region: f64,
    /// Candidate texel counts must lie in `[N/s, s·N]`.
    pub scale: f64,
    pub seed: u64,
}

impl Default for MatchRegionParams {
    fn default() -> Self {
        Self { eps_seed: 15.0, eps_region: 30.0, scale: 4.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMatch {
    pub region: Region,
    pub features: RegionFeatureVector,
    pub norm: f64,
}

/// Regions on `canvas` resembling `template`, sorted by feature norm.
///
/// Superpixels whose colour is close to the template's interior become
/// seeds; 8-connected groups of seed texels that do not overlap the
/// template and pass the size window are scored.
pub fn match_regions(
    canvas: &TextureCanvas,
    sp: &Superpixels,
    template: &Region,
    params: &MatchRegionParams,
) -> Result<Vec<RegionMatch>, TextureError> {
    if !(params.scale >= 1.0) || !(params.eps_seed >= 0.0) || !(params.eps_region >= 0.0) {
        return Err(TextureError::InvalidParams("match thresholds"));
    }
    let seeds: Vec<bool> = sp
        .stats
        .par_iter()
        .map(|s| mixture_distance(&template.interior, &s.rgb) < params.eps_seed)
        .collect();
    let (w, h) = (sp.width, sp.height);
    let on = |x: u32, y: u32| sp.label(x, y).is_some_and(|l| seeds[l]);
    let mut seen = vec![false; (w * h) as usize];
    let mut groups = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if seen[(y * w + x) as usize] || !on(x, y) {
                continue;
            }
            let mut group = Vec::new();
            let mut stack = vec![(x, y)];
            seen[(y * w + x) as usize] = true;
            while let Some((cx, cy)) = stack.pop() {
                group.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        let i = (ny * w + nx) as usize;
                        if !seen[i] && on(nx, ny) {
                            seen[i] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            groups.push(group);
        }
    }
    let n = template.count() as f64;
    let groups: Vec<Vec<(u32, u32)>> = groups
        .into_iter()
        .filter(|g| {
            let c = g.len() as f64;
            c >= n / params.scale && c <= n * params.scale && !g.iter().any(|&(x, y)| template.contains(x, y))
        })
        .collect();
    let mut out: Vec<RegionMatch> = groups
        .into_par_iter()
        .map(|g| {
            let region = Region::new(canvas, sp, g, params.seed)?;
            let features = region_feature_vector(template, &region);
            Ok(RegionMatch { norm: features.norm(), region, features })
        })
        .collect::<Result<Vec<_>, TextureError>>()?
        .into_iter()
        .filter(|m| m.norm < params.eps_region)
        .collect();
    out.sort_by(|a, b| a.norm.total_cmp(&b.norm).then(a.region.texels[0].1.cmp(&b.region.texels[0].1)).then(a.region.texels[0].0.cmp(&b.region.texels[0].0)));
    Ok(out)
}

/// A template placement found by normalised cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NccMatch {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub score: f64,
}

impl NccMatch {
    pub fn iou(&self, o: &NccMatch) -> f64 {
        let ix = (self.x + self.width).min(o.x + o.width).saturating_sub(self.x.max(o.x)) as f64;
        let iy = (self.y + self.height).min(o.y + o.height).saturating_sub(self.y.max(o.y)) as f64;
        let inter = ix * iy;
        let union = (self.width * self.height + o.width * o.height) as f64 - inter;
        if union > 0.0 { inter / union } else { 0.0 }
    }
}

fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels().map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect()
}

/// Zero-mean normalised cross-correlation of a grayscale template over the
/// canvas image. Local maxima at or above `threshold` are kept, then
/// greedily suppressed at IoU > 0.5. Sorted by descending score.
pub fn ncc_match(canvas: &RgbImage, template: &RgbImage, threshold: f64) -> Result<Vec<NccMatch>, TextureError> {
    let (w, h) = canvas.dimensions();
    let (tw, th) = template.dimensions();
    if tw == 0 || th == 0 {
        return Err(TextureError::EmptyRegion);
    }
    if tw > w || th > h {
        return Err(TextureError::TemplateTooLarge);
    }
    let img = luma(canvas);
    let t = luma(template);
    let tn = t.len() as f64;
    let tmean = t.iter().sum::<f64>() / tn;
    let tz: Vec<f64> = t.iter().map(|v| v - tmean).collect();
    let tnorm = tz.iter().map(|v| v * v).sum::<f64>().sqrt();

    // integral images with a zero first row and column
    let iw = (w + 1) as usize;
    let mut s1 = vec![0.0; iw * (h as usize + 1)];
    let mut s2 = vec![0.0; iw * (h as usize + 1)];
    for y in 0..h as usize {
        for x in 0..w as usize {
            let v = img[y * w as usize + x];
            let i = (y + 1) * iw + x + 1;
            s1[i] = v + s1[i - 1] + s1[i - iw] - s1[i - iw - 1];
            s2[i] = v * v + s2[i - 1] + s2[i - iw] - s2[i - iw - 1];
        }
    }
    let rect = |s: &[f64], x: usize, y: usize| {
        let (x1, y1) = (x + tw as usize, y + th as usize);
        s[y1 * iw + x1] - s[y * iw + x1] - s[y1 * iw + x] + s[y * iw + x]
    };
    let (ow, oh) = ((w - tw + 1) as usize, (h - th + 1) as usize);
    let scores: Vec<f64> = (0..oh)
        .into_par_iter()
        .flat_map_iter(|y| {
            let (img, tz, rect, s1, s2) = (&img, &tz, &rect, &s1, &s2);
            (0..ow).map(move |x| {
                let sum = rect(s1, x, y);
                let var = rect(s2, x, y) - sum * sum / tn;
                let den = tnorm * var.max(0.0).sqrt();
                if den < 1e-9 {
                    return 0.0;
                }
                let mut num = 0.0;
                for ty in 0..th as usize {
                    let row = (y + ty) * w as usize + x;
                    let trow = ty * tw as usize;
                    for tx in 0..tw as usize {
                        num += tz[trow + tx] * img[row + tx];
                    }
                }
                num / den
            })
        })
        .collect();
    let mut peaks = Vec::new();
    for y in 0..oh {
        for x in 0..ow {
            let v = scores[y * ow + x];
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'n: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && (nx as usize) < ow && (ny as usize) < oh {
                        let u = scores[ny as usize * ow + nx as usize];
                        // plateaus keep their first texel
                        if u > v || (u == v && (ny, nx) < (y as i64, x as i64)) {
                            is_max = false;
                            break 'n;
                        }
                    }
                }
            }
            if is_max {
                peaks.push(NccMatch { x: x as u32, y: y as u32, width: tw, height: th, score: v });
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.y, a.x).cmp(&(b.y, b.x))));
    let mut kept: Vec<NccMatch> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| k.iou(&p) <= 0.5) {
            kept.push(p);
        }
    }
    Ok(kept)
}
