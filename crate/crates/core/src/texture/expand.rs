use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::regions::mixture_distance;
use super::{Region, Superpixels, TextureCanvas, TextureError};
use crate::color::{ciede2000, LabColor};
use crate::energy::{solve_binary_labeling, BinaryLabelingProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandParams {
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ExpandParams {
    fn default() -> Self {
        Self { alpha: 1.0, lambda: 0.3, seed: 0 }
    }
}

/// Binary problem over superpixels; label 1 means "similar to the seed".
///
/// Unary costs are `α·w` for similar and `α·(1−w)` for dissimilar, with `w`
/// the mixture distance to the seed over 255. Pairwise terms are the
/// absolute difference of the CIEDE2000 distances to the seed
/// neighbourhood's mean colour, over 100. The seed carries a dissimilar
/// cost larger than any achievable saving so it is always labelled 1.
pub fn expansion_problem(sp: &Superpixels, seed: usize, params: &ExpandParams) -> BinaryLabelingProblem {
    let s0 = &sp.stats[seed];
    let mut total = s0.count as f64;
    let mut lab = s0.mean_lab.to_array().map(|v| v * s0.count as f64);
    for &j in &sp.adjacency[seed] {
        let s = &sp.stats[j];
        total += s.count as f64;
        for k in 0..3 {
            lab[k] += s.mean_lab.to_array()[k] * s.count as f64;
        }
    }
    let u0 = LabColor::new(lab[0] / total, lab[1] / total, lab[2] / total);
    let rho: Vec<f64> = sp.stats.iter().map(|s| ciede2000(u0, s.mean_lab)).collect();
    let mut costs: Vec<[f64; 2]> = sp
        .stats
        .iter()
        .map(|s| {
            let w = (mixture_distance(&s0.rgb, &s.rgb) / 255.0).clamp(0.0, 1.0);
            [params.alpha * (1.0 - w), params.alpha * w]
        })
        .collect();
    let mut edges = Vec::new();
    for (i, adj) in sp.adjacency.iter().enumerate() {
        for &j in adj {
            if i < j {
                edges.push((i, j, (rho[i] - rho[j]).abs() / 100.0));
            }
        }
    }
    let seed_pairwise: f64 = edges.iter().filter(|e| e.0 == seed || e.1 == seed).map(|e| e.2).sum();
    costs[seed] = [params.alpha + params.lambda * seed_pairwise + 1.0, 0.0];
    BinaryLabelingProblem::new(costs, edges, params.lambda)
}

/// Coarse region grown from the superpixel under `click`: the connected
/// component of "similar" superpixels containing the clicked one.
pub fn local_expand(
    canvas: &TextureCanvas,
    sp: &Superpixels,
    click: (u32, u32),
    params: &ExpandParams,
) -> Result<Region, TextureError> {
    if !(params.alpha > 0.0) || !(params.lambda >= 0.0) {
        return Err(TextureError::InvalidParams("alpha must be positive and lambda non-negative"));
    }
    let seed = sp.label(click.0, click.1).ok_or(TextureError::Uncovered(click.0, click.1))?;
    let problem = expansion_problem(sp, seed, params);
    let labels = solve_binary_labeling(&problem)?.labels;
    let mut keep = BTreeSet::from([seed]);
    let mut stack = vec![seed];
    while let Some(s) = stack.pop() {
        for &t in &sp.adjacency[s] {
            if labels[t] && keep.insert(t) {
                stack.push(t);
            }
        }
    }
    let texels: Vec<(u32, u32)> = keep.iter().flat_map(|&s| sp.texels[s].iter().copied()).collect();
    Region::new(canvas, sp, texels, params.seed)
}
