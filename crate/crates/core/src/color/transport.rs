use serde::{Deserialize, Serialize};

use super::{fit_gmm_1d, rgb_to_lab, GaussianMixture1D, GmmError, LabColor, DEFAULT_COMPONENTS};

/// Mixture Wasserstein distance: optimal transport between component
/// weights with ground cost `sqrt((μi−μj)² + (σi−σj)²)`, the closed-form W2
/// between two univariate Gaussians.
pub fn wasserstein_gmm_1d(g1: &GaussianMixture1D, g2: &GaussianMixture1D) -> f64 {
    let cost: Vec<Vec<f64>> = (0..g1.len())
        .map(|i| {
            (0..g2.len())
                .map(|j| (g1.means[i] - g2.means[j]).hypot(g1.sigmas[i] - g2.sigmas[j]))
                .collect()
        })
        .collect();
    transport_cost(&g1.weights, &g2.weights, &cost).max(0.0)
}

/// Exact discrete optimal transport by successive shortest paths
/// (Bellman-Ford on the residual graph; sizes here are tiny).
fn transport_cost(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let total = a.iter().sum::<f64>().min(b.iter().sum::<f64>());
    let eps = 1e-12;
    // node layout: 0 = source, 1..=m sources, m+1..=m+n sinks, m+n+1 = sink
    let nodes = m + n + 2;
    let sink = nodes - 1;
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new(); // (from, to, cap, cost)
    let add = |edges: &mut Vec<(usize, usize, f64, f64)>, u, v, cap, c: f64| {
        edges.push((u, v, cap, c));
        edges.push((v, u, 0.0, -c));
    };
    for (i, &w) in a.iter().enumerate() {
        add(&mut edges, 0, 1 + i, w, 0.0);
    }
    for (j, &w) in b.iter().enumerate() {
        add(&mut edges, 1 + m + j, sink, w, 0.0);
    }
    for i in 0..m {
        for j in 0..n {
            add(&mut edges, 1 + i, 1 + m + j, f64::INFINITY, cost[i][j]);
        }
    }
    let mut sent = 0.0;
    let mut value = 0.0;
    while total - sent > 1e-12 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (e, &(u, v, cap, c)) in edges.iter().enumerate() {
                if cap > eps && dist[u] + c < dist[v] - 1e-12 * (1.0 + dist[v].abs().min(1e300)) {
                    dist[v] = dist[u] + c;
                    via[v] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            break;
        }
        let mut path = Vec::new();
        let mut v = sink;
        while v != 0 && path.len() <= nodes {
            path.push(via[v]);
            v = edges[via[v]].0;
        }
        if v != 0 {
            // predecessor cycle from round-off; the flow is optimal to tolerance
            break;
        }
        let push = path.iter().map(|&e| edges[e].2).fold(total - sent, f64::min);
        for &e in &path {
            edges[e].2 -= push;
            edges[e ^ 1].2 += push;
            value += push * edges[e].3;
        }
        sent += push;
    }
    value
}

/// `(Σπμ)` per channel, read as a Lab colour.
pub fn mixture_mean_lab(gl: &GaussianMixture1D, ga: &GaussianMixture1D, gb: &GaussianMixture1D) -> LabColor {
    LabColor::new(gl.mean(), ga.mean(), gb.mean())
}

/// Independent per-channel mixtures of an RGB pixel set, plus mixtures of
/// its Lab channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMixtures {
    pub rgb: [GaussianMixture1D; 3],
    pub lab: [GaussianMixture1D; 3],
}

impl ChannelMixtures {
    pub fn fit(pixels: &[[u8; 3]], seed: u64) -> Result<Self, GmmError> {
        let channel = |k: usize| pixels.iter().map(|p| p[k] as f64).collect::<Vec<_>>();
        let labs: Vec<[f64; 3]> = pixels.iter().map(|&p| rgb_to_lab(p).to_array()).collect();
        let lab_channel = |k: usize| labs.iter().map(|p| p[k]).collect::<Vec<_>>();
        Ok(Self {
            rgb: [
                fit_gmm_1d(&channel(0), DEFAULT_COMPONENTS, seed)?,
                fit_gmm_1d(&channel(1), DEFAULT_COMPONENTS, seed)?,
                fit_gmm_1d(&channel(2), DEFAULT_COMPONENTS, seed)?,
            ],
            lab: [
                fit_gmm_1d(&lab_channel(0), DEFAULT_COMPONENTS, seed)?,
                fit_gmm_1d(&lab_channel(1), DEFAULT_COMPONENTS, seed)?,
                fit_gmm_1d(&lab_channel(2), DEFAULT_COMPONENTS, seed)?,
            ],
        })
    }

    /// Channel-averaged mixture Wasserstein distance over RGB (8-bit units).
    pub fn distance(&self, other: &Self) -> f64 {
        (0..3).map(|k| wasserstein_gmm_1d(&self.rgb[k], &other.rgb[k])).sum::<f64>() / 3.0
    }

    /// Distance mapped to a unit-interval score: `/255`, clamped.
    pub fn similarity_weight(&self, other: &Self) -> f64 {
        (self.distance(other) / 255.0).clamp(0.0, 1.0)
    }

    pub fn mean_lab(&self) -> LabColor {
        mixture_mean_lab(&self.lab[0], &self.lab[1], &self.lab[2])
    }
}
