use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_COMPONENTS: usize = 5;
/// Lower bound on component standard deviations (8-bit units).
pub const SIGMA_FLOOR: f64 = 0.5;
const MAX_ITERATIONS: usize = 200;
const LOGLIK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GmmError {
    #[error("cannot fit a mixture to an empty sample set")]
    Empty,
    #[error("component count must be positive")]
    NoComponents,
    #[error("non-finite sample")]
    NonFinite,
}

/// Univariate Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl GaussianMixture1D {
    pub fn single(mean: f64, sigma: f64) -> Self {
        Self { weights: vec![1.0], means: vec![mean], sigmas: vec![sigma] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Σ π_m μ_m.
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * normal_pdf(x, self.means[k], self.sigmas[k])).sum()
    }
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn log_normal(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// EM fit of an `m`-component mixture, initialised by seeded k-means++.
///
/// Samples are collapsed to distinct values with multiplicities, which
/// leaves every EM quantity unchanged and keeps 8-bit channels cheap.
pub fn fit_gmm_1d(samples: &[f64], m: usize, seed: u64) -> Result<GaussianMixture1D, GmmError> {
    if samples.is_empty() {
        return Err(GmmError::Empty);
    }
    if m == 0 {
        return Err(GmmError::NoComponents);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(GmmError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for x in sorted {
        if values.last() == Some(&x) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            values.push(x);
            counts.push(1.0);
        }
    }
    let n = samples.len() as f64;

    let centers = kmeans_pp(&values, &counts, m, seed);
    let mut g = init_from_centers(&values, &counts, &centers, n);

    let mut resp = vec![0.0; values.len() * m];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERATIONS {
        // E-step
        let mut loglik = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let row = &mut resp[i * m..(i + 1) * m];
            let mut best = f64::NEG_INFINITY;
            for k in 0..m {
                row[k] = if g.weights[k] > 0.0 {
                    g.weights[k].ln() + log_normal(x, g.means[k], g.sigmas[k])
                } else {
                    f64::NEG_INFINITY
                };
                best = best.max(row[k]);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - best).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            loglik += counts[i] * (best + sum.ln());
        }
        loglik /= n;

        // M-step
        for k in 0..m {
            let nk: f64 = (0..values.len()).map(|i| counts[i] * resp[i * m + k]).sum();
            if nk <= 0.0 {
                g.weights[k] = 0.0;
                continue;
            }
            let mu = (0..values.len()).map(|i| counts[i] * resp[i * m + k] * values[i]).sum::<f64>() / nk;
            let var = (0..values.len()).map(|i| counts[i] * resp[i * m + k] * (values[i] - mu).powi(2)).sum::<f64>() / nk;
            g.weights[k] = nk / n;
            g.means[k] = mu;
            g.sigmas[k] = var.sqrt().max(SIGMA_FLOOR);
        }
        normalize(&mut g.weights);

        if (loglik - prev).abs() < LOGLIK_TOLERANCE {
            break;
        }
        prev = loglik;
    }
    Ok(g)
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

fn kmeans_pp(values: &[f64], counts: &[f64], m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, weights: &[f64]| -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return Some(i);
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0)
    };
    let first = pick(&mut rng, counts).unwrap_or(0);
    let mut centers = vec![values[first]];
    let mut d2: Vec<f64> = values.iter().map(|v| (v - values[first]).powi(2)).collect();
    while centers.len() < m {
        let weights: Vec<f64> = d2.iter().zip(counts).map(|(d, c)| d * c).collect();
        let Some(next) = pick(&mut rng, &weights) else {
            // fewer distinct values than components: repeat the last centre
            centers.push(*centers.last().unwrap());
            continue;
        };
        let c = values[next];
        centers.push(c);
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).powi(2));
        }
    }
    centers
}

fn init_from_centers(values: &[f64], counts: &[f64], centers: &[f64], n: f64) -> GaussianMixture1D {
    let m = centers.len();
    let mut w = vec![0.0; m];
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    for (&x, &c) in values.iter().zip(counts) {
        let k = (0..m)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()).then(a.cmp(&b)))
            .unwrap();
        w[k] += c;
        s1[k] += c * x;
        s2[k] += c * x * x;
    }
    let mut g = GaussianMixture1D { weights: vec![0.0; m], means: centers.to_vec(), sigmas: vec![SIGMA_FLOOR; m] };
    for k in 0..m {
        if w[k] > 0.0 {
            let mu = s1[k] / w[k];
            g.means[k] = mu;
            g.sigmas[k] = (s2[k] / w[k] - mu * mu).max(0.0).sqrt().max(SIGMA_FLOOR);
            g.weights[k] = w[k] / n;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn point_mass() {
        let g = fit_gmm_1d(&[77.0; 40], 5, 1).unwrap();
        assert!(g.means.iter().all(|&m| m == 77.0));
        assert!(g.sigmas.iter().all(|&s| s == SIGMA_FLOOR));
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_two_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = Normal::new(10.0, 2.0).unwrap();
        let b = Normal::new(200.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }).collect();
        let g = fit_gmm_1d(&xs, 2, 7).unwrap();
        let mut means = g.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 10.0).abs() < 1.0 && (means[1] - 200.0).abs() < 1.0, "{means:?}");
    }

    #[test]
    fn deterministic_for_seed() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 255) as f64).collect();
        assert_eq!(fit_gmm_1d(&xs, 5, 9).unwrap(), fit_gmm_1d(&xs, 5, 9).unwrap());
        assert_eq!(fit_gmm_1d(&[], 5, 9), Err(GmmError::Empty));
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..100.0)).collect();
        let g = fit_gmm_1d(&xs, 3, 5).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * 2.0).collect();
        let h = fit_gmm_1d(&scaled, 3, 5).unwrap();
        for k in 0..3 {
            assert!((h.means[k] - 2.0 * g.means[k]).abs() < 1e-6);
            assert!((h.sigmas[k] - 2.0 * g.sigmas[k]).abs() < 1e-6);
        }
    }
}
