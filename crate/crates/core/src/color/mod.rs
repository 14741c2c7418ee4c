//! Colour spaces and colour statistics: sRGB→Lab, CIEDE2000, per-channel
//! Gaussian mixtures, mixture Wasserstein distance and excess green.

mod gmm;
mod transport;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm_1d, GaussianMixture1D, GmmError, DEFAULT_COMPONENTS, SIGMA_FLOOR};
pub use transport::{mixture_mean_lab, wasserstein_gmm_1d, ChannelMixtures};

/// CIE L*a*b* colour under D65.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }
}

const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB (8-bit) → XYZ (D65) → Lab.
pub fn rgb_to_lab(rgb: [u8; 3]) -> LabColor {
    let [r, g, b] = rgb.map(|c| srgb_to_linear(c as f64 / 255.0));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE_D65[0]), lab_f(y / WHITE_D65[1]), lab_f(z / WHITE_D65[2]));
    let mut lab = LabColor { l: 116.0 * fy - 16.0, a: 500.0 * (fx - fy), b: 200.0 * (fy - fz) };
    // neutral inputs are achromatic by definition; remove matrix round-off
    if rgb[0] == rgb[1] && rgb[1] == rgb[2] {
        lab.a = 0.0;
        lab.b = 0.0;
    }
    if lab.l.abs() < 1e-12 {
        lab.l = 0.0;
    }
    lab
}

/// CIEDE2000 colour difference with kL = kC = kH = 1.
pub fn ciede2000(c1: LabColor, c2: LabColor) -> f64 {
    use std::f64::consts::PI;
    let deg = |r: f64| r.to_degrees();
    let rad = |d: f64| d.to_radians();

    let c1_ab = c1.a.hypot(c1.b);
    let c2_ab = c2.a.hypot(c2.b);
    let c_bar = (c1_ab + c2_ab) / 2.0;
    let c7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c7 / (c7 + 25f64.powi(7))).sqrt());
    let a1p = (1.0 + g) * c1.a;
    let a2p = (1.0 + g) * c2.a;
    let c1p = a1p.hypot(c1.b);
    let c2p = a2p.hypot(c2.b);
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            let h = deg(b.atan2(a));
            if h < 0.0 {
                h + 360.0
            } else {
                h
            }
        }
    };
    let h1p = hue(c1.b, a1p);
    let h2p = hue(c2.b, a2p);

    let dlp = c2.l - c1.l;
    let dcp = c2p - c1p;
    let dhp = if c1p * c2p == 0.0 {
        0.0
    } else if (h2p - h1p).abs() <= 180.0 {
        h2p - h1p
    } else if h2p - h1p > 180.0 {
        h2p - h1p - 360.0
    } else {
        h2p - h1p + 360.0
    };
    let d_hp = 2.0 * (c1p * c2p).sqrt() * (rad(dhp) / 2.0).sin();

    let lp_bar = (c1.l + c2.l) / 2.0;
    let cp_bar = (c1p + c2p) / 2.0;
    let hp_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };
    let t = 1.0 - 0.17 * rad(hp_bar - 30.0).cos() + 0.24 * rad(2.0 * hp_bar).cos()
        + 0.32 * rad(3.0 * hp_bar + 6.0).cos()
        - 0.20 * rad(4.0 * hp_bar - 63.0).cos();
    let d_theta = 30.0 * (-((hp_bar - 275.0) / 25.0).powi(2)).exp();
    let cp7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp7 / (cp7 + 25f64.powi(7))).sqrt();
    let l50 = (lp_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;
    let r_t = -(2.0 * d_theta * PI / 180.0).sin() * r_c;

    let (tl, tc, th) = (dlp / s_l, dcp / s_c, d_hp / s_h);
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// Excess green `2g − r − b` over chromaticity coordinates; 0 for black.
pub fn excess_green(rgb: [u8; 3]) -> f64 {
    let sum = rgb.iter().map(|&c| c as f64).sum::<f64>();
    if sum == 0.0 {
        return 0.0;
    }
    let [r, g, b] = rgb.map(|c| c as f64 / sum);
    2.0 * g - r - b
}

/// Mean Lab colour of a set of pixels (arithmetic mean in Lab).
pub fn mean_lab(pixels: impl IntoIterator<Item = [u8; 3]>) -> Option<LabColor> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for p in pixels {
        let lab = rgb_to_lab(p);
        acc[0] += lab.l;
        acc[1] += lab.a;
        acc[2] += lab.b;
        n += 1;
    }
    (n > 0).then(|| LabColor::new(acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64))
}
