//! Gaussian-windowed SSIM on square patches, with its adjoint.
//!
//! Windows are separable. In `Valid` mode only centers whose full window
//! fits are produced. In `Truncated` mode every pixel is a center and the
//! window is cut at the patch border and renormalized, which keeps the
//! filter separable.

use super::Patch;
use crate::error::{Error, Result};

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Windowing {
    Valid,
    Truncated,
}

/// Banded 1D filter: output `o` reads `weights[o]` starting at `starts[o]`.
#[derive(Debug, Clone)]
struct Filter1d {
    in_len: usize,
    starts: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl Filter1d {
    fn new(len: usize, window: usize, sigma: f64, mode: Windowing) -> Self {
        let r = window / 2;
        let kernel: Vec<f64> = (0..window)
            .map(|k| {
                let t = k as f64 - r as f64;
                (-t * t / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        let (mut starts, mut weights) = (Vec::new(), Vec::new());
        match mode {
            Windowing::Valid => {
                for o in 0..=(len - window) {
                    starts.push(o);
                    weights.push(kernel.iter().map(|k| k / total).collect());
                }
            }
            Windowing::Truncated => {
                for o in 0..len {
                    let lo = o.saturating_sub(r);
                    let hi = (o + r).min(len - 1);
                    let w: Vec<f64> = (lo..=hi).map(|i| kernel[i + r - o]).collect();
                    let s: f64 = w.iter().sum();
                    starts.push(lo);
                    weights.push(w.into_iter().map(|x| x / s).collect());
                }
            }
        }
        Self {
            in_len: len,
            starts,
            weights,
        }
    }

    fn out_len(&self) -> usize {
        self.starts.len()
    }
}

/// Separable 2D window over a square `size`x`size` plane.
#[derive(Debug, Clone)]
pub struct Window {
    filter: Filter1d,
    pub mode: Windowing,
}

impl Window {
    pub fn new(size: usize, window: usize, sigma: f64, mode: Windowing) -> Result<Self> {
        if window.is_multiple_of(2) || window < 3 {
            return Err(Error::Config(format!("SSIM window {window} must be odd and at least 3")));
        }
        if size < window {
            return Err(Error::Dimension(format!("patch side {size} smaller than SSIM window {window}")));
        }
        Ok(Self {
            filter: Filter1d::new(size, window, sigma, mode),
            mode,
        })
    }

    pub fn in_side(&self) -> usize {
        self.filter.in_len
    }

    pub fn out_side(&self) -> usize {
        self.filter.out_len()
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let (n, m) = (self.in_side(), self.out_side());
        let f = &self.filter;
        let mut tmp = vec![0.0; n * m];
        for y in 0..n {
            let row = &input[y * n..(y + 1) * n];
            for o in 0..m {
                tmp[y * m + o] = f.weights[o].iter().zip(&row[f.starts[o]..]).map(|(w, v)| w * v).sum();
            }
        }
        let mut out = vec![0.0; m * m];
        for o in 0..m {
            let dst = &mut out[o * m..(o + 1) * m];
            for (k, w) in f.weights[o].iter().enumerate() {
                let src = &tmp[(f.starts[o] + k) * m..(f.starts[o] + k + 1) * m];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Adjoint of [`Window::apply`].
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let (n, m) = (self.in_side(), self.out_side());
        let f = &self.filter;
        let mut tmp = vec![0.0; n * m];
        for o in 0..m {
            let src = &g[o * m..(o + 1) * m];
            for (k, w) in f.weights[o].iter().enumerate() {
                let dst = &mut tmp[(f.starts[o] + k) * m..(f.starts[o] + k + 1) * m];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        let mut out = vec![0.0; n * n];
        for y in 0..n {
            let row = &mut out[y * n..(y + 1) * n];
            for o in 0..m {
                let gv = tmp[y * m + o];
                for (w, dst) in f.weights[o].iter().zip(&mut row[f.starts[o]..]) {
                    *dst += w * gv;
                }
            }
        }
        out
    }
}

/// Windowed mean and second moment of a fixed (center) plane.
#[derive(Debug, Clone)]
pub struct PlaneStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl PlaneStats {
    pub fn new(window: &Window, a: &[f64]) -> Self {
        let mean = window.apply(a);
        let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
        let var = window.apply(&sq).iter().zip(&mean).map(|(m2, m)| m2 - m * m).collect();
        Self { mean, var }
    }
}

/// SSIM of `b` against a fixed plane, with what the adjoint needs.
#[derive(Debug, Clone)]
pub struct SsimMap {
    pub values: Vec<f64>,
    d_mean: Vec<f64>,
    d_m2: Vec<f64>,
    d_cross: Vec<f64>,
}

impl SsimMap {
    pub fn new(window: &Window, a_stats: &PlaneStats, a: &[f64], b: &[f64]) -> Self {
        let mu_b = window.apply(b);
        let sq: Vec<f64> = b.iter().map(|v| v * v).collect();
        let m2_b = window.apply(&sq);
        let cross: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let m_ab = window.apply(&cross);
        let m = mu_b.len();
        let mut out = SsimMap {
            values: vec![0.0; m],
            d_mean: vec![0.0; m],
            d_m2: vec![0.0; m],
            d_cross: vec![0.0; m],
        };
        for i in 0..m {
            let (ma, mb) = (a_stats.mean[i], mu_b[i]);
            let var_b = m2_b[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = a_stats.var[i] + var_b + C2;
            let s = a1 * a2 / (b1 * b2);
            out.values[i] = s;
            // Partials with μ_b, E[b²], E[ab] as independent inputs.
            let ds_dcov = 2.0 * a1 / (b1 * b2);
            let ds_dvar = -s / b2;
            let ds_dmu = 2.0 * ma * a2 / (b1 * b2) - 2.0 * mb * s / b1;
            out.d_m2[i] = ds_dvar;
            out.d_cross[i] = ds_dcov;
            // var_b = E[b²] − μ_b², cov = E[ab] − μ_a μ_b
            out.d_mean[i] = ds_dmu - 2.0 * mb * ds_dvar - ma * ds_dcov;
        }
        out
    }

    /// Gradient of `Σ_x λ(x)·SSIM(x)` with respect to `b`.
    pub fn backward(&self, window: &Window, a: &[f64], b: &[f64], lambda: &[f64]) -> Vec<f64> {
        let scaled = |d: &[f64]| -> Vec<f64> { d.iter().zip(lambda).map(|(x, l)| x * l).collect() };
        let g_mean = window.apply_transpose(&scaled(&self.d_mean));
        let g_m2 = window.apply_transpose(&scaled(&self.d_m2));
        let g_cross = window.apply_transpose(&scaled(&self.d_cross));
        (0..b.len())
            .map(|y| g_mean[y] + 2.0 * b[y] * g_m2[y] + a[y] * g_cross[y])
            .collect()
    }
}

/// Per-center SSIM (channel-averaged) and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MssimResult {
    /// `side x side` map, row-major.
    pub map: Vec<f64>,
    pub side: usize,
    pub mean: f64,
}

/// Standard SSIM between two patches over full-window centers.
pub fn mssim_map(a: &Patch, b: &Patch, window: usize, sigma: f64) -> Result<MssimResult> {
    mssim_map_with(a, b, window, sigma, Windowing::Valid)
}

pub fn mssim_map_with(a: &Patch, b: &Patch, window: usize, sigma: f64, mode: Windowing) -> Result<MssimResult> {
    if a.size != b.size || a.channels != b.channels {
        return Err(Error::Dimension("SSIM patches differ in shape".into()));
    }
    let win = Window::new(a.size, window, sigma, mode)?;
    let m = win.out_side() * win.out_side();
    let mut map = vec![0.0; m];
    for c in 0..a.channels {
        let stats = PlaneStats::new(&win, a.plane(c));
        let s = SsimMap::new(&win, &stats, a.plane(c), b.plane(c));
        for (acc, v) in map.iter_mut().zip(&s.values) {
            *acc += v / a.channels as f64;
        }
    }
    let mean = map.iter().sum::<f64>() / m as f64;
    Ok(MssimResult {
        map,
        side: win.out_side(),
        mean,
    })
}
