//! Procedural light fields with analytic ground truth.
//!
//! Each scene is a stack of layers, nearest first. A layer carries an affine
//! disparity function over center-view pixel coordinates, a support region
//! and a smooth sinusoidal texture. The pixel at `y` in the view at offset
//! `Δ` shows the nearest layer whose point `x` with `x + Δ·d(x) = y` lies
//! inside that layer's support.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DisparityMap, Image, LightField};
use crate::error::{Error, Result};

/// Shortest and longest texture wavelength in pixels. The short end bounds
/// the bilinear interpolation error of warped views.
const MIN_WAVELENGTH: f64 = 12.0;
const MAX_WAVELENGTH: f64 = 32.0;
const COMPONENTS: usize = 8;
const AMPLITUDE: f64 = 0.42;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    /// Fronto-parallel plane at disparity `d0`.
    ConstantPlane { d0: f64 },
    /// `d0` at the image center, changing by `gx`/`gy` per pixel.
    SlantedPlane { d0: f64, gx: f64, gy: f64 },
    /// Columns at or right of `edge` (normalized) sit at `near`, the rest at `far`.
    StepOccluder { near: f64, far: f64, edge: f64 },
    /// A rectangle `[x0, y0, x1, y1]` (normalized) at `foreground` in front
    /// of a plane at `background`.
    TwoLayer {
        foreground: f64,
        background: f64,
        rect: [f64; 4],
    },
}

impl SceneKind {
    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::ConstantPlane { .. } => "constant_plane",
            SceneKind::SlantedPlane { .. } => "slanted_plane",
            SceneKind::StepOccluder { .. } => "step_occluder",
            SceneKind::TwoLayer { .. } => "two_layer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub texture_seed: u64,
    pub noise_sigma: f64,
    pub channels: usize,
}

impl SceneSpec {
    pub fn new(kind: SceneKind) -> Self {
        Self {
            kind,
            texture_seed: 0,
            noise_sigma: 0.0,
            channels: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.texture_seed = seed;
        self
    }

    /// Declared `[d_min, d_max]` for an image of the given size.
    pub fn disparity_range(&self, width: usize, height: usize) -> (f64, f64) {
        match self.kind {
            SceneKind::ConstantPlane { d0 } => (d0, d0),
            SceneKind::SlantedPlane { d0, gx, gy } => {
                let hx = gx.abs() * (width as f64 - 1.0) / 2.0;
                let hy = gy.abs() * (height as f64 - 1.0) / 2.0;
                (d0 - hx - hy, d0 + hx + hy)
            }
            SceneKind::StepOccluder { near, far, .. } => (near.min(far), near.max(far)),
            SceneKind::TwoLayer {
                foreground,
                background,
                ..
            } => (foreground.min(background), foreground.max(background)),
        }
    }

    fn layers(&self, width: usize, height: usize) -> Vec<Layer> {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let tex = |k: u64| Texture::random(self.texture_seed.wrapping_mul(31).wrapping_add(k), self.channels);
        let flat = |d: f64| Affine { d0: d, gx: 0.0, gy: 0.0, cx, cy };
        match self.kind {
            SceneKind::ConstantPlane { d0 } => vec![Layer::new(flat(d0), Support::All, tex(0))],
            SceneKind::SlantedPlane { d0, gx, gy } => {
                vec![Layer::new(Affine { d0, gx, gy, cx, cy }, Support::All, tex(0))]
            }
            SceneKind::StepOccluder { near, far, edge } => vec![
                Layer::new(flat(near), Support::RightOf(edge * width as f64 - 0.5), tex(1)),
                Layer::new(flat(far), Support::All, tex(0)),
            ],
            SceneKind::TwoLayer {
                foreground,
                background,
                rect,
            } => {
                let sx = |t: f64| t * width as f64 - 0.5;
                let sy = |t: f64| t * height as f64 - 0.5;
                vec![
                    Layer::new(
                        flat(foreground),
                        Support::Rect([sx(rect[0]), sy(rect[1]), sx(rect[2]), sy(rect[3])]),
                        tex(1),
                    ),
                    Layer::new(flat(background), Support::All, tex(0)),
                ]
            }
        }
    }

    fn validate(&self, width: usize, height: usize, rows: usize, cols: usize) -> Result<()> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::Scene(format!("view grid {rows}x{cols} must have odd dimensions")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Scene("image must be nonempty".into()));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::Scene(format!("unsupported channel count {}", self.channels)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Scene("noise_sigma must be finite and nonnegative".into()));
        }
        match self.kind {
            SceneKind::StepOccluder { near, far, edge } if near <= far || !(0.0..=1.0).contains(&edge) => {
                return Err(Error::Scene("step_occluder needs near > far and edge in [0, 1]".into()))
            }
            SceneKind::TwoLayer {
                foreground,
                background,
                rect,
            } if foreground <= background
                || rect[0] >= rect[2]
                || rect[1] >= rect[3]
                || rect.iter().any(|r| !(0.0..=1.0).contains(r)) =>
            {
                return Err(Error::Scene(
                    "two_layer needs foreground > background and a nonempty rect inside [0, 1]".into(),
                ))
            }
            _ => {}
        }
        let max_offset = ((cols - 1) / 2).max((rows - 1) / 2) as f64;
        if let SceneKind::SlantedPlane { gx, gy, .. } = self.kind {
            if (gx.abs() + gy.abs()) * max_offset >= 0.5 {
                return Err(Error::Scene("slope too steep for the view baseline".into()));
            }
        }
        let (lo, hi) = self.disparity_range(width, height);
        let shift = lo.abs().max(hi.abs()) * max_offset;
        let margin = width.min(height) as f64 / 4.0;
        if !shift.is_finite() || shift > margin {
            return Err(Error::Scene(format!(
                "maximum view shift {shift:.2} px exceeds margin {margin:.2} px"
            )));
        }
        Ok(())
    }

    /// Ground truth for the center view rendered at `out_w`x`out_h`, in
    /// disparity units of the `width`x`height` reference image.
    pub fn ground_truth(&self, width: usize, height: usize, out_w: usize, out_h: usize) -> Result<DisparityMap> {
        let layers = self.layers(width, height);
        let sx = width as f64 / out_w as f64;
        let sy = height as f64 / out_h as f64;
        DisparityMap::from_fn(out_w, out_h, |i, j| {
            let x = (i as f64 + 0.5) * sx - 0.5;
            let y = (j as f64 + 0.5) * sy - 0.5;
            let layer = layers
                .iter()
                .find(|l| l.support.contains(x, y))
                .expect("last layer has full support");
            layer.disparity.eval(x, y)
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    d0: f64,
    gx: f64,
    gy: f64,
    cx: f64,
    cy: f64,
}

impl Affine {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.d0 + self.gx * (x - self.cx) + self.gy * (y - self.cy)
    }

    /// Center-view point `x` that lands on `p` in the view at offset `(du, dv)`.
    fn preimage(&self, p: (f64, f64), (du, dv): (f64, f64)) -> (f64, f64) {
        // (I + Δ gᵀ) x = p − Δ (d0 − g·c), inverted by Sherman-Morrison.
        let k = self.d0 - self.gx * self.cx - self.gy * self.cy;
        let q = (p.0 - du * k, p.1 - dv * k);
        let det = 1.0 + du * self.gx + dv * self.gy;
        let gq = self.gx * q.0 + self.gy * q.1;
        (q.0 - du * gq / det, q.1 - dv * gq / det)
    }
}

#[derive(Debug, Clone, Copy)]
enum Support {
    All,
    RightOf(f64),
    Rect([f64; 4]),
}

impl Support {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Support::All => true,
            Support::RightOf(edge) => x >= edge,
            Support::Rect([x0, y0, x1, y1]) => x >= x0 && x < x1 && y >= y0 && y < y1,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    disparity: Affine,
    support: Support,
    texture: Texture,
}

impl Layer {
    fn new(disparity: Affine, support: Support, texture: Texture) -> Self {
        Self {
            disparity,
            support,
            texture,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amplitude: f64,
}

/// Band-limited random texture: a sum of oriented sinusoids per channel
/// around a mid-gray level, with values in `[0.08, 0.92]`.
#[derive(Debug, Clone)]
pub struct Texture {
    channels: Vec<Vec<Wave>>,
}

impl Texture {
    pub fn random(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = (0..channels)
            .map(|_| {
                let raw: Vec<(f64, f64, f64, f64)> = (0..COMPONENTS)
                    .map(|_| {
                        let theta = rng.random_range(0.0..std::f64::consts::PI);
                        let wavelength = rng.random_range(MIN_WAVELENGTH..MAX_WAVELENGTH);
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        let weight = rng.random_range(0.5..1.0);
                        (theta, wavelength, phase, weight)
                    })
                    .collect();
                let total: f64 = raw.iter().map(|r| r.3).sum();
                raw.into_iter()
                    .map(|(theta, wavelength, phase, weight)| {
                        let k = std::f64::consts::TAU / wavelength;
                        Wave {
                            kx: k * theta.cos(),
                            ky: k * theta.sin(),
                            phase,
                            amplitude: AMPLITUDE * weight / total,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { channels }
    }

    pub fn eval(&self, x: f64, y: f64, channel: usize) -> f64 {
        0.5 + self.channels[channel]
            .iter()
            .map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin())
            .sum::<f64>()
    }

    /// Upper bound on any second directional derivative.
    pub fn curvature_bound(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.iter().map(|w| w.amplitude * (w.kx * w.kx + w.ky * w.ky)).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Render a `rows`x`cols` light field of `width`x`height` views and the
/// center-view ground truth.
pub fn synth_lightfield(
    spec: &SceneSpec,
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
) -> Result<(LightField, DisparityMap)> {
    spec.validate(width, height, rows, cols)?;
    let layers = spec.layers(width, height);
    let (cu, cv) = ((cols - 1) / 2, (rows - 1) / 2);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.texture_seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let mut views = Vec::with_capacity(rows * cols);
    for v in 0..rows {
        for u in 0..cols {
            let offset = (u as f64 - cu as f64, v as f64 - cv as f64);
            let img = Image::from_fn(width, height, spec.channels, |col, row, c| {
                let p = (col as f64, row as f64);
                let (layer, x) = layers
                    .iter()
                    .find_map(|l| {
                        let x = l.disparity.preimage(p, offset);
                        l.support.contains(x.0, x.1).then_some((l, x))
                    })
                    .expect("last layer has full support");
                let value = layer.texture.eval(x.0, x.1, c);
                if spec.noise_sigma > 0.0 {
                    (value + noise.sample(&mut noise_rng)).clamp(0.0, 1.0)
                } else {
                    value
                }
            })?;
            views.push(img);
        }
    }
    let lf = LightField::new(views, rows, cols)?;
    let gt = spec.ground_truth(width, height, width, height)?;
    Ok((lf, gt))
}
