//! Differentiable warping of side views onto the center view.
//!
//! A center pixel `x` with disparity `d` is looked up in the view at offset
//! `Δ = (u − u₀, v − v₀)` at `x + Δ·d`, by bilinear interpolation. Samples
//! outside `[0, W−1]×[0, H−1]` are excluded rather than clamped.

use crate::error::Result;
use crate::lfdata::{Image, LightField, ViewCoordinate};

pub const MAX_CHANNELS: usize = 3;

/// Bilinear lookup with its exact coordinate derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelSample {
    pub value: [f64; MAX_CHANNELS],
    pub d_col: [f64; MAX_CHANNELS],
    pub d_row: [f64; MAX_CHANNELS],
    pub in_bounds: bool,
}

/// A view sampled at a disparity-shifted position. Out-of-bounds samples
/// carry zero value and derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WarpSample {
    pub value: [f64; MAX_CHANNELS],
    pub d_value_d_disparity: [f64; MAX_CHANNELS],
    pub in_bounds: bool,
}

#[inline]
fn cell(p: f64, len: usize) -> (usize, f64) {
    if len < 2 {
        return (0, 0.0);
    }
    // Right-limit convention: a lattice coordinate starts the cell to its
    // right, except on the last line.
    let i = (p.floor() as usize).min(len - 2);
    (i, p - i as f64)
}

/// Sample `img` at continuous pixel coordinate `(col, row)`.
pub fn bilinear_sample(img: &Image, (col, row): (f64, f64)) -> PixelSample {
    let (w, h) = (img.width(), img.height());
    let inside = col >= 0.0 && row >= 0.0 && col <= (w - 1) as f64 && row <= (h - 1) as f64;
    if !inside {
        return PixelSample::default();
    }
    let (x0, fx) = cell(col, w);
    let (y0, fy) = cell(row, h);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let mut s = PixelSample {
        in_bounds: true,
        ..Default::default()
    };
    for c in 0..img.channels() {
        let i00 = img.get(x0, y0, c);
        let i10 = img.get(x1, y0, c);
        let i01 = img.get(x0, y1, c);
        let i11 = img.get(x1, y1, c);
        // Convex weights keep lattice points exact at both cell ends.
        let top = (1.0 - fx) * i00 + fx * i10;
        let bottom = (1.0 - fx) * i01 + fx * i11;
        s.value[c] = (1.0 - fy) * top + fy * bottom;
        if w >= 2 {
            s.d_col[c] = (1.0 - fy) * (i10 - i00) + fy * (i11 - i01);
        }
        if h >= 2 {
            s.d_row[c] = bottom - top;
        }
    }
    s
}

/// Sample `img` at `x + Δ·d` and chain the coordinate derivative through Δ.
#[inline]
pub fn warp_sample(img: &Image, (du, dv): (f64, f64), (col, row): (f64, f64), d: f64) -> WarpSample {
    let s = bilinear_sample(img, (col + du * d, row + dv * d));
    let mut out = WarpSample {
        value: s.value,
        in_bounds: s.in_bounds,
        ..Default::default()
    };
    for c in 0..MAX_CHANNELS {
        out.d_value_d_disparity[c] = du * s.d_col[c] + dv * s.d_row[c];
    }
    out
}

/// Warp view `vc` at pixel coordinates `xs` with disparities `d`.
pub fn warp_view(lf: &LightField, vc: ViewCoordinate, xs: &[(f64, f64)], d: &[f64]) -> Result<Vec<WarpSample>> {
    assert_eq!(xs.len(), d.len(), "one disparity per coordinate");
    let img = lf.view_image(vc)?;
    let delta = lf.offset(vc);
    Ok(xs.iter().zip(d).map(|(&x, &d)| warp_sample(img, delta, x, d)).collect())
}

/// Masked mean of warped values per pixel; `None` where no view contributes.
pub fn aggregate_center(warps: &[Vec<WarpSample>], masks: &[Vec<bool>], channels: usize) -> Vec<Option<[f64; MAX_CHANNELS]>> {
    let n = warps.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut sum = [0.0; MAX_CHANNELS];
            let mut count = 0usize;
            for (w, m) in warps.iter().zip(masks) {
                if m[i] && w[i].in_bounds {
                    count += 1;
                    for c in 0..channels {
                        sum[c] += w[i].value[c];
                    }
                }
            }
            (count > 0).then(|| sum.map(|s| s / count as f64))
        })
        .collect()
}

/// One view warped over a square patch, stored as channel planes.
#[derive(Debug, Clone)]
pub struct PatchWarp {
    /// `channels x size²` values.
    pub values: Vec<f64>,
    /// Derivatives of `values` with respect to the pixel's disparity.
    pub d_disparity: Vec<f64>,
    pub in_bounds: Vec<bool>,
}

/// Warp `img` over the `size`x`size` patch at `origin` (col, row).
pub fn warp_patch(img: &Image, delta: (f64, f64), origin: (usize, usize), size: usize, d: &[f64]) -> PatchWarp {
    let n = size * size;
    let channels = img.channels();
    let mut out = PatchWarp {
        values: vec![0.0; channels * n],
        d_disparity: vec![0.0; channels * n],
        in_bounds: vec![false; n],
    };
    for i in 0..n {
        let p = ((origin.0 + i % size) as f64, (origin.1 + i / size) as f64);
        let s = warp_sample(img, delta, p, d[i]);
        out.in_bounds[i] = s.in_bounds;
        for c in 0..channels {
            out.values[c * n + i] = s.value[c];
            out.d_disparity[c * n + i] = s.d_value_d_disparity[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfdata::{synth_lightfield, SceneKind, SceneSpec};
    use proptest::prelude::*;

    fn square() -> Image {
        Image::new(2, 2, 1, vec![0.0, 1.0, 2.0 / 3.0, 1.0]).unwrap()
    }

    fn unit_square() -> Image {
        // [[0,1],[2,3]] scaled into [0,1]; expectations scale back by 3.
        Image::new(2, 2, 1, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap()
    }

    #[test]
    fn lattice_and_center_values() {
        let img = unit_square();
        assert_eq!(bilinear_sample(&img, (0.0, 0.0)).value[0], 0.0);
        let s = bilinear_sample(&img, (0.5, 0.5));
        assert!((3.0 * s.value[0] - 1.5).abs() < 1e-12);
        assert!((3.0 * s.d_col[0] - 1.0).abs() < 1e-12);
        assert!((3.0 * s.d_row[0] - 2.0).abs() < 1e-12);
        assert!(bilinear_sample(&square(), (1.0, 1.0)).in_bounds);
        assert!(!bilinear_sample(&square(), (1.0001, 0.0)).in_bounds);
        assert!(!bilinear_sample(&square(), (-1e-9, 0.0)).in_bounds);
    }

    #[test]
    fn lattice_points_reproduce_pixels() {
        let img = Image::from_fn(5, 4, 3, |x, y, c| ((x * 3 + y * 5 + c) % 11) as f64 / 10.0).unwrap();
        for row in 0..4 {
            for col in 0..5 {
                let s = bilinear_sample(&img, (col as f64, row as f64));
                for c in 0..3 {
                    assert_eq!(s.value[c], img.get(col, row, c));
                }
            }
        }
    }

    #[test]
    fn aggregation() {
        let s = |v: f64| WarpSample {
            value: [v, 0.0, 0.0],
            in_bounds: true,
            ..Default::default()
        };
        let warps = vec![vec![s(1.0), s(0.5)], vec![s(3.0), s(0.5)]];
        let all = vec![vec![true, true], vec![true, true]];
        let out = aggregate_center(&warps, &all, 1);
        assert_eq!(out[0].unwrap()[0], 2.0);
        assert_eq!(out[1].unwrap()[0], 0.5);
        let none = vec![vec![false, true], vec![false, true]];
        assert!(aggregate_center(&warps, &none, 1)[0].is_none());
    }

    #[test]
    fn zero_shift_and_center_view() {
        let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 1.0 }).with_seed(2);
        let (lf, _) = synth_lightfield(&spec, 12, 12, 3, 3).unwrap();
        let xs: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, (i / 2) as f64)).collect();
        let side = ViewCoordinate::new(2, 0);
        let zero = warp_view(&lf, side, &xs, &vec![0.0; 12]).unwrap();
        for (s, &(c, r)) in zero.iter().zip(&xs) {
            assert_eq!(s.value[0], lf.view_image(side).unwrap().get(c as usize, r as usize, 0));
        }
        let center = warp_view(&lf, lf.center(), &xs, &vec![0.7; 12]).unwrap();
        for (s, &(c, r)) in center.iter().zip(&xs) {
            assert_eq!(s.value[0], lf.center_view().get(c as usize, r as usize, 0));
            assert_eq!(s.d_value_d_disparity[0], 0.0);
        }
    }

    #[test]
    fn true_disparity_reproduces_center() {
        let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 1.5 }).with_seed(5);
        let (lf, _) = synth_lightfield(&spec, 32, 32, 5, 5).unwrap();
        let xs: Vec<(f64, f64)> = (0..32 * 32).map(|i| ((i % 32) as f64, (i / 32) as f64)).collect();
        let d = vec![1.5; xs.len()];
        for vc in lf.side_views() {
            for (s, &(c, r)) in warp_view(&lf, vc, &xs, &d).unwrap().iter().zip(&xs) {
                if s.in_bounds {
                    assert!((s.value[0] - lf.center_view().get(c as usize, r as usize, 0)).abs() < 1e-2);
                }
            }
        }
    }

    #[test]
    fn patch_warp_matches_pointwise() {
        let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 1.0 }).with_seed(8);
        let (lf, _) = synth_lightfield(&spec, 16, 16, 3, 3).unwrap();
        let vc = ViewCoordinate::new(0, 2);
        let d: Vec<f64> = (0..16).map(|i| 0.1 * i as f64).collect();
        let pw = warp_patch(lf.view_image(vc).unwrap(), lf.offset(vc), (3, 5), 4, &d);
        let xs: Vec<(f64, f64)> = (0..16).map(|i| ((3 + i % 4) as f64, (5 + i / 4) as f64)).collect();
        for (i, s) in warp_view(&lf, vc, &xs, &d).unwrap().iter().enumerate() {
            assert_eq!(pw.values[i], s.value[0]);
            assert_eq!(pw.d_disparity[i], s.d_value_d_disparity[0]);
            assert_eq!(pw.in_bounds[i], s.in_bounds);
        }
    }

    proptest! {
        #[test]
        fn disparity_derivative_matches_finite_differences(
            col in 2.0f64..13.0, row in 2.0f64..13.0, d in -1.0f64..1.0, du in -2i32..=2, dv in -2i32..=2,
        ) {
            let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 0.0 }).with_seed(3);
            let (lf, _) = synth_lightfield(&spec, 16, 16, 3, 3).unwrap();
            let img = lf.center_view();
            let delta = (du as f64, dv as f64);
            let (pc, pr) = (col + delta.0 * d, row + delta.1 * d);
            let near_edge = |p: f64| (p - p.round()).abs() < 1e-3;
            prop_assume!(!near_edge(pc) && !near_edge(pr));
            let eps = 1e-4;
            let s = warp_sample(img, delta, (col, row), d);
            let fd = (warp_sample(img, delta, (col, row), d + eps).value[0]
                - warp_sample(img, delta, (col, row), d - eps).value[0]) / (2.0 * eps);
            prop_assert!((s.d_value_d_disparity[0] - fd).abs() < 1e-6);
        }

        #[test]
        fn shifting_disparity_shifts_coordinates(col in 3.0f64..12.0, row in 3.0f64..12.0, d in -0.5f64..0.5, delta in -0.5f64..0.5) {
            let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 0.0 }).with_seed(4);
            let (lf, _) = synth_lightfield(&spec, 16, 16, 3, 3).unwrap();
            let img = lf.center_view();
            let off = (1.0, -2.0);
            let a = warp_sample(img, off, (col, row), d + delta);
            let b = warp_sample(img, off, (col + off.0 * delta, row + off.1 * delta), d);
            prop_assert!((a.value[0] - b.value[0]).abs() < 1e-12);
        }
    }
}
