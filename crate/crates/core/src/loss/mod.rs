//! Photometric and regularization terms of the reconstruction objective.
//!
//! Per side view `k` and pixel `x` the matching distance is
//! `E_k(x) = |c(x) − w_k(x)| + α·(1 − SSIM_k(x))` (channel means). The
//! training loss sums `E` over the selected views, averages over the patch
//! and adds `β·TV(d̂)`. The monitor instead compares the center patch with
//! the mean of the selected warps.

mod select;
mod ssim;
mod tv;

pub use select::{select_views, SelectionMode, ViewSelection};
pub use ssim::{mssim_map, mssim_map_with, MssimResult, PlaneStats, SsimMap, Window, Windowing, C1, C2};
pub use tv::{tv_term, tv_with_grad};

use crate::error::{Error, Result};
use crate::warp::PatchWarp;

/// Square image patch stored as channel planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn from_fn(size: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size * channels);
        for c in 0..channels {
            for y in 0..size {
                for x in 0..size {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { size, channels, data }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub mssim_window: usize,
    pub mssim_sigma: f64,
    pub charbonnier_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            mssim_window: 11,
            mssim_sigma: 1.5,
            charbonnier_eps: 1e-6,
        }
    }
}

/// Everything the loss needs for one patch. Warps are taken at the
/// (possibly noise-perturbed) disparities; `disparity` holds the clean
/// predictions that TV acts on.
#[derive(Debug, Clone)]
pub struct PatchData {
    pub origin: (usize, usize),
    pub center: Patch,
    pub disparity: Vec<f64>,
    pub warps: Vec<PatchWarp>,
}

/// Sampled patches of one training step.
#[derive(Debug, Clone)]
pub struct PatchBatch {
    pub size: usize,
    pub patches: Vec<PatchData>,
}

/// Loss value and disparity cotangent of one patch.
#[derive(Debug, Clone)]
pub struct PatchLoss {
    pub loss: f64,
    pub photometric: f64,
    pub tv: f64,
    pub cotangent: Vec<f64>,
    pub selection: ViewSelection,
}

/// Pixels whose in-patch window holds only in-bounds samples.
fn window_valid(in_bounds: &[bool], size: usize, radius: usize) -> Vec<bool> {
    let mut rows = vec![true; size * size];
    for y in 0..size {
        for x in 0..size {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(size - 1);
            rows[y * size + x] = (lo..=hi).all(|i| in_bounds[y * size + i]);
        }
    }
    let mut out = vec![true; size * size];
    for y in 0..size {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(size - 1);
        for x in 0..size {
            out[y * size + x] = (lo..=hi).all(|j| rows[j * size + x]);
        }
    }
    out
}

/// Per-view intermediates shared by the distance and its gradient.
struct ViewTerms {
    distance: Vec<f64>,
    ssim: Vec<SsimMap>,
}

struct Context {
    window: Option<Window>,
    center_stats: Vec<PlaneStats>,
}

impl Context {
    fn new(center: &Patch, w: &LossWeights) -> Result<Self> {
        if w.alpha == 0.0 {
            return Ok(Self {
                window: None,
                center_stats: Vec::new(),
            });
        }
        let window = Window::new(center.size, w.mssim_window, w.mssim_sigma, Windowing::Truncated)?;
        let center_stats = (0..center.channels).map(|c| PlaneStats::new(&window, center.plane(c))).collect();
        Ok(Self {
            window: Some(window),
            center_stats,
        })
    }

    fn view_terms(&self, center: &Patch, values: &[f64], valid: &[bool], w: &LossWeights) -> ViewTerms {
        let n = center.size * center.size;
        let channels = center.channels as f64;
        let ssim: Vec<SsimMap> = match &self.window {
            Some(win) => (0..center.channels)
                .map(|c| SsimMap::new(win, &self.center_stats[c], center.plane(c), &values[c * n..(c + 1) * n]))
                .collect(),
            None => Vec::new(),
        };
        let distance = (0..n)
            .map(|i| {
                if !valid[i] {
                    return f64::INFINITY;
                }
                let mut l1 = 0.0;
                let mut s = 0.0;
                for c in 0..center.channels {
                    l1 += (center.data[c * n + i] - values[c * n + i]).abs();
                    if let Some(map) = ssim.get(c) {
                        s += map.values[i];
                    }
                }
                let structural = if ssim.is_empty() { 0.0 } else { w.alpha * (1.0 - s / channels) };
                l1 / channels + structural
            })
            .collect();
        ViewTerms { distance, ssim }
    }
}

/// `E(x)` for one warped patch; `+∞` where `valid` is false.
pub fn view_distance(center: &Patch, warped: &Patch, valid: &[bool], w: &LossWeights) -> Result<Vec<f64>> {
    if center.size != warped.size || center.channels != warped.channels || valid.len() != center.size * center.size {
        return Err(Error::Dimension("view_distance inputs differ in shape".into()));
    }
    let ctx = Context::new(center, w)?;
    Ok(ctx.view_terms(center, &warped.data, valid, w).distance)
}

impl PatchData {
    fn check(&self, size: usize) -> Result<()> {
        let n = size * size;
        if self.center.size != size || self.disparity.len() != n {
            return Err(Error::Dimension("patch data does not match patch size".into()));
        }
        if self.warps.iter().any(|w| w.in_bounds.len() != n || w.values.len() != n * self.center.channels) {
            return Err(Error::Dimension("warped view does not match patch".into()));
        }
        Ok(())
    }

    fn terms(&self, ctx: &Context, w: &LossWeights) -> Vec<ViewTerms> {
        let radius = if w.alpha == 0.0 { 0 } else { w.mssim_window / 2 };
        self.warps
            .iter()
            .map(|pw| {
                let valid = window_valid(&pw.in_bounds, self.center.size, radius);
                ctx.view_terms(&self.center, &pw.values, &valid, w)
            })
            .collect()
    }

    /// Distances of every view, `[view][pixel]`.
    pub fn distances(&self, w: &LossWeights) -> Result<Vec<Vec<f64>>> {
        self.check(self.center.size)?;
        let ctx = Context::new(&self.center, w)?;
        Ok(self.terms(&ctx, w).into_iter().map(|t| t.distance).collect())
    }

    /// Select views (or reuse `frozen`) and evaluate the training loss with
    /// its cotangent.
    pub fn evaluate(&self, w: &LossWeights, mode: &SelectionMode, frozen: Option<&ViewSelection>) -> Result<PatchLoss> {
        self.check(self.center.size)?;
        let ctx = Context::new(&self.center, w)?;
        let terms = self.terms(&ctx, w);
        let selection = match frozen {
            Some(sel) => sel.clone(),
            None => {
                let e: Vec<Vec<f64>> = terms.iter().map(|t| t.distance.clone()).collect();
                select_views(&e, mode)
            }
        };
        self.loss_from_terms(&ctx, &terms, selection, w)
    }

    fn loss_from_terms(&self, ctx: &Context, terms: &[ViewTerms], selection: ViewSelection, w: &LossWeights) -> Result<PatchLoss> {
        let size = self.center.size;
        let n = size * size;
        let channels = self.center.channels;
        if selection.mask.len() != terms.len() || selection.pixels() != n {
            return Err(Error::Dimension("selection does not match patch".into()));
        }
        let inv_n = 1.0 / n as f64;
        let inv_c = 1.0 / channels as f64;
        let mut cot = vec![0.0; n];
        let mut photometric = 0.0;
        for ((t, pw), sel) in terms.iter().zip(&self.warps).zip(&selection.mask) {
            let mut any = false;
            for i in 0..n {
                if sel[i] {
                    photometric += t.distance[i];
                    any = true;
                }
            }
            if !any {
                continue;
            }
            // d loss / d warped value, per channel plane.
            let mut g_values = vec![0.0; channels * n];
            for c in 0..channels {
                for i in 0..n {
                    if sel[i] {
                        let diff = pw.values[c * n + i] - self.center.data[c * n + i];
                        g_values[c * n + i] = inv_n * inv_c * sign(diff);
                    }
                }
            }
            if let Some(win) = &ctx.window {
                let lambda: Vec<f64> = sel.iter().map(|&s| if s { -w.alpha * inv_n * inv_c } else { 0.0 }).collect();
                for c in 0..channels {
                    let b = &pw.values[c * n..(c + 1) * n];
                    let g = t.ssim[c].backward(win, self.center.plane(c), b, &lambda);
                    for (dst, v) in g_values[c * n..(c + 1) * n].iter_mut().zip(g) {
                        *dst += v;
                    }
                }
            }
            for c in 0..channels {
                for i in 0..n {
                    cot[i] += g_values[c * n + i] * pw.d_disparity[c * n + i];
                }
            }
        }
        photometric *= inv_n;
        let tv = if w.beta != 0.0 {
            tv_with_grad(&self.disparity, size, size, w.charbonnier_eps, Some((&mut cot, w.beta)))
        } else {
            tv_term(&self.disparity, size, size, w.charbonnier_eps)
        };
        Ok(PatchLoss {
            loss: photometric + w.beta * tv,
            photometric,
            tv,
            cotangent: cot,
            selection,
        })
    }

    /// Monitor objective: L1 + α(1 − MSSIM) between the center patch and the
    /// masked mean of the selected warps, plus β·TV. Pixels with no
    /// contributing view are excluded from the photometric terms.
    pub fn objective_full(&self, w: &LossWeights, mode: &SelectionMode) -> Result<f64> {
        self.check(self.center.size)?;
        let size = self.center.size;
        let n = size * size;
        let channels = self.center.channels;
        let selection = select_views(&self.distances(w)?, mode);
        let mut synth = self.center.clone();
        let mut valid = vec![false; n];
        for i in 0..n {
            let mut count = 0usize;
            let mut sum = vec![0.0; channels];
            for (pw, sel) in self.warps.iter().zip(&selection.mask) {
                if sel[i] && pw.in_bounds[i] {
                    count += 1;
                    for (c, s) in sum.iter_mut().enumerate() {
                        *s += pw.values[c * n + i];
                    }
                }
            }
            if count > 0 {
                valid[i] = true;
                for (c, s) in sum.iter().enumerate() {
                    synth.data[c * n + i] = s / count as f64;
                }
            }
        }
        let tv = tv_term(&self.disparity, size, size, w.charbonnier_eps);
        let n_valid = valid.iter().filter(|&&v| v).count();
        if n_valid == 0 {
            return Ok(w.beta * tv);
        }
        let mut l1 = 0.0;
        for c in 0..channels {
            for i in (0..n).filter(|&i| valid[i]) {
                l1 += (self.center.data[c * n + i] - synth.data[c * n + i]).abs();
            }
        }
        l1 /= (n_valid * channels) as f64;
        let structural = if w.alpha != 0.0 {
            let map = mssim_map_with(&self.center, &synth, w.mssim_window, w.mssim_sigma, Windowing::Truncated)?.map;
            let mssim = (0..n).filter(|&i| valid[i]).map(|i| map[i]).sum::<f64>() / n_valid as f64;
            w.alpha * (1.0 - mssim)
        } else {
            0.0
        };
        Ok(l1 + structural + w.beta * tv)
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Training loss of a batch for a given per-patch selection: the mean of the
/// patch losses, and the cotangent per patch.
pub fn training_loss(batch: &PatchBatch, selections: &[ViewSelection], w: &LossWeights) -> Result<(f64, Vec<Vec<f64>>)> {
    if selections.len() != batch.patches.len() {
        return Err(Error::Dimension("one selection per patch required".into()));
    }
    if selections.iter().all(ViewSelection::is_empty) {
        return Err(Error::DegenerateBatch);
    }
    let k = 1.0 / batch.patches.len() as f64;
    let mut total = 0.0;
    let mut cots = Vec::with_capacity(batch.patches.len());
    for (p, sel) in batch.patches.iter().zip(selections) {
        let mut r = p.evaluate(w, &SelectionMode::Half, Some(sel))?;
        total += k * r.loss;
        r.cotangent.iter_mut().for_each(|c| *c *= k);
        cots.push(r.cotangent);
    }
    Ok((total, cots))
}

/// Mean monitor objective over a batch.
pub fn objective_full(batch: &PatchBatch, w: &LossWeights, mode: &SelectionMode) -> Result<f64> {
    let mut total = 0.0;
    for p in &batch.patches {
        total += p.objective_full(w, mode)?;
    }
    Ok(total / batch.patches.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfdata::{synth_lightfield, SceneKind, SceneSpec};
    use crate::warp::warp_patch;

    fn textured(size: usize, offset: f64) -> Patch {
        Patch::from_fn(size, 1, |x, y, _| {
            0.5 + 0.2 * (0.5 * x as f64).sin() * (0.3 * y as f64 + 0.2).cos() + offset
        })
    }

    fn as_warp(p: &Patch) -> PatchWarp {
        PatchWarp {
            values: p.data.clone(),
            d_disparity: vec![0.0; p.data.len()],
            in_bounds: vec![true; p.size * p.size],
        }
    }

    #[test]
    fn distance_vanishes_on_identical_patches() {
        let c = textured(16, 0.0);
        let e = view_distance(&c, &c, &vec![true; 256], &LossWeights::default()).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_offset_distance_exceeds_l1() {
        let c = textured(16, 0.0);
        let b = textured(16, 0.2);
        let e = view_distance(&c, &b, &vec![true; 256], &LossWeights::default()).unwrap();
        assert!(e.iter().all(|&v| v > 0.2 + 1e-6));
        let l1_only = LossWeights {
            alpha: 0.0,
            ..Default::default()
        };
        let e = view_distance(&c, &b, &vec![true; 256], &l1_only).unwrap();
        assert!(e.iter().all(|&v| (v - 0.2).abs() < 1e-12));
        let mut valid = vec![true; 256];
        valid[7] = false;
        let e = view_distance(&c, &b, &valid, &LossWeights::default()).unwrap();
        assert_eq!(e[7], f64::INFINITY);
    }

    #[test]
    fn window_validity_erodes_out_of_bounds() {
        let mut ib = vec![true; 25];
        ib[0] = false;
        let v = window_valid(&ib, 5, 1);
        assert!(!v[0] && !v[1] && !v[5] && !v[6]);
        assert!(v[2] && v[10] && v[24]);
        assert_eq!(window_valid(&ib, 5, 0), ib);
    }

    #[test]
    fn perfect_warps_cost_nothing_without_tv() {
        let c = textured(16, 0.0);
        let patch = PatchData {
            origin: (0, 0),
            center: c.clone(),
            disparity: vec![0.3; 256],
            warps: vec![as_warp(&c); 4],
        };
        let w = LossWeights {
            beta: 0.0,
            ..Default::default()
        };
        let r = patch.evaluate(&w, &SelectionMode::Half, None).unwrap();
        assert!(r.loss.abs() < 1e-12);
        assert_eq!(r.selection.selection_size, 2);
        assert!(patch.objective_full(&w, &SelectionMode::Half).unwrap().abs() < 1e-12);
    }

    #[test]
    fn monitor_without_views_is_tv_only() {
        let c = textured(12, 0.0);
        let mut warp = as_warp(&textured(12, 0.1));
        warp.in_bounds.fill(false);
        let d: Vec<f64> = (0..144).map(|i| (i % 12) as f64 * 0.1).collect();
        let patch = PatchData {
            origin: (0, 0),
            center: c,
            disparity: d.clone(),
            warps: vec![warp.clone(), warp],
        };
        let w = LossWeights::default();
        let tv = tv_term(&d, 12, 12, w.charbonnier_eps);
        assert!((patch.objective_full(&w, &SelectionMode::Half).unwrap() - w.beta * tv).abs() < 1e-12);
        let batch = PatchBatch {
            size: 12,
            patches: vec![patch.clone()],
        };
        let sel = patch.evaluate(&w, &SelectionMode::Half, None).unwrap().selection;
        assert!(matches!(training_loss(&batch, &[sel], &w), Err(Error::DegenerateBatch)));
    }

    /// Build a patch from a synthetic scene at disparity `d`.
    fn scene_patch(d: &[f64], size: usize, origin: (usize, usize)) -> PatchData {
        let spec = SceneSpec::new(SceneKind::ConstantPlane { d0: 1.0 }).with_seed(21);
        let (lf, _) = synth_lightfield(&spec, 32, 32, 3, 3).unwrap();
        let center = Patch::from_fn(size, 1, |x, y, c| lf.center_view().get(origin.0 + x, origin.1 + y, c));
        let warps = lf
            .side_views()
            .into_iter()
            .map(|vc| warp_patch(lf.view_image(vc).unwrap(), lf.offset(vc), origin, size, d))
            .collect();
        PatchData {
            origin,
            center,
            disparity: d.to_vec(),
            warps,
        }
    }

    #[test]
    fn true_disparity_has_tiny_photometric_loss() {
        let p = scene_patch(&vec![1.0; 256], 16, (8, 8));
        let r = p.evaluate(&LossWeights::default(), &SelectionMode::Half, None).unwrap();
        assert!(r.photometric < 1e-3, "{}", r.photometric);
        assert!(r.tv.abs() < 1e-15);
    }

    #[test]
    fn cotangent_matches_finite_differences() {
        let size = 14;
        let d: Vec<f64> = (0..size * size)
            .map(|i| 0.63 + 0.05 * ((i % size) as f64 * 0.4).sin() + 0.03 * ((i / size) as f64 * 0.3).cos())
            .collect();
        let w = LossWeights {
            alpha: 0.8,
            beta: 0.5,
            charbonnier_eps: 1e-2,
            ..Default::default()
        };
        let base = scene_patch(&d, size, (8, 9));
        let r = base.evaluate(&w, &SelectionMode::Half, None).unwrap();
        let eps = 1e-4;
        for i in [0, 17, 50, 99, 150, 195] {
            let mut dp = d.clone();
            dp[i] += eps;
            let mut dm = d.clone();
            dm[i] -= eps;
            let lp = scene_patch(&dp, size, (8, 9)).evaluate(&w, &SelectionMode::Half, Some(&r.selection)).unwrap().loss;
            let lm = scene_patch(&dm, size, (8, 9)).evaluate(&w, &SelectionMode::Half, Some(&r.selection)).unwrap().loss;
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (fd - r.cotangent[i]).abs() / fd.abs().max(r.cotangent[i].abs()).max(1e-12);
            assert!(rel < 1e-3, "pixel {i}: fd {fd} analytic {}", r.cotangent[i]);
        }
    }

    #[test]
    fn small_step_along_negative_cotangent_descends() {
        let size = 16;
        let d = vec![0.7; size * size];
        let w = LossWeights::default();
        let r = scene_patch(&d, size, (6, 6)).evaluate(&w, &SelectionMode::Half, None).unwrap();
        let step: Vec<f64> = d.iter().zip(&r.cotangent).map(|(x, g)| x - 1e-2 * g).collect();
        let after = scene_patch(&step, size, (6, 6)).evaluate(&w, &SelectionMode::Half, Some(&r.selection)).unwrap();
        assert!(after.loss < r.loss);
    }
}
